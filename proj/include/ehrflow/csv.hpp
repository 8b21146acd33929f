#pragma once

// Streaming CSV reader/writer. Comma-separated, double-quote quoting, header
// row; quoted fields may contain commas, quotes ("" escape) and newlines.
// Files ending in .gz are decompressed transparently.

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehrflow/core.hpp"

namespace ehrflow {

namespace detail {

class ByteSource {
 public:
  virtual ~ByteSource() = default;
  // Fills buf, returns bytes read; 0 at EOF.
  virtual std::size_t read(char* buf, std::size_t n) = 0;
};

class FileSource final : public ByteSource {
 public:
  explicit FileSource(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open file: " + path);
  }
  std::size_t read(char* buf, std::size_t n) override {
    in_.read(buf, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount());
  }

 private:
  std::ifstream in_;
};

class GzSource final : public ByteSource {
 public:
  explicit GzSource(const std::string& path) : file_(gzopen(path.c_str(), "rb")) {
    if (file_ == nullptr) throw DataError("cannot open gzip file: " + path);
  }
  ~GzSource() override {
    if (file_ != nullptr) gzclose(file_);
  }
  GzSource(const GzSource&) = delete;
  GzSource& operator=(const GzSource&) = delete;
  std::size_t read(char* buf, std::size_t n) override {
    const int got = gzread(file_, buf, static_cast<unsigned>(n));
    if (got < 0) throw DataError("gzip read error");
    return static_cast<std::size_t>(got);
  }

 private:
  gzFile file_;
};

}  // namespace detail

class CsvReader {
 public:
  explicit CsvReader(const std::string& path) : path_(path) {
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
      source_ = std::make_unique<detail::GzSource>(path);
    } else {
      source_ = std::make_unique<detail::FileSource>(path);
    }
    buf_.resize(1 << 16);
  }

  const std::string& path() const { return path_; }

  // Reads one record (handles quoting); nullopt at EOF. A trailing newline
  // does not produce an empty final record.
  std::optional<std::vector<std::string>> next() {
    if (eof_ && pos_ >= len_) return std::nullopt;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    for (;;) {
      const int c = get();
      if (c < 0) {
        if (!any && field.empty() && fields.empty()) return std::nullopt;
        fields.push_back(std::move(field));
        return fields;
      }
      any = true;
      const char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          if (peek() == '"') {
            get();
            field.push_back('"');
          } else {
            in_quotes = false;
          }
        } else {
          field.push_back(ch);
        }
      } else if (ch == '"') {
        in_quotes = true;
      } else if (ch == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (ch == '\n') {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        fields.push_back(std::move(field));
        return fields;
      } else {
        field.push_back(ch);
      }
    }
  }

 private:
  int get() {
    if (pos_ >= len_) {
      if (eof_) return -1;
      len_ = source_->read(buf_.data(), buf_.size());
      pos_ = 0;
      if (len_ == 0) {
        eof_ = true;
        return -1;
      }
    }
    return static_cast<unsigned char>(buf_[pos_++]);
  }

  int peek() {
    if (pos_ >= len_) {
      if (eof_) return -1;
      len_ = source_->read(buf_.data(), buf_.size());
      pos_ = 0;
      if (len_ == 0) {
        eof_ = true;
        return -1;
      }
    }
    return static_cast<unsigned char>(buf_[pos_]);
  }

  std::string path_;
  std::unique_ptr<detail::ByteSource> source_;
  std::vector<char> buf_;
  std::size_t pos_ = 0, len_ = 0;
  bool eof_ = false;
};

inline std::string csv_escape(std::string_view field) {
  const bool needs_quotes = field.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open file for writing: " + path);
    path_ = path;
  }

  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) out_.put(',');
      out_ << csv_escape(fields[i]);
    }
    out_.put('\n');
  }

  void close() {
    out_.close();
    if (out_.fail()) throw DataError("write failed: " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

// Locates `<dir>/<name>.csv` or `<dir>/<name>.csv.gz`.
inline std::optional<std::string> find_table_file(const std::string& dir,
                                                  const std::string& name) {
  namespace fs = std::filesystem;
  for (const char* suffix : {".csv", ".csv.gz"}) {
    fs::path p = fs::path(dir) / (name + suffix);
    if (fs::exists(p)) return p.string();
  }
  return std::nullopt;
}

}  // namespace ehrflow
