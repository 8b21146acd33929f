#pragma once

// Design-matrix shaping, cross-validation splits, minority oversampling, and
// an L2-regularized logistic regression trained by full-batch gradient
// descent on binary cross-entropy. The model interface is fit/predict_proba
// so other model families can slot in without touching the pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ehrflow/core.hpp"
#include "ehrflow/timeseries.hpp"

namespace ehrflow {

enum class Shaping { Concat, Aggregate };

inline std::string shaping_name(Shaping s) { return s == Shaping::Concat ? "concat" : "aggregate"; }

struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;  // row-major
  std::vector<int> y;
  std::vector<std::string> column_names;

  double at(std::size_t r, std::size_t c) const { return x[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return x[r * cols + c]; }
};

inline int gender_code(Gender g) { return g == Gender::F ? 0 : 1; }

inline int category_code(const std::vector<std::string>& categories, const std::string& value) {
  auto it = std::lower_bound(categories.begin(), categories.end(), value);
  if (it == categories.end() || *it != value) return -1;
  return static_cast<int>(it - categories.begin());
}

// Concat flattens the grid time-major (all features of bin 0, then bin 1,
// ...); Aggregate takes the per-feature mean over bins. Static root
// indicators and the demographic vector (age, gender, ethnicity, insurance
// codes) are appended in both shapes. Column ordering follows the registry.
inline DesignMatrix shape_design(const std::vector<SampleTensor>& tensors,
                                 const FeatureRegistry& registry, Shaping shaping) {
  DesignMatrix m;
  m.rows = tensors.size();
  const std::size_t n_dyn = registry.dynamic_codes.size();
  const std::size_t n_static = registry.static_roots.size();
  const std::size_t n_demo = 4;
  int n_bins = tensors.empty() ? 0 : tensors.front().grid.n_bins;
  for (const auto& t : tensors) {
    if (t.grid.n_bins != n_bins || t.grid.n_features != static_cast<int>(n_dyn)) {
      throw DataError("mixed grid shapes across samples");
    }
  }
  const std::size_t dyn_cols =
      shaping == Shaping::Concat ? static_cast<std::size_t>(n_bins) * n_dyn : n_dyn;
  m.cols = dyn_cols + n_static + n_demo;
  m.x.assign(m.rows * m.cols, 0.0);
  m.y.resize(m.rows);

  if (shaping == Shaping::Concat) {
    for (int b = 0; b < n_bins; ++b) {
      for (std::size_t f = 0; f < n_dyn; ++f) {
        m.column_names.push_back("t" + std::to_string(b) + "." + registry.dynamic_codes[f]);
      }
    }
  } else {
    for (std::size_t f = 0; f < n_dyn; ++f) {
      m.column_names.push_back("mean." + registry.dynamic_codes[f]);
    }
  }
  for (const auto& root : registry.static_roots) m.column_names.push_back("dx." + root);
  m.column_names.insert(m.column_names.end(), {"age", "gender", "ethnicity", "insurance"});

  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto& t = tensors[r];
    std::size_t c = 0;
    if (shaping == Shaping::Concat) {
      for (int b = 0; b < n_bins; ++b) {
        for (std::size_t f = 0; f < n_dyn; ++f) {
          m.at(r, c++) = t.grid.value_at(b, static_cast<int>(f));
        }
      }
    } else {
      for (std::size_t f = 0; f < n_dyn; ++f) {
        double sum = 0.0;
        for (int b = 0; b < n_bins; ++b) sum += t.grid.value_at(b, static_cast<int>(f));
        m.at(r, c++) = n_bins > 0 ? sum / n_bins : 0.0;
      }
    }
    for (std::size_t s = 0; s < n_static; ++s) m.at(r, c++) = t.static_roots[s];
    const auto& d = t.sample.demographics;
    m.at(r, c++) = d.age;
    m.at(r, c++) = gender_code(d.gender);
    m.at(r, c++) = category_code(registry.ethnicity_categories, d.ethnicity);
    m.at(r, c++) = category_code(registry.insurance_categories, d.insurance);
    m.y[r] = t.sample.label;
  }
  return m;
}

// --- splits and resampling ------------------------------------------------------

// k disjoint test folds covering [0, n); sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, int k,
                                                         std::uint64_t seed) {
  if (k < 2) throw ConfigError("model.kfolds must be at least 2, got " + std::to_string(k));
  if (static_cast<std::size_t>(k) > n) {
    throw DataError("model.kfolds (" + std::to_string(k) + ") exceeds sample count (" +
                    std::to_string(n) + ")");
  }
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(derive_seed(seed, 0x6b666f6c64ULL));  // "kfold" stream
  rng.shuffle(indices);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    folds[f].assign(indices.begin() + pos, indices.begin() + pos + size);
    pos += size;
  }
  return folds;
}

// Duplicates minority-class indices uniformly at random (with replacement)
// until the classes balance. Applied to training folds only; never invents
// an index that was not in the input.
inline std::vector<std::size_t> oversample_minority(const std::vector<std::size_t>& indices,
                                                    const std::vector<int>& labels,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t idx : indices) {
    (labels[idx] == 1 ? pos : neg).push_back(idx);
  }
  if (pos.empty() || neg.empty()) {
    throw DataError("oversampling requires both classes present in the training fold");
  }
  std::vector<std::size_t> out = indices;
  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t deficit =
      (pos.size() < neg.size() ? neg.size() : pos.size()) - minority.size();
  Rng rng(derive_seed(seed, 0x6f766572ULL));  // "over" stream
  for (std::size_t i = 0; i < deficit; ++i) {
    out.push_back(minority[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(minority.size()) - 1))]);
  }
  return out;
}

// --- logistic regression ---------------------------------------------------------

struct LogisticHyperparams {
  double learning_rate = 0.1;
  int epochs = 300;
  double l2 = 1e-4;
  int patience = 5;                  // early-stopping patience; 0 disables
  double validation_fraction = 0.1;  // held out from the training rows
  std::uint64_t seed = 0;
};

inline double sigmoid(double z) {
  if (z >= 0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d+1, bias last
};

// Mean binary cross-entropy plus (l2/2)*|w|^2 over the non-bias weights.
// x is row-major with `cols` features; w has cols+1 entries, bias last.
inline LossGrad logistic_loss_and_grad(const std::vector<double>& x, const std::vector<int>& y,
                                       std::size_t rows, std::size_t cols,
                                       const std::vector<double>& w, double l2) {
  LossGrad out;
  out.grad.assign(cols + 1, 0.0);
  const double n = static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double z = w[cols];
    const double* xr = x.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) z += w[c] * xr[c];
    const double p = sigmoid(z);
    const double target = static_cast<double>(y[r]);
    // Numerically stable BCE: log(1+exp(-|z|)) + max(z,0) - z*y
    out.loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - z * target;
    const double residual = p - target;
    for (std::size_t c = 0; c < cols; ++c) out.grad[c] += residual * xr[c];
    out.grad[cols] += residual;
  }
  out.loss /= n;
  for (auto& g : out.grad) g /= n;
  for (std::size_t c = 0; c < cols; ++c) {
    out.loss += 0.5 * l2 * w[c] * w[c];
    out.grad[c] += l2 * w[c];
  }
  return out;
}

struct LogisticModel {
  std::vector<double> weights;  // cols+1, bias last
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  LogisticHyperparams hyperparams;

  double predict_one(const double* row, std::size_t cols) const {
    double z = weights[cols];
    for (std::size_t c = 0; c < cols; ++c) {
      z += weights[c] * (row[c] - feature_mean[c]) / feature_scale[c];
    }
    return sigmoid(z);
  }

  std::vector<double> predict_proba(const std::vector<double>& x, std::size_t rows,
                                    std::size_t cols) const {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = predict_one(x.data() + r * cols, cols);
    return out;
  }
};

// Fits on the given rows. Standardization statistics come from these rows
// only, so test folds never influence the fit. With patience > 0 a
// deterministic 10% slice is held out and training stops once its loss has
// not improved for `patience` consecutive epochs (best weights kept).
inline LogisticModel train_logistic(const std::vector<double>& x, const std::vector<int>& y,
                                    std::size_t rows, std::size_t cols,
                                    const LogisticHyperparams& hp) {
  if (rows == 0) throw DataError("cannot train on an empty matrix");
  LogisticModel model;
  model.hyperparams = hp;
  model.feature_mean.assign(cols, 0.0);
  model.feature_scale.assign(cols, 1.0);
  for (std::size_t c = 0; c < cols; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) sum += x[r * cols + c];
    model.feature_mean[c] = sum / static_cast<double>(rows);
  }
  for (std::size_t c = 0; c < cols; ++c) {
    double ss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = x[r * cols + c] - model.feature_mean[c];
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(rows));
    model.feature_scale[c] = sd > 0.0 ? sd : 1.0;
  }

  std::vector<double> xs(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      xs[r * cols + c] = (x[r * cols + c] - model.feature_mean[c]) / model.feature_scale[c];
    }
  }

  // Optional validation slice for early stopping.
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  std::size_t n_val = 0;
  if (hp.patience > 0 && hp.validation_fraction > 0.0) {
    n_val = static_cast<std::size_t>(std::floor(hp.validation_fraction * static_cast<double>(rows)));
    if (rows - n_val < 2) n_val = 0;  // too few rows to split
    if (n_val > 0) {
      Rng rng(derive_seed(hp.seed, 0x76616c69ULL));  // "vali" stream
      rng.shuffle(order);
    }
  }
  const std::size_t n_train = rows - n_val;
  std::vector<double> x_train(n_train * cols), x_val(n_val * cols);
  std::vector<int> y_train(n_train), y_val(n_val);
  for (std::size_t i = 0; i < n_train; ++i) {
    std::copy_n(xs.data() + order[n_val + i] * cols, cols, x_train.data() + i * cols);
    y_train[i] = y[order[n_val + i]];
  }
  for (std::size_t i = 0; i < n_val; ++i) {
    std::copy_n(xs.data() + order[i] * cols, cols, x_val.data() + i * cols);
    y_val[i] = y[order[i]];
  }

  std::vector<double> w(cols + 1, 0.0);
  std::vector<double> best_w = w;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  const std::vector<double> no_reg_w;  // validation loss is unregularized
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const LossGrad lg = logistic_loss_and_grad(x_train, y_train, n_train, cols, w, hp.l2);
    if (!std::isfinite(lg.loss)) {
      throw DataError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                      " (learning rate " + format_double(hp.learning_rate) + ")");
    }
    for (std::size_t c = 0; c <= cols; ++c) w[c] -= hp.learning_rate * lg.grad[c];
    if (n_val > 0) {
      const LossGrad vl = logistic_loss_and_grad(x_val, y_val, n_val, cols, w, 0.0);
      if (vl.loss + 1e-12 < best_val) {
        best_val = vl.loss;
        best_w = w;
        stale = 0;
      } else if (++stale >= hp.patience) {
        w = best_w;
        break;
      }
    }
  }
  if (n_val > 0 && best_val < std::numeric_limits<double>::infinity()) w = best_w;
  model.weights = std::move(w);
  return model;
}

}  // namespace ehrflow
