#pragma once

// Class-probability learners for the q-probabilities. Each observed unit is
// labelled with its suffix-zero profile (2^J - 1 classes, canonical order) or
// the pooled "other observed profile" class (last label).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "popsize/dataset.hpp"
#include "popsize/error.hpp"
#include "popsize/numeric.hpp"
#include "popsize/profile.hpp"

namespace popsize {

enum class LearnerKind { empirical_cell, knn, multinomial_logistic };

inline std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::empirical_cell: return "empirical-cell";
    case LearnerKind::knn: return "knn";
    case LearnerKind::multinomial_logistic: return "multinomial-logistic";
  }
  return "unknown";
}

struct LearnerSpec {
  LearnerKind kind = LearnerKind::multinomial_logistic;
  int neighbors = 25;          // knn
  double ridge = 1e-3;         // multinomial-logistic
  int max_iterations = 500;    // multinomial-logistic
  double tolerance = 1e-8;     // multinomial-logistic, on the gradient norm
  std::uint64_t seed = 0;

  void validate() const {
    if (neighbors < 1) throw ConfigError("knn neighbor count must be >= 1");
    if (!(ridge >= 0.0)) throw ConfigError("ridge penalty must be >= 0");
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
    if (max_iterations < 1) throw ConfigError("max iterations must be >= 1");
  }

  // "knn", "knn:k=50", "multinomial-logistic:lambda=0.01,iters=200,tol=1e-6",
  // "empirical-cell"
  static LearnerSpec parse(const std::string& text) {
    LearnerSpec spec;
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    if (name == "empirical-cell")
      spec.kind = LearnerKind::empirical_cell;
    else if (name == "knn")
      spec.kind = LearnerKind::knn;
    else if (name == "multinomial-logistic" || name == "logistic")
      spec.kind = LearnerKind::multinomial_logistic;
    else
      throw ConfigError("unknown learner '" + name + "'");
    if (colon != std::string::npos) {
      std::string rest = text.substr(colon + 1);
      std::size_t start = 0;
      while (start <= rest.size()) {
        const auto end = std::min(rest.find(',', start), rest.size());
        const std::string item = rest.substr(start, end - start);
        start = end + 1;
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("learner option '" + item + "' needs key=value");
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        try {
          if (key == "k")
            spec.neighbors = std::stoi(value);
          else if (key == "lambda")
            spec.ridge = std::stod(value);
          else if (key == "iters")
            spec.max_iterations = std::stoi(value);
          else if (key == "tol")
            spec.tolerance = std::stod(value);
          else
            throw ConfigError("unknown learner option '" + key + "'");
        } catch (const std::logic_error&) {
          throw ConfigError("bad value for learner option '" + key + "'");
        }
      }
    }
    spec.validate();
    return spec;
  }

  std::string describe() const {
    switch (kind) {
      case LearnerKind::knn: return "knn:k=" + std::to_string(neighbors);
      case LearnerKind::multinomial_logistic: {
        char buf[128];
        std::snprintf(buf, sizeof buf, "multinomial-logistic:lambda=%g,iters=%d,tol=%g", ridge, max_iterations,
                      tolerance);
        return buf;
      }
      case LearnerKind::empirical_cell: break;
    }
    return "empirical-cell";
  }
};

// Label in [0, 2^J): canonical suffix-zero index, or 2^J - 1 for "other".
inline std::size_t class_label(const CaptureProfile& y, const ListSubset& subset) {
  const auto idx = subset.index_of(y);
  return idx ? *idx : subset.profile_count();
}

namespace detail {

class ClassModel {
 public:
  virtual ~ClassModel() = default;
  virtual std::vector<double> predict(std::span<const double> covariates) const = 0;
};

inline std::vector<double> frequencies(std::span<const double> counts) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> p(counts.begin(), counts.end());
  for (double& x : p) x = total > 0 ? x / total : 1.0 / static_cast<double>(p.size());
  return p;
}

class EmpiricalCellModel final : public ClassModel {
 public:
  EmpiricalCellModel(const ObservedDataset& train, const std::vector<std::size_t>& labels, std::size_t classes)
      : classes_(classes), global_(classes, 0.0) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      auto& counts = cells_.try_emplace(key(train[i].covariates), std::vector<double>(classes, 0.0)).first->second;
      counts[labels[i]] += 1.0;
      global_[labels[i]] += 1.0;
    }
    for (auto& [k, counts] : cells_) counts = frequencies(counts);
    global_ = frequencies(global_);
  }

  // Cells never seen in training fall back to the pooled frequencies.
  std::vector<double> predict(std::span<const double> covariates) const override {
    const auto it = cells_.find(key(covariates));
    return it == cells_.end() ? global_ : it->second;
  }

 private:
  static std::vector<long> key(std::span<const double> x) {
    std::vector<long> k(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) k[c] = std::lround(x[c]);
    return k;
  }

  std::size_t classes_;
  std::map<std::vector<long>, std::vector<double>> cells_;
  std::vector<double> global_;
};

// Column standardization fitted on the training set. Constant columns keep
// scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  Standardizer(const ObservedDataset& train) : mean(train.schema().size(), 0.0), scale(train.schema().size(), 1.0) {
    const auto& schema = train.schema();
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (schema[c].kind != ColumnKind::numeric || train.empty()) continue;
      CompensatedSum s;
      for (const auto& u : train.units()) s.add(u.covariates[c]);
      mean[c] = s.value() / static_cast<double>(train.size());
      CompensatedSum ss;
      for (const auto& u : train.units()) ss.add((u.covariates[c] - mean[c]) * (u.covariates[c] - mean[c]));
      const double sd = std::sqrt(ss.value() / static_cast<double>(train.size()));
      scale[c] = sd > 0 ? sd : 1.0;
    }
  }
};

// Euclidean distance on standardized numeric columns plus 0/1 mismatch on
// categoricals. Ties broken by training unit id.
class KnnModel final : public ClassModel {
 public:
  KnnModel(const ObservedDataset& train, const std::vector<std::size_t>& labels, std::size_t classes, int k)
      : schema_(train.schema()), standardizer_(train), labels_(labels), classes_(classes),
        k_(std::min<std::size_t>(static_cast<std::size_t>(k), train.size())) {
    rows_.reserve(train.size() * schema_.size());
    for (const auto& u : train.units()) {
      ids_.push_back(u.id);
      const auto z = transform(u.covariates);
      rows_.insert(rows_.end(), z.begin(), z.end());
    }
  }

  std::vector<double> predict(std::span<const double> covariates) const override {
    const auto z = transform(covariates);
    const std::size_t d = schema_.size();
    std::vector<std::pair<double, std::size_t>> dist(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double a = rows_[i * d + c];
        if (schema_[c].kind == ColumnKind::numeric)
          acc += (a - z[c]) * (a - z[c]);
        else
          acc += a == z[c] ? 0.0 : 1.0;
      }
      dist[i] = {acc, i};
    }
    // ids_ are ascending, so the position index orders ties by unit id.
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
    std::vector<double> counts(classes_, 0.0);
    for (std::size_t j = 0; j < k_; ++j) counts[labels_[dist[j].second]] += 1.0;
    return frequencies(counts);
  }

 private:
  std::vector<double> transform(std::span<const double> x) const {
    std::vector<double> z(x.begin(), x.end());
    for (std::size_t c = 0; c < z.size(); ++c)
      if (schema_[c].kind == ColumnKind::numeric) z[c] = (z[c] - standardizer_.mean[c]) / standardizer_.scale[c];
    return z;
  }

  std::vector<CovariateColumn> schema_;
  Standardizer standardizer_;
  std::vector<std::size_t> labels_;
  std::size_t classes_;
  std::size_t k_;
  std::vector<std::int64_t> ids_;
  std::vector<double> rows_;
};

// Softmax regression on [1, standardized numerics, one-hot categoricals
// (first level dropped)], fitted by full-batch gradient descent with
// backtracking line search. The intercept is not penalized.
class MultinomialLogisticModel final : public ClassModel {
 public:
  MultinomialLogisticModel(const ObservedDataset& train, const std::vector<std::size_t>& labels,
                           std::size_t classes, const LearnerSpec& spec)
      : schema_(train.schema()), standardizer_(train), classes_(classes) {
    features_ = 1;
    for (const auto& col : schema_)
      features_ += col.kind == ColumnKind::numeric ? 1 : col.levels.size() - 1;

    const std::size_t n = train.size();
    design_.reserve(n * features_);
    for (const auto& u : train.units()) {
      const auto row = encode(u.covariates);
      design_.insert(design_.end(), row.begin(), row.end());
    }
    weights_.assign(classes_ * features_, 0.0);
    fit(labels, spec);
  }

  std::vector<double> predict(std::span<const double> covariates) const override {
    const auto x = encode(covariates);
    return softmax(weights_, x);
  }

  double training_log_loss(const std::vector<std::size_t>& labels) const {
    return objective(weights_, labels, 0.0, nullptr);
  }
  int iterations() const { return iterations_; }
  double final_gradient_norm() const { return gradient_norm_; }

 private:
  std::vector<double> encode(std::span<const double> x) const {
    std::vector<double> row;
    row.reserve(features_);
    row.push_back(1.0);
    for (std::size_t c = 0; c < schema_.size(); ++c) {
      if (schema_[c].kind == ColumnKind::numeric) {
        row.push_back((x[c] - standardizer_.mean[c]) / standardizer_.scale[c]);
      } else {
        const auto code = static_cast<std::size_t>(std::lround(x[c]));
        for (std::size_t l = 1; l < schema_[c].levels.size(); ++l) row.push_back(code == l ? 1.0 : 0.0);
      }
    }
    return row;
  }

  std::vector<double> softmax(std::span<const double> w, std::span<const double> x) const {
    std::vector<double> z(classes_, 0.0);
    for (std::size_t c = 0; c < classes_; ++c) {
      double acc = 0.0;
      for (std::size_t f = 0; f < features_; ++f) acc += w[c * features_ + f] * x[f];
      z[c] = acc;
    }
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double& v : z) total += (v = std::exp(v - top));
    for (double& v : z) v /= total;
    return z;
  }

  // Mean negative log-likelihood plus (ridge/2)||W||^2 over non-intercept
  // weights. Fills the gradient when requested.
  double objective(std::span<const double> w, const std::vector<std::size_t>& labels, double ridge,
                   std::vector<double>* gradient) const {
    const std::size_t n = labels.size();
    if (gradient) gradient->assign(w.size(), 0.0);
    double loss = 0.0;
    std::vector<double> z(classes_);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = &design_[i * features_];
      for (std::size_t c = 0; c < classes_; ++c) {
        double acc = 0.0;
        for (std::size_t f = 0; f < features_; ++f) acc += w[c * features_ + f] * x[f];
        z[c] = acc;
      }
      const double top = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      for (std::size_t c = 0; c < classes_; ++c) total += std::exp(z[c] - top);
      const double log_norm = top + std::log(total);
      loss += log_norm - z[labels[i]];
      if (gradient) {
        for (std::size_t c = 0; c < classes_; ++c) {
          const double r = std::exp(z[c] - log_norm) - (c == labels[i] ? 1.0 : 0.0);
          for (std::size_t f = 0; f < features_; ++f) (*gradient)[c * features_ + f] += r * x[f];
        }
      }
    }
    const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    loss *= inv_n;
    double penalty = 0.0;
    for (std::size_t c = 0; c < classes_; ++c)
      for (std::size_t f = 1; f < features_; ++f) penalty += w[c * features_ + f] * w[c * features_ + f];
    loss += 0.5 * ridge * penalty;
    if (gradient) {
      for (auto& g : *gradient) g *= inv_n;
      for (std::size_t c = 0; c < classes_; ++c)
        for (std::size_t f = 1; f < features_; ++f) (*gradient)[c * features_ + f] += ridge * w[c * features_ + f];
    }
    return loss;
  }

  void fit(const std::vector<std::size_t>& labels, const LearnerSpec& spec) {
    std::vector<double> gradient;
    double loss = objective(weights_, labels, spec.ridge, &gradient);
    double step = 1.0;
    std::vector<double> trial(weights_.size());
    for (iterations_ = 0; iterations_ < spec.max_iterations; ++iterations_) {
      double g2 = 0.0;
      for (double g : gradient) g2 += g * g;
      gradient_norm_ = std::sqrt(g2);
      if (gradient_norm_ < spec.tolerance) break;

      step = std::min(step * 2.0, 1e6);
      double trial_loss = loss;
      bool accepted = false;
      while (step > 1e-16) {
        for (std::size_t j = 0; j < weights_.size(); ++j) trial[j] = weights_[j] - step * gradient[j];
        trial_loss = objective(trial, labels, spec.ridge, nullptr);
        if (trial_loss <= loss - 0.5 * step * g2) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      weights_.swap(trial);
      loss = objective(weights_, labels, spec.ridge, &gradient);
    }
  }

  std::vector<CovariateColumn> schema_;
  Standardizer standardizer_;
  std::size_t classes_;
  std::size_t features_ = 1;
  std::vector<double> design_;
  std::vector<double> weights_;
  int iterations_ = 0;
  double gradient_norm_ = 0.0;
};

}  // namespace detail

// Fitted q-model: maps covariates to class probabilities over the 2^J - 1
// suffix-zero profiles followed by the pooled "other" class (sums to 1).
class QModel {
 public:
  QModel(std::shared_ptr<const detail::ClassModel> model, std::size_t classes)
      : model_(std::move(model)), classes_(classes) {}

  std::vector<double> predict(std::span<const double> covariates) const { return model_->predict(covariates); }

  // Suffix-zero entries only (drops the pooled class).
  std::vector<double> predict_suffix_zero(std::span<const double> covariates) const {
    auto p = predict(covariates);
    p.pop_back();
    return p;
  }

  std::size_t classes() const { return classes_; }
  const detail::ClassModel& model() const { return *model_; }

 private:
  std::shared_ptr<const detail::ClassModel> model_;
  std::size_t classes_;
};

inline QModel fit_q(const ObservedDataset& train, const ListSubset& subset, const LearnerSpec& spec) {
  spec.validate();
  if (train.empty()) throw ConfigError("cannot fit q-model on an empty training set");
  if (train.lists() != subset.lists()) throw ConfigError("subset list count does not match dataset");
  const std::size_t classes = subset.profile_count() + 1;
  std::vector<std::size_t> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) labels[i] = class_label(train[i].profile, subset);

  std::shared_ptr<const detail::ClassModel> model;
  switch (spec.kind) {
    case LearnerKind::empirical_cell:
      if (!train.all_categorical())
        throw ConfigError("empirical-cell learner requires all covariates to be categorical");
      model = std::make_shared<detail::EmpiricalCellModel>(train, labels, classes);
      break;
    case LearnerKind::knn:
      model = std::make_shared<detail::KnnModel>(train, labels, classes, spec.neighbors);
      break;
    case LearnerKind::multinomial_logistic:
      model = std::make_shared<detail::MultinomialLogisticModel>(train, labels, classes, spec);
      break;
  }
  return QModel(std::move(model), classes);
}

}  // namespace popsize
