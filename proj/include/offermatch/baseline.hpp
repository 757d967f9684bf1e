#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "offermatch/common.hpp"
#include "offermatch/random.hpp"
#include "offermatch/text.hpp"

namespace offermatch {

struct BaselineHyper {
  double lambda = 1e-4;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
};

struct Example {
  SparseVector features;
  Label label = Label::kNonMatch;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  BaselineHyper hyper;
  std::string vocab_fingerprint;
  double initial_objective = 0.0;  // at w = 0, b = 0
  double final_objective = 0.0;

  std::size_t dimension() const { return weights.size(); }
};

struct Prediction {
  double score = 0.0;
  Label label = Label::kNonMatch;
};

namespace detail {

inline double sign_of(Label l) { return l == Label::kMatch ? 1.0 : -1.0; }

inline double sparse_dot(std::span<const double> w, const SparseVector& x) {
  double s = 0.0;
  for (const auto& [i, v] : x.entries) s += w[i] * v;
  return s;
}

}  // namespace detail

// L2-regularized hinge loss, lambda/2 (|w|^2 + b^2) + mean(max(0, 1 - y(w.x + b))).
// The bias is trained as a constant feature and regularized with the weights.
inline double hinge_objective(std::span<const double> w, double b, double lambda, std::span<const Example> examples) {
  double reg = b * b;
  for (double v : w) reg += v * v;
  double loss = 0.0;
  for (const auto& e : examples) {
    loss += std::max(0.0, 1.0 - detail::sign_of(e.label) * (detail::sparse_dot(w, e.features) + b));
  }
  return 0.5 * lambda * reg + (examples.empty() ? 0.0 : loss / static_cast<double>(examples.size()));
}

// Stochastic subgradient descent on the hinge objective with step 1/(lambda t)
// and projection onto the ball of radius 1/sqrt(lambda). Each epoch visits
// the examples in a seeded permutation; training is single-threaded.
inline LinearModel train_linear_matcher(std::span<const Example> examples, const BaselineHyper& hyper,
                                        std::string vocab_fingerprint = {}) {
  if (!(hyper.lambda > 0.0) || !std::isfinite(hyper.lambda)) throw Error("train_linear_matcher: lambda must be > 0");
  if (examples.empty()) throw Error("train_linear_matcher: no examples");
  const std::size_t dim = examples.front().features.dimension;
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& e : examples) {
    if (e.features.dimension != dim) throw Error("train_linear_matcher: inconsistent feature dimensions");
    (e.label == Label::kMatch ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw Error("train_linear_matcher: training data contains a single class");

  // w = scale * v, with v[dim] holding the bias coordinate.
  std::vector<double> v(dim + 1, 0.0);
  double scale = 1.0;
  double v_norm2 = 0.0;
  const double radius = 1.0 / std::sqrt(hyper.lambda);
  std::vector<std::size_t> order(examples.size());
  std::uint64_t t = 0;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    CounterRng rng(hyper.seed, "sgd/epoch/" + std::to_string(epoch));
    shuffle(std::span<std::size_t>(order), rng);
    for (const auto idx : order) {
      ++t;
      const auto& e = examples[idx];
      const double y = detail::sign_of(e.label);
      const double eta = 1.0 / (hyper.lambda * static_cast<double>(t));
      const double margin = y * scale * (detail::sparse_dot(v, e.features) + v[dim]);
      const double shrink = 1.0 - eta * hyper.lambda;
      if (shrink <= 0.0) {
        std::fill(v.begin(), v.end(), 0.0);
        v_norm2 = 0.0;
        scale = 1.0;
      } else {
        scale *= shrink;
      }
      if (margin < 1.0) {
        const double c = eta * y / scale;
        double vx = v[dim];
        double xx = 1.0;
        for (const auto& [j, xv] : e.features.entries) {
          vx += v[j] * xv;
          xx += xv * xv;
        }
        v_norm2 += 2.0 * c * vx + c * c * xx;
        for (const auto& [j, xv] : e.features.entries) v[j] += c * xv;
        v[dim] += c;
      }
      const double w_norm = scale * std::sqrt(std::max(0.0, v_norm2));
      if (w_norm > radius) scale *= radius / w_norm;
      if (scale < 1e-9) {
        for (auto& x : v) x *= scale;
        v_norm2 *= scale * scale;
        scale = 1.0;
      }
    }
  }

  LinearModel m;
  m.hyper = hyper;
  m.vocab_fingerprint = std::move(vocab_fingerprint);
  m.weights.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) m.weights[j] = scale * v[j];
  m.bias = scale * v[dim];
  const std::vector<double> zeros(dim, 0.0);
  m.initial_objective = hinge_objective(zeros, 0.0, hyper.lambda, examples);
  m.final_objective = hinge_objective(m.weights, m.bias, hyper.lambda, examples);
  return m;
}

// Match iff w.x + b > 0; a zero score is a non-match.
inline Prediction predict(const LinearModel& model, const SparseVector& features) {
  if (features.dimension != model.dimension()) {
    throw Error("predict: feature dimension " + std::to_string(features.dimension) + " does not match model " +
                std::to_string(model.dimension()));
  }
  const double score = detail::sparse_dot(model.weights, features) + model.bias;
  return {score, score > 0.0 ? Label::kMatch : Label::kNonMatch};
}

// Text layout:
//   offermatch-linear-model 1
//   dimension <d>
//   lambda <x>
//   epochs <n>
//   seed <n>
//   vocab_fingerprint <hex>
//   bias <x>
//   weights
//   <one weight per line>
// Reals are written with 17 significant digits, which round-trips doubles.
inline void write_model(std::ostream& out, const LinearModel& m) {
  out << std::setprecision(17);
  out << "offermatch-linear-model 1\n";
  out << "dimension " << m.dimension() << '\n';
  out << "lambda " << m.hyper.lambda << '\n';
  out << "epochs " << m.hyper.epochs << '\n';
  out << "seed " << m.hyper.seed << '\n';
  out << "vocab_fingerprint " << (m.vocab_fingerprint.empty() ? "-" : m.vocab_fingerprint) << '\n';
  out << "bias " << m.bias << '\n';
  out << "weights\n";
  for (double w : m.weights) out << w << '\n';
}

// Reads a model and checks it against the vocabulary it will be applied with.
inline LinearModel read_model(std::istream& in, const Vocabulary& vocab) {
  const auto expect = [&](const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw Error("model file: truncated before " + key);
    std::istringstream ls(line);
    std::string k;
    std::string value;
    ls >> k;
    std::getline(ls >> std::ws, value);
    if (k != key) throw Error("model file: expected " + key + ", found " + k);
    return value;
  };
  if (expect("offermatch-linear-model") != "1") throw Error("model file: unsupported version");
  LinearModel m;
  const auto dim = std::stoull(expect("dimension"));
  m.hyper.lambda = std::stod(expect("lambda"));
  m.hyper.epochs = std::stoull(expect("epochs"));
  m.hyper.seed = std::stoull(expect("seed"));
  m.vocab_fingerprint = expect("vocab_fingerprint");
  if (m.vocab_fingerprint == "-") m.vocab_fingerprint.clear();
  m.bias = std::stod(expect("bias"));
  expect("weights");
  m.weights.reserve(dim);
  for (std::string line; m.weights.size() < dim && std::getline(in, line);) {
    const double w = std::stod(line);
    if (!std::isfinite(w)) throw Error("model file: non-finite weight");
    m.weights.push_back(w);
  }
  if (m.weights.size() != dim) throw Error("model file: expected " + std::to_string(dim) + " weights");
  if (dim != vocab.size()) throw Error("model file: dimension does not match vocabulary size");
  if (m.vocab_fingerprint != vocab.fingerprint()) throw Error("model file: vocabulary fingerprint mismatch");
  return m;
}

}  // namespace offermatch
