#include <gtest/gtest.h>

#include <sstream>

#include "offermatch/baseline.hpp"

using namespace offermatch;

namespace {

SparseVector x(std::vector<std::uint32_t> idx, std::size_t dim) { return indicator(std::move(idx), dim); }

// Separable toy set: matches always carry feature 0, non-matches feature 1.
std::vector<Example> separable(std::size_t n, std::size_t dim, std::uint64_t seed) {
  CounterRng rng(seed, "separable");
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool match = i % 2 == 0;
    std::vector<std::uint32_t> f = {match ? 0u : 1u};
    for (std::uint32_t j = 2; j < dim; ++j) {
      if (rng.below(4) == 0) f.push_back(j);
    }
    out.push_back({x(f, dim), match ? Label::kMatch : Label::kNonMatch});
  }
  return out;
}

}  // namespace

TEST(Baseline, TwoExamples) {
  const std::vector<Example> ex = {{x({0}, 2), Label::kMatch}, {x({1}, 2), Label::kNonMatch}};
  const auto m = train_linear_matcher(ex, {1e-3, 50, 1});
  EXPECT_GT(m.weights[0], 0.0);
  EXPECT_LT(m.weights[1], 0.0);
  EXPECT_EQ(predict(m, x({0}, 2)).label, Label::kMatch);
  EXPECT_EQ(predict(m, x({1}, 2)).label, Label::kNonMatch);
}

TEST(Baseline, SameSeedSameWeights) {
  const auto ex = separable(100, 20, 3);
  const auto a = train_linear_matcher(ex, {1e-3, 20, 5});
  const auto b = train_linear_matcher(ex, {1e-3, 20, 5});
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  const auto c = train_linear_matcher(ex, {1e-3, 20, 6});
  EXPECT_NE(a.weights, c.weights);
}

TEST(Baseline, StrongRegularizationShrinksWeights) {
  const auto ex = separable(100, 20, 3);
  const auto loose = train_linear_matcher(ex, {1e-3, 20, 1});
  const auto tight = train_linear_matcher(ex, {1e6, 20, 1});
  double l = 0.0;
  double t = 0.0;
  for (double w : loose.weights) l += w * w;
  for (double w : tight.weights) t += w * w;
  EXPECT_LT(t, 1e-6);
  EXPECT_GT(l, t);
}

TEST(Baseline, ZeroScoreIsNonMatch) {
  LinearModel m;
  m.weights.assign(3, 0.0);
  const auto p = predict(m, x({0, 2}, 3));
  EXPECT_EQ(p.score, 0.0);
  EXPECT_EQ(p.label, Label::kNonMatch);
  m.bias = 0.25;
  EXPECT_EQ(predict(m, x({}, 3)).score, 0.25);
  EXPECT_THROW(predict(m, x({}, 4)), Error);
}

TEST(Baseline, InvariantUnderFeaturePermutation) {
  const std::size_t dim = 15;
  const auto ex = separable(80, dim, 9);
  std::vector<std::uint32_t> perm(dim);
  for (std::uint32_t i = 0; i < dim; ++i) perm[i] = static_cast<std::uint32_t>(dim - 1 - i);
  std::vector<Example> permuted;
  for (const auto& e : ex) {
    std::vector<std::uint32_t> idx;
    for (const auto& [i, v] : e.features.entries) idx.push_back(perm[i]);
    permuted.push_back({x(idx, dim), e.label});
  }
  const auto a = train_linear_matcher(ex, {1e-3, 10, 2});
  const auto b = train_linear_matcher(permuted, {1e-3, 10, 2});
  for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(a.weights[i], b.weights[perm[i]], 1e-12);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    EXPECT_EQ(predict(a, ex[i].features).label, predict(b, permuted[i].features).label);
  }
}

TEST(Baseline, ObjectiveDecreases) {
  const auto ex = separable(200, 30, 4);
  const auto m = train_linear_matcher(ex, {1e-3, 30, 1});
  EXPECT_LT(m.final_objective, m.initial_objective);
  EXPECT_DOUBLE_EQ(m.initial_objective, 1.0);
  EXPECT_NEAR(m.final_objective, hinge_objective(m.weights, m.bias, 1e-3, ex), 1e-12);
}

TEST(Baseline, InputErrors) {
  const std::vector<Example> one_class = {{x({0}, 2), Label::kMatch}, {x({1}, 2), Label::kMatch}};
  EXPECT_THROW(train_linear_matcher(one_class, {}), Error);
  const std::vector<Example> ok = {{x({0}, 2), Label::kMatch}, {x({1}, 2), Label::kNonMatch}};
  EXPECT_THROW(train_linear_matcher(ok, {0.0, 10, 1}), Error);
  EXPECT_THROW(train_linear_matcher(ok, {-1.0, 10, 1}), Error);
  EXPECT_THROW(train_linear_matcher(std::vector<Example>{}, {}), Error);
  const std::vector<Example> mixed = {{x({0}, 2), Label::kMatch}, {x({1}, 3), Label::kNonMatch}};
  EXPECT_THROW(train_linear_matcher(mixed, {}), Error);
}

TEST(Baseline, ModelFileRoundTrip) {
  const Vocabulary vocab({"a", "b", "c"}, "fp3");
  const std::vector<Example> ex = {{x({0}, 3), Label::kMatch}, {x({1, 2}, 3), Label::kNonMatch}};
  const auto m = train_linear_matcher(ex, {0.01, 7, 3}, vocab.fingerprint());
  std::stringstream s;
  write_model(s, m);
  const auto text = s.str();
  std::istringstream in(text);
  const auto back = read_model(in, vocab);
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.bias, m.bias);
  EXPECT_EQ(back.hyper.epochs, 7u);
  EXPECT_EQ(back.hyper.lambda, 0.01);

  std::istringstream wrong_fp(text);
  EXPECT_THROW(read_model(wrong_fp, Vocabulary({"a", "b", "c"}, "other")), Error);
  std::istringstream wrong_dim(text);
  EXPECT_THROW(read_model(wrong_dim, Vocabulary({"a", "b"}, "fp3")), Error);
  std::istringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(read_model(truncated, vocab), Error);
}
