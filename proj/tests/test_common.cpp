#include <gtest/gtest.h>

#include <atomic>
#include <numeric>
#include <set>

#include "offermatch/common.hpp"
#include "offermatch/digest.hpp"
#include "offermatch/parallel.hpp"
#include "offermatch/random.hpp"
#include "offermatch/union_find.hpp"

using namespace offermatch;

TEST(Text, CollapseWhitespace) {
  EXPECT_EQ(collapse_whitespace("  a \t b\n\nc  "), "a b c");
  EXPECT_EQ(collapse_whitespace("   "), "");
  EXPECT_EQ(collapse_whitespace(""), "");
}

TEST(Text, LowerHandlesUmlautsAndCyrillic) {
  EXPECT_EQ(utf8::lower("ÄÖÜ Straße"), "äöü straße");
  EXPECT_EQ(utf8::lower("ПРИВЕТ"), "привет");
  EXPECT_EQ(ascii_lower("MiXeD"), "mixed");
}

TEST(Text, DecodeSurvivesInvalidUtf8) {
  const std::string bad = "a\xff" "b";
  std::size_t pos = 0;
  EXPECT_EQ(utf8::decode(bad, pos), U'a');
  EXPECT_EQ(utf8::decode(bad, pos), utf8::kReplacement);
  EXPECT_EQ(utf8::decode(bad, pos), U'b');
  EXPECT_EQ(pos, bad.size());
}

TEST(Text, LanguageCodes) {
  EXPECT_TRUE(is_language_code("de"));
  EXPECT_TRUE(is_language_code("en"));
  EXPECT_FALSE(is_language_code("deu"));
  EXPECT_FALSE(is_language_code("DE"));
  EXPECT_FALSE(is_language_code(""));
  EXPECT_TRUE(std::is_sorted(kIso639_1.begin(), kIso639_1.end()));
}

TEST(Text, LabelRoundTrip) {
  EXPECT_EQ(parse_label(to_string(Label::kMatch)), Label::kMatch);
  EXPECT_EQ(parse_label(to_string(Label::kNonMatch)), Label::kNonMatch);
  EXPECT_THROW(parse_label("maybe"), Error);
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  h.update("a").update("bc");
  EXPECT_EQ(h.hex(), sha256_hex("abc"));
}

TEST(Random, StreamsAreReproducibleAndIndependent) {
  CounterRng a(7, "x");
  CounterRng b(7, "x");
  CounterRng c(7, "y");
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a();
    EXPECT_EQ(va, b());
    differs = differs || va != c();
  }
  EXPECT_TRUE(differs);
  EXPECT_NE(derive_seed(1, "pairs"), derive_seed(2, "pairs"));
  EXPECT_NE(derive_seed(1, "pairs"), derive_seed(1, "split"));
}

TEST(Random, BelowStaysInRangeAndCoversIt) {
  CounterRng rng(3, "below");
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hits[v];
  }
  for (int h : hits) EXPECT_GT(h, 800);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.unit();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Random, SampleIndicesIsASubset) {
  for (std::size_t n : {0u, 1u, 5u, 50u}) {
    for (std::size_t k : {0u, 1u, 3u, 60u}) {
      CounterRng rng(n * 100 + k, "sample");
      const auto idx = sample_indices(n, k, rng);
      EXPECT_EQ(idx.size(), std::min(n, k));
      const std::set<std::size_t> uniq(idx.begin(), idx.end());
      EXPECT_EQ(uniq.size(), idx.size());
      for (auto i : idx) EXPECT_LT(i, n);
    }
  }
}

TEST(Random, ShuffleIsAPermutation) {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  CounterRng rng(1, "shuffle");
  shuffle(std::span<int>(v), rng);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(Parallel, VisitsEveryIndexOnce) {
  for (std::size_t workers : {1u, 2u, 8u}) {
    std::vector<std::atomic<int>> seen(257);
    parallel_for(seen.size(), workers, [&](std::size_t i) { seen[i]++; });
    for (auto& s : seen) EXPECT_EQ(s.load(), 1);
  }
}

TEST(Parallel, RethrowsLowestFailingIndex) {
  for (std::size_t workers : {1u, 4u}) {
    try {
      parallel_for(100, workers, [](std::size_t i) {
        if (i == 17 || i == 60) throw Error("fail " + std::to_string(i));
      });
      FAIL() << "expected an exception";
    } catch (const Error& e) {
      EXPECT_STREQ(e.what(), "fail 17");
    }
  }
}

TEST(UnionFind, MergesTransitively) {
  UnionFind uf(6);
  uf.unite(0, 1);
  uf.unite(2, 3);
  EXPECT_FALSE(uf.connected(1, 2));
  uf.unite(1, 3);
  EXPECT_TRUE(uf.connected(0, 2));
  EXPECT_FALSE(uf.connected(0, 4));
  EXPECT_EQ(uf.find(5), 5u);
}
