#include <gtest/gtest.h>

#include <sstream>

#include "offermatch/identity.hpp"
#include "offermatch/pairs.hpp"
#include "offermatch/synthetic.hpp"
#include "support/oracles.hpp"

using namespace offermatch;

namespace {

Offer offer(std::string id, std::string lang, std::string title, std::optional<std::string> gtin = {},
            std::optional<std::string> mpn = {}) {
  Offer o;
  o.offer_id = std::move(id);
  o.language = std::move(lang);
  o.source_host = "s";
  o.title = std::move(title);
  o.gtin = std::move(gtin);
  o.mpn = std::move(mpn);
  return o;
}

ProductCluster cluster(std::string id, std::map<std::string, std::vector<std::string>> parts) {
  ProductCluster c;
  c.cluster_id = std::move(id);
  for (const auto& [lang, ids] : parts) {
    c.member_offers.insert(c.member_offers.end(), ids.begin(), ids.end());
  }
  std::sort(c.member_offers.begin(), c.member_offers.end());
  c.language_partition = std::move(parts);
  return c;
}

// Labelled pool of synthetic pairs with distinct offer ids.
std::vector<OfferPair> pool(std::size_t n, Label label, const std::string& lang, std::uint64_t seed,
                            double corner_fraction = 0.5) {
  CounterRng rng(seed, "pool/" + lang);
  std::vector<OfferPair> out;
  const std::string tag = label == Label::kMatch ? "m" : "n";
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(make_offer_pair(lang + tag + std::to_string(i) + "a", lang + tag + std::to_string(i) + "b", label,
                                  rng.unit(), lang));
  }
  return label_hardness(std::move(out), corner_fraction);
}

DatasetSplit balanced_pool(std::size_t per_class, const std::string& lang, std::uint64_t seed) {
  auto p = pool(per_class, Label::kMatch, lang, seed);
  auto n = pool(per_class, Label::kNonMatch, lang, seed + 1);
  p.insert(p.end(), n.begin(), n.end());
  return DatasetSplit::from_pairs(SplitRole::kTrainPool, std::move(p), seed);
}

std::size_t matches(std::span<const OfferPair> pairs) {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const OfferPair& p) { return p.label == Label::kMatch; }));
}

const SparseVector& zero_vector(const std::string&) {
  static const SparseVector z;
  return z;
}

}  // namespace

TEST(Strip, RemovesIdentifierFromTitle) {
  const auto o = offer("a", "en", "Apple iPhone X 64GB MQAD2LL/A", {}, "MQAD2LL/A");
  const auto r = strip_identifiers(o, identifier_strings(o));
  EXPECT_EQ(r.offer.title, "Apple iPhone X 64GB");
  EXPECT_FALSE(r.offer.mpn);
  EXPECT_FALSE(r.emptied);
}

TEST(Strip, TitleWithoutIdentifierIsUnchanged) {
  const auto o = offer("a", "en", "Apple iPhone X 64GB", "4006381333931");
  EXPECT_EQ(strip_identifiers(o, identifier_strings(o)).offer.title, "Apple iPhone X 64GB");
}

TEST(Strip, SpacedDigitsSurvive) {
  auto o = offer("a", "en", "Galaxy");
  o.ean = "8806088697802";
  o.description = "EAN 8806 088 697802 and 8806088697802";
  const auto r = strip_identifiers(o, identifier_strings(o));
  EXPECT_EQ(r.offer.description, "EAN 8806 088 697802 and");
}

TEST(Strip, NormalizedAndCompactFormsAreRemoved) {
  auto o = offer("a", "en", "Phone mqad2lla 04006381333931 case", "4006381333931", "MQAD2LL/A");
  const auto forms = identifier_strings(o);
  EXPECT_EQ(forms.front().size(), 14u);
  EXPECT_EQ(strip_identifiers(o, forms).offer.title, "Phone case");
}

TEST(Strip, TitleOfOnlyIdentifiersIsEmptied) {
  const auto o = offer("a", "en", "MQAD2LL/A", {}, "MQAD2LL/A");
  EXPECT_TRUE(strip_identifiers(o, identifier_strings(o)).emptied);
}

TEST(Strip, ShortFormsAreIgnored) {
  const auto o = offer("a", "en", "abc abcd", {}, "ab-c");
  EXPECT_TRUE(identifier_strings(o).empty() ||
              std::all_of(identifier_strings(o).begin(), identifier_strings(o).end(),
                          [](const std::string& f) { return f.size() >= kMinStripLength; }));
}

TEST(Strip, NoFormSurvivesOnRandomTexts) {
  // Identifiers spliced into random word soup, including overlapping and
  // re-forming occurrences, never survive stripping.
  const std::vector<std::string> words = {"phone", "MQ", "AD2", "case", "4006", "381333931", "LL/A", "x"};
  for (std::uint64_t t = 0; t < 300; ++t) {
    CounterRng rng(t, "strip");
    std::string title;
    for (int i = 0; i < 8; ++i) {
      title += words[rng.below(words.size())];
      if (rng.below(2)) title += " ";
    }
    title += rng.below(2) ? " MQAD2LL/A" : " 4006381333931";
    const auto o = offer("a", "en", title, "4006381333931", "MQAD2LL/A");
    const auto forms = identifier_strings(o);
    const auto r = strip_identifiers(o, forms);
    EXPECT_FALSE(contains_identifier(r.offer.title, forms)) << title << " -> " << r.offer.title;
  }
}

TEST(Positives, AllSameLanguagePairs) {
  const auto c = cluster("a", {{"de", {"a", "b", "c"}}});
  const auto p = generate_positive_pairs(c, 10, 1, zero_vector);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].pair_id, "a|b");
  EXPECT_EQ(p[1].pair_id, "a|c");
  EXPECT_EQ(p[2].pair_id, "b|c");
  for (const auto& x : p) EXPECT_EQ(x.label, Label::kMatch);
}

TEST(Positives, NoCrossLanguagePairs) {
  const auto c = cluster("a", {{"de", {"a", "b"}}, {"en", {"x"}}});
  const auto p = generate_positive_pairs(c, 10, 1, zero_vector);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].pair_id, "a|b");
  EXPECT_EQ(p[0].language, "de");
}

TEST(Positives, CapMatchesEnumerateThenSample) {
  const auto c = cluster("a", {{"de", {"a", "b", "c", "d", "e", "f"}}});
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto p = generate_positive_pairs(c, 5, seed, zero_vector);
    ASSERT_EQ(p.size(), 5u);
    EXPECT_EQ(p, generate_positive_pairs(c, 5, seed, zero_vector));

    // Oracle: all 15 pairs in pair_id order, then the seeded 5-subset.
    std::vector<std::string> all;
    const std::vector<std::string> ids = {"a", "b", "c", "d", "e", "f"};
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = i + 1; j < ids.size(); ++j) all.push_back(ids[i] + "|" + ids[j]);
    }
    ASSERT_EQ(all.size(), 15u);
    std::sort(all.begin(), all.end());
    CounterRng rng(seed, "positives/a/de");
    std::set<std::string> expected;
    for (auto i : sample_indices(all.size(), 5, rng)) expected.insert(all[i]);
    std::set<std::string> got;
    for (const auto& x : p) got.insert(x.pair_id);
    EXPECT_EQ(got, expected);
  }
}

TEST(Negatives, OnlyOption) {
  const auto r = generate_negative_pairs({cluster("a", {{"de", {"a"}}}), cluster("b", {{"de", {"b"}}})}, 1, 1, 1,
                                         zero_vector);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].pair_id, "a|b");
  EXPECT_EQ(r.pairs[0].label, Label::kNonMatch);
}

TEST(Negatives, SingleClusterReports) {
  const auto r = generate_negative_pairs({cluster("a", {{"de", {"a", "b"}}})}, 3, 5, 1, zero_vector);
  EXPECT_TRUE(r.pairs.empty());
  ASSERT_EQ(r.reports.size(), 1u);
}

TEST(Negatives, PrefersTheMostSimilarCluster) {
  std::vector<Offer> offers = {offer("x1", "en", "apple iphone x silver 64gb", "4006381333931"),
                               offer("x2", "en", "apple iphone x 64gb smartphone", "4006381333931"),
                               offer("s1", "en", "apple iphone xs silver 64gb", "96385074"),
                               offer("s2", "en", "apple iphone xs smartphone", "96385074"),
                               offer("n1", "en", "nokia 3310 classic", "036000291452"),
                               offer("n2", "en", "nokia 3310 classic phone", "036000291452")};
  const auto clusters = cluster_offers(offers).clusters;
  const auto pc = prepare_corpus(offers, clusters, 2);
  const VectorLookup vec = [&](const std::string& id) -> const SparseVector& { return pc.vector(id); };
  const auto r = generate_negative_pairs(pc.clusters, 1, 100, 1, vec);
  ASSERT_FALSE(r.pairs.empty());
  for (const auto& p : r.pairs) {
    const bool has_nokia = p.offer_a[0] == 'n' || p.offer_b[0] == 'n';
    const bool iphone_pair = (p.offer_a[0] == 's' && p.offer_b[0] == 'x') || (p.offer_a[0] == 'x' && p.offer_b[0] == 's');
    // Nokia's own nearest cluster is an iPhone cluster, so Nokia pairs appear
    // only as Nokia's negatives; the iPhone clusters pair with each other.
    EXPECT_TRUE(iphone_pair || has_nokia) << p.pair_id;
  }
  std::size_t iphone_pairs = 0;
  for (const auto& p : r.pairs) iphone_pairs += p.offer_a[0] != 'n' && p.offer_b[0] != 'n';
  EXPECT_EQ(iphone_pairs, 4u);
  EXPECT_EQ(oracle::keys_of(r.pairs), oracle::all_negative_keys(pc, 1));
}

TEST(Negatives, QuotaBoundsEachSourceCluster) {
  synthetic::CorpusSpec spec;
  spec.products = 20;
  const auto offers = synthetic::make_corpus(spec);
  const auto pc = prepare_corpus(offers, cluster_offers(offers).clusters, 2);
  const VectorLookup vec = [&](const std::string& id) -> const SparseVector& { return pc.vector(id); };
  const auto r = generate_negative_pairs(pc.clusters, 3, 4, 5, vec);
  // Each (cluster, language) source contributes at most 4 pairs.
  EXPECT_LE(r.pairs.size(), pc.clusters.size() * 2 * 4);
  EXPECT_GT(r.pairs.size(), 0u);
  const auto all = oracle::all_negative_keys(pc, 3);
  for (const auto& k : oracle::keys_of(r.pairs)) EXPECT_TRUE(all.count(k)) << k;
  EXPECT_EQ(r.pairs, generate_negative_pairs(pc.clusters, 3, 4, 5, vec, 4).pairs);
}

TEST(PairOracle, SyntheticCorpusEqualsBruteForce) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    synthetic::CorpusSpec spec;
    spec.seed = seed;
    spec.products = 14;
    spec.families = 3;
    const auto offers = synthetic::make_corpus(spec);
    const auto pc = prepare_corpus(offers, cluster_offers(offers).clusters, 2);
    const VectorLookup vec = [&](const std::string& id) -> const SparseVector& { return pc.vector(id); };
    std::vector<OfferPair> pos;
    for (const auto& c : pc.clusters) {
      auto p = generate_positive_pairs(c, 1000, seed, vec);
      pos.insert(pos.end(), p.begin(), p.end());
    }
    EXPECT_EQ(oracle::keys_of(pos), oracle::all_positive_keys(pc));
    for (std::size_t k : {1u, 2u, 5u}) {
      const auto neg = generate_negative_pairs(pc.clusters, k, 100000, seed, vec);
      EXPECT_EQ(oracle::keys_of(neg.pairs), oracle::all_negative_keys(pc, k)) << "k=" << k;
    }
  }
}

TEST(Hardness, TopFractionOfNegatives) {
  std::vector<OfferPair> p;
  const double sims[] = {0.9, 0.2, 0.8, 0.1};
  for (int i = 0; i < 4; ++i) {
    p.push_back(make_offer_pair("a" + std::to_string(i), "b" + std::to_string(i), Label::kNonMatch, sims[i], "de"));
  }
  const auto h = label_hardness(p, 0.5);
  EXPECT_EQ(h[0].hardness, Hardness::kCornerCase);
  EXPECT_EQ(h[1].hardness, Hardness::kRandom);
  EXPECT_EQ(h[2].hardness, Hardness::kCornerCase);
  EXPECT_EQ(h[3].hardness, Hardness::kRandom);
  for (const auto& x : label_hardness(p, 0.0)) EXPECT_EQ(x.hardness, Hardness::kRandom);
  for (const auto& x : label_hardness(p, 1.0)) EXPECT_EQ(x.hardness, Hardness::kCornerCase);
  EXPECT_THROW(label_hardness(p, 1.5), Error);
}

TEST(Hardness, LeastSimilarPositivesAreCornerCases) {
  std::vector<OfferPair> p;
  const double sims[] = {0.9, 0.2, 0.8, 0.1};
  for (int i = 0; i < 4; ++i) {
    p.push_back(make_offer_pair("a" + std::to_string(i), "b" + std::to_string(i), Label::kMatch, sims[i], "de"));
  }
  const auto h = label_hardness(p, 0.5);
  EXPECT_EQ(h[1].hardness, Hardness::kCornerCase);
  EXPECT_EQ(h[3].hardness, Hardness::kCornerCase);
}

TEST(Hardness, ExtremalOnRandomPools) {
  for (std::uint64_t t = 0; t < 100; ++t) {
    CounterRng rng(t, "hardness");
    std::vector<OfferPair> p;
    const auto n = rng.below(60);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse similarities create many ties.
      const double sim = static_cast<double>(rng.below(5)) / 4.0;
      p.push_back(make_offer_pair("a" + std::to_string(i), "b" + std::to_string(i),
                                  rng.below(2) ? Label::kMatch : Label::kNonMatch, sim, "de"));
    }
    const double f = static_cast<double>(rng.below(11)) / 10.0;
    EXPECT_TRUE(oracle::hardness_extremal(label_hardness(p, f), f)) << "trial " << t;
  }
}

TEST(AssembleSplit, TestSetComposition) {
  const auto pos = pool(400, Label::kMatch, "de", 1);
  const auto neg = pool(1000, Label::kNonMatch, "de", 2);
  const auto s = assemble_split(pos, neg, 1200, 0.25, 0.5, 7);
  EXPECT_EQ(s.pairs.size(), 1200u);
  EXPECT_EQ(matches(s.pairs), 300u);
  EXPECT_DOUBLE_EQ(s.match_ratio, 0.25);
  EXPECT_EQ(s.per_language_counts.at("de"), 1200u);
  std::set<std::string> ids;
  for (const auto& p : s.pairs) ids.insert(p.pair_id);
  EXPECT_EQ(ids.size(), 1200u);
  EXPECT_EQ(s.pairs, assemble_split(pos, neg, 1200, 0.25, 0.5, 7).pairs);
  EXPECT_NE(s.pairs, assemble_split(pos, neg, 1200, 0.25, 0.5, 8).pairs);
}

TEST(AssembleSplit, BalancedTrainingSet) {
  const auto pos = pool(1000, Label::kMatch, "en", 3);
  const auto neg = pool(1000, Label::kNonMatch, "en", 4);
  const auto s = assemble_split(pos, neg, 1800, 0.5, 0.5, 1, SplitRole::kTrainPool);
  EXPECT_EQ(matches(s.pairs), 900u);
  EXPECT_EQ(s.pairs.size() - matches(s.pairs), 900u);
}

TEST(AssembleSplit, StrataOfATinySplit) {
  const auto pos = pool(4, Label::kMatch, "de", 5);
  const auto neg = pool(4, Label::kNonMatch, "de", 6);
  const auto s = assemble_split(pos, neg, 4, 0.5, 0.5, 1);
  std::map<std::pair<Label, Hardness>, int> strata;
  for (const auto& p : s.pairs) ++strata[{p.label, p.hardness}];
  EXPECT_EQ(strata[std::make_pair(Label::kMatch, Hardness::kCornerCase)], 1);
  EXPECT_EQ(strata[std::make_pair(Label::kMatch, Hardness::kRandom)], 1);
  EXPECT_EQ(strata[std::make_pair(Label::kNonMatch, Hardness::kCornerCase)], 1);
  EXPECT_EQ(strata[std::make_pair(Label::kNonMatch, Hardness::kRandom)], 1);
}

TEST(AssembleSplit, ShortStratumIsAnError) {
  const auto pos = pool(10, Label::kMatch, "de", 5);
  const auto neg = pool(10, Label::kNonMatch, "de", 6);
  try {
    assemble_split(pos, neg, 40, 0.5, 0.5, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("short by"), std::string::npos);
  }
}

TEST(Mix, FullSizeMix) {
  const auto de = balanced_pool(1800, "de", 1);
  const auto en = balanced_pool(3600, "en", 2);
  const auto mix = compose_training_mix(de, en, 1800, 7200, 3);
  EXPECT_EQ(mix.pairs.size(), 9000u);
  EXPECT_EQ(matches(mix.pairs), 4500u);
  EXPECT_EQ(language_counts(mix.pairs).at("de"), 1800u);
  EXPECT_EQ(language_counts(mix.pairs).at("en"), 7200u);
}

TEST(Mix, ZeroAuxiliaryIsTheTargetPrefix) {
  const auto de = balanced_pool(1000, "de", 1);
  const auto en = balanced_pool(1000, "en", 2);
  const auto mix = compose_training_mix(de, en, 1800, 0, 3);
  EXPECT_EQ(mix.pairs.size(), 1800u);
  EXPECT_EQ(language_counts(mix.pairs).count("en"), 0u);
  const auto bigger = compose_training_mix(de, en, 2000, 0, 3);
  EXPECT_TRUE(std::equal(mix.pairs.begin(), mix.pairs.end(), bigger.pairs.begin()));
}

TEST(Mix, NestedAcrossSizes) {
  const auto de = balanced_pool(200, "de", 1);
  const auto en = balanced_pool(400, "en", 2);
  const std::vector<std::size_t> rows = {10, 50, 101, 400};
  const std::vector<std::size_t> cols = {0, 25, 200, 800};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto m = compose_training_mix(de, en, rows[r], cols[c], 9);
      const auto ids = oracle::keys_of(m.pairs);
      EXPECT_EQ(ids.size(), rows[r] + cols[c]);
      const auto bal = static_cast<long>(matches(m.pairs)) * 2 - static_cast<long>(m.pairs.size());
      EXPECT_LE(std::abs(bal), 2);
      if (c + 1 < cols.size()) {
        const auto larger = oracle::keys_of(compose_training_mix(de, en, rows[r], cols[c + 1], 9).pairs);
        EXPECT_TRUE(std::includes(larger.begin(), larger.end(), ids.begin(), ids.end()));
      }
      if (r + 1 < rows.size()) {
        const auto larger = oracle::keys_of(compose_training_mix(de, en, rows[r + 1], cols[c], 9).pairs);
        EXPECT_TRUE(std::includes(larger.begin(), larger.end(), ids.begin(), ids.end()));
      }
    }
  }
}

TEST(Mix, ErrorsOnExhaustionAndSharedLanguage) {
  const auto de = balanced_pool(10, "de", 1);
  const auto de2 = balanced_pool(10, "de", 2);
  EXPECT_THROW(compose_training_mix(de, de2, 5, 5, 1), Error);
  const auto en = balanced_pool(10, "en", 2);
  EXPECT_THROW(compose_training_mix(de, en, 21, 0, 1), Error);
  // Only matches left after 10: no balanced set of 15 from a skewed pool.
  auto skewed = pool(10, Label::kMatch, "fr", 1);
  const auto neg = pool(2, Label::kNonMatch, "fr", 2);
  skewed.insert(skewed.end(), neg.begin(), neg.end());
  EXPECT_THROW(compose_training_mix(DatasetSplit::from_pairs(SplitRole::kTrainPool, skewed, 1), en, 8, 0, 1), Error);
}

TEST(Carve, StratifiedHoldOut) {
  const auto de = balanced_pool(100, "de", 1);
  const auto en = balanced_pool(100, "en", 2);
  const auto mix = compose_training_mix(de, en, 100, 200, 3);
  const auto carved = carve_validation(mix.pairs, 0.2, 4);
  EXPECT_EQ(carved.validation.size(), 60u);
  EXPECT_EQ(carved.train.size(), 240u);
  EXPECT_EQ(matches(carved.validation), 30u);
  EXPECT_EQ(language_counts(carved.validation).at("de"), 20u);
  auto all = oracle::keys_of(carved.train);
  const auto val = oracle::keys_of(carved.validation);
  for (const auto& k : val) EXPECT_FALSE(all.count(k));
  all.insert(val.begin(), val.end());
  EXPECT_EQ(all, oracle::keys_of(mix.pairs));
}

TEST(Leakage, Checks) {
  const auto a = pool(5, Label::kMatch, "de", 1);
  const auto b = pool(5, Label::kNonMatch, "de", 2);
  EXPECT_TRUE(leakage_check(a, b).empty());

  auto train = a;
  train.push_back(b[2]);
  const auto v = leakage_check(train, b);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].test_pair_id, b[2].pair_id);

  // Reversed offers with a non-canonical id are still the same offer pair.
  OfferPair reversed = b[3];
  std::swap(reversed.offer_a, reversed.offer_b);
  reversed.pair_id = reversed.offer_a + "|" + reversed.offer_b;
  const auto r = leakage_check(std::vector<OfferPair>{reversed}, b);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].reasons, std::vector<std::string>{"shared offer pair"});
}

TEST(PairFiles, RoundTrip) {
  const auto p = pool(20, Label::kMatch, "de", 1);
  std::stringstream s;
  write_pairs(s, p);
  EXPECT_EQ(read_pairs(s), p);
  std::istringstream bad("{\"pair_id\":1}\n");
  EXPECT_THROW(read_pairs(bad), Error);
}

TEST(PrepareCorpus, StripsClusterWideFormsAndExcludesEmptied) {
  std::vector<Offer> offers = {offer("a", "en", "Phone MQAD2LL/A", {}, "MQAD2LL/A"),
                               offer("b", "en", "Phone black mqad2lla", "4006381333931", "MQAD2LL/A"),
                               offer("c", "en", "4006381333931", "4006381333931"),
                               offer("d", "en", "Phone 4006381333931 white")};
  const auto clusters = cluster_offers(offers).clusters;
  const auto pc = prepare_corpus(offers, clusters, 1);
  ASSERT_EQ(pc.offers.size(), 2u);
  EXPECT_EQ(pc.offer("a").title, "Phone");
  EXPECT_EQ(pc.offer("b").title, "Phone black");
  ASSERT_EQ(pc.reports.size(), 1u);
  EXPECT_EQ(pc.reports[0].input_ref, "c");
  ASSERT_EQ(pc.clusters.size(), 1u);
  EXPECT_EQ(pc.clusters[0].member_offers, (std::vector<std::string>{"a", "b"}));
  // d is unclustered and never prepared.
  EXPECT_THROW(pc.offer("d"), Error);

  const auto sp = serialize_pair(make_offer_pair("a", "b", Label::kMatch, 0.0, "en"), pc);
  EXPECT_EQ(sp.text_a, "Phone");
  EXPECT_EQ(sp.text_b, "Phone black");
}

TEST(PrepareCorpus, IndependentOfWorkerCount) {
  synthetic::CorpusSpec spec;
  spec.products = 25;
  const auto offers = synthetic::make_corpus(spec);
  const auto clusters = cluster_offers(offers).clusters;
  const auto one = prepare_corpus(offers, clusters, 2, 1);
  const auto many = prepare_corpus(offers, clusters, 2, 6);
  EXPECT_EQ(one.offers, many.offers);
  EXPECT_EQ(one.vectors, many.vectors);
  EXPECT_EQ(one.clusters, many.clusters);
}
