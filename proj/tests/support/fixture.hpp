#pragma once

#include <set>

#include "offermatch/identity.hpp"
#include "offermatch/pairs.hpp"
#include "offermatch/synthetic.hpp"

namespace testing_support {

// A prepared synthetic corpus with a target-language test split and two
// balanced training pools, built the way the split stage builds them.
struct Pools {
  offermatch::PreparedCorpus corpus;
  offermatch::DatasetSplit test;
  offermatch::DatasetSplit target_pool;
  offermatch::DatasetSplit aux_pool;
};

inline std::vector<offermatch::OfferPair> in_language(const std::vector<offermatch::OfferPair>& pairs,
                                                      const std::string& lang, offermatch::Label label) {
  std::vector<offermatch::OfferPair> out;
  for (const auto& p : pairs) {
    if (p.language == lang && p.label == label) out.push_back(p);
  }
  return out;
}

inline Pools make_pools(std::size_t products, std::size_t test_size, std::size_t target_size, std::size_t aux_size,
                        std::uint64_t seed = 1) {
  using namespace offermatch;
  synthetic::CorpusSpec spec;
  spec.products = products;
  spec.families = std::max<std::size_t>(4, products / 6);
  spec.min_offers = 3;
  spec.max_offers = 4;
  spec.shops = 10;
  spec.seed = seed;
  const auto offers = synthetic::make_corpus(spec);
  Pools out;
  out.corpus = prepare_corpus(offers, cluster_offers(offers).clusters, 2);
  const auto& pc = out.corpus;
  const VectorLookup vec = [&](const std::string& id) -> const SparseVector& { return pc.vector(id); };
  std::vector<OfferPair> all;
  for (const auto& c : pc.clusters) {
    auto p = generate_positive_pairs(c, 1000, seed, vec);
    all.insert(all.end(), p.begin(), p.end());
  }
  auto neg = generate_negative_pairs(pc.clusters, 4, 40, seed, vec).pairs;
  all.insert(all.end(), neg.begin(), neg.end());
  std::vector<OfferPair> labelled;
  for (const std::string lang : {"de", "en"}) {
    std::vector<OfferPair> part;
    for (const auto& p : all) {
      if (p.language == lang) part.push_back(p);
    }
    for (auto& p : label_hardness(std::move(part), 0.5)) labelled.push_back(std::move(p));
  }
  auto pos_de = in_language(labelled, "de", Label::kMatch);
  auto neg_de = in_language(labelled, "de", Label::kNonMatch);
  out.test = assemble_split(pos_de, neg_de, test_size, 0.25, 0.5, seed, SplitRole::kTest);
  std::set<std::string> used;
  for (const auto& p : out.test.pairs) used.insert(p.pair_id);
  const auto taken = [&](const OfferPair& p) { return used.count(p.pair_id) > 0; };
  std::erase_if(pos_de, taken);
  std::erase_if(neg_de, taken);
  out.target_pool = assemble_split(pos_de, neg_de, target_size, 0.5, 0.5, seed, SplitRole::kTrainPool);
  out.aux_pool = assemble_split(in_language(labelled, "en", Label::kMatch), in_language(labelled, "en", Label::kNonMatch),
                                aux_size, 0.5, 0.5, seed + 1, SplitRole::kTrainPool);
  return out;
}

}  // namespace testing_support
