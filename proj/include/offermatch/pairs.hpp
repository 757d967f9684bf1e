#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "offermatch/common.hpp"
#include "offermatch/identity.hpp"
#include "offermatch/offer.hpp"
#include "offermatch/parallel.hpp"
#include "offermatch/random.hpp"
#include "offermatch/text.hpp"

namespace offermatch {

enum class Hardness { kRandom, kCornerCase };

inline std::string_view to_string(Hardness h) { return h == Hardness::kRandom ? "random" : "corner_case"; }

inline Hardness parse_hardness(std::string_view s) {
  if (s == "random") return Hardness::kRandom;
  if (s == "corner_case") return Hardness::kCornerCase;
  throw Error("unknown hardness: " + std::string(s));
}

inline std::string make_pair_id(std::string_view a, std::string_view b) {
  return a < b ? std::string(a) + "|" + std::string(b) : std::string(b) + "|" + std::string(a);
}

struct OfferPair {
  std::string pair_id;
  std::string offer_a;  // offer_a < offer_b
  std::string offer_b;
  Label label = Label::kNonMatch;
  Hardness hardness = Hardness::kRandom;
  double similarity = 0.0;
  std::string language;

  bool operator==(const OfferPair&) const = default;
};

inline OfferPair make_offer_pair(std::string a, std::string b, Label label, double similarity,
                                 std::string language) {
  if (b < a) std::swap(a, b);
  OfferPair p;
  p.pair_id = a + "|" + b;
  p.offer_a = std::move(a);
  p.offer_b = std::move(b);
  p.label = label;
  p.similarity = similarity;
  p.language = std::move(language);
  return p;
}

inline void sort_by_pair_id(std::vector<OfferPair>& pairs) {
  std::sort(pairs.begin(), pairs.end(),
            [](const OfferPair& x, const OfferPair& y) { return x.pair_id < y.pair_id; });
}

// ---------------------------------------------------------------------------
// Identifier stripping

// Forms shorter than this are never stripped: removing two- or three-character
// strings would damage ordinary words and model numbers.
inline constexpr std::size_t kMinStripLength = 4;

// Lowercased identifier forms of an offer: raw values, raw values with
// separators removed, and accepted normalized values. Longest first.
inline std::vector<std::string> identifier_strings(const Offer& o) {
  std::set<std::string> forms;
  const auto add = [&](std::string s) {
    if (s.size() >= kMinStripLength) forms.insert(std::move(s));
  };
  for (const auto& r : raw_identifiers(o)) {
    const auto raw = ascii_lower(trim(*r.value));
    add(raw);
    std::string compact;
    for (char c : raw) {
      if (std::isalnum(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 0x80) compact.push_back(c);
    }
    add(compact);
    if (auto n = normalize_identifier(*r.value, r.kind); n.ok()) add(n.id->value);
  }
  std::vector<std::string> out(forms.begin(), forms.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  return out;
}

inline std::vector<std::string> merge_identifier_strings(std::span<const std::string> a,
                                                         std::span<const std::string> b) {
  std::set<std::string> forms(a.begin(), a.end());
  forms.insert(b.begin(), b.end());
  std::vector<std::string> out(forms.begin(), forms.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const std::string& x, const std::string& y) { return x.size() > y.size(); });
  return out;
}

// Removes every case-insensitive occurrence of the given lowercase forms,
// repeating until none is left, then collapses whitespace.
inline std::string strip_text(std::string_view text, std::span<const std::string> forms) {
  std::string s(text);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& f : forms) {
      if (f.empty()) continue;
      std::string folded = ascii_lower(s);
      std::size_t at = folded.find(f);
      while (at != std::string::npos) {
        s.replace(at, f.size(), " ");
        folded.replace(at, f.size(), " ");
        changed = true;
        at = folded.find(f, at);
      }
    }
  }
  return collapse_whitespace(s);
}

inline bool contains_identifier(std::string_view text, std::span<const std::string> forms) {
  const auto folded = ascii_lower(text);
  return std::any_of(forms.begin(), forms.end(),
                     [&](const std::string& f) { return !f.empty() && folded.find(f) != std::string::npos; });
}

struct StripResult {
  Offer offer;
  bool emptied = false;  // title stripped to nothing: exclude from pairs
};

inline StripResult strip_identifiers(const Offer& offer, std::span<const std::string> ids) {
  std::vector<std::string> forms;
  for (const auto& id : ids) {
    auto f = ascii_lower(trim(id));
    if (!f.empty()) forms.push_back(std::move(f));
  }
  std::stable_sort(forms.begin(), forms.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  StripResult r{offer, false};
  r.offer.title = strip_text(offer.title, forms);
  r.offer.description = strip_text(offer.description, forms);
  r.offer.gtin.reset();
  r.offer.ean.reset();
  r.offer.mpn.reset();
  r.emptied = r.offer.title.empty();
  return r;
}

// ---------------------------------------------------------------------------
// Prepared corpus: stripped offers, their identifier forms and mining vectors.

struct PreparedCorpus {
  std::vector<Offer> offers;  // stripped, sorted by offer_id
  std::vector<std::vector<std::string>> id_forms;  // cluster-wide forms per offer
  std::vector<SparseVector> vectors;
  std::vector<ProductCluster> clusters;  // emptied offers removed
  std::vector<IngestError> reports;
  Vocabulary mining_vocabulary;

  std::size_t index_of(const std::string& offer_id) const {
    const auto it = index_.find(offer_id);
    if (it == index_.end()) throw Error("unknown offer_id: " + offer_id);
    return it->second;
  }
  const Offer& offer(const std::string& id) const { return offers[index_of(id)]; }
  const SparseVector& vector(const std::string& id) const { return vectors[index_of(id)]; }
  const std::vector<std::string>& forms(const std::string& id) const { return id_forms[index_of(id)]; }

  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < offers.size(); ++i) index_.emplace(offers[i].offer_id, i);
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// Strips every clustered offer with the identifier forms of its whole
// cluster, drops offers whose title becomes empty, and vectorizes the rest
// with a binary vocabulary (min_df) over the stripped texts.
inline PreparedCorpus prepare_corpus(const std::vector<Offer>& offers, const std::vector<ProductCluster>& clusters,
                                     std::size_t min_df = 2, std::size_t workers = 1) {
  std::unordered_map<std::string, const Offer*> by_id;
  for (const auto& o : offers) by_id.emplace(o.offer_id, &o);
  const auto find = [&](const std::string& id) -> const Offer& {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("cluster references unknown offer " + id);
    return *it->second;
  };

  PreparedCorpus pc;
  struct Item {
    std::size_t cluster;
    const Offer* offer;
  };
  std::vector<Item> items;
  std::vector<std::vector<std::string>> cluster_forms(clusters.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    std::set<std::string> forms;
    for (const auto& id : clusters[c].member_offers) {
      const auto& o = find(id);
      for (auto& f : identifier_strings(o)) forms.insert(std::move(f));
      items.push_back({c, &o});
    }
    cluster_forms[c].assign(forms.begin(), forms.end());
    std::stable_sort(cluster_forms[c].begin(), cluster_forms[c].end(),
                     [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.offer->offer_id < b.offer->offer_id; });

  std::vector<StripResult> stripped(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    stripped[i] = strip_identifiers(*items[i].offer, cluster_forms[items[i].cluster]);
  });

  std::set<std::string> excluded;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (stripped[i].emptied) {
      excluded.insert(items[i].offer->offer_id);
      pc.reports.push_back({items[i].offer->offer_id, "title empty after identifier removal; excluded"});
      continue;
    }
    pc.offers.push_back(std::move(stripped[i].offer));
    pc.id_forms.push_back(cluster_forms[items[i].cluster]);
  }
  for (const auto& c : clusters) {
    ProductCluster kept = c;
    kept.member_offers.clear();
    kept.language_partition.clear();
    for (const auto& id : c.member_offers) {
      if (excluded.count(id)) continue;
      kept.member_offers.push_back(id);
      kept.language_partition[find(id).language].push_back(id);
    }
    if (kept.member_offers.empty()) continue;
    kept.cluster_id = kept.member_offers.front();
    pc.clusters.push_back(std::move(kept));
  }
  std::sort(pc.clusters.begin(), pc.clusters.end(),
            [](const ProductCluster& a, const ProductCluster& b) { return a.cluster_id < b.cluster_id; });
  pc.reindex();

  std::vector<std::string> texts;
  texts.reserve(pc.offers.size());
  for (const auto& o : pc.offers) texts.push_back(offer_text(o));
  if (!texts.empty()) pc.mining_vocabulary = build_vocabulary(texts, min_df);
  pc.vectors.resize(texts.size());
  parallel_for(texts.size(), workers,
               [&](std::size_t i) { pc.vectors[i] = vectorize(texts[i], pc.mining_vocabulary); });
  return pc;
}

// Pair texts: stripped offers, re-stripped with the identifier forms of both
// sides so neither text carries the other offer's identifiers.
inline SerializedPair serialize_pair(const OfferPair& p, const PreparedCorpus& pc) {
  const auto forms = merge_identifier_strings(pc.forms(p.offer_a), pc.forms(p.offer_b));
  return {p.pair_id, strip_text(offer_text(pc.offer(p.offer_a)), forms),
          strip_text(offer_text(pc.offer(p.offer_b)), forms), p.label};
}

// ---------------------------------------------------------------------------
// Pair generation

using VectorLookup = std::function<const SparseVector&(const std::string& offer_id)>;

// All same-language member pairs; a language with more pairs than the cap is
// subsampled uniformly under (seed, cluster, language).
inline std::vector<OfferPair> generate_positive_pairs(const ProductCluster& cluster, std::size_t cap_per_cluster,
                                                      std::uint64_t seed, const VectorLookup& vector_of) {
  std::vector<OfferPair> out;
  for (const auto& [lang, members] : cluster.language_partition) {
    std::vector<std::string> ids = members;
    std::sort(ids.begin(), ids.end());
    std::vector<OfferPair> all;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        all.push_back(make_offer_pair(ids[i], ids[j], Label::kMatch, 0.0, lang));
      }
    }
    sort_by_pair_id(all);
    if (all.size() > cap_per_cluster) {
      CounterRng rng(seed, "positives/" + cluster.cluster_id + "/" + lang);
      std::vector<OfferPair> kept;
      for (auto i : sample_indices(all.size(), cap_per_cluster, rng)) kept.push_back(all[i]);
      all = std::move(kept);
    }
    for (auto& p : all) {
      p.similarity = cosine_similarity(vector_of(p.offer_a), vector_of(p.offer_b));
      out.push_back(std::move(p));
    }
  }
  sort_by_pair_id(out);
  return out;
}

struct NegativeResult {
  std::vector<OfferPair> pairs;
  std::vector<std::string> reports;
};

// Mean of member vectors; weights become fractional.
inline SparseVector centroid(std::span<const std::string> members, const VectorLookup& vector_of) {
  std::map<std::uint32_t, double> acc;
  std::size_t dim = 0;
  for (const auto& id : members) {
    const auto& v = vector_of(id);
    dim = v.dimension;
    for (const auto& [i, w] : v.entries) acc[i] += w;
  }
  SparseVector c;
  c.dimension = dim;
  for (const auto& [i, w] : acc) c.entries.emplace_back(i, w / static_cast<double>(members.size()));
  return c;
}

// For one language: every other cluster ranked by centroid cosine, most
// similar first, ties by cluster_id.
inline std::vector<std::size_t> rank_similar_clusters(std::size_t source, std::span<const SparseVector> centroids,
                                                      std::span<const std::string> cluster_ids) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t d = 0; d < centroids.size(); ++d) {
    if (d != source) scored.emplace_back(cosine_similarity(centroids[source], centroids[d]), d);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return cluster_ids[x.second] < cluster_ids[y.second];
  });
  std::vector<std::size_t> out;
  for (const auto& [s, d] : scored) out.push_back(d);
  return out;
}

// Pairs each cluster's offers with offers of its k most similar same-language
// clusters; at most per_cluster_quota pairs per source cluster, sampled
// uniformly under (seed, language, cluster) when there are more candidates.
inline NegativeResult generate_negative_pairs(const std::vector<ProductCluster>& clusters, std::size_t k_similar,
                                              std::size_t per_cluster_quota, std::uint64_t seed,
                                              const VectorLookup& vector_of, std::size_t workers = 1) {
  NegativeResult out;
  std::set<std::string> languages;
  for (const auto& c : clusters) {
    for (const auto& [lang, m] : c.language_partition) {
      if (!m.empty()) languages.insert(lang);
    }
  }
  for (const auto& lang : languages) {
    std::vector<const ProductCluster*> members;
    for (const auto& c : clusters) {
      const auto it = c.language_partition.find(lang);
      if (it != c.language_partition.end() && !it->second.empty()) members.push_back(&c);
    }
    std::sort(members.begin(), members.end(),
              [](const ProductCluster* a, const ProductCluster* b) { return a->cluster_id < b->cluster_id; });
    if (members.size() < 2) {
      out.reports.push_back("language " + lang + ": fewer than 2 clusters, no negatives");
      continue;
    }
    std::vector<SparseVector> centroids(members.size());
    std::vector<std::string> ids(members.size());
    for (std::size_t c = 0; c < members.size(); ++c) {
      ids[c] = members[c]->cluster_id;
      centroids[c] = centroid(members[c]->language_partition.at(lang), vector_of);
    }
    if (members.size() - 1 < k_similar) {
      out.reports.push_back("language " + lang + ": only " + std::to_string(members.size() - 1) +
                            " other clusters available for k_similar " + std::to_string(k_similar));
    }
    std::vector<std::vector<OfferPair>> per_source(members.size());
    parallel_for(members.size(), workers, [&](std::size_t c) {
      auto ranked = rank_similar_clusters(c, centroids, ids);
      if (ranked.size() > k_similar) ranked.resize(k_similar);
      std::vector<OfferPair> cand;
      for (auto d : ranked) {
        for (const auto& a : members[c]->language_partition.at(lang)) {
          for (const auto& b : members[d]->language_partition.at(lang)) {
            cand.push_back(make_offer_pair(a, b, Label::kNonMatch, 0.0, lang));
          }
        }
      }
      sort_by_pair_id(cand);
      if (cand.size() > per_cluster_quota) {
        CounterRng rng(seed, "negatives/" + lang + "/" + ids[c]);
        std::vector<OfferPair> kept;
        for (auto i : sample_indices(cand.size(), per_cluster_quota, rng)) kept.push_back(cand[i]);
        cand = std::move(kept);
      }
      for (auto& p : cand) p.similarity = cosine_similarity(vector_of(p.offer_a), vector_of(p.offer_b));
      per_source[c] = std::move(cand);
    });
    for (auto& v : per_source) std::move(v.begin(), v.end(), std::back_inserter(out.pairs));
  }
  sort_by_pair_id(out.pairs);
  out.pairs.erase(std::unique(out.pairs.begin(), out.pairs.end(),
                              [](const OfferPair& a, const OfferPair& b) { return a.pair_id == b.pair_id; }),
                  out.pairs.end());
  return out;
}

inline std::size_t fraction_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
}

// Hard negatives are the most similar non-matches, hard positives the least
// similar matches; ties broken by pair_id.
inline std::vector<OfferPair> label_hardness(std::vector<OfferPair> pairs, double corner_fraction) {
  if (corner_fraction < 0.0 || corner_fraction > 1.0) throw Error("label_hardness: fraction outside [0,1]");
  for (const Label label : {Label::kMatch, Label::kNonMatch}) {
    std::vector<OfferPair*> cls;
    for (auto& p : pairs) {
      if (p.label == label) cls.push_back(&p);
    }
    std::sort(cls.begin(), cls.end(), [label](const OfferPair* x, const OfferPair* y) {
      if (x->similarity != y->similarity) {
        return label == Label::kNonMatch ? x->similarity > y->similarity : x->similarity < y->similarity;
      }
      return x->pair_id < y->pair_id;
    });
    const auto n_corner = fraction_count(cls.size(), corner_fraction);
    for (std::size_t i = 0; i < cls.size(); ++i) {
      cls[i]->hardness = i < n_corner ? Hardness::kCornerCase : Hardness::kRandom;
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Splits and training mixes

enum class SplitRole { kTrainPool, kValidation, kTest };

inline std::string_view to_string(SplitRole r) {
  switch (r) {
    case SplitRole::kTrainPool: return "train_pool";
    case SplitRole::kValidation: return "validation";
    case SplitRole::kTest: return "test";
  }
  return "";
}

inline SplitRole parse_split_role(std::string_view s) {
  if (s == "train_pool") return SplitRole::kTrainPool;
  if (s == "validation") return SplitRole::kValidation;
  if (s == "test") return SplitRole::kTest;
  throw Error("unknown split role: " + std::string(s));
}

inline double measured_match_ratio(std::span<const OfferPair> pairs) {
  if (pairs.empty()) return 0.0;
  const auto m = std::count_if(pairs.begin(), pairs.end(), [](const OfferPair& p) { return p.label == Label::kMatch; });
  return static_cast<double>(m) / static_cast<double>(pairs.size());
}

inline std::map<std::string, std::size_t> language_counts(std::span<const OfferPair> pairs) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : pairs) ++counts[p.language];
  return counts;
}

struct DatasetSplit {
  SplitRole role = SplitRole::kTrainPool;
  std::vector<OfferPair> pairs;
  double match_ratio = 0.0;
  std::map<std::string, std::size_t> per_language_counts;
  std::uint64_t seed = 0;

  static DatasetSplit from_pairs(SplitRole role, std::vector<OfferPair> pairs, std::uint64_t seed) {
    DatasetSplit s;
    s.role = role;
    s.match_ratio = measured_match_ratio(pairs);
    s.per_language_counts = language_counts(pairs);
    s.pairs = std::move(pairs);
    s.seed = seed;
    return s;
  }
};

// Exactly round(size * match_ratio) matches; within each class
// round(n * corner_fraction) corner cases, the rest random. Output order is a
// seeded shuffle.
inline DatasetSplit assemble_split(std::span<const OfferPair> pos_pool, std::span<const OfferPair> neg_pool,
                                   std::size_t size, double match_ratio, double corner_fraction,
                                   std::uint64_t seed, SplitRole role = SplitRole::kTest) {
  if (match_ratio < 0.0 || match_ratio > 1.0) throw Error("assemble_split: match_ratio outside [0,1]");
  if (corner_fraction < 0.0 || corner_fraction > 1.0) throw Error("assemble_split: corner_fraction outside [0,1]");
  const auto n_match = fraction_count(size, match_ratio);
  const std::size_t n_non = size - n_match;
  const std::string tag(to_string(role));

  std::vector<OfferPair> chosen;
  chosen.reserve(size);
  const auto draw = [&](std::span<const OfferPair> pool, Label label, std::size_t n_class) {
    for (const Hardness h : {Hardness::kCornerCase, Hardness::kRandom}) {
      const std::size_t need =
          h == Hardness::kCornerCase ? fraction_count(n_class, corner_fraction) : n_class - fraction_count(n_class, corner_fraction);
      std::vector<const OfferPair*> stratum;
      for (const auto& p : pool) {
        if (p.label == label && p.hardness == h) stratum.push_back(&p);
      }
      const std::string name = std::string(to_string(label)) + "/" + std::string(to_string(h));
      if (stratum.size() < need) {
        throw Error("assemble_split: stratum " + name + " short by " + std::to_string(need - stratum.size()) +
                    " pairs (need " + std::to_string(need) + ", have " + std::to_string(stratum.size()) + ")");
      }
      std::sort(stratum.begin(), stratum.end(),
                [](const OfferPair* x, const OfferPair* y) { return x->pair_id < y->pair_id; });
      if (std::adjacent_find(stratum.begin(), stratum.end(), [](const OfferPair* x, const OfferPair* y) {
            return x->pair_id == y->pair_id;
          }) != stratum.end()) {
        throw Error("assemble_split: duplicate pair_id in stratum " + name);
      }
      CounterRng rng(seed, "split/" + tag + "/" + name);
      for (auto i : sample_indices(stratum.size(), need, rng)) chosen.push_back(*stratum[i]);
    }
  };
  draw(pos_pool, Label::kMatch, n_match);
  draw(neg_pool, Label::kNonMatch, n_non);
  CounterRng order(seed, "split/" + tag + "/order");
  shuffle(std::span<OfferPair>(chosen), order);
  return DatasetSplit::from_pairs(role, std::move(chosen), seed);
}

struct TrainingMix {
  std::string target_language;
  std::size_t n_target = 0;
  std::string auxiliary_language;
  std::size_t n_auxiliary = 0;
  std::vector<OfferPair> pairs;  // target prefix, then auxiliary prefix
  std::uint64_t seed = 0;
};

inline std::string single_language(std::span<const OfferPair> pairs, std::string_view what) {
  std::string lang;
  for (const auto& p : pairs) {
    if (lang.empty()) lang = p.language;
    if (p.language != lang) throw Error(std::string(what) + ": pool mixes languages " + lang + " and " + p.language);
  }
  return lang;
}

// Seeded order of a pool in which every prefix is class-balanced (alternating
// match / non-match) and each class alternates corner-case and random pairs.
// Prefixes of this order give the nested mixes.
inline std::vector<OfferPair> mix_order(std::span<const OfferPair> pool, std::uint64_t seed) {
  const std::string lang = single_language(pool, "mix_order");
  const auto class_order = [&](Label label) {
    std::vector<OfferPair> corner;
    std::vector<OfferPair> random;
    for (const auto& p : pool) {
      if (p.label != label) continue;
      (p.hardness == Hardness::kCornerCase ? corner : random).push_back(p);
    }
    sort_by_pair_id(corner);
    sort_by_pair_id(random);
    const std::string base = "mix/" + lang + "/" + std::string(to_string(label));
    CounterRng rc(seed, base + "/corner_case");
    CounterRng rr(seed, base + "/random");
    shuffle(std::span<OfferPair>(corner), rc);
    shuffle(std::span<OfferPair>(random), rr);
    std::vector<OfferPair> out;
    for (std::size_t i = 0; i < std::max(corner.size(), random.size()); ++i) {
      if (i < corner.size()) out.push_back(std::move(corner[i]));
      if (i < random.size()) out.push_back(std::move(random[i]));
    }
    return out;
  };
  auto matches = class_order(Label::kMatch);
  auto non = class_order(Label::kNonMatch);
  std::vector<OfferPair> out;
  out.reserve(pool.size());
  for (std::size_t i = 0; i < std::max(matches.size(), non.size()); ++i) {
    if (i < matches.size()) out.push_back(std::move(matches[i]));
    if (i < non.size()) out.push_back(std::move(non[i]));
  }
  return out;
}

inline std::vector<OfferPair> balanced_prefix(std::span<const OfferPair> pool, std::size_t n, std::uint64_t seed,
                                              std::string_view what) {
  if (n > pool.size()) {
    throw Error(std::string(what) + " pool exhausted: need " + std::to_string(n) + ", have " +
                std::to_string(pool.size()));
  }
  auto order = mix_order(pool, seed);
  order.resize(n);
  const auto m = static_cast<std::size_t>(
      std::count_if(order.begin(), order.end(), [](const OfferPair& p) { return p.label == Label::kMatch; }));
  const std::size_t non = n - m;
  if ((m > non ? m - non : non - m) > 1) {
    throw Error(std::string(what) + " pool cannot supply a class-balanced set of " + std::to_string(n));
  }
  return order;
}

// n_target target pairs plus n_aux auxiliary pairs; for a fixed seed the mix
// of smaller sizes is always a subset of the mix of larger sizes.
inline TrainingMix compose_training_mix(const DatasetSplit& target_pool, const DatasetSplit& aux_pool,
                                        std::size_t n_target, std::size_t n_aux, std::uint64_t seed) {
  TrainingMix mix;
  mix.seed = seed;
  mix.target_language = single_language(target_pool.pairs, "target");
  mix.auxiliary_language = single_language(aux_pool.pairs, "auxiliary");
  if (!mix.auxiliary_language.empty() && mix.auxiliary_language == mix.target_language) {
    throw Error("compose_training_mix: auxiliary and target pools share language " + mix.target_language);
  }
  mix.n_target = n_target;
  mix.n_auxiliary = n_aux;
  mix.pairs = balanced_prefix(target_pool.pairs, n_target, seed, "target");
  auto aux = balanced_prefix(aux_pool.pairs, n_aux, seed, "auxiliary");
  std::move(aux.begin(), aux.end(), std::back_inserter(mix.pairs));
  return mix;
}

struct CarvedMix {
  std::vector<OfferPair> train;
  std::vector<OfferPair> validation;
};

// Holds out round(fraction * n) pairs of every (language, label) stratum.
// Both parts keep the mix's relative order.
inline CarvedMix carve_validation(std::span<const OfferPair> pairs, double fraction, std::uint64_t seed) {
  std::map<std::pair<std::string, Label>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < pairs.size(); ++i) strata[{pairs[i].language, pairs[i].label}].push_back(i);
  std::vector<bool> held(pairs.size(), false);
  for (const auto& [key, idx] : strata) {
    CounterRng rng(seed, "validation/" + key.first + "/" + std::string(to_string(key.second)));
    for (auto k : sample_indices(idx.size(), fraction_count(idx.size(), fraction), rng)) held[idx[k]] = true;
  }
  CarvedMix out;
  for (std::size_t i = 0; i < pairs.size(); ++i) (held[i] ? out.validation : out.train).push_back(pairs[i]);
  return out;
}

struct LeakageViolation {
  std::string test_pair_id;
  std::vector<std::string> reasons;
};

inline std::string unordered_key(const OfferPair& p) { return make_pair_id(p.offer_a, p.offer_b); }

// Every test pair whose pair_id or unordered offer pair also occurs in train.
inline std::vector<LeakageViolation> leakage_check(std::span<const OfferPair> train, std::span<const OfferPair> test) {
  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> keys;
  for (const auto& p : train) {
    ids.insert(p.pair_id);
    keys.insert(unordered_key(p));
  }
  std::vector<LeakageViolation> out;
  for (const auto& p : test) {
    LeakageViolation v{p.pair_id, {}};
    if (ids.count(p.pair_id)) v.reasons.emplace_back("shared pair_id");
    if (keys.count(unordered_key(p))) v.reasons.emplace_back("shared offer pair");
    if (!v.reasons.empty()) out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pair files

inline Json pair_to_json(const OfferPair& p) {
  Json j;
  j["pair_id"] = p.pair_id;
  j["offer_a"] = p.offer_a;
  j["offer_b"] = p.offer_b;
  j["label"] = to_string(p.label);
  j["hardness"] = to_string(p.hardness);
  j["similarity"] = p.similarity;
  j["language"] = p.language;
  return j;
}

inline OfferPair pair_from_json(const Json& j) {
  OfferPair p;
  p.pair_id = j.at("pair_id").get<std::string>();
  p.offer_a = j.at("offer_a").get<std::string>();
  p.offer_b = j.at("offer_b").get<std::string>();
  p.label = parse_label(j.at("label").get<std::string>());
  p.hardness = parse_hardness(j.at("hardness").get<std::string>());
  p.similarity = j.at("similarity").get<double>();
  p.language = j.at("language").get<std::string>();
  return p;
}

inline void write_pairs(std::ostream& out, std::span<const OfferPair> pairs) {
  for (const auto& p : pairs) out << pair_to_json(p).dump() << '\n';
}

inline std::vector<OfferPair> read_pairs(std::istream& in) {
  std::vector<OfferPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      pairs.push_back(pair_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw Error("pair file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

inline Json split_manifest(const DatasetSplit& s, std::string_view corpus_digest) {
  std::map<std::string, std::size_t> by_label;
  std::map<std::string, std::size_t> by_hardness;
  for (const auto& p : s.pairs) {
    ++by_label[std::string(to_string(p.label))];
    ++by_hardness[std::string(to_string(p.hardness))];
  }
  Json j;
  j["role"] = to_string(s.role);
  j["seed"] = s.seed;
  j["size"] = s.pairs.size();
  j["match_ratio"] = s.match_ratio;
  j["counts"]["by_label"] = by_label;
  j["counts"]["by_language"] = s.per_language_counts;
  j["counts"]["by_hardness"] = by_hardness;
  j["source_corpus_digest"] = corpus_digest;
  return j;
}

}  // namespace offermatch
