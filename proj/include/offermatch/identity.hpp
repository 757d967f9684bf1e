#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "offermatch/common.hpp"
#include "offermatch/offer.hpp"
#include "offermatch/union_find.hpp"

namespace offermatch {

enum class RawIdKind { kGtin, kEan, kMpn };

struct NormalizedId {
  enum class Kind { kGtin, kMpn };

  Kind kind = Kind::kGtin;
  std::string value;

  // "gtin:00000000000000", "mpn:mqad2lla"
  std::string key() const { return (kind == Kind::kGtin ? "gtin:" : "mpn:") + value; }

  auto operator<=>(const NormalizedId&) const = default;
};

struct Normalization {
  std::optional<NormalizedId> id;
  std::string rejection;  // empty when accepted

  bool ok() const { return id.has_value(); }
};

namespace detail {

inline bool gtin_checksum_ok(std::string_view digits14) {
  int sum = 0;
  for (std::size_t i = 0; i < 13; ++i) {
    const int d = digits14[i] - '0';
    sum += (i % 2 == 0) ? 3 * d : d;
  }
  return (10 - sum % 10) % 10 == digits14[13] - '0';
}

}  // namespace detail

// GTIN and EAN share one 14-digit space; MPNs are lowercased and stripped of
// separators. A rejection makes the identifier unusable, not the offer.
inline Normalization normalize_identifier(std::string_view raw, RawIdKind kind) {
  if (trim(raw).empty()) return {std::nullopt, "empty identifier"};
  if (kind == RawIdKind::kMpn) {
    std::string v;
    bool numeric = true;
    for (unsigned char c : raw) {
      if (std::isalnum(c)) {
        v.push_back(static_cast<char>(std::tolower(c)));
        numeric = numeric && std::isdigit(c);
      } else if (c >= 0x80) {
        return {std::nullopt, "non-ascii MPN"};
      }
    }
    if (v.size() < 4) return {std::nullopt, "too-short MPN"};
    if (numeric && v.size() < 6) return {std::nullopt, "numeric-only short MPN"};
    return {NormalizedId{NormalizedId::Kind::kMpn, std::move(v)}, {}};
  }
  std::string digits;
  for (char c : raw) {
    if (c >= '0' && c <= '9') digits.push_back(c);
  }
  const auto n = digits.size();
  if (n != 8 && n != 12 && n != 13 && n != 14) return {std::nullopt, "bad length"};
  digits.insert(0, 14 - n, '0');
  if (!detail::gtin_checksum_ok(digits)) return {std::nullopt, "failed checksum"};
  return {NormalizedId{NormalizedId::Kind::kGtin, std::move(digits)}, {}};
}

struct RawIdentifier {
  RawIdKind kind;
  std::string_view field;
  const std::string* value;
};

inline std::vector<RawIdentifier> raw_identifiers(const Offer& o) {
  std::vector<RawIdentifier> ids;
  if (o.gtin) ids.push_back({RawIdKind::kGtin, "gtin", &*o.gtin});
  if (o.ean) ids.push_back({RawIdKind::kEan, "ean", &*o.ean});
  if (o.mpn) ids.push_back({RawIdKind::kMpn, "mpn", &*o.mpn});
  return ids;
}

// Accepted normalized ids of an offer, sorted and deduplicated.
inline std::vector<NormalizedId> normalized_ids(const Offer& o) {
  std::set<NormalizedId> ids;
  for (const auto& r : raw_identifiers(o)) {
    if (auto n = normalize_identifier(*r.value, r.kind); n.ok()) ids.insert(*n.id);
  }
  return {ids.begin(), ids.end()};
}

struct ProductCluster {
  std::string cluster_id;                // smallest member offer_id
  std::vector<std::string> member_offers;  // sorted
  std::vector<NormalizedId> ids;           // sorted
  std::map<std::string, std::vector<std::string>> language_partition;

  bool operator==(const ProductCluster&) const = default;
};

struct ClusterResult {
  std::vector<ProductCluster> clusters;
  std::vector<IngestError> skipped;  // offer_id + reason
};

// Connected components of the graph linking offers that share a normalized
// identifier. Output is independent of input order.
inline ClusterResult cluster_offers(const std::vector<Offer>& input) {
  std::vector<const Offer*> offers;
  offers.reserve(input.size());
  for (const auto& o : input) offers.push_back(&o);
  std::sort(offers.begin(), offers.end(),
            [](const Offer* a, const Offer* b) { return a->offer_id < b->offer_id; });

  ClusterResult out;
  std::vector<const Offer*> usable;
  std::vector<std::vector<NormalizedId>> usable_ids;
  for (const auto* o : offers) {
    std::vector<std::string> rejections;
    for (const auto& r : raw_identifiers(*o)) {
      auto n = normalize_identifier(*r.value, r.kind);
      if (!n.ok()) rejections.push_back(std::string(r.field) + " rejected: " + n.rejection);
    }
    auto ids = normalized_ids(*o);
    if (ids.empty()) {
      std::string reason = "no usable identifier";
      for (const auto& r : rejections) reason += "; " + r;
      out.skipped.push_back({o->offer_id, reason});
      continue;
    }
    usable.push_back(o);
    usable_ids.push_back(std::move(ids));
  }

  UnionFind uf(usable.size());
  std::unordered_map<std::string, std::size_t> first_holder;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    for (const auto& id : usable_ids[i]) {
      auto [it, inserted] = first_holder.emplace(id.key(), i);
      if (!inserted) uf.unite(it->second, i);
    }
  }

  // Usable offers are already in offer_id order, so the first member seen
  // for each root is the cluster's smallest offer_id.
  std::map<std::size_t, std::size_t> root_to_cluster;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const auto root = uf.find(i);
    auto [it, inserted] = root_to_cluster.emplace(root, out.clusters.size());
    if (inserted) {
      ProductCluster c;
      c.cluster_id = usable[i]->offer_id;
      out.clusters.push_back(std::move(c));
    }
    auto& c = out.clusters[it->second];
    c.member_offers.push_back(usable[i]->offer_id);
    c.language_partition[usable[i]->language].push_back(usable[i]->offer_id);
    c.ids.insert(c.ids.end(), usable_ids[i].begin(), usable_ids[i].end());
  }
  for (auto& c : out.clusters) {
    std::sort(c.ids.begin(), c.ids.end());
    c.ids.erase(std::unique(c.ids.begin(), c.ids.end()), c.ids.end());
  }
  std::sort(out.clusters.begin(), out.clusters.end(),
            [](const ProductCluster& a, const ProductCluster& b) { return a.cluster_id < b.cluster_id; });
  return out;
}

inline Json cluster_to_json(const ProductCluster& c) {
  Json j;
  j["cluster_id"] = c.cluster_id;
  j["offer_ids"] = c.member_offers;
  Json ids = Json::array();
  for (const auto& id : c.ids) ids.push_back(id.key());
  j["normalized_ids"] = std::move(ids);
  return j;
}

}  // namespace offermatch
