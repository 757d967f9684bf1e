#pragma once

#include <nlohmann/json.hpp>

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "offermatch/common.hpp"

namespace offermatch {

using Json = nlohmann::ordered_json;

struct Offer {
  std::string offer_id;
  std::string language;
  std::string source_host;
  std::string title;
  std::string description;
  std::optional<std::string> gtin;
  std::optional<std::string> ean;
  std::optional<std::string> mpn;
  std::optional<std::string> seed_product;

  // Offers without any identifier are kept in the corpus but never clustered.
  bool has_identifier() const { return gtin || ean || mpn; }

  bool operator==(const Offer&) const = default;
};

// One entry of the error channel written beside every stage output.
struct IngestError {
  std::string input_ref;
  std::string reason;

  bool operator==(const IngestError&) const = default;
};

template <class T>
struct Validated {
  std::optional<T> value;
  std::vector<std::string> errors;

  bool ok() const { return value.has_value(); }
};

// Returns the offer unchanged when every invariant holds, otherwise all
// violated invariants.
inline Validated<Offer> validate_offer(const Offer& candidate) {
  Validated<Offer> out;
  if (trim(candidate.offer_id).empty()) out.errors.emplace_back("empty offer_id");
  if (trim(candidate.title).empty()) out.errors.emplace_back("empty title");
  if (!is_language_code(candidate.language)) out.errors.emplace_back("invalid language code");
  if (out.errors.empty()) out.value = candidate;
  return out;
}

inline Json offer_to_json(const Offer& o) {
  Json j;
  j["offer_id"] = o.offer_id;
  j["language"] = o.language;
  j["source_host"] = o.source_host;
  j["title"] = o.title;
  j["description"] = o.description;
  if (o.gtin) j["gtin"] = *o.gtin;
  if (o.ean) j["ean"] = *o.ean;
  if (o.mpn) j["mpn"] = *o.mpn;
  if (o.seed_product) j["seed_product"] = *o.seed_product;
  return j;
}

inline Json error_to_json(const IngestError& e) {
  Json j;
  j["input_ref"] = e.input_ref;
  j["reason"] = e.reason;
  return j;
}

template <class T, class ToJson>
void write_jsonl(std::ostream& out, const std::vector<T>& items, ToJson&& to_json) {
  for (const auto& item : items) out << to_json(item).dump() << '\n';
}

inline void write_offers(std::ostream& out, const std::vector<Offer>& offers) {
  write_jsonl(out, offers, offer_to_json);
}

inline void write_errors(std::ostream& out, const std::vector<IngestError>& errors) {
  write_jsonl(out, errors, error_to_json);
}

}  // namespace offermatch
