#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "offermatch/common.hpp"
#include "offermatch/digest.hpp"
#include "offermatch/offer.hpp"

namespace offermatch {

// Lowercases and splits on every non-alphanumeric code point.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = utf8::decode(text, pos);
    if (utf8::is_word_char(cp)) {
      utf8::append(cur, utf8::to_lower(cp));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Text of an offer as both the matchers and corner-case mining see it.
inline std::string offer_text(const Offer& o) { return collapse_whitespace(o.title + " " + o.description); }

struct SparseVector {
  std::vector<std::pair<std::uint32_t, double>> entries;  // strictly increasing index
  std::size_t dimension = 0;

  bool empty() const { return entries.empty(); }

  bool valid() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].first >= dimension || entries[i].second < 0.0) return false;
      if (i > 0 && entries[i - 1].first >= entries[i].first) return false;
    }
    return true;
  }

  bool operator==(const SparseVector&) const = default;
};

// Binary indicator vector over sorted, deduplicated indices.
inline SparseVector indicator(std::vector<std::uint32_t> indices, std::size_t dimension) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  SparseVector v;
  v.dimension = dimension;
  v.entries.reserve(indices.size());
  for (auto i : indices) v.entries.emplace_back(i, 1.0);
  return v;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  // Terms must already be in index order.
  Vocabulary(std::vector<std::string> terms, std::string fingerprint)
      : terms_(std::move(terms)), fingerprint_(std::move(fingerprint)) {
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (!index_.emplace(terms_[i], static_cast<std::uint32_t>(i)).second) {
        throw Error("vocabulary: duplicate term " + terms_[i]);
      }
    }
  }

  std::size_t size() const { return terms_.size(); }
  const std::string& fingerprint() const { return fingerprint_; }
  const std::vector<std::string>& terms() const { return terms_; }

  std::optional<std::uint32_t> find(std::string_view term) const {
    const auto it = index_.find(std::string(term));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const Vocabulary& other) const {
    return terms_ == other.terms_ && fingerprint_ == other.fingerprint_;
  }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::string fingerprint_;
};

// Digest of the exact texts a vocabulary was built from.
inline std::string corpus_fingerprint(std::span<const std::string> texts) {
  Sha256 h;
  for (const auto& t : texts) h.update(t).update("\n");
  return h.hex();
}

// All tokens with document frequency >= min_df, indexed in lexicographic order.
inline Vocabulary build_vocabulary(std::span<const std::string> texts, std::size_t min_df = 2) {
  if (texts.empty()) throw Error("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> df;
  for (const auto& t : texts) {
    auto toks = tokenize(t);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (auto& tok : toks) ++df[std::move(tok)];
  }
  std::vector<std::string> terms;
  for (const auto& [term, count] : df) {
    if (count >= min_df) terms.push_back(term);
  }
  if (terms.empty()) throw Error("build_vocabulary: no term reaches document frequency " + std::to_string(min_df));
  return Vocabulary(std::move(terms), corpus_fingerprint(texts));
}

inline std::vector<std::uint32_t> vocab_indices(std::string_view text, const Vocabulary& vocab) {
  std::vector<std::uint32_t> idx;
  for (const auto& tok : tokenize(text)) {
    if (auto i = vocab.find(tok)) idx.push_back(*i);
  }
  return idx;
}

// Binary bag of words; out-of-vocabulary tokens are ignored.
inline SparseVector vectorize(std::string_view text, const Vocabulary& vocab) {
  return indicator(vocab_indices(text, vocab), vocab.size());
}

inline double dot(const SparseVector& u, const SparseVector& v) {
  double s = 0.0;
  auto a = u.entries.begin();
  auto b = v.entries.begin();
  while (a != u.entries.end() && b != v.entries.end()) {
    if (a->first < b->first) {
      ++a;
    } else if (b->first < a->first) {
      ++b;
    } else {
      s += a->second * b->second;
      ++a;
      ++b;
    }
  }
  return s;
}

inline double norm(const SparseVector& u) {
  double s = 0.0;
  for (const auto& [i, w] : u.entries) s += w * w;
  return std::sqrt(s);
}

inline double cosine_similarity(const SparseVector& u, const SparseVector& v) {
  if (u.dimension != v.dimension) {
    throw Error("cosine_similarity: dimension mismatch " + std::to_string(u.dimension) + " vs " +
                std::to_string(v.dimension));
  }
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot(u, v) / (nu * nv), 0.0, 1.0);
}

struct SerializedPair {
  std::string pair_id;
  std::string text_a;
  std::string text_b;
  Label label = Label::kNonMatch;

  bool operator==(const SerializedPair&) const = default;
};

// 1 at every vocabulary term present in both texts.
inline SparseVector cooccurrence_vector(const SerializedPair& pair, const Vocabulary& vocab) {
  const auto a = vocab_indices(pair.text_a, vocab);
  const std::unordered_set<std::uint32_t> in_a(a.begin(), a.end());
  std::vector<std::uint32_t> both;
  for (auto i : vocab_indices(pair.text_b, vocab)) {
    if (in_a.count(i)) both.push_back(i);
  }
  return indicator(std::move(both), vocab.size());
}

// Texts stay separate so the downstream tokenizer builds its own
// sequence-pair template.
inline Json serialize_pair_for_transformer(const SerializedPair& p) {
  Json j;
  j["pair_id"] = p.pair_id;
  j["text_a"] = p.text_a;
  j["text_b"] = p.text_b;
  j["label"] = to_string(p.label);
  return j;
}

inline void write_transformer_export(std::ostream& out, const std::vector<SerializedPair>& pairs) {
  for (const auto& p : pairs) out << serialize_pair_for_transformer(p).dump() << '\n';
}

inline std::vector<SerializedPair> read_transformer_export(std::istream& in) {
  std::vector<SerializedPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = Json::parse(line);
      pairs.push_back({j.at("pair_id").get<std::string>(), j.at("text_a").get<std::string>(),
                       j.at("text_b").get<std::string>(), parse_label(j.at("label").get<std::string>())});
    } catch (const Json::exception& e) {
      throw Error("transformer export line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

// Header line "#vocabulary size=<n> fingerprint=<hex>", then one term per line.
inline void write_vocabulary(std::ostream& out, const Vocabulary& v) {
  out << "#vocabulary size=" << v.size() << " fingerprint=" << v.fingerprint() << '\n';
  for (const auto& t : v.terms()) out << t << '\n';
}

inline Vocabulary read_vocabulary(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("#vocabulary size=", 0) != 0) {
    throw Error("vocabulary: missing header");
  }
  const auto fp_at = header.find(" fingerprint=");
  if (fp_at == std::string::npos) throw Error("vocabulary: missing fingerprint");
  const auto size = std::stoull(header.substr(17, fp_at - 17));
  std::string fingerprint = header.substr(fp_at + 13);
  std::vector<std::string> terms;
  for (std::string line; std::getline(in, line);) terms.push_back(line);
  if (terms.size() != size) throw Error("vocabulary: header size does not match term count");
  return Vocabulary(std::move(terms), std::move(fingerprint));
}

}  // namespace offermatch
