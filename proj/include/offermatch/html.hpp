#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "offermatch/common.hpp"

// Minimal HTML tokenizer: enough structure to locate JSON-LD script blocks and
// Microdata itemscope/itemprop attributes in stored product pages.
namespace offermatch::html {

struct Attribute {
  std::string name;
  std::string value;
};

struct Token {
  enum class Kind { kStartTag, kEndTag, kText, kRawText };

  Kind kind = Kind::kText;
  std::string name;  // lowercased tag name for tags
  std::vector<Attribute> attrs;
  bool self_closing = false;
  std::string text;  // entity-decoded for kText, verbatim for kRawText

  const std::string* attr(std::string_view key) const {
    for (const auto& a : attrs) {
      if (a.name == key) return &a.value;
    }
    return nullptr;
  }
  bool has_attr(std::string_view key) const { return attr(key) != nullptr; }
};

namespace detail {

struct NamedEntity {
  std::string_view name;
  char32_t cp;
};

inline constexpr NamedEntity kEntities[] = {
    {"amp", '&'},      {"lt", '<'},       {"gt", '>'},       {"quot", '"'},
    {"apos", '\''},    {"nbsp", 0xA0},    {"auml", 0xE4},    {"ouml", 0xF6},
    {"uuml", 0xFC},    {"Auml", 0xC4},    {"Ouml", 0xD6},    {"Uuml", 0xDC},
    {"szlig", 0xDF},   {"eacute", 0xE9},  {"egrave", 0xE8},  {"agrave", 0xE0},
    {"ccedil", 0xE7},  {"euro", 0x20AC},  {"copy", 0xA9},    {"reg", 0xAE},
    {"trade", 0x2122}, {"ndash", 0x2013}, {"mdash", 0x2014}, {"hellip", 0x2026},
};

inline bool is_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '-' || c == '_' || c == ':' || c == '.';
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }

inline std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    bool eq = true;
    for (std::size_t k = 0; k < needle.size() && eq; ++k) {
      char c = hay[i + k];
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
      eq = c == needle[k];
    }
    if (eq) return i;
  }
  return std::string_view::npos;
}

}  // namespace detail

inline std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '&') {
      out.push_back(s[i++]);
      continue;
    }
    const auto semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out.push_back(s[i++]);
      continue;
    }
    const auto body = s.substr(i + 1, semi - i - 1);
    std::optional<char32_t> cp;
    if (body.size() > 1 && body[0] == '#') {
      const bool hex = body[1] == 'x' || body[1] == 'X';
      const auto digits = body.substr(hex ? 2 : 1);
      if (!digits.empty()) {
        try {
          std::size_t used = 0;
          const auto v = std::stoul(std::string(digits), &used, hex ? 16 : 10);
          if (used == digits.size() && v > 0 && v <= 0x10FFFF) cp = static_cast<char32_t>(v);
        } catch (const std::exception&) {
        }
      }
    } else {
      for (const auto& e : detail::kEntities) {
        if (e.name == body) cp = e.cp;
      }
    }
    if (!cp) {
      out.push_back(s[i++]);
      continue;
    }
    utf8::append(out, *cp);
    i = semi + 1;
  }
  return out;
}

inline std::vector<Token> tokenize(std::string_view doc) {
  using detail::is_name_char;
  using detail::is_space;
  std::vector<Token> tokens;
  std::string text;
  const auto flush_text = [&] {
    if (!text.empty()) {
      Token t;
      t.kind = Token::Kind::kText;
      t.text = decode_entities(text);
      tokens.push_back(std::move(t));
      text.clear();
    }
  };

  std::size_t i = 0;
  const std::size_t n = doc.size();
  while (i < n) {
    if (doc[i] != '<') {
      text.push_back(doc[i++]);
      continue;
    }
    if (doc.compare(i, 4, "<!--") == 0) {
      flush_text();
      const auto end = doc.find("-->", i + 4);
      i = end == std::string_view::npos ? n : end + 3;
      continue;
    }
    if (i + 1 < n && (doc[i + 1] == '!' || doc[i + 1] == '?')) {
      flush_text();
      const auto end = doc.find('>', i + 2);
      i = end == std::string_view::npos ? n : end + 1;
      continue;
    }
    const bool closing = i + 1 < n && doc[i + 1] == '/';
    std::size_t p = i + (closing ? 2 : 1);
    if (p >= n || !((doc[p] >= 'a' && doc[p] <= 'z') || (doc[p] >= 'A' && doc[p] <= 'Z'))) {
      text.push_back(doc[i++]);
      continue;
    }
    flush_text();
    Token tag;
    tag.kind = closing ? Token::Kind::kEndTag : Token::Kind::kStartTag;
    const std::size_t name_begin = p;
    while (p < n && is_name_char(doc[p])) ++p;
    tag.name = ascii_lower(doc.substr(name_begin, p - name_begin));

    // Attributes.
    while (p < n && doc[p] != '>') {
      if (is_space(doc[p])) {
        ++p;
        continue;
      }
      if (doc[p] == '/') {
        tag.self_closing = true;
        ++p;
        continue;
      }
      tag.self_closing = false;
      const std::size_t an = p;
      while (p < n && !is_space(doc[p]) && doc[p] != '=' && doc[p] != '>' && doc[p] != '/') ++p;
      Attribute attr;
      attr.name = ascii_lower(doc.substr(an, p - an));
      while (p < n && is_space(doc[p])) ++p;
      if (p < n && doc[p] == '=') {
        ++p;
        while (p < n && is_space(doc[p])) ++p;
        if (p < n && (doc[p] == '"' || doc[p] == '\'')) {
          const char q = doc[p++];
          const auto end = doc.find(q, p);
          const auto stop = end == std::string_view::npos ? n : end;
          attr.value = decode_entities(doc.substr(p, stop - p));
          p = stop == n ? n : stop + 1;
        } else {
          const std::size_t vb = p;
          while (p < n && !is_space(doc[p]) && doc[p] != '>') ++p;
          attr.value = decode_entities(doc.substr(vb, p - vb));
        }
      }
      if (!attr.name.empty()) tag.attrs.push_back(std::move(attr));
    }
    i = p < n ? p + 1 : n;

    const bool raw = !closing && (tag.name == "script" || tag.name == "style");
    const std::string raw_name = tag.name;
    const bool self_closing = tag.self_closing;
    tokens.push_back(std::move(tag));
    if (raw && !self_closing) {
      const auto end = detail::find_ci(doc, "</" + raw_name, i);
      const auto stop = end == std::string_view::npos ? n : end;
      Token body;
      body.kind = Token::Kind::kRawText;
      body.text = std::string(doc.substr(i, stop - i));
      tokens.push_back(std::move(body));
      i = stop;
    }
  }
  flush_text();
  return tokens;
}

inline bool is_void_element(std::string_view name) {
  static constexpr std::string_view kVoid[] = {"area", "base", "br",    "col",   "embed",
                                                "hr",   "img",  "input", "link",  "meta",
                                                "param", "source", "track", "wbr"};
  for (auto v : kVoid) {
    if (v == name) return true;
  }
  return false;
}

}  // namespace offermatch::html
