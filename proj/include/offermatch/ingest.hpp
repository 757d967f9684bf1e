#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "offermatch/common.hpp"
#include "offermatch/html.hpp"
#include "offermatch/offer.hpp"
#include "offermatch/parallel.hpp"

namespace offermatch {

enum class InputFormat { kJsonLdHtml, kMicrodataHtml, kOfferFeed };

inline std::string_view to_string(InputFormat f) {
  switch (f) {
    case InputFormat::kJsonLdHtml: return "jsonld_html";
    case InputFormat::kMicrodataHtml: return "microdata_html";
    case InputFormat::kOfferFeed: return "offer_feed";
  }
  return "";
}

inline InputFormat parse_input_format(std::string_view s) {
  if (s == "jsonld_html") return InputFormat::kJsonLdHtml;
  if (s == "microdata_html") return InputFormat::kMicrodataHtml;
  if (s == "offer_feed") return InputFormat::kOfferFeed;
  throw Error("unknown input format: " + std::string(s));
}

struct RawDocument {
  std::string doc_id;
  std::string source_host;
  std::string body;
  InputFormat format_hint = InputFormat::kJsonLdHtml;
};

struct IngestResult {
  std::vector<Offer> offers;
  std::vector<IngestError> errors;
};

namespace detail {

inline std::optional<std::string> optional_field(const std::string& value) {
  auto t = collapse_whitespace(value);
  if (t.empty()) return std::nullopt;
  return t;
}

// Shared post-processing for every ingest route: whitespace collapsing,
// language normalisation and invariant validation.
inline void accept_candidate(Offer candidate, const std::string& input_ref, IngestResult& out) {
  candidate.title = collapse_whitespace(candidate.title);
  candidate.description = collapse_whitespace(candidate.description);
  candidate.language = ascii_lower(trim(candidate.language));
  auto checked = validate_offer(candidate);
  if (!checked.ok()) {
    for (auto& e : checked.errors) out.errors.push_back({input_ref, std::move(e)});
    return;
  }
  out.offers.push_back(std::move(*checked.value));
}

}  // namespace detail

// Parses a line-delimited JSON offer feed. Invalid records go to the error
// channel with their line number; blank lines are not records.
inline IngestResult parse_offer_feed(std::istream& in, std::string_view source = "feed") {
  if (!in) throw Error("unreadable input: " + std::string(source));
  static constexpr std::string_view kRequired[] = {"offer_id", "language", "source_host", "title"};
  static constexpr std::string_view kOptional[] = {"description", "gtin", "ean", "mpn",
                                                   "seed_product"};
  IngestResult out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string ref = std::string(source) + ":" + std::to_string(line_no);
    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const Json::parse_error& e) {
      out.errors.push_back({ref, std::string("malformed record: ") + e.what()});
      continue;
    }
    if (!rec.is_object()) {
      out.errors.push_back({ref, "malformed record: not a JSON object"});
      continue;
    }
    std::optional<std::string> problem;
    std::map<std::string_view, std::string> fields;
    for (auto key : kRequired) {
      const auto it = rec.find(std::string(key));
      if (it == rec.end() || it->is_null()) {
        problem = "missing required field: " + std::string(key);
        break;
      }
      if (!it->is_string()) {
        problem = "field must be a string: " + std::string(key);
        break;
      }
      fields[key] = it->get<std::string>();
    }
    if (!problem) {
      for (auto key : kOptional) {
        const auto it = rec.find(std::string(key));
        if (it == rec.end() || it->is_null()) continue;
        if (!it->is_string()) {
          problem = "field must be a string: " + std::string(key);
          break;
        }
        fields[key] = it->get<std::string>();
      }
    }
    if (!problem) {
      const auto lang = ascii_lower(trim(fields["language"]));
      if (!is_language_code(lang)) problem = "unknown language code: " + fields["language"];
    }
    if (problem) {
      out.errors.push_back({ref, *problem});
      continue;
    }
    Offer o;
    o.offer_id = trim(fields["offer_id"]);
    o.language = fields["language"];
    o.source_host = trim(fields["source_host"]);
    o.title = fields["title"];
    o.description = fields["description"];
    if (fields.count("gtin")) o.gtin = detail::optional_field(fields["gtin"]);
    if (fields.count("ean")) o.ean = detail::optional_field(fields["ean"]);
    if (fields.count("mpn")) o.mpn = detail::optional_field(fields["mpn"]);
    if (fields.count("seed_product")) o.seed_product = detail::optional_field(fields["seed_product"]);
    detail::accept_candidate(std::move(o), ref, out);
  }
  if (in.bad()) throw Error("unreadable input: " + std::string(source));
  return out;
}

// Reads an offer file written by write_offers. Any invalid record is fatal.
inline std::vector<Offer> read_offers(std::istream& in, std::string_view source = "offers") {
  auto result = parse_offer_feed(in, source);
  if (!result.errors.empty()) {
    throw Error(result.errors.front().input_ref + ": " + result.errors.front().reason);
  }
  return std::move(result.offers);
}

namespace markup {

// Property bag of one schema.org entity, independent of the syntax it came from.
struct Entity {
  std::string type;
  std::vector<std::pair<std::string, std::string>> props;
  std::vector<std::pair<std::string, Entity>> children;

  const std::string* get(std::string_view key) const {
    for (const auto& [k, v] : props) {
      if (k == key) return &v;
    }
    return nullptr;
  }
};

// "https://schema.org/Product" -> "Product"
inline std::string local_type_name(std::string_view t) {
  const auto cut = t.find_last_of("/:#");
  return std::string(trim(cut == std::string_view::npos ? t : t.substr(cut + 1)));
}

inline bool is_product_type(std::string_view t) {
  const auto name = local_type_name(t);
  return name == "Product" || name == "IndividualProduct" || name == "ProductModel";
}

inline bool is_offer_type(std::string_view t) { return local_type_name(t) == "Offer"; }

inline bool is_target(const Entity& e) { return is_product_type(e.type) || is_offer_type(e.type); }

// "de-DE" -> "de"
inline std::string primary_language(std::string_view tag) {
  auto t = ascii_lower(trim(tag));
  const auto cut = t.find_first_of("-_");
  return cut == std::string::npos ? t : t.substr(0, cut);
}

inline std::optional<std::string> first_prop(const Entity& e, std::span<const std::string_view> keys) {
  for (auto k : keys) {
    if (const auto* v = e.get(k); v && !trim(*v).empty()) return *v;
  }
  return std::nullopt;
}

inline constexpr std::array<std::string_view, 5> kGtinKeys = {"gtin13", "gtin", "gtin14", "gtin12", "gtin8"};

// Maps one Product/Offer entity to an Offer; identifiers and the title may
// come from nested offers (Product) or itemOffered (Offer).
inline void entity_to_offer(const Entity& e, const RawDocument& doc, std::size_t ordinal,
                            const std::optional<std::string>& page_language, IngestResult& out) {
  const std::string ref = doc.doc_id + "#" + std::to_string(ordinal);
  std::vector<const Entity*> scope{&e};
  for (const auto& [key, child] : e.children) {
    if (key == "offers" || key == "itemOffered") scope.push_back(&child);
  }
  const auto lookup_any = [&](std::span<const std::string_view> keys) -> std::optional<std::string> {
    for (const auto* s : scope) {
      if (auto v = first_prop(*s, keys)) return v;
    }
    return std::nullopt;
  };
  const auto lookup = [&](std::string_view key) { return lookup_any(std::span(&key, 1)); };

  auto name = lookup("name");
  if (!name || collapse_whitespace(html::decode_entities(*name)).empty()) {
    out.errors.push_back({ref, "missing required field: title"});
    return;
  }
  Offer o;
  o.offer_id = ref;
  o.source_host = doc.source_host;
  o.title = html::decode_entities(*name);
  o.description = html::decode_entities(lookup("description").value_or(""));
  if (auto v = lookup_any(kGtinKeys)) o.gtin = detail::optional_field(*v);
  if (auto v = lookup("mpn")) o.mpn = detail::optional_field(*v);
  if (auto v = lookup("inLanguage")) {
    o.language = primary_language(*v);
  } else if (page_language) {
    o.language = *page_language;
  } else {
    out.errors.push_back({ref, "no language tag on entity or page"});
    return;
  }
  detail::accept_candidate(std::move(o), ref, out);
}

inline void collect_targets(const Entity& e, std::vector<const Entity*>& found) {
  if (is_target(e)) {
    found.push_back(&e);
    return;
  }
  for (const auto& [key, child] : e.children) collect_targets(child, found);
}

inline std::optional<std::string> scalar_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  if (v.is_object()) {
    if (auto it = v.find("@value"); it != v.end()) return scalar_text(*it);
  }
  if (v.is_array()) {
    for (const auto& item : v) {
      if (auto s = scalar_text(item)) return s;
    }
  }
  return std::nullopt;
}

inline std::string json_type(const Json& obj) {
  const auto it = obj.find("@type");
  if (it == obj.end()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_array()) {
    for (const auto& t : *it) {
      if (t.is_string() && (is_product_type(t.get<std::string>()) || is_offer_type(t.get<std::string>()))) {
        return t.get<std::string>();
      }
    }
    for (const auto& t : *it) {
      if (t.is_string()) return t.get<std::string>();
    }
  }
  return {};
}

inline Entity json_to_entity(const Json& node) {
  Entity e;
  if (node.is_array()) {
    for (const auto& item : node) {
      if (item.is_object() || item.is_array()) e.children.emplace_back("", json_to_entity(item));
    }
    return e;
  }
  if (!node.is_object()) return e;
  e.type = json_type(node);
  for (const auto& [key, value] : node.items()) {
    if (key == "@type") continue;
    if (value.is_object()) {
      if (value.contains("@value")) {
        if (auto s = scalar_text(value)) e.props.emplace_back(key, *s);
      } else {
        e.children.emplace_back(key, json_to_entity(value));
      }
    } else if (value.is_array()) {
      bool has_objects = false;
      for (const auto& item : value) {
        if (item.is_object() && !item.contains("@value")) {
          e.children.emplace_back(key, json_to_entity(item));
          has_objects = true;
        } else if (item.is_array()) {
          e.children.emplace_back(key, json_to_entity(item));
          has_objects = true;
        }
      }
      if (!has_objects) {
        if (auto s = scalar_text(value)) e.props.emplace_back(key, *s);
      }
    } else if (auto s = scalar_text(value)) {
      e.props.emplace_back(key, *s);
    }
  }
  return e;
}

inline std::optional<std::string> page_language(const std::vector<html::Token>& tokens) {
  for (const auto& t : tokens) {
    if (t.kind == html::Token::Kind::kStartTag && t.name == "html") {
      for (auto key : {"lang", "xml:lang"}) {
        if (const auto* v = t.attr(key); v && !trim(*v).empty()) return primary_language(*v);
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

inline std::vector<Entity> jsonld_entities(const std::vector<html::Token>& tokens, const RawDocument& doc,
                                           IngestResult& out) {
  std::vector<Entity> roots;
  std::size_t block = 0;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.kind != html::Token::Kind::kStartTag || t.name != "script") continue;
    const auto* type = t.attr("type");
    if (!type || ascii_lower(trim(type->substr(0, type->find(';')))) != "application/ld+json") continue;
    ++block;
    if (tokens[i + 1].kind != html::Token::Kind::kRawText) continue;
    try {
      roots.push_back(json_to_entity(Json::parse(tokens[i + 1].text)));
    } catch (const Json::parse_error& e) {
      out.errors.push_back({doc.doc_id + "#ld" + std::to_string(block),
                            std::string("unparseable JSON-LD block: ") + e.what()});
    }
  }
  return roots;
}

inline std::vector<Entity> microdata_entities(const std::vector<html::Token>& tokens) {
  struct Item {
    Entity entity;
    std::optional<std::pair<std::size_t, std::string>> owner;  // (parent item, itemprop)
  };
  struct Open {
    std::string name;
    std::optional<std::size_t> scope;  // innermost item for children
    std::vector<std::string> captures;  // itemprop names collecting text
    std::optional<std::size_t> capture_owner;
    std::string text;
  };
  std::vector<Item> items;
  std::vector<Open> stack;
  const auto current_scope = [&]() -> std::optional<std::size_t> {
    return stack.empty() ? std::nullopt : stack.back().scope;
  };
  const auto split_props = [](const std::string& s) {
    std::vector<std::string> names;
    std::istringstream in(s);
    for (std::string w; in >> w;) names.push_back(w);
    return names;
  };
  const auto close = [&](Open& el) {
    if (!el.capture_owner) return;
    const auto value = collapse_whitespace(el.text);
    for (const auto& p : el.captures) items[*el.capture_owner].entity.props.emplace_back(p, value);
  };

  for (const auto& t : tokens) {
    switch (t.kind) {
      case html::Token::Kind::kStartTag: {
        const auto owner = current_scope();
        const auto* itemprop = t.attr("itemprop");
        const auto props = itemprop ? split_props(*itemprop) : std::vector<std::string>{};
        Open el;
        el.name = t.name;
        el.scope = owner;
        if (t.has_attr("itemscope")) {
          Item item;
          if (const auto* type = t.attr("itemtype")) {
            const auto types = split_props(*type);
            if (!types.empty()) item.entity.type = types.front();
          }
          if (owner && !props.empty()) item.owner = std::make_pair(*owner, props.front());
          items.push_back(std::move(item));
          el.scope = items.size() - 1;
        } else if (owner && !props.empty()) {
          std::optional<std::string> literal;
          if (const auto* c = t.attr("content")) {
            literal = *c;
          } else if ((t.name == "a" || t.name == "link") && t.has_attr("href")) {
            literal = *t.attr("href");
          } else if ((t.name == "img" || t.name == "source") && t.has_attr("src")) {
            literal = *t.attr("src");
          } else if (t.name == "meta") {
            literal = std::string();
          }
          if (literal) {
            const auto value = collapse_whitespace(*literal);
            for (const auto& p : props) items[*owner].entity.props.emplace_back(p, value);
          } else {
            el.captures = props;
            el.capture_owner = owner;
          }
        }
        if (!html::is_void_element(t.name) && !t.self_closing) stack.push_back(std::move(el));
        break;
      }
      case html::Token::Kind::kEndTag: {
        const auto it = std::find_if(stack.rbegin(), stack.rend(),
                                     [&](const Open& el) { return el.name == t.name; });
        if (it == stack.rend()) break;
        const auto keep = static_cast<std::size_t>(stack.rend() - it) - 1;
        while (stack.size() > keep) {
          close(stack.back());
          stack.pop_back();
        }
        break;
      }
      case html::Token::Kind::kText:
        for (auto& el : stack) {
          if (el.capture_owner) el.text += t.text;
        }
        break;
      case html::Token::Kind::kRawText:
        break;
    }
  }
  while (!stack.empty()) {
    close(stack.back());
    stack.pop_back();
  }

  // Attach children bottom-up, so nested items are complete when copied.
  for (std::size_t i = items.size(); i-- > 0;) {
    if (items[i].owner) {
      auto& [parent, prop] = *items[i].owner;
      items[parent].entity.children.emplace(items[parent].entity.children.begin(), prop,
                                            items[i].entity);
    }
  }
  std::vector<Entity> roots;
  for (auto& item : items) {
    if (!item.owner) roots.push_back(std::move(item.entity));
  }
  return roots;
}

}  // namespace markup

// Extracts one Offer per schema.org Product/Offer entity that yields a title.
inline IngestResult extract_offers_from_markup(const RawDocument& doc) {
  if (doc.format_hint == InputFormat::kOfferFeed) {
    throw Error("extract_offers_from_markup: " + doc.doc_id + " is not an HTML document");
  }
  IngestResult out;
  const auto tokens = html::tokenize(doc.body);
  const auto lang = markup::page_language(tokens);
  const auto roots = doc.format_hint == InputFormat::kJsonLdHtml
                         ? markup::jsonld_entities(tokens, doc, out)
                         : markup::microdata_entities(tokens);
  std::vector<const markup::Entity*> targets;
  for (const auto& r : roots) markup::collect_targets(r, targets);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    markup::entity_to_offer(*targets[i], doc, i + 1, lang, out);
  }
  return out;
}

// Page-per-file layout: <root>/<host>/.../<page>.html. The first directory
// below the root names the source host.
inline std::vector<RawDocument> load_html_tree(const std::filesystem::path& root, InputFormat format) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    files.push_back(root);
  } else if (fs::is_directory(root)) {
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (!entry.is_regular_file()) continue;
      const auto ext = ascii_lower(entry.path().extension().string());
      if (ext == ".html" || ext == ".htm") files.push_back(entry.path());
    }
  } else {
    throw Error("input path not found: " + root.string());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawDocument> docs;
  for (const auto& f : files) {
    RawDocument d;
    const auto rel = fs::is_directory(root) ? f.lexically_relative(root) : f.filename();
    d.doc_id = rel.generic_string();
    d.source_host = std::distance(rel.begin(), rel.end()) > 1 ? rel.begin()->string()
                                                                : root.filename().string();
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error("unreadable input: " + f.string());
    d.body.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    d.format_hint = format;
    docs.push_back(std::move(d));
  }
  return docs;
}

// Parses documents on `workers` threads and concatenates per-document
// results in document order.
inline IngestResult extract_all(const std::vector<RawDocument>& docs, std::size_t workers = 1) {
  std::vector<std::string_view> ids;
  for (const auto& d : docs) ids.push_back(d.doc_id);
  std::sort(ids.begin(), ids.end());
  if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
    throw Error("duplicate doc_id: " + std::string(*dup));
  }
  std::vector<IngestResult> parts(docs.size());
  parallel_for(docs.size(), workers, [&](std::size_t i) {
    if (docs[i].doc_id.empty()) throw Error("document with empty doc_id");
    if (docs[i].body.empty()) {
      parts[i].errors.push_back({docs[i].doc_id, "empty document body"});
      return;
    }
    parts[i] = extract_offers_from_markup(docs[i]);
  });
  IngestResult out;
  for (auto& p : parts) {
    std::move(p.offers.begin(), p.offers.end(), std::back_inserter(out.offers));
    std::move(p.errors.begin(), p.errors.end(), std::back_inserter(out.errors));
  }
  return out;
}

// Final handoff: sort by offer_id and reject duplicate ids.
inline void finalize_offers(std::vector<Offer>& offers) {
  std::sort(offers.begin(), offers.end(),
            [](const Offer& a, const Offer& b) { return a.offer_id < b.offer_id; });
  const auto dup = std::adjacent_find(offers.begin(), offers.end(), [](const Offer& a, const Offer& b) {
    return a.offer_id == b.offer_id;
  });
  if (dup != offers.end()) throw Error("duplicate offer_id: " + dup->offer_id);
}

}  // namespace offermatch
