#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "offermatch/offer.hpp"
#include "offermatch/random.hpp"

namespace offermatch::synthetic {

// Product offers in several languages. Products are grouped into families
// that share brand and line words, so neighbouring clusters are similar.
struct CorpusSpec {
  std::vector<std::string> languages = {"en", "de"};
  std::size_t products = 12;
  std::size_t families = 4;
  std::size_t min_offers = 2;  // per product and language
  std::size_t max_offers = 3;
  std::size_t shops = 6;
  double mpn_fraction = 0.5;         // products that carry an MPN
  double id_in_title_fraction = 0.2;  // offers that repeat an identifier in the title
  double no_id_fraction = 0.0;       // offers published without any identifier
  std::size_t seed_products = 0;     // first products marked as seed products
  std::uint64_t seed = 7;
};

inline constexpr std::array<std::string_view, 12> kBrands = {"acmetec", "borvik",  "cantara", "dellmor",
                                                            "evonix",  "fjordal", "gravion", "helmar",
                                                            "ivoria",  "jasker",  "kolbrin", "lumetra"};
inline constexpr std::array<std::string_view, 10> kLines = {"pro", "max", "lite", "neo", "core",
                                                           "flex", "prime", "nova", "edge", "zen"};
inline constexpr std::array<std::string_view, 8> kKinds = {"headphones", "monitor", "keyboard", "router",
                                                          "camera",     "drive",   "speaker",  "charger"};
inline constexpr std::array<std::string_view, 6> kCapacities = {"16gb", "32gb", "64gb", "128gb", "256gb", "512gb"};

struct LanguageWords {
  std::array<std::string_view, 5> colors;
  std::array<std::string_view, 8> filler;
};

inline const LanguageWords& words_for(std::string_view lang) {
  static const LanguageWords en{{"black", "white", "silver", "blue", "red"},
                                {"wireless", "new", "original", "fast", "shipping", "warranty", "compact", "quality"}};
  static const LanguageWords de{{"schwarz", "weiss", "silber", "blau", "rot"},
                                {"kabellos", "neu", "original", "schnell", "versand", "garantie", "kompakt",
                                 "qualitaet"}};
  static const LanguageWords fr{{"noir", "blanc", "argent", "bleu", "rouge"},
                                {"sans", "fil", "neuf", "rapide", "livraison", "garantie", "compact", "qualite"}};
  if (lang == "de") return de;
  if (lang == "fr") return fr;
  return en;
}

// 13-digit GTIN with a valid check digit.
inline std::string make_gtin13(CounterRng& rng) {
  std::string d = "4";
  for (int i = 0; i < 11; ++i) d.push_back(static_cast<char>('0' + rng.below(10)));
  int sum = 0;
  // Weights over the 14-digit padded form: position 0 (the pad) has weight 3.
  for (std::size_t i = 0; i < 12; ++i) sum += (i % 2 == 0 ? 1 : 3) * (d[i] - '0');
  d.push_back(static_cast<char>('0' + (10 - sum % 10) % 10));
  return d;
}

struct Product {
  std::string gtin;
  std::string mpn;  // empty when the product has none
  std::string brand;
  std::string line;
  std::string kind;
  std::string model;
  std::size_t capacity = 0;
  std::size_t color = 0;
};

inline std::vector<Product> make_products(const CorpusSpec& spec) {
  std::vector<Product> out;
  for (std::size_t p = 0; p < spec.products; ++p) {
    CounterRng rng(spec.seed, "synthetic/product/" + std::to_string(p));
    const std::size_t family = p % std::max<std::size_t>(spec.families, 1);
    Product prod;
    prod.gtin = make_gtin13(rng);
    prod.brand = std::string(kBrands[family % kBrands.size()]);
    prod.line = std::string(kLines[(family / kBrands.size() + family) % kLines.size()]);
    prod.kind = std::string(kKinds[family % kKinds.size()]);
    prod.model = "x" + std::to_string(1000 + p * 7 + rng.below(7));
    prod.capacity = rng.below(kCapacities.size());
    prod.color = rng.below(5);
    if (rng.unit() < spec.mpn_fraction) {
      prod.mpn = "MP-" + std::to_string(10000 + p) + "/" + std::string(1, static_cast<char>('A' + rng.below(26)));
    }
    out.push_back(std::move(prod));
  }
  return out;
}

inline std::vector<Offer> make_corpus(const CorpusSpec& spec) {
  const auto products = make_products(spec);
  std::vector<Offer> offers;
  std::map<std::size_t, std::size_t> per_shop;
  for (std::size_t p = 0; p < products.size(); ++p) {
    const auto& prod = products[p];
    for (const auto& lang : spec.languages) {
      CounterRng rng(spec.seed, "synthetic/offers/" + std::to_string(p) + "/" + lang);
      const auto& w = words_for(lang);
      const auto n = spec.min_offers + rng.below(spec.max_offers - spec.min_offers + 1);
      for (std::size_t k = 0; k < n; ++k) {
        const auto shop = static_cast<std::size_t>(rng.below(spec.shops));
        Offer o;
        o.language = lang;
        o.source_host = "shop" + std::to_string(shop) + ".example";
        o.offer_id = o.source_host + "/" + lang + "/" + std::to_string(per_shop[shop]++);
        std::string title = prod.brand + " " + prod.line + " " + prod.kind + " " + prod.model;
        if (rng.unit() < 0.8) title += " " + std::string(kCapacities[prod.capacity]);
        if (rng.unit() < 0.7) title += " " + std::string(w.colors[prod.color]);
        title += " " + std::string(w.filler[rng.below(w.filler.size())]);
        std::string desc;
        for (int i = 0; i < 3; ++i) desc += std::string(w.filler[rng.below(w.filler.size())]) + " ";
        desc += prod.kind + " " + std::string(w.colors[prod.color]);

        const bool no_id = rng.unit() < spec.no_id_fraction;
        if (!no_id) {
          switch (rng.below(3)) {
            case 0: o.gtin = prod.gtin; break;
            case 1: o.gtin = "0" + prod.gtin; break;
            default: o.ean = prod.gtin; break;
          }
          if (!prod.mpn.empty()) o.mpn = rng.below(2) ? prod.mpn : ascii_lower(prod.mpn);
          if (rng.unit() < spec.id_in_title_fraction) title += " " + (prod.mpn.empty() ? prod.gtin : prod.mpn);
        }
        o.title = title;
        o.description = desc;
        if (p < spec.seed_products) o.seed_product = "product-" + std::to_string(p);
        offers.push_back(std::move(o));
      }
    }
  }
  std::sort(offers.begin(), offers.end(), [](const Offer& a, const Offer& b) { return a.offer_id < b.offer_id; });
  return offers;
}

}  // namespace offermatch::synthetic
