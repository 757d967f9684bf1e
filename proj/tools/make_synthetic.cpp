// Writes a synthetic multilingual offer feed for demos and tests.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "offermatch/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"offermatch-synth: synthetic offer feed generator"};
  offermatch::synthetic::CorpusSpec spec;
  std::string out = "-";
  app.add_option("--products", spec.products, "number of products");
  app.add_option("--families", spec.families, "product families sharing brand words");
  app.add_option("--min-offers", spec.min_offers, "offers per product and language, lower bound");
  app.add_option("--max-offers", spec.max_offers, "offers per product and language, upper bound");
  app.add_option("--shops", spec.shops, "number of source hosts");
  app.add_option("--languages", spec.languages, "language codes")->delimiter(',');
  app.add_option("--no-id-fraction", spec.no_id_fraction, "offers without identifiers");
  app.add_option("--id-in-title-fraction", spec.id_in_title_fraction, "offers repeating an identifier in the title");
  app.add_option("--seed-products", spec.seed_products, "products marked as seed products");
  app.add_option("--seed", spec.seed, "generator seed");
  app.add_option("--out", out, "output file, - for stdout");
  CLI11_PARSE(app, argc, argv);
  if (spec.families == 0 || spec.min_offers > spec.max_offers || spec.shops == 0) {
    std::cerr << "error: need families > 0, shops > 0 and min-offers <= max-offers\n";
    return 1;
  }

  const auto offers = offermatch::synthetic::make_corpus(spec);
  if (out == "-") {
    offermatch::write_offers(std::cout, offers);
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) {
      std::cerr << "error: cannot write " << out << "\n";
      return 1;
    }
    offermatch::write_offers(f, offers);
  }
  std::cerr << offers.size() << " offers\n";
  return 0;
}
