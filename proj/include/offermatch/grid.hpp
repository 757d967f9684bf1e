#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "offermatch/baseline.hpp"
#include "offermatch/common.hpp"
#include "offermatch/metrics.hpp"
#include "offermatch/pairs.hpp"
#include "offermatch/parallel.hpp"
#include "offermatch/text.hpp"

namespace offermatch {

// Everything a matcher sees for one (n_target, n_aux, seed) cell.
struct CellData {
  std::size_t n_target = 0;
  std::size_t n_aux = 0;
  std::uint64_t seed = 0;
  std::vector<SerializedPair> train;
  std::vector<SerializedPair> validation;
  std::vector<SerializedPair> test;
  std::filesystem::path workdir;  // private to this cell
};

class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual std::string id() const = 0;
  // Called concurrently for different cells.
  virtual MetricSet train_and_evaluate(const CellData& cell) const = 0;
};

inline std::vector<std::string> pair_texts(std::span<const SerializedPair> pairs) {
  std::vector<std::string> texts;
  texts.reserve(2 * pairs.size());
  for (const auto& p : pairs) {
    texts.push_back(p.text_a);
    texts.push_back(p.text_b);
  }
  return texts;
}

inline std::vector<Example> cooccurrence_examples(std::span<const SerializedPair> pairs, const Vocabulary& vocab) {
  std::vector<Example> ex;
  ex.reserve(pairs.size());
  for (const auto& p : pairs) ex.push_back({cooccurrence_vector(p, vocab), p.label});
  return ex;
}

inline MetricSet evaluate_model(const LinearModel& model, const Vocabulary& vocab,
                                std::span<const SerializedPair> test) {
  std::vector<Label> pred;
  std::vector<Label> gold;
  for (const auto& p : test) {
    pred.push_back(predict(model, cooccurrence_vector(p, vocab)).label);
    gold.push_back(p.label);
  }
  return prf1(confusion(pred, gold));
}

// Word co-occurrence features over a vocabulary built from the cell's
// training texts only; the cell seed drives SGD.
class BaselineMatcher : public Matcher {
 public:
  explicit BaselineMatcher(BaselineHyper hyper = {}, std::size_t min_df = 2) : hyper_(hyper), min_df_(min_df) {}

  std::string id() const override {
    std::ostringstream s;
    s << "builtin-baseline(lambda=" << hyper_.lambda << ",epochs=" << hyper_.epochs << ",min_df=" << min_df_ << ")";
    return s.str();
  }

  MetricSet train_and_evaluate(const CellData& cell) const override {
    const auto texts = pair_texts(cell.train);
    const auto vocab = build_vocabulary(texts, min_df_);
    auto hyper = hyper_;
    hyper.seed = cell.seed;
    const auto model = train_linear_matcher(cooccurrence_examples(cell.train, vocab), hyper, vocab.fingerprint());
    return evaluate_model(model, vocab, cell.test);
  }

 private:
  BaselineHyper hyper_;
  std::size_t min_df_;
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

inline MetricSet read_metrics_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("external matcher wrote no metrics file at " + path.string());
  try {
    const auto j = Json::parse(in);
    MetricSet m{j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
    for (double v : {m.precision, m.recall, m.f1}) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error("metric outside [0,1]");
    }
    return m;
  } catch (const Json::exception& e) {
    throw Error("bad metrics file " + path.string() + ": " + e.what());
  }
}

// File-based contract: writes train/validation/test exports into the cell
// directory, runs the command with {train} {validation} {test} {out_metrics}
// substituted, then reads {precision, recall, f1} from out_metrics.
class ExternalCommandMatcher : public Matcher {
 public:
  explicit ExternalCommandMatcher(std::string command) : command_(std::move(command)) {}

  std::string id() const override { return "command(" + command_ + ")"; }

  MetricSet train_and_evaluate(const CellData& cell) const override {
    namespace fs = std::filesystem;
    fs::create_directories(cell.workdir);
    const std::map<std::string, fs::path> paths = {{"{train}", cell.workdir / "train.jsonl"},
                                                   {"{validation}", cell.workdir / "validation.jsonl"},
                                                   {"{test}", cell.workdir / "test.jsonl"},
                                                   {"{out_metrics}", cell.workdir / "metrics.json"}};
    const auto dump = [](const fs::path& p, const std::vector<SerializedPair>& pairs) {
      std::ofstream out(p, std::ios::binary);
      write_transformer_export(out, pairs);
    };
    dump(paths.at("{train}"), cell.train);
    dump(paths.at("{validation}"), cell.validation);
    dump(paths.at("{test}"), cell.test);
    fs::remove(paths.at("{out_metrics}"));
    std::string cmd = command_;
    for (const auto& [key, p] : paths) {
      for (auto at = cmd.find(key); at != std::string::npos; at = cmd.find(key, at)) {
        const auto q = shell_quote(p.string());
        cmd.replace(at, key.size(), q);
        at += q.size();
      }
    }
    const int rc = std::system(cmd.c_str());
    if (rc != 0) throw Error("external matcher exited with status " + std::to_string(rc));
    return read_metrics_file(paths.at("{out_metrics}"));
  }

 private:
  std::string command_;
};

struct GridCell {
  MetricSet mean;
  std::vector<MetricSet> per_run;
};

struct GridResult {
  std::vector<std::size_t> rows;  // target-language sizes
  std::vector<std::size_t> cols;  // auxiliary-language sizes
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<GridCell>> cells;  // [row][col]
  std::vector<double> delta;                 // f1(last col) - f1(first col), per row

  void compute_deltas() {
    delta.assign(rows.size(), 0.0);
    for (std::size_t r = 0; r < rows.size() && !cols.empty(); ++r) {
      delta[r] = cells[r].back().mean.f1 - cells[r].front().mean.f1;
    }
  }
};

// Builds a result from already-known mean F1 values.
inline GridResult grid_from_f1(std::vector<std::size_t> rows, std::vector<std::size_t> cols,
                               const std::vector<std::vector<double>>& f1) {
  GridResult g;
  g.rows = std::move(rows);
  g.cols = std::move(cols);
  if (f1.size() != g.rows.size()) throw Error("grid_from_f1: row count mismatch");
  for (const auto& row : f1) {
    if (row.size() != g.cols.size()) throw Error("grid_from_f1: column count mismatch");
    std::vector<GridCell> cells;
    for (double v : row) cells.push_back({MetricSet{0.0, 0.0, v}, {MetricSet{0.0, 0.0, v}}});
    g.cells.push_back(std::move(cells));
  }
  g.compute_deltas();
  return g;
}

struct GridSpec {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t workers = 1;
  double validation_fraction = 0.2;
  std::optional<std::filesystem::path> persist_dir;  // per-cell results for resume
  std::string corpus_digest;
};

inline std::string cell_file_name(std::size_t n_target, std::size_t n_aux, std::uint64_t seed) {
  return "t" + std::to_string(n_target) + "_a" + std::to_string(n_aux) + "_s" + std::to_string(seed) + ".json";
}

// Written to a temporary name and renamed, so a cell file is either complete
// or absent.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

// Runs every (row, col, seed) cell: compose the nested training mix, carve a
// validation part, train and evaluate through `matcher` on the fixed test
// split, then average per cell. Cells already persisted under the same key
// (sizes, seed, matcher id, corpus digest) are loaded instead of rerun.
inline GridResult run_grid(const GridSpec& spec, const DatasetSplit& target_pool, const DatasetSplit& aux_pool,
                           const DatasetSplit& test, const PreparedCorpus& corpus, const Matcher& matcher) {
  if (spec.rows.empty() || spec.cols.empty()) throw Error("run_grid: rows and cols must be non-empty");
  if (spec.seeds.empty()) throw Error("run_grid: no run seeds configured");
  struct Task {
    std::size_t r, c, s;
  };
  std::vector<Task> tasks;
  for (std::size_t r = 0; r < spec.rows.size(); ++r) {
    for (std::size_t c = 0; c < spec.cols.size(); ++c) {
      for (std::size_t s = 0; s < spec.seeds.size(); ++s) tasks.push_back({r, c, s});
    }
  }
  std::vector<SerializedPair> test_pairs;
  for (const auto& p : test.pairs) test_pairs.push_back(serialize_pair(p, corpus));
  const auto matcher_id = matcher.id();

  std::vector<MetricSet> results(tasks.size());
  parallel_for(tasks.size(), spec.workers, [&](std::size_t i) {
    const auto [r, c, s] = tasks[i];
    const auto n_t = spec.rows[r];
    const auto n_a = spec.cols[c];
    const auto seed = spec.seeds[s];
    try {
      Json key;
      key["n_target"] = n_t;
      key["n_aux"] = n_a;
      key["seed"] = seed;
      key["matcher"] = matcher_id;
      key["corpus_digest"] = spec.corpus_digest;
      std::optional<std::filesystem::path> cell_path;
      if (spec.persist_dir) {
        cell_path = *spec.persist_dir / "cells" / cell_file_name(n_t, n_a, seed);
        if (std::filesystem::exists(*cell_path)) {
          std::ifstream in(*cell_path);
          const auto saved = Json::parse(in, nullptr, false);
          if (!saved.is_discarded() && saved.value("key", Json()) == key) {
            results[i] = {saved["precision"].get<double>(), saved["recall"].get<double>(), saved["f1"].get<double>()};
            return;
          }
        }
      }
      const auto mix = compose_training_mix(target_pool, aux_pool, n_t, n_a, seed);
      if (const auto leaks = leakage_check(mix.pairs, test.pairs); !leaks.empty()) {
        throw Error("training mix leaks test pair " + leaks.front().test_pair_id);
      }
      const auto carved = carve_validation(mix.pairs, spec.validation_fraction, seed);
      CellData cell;
      cell.n_target = n_t;
      cell.n_aux = n_a;
      cell.seed = seed;
      for (const auto& p : carved.train) cell.train.push_back(serialize_pair(p, corpus));
      for (const auto& p : carved.validation) cell.validation.push_back(serialize_pair(p, corpus));
      cell.test = test_pairs;
      cell.workdir = (spec.persist_dir ? *spec.persist_dir : std::filesystem::temp_directory_path() / "offermatch-grid") /
                     "work" / ("t" + std::to_string(n_t) + "_a" + std::to_string(n_a) + "_s" + std::to_string(seed));
      results[i] = matcher.train_and_evaluate(cell);
      std::filesystem::remove_all(cell.workdir);
      if (cell_path) {
        Json saved;
        saved["key"] = key;
        saved["precision"] = results[i].precision;
        saved["recall"] = results[i].recall;
        saved["f1"] = results[i].f1;
        write_file_atomic(*cell_path, saved.dump() + "\n");
      }
    } catch (const std::exception& e) {
      throw Error("grid cell (n_target=" + std::to_string(n_t) + ", n_aux=" + std::to_string(n_a) +
                  ", seed=" + std::to_string(seed) + ") failed: " + e.what());
    }
  });

  GridResult g;
  g.rows = spec.rows;
  g.cols = spec.cols;
  g.seeds = spec.seeds;
  g.cells.assign(spec.rows.size(), std::vector<GridCell>(spec.cols.size()));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    g.cells[tasks[i].r][tasks[i].c].per_run.push_back(results[i]);
  }
  for (auto& row : g.cells) {
    for (auto& cell : row) cell.mean = average_runs(cell.per_run);
  }
  g.compute_deltas();
  return g;
}

// ---------------------------------------------------------------------------
// Reports

struct Report {
  std::string csv;
  std::string text;
};

inline std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Left column left-aligned, the rest right-aligned, columns separated by " | ".
inline std::string aligned_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const auto& r = rows[ri];
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c > 0) line += " | ";
      const auto pad = std::string(width[c] - r[c].size(), ' ');
      line += c == 0 ? r[c] + pad : pad + r[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (ri == 0) {
      std::string rule;
      for (std::size_t c = 0; c < width.size(); ++c) {
        if (c > 0) rule += "-+-";
        rule += std::string(width[c], '-');
      }
      out += rule + "\n";
    }
  }
  return out;
}

inline std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out.push_back(c);
  }
  return out + "\"";
}

inline std::string csv_line(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out += ",";
    out += csv_field(cells[i]);
  }
  return out + "\n";
}

// Target sizes down, auxiliary sizes across, mean F1 in percent with a
// final delta column (last minus first auxiliary size).
inline Report render_grid_report(const GridResult& g) {
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"n_target\\n_aux"};
  for (auto c : g.cols) header.push_back(std::to_string(c));
  header.push_back(g.cols.empty() ? "delta"
                                  : "delta_" + std::to_string(g.cols.front()) + "_" + std::to_string(g.cols.back()));
  table.push_back(header);
  for (std::size_t r = 0; r < g.rows.size(); ++r) {
    std::vector<std::string> line{std::to_string(g.rows[r])};
    for (const auto& cell : g.cells[r]) line.push_back(percent(cell.mean.f1));
    line.push_back(percent(g.delta.at(r)));
    table.push_back(std::move(line));
  }
  Report rep;
  for (const auto& row : table) rep.csv += csv_line(row);
  rep.text = aligned_table(table);
  return rep;
}

struct ModelComparison {
  std::string model;
  double without_aux = 0.0;  // F1 as a fraction
  double with_aux = 0.0;
};

// One column per model; rows "F1 without aux", "F1 with aux", "Difference".
inline Report render_with_without_report(const std::vector<ModelComparison>& models) {
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"metric"};
  for (const auto& m : models) header.push_back(m.model);
  table.push_back(header);
  if (!models.empty()) {
    std::vector<std::string> without{"F1 without aux"};
    std::vector<std::string> with{"F1 with aux"};
    std::vector<std::string> diff{"Difference"};
    for (const auto& m : models) {
      without.push_back(percent(m.without_aux));
      with.push_back(percent(m.with_aux));
      diff.push_back(percent(m.with_aux - m.without_aux));
    }
    table.push_back(without);
    table.push_back(with);
    table.push_back(diff);
  }
  Report rep;
  for (const auto& row : table) rep.csv += csv_line(row);
  rep.text = aligned_table(table);
  return rep;
}

// First and last auxiliary column of every row, as a with/without comparison.
inline std::vector<ModelComparison> with_without_from_grid(const GridResult& g, const std::string& model) {
  std::vector<ModelComparison> out;
  if (g.cols.empty()) return out;
  for (std::size_t r = 0; r < g.rows.size(); ++r) {
    out.push_back({model + " n_target=" + std::to_string(g.rows[r]), g.cells[r].front().mean.f1,
                   g.cells[r].back().mean.f1});
  }
  return out;
}

enum class ReportStyle { kGrid, kWithWithout };

inline Report render_report(const GridResult& g, ReportStyle style, const std::string& model = "matcher") {
  return style == ReportStyle::kGrid ? render_grid_report(g) : render_with_without_report(with_without_from_grid(g, model));
}

// Per-run and per-cell CSVs.
inline std::string grid_runs_csv(const GridResult& g) {
  std::string out = "n_target,n_aux,seed,precision,recall,f1\n";
  for (std::size_t r = 0; r < g.rows.size(); ++r) {
    for (std::size_t c = 0; c < g.cols.size(); ++c) {
      const auto& runs = g.cells[r][c].per_run;
      for (std::size_t s = 0; s < runs.size(); ++s) {
        out += csv_line({std::to_string(g.rows[r]), std::to_string(g.cols[c]),
                         s < g.seeds.size() ? std::to_string(g.seeds[s]) : std::to_string(s), fixed6(runs[s].precision),
                         fixed6(runs[s].recall), fixed6(runs[s].f1)});
      }
    }
  }
  return out;
}

inline std::string grid_aggregate_csv(const GridResult& g) {
  std::string out = "n_target,n_aux,runs,precision,recall,f1\n";
  for (std::size_t r = 0; r < g.rows.size(); ++r) {
    for (std::size_t c = 0; c < g.cols.size(); ++c) {
      const auto& cell = g.cells[r][c];
      out += csv_line({std::to_string(g.rows[r]), std::to_string(g.cols[c]), std::to_string(cell.per_run.size()),
                       fixed6(cell.mean.precision), fixed6(cell.mean.recall), fixed6(cell.mean.f1)});
    }
  }
  return out;
}

struct DistributionRow {
  std::string seed_product;
  std::size_t positives = 0;
  std::size_t negatives = 0;

  bool operator==(const DistributionRow&) const = default;
};

inline constexpr std::string_view kDiscoveredBucket = "discovered";

using SeedLookup = std::function<std::optional<std::string>(const std::string& offer_id)>;

// Pairs touching each seed product. A pair between two different seeds
// counts once for each; unlabeled offers fall into "discovered".
inline std::vector<DistributionRow> pair_distribution(std::span<const OfferPair> pairs, const SeedLookup& seed_of) {
  std::map<std::string, DistributionRow> rows;
  for (const auto& p : pairs) {
    std::set<std::string> seeds;
    for (const auto* id : {&p.offer_a, &p.offer_b}) seeds.insert(seed_of(*id).value_or(std::string(kDiscoveredBucket)));
    for (const auto& s : seeds) {
      auto& row = rows[s];
      row.seed_product = s;
      (p.label == Label::kMatch ? row.positives : row.negatives) += 1;
    }
  }
  std::vector<DistributionRow> out;
  for (auto& [k, v] : rows) out.push_back(std::move(v));
  std::stable_sort(out.begin(), out.end(), [](const DistributionRow& a, const DistributionRow& b) {
    if (a.positives != b.positives) return a.positives > b.positives;
    return a.negatives > b.negatives;
  });
  return out;
}

inline std::string distribution_csv(const std::vector<DistributionRow>& rows) {
  std::string out = "seed_product,positives,negatives\n";
  for (const auto& r : rows) {
    out += csv_line({r.seed_product, std::to_string(r.positives), std::to_string(r.negatives)});
  }
  return out;
}

}  // namespace offermatch
