#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "offermatch/baseline.hpp"
#include "offermatch/common.hpp"
#include "offermatch/digest.hpp"
#include "offermatch/grid.hpp"
#include "offermatch/identity.hpp"
#include "offermatch/ingest.hpp"
#include "offermatch/metrics.hpp"
#include "offermatch/pairs.hpp"
#include "offermatch/random.hpp"
#include "offermatch/text.hpp"

namespace offermatch {

inline constexpr std::string_view kToolVersion = "offermatch 1.0.0";

// Bad configuration or CLI usage; nothing has run yet.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A stage failed after validation succeeded.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage " + stage + " failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct InputSpec {
  std::filesystem::path path;
  InputFormat format = InputFormat::kOfferFeed;
};

struct MatcherSpec {
  std::optional<std::string> command;  // empty: built-in baseline
};

struct GridConfig {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  MatcherSpec matcher;
  std::size_t workers = 1;
};

struct PipelineConfig {
  std::vector<InputSpec> inputs;
  std::filesystem::path out = "out";
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::string target_language = "de";
  std::string auxiliary_language = "en";
  double corner_fraction = 0.5;
  std::size_t cap_per_cluster = 30;
  std::size_t per_cluster_quota = 30;
  std::size_t k_similar = 5;
  std::size_t min_df = 2;
  std::size_t test_size = 1200;
  double test_match_ratio = 0.25;
  std::size_t target_pool_size = 3600;
  std::size_t aux_pool_size = 7200;
  std::size_t mix_n_target = 1800;
  std::size_t mix_n_aux = 7200;
  double validation_fraction = 0.2;
  BaselineHyper baseline;
  std::optional<GridConfig> grid;

  // Canonical form of every setting that influences artifacts (not workers
  // or the output directory).
  Json canonical() const;
};

namespace detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(std::string("config: bad value for ") + key);
  }
}

inline GridConfig parse_grid_config(const Json& j) {
  GridConfig g;
  g.rows = get_or<std::vector<std::size_t>>(j, "rows", {});
  g.cols = get_or<std::vector<std::size_t>>(j, "cols", {});
  g.seeds = get_or<std::vector<std::uint64_t>>(j, "seeds", g.seeds);
  g.workers = get_or<std::size_t>(j, "workers", 1);
  if (const auto it = j.find("matcher"); it != j.end()) {
    if (it->is_string()) {
      if (it->get<std::string>() != "builtin-baseline") {
        throw ValidationError("config: matcher must be \"builtin-baseline\" or {\"command\": ...}");
      }
    } else if (it->is_object() && it->contains("command") && (*it)["command"].is_string()) {
      g.matcher.command = (*it)["command"].get<std::string>();
    } else {
      throw ValidationError("config: matcher must be \"builtin-baseline\" or {\"command\": ...}");
    }
  }
  if (g.rows.empty() || g.cols.empty()) throw ValidationError("config: grid rows and cols must be non-empty");
  if (g.seeds.empty()) throw ValidationError("config: grid needs at least one seed");
  return g;
}

inline Json grid_config_json(const GridConfig& g) {
  Json j;
  j["rows"] = g.rows;
  j["cols"] = g.cols;
  j["seeds"] = g.seeds;
  if (g.matcher.command) j["matcher"]["command"] = *g.matcher.command;
  else j["matcher"] = "builtin-baseline";
  return j;
}

inline Json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot read " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

}  // namespace detail

inline Json PipelineConfig::canonical() const {
  Json j;
  Json ins = Json::array();
  for (const auto& i : inputs) ins.push_back({{"path", i.path.generic_string()}, {"format", to_string(i.format)}});
  j["inputs"] = ins;
  j["seed"] = seed;
  j["target_language"] = target_language;
  j["auxiliary_language"] = auxiliary_language;
  j["corner_fraction"] = corner_fraction;
  j["cap_per_cluster"] = cap_per_cluster;
  j["per_cluster_quota"] = per_cluster_quota;
  j["k_similar"] = k_similar;
  j["min_df"] = min_df;
  j["test"] = {{"size", test_size}, {"match_ratio", test_match_ratio}};
  j["train_pool"] = {{"target_size", target_pool_size}, {"aux_size", aux_pool_size}};
  j["mix"] = {{"n_target", mix_n_target}, {"n_aux", mix_n_aux}};
  j["validation_fraction"] = validation_fraction;
  j["baseline"] = {{"lambda", baseline.lambda}, {"epochs", baseline.epochs}};
  if (grid) j["grid"] = detail::grid_config_json(*grid);
  return j;
}

// Parses and validates a pipeline config. Relative paths resolve against the
// config file's directory.
inline PipelineConfig parse_pipeline_config(const Json& j, const std::filesystem::path& base_dir) {
  using detail::get_or;
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  PipelineConfig c;
  const auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base_dir / p; };
  const auto ins = j.find("inputs");
  if (ins == j.end() || !ins->is_array() || ins->empty()) throw ValidationError("config: inputs must be a non-empty array");
  for (const auto& in : *ins) {
    if (!in.is_object() || !in.contains("path")) throw ValidationError("config: every input needs a path");
    InputSpec spec;
    spec.path = resolve(in["path"].get<std::string>()).lexically_normal();
    try {
      spec.format = parse_input_format(get_or<std::string>(in, "format", "offer_feed"));
    } catch (const Error& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
    c.inputs.push_back(std::move(spec));
  }
  c.out = resolve(get_or<std::string>(j, "out", "out")).lexically_normal();
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.workers = get_or<std::size_t>(j, "workers", c.workers);
  c.target_language = get_or<std::string>(j, "target_language", c.target_language);
  c.auxiliary_language = get_or<std::string>(j, "auxiliary_language", c.auxiliary_language);
  c.corner_fraction = get_or<double>(j, "corner_fraction", c.corner_fraction);
  c.cap_per_cluster = get_or<std::size_t>(j, "cap_per_cluster", c.cap_per_cluster);
  c.per_cluster_quota = get_or<std::size_t>(j, "per_cluster_quota", c.per_cluster_quota);
  c.k_similar = get_or<std::size_t>(j, "k_similar", c.k_similar);
  c.min_df = get_or<std::size_t>(j, "min_df", c.min_df);
  c.validation_fraction = get_or<double>(j, "validation_fraction", c.validation_fraction);
  if (const auto t = j.find("test"); t != j.end()) {
    c.test_size = get_or<std::size_t>(*t, "size", c.test_size);
    c.test_match_ratio = get_or<double>(*t, "match_ratio", c.test_match_ratio);
  }
  if (const auto t = j.find("train_pool"); t != j.end()) {
    c.target_pool_size = get_or<std::size_t>(*t, "target_size", c.target_pool_size);
    c.aux_pool_size = get_or<std::size_t>(*t, "aux_size", c.aux_pool_size);
  }
  if (const auto t = j.find("mix"); t != j.end()) {
    c.mix_n_target = get_or<std::size_t>(*t, "n_target", c.mix_n_target);
    c.mix_n_aux = get_or<std::size_t>(*t, "n_aux", c.mix_n_aux);
  }
  if (const auto t = j.find("baseline"); t != j.end()) {
    c.baseline.lambda = get_or<double>(*t, "lambda", c.baseline.lambda);
    c.baseline.epochs = get_or<std::size_t>(*t, "epochs", c.baseline.epochs);
  }
  if (const auto t = j.find("grid"); t != j.end() && !t->is_null()) {
    if (t->is_string()) {
      c.grid = detail::parse_grid_config(detail::read_json_file(resolve(t->get<std::string>())));
    } else {
      c.grid = detail::parse_grid_config(*t);
    }
  }
  return c;
}

inline void validate_config(const PipelineConfig& c) {
  for (const auto& in : c.inputs) {
    if (!std::filesystem::exists(in.path)) throw ValidationError("config: input path not found: " + in.path.string());
  }
  for (const auto* lang : {&c.target_language, &c.auxiliary_language}) {
    if (!is_language_code(*lang)) throw ValidationError("config: invalid language code " + *lang);
  }
  if (c.target_language == c.auxiliary_language) throw ValidationError("config: target and auxiliary language are equal");
  for (const auto& [name, v] : {std::pair{"corner_fraction", c.corner_fraction},
                                std::pair{"test.match_ratio", c.test_match_ratio},
                                std::pair{"validation_fraction", c.validation_fraction}}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string("config: ") + name + " must lie in [0,1]");
  }
  for (const auto& [name, v] : {std::pair{"cap_per_cluster", c.cap_per_cluster},
                                std::pair{"per_cluster_quota", c.per_cluster_quota},
                                std::pair{"k_similar", c.k_similar}, std::pair{"min_df", c.min_df},
                                std::pair{"test.size", c.test_size},
                                std::pair{"train_pool.target_size", c.target_pool_size},
                                std::pair{"mix.n_target", c.mix_n_target},
                                std::pair{"baseline.epochs", c.baseline.epochs}, std::pair{"workers", c.workers}}) {
    if (v == 0) throw ValidationError(std::string("config: ") + name + " must be positive");
  }
  if (!(c.baseline.lambda > 0.0)) throw ValidationError("config: baseline.lambda must be positive");
  if (c.mix_n_target > c.target_pool_size) throw ValidationError("config: mix.n_target exceeds train_pool.target_size");
  if (c.mix_n_aux > c.aux_pool_size) throw ValidationError("config: mix.n_aux exceeds train_pool.aux_size");
  if (c.grid) {
    for (auto r : c.grid->rows) {
      if (r == 0 || r > c.target_pool_size) throw ValidationError("config: grid row size outside (0, target_size]");
    }
    for (auto col : c.grid->cols) {
      if (col > c.aux_pool_size) throw ValidationError("config: grid column size exceeds aux_size");
    }
  }
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  const auto j = detail::read_json_file(path);
  auto c = parse_pipeline_config(j, path.parent_path());
  validate_config(c);
  return c;
}

// ---------------------------------------------------------------------------
// Artifact helpers

namespace artifacts {
inline constexpr const char* kOffers = "offers.jsonl";
inline constexpr const char* kIngestErrors = "ingest_errors.jsonl";
inline constexpr const char* kClusters = "clusters.jsonl";
inline constexpr const char* kClusterSkips = "cluster_skips.jsonl";
inline constexpr const char* kStrippedOffers = "offers_stripped.jsonl";
inline constexpr const char* kPositives = "pairs/positives.jsonl";
inline constexpr const char* kNegatives = "pairs/negatives.jsonl";
inline constexpr const char* kPairReports = "pairs/reports.jsonl";
inline constexpr const char* kTest = "splits/test.jsonl";
inline constexpr const char* kTestManifest = "splits/test.manifest.json";
inline constexpr const char* kTargetPool = "splits/train_pool_target.jsonl";
inline constexpr const char* kTargetPoolManifest = "splits/train_pool_target.manifest.json";
inline constexpr const char* kAuxPool = "splits/train_pool_aux.jsonl";
inline constexpr const char* kAuxPoolManifest = "splits/train_pool_aux.manifest.json";
inline constexpr const char* kMixTrain = "mix/train.jsonl";
inline constexpr const char* kMixValidation = "mix/validation.jsonl";
inline constexpr const char* kMixManifest = "mix/manifest.json";
inline constexpr const char* kVocabulary = "model/vocabulary.txt";
inline constexpr const char* kModel = "model/model.txt";
inline constexpr const char* kMetrics = "eval/metrics.json";
inline constexpr const char* kDistribution = "eval/test_distribution.csv";
inline constexpr const char* kExportTrain = "export/train.jsonl";
inline constexpr const char* kExportValidation = "export/validation.jsonl";
inline constexpr const char* kExportTest = "export/test.jsonl";
inline constexpr const char* kAudit = "check/audit.json";
inline constexpr const char* kGridRuns = "grid/runs.csv";
inline constexpr const char* kGridAggregate = "grid/aggregate.csv";
inline constexpr const char* kGridReportCsv = "grid/report.csv";
inline constexpr const char* kGridReportTxt = "grid/report.txt";
inline constexpr const char* kGridWithWithoutCsv = "grid/with_without.csv";
inline constexpr const char* kGridWithWithoutTxt = "grid/with_without.txt";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifacts

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("missing artifact " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<Offer> load_offers(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("missing artifact " + p.string());
  return read_offers(in, p.filename().string());
}

inline std::vector<OfferPair> load_pairs(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("missing artifact " + p.string());
  return read_pairs(in);
}

inline NormalizedId parse_normalized_key(const std::string& key) {
  if (key.rfind("gtin:", 0) == 0) return {NormalizedId::Kind::kGtin, key.substr(5)};
  if (key.rfind("mpn:", 0) == 0) return {NormalizedId::Kind::kMpn, key.substr(4)};
  throw Error("bad normalized id " + key);
}

inline std::vector<ProductCluster> load_clusters(const std::filesystem::path& p, const std::vector<Offer>& offers) {
  std::map<std::string, const Offer*> by_id;
  for (const auto& o : offers) by_id.emplace(o.offer_id, &o);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("missing artifact " + p.string());
  std::vector<ProductCluster> clusters;
  for (std::string line; std::getline(in, line);) {
    if (trim(line).empty()) continue;
    const auto j = Json::parse(line);
    ProductCluster c;
    c.cluster_id = j.at("cluster_id").get<std::string>();
    c.member_offers = j.at("offer_ids").get<std::vector<std::string>>();
    for (const auto& k : j.at("normalized_ids")) c.ids.push_back(parse_normalized_key(k.get<std::string>()));
    for (const auto& id : c.member_offers) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw Error("cluster " + c.cluster_id + " references unknown offer " + id);
      c.language_partition[it->second->language].push_back(id);
    }
    clusters.push_back(std::move(c));
  }
  return clusters;
}

inline DatasetSplit load_split(const std::filesystem::path& pairs_path, SplitRole role, std::uint64_t seed) {
  return DatasetSplit::from_pairs(role, load_pairs(pairs_path), seed);
}

// ---------------------------------------------------------------------------
// Audit

struct AuditCheck {
  explicit AuditCheck(std::string n) : name(std::move(n)) {}

  std::string name;
  std::size_t violations = 0;
  std::vector<std::string> examples;  // first few offending items

  void add(std::string what) {
    ++violations;
    if (examples.size() < 10) examples.push_back(std::move(what));
  }
};

// Invariant audit over a finished pipeline output directory.
inline std::vector<AuditCheck> audit_outputs(const PipelineConfig& cfg, const std::filesystem::path& out) {
  const auto offers = load_offers(out / artifacts::kOffers);
  const auto clusters = load_clusters(out / artifacts::kClusters, offers);
  std::map<std::string, const Offer*> by_id;
  for (const auto& o : offers) by_id.emplace(o.offer_id, &o);
  std::map<std::string, std::string> cluster_of;
  for (const auto& c : clusters) {
    for (const auto& id : c.member_offers) cluster_of[id] = c.cluster_id;
  }
  const auto pc = prepare_corpus(offers, clusters, cfg.min_df);

  std::vector<AuditCheck> checks;
  AuditCheck valid{"offer_validity"};
  for (const auto& o : offers) {
    if (!validate_offer(o).ok()) valid.add(o.offer_id);
  }
  checks.push_back(valid);

  const auto test = load_pairs(out / artifacts::kTest);
  const auto target_pool = load_pairs(out / artifacts::kTargetPool);
  const auto aux_pool = load_pairs(out / artifacts::kAuxPool);
  auto mix = load_pairs(out / artifacts::kMixTrain);
  const auto mix_val = load_pairs(out / artifacts::kMixValidation);
  mix.insert(mix.end(), mix_val.begin(), mix_val.end());

  AuditCheck labels{"label_soundness"};
  AuditCheck clean{"post_strip_cleanliness"};
  for (const auto* set : std::initializer_list<const std::vector<OfferPair>*>{&test, &target_pool, &aux_pool, &mix}) {
    for (const auto& p : *set) {
      const auto ca = cluster_of.find(p.offer_a);
      const auto cb = cluster_of.find(p.offer_b);
      const bool known = ca != cluster_of.end() && cb != cluster_of.end();
      const bool same = known && ca->second == cb->second;
      const bool lang_ok = known && by_id.at(p.offer_a)->language == p.language &&
                           by_id.at(p.offer_b)->language == p.language;
      if (!known || !lang_ok || !(p.offer_a < p.offer_b) || same != (p.label == Label::kMatch)) {
        labels.add(p.pair_id);
        continue;
      }
      const auto forms = merge_identifier_strings(identifier_strings(*by_id.at(p.offer_a)),
                                                  identifier_strings(*by_id.at(p.offer_b)));
      const auto sp = serialize_pair(p, pc);
      if (contains_identifier(sp.text_a, forms) || contains_identifier(sp.text_b, forms)) clean.add(p.pair_id);
    }
  }
  checks.push_back(labels);
  checks.push_back(clean);

  AuditCheck leak_mix{"leakage_mix_vs_test"};
  for (const auto& v : leakage_check(mix, test)) leak_mix.add(v.test_pair_id);
  checks.push_back(leak_mix);
  AuditCheck leak_pool{"leakage_target_pool_vs_test"};
  for (const auto& v : leakage_check(target_pool, test)) leak_pool.add(v.test_pair_id);
  checks.push_back(leak_pool);

  AuditCheck composition{"test_composition"};
  const auto matches = static_cast<std::size_t>(
      std::count_if(test.begin(), test.end(), [](const OfferPair& p) { return p.label == Label::kMatch; }));
  if (test.size() != cfg.test_size) composition.add("size " + std::to_string(test.size()));
  if (matches != fraction_count(cfg.test_size, cfg.test_match_ratio)) {
    composition.add("matches " + std::to_string(matches));
  }
  checks.push_back(composition);
  return checks;
}

// ---------------------------------------------------------------------------
// Stages

struct StageContext {
  const PipelineConfig& cfg;
  std::filesystem::path out;
  std::ostream& log;

  std::filesystem::path at(const char* rel) const { return out / rel; }
  std::uint64_t seed(std::string_view stage) const { return derive_seed(cfg.seed, stage); }

  void write(const char* rel, const std::string& content) const { write_file_atomic(out / rel, content); }
};

struct Stage {
  std::string name;
  std::vector<std::string> inputs;   // artifacts read (relative to out)
  std::vector<std::string> outputs;  // artifacts written (relative to out)
  std::function<void(const StageContext&)> run;
};

namespace stages {

template <class T, class F>
std::string jsonl(const std::vector<T>& items, F&& to_json) {
  std::ostringstream s;
  write_jsonl(s, items, to_json);
  return s.str();
}

inline std::string pairs_text(std::span<const OfferPair> pairs) {
  std::ostringstream s;
  write_pairs(s, pairs);
  return s.str();
}

inline std::string export_text(const std::vector<OfferPair>& pairs, const PreparedCorpus& pc) {
  std::vector<SerializedPair> sp;
  for (const auto& p : pairs) sp.push_back(serialize_pair(p, pc));
  std::ostringstream s;
  write_transformer_export(s, sp);
  return s.str();
}

inline PreparedCorpus load_corpus(const StageContext& ctx) {
  const auto offers = load_offers(ctx.at(artifacts::kOffers));
  const auto clusters = load_clusters(ctx.at(artifacts::kClusters), offers);
  return prepare_corpus(offers, clusters, ctx.cfg.min_df, ctx.cfg.workers);
}

inline void ingest(const StageContext& ctx) {
  IngestResult all;
  for (const auto& in : ctx.cfg.inputs) {
    IngestResult part;
    if (in.format == InputFormat::kOfferFeed) {
      std::ifstream f(in.path, std::ios::binary);
      part = parse_offer_feed(f, in.path.filename().string());
    } else {
      part = extract_all(load_html_tree(in.path, in.format), ctx.cfg.workers);
    }
    std::move(part.offers.begin(), part.offers.end(), std::back_inserter(all.offers));
    std::move(part.errors.begin(), part.errors.end(), std::back_inserter(all.errors));
  }
  finalize_offers(all.offers);
  ctx.log << "ingest: " << all.offers.size() << " offers, " << all.errors.size() << " errors\n";
  ctx.write(artifacts::kOffers, jsonl(all.offers, offer_to_json));
  ctx.write(artifacts::kIngestErrors, jsonl(all.errors, error_to_json));
}

inline void cluster(const StageContext& ctx) {
  const auto offers = load_offers(ctx.at(artifacts::kOffers));
  const auto result = cluster_offers(offers);
  ctx.log << "cluster: " << result.clusters.size() << " clusters, " << result.skipped.size() << " skipped\n";
  ctx.write(artifacts::kClusters, jsonl(result.clusters, cluster_to_json));
  ctx.write(artifacts::kClusterSkips, jsonl(result.skipped, error_to_json));
}

inline void pairs(const StageContext& ctx) {
  const auto pc = load_corpus(ctx);
  const VectorLookup vec = [&](const std::string& id) -> const SparseVector& { return pc.vector(id); };
  const auto seed = ctx.seed("pairs");
  std::vector<std::vector<OfferPair>> per_cluster(pc.clusters.size());
  parallel_for(pc.clusters.size(), ctx.cfg.workers, [&](std::size_t i) {
    per_cluster[i] = generate_positive_pairs(pc.clusters[i], ctx.cfg.cap_per_cluster, seed, vec);
  });
  std::vector<OfferPair> positives;
  for (auto& v : per_cluster) std::move(v.begin(), v.end(), std::back_inserter(positives));
  auto negatives =
      generate_negative_pairs(pc.clusters, ctx.cfg.k_similar, ctx.cfg.per_cluster_quota, seed, vec, ctx.cfg.workers);

  // Hardness is ranked within each language.
  std::map<std::string, std::vector<OfferPair>> by_lang;
  for (auto& p : positives) by_lang[p.language].push_back(std::move(p));
  for (auto& p : negatives.pairs) by_lang[p.language].push_back(std::move(p));
  std::vector<OfferPair> pos_out;
  std::vector<OfferPair> neg_out;
  for (auto& [lang, ps] : by_lang) {
    for (auto& p : label_hardness(std::move(ps), ctx.cfg.corner_fraction)) {
      (p.label == Label::kMatch ? pos_out : neg_out).push_back(std::move(p));
    }
  }
  sort_by_pair_id(pos_out);
  sort_by_pair_id(neg_out);

  std::vector<IngestError> reports = pc.reports;
  for (const auto& r : negatives.reports) reports.push_back({"negatives", r});
  ctx.log << "pairs: " << pos_out.size() << " positives, " << neg_out.size() << " negatives\n";
  ctx.write(artifacts::kStrippedOffers, jsonl(pc.offers, offer_to_json));
  ctx.write(artifacts::kPositives, pairs_text(pos_out));
  ctx.write(artifacts::kNegatives, pairs_text(neg_out));
  ctx.write(artifacts::kPairReports, jsonl(reports, error_to_json));
}

inline std::vector<OfferPair> in_language(const std::vector<OfferPair>& pairs, const std::string& lang) {
  std::vector<OfferPair> out;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out),
               [&](const OfferPair& p) { return p.language == lang; });
  return out;
}

inline void split(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto positives = load_pairs(ctx.at(artifacts::kPositives));
  const auto negatives = load_pairs(ctx.at(artifacts::kNegatives));
  const auto digest = file_digest(ctx.at(artifacts::kOffers));
  const auto seed = ctx.seed("split");

  auto pos_t = in_language(positives, cfg.target_language);
  auto neg_t = in_language(negatives, cfg.target_language);
  const auto test = assemble_split(pos_t, neg_t, cfg.test_size, cfg.test_match_ratio, cfg.corner_fraction, seed,
                                   SplitRole::kTest);
  std::set<std::string> used;
  for (const auto& p : test.pairs) used.insert(unordered_key(p));
  const auto unused = [&](const OfferPair& p) { return used.count(unordered_key(p)) > 0; };
  pos_t.erase(std::remove_if(pos_t.begin(), pos_t.end(), unused), pos_t.end());
  neg_t.erase(std::remove_if(neg_t.begin(), neg_t.end(), unused), neg_t.end());
  const auto target_pool =
      assemble_split(pos_t, neg_t, cfg.target_pool_size, 0.5, cfg.corner_fraction, seed, SplitRole::kTrainPool);
  const auto pos_a = in_language(positives, cfg.auxiliary_language);
  const auto neg_a = in_language(negatives, cfg.auxiliary_language);
  const auto aux_pool = assemble_split(pos_a, neg_a, cfg.aux_pool_size, 0.5, cfg.corner_fraction,
                                       derive_seed(seed, cfg.auxiliary_language), SplitRole::kTrainPool);
  ctx.log << "split: test " << test.pairs.size() << ", target pool " << target_pool.pairs.size() << ", aux pool "
          << aux_pool.pairs.size() << "\n";
  ctx.write(artifacts::kTest, pairs_text(test.pairs));
  ctx.write(artifacts::kTestManifest, split_manifest(test, digest).dump(2) + "\n");
  ctx.write(artifacts::kTargetPool, pairs_text(target_pool.pairs));
  ctx.write(artifacts::kTargetPoolManifest, split_manifest(target_pool, digest).dump(2) + "\n");
  ctx.write(artifacts::kAuxPool, pairs_text(aux_pool.pairs));
  ctx.write(artifacts::kAuxPoolManifest, split_manifest(aux_pool, digest).dump(2) + "\n");
}

inline void compose(const StageContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto seed = ctx.seed("compose");
  const auto target = load_split(ctx.at(artifacts::kTargetPool), SplitRole::kTrainPool, seed);
  const auto aux = load_split(ctx.at(artifacts::kAuxPool), SplitRole::kTrainPool, seed);
  const auto test = load_pairs(ctx.at(artifacts::kTest));
  const auto mix = compose_training_mix(target, aux, cfg.mix_n_target, cfg.mix_n_aux, seed);
  if (const auto leaks = leakage_check(mix.pairs, test); !leaks.empty()) {
    throw Error("training mix leaks test pair " + leaks.front().test_pair_id);
  }
  const auto carved = carve_validation(mix.pairs, cfg.validation_fraction, seed);
  const auto digest = file_digest(ctx.at(artifacts::kOffers));
  Json m;
  m["target_language"] = mix.target_language;
  m["n_target"] = mix.n_target;
  m["auxiliary_language"] = mix.auxiliary_language;
  m["n_auxiliary"] = mix.n_auxiliary;
  m["seed"] = seed;
  m["train"] = split_manifest(DatasetSplit::from_pairs(SplitRole::kTrainPool, carved.train, seed), digest);
  m["validation"] = split_manifest(DatasetSplit::from_pairs(SplitRole::kValidation, carved.validation, seed), digest);
  ctx.log << "compose: " << carved.train.size() << " train, " << carved.validation.size() << " validation\n";
  ctx.write(artifacts::kMixTrain, pairs_text(carved.train));
  ctx.write(artifacts::kMixValidation, pairs_text(carved.validation));
  ctx.write(artifacts::kMixManifest, m.dump(2) + "\n");
}

inline void train_baseline(const StageContext& ctx) {
  const auto pc = load_corpus(ctx);
  std::vector<SerializedPair> train;
  for (const auto& p : load_pairs(ctx.at(artifacts::kMixTrain))) train.push_back(serialize_pair(p, pc));
  const auto vocab = build_vocabulary(pair_texts(train), ctx.cfg.min_df);
  auto hyper = ctx.cfg.baseline;
  hyper.seed = ctx.seed("train-baseline");
  const auto model = train_linear_matcher(cooccurrence_examples(train, vocab), hyper, vocab.fingerprint());
  ctx.log << "train-baseline: dimension " << vocab.size() << ", objective " << model.initial_objective << " -> "
          << model.final_objective << "\n";
  std::ostringstream v;
  write_vocabulary(v, vocab);
  ctx.write(artifacts::kVocabulary, v.str());
  std::ostringstream m;
  write_model(m, model);
  ctx.write(artifacts::kModel, m.str());
}

inline void eval(const StageContext& ctx) {
  const auto pc = load_corpus(ctx);
  std::ifstream vin(ctx.at(artifacts::kVocabulary));
  if (!vin) throw Error("missing artifact " + ctx.at(artifacts::kVocabulary).string());
  const auto vocab = read_vocabulary(vin);
  std::ifstream min(ctx.at(artifacts::kModel));
  if (!min) throw Error("missing artifact " + ctx.at(artifacts::kModel).string());
  const auto model = read_model(min, vocab);
  const auto test = load_pairs(ctx.at(artifacts::kTest));
  std::vector<Label> pred;
  std::vector<Label> gold;
  for (const auto& p : test) {
    pred.push_back(predict(model, cooccurrence_vector(serialize_pair(p, pc), vocab)).label);
    gold.push_back(p.label);
  }
  const auto counts = confusion(pred, gold);
  const auto m = prf1(counts);
  Json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["confusion"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}, {"tn", counts.tn}};
  ctx.log << "eval: F1 " << percent(m.f1) << "\n";
  ctx.write(artifacts::kMetrics, j.dump(2) + "\n");
  const SeedLookup seed_of = [&](const std::string& id) { return pc.offer(id).seed_product; };
  ctx.write(artifacts::kDistribution, distribution_csv(pair_distribution(test, seed_of)));
}

inline void export_transformer(const StageContext& ctx) {
  const auto pc = load_corpus(ctx);
  ctx.write(artifacts::kExportTrain, export_text(load_pairs(ctx.at(artifacts::kMixTrain)), pc));
  ctx.write(artifacts::kExportValidation, export_text(load_pairs(ctx.at(artifacts::kMixValidation)), pc));
  ctx.write(artifacts::kExportTest, export_text(load_pairs(ctx.at(artifacts::kTest)), pc));
}

inline void check(const StageContext& ctx) {
  const auto checks = audit_outputs(ctx.cfg, ctx.out);
  Json j;
  bool ok = true;
  Json arr = Json::array();
  for (const auto& c : checks) {
    ok = ok && c.violations == 0;
    arr.push_back({{"name", c.name}, {"violations", c.violations}, {"examples", c.examples}});
  }
  j["ok"] = ok;
  j["checks"] = arr;
  ctx.write(artifacts::kAudit, j.dump(2) + "\n");
  if (!ok) {
    for (const auto& c : checks) {
      if (c.violations) throw Error("audit check " + c.name + " found " + std::to_string(c.violations) + " violations");
    }
  }
  ctx.log << "check: all invariants hold\n";
}

inline std::unique_ptr<Matcher> make_matcher(const MatcherSpec& spec, const PipelineConfig& cfg) {
  if (spec.command) return std::make_unique<ExternalCommandMatcher>(*spec.command);
  return std::make_unique<BaselineMatcher>(cfg.baseline, cfg.min_df);
}

inline void write_grid_reports(const GridResult& g, const std::filesystem::path& out, const std::string& model) {
  const auto grid = render_report(g, ReportStyle::kGrid);
  const auto ww = render_report(g, ReportStyle::kWithWithout, model);
  write_file_atomic(out / artifacts::kGridRuns, grid_runs_csv(g));
  write_file_atomic(out / artifacts::kGridAggregate, grid_aggregate_csv(g));
  write_file_atomic(out / artifacts::kGridReportCsv, grid.csv);
  write_file_atomic(out / artifacts::kGridReportTxt, grid.text);
  write_file_atomic(out / artifacts::kGridWithWithoutCsv, ww.csv);
  write_file_atomic(out / artifacts::kGridWithWithoutTxt, ww.text);
}

inline std::string pools_digest(const std::filesystem::path& offers, const std::filesystem::path& target,
                                const std::filesystem::path& aux, const std::filesystem::path& test) {
  return sha256_hex(file_digest(offers) + file_digest(target) + file_digest(aux) + file_digest(test));
}

inline GridResult run_grid_stage(const StageContext& ctx) {
  const auto& gc = *ctx.cfg.grid;
  const auto pc = load_corpus(ctx);
  const auto target = load_split(ctx.at(artifacts::kTargetPool), SplitRole::kTrainPool, ctx.cfg.seed);
  const auto aux = load_split(ctx.at(artifacts::kAuxPool), SplitRole::kTrainPool, ctx.cfg.seed);
  const auto test = load_split(ctx.at(artifacts::kTest), SplitRole::kTest, ctx.cfg.seed);
  GridSpec spec;
  spec.rows = gc.rows;
  spec.cols = gc.cols;
  spec.seeds = gc.seeds;
  spec.workers = std::max(gc.workers, ctx.cfg.workers);
  spec.validation_fraction = ctx.cfg.validation_fraction;
  spec.persist_dir = ctx.out / "grid";
  spec.corpus_digest = pools_digest(ctx.at(artifacts::kOffers), ctx.at(artifacts::kTargetPool),
                                    ctx.at(artifacts::kAuxPool), ctx.at(artifacts::kTest));
  const auto matcher = make_matcher(gc.matcher, ctx.cfg);
  auto g = run_grid(spec, target, aux, test, pc, *matcher);
  write_grid_reports(g, ctx.out, gc.matcher.command ? "command" : "baseline");
  ctx.log << "grid: " << g.rows.size() * g.cols.size() << " cells x " << g.seeds.size() << " runs\n";
  return g;
}

inline void grid(const StageContext& ctx) { run_grid_stage(ctx); }

}  // namespace stages

inline std::vector<Stage> pipeline_stages(const PipelineConfig& cfg) {
  using namespace artifacts;
  std::vector<Stage> s = {
      {"ingest", {}, {kOffers, kIngestErrors}, stages::ingest},
      {"cluster", {kOffers}, {kClusters, kClusterSkips}, stages::cluster},
      {"pairs", {kOffers, kClusters}, {kStrippedOffers, kPositives, kNegatives, kPairReports}, stages::pairs},
      {"split",
       {kOffers, kPositives, kNegatives},
       {kTest, kTestManifest, kTargetPool, kTargetPoolManifest, kAuxPool, kAuxPoolManifest},
       stages::split},
      {"compose", {kOffers, kTargetPool, kAuxPool, kTest}, {kMixTrain, kMixValidation, kMixManifest}, stages::compose},
      {"train-baseline", {kOffers, kClusters, kMixTrain}, {kVocabulary, kModel}, stages::train_baseline},
      {"eval", {kOffers, kClusters, kVocabulary, kModel, kTest}, {kMetrics, kDistribution}, stages::eval},
      {"export-transformer",
       {kOffers, kClusters, kMixTrain, kMixValidation, kTest},
       {kExportTrain, kExportValidation, kExportTest},
       stages::export_transformer},
      {"check",
       {kOffers, kClusters, kTest, kTargetPool, kAuxPool, kMixTrain, kMixValidation},
       {kAudit},
       stages::check},
  };
  if (cfg.grid) {
    std::vector<std::string> outputs = {kGridRuns,      kGridAggregate,       kGridReportCsv,
                                        kGridReportTxt, kGridWithWithoutCsv, kGridWithWithoutTxt};
    for (auto r : cfg.grid->rows) {
      for (auto c : cfg.grid->cols) {
        for (auto seed : cfg.grid->seeds) outputs.push_back("grid/cells/" + cell_file_name(r, c, seed));
      }
    }
    s.push_back({"grid", {kOffers, kClusters, kTargetPool, kAuxPool, kTest}, outputs, stages::grid});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Orchestration

struct StageRecord {
  std::string name;
  std::string status;  // ran | skipped | failed
  std::string input_digest;
  double seconds = 0.0;
  std::vector<std::pair<std::string, std::string>> artifacts;  // path, digest
  std::string error;
};

struct RunManifest {
  std::string tool_version{kToolVersion};
  std::uint64_t seed = 0;
  std::string config_digest;
  bool completed = false;
  std::vector<StageRecord> stages;

  Json to_json() const {
    Json j;
    j["tool_version"] = tool_version;
    j["seed"] = seed;
    j["config_digest"] = config_digest;
    j["completed"] = completed;
    Json arr = Json::array();
    for (const auto& s : stages) {
      Json e;
      e["name"] = s.name;
      e["status"] = s.status;
      e["input_digest"] = s.input_digest;
      e["seconds"] = s.seconds;
      Json a = Json::array();
      for (const auto& [p, d] : s.artifacts) a.push_back({{"path", p}, {"digest", d}});
      e["artifacts"] = a;
      if (!s.error.empty()) e["error"] = s.error;
      arr.push_back(std::move(e));
    }
    j["stages"] = arr;
    return j;
  }

  static RunManifest from_json(const Json& j) {
    RunManifest m;
    m.tool_version = j.value("tool_version", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.config_digest = j.value("config_digest", "");
    m.completed = j.value("completed", false);
    for (const auto& e : j.value("stages", Json::array())) {
      StageRecord s;
      s.name = e.value("name", "");
      s.status = e.value("status", "");
      s.input_digest = e.value("input_digest", "");
      s.seconds = e.value("seconds", 0.0);
      for (const auto& a : e.value("artifacts", Json::array())) {
        s.artifacts.emplace_back(a.value("path", ""), a.value("digest", ""));
      }
      s.error = e.value("error", "");
      m.stages.push_back(std::move(s));
    }
    return m;
  }

  const StageRecord* find(std::string_view name) const {
    for (const auto& s : stages) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
};

inline std::optional<RunManifest> read_manifest(const std::filesystem::path& out) {
  std::ifstream in(out / artifacts::kManifest);
  if (!in) return std::nullopt;
  const auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return RunManifest::from_json(j);
}

// Digest of everything a stage reads: config, stage name and the digests of
// its input artifacts (or of the raw inputs for ingest).
inline std::string stage_input_digest(const PipelineConfig& cfg, const Stage& stage, const std::filesystem::path& out) {
  Sha256 h;
  h.update(kToolVersion).update("\n").update(cfg.canonical().dump()).update("\n").update(stage.name).update("\n");
  if (stage.name == "ingest") {
    for (const auto& in : cfg.inputs) {
      std::vector<std::filesystem::path> files;
      if (std::filesystem::is_directory(in.path)) {
        for (const auto& e : std::filesystem::recursive_directory_iterator(in.path)) {
          if (e.is_regular_file()) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
      } else {
        files.push_back(in.path);
      }
      for (const auto& f : files) h.update(f.generic_string()).update(" ").update(file_digest(f)).update("\n");
    }
  }
  for (const auto& rel : stage.inputs) {
    const auto p = out / rel;
    h.update(rel).update(" ").update(std::filesystem::exists(p) ? file_digest(p) : "missing").update("\n");
  }
  return h.hex();
}

inline bool stage_up_to_date(const StageRecord* prev, const std::string& input_digest, const std::filesystem::path& out) {
  if (!prev || prev->status == "failed" || prev->input_digest != input_digest || prev->artifacts.empty()) return false;
  for (const auto& [rel, digest] : prev->artifacts) {
    const auto p = out / rel;
    if (!std::filesystem::exists(p) || file_digest(p) != digest) return false;
  }
  return true;
}

struct RunOptions {
  std::vector<std::string> only;  // empty: every stage
  bool force = false;             // rerun even when up to date
};

// Runs the configured stages in order and writes manifest.json. The first
// failing stage aborts with StageError; the manifest records what completed.
inline RunManifest run_pipeline(const PipelineConfig& cfg, const RunOptions& opts = {}, std::ostream& log = std::cerr) {
  validate_config(cfg);
  const auto& out = cfg.out;
  std::filesystem::create_directories(out);
  const auto previous = read_manifest(out);
  RunManifest manifest;
  manifest.seed = cfg.seed;
  manifest.config_digest = sha256_hex(cfg.canonical().dump());
  const StageContext ctx{cfg, out, log};
  const auto all = pipeline_stages(cfg);

  if (!opts.only.empty()) {
    for (const auto& name : opts.only) {
      if (std::none_of(all.begin(), all.end(), [&](const Stage& s) { return s.name == name; })) {
        throw ValidationError("unknown or unconfigured stage: " + name);
      }
    }
    // Records of stages not run this time carry over.
    if (previous) {
      for (const auto& s : previous->stages) {
        if (std::find(opts.only.begin(), opts.only.end(), s.name) == opts.only.end()) manifest.stages.push_back(s);
      }
    }
  }

  const auto save = [&] { write_file_atomic(out / artifacts::kManifest, manifest.to_json().dump(2) + "\n"); };
  for (const auto& stage : all) {
    if (!opts.only.empty() && std::find(opts.only.begin(), opts.only.end(), stage.name) == opts.only.end()) continue;
    StageRecord rec;
    rec.name = stage.name;
    rec.input_digest = stage_input_digest(cfg, stage, out);
    const StageRecord* prev = previous ? previous->find(stage.name) : nullptr;
    if (!opts.force && stage_up_to_date(prev, rec.input_digest, out)) {
      rec.status = "skipped";
      rec.artifacts = prev->artifacts;
      log << stage.name << ": up to date, skipped\n";
    } else {
      for (const auto& rel : stage.inputs) {
        if (!std::filesystem::exists(out / rel)) {
          rec.status = "failed";
          rec.error = "missing input artifact " + rel;
          std::erase_if(manifest.stages, [&](const StageRecord& s) { return s.name == stage.name; });
          manifest.stages.push_back(rec);
          save();
          throw StageError(stage.name, rec.error);
        }
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        stage.run(ctx);
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::erase_if(manifest.stages, [&](const StageRecord& s) { return s.name == stage.name; });
        manifest.stages.push_back(rec);
        save();
        throw StageError(stage.name, e.what());
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.status = "ran";
      for (const auto& rel : stage.outputs) {
        const auto p = out / rel;
        if (!std::filesystem::exists(p)) throw StageError(stage.name, "did not write " + rel);
        rec.artifacts.emplace_back(rel, file_digest(p));
      }
    }
    std::erase_if(manifest.stages, [&](const StageRecord& s) { return s.name == stage.name; });
    manifest.stages.push_back(std::move(rec));
  }
  // Keep stage records in pipeline order.
  std::vector<StageRecord> ordered;
  for (const auto& stage : all) {
    for (auto& s : manifest.stages) {
      if (s.name == stage.name) ordered.push_back(s);
    }
  }
  manifest.stages = std::move(ordered);
  manifest.completed = manifest.stages.size() == all.size() &&
                       std::all_of(manifest.stages.begin(), manifest.stages.end(),
                                   [](const StageRecord& s) { return s.status != "failed"; });
  save();
  return manifest;
}

// ---------------------------------------------------------------------------
// Standalone grid from explicit artifact paths.

struct StandaloneGridConfig {
  std::filesystem::path corpus;  // offer file
  std::filesystem::path target_pool;
  std::filesystem::path aux_pool;
  std::filesystem::path test_split;
  GridConfig grid;
  std::size_t min_df = 2;
  BaselineHyper baseline;
  double validation_fraction = 0.2;
};

inline StandaloneGridConfig load_standalone_grid_config(const std::filesystem::path& path) {
  const auto j = detail::read_json_file(path);
  const auto base = path.parent_path();
  StandaloneGridConfig c;
  const auto req = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw ValidationError(std::string("grid config: missing ") + key);
    std::filesystem::path p = j[key].get<std::string>();
    p = p.is_absolute() ? p : base / p;
    if (!std::filesystem::exists(p)) throw ValidationError("grid config: path not found: " + p.string());
    return p;
  };
  c.corpus = req("corpus");
  c.target_pool = req("target_pool");
  c.aux_pool = req("aux_pool");
  c.test_split = req("test_split");
  c.grid = detail::parse_grid_config(j);
  c.min_df = detail::get_or<std::size_t>(j, "min_df", c.min_df);
  c.validation_fraction = detail::get_or<double>(j, "validation_fraction", c.validation_fraction);
  if (const auto b = j.find("baseline"); b != j.end()) {
    c.baseline.lambda = detail::get_or<double>(*b, "lambda", c.baseline.lambda);
    c.baseline.epochs = detail::get_or<std::size_t>(*b, "epochs", c.baseline.epochs);
  }
  return c;
}

inline GridResult run_standalone_grid(const StandaloneGridConfig& c, const std::filesystem::path& out,
                                      std::size_t workers) {
  const auto offers = load_offers(c.corpus);
  const auto clustered = cluster_offers(offers);
  const auto pc = prepare_corpus(offers, clustered.clusters, c.min_df, workers);
  GridSpec spec;
  spec.rows = c.grid.rows;
  spec.cols = c.grid.cols;
  spec.seeds = c.grid.seeds;
  spec.workers = std::max(workers, c.grid.workers);
  spec.validation_fraction = c.validation_fraction;
  spec.persist_dir = out / "grid";
  spec.corpus_digest = stages::pools_digest(c.corpus, c.target_pool, c.aux_pool, c.test_split);
  std::unique_ptr<Matcher> matcher;
  if (c.grid.matcher.command) matcher = std::make_unique<ExternalCommandMatcher>(*c.grid.matcher.command);
  else matcher = std::make_unique<BaselineMatcher>(c.baseline, c.min_df);
  auto g = run_grid(spec, load_split(c.target_pool, SplitRole::kTrainPool, 0), load_split(c.aux_pool, SplitRole::kTrainPool, 0),
                    load_split(c.test_split, SplitRole::kTest, 0), pc, *matcher);
  stages::write_grid_reports(g, out, c.grid.matcher.command ? "command" : "baseline");
  return g;
}

}  // namespace offermatch
