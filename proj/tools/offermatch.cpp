// Command-line entry point. Logs go to stderr, artifacts under --out.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "offermatch/offermatch.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitStage = 2;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
  bool force = false;
};

offermatch::PipelineConfig resolve_config(const GlobalFlags& flags) {
  if (flags.config.empty()) throw offermatch::ValidationError("--config is required");
  auto cfg = offermatch::parse_pipeline_config(offermatch::detail::read_json_file(flags.config),
                                               std::filesystem::path(flags.config).parent_path());
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.workers) cfg.workers = *flags.workers;
  if (flags.out) cfg.out = *flags.out;
  offermatch::validate_config(cfg);
  return cfg;
}

void add_global_flags(CLI::App* cmd, GlobalFlags& flags) {
  cmd->add_option("--config", flags.config, "pipeline config (JSON)");
  cmd->add_option("--seed", flags.seed, "override the global seed");
  cmd->add_option("--workers", flags.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_flag("--force", flags.force, "rerun stages even when up to date");
}

int run_stages(const GlobalFlags& flags, std::vector<std::string> only) {
  const auto cfg = resolve_config(flags);
  offermatch::RunOptions opts;
  opts.only = std::move(only);
  opts.force = flags.force;
  const auto manifest = offermatch::run_pipeline(cfg, opts, std::cerr);
  for (const auto& s : manifest.stages) {
    if (opts.only.empty() || std::find(opts.only.begin(), opts.only.end(), s.name) != opts.only.end()) {
      std::cerr << s.name << ": " << s.status << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"offermatch: product-offer matching datasets and baselines"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(offermatch::kToolVersion));

  GlobalFlags flags;
  std::string grid_config;
  std::vector<std::string> stage_names = {"ingest", "cluster",           "pairs", "split", "compose", "train-baseline",
                                          "eval",   "export-transformer", "check"};
  for (const auto& name : stage_names) {
    add_global_flags(app.add_subcommand(name, "run the " + name + " stage"), flags);
  }
  auto* grid = app.add_subcommand("grid", "run the training-size grid");
  add_global_flags(grid, flags);
  grid->add_option("--grid-config", grid_config, "standalone grid config over existing split files");
  auto* run = app.add_subcommand("run", "run the full pipeline");
  add_global_flags(run, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    for (auto* sub : app.get_subcommands()) {
      const auto name = sub->get_name();
      if (name == "run") return run_stages(flags, {});
      if (name == "grid" && !grid_config.empty()) {
        const auto cfg = offermatch::load_standalone_grid_config(grid_config);
        const std::filesystem::path out = flags.out.value_or("out");
        const auto g = offermatch::run_standalone_grid(cfg, out, flags.workers.value_or(1));
        std::cerr << offermatch::render_report(g, offermatch::ReportStyle::kGrid).text;
        return kExitOk;
      }
      if (name == "grid") {
        const auto cfg = resolve_config(flags);
        if (!cfg.grid) throw offermatch::ValidationError("config has no grid section");
      }
      return run_stages(flags, {name});
    }
  } catch (const offermatch::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const offermatch::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return kExitOk;
}
