// Command-line front end: run the experiment grid, export scatter data,
// generate synthetic markets, or run a single hyperparameter search.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mmfusion/error.hpp"
#include "mmfusion/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::size_t> jobs;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "Experiment configuration file")->required();
  cmd->add_option("--seed", opts.seed, "Override the global seed");
  cmd->add_option("--out", opts.out, "Output directory")->capture_default_str();
  cmd->add_option("--jobs", opts.jobs, "Worker threads for grid cells");
}

mmf::ExperimentConfig load(const CommonOptions& opts) {
  auto cfg = mmf::load_config(opts.config);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.jobs) cfg.jobs = *opts.jobs;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw mmf::DataError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

int run_grid(const CommonOptions& opts) {
  const auto cfg = load(opts);
  const auto grid = mmf::run_experiment(cfg);
  fs::create_directories(opts.out);
  {
    auto json = open_out(fs::path(opts.out) / "report.json");
    mmf::emit_report_json(json, grid);
    auto text = open_out(fs::path(opts.out) / "report.txt");
    mmf::emit_report_text(text, grid);
  }
  const fs::path trials_dir = fs::path(opts.out) / "trials";
  fs::create_directories(trials_dir);
  for (const auto& c : grid.cells) {
    if (!c.ok) continue;
    auto csv = open_out(trials_dir / fmt::format("w{}_s{}_{}.csv", c.window + 1, c.scaling + 1, c.variant));
    mmf::write_trials_csv(csv, mmf::search_space_for(c.variant, cfg), c.trials);
  }
  mmf::emit_report_text(std::cout, grid);
  return grid.failed_cells() == 0 ? kExitOk : kExitPartial;
}

int run_scatter(const CommonOptions& opts) {
  const auto cfg = load(opts);
  const auto result = mmf::export_scatter_data(cfg, opts.out);
  std::cout << fmt::format("wrote {} files to {}\n", result.files.size(), opts.out);
  return result.skipped.empty() ? kExitOk : kExitPartial;
}

int run_synth(const CommonOptions& opts) {
  auto cfg = load(opts);
  if (opts.seed) cfg.synth.seed = *opts.seed;
  const auto markets = mmf::generate_coupled_markets(cfg.synth);
  fs::create_directories(opts.out);
  mmf::write_csv(fs::path(opts.out) / "domestic.csv", markets.pair.domestic);
  mmf::write_csv(fs::path(opts.out) / "foreign.csv", markets.pair.foreign);
  std::cout << fmt::format("wrote {} synthetic days; oracle hit ratio {:.4f}\n", cfg.synth.n_days,
                           mmf::oracle_hit_ratio(cfg.synth));
  return kExitOk;
}

int run_tune(const CommonOptions& opts, std::size_t window, std::size_t scaling, const std::string& variant) {
  const auto cfg = load(opts);
  const auto pair = mmf::load_pair(cfg);
  const auto windows = mmf::resolve_windows(cfg, pair);
  if (window < 1 || window > windows.size()) throw mmf::ConfigError("--window out of range");
  if (scaling < 1 || scaling > cfg.scalings.size()) throw mmf::ConfigError("--scaling out of range");
  const auto data = mmf::prepare_window(pair, windows[window - 1]);
  const auto tune = mmf::tune_cell(data, cfg.scalings[scaling - 1], variant, cfg,
                                   mmf::derive_seed(cfg.seed, window - 1, scaling - 1));
  fs::create_directories(opts.out);
  auto csv = open_out(fs::path(opts.out) / "trials.csv");
  mmf::write_trials_csv(csv, tune.space, tune.history);
  std::cout << fmt::format("best trial {} val_mse {}\n", tune.best.id, tune.best.loss);
  for (std::size_t d = 0; d < tune.space.size(); ++d) {
    const auto& dim = tune.space.dimensions()[d];
    std::cout << fmt::format("  {} = {}\n", dim.name, dim.choices[tune.best.config[d]]);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal fusion forecasting of daily domestic index returns"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  auto* run = app.add_subcommand("run", "Run the window x scaling x variant grid");
  add_common(run, run_opts);

  CommonOptions scatter_opts;
  auto* scatter = app.add_subcommand("scatter", "Export feature/target scatter data with OLS fits");
  add_common(scatter, scatter_opts);

  CommonOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Write a synthetic coupled-market dataset as CSV");
  add_common(synth, synth_opts);

  CommonOptions tune_opts;
  std::size_t tune_window = 1;
  std::size_t tune_scaling = 1;
  std::string tune_variant = "early";
  auto* tune = app.add_subcommand("tune", "Run one hyperparameter search and write its trials");
  add_common(tune, tune_opts);
  tune->add_option("--window", tune_window, "Window number (1-based)")->capture_default_str();
  tune->add_option("--scaling", tune_scaling, "Scaling range number (1-based)")->capture_default_str();
  tune->add_option("--variant", tune_variant, "Model variant")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_grid(run_opts);
    if (*scatter) return run_scatter(scatter_opts);
    if (*synth) return run_synth(synth_opts);
    if (*tune) return run_tune(tune_opts, tune_window, tune_scaling, tune_variant);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFatal;
  }
  return kExitFatal;
}
