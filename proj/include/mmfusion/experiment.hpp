#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mmfusion/evaluation.hpp"
#include "mmfusion/features.hpp"
#include "mmfusion/market_data.hpp"
#include "mmfusion/models.hpp"
#include "mmfusion/synthetic.hpp"
#include "mmfusion/tpe.hpp"
#include "mmfusion/training.hpp"

namespace mmf {

struct Window {
  Date start;
  Date end;
};

struct ExperimentConfig {
  std::filesystem::path domestic_csv;
  std::filesystem::path foreign_csv;
  std::string domestic_id = "KO";
  std::string foreign_id = "SP";

  bool synthetic = false;
  SynthConfig synth;

  /// Empty means the defaults: 2006/2010/2014 through 2017 for market data,
  /// the full generated range in synthetic mode.
  std::vector<Window> windows;
  std::vector<ScalingRange> scalings = {{-1.0, 1.0}, {0.0, 1.0}, {-0.5, 0.5}};
  std::vector<std::string> variants = {"domestic_only", "foreign_only", "late", "early",
                                       "intermediate"};

  TpeConfig tpe;  // seed is derived per cell
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  bool batch_norm = true;
  double lambda = 0.5;

  std::string scatter_target = "octc";  // next-day domestic octc or dotc
  std::size_t scatter_bootstrap = 1000;
  double scatter_level = 0.95;

  std::uint64_t seed = 42;
  std::size_t jobs = 1;

  void validate() const;
};

/// Plain-text `section.key = value` lines; '#' starts a comment. Unknown keys
/// are errors. Relative data paths resolve against `base_dir`.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

std::vector<Window> default_windows();
/// Windows after applying defaults for the given data.
std::vector<Window> resolve_windows(const ExperimentConfig& cfg, const AlignedPair& pair);

AlignedPair load_pair(const ExperimentConfig& cfg);

/// Deterministic seed for a grid coordinate.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

struct WindowData {
  Window window;
  FeatureMatrix matrix;
  DataSplit split;
};

WindowData prepare_window(const AlignedPair& pair, const Window& window);

struct Baselines {
  EvalReport momentum_domestic;
  EvalReport momentum_foreign;
  EvalReport buy_hold;
};

/// Rule baselines over every row of a window.
Baselines compute_baselines(const FeatureMatrix& matrix);

/// Model and training settings decoded from one point of the search space.
ModelSpec model_spec_for(const SearchSpace& space, const TrialConfig& config, std::string_view variant,
                         const ExperimentConfig& cfg);
TrainConfig train_config_for(const SearchSpace& space, const TrialConfig& config,
                             const ExperimentConfig& cfg, std::uint64_t seed);
SearchSpace search_space_for(std::string_view variant, const ExperimentConfig& cfg);

/// Everything decided from training and validation rows alone.
struct TuneOutcome {
  SearchSpace space;
  MinMaxScaler scaler;
  ScaledDataset data;
  std::vector<Trial> history;
  Trial best;
  std::uint64_t cell_seed = 0;
};

TuneOutcome tune_cell(const WindowData& window, ScalingRange range, std::string_view variant,
                      const ExperimentConfig& cfg, std::uint64_t cell_seed);

/// Seed used to train trial `trial_id` of a cell.
std::uint64_t trial_seed(std::uint64_t cell_seed, std::size_t trial_id);

struct CellResult {
  std::size_t window = 0;
  std::size_t scaling = 0;
  std::string variant;
  bool ok = false;
  std::string error;
  EvalReport test;  // denormalized test metrics
  double val_mse = 0.0;
  TrialConfig best_config;
  std::vector<Trial> trials;
};

/// Tune, retrain the selected configuration and score it on the test rows.
CellResult run_cell(const WindowData& window, ScalingRange range, std::string_view variant,
                    const ExperimentConfig& cfg, std::uint64_t cell_seed);

struct WindowSummary {
  Window window;
  std::size_t rows = 0;
  DataSplit split;
  Baselines baselines;
};

struct ExperimentGrid {
  std::string domestic_id;
  std::string foreign_id;
  std::uint64_t seed = 0;
  std::vector<ScalingRange> scalings;
  std::vector<std::string> variants;
  std::vector<WindowSummary> windows;
  std::vector<CellResult> cells;  // ordered by (window, scaling, variant)

  std::size_t failed_cells() const;
};

/// Runs every (window, scaling, variant) cell on `cfg.jobs` workers. Cell
/// failures are recorded in the grid rather than thrown.
ExperimentGrid run_experiment(const ExperimentConfig& cfg);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
};

MeanSd mean_sd(std::span<const double> values);

/// JSON document and aligned text table; both deterministic.
void emit_report_json(std::ostream& out, const ExperimentGrid& grid);
void emit_report_text(std::ostream& out, const ExperimentGrid& grid);

/// Formats an MSE in units of 1e-5 with three decimals ("4.781").
std::string format_mse_e5(double mse);

struct ScatterExport {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> skipped;  // features with a constant column
};

/// One CSV of (feature_t, target_{t+1}) pairs and one JSON fit summary per
/// domestic and foreign feature, over the first window.
ScatterExport export_scatter_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace mmf
