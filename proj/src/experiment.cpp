#include "mmfusion/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <thread>

#include "mmfusion/error.hpp"

namespace mmf {

namespace {

using json = nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_list(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_value(std::string_view key, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!synthetic && (domestic_csv.empty() || foreign_csv.empty())) {
    throw ConfigError("data.domestic and data.foreign are required unless synthetic.enabled = true");
  }
  if (synthetic) synth.validate();
  for (const auto& w : windows) {
    if (!(w.start < w.end)) {
      throw ConfigError(fmt::format("window {}:{} must start before it ends", format_date(w.start),
                                    format_date(w.end)));
    }
  }
  if (scalings.empty()) throw ConfigError("experiment.scalings must not be empty");
  for (const auto& r : scalings) {
    if (!(r.hi > r.lo)) throw ConfigError(fmt::format("scaling range {} is empty", format_range(r)));
  }
  if (variants.empty()) throw ConfigError("experiment.variants must not be empty");
  for (const auto& v : variants) with_variant(ModelSpec{}, v);
  tpe.validate();
  if (patience < 1 || patience >= max_epochs) throw ConfigError("train.patience must lie in [1, max_epochs)");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("model.lambda must lie in [0, 1]");
  if (scatter_target != "octc" && scatter_target != "dotc") {
    throw ConfigError("scatter.target must be octc or dotc");
  }
  if (jobs < 1) throw ConfigError("experiment.jobs must be >= 1");
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  auto resolve = [&](std::string_view p) {
    std::filesystem::path path{std::string(p)};
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("config line {}: expected key = value", line_no));
    }
    const std::string key(trim(text.substr(0, eq)));
    const std::string_view value = trim(text.substr(eq + 1));

    if (key == "data.domestic") cfg.domestic_csv = resolve(value);
    else if (key == "data.foreign") cfg.foreign_csv = resolve(value);
    else if (key == "data.domestic_id") cfg.domestic_id = value;
    else if (key == "data.foreign_id") cfg.foreign_id = value;
    else if (key == "synthetic.enabled") cfg.synthetic = parse_bool(key, value);
    else if (key == "synthetic.n_days") cfg.synth.n_days = parse_value<std::size_t>(key, value);
    else if (key == "synthetic.coupling") cfg.synth.coupling = parse_value<double>(key, value);
    else if (key == "synthetic.noise_sd") cfg.synth.noise_sd = parse_value<double>(key, value);
    else if (key == "synthetic.domestic_sd") cfg.synth.domestic_sd = parse_value<double>(key, value);
    else if (key == "synthetic.foreign_sd") cfg.synth.foreign_sd = parse_value<double>(key, value);
    else if (key == "synthetic.shape_sd") cfg.synth.shape_sd = parse_value<double>(key, value);
    else if (key == "synthetic.seed") cfg.synth.seed = parse_value<std::uint64_t>(key, value);
    else if (key == "synthetic.start") cfg.synth.start = parse_date(value);
    else if (key == "experiment.windows") {
      cfg.windows.clear();
      for (auto item : split_list(value, ',')) {
        const auto parts = split_list(item, ':');
        if (parts.size() != 2) throw ConfigError(fmt::format("{}: expected START:END, got '{}'", key, item));
        cfg.windows.push_back({parse_date(parts[0]), parse_date(parts[1])});
      }
    } else if (key == "experiment.scalings") {
      cfg.scalings.clear();
      for (auto item : split_list(value, ',')) {
        const auto parts = split_list(item, ':');
        if (parts.size() != 2) throw ConfigError(fmt::format("{}: expected LO:HI, got '{}'", key, item));
        cfg.scalings.push_back({parse_value<double>(key, parts[0]), parse_value<double>(key, parts[1])});
      }
    } else if (key == "experiment.variants") {
      cfg.variants.clear();
      for (auto item : split_list(value, ',')) cfg.variants.emplace_back(item);
    } else if (key == "experiment.seed") cfg.seed = parse_value<std::uint64_t>(key, value);
    else if (key == "experiment.jobs") cfg.jobs = parse_value<std::size_t>(key, value);
    else if (key == "tpe.trials") cfg.tpe.max_trials = parse_value<std::size_t>(key, value);
    else if (key == "tpe.gamma") cfg.tpe.gamma = parse_value<double>(key, value);
    else if (key == "tpe.startup") cfg.tpe.n_startup = parse_value<std::size_t>(key, value);
    else if (key == "tpe.candidates") cfg.tpe.n_candidates = parse_value<std::size_t>(key, value);
    else if (key == "train.max_epochs") cfg.max_epochs = parse_value<std::size_t>(key, value);
    else if (key == "train.patience") cfg.patience = parse_value<std::size_t>(key, value);
    else if (key == "train.batch_norm") cfg.batch_norm = parse_bool(key, value);
    else if (key == "model.lambda") cfg.lambda = parse_value<double>(key, value);
    else if (key == "scatter.target") cfg.scatter_target = value;
    else if (key == "scatter.bootstrap") cfg.scatter_bootstrap = parse_value<std::size_t>(key, value);
    else if (key == "scatter.level") cfg.scatter_level = parse_value<double>(key, value);
    else throw ConfigError(fmt::format("config line {}: unknown key '{}'", line_no, key));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  return parse_config(in, path.parent_path());
}

std::vector<Window> default_windows() {
  using namespace std::chrono;
  const Date end{year{2017}, December, day{31}};
  return {{Date{year{2006}, January, day{1}}, end},
          {Date{year{2010}, January, day{1}}, end},
          {Date{year{2014}, January, day{1}}, end}};
}

std::vector<Window> resolve_windows(const ExperimentConfig& cfg, const AlignedPair& pair) {
  if (!cfg.windows.empty()) return cfg.windows;
  if (cfg.synthetic) return {{pair.dates.front(), pair.dates.back()}};
  return default_windows();
}

AlignedPair load_pair(const ExperimentConfig& cfg) {
  if (cfg.synthetic) return generate_coupled_markets(cfg.synth).pair;
  return align_calendars(parse_csv(cfg.domestic_csv, cfg.domestic_id),
                         parse_csv(cfg.foreign_csv, cfg.foreign_id));
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  // splitmix64 finaliser over a running combination.
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (auto v : {a, b, c}) h = mix(h ^ mix(v));
  return h;
}

WindowData prepare_window(const AlignedPair& pair, const Window& window) {
  WindowData out;
  out.window = window;
  out.matrix = build_matrix(restrict_to_window(pair, window.start, window.end));
  out.split = chronological_split(out.matrix.size());
  return out;
}

Baselines compute_baselines(const FeatureMatrix& matrix) {
  if (matrix.size() < 2) throw DataError("baselines need at least 2 rows");
  std::vector<double> domestic;
  std::vector<double> foreign;
  std::vector<double> targets;
  for (const auto& row : matrix.rows) {
    domestic.push_back(row.domestic.octc);
    foreign.push_back(row.foreign.octc);
    targets.push_back(row.target);
  }
  std::vector<double> domestic_series = domestic;
  domestic_series.push_back(targets.back());
  return {baseline_momentum_domestic(domestic_series), baseline_momentum_foreign(foreign, targets),
          baseline_buy_hold(targets)};
}

SearchSpace search_space_for(std::string_view variant, const ExperimentConfig& cfg) {
  SearchSpace base = SearchSpace::fusion_default(variant == "intermediate");
  SearchSpace out;
  for (const auto& d : base.dimensions()) {
    if (d.name == "epochs") {
      out.add(d.name, {std::to_string(cfg.max_epochs)});
    } else {
      out.add(d.name, d.choices);
    }
  }
  return out;
}

ModelSpec model_spec_for(const SearchSpace& space, const TrialConfig& config, std::string_view variant,
                         const ExperimentConfig& cfg) {
  ModelSpec spec = with_variant(ModelSpec{}, variant);
  spec.hidden.layers = static_cast<std::size_t>(space.number(config, "hidden_layers"));
  spec.hidden.units = static_cast<std::size_t>(space.number(config, "hidden_units"));
  spec.hidden.dropout = space.number(config, "dropout");
  spec.hidden.activation = parse_activation(space.value(config, "activation"));
  spec.hidden.batch_norm = cfg.batch_norm;
  spec.head_layers = spec.variant == Variant::intermediate_fusion
                         ? static_cast<std::size_t>(space.number(config, "head_layers"))
                         : spec.hidden.layers;
  spec.lambda = cfg.lambda;
  return spec;
}

TrainConfig train_config_for(const SearchSpace& space, const TrialConfig& config,
                             const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig tc;
  tc.batch_size = static_cast<std::size_t>(space.number(config, "batch_size"));
  tc.optimizer = parse_optimizer(space.value(config, "optimizer"));
  tc.learning_rate = space.number(config, "learning_rate");
  tc.max_epochs = static_cast<std::size_t>(space.number(config, "epochs"));
  tc.patience = cfg.patience;
  tc.seed = seed;
  return tc;
}

std::uint64_t trial_seed(std::uint64_t cell_seed, std::size_t trial_id) {
  return derive_seed(cell_seed, 0x7121A1, trial_id);
}

namespace {

FusionModel train_trial(const TuneOutcome& tune, const TrialConfig& config, std::string_view variant,
                        const DataSplit& split, const ExperimentConfig& cfg, std::uint64_t seed) {
  const ModelSpec spec = model_spec_for(tune.space, config, variant, cfg);
  const TrainConfig tc = train_config_for(tune.space, config, cfg, derive_seed(seed, 1));
  return train(build_model(spec, seed), tune.data, split, tc).model;
}

}  // namespace

TuneOutcome tune_cell(const WindowData& window, ScalingRange range, std::string_view variant,
                      const ExperimentConfig& cfg, std::uint64_t cell_seed) {
  TuneOutcome out;
  out.cell_seed = cell_seed;
  out.space = search_space_for(variant, cfg);
  out.scaler = fit_scaler(window.matrix, window.split, range);
  out.data = apply_scaler(window.matrix, out.scaler);

  TpeConfig tpe = cfg.tpe;
  tpe.seed = derive_seed(cell_seed, 0x79E);
  std::size_t next_trial = 0;
  auto objective = [&](const TrialConfig& config) {
    const auto seed = trial_seed(cell_seed, next_trial++);
    const FusionModel model = train_trial(out, config, variant, window.split, cfg, seed);
    return evaluate_validation(model, out.data, window.split);
  };
  auto result = optimize(objective, out.space, tpe);
  out.history = std::move(result.history);
  out.best = result.best;
  return out;
}

CellResult run_cell(const WindowData& window, ScalingRange range, std::string_view variant,
                    const ExperimentConfig& cfg, std::uint64_t cell_seed) {
  CellResult cell;
  cell.variant = variant;
  const TuneOutcome tune = tune_cell(window, range, variant, cfg, cell_seed);
  cell.trials = tune.history;
  cell.best_config = tune.best.config;

  const FusionModel model = train_trial(tune, tune.best.config, variant, window.split, cfg,
                                        trial_seed(cell_seed, tune.best.id));
  cell.val_mse = evaluate_validation(model, tune.data, window.split);

  // Test rows are touched only here, after every fitting decision.
  const auto& test = window.split.test;
  const Vector scaled = predict_range(model, tune.data, test);
  std::vector<double> predictions(static_cast<std::size_t>(scaled.size()));
  std::vector<double> actuals(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    predictions[i] = tune.scaler.inverse_transform(scaled(static_cast<Eigen::Index>(i)), kTargetColumn);
    actuals[i] = window.matrix.rows[test.begin + i].target;
  }
  cell.test = evaluate_forecast(predictions, actuals);
  cell.ok = true;
  return cell;
}

std::size_t ExperimentGrid::failed_cells() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return !c.ok; }));
}

ExperimentGrid run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const AlignedPair pair = load_pair(cfg);
  const auto windows = resolve_windows(cfg, pair);

  ExperimentGrid grid;
  grid.domestic_id = cfg.synthetic ? pair.domestic.market_id : cfg.domestic_id;
  grid.foreign_id = cfg.synthetic ? pair.foreign.market_id : cfg.foreign_id;
  grid.seed = cfg.seed;
  grid.scalings = cfg.scalings;
  grid.variants = cfg.variants;

  std::vector<std::optional<WindowData>> prepared(windows.size());
  std::vector<std::string> window_errors(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    WindowSummary summary;
    summary.window = windows[w];
    try {
      prepared[w] = prepare_window(pair, windows[w]);
      summary.rows = prepared[w]->matrix.size();
      summary.split = prepared[w]->split;
      summary.baselines = compute_baselines(prepared[w]->matrix);
    } catch (const std::exception& e) {
      prepared[w].reset();
      window_errors[w] = e.what();
    }
    grid.windows.push_back(std::move(summary));
  }

  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (std::size_t s = 0; s < cfg.scalings.size(); ++s) {
      for (const auto& v : cfg.variants) {
        CellResult cell;
        cell.window = w;
        cell.scaling = s;
        cell.variant = v;
        grid.cells.push_back(std::move(cell));
      }
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.cells.size(); i = next++) {
      auto& cell = grid.cells[i];
      const auto v = static_cast<std::size_t>(
          std::find(cfg.variants.begin(), cfg.variants.end(), cell.variant) - cfg.variants.begin());
      if (!prepared[cell.window]) {
        cell.error = window_errors[cell.window];
        continue;
      }
      try {
        CellResult done = run_cell(*prepared[cell.window], cfg.scalings[cell.scaling], cell.variant, cfg,
                                   derive_seed(cfg.seed, cell.window, cell.scaling, v));
        done.window = cell.window;
        done.scaling = cell.scaling;
        cell = std::move(done);
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.jobs, grid.cells.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return grid;
}

MeanSd mean_sd(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

std::string format_mse_e5(double mse) { return fmt::format("{:.3f}", mse * 1e5); }

namespace {

struct VariantSummary {
  MeanSd hit;
  MeanSd mse;
  std::size_t cells = 0;
};

VariantSummary summarize(const ExperimentGrid& grid, const std::string& variant,
                         std::optional<std::size_t> window) {
  std::vector<double> hits;
  std::vector<double> mses;
  for (const auto& c : grid.cells) {
    if (!c.ok || c.variant != variant || (window && c.window != *window)) continue;
    hits.push_back(c.test.hit_ratio);
    mses.push_back(c.test.mse);
  }
  return {mean_sd(hits), mean_sd(mses), hits.size()};
}

json summary_json(const VariantSummary& s) {
  json j;
  j["cells"] = s.cells;
  j["hit_ratio_mean"] = s.hit.mean;
  j["hit_ratio_sd"] = s.hit.sd;
  j["mse_mean"] = s.mse.mean;
  j["mse_sd"] = s.mse.sd;
  return j;
}

std::string format_cell(const CellResult& c) {
  if (!c.ok) return "failed";
  return fmt::format("{:.3f} ({})", c.test.hit_ratio, format_mse_e5(c.test.mse));
}

std::string format_summary(const VariantSummary& s) {
  if (s.cells == 0) return "-";
  return fmt::format("{:.3f}+/-{:.3f}", s.hit.mean, s.hit.sd);
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) line += "  ";
      line += fmt::format("{:<{}}", row[i], widths[i]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
}

}  // namespace

void emit_report_json(std::ostream& out, const ExperimentGrid& grid) {
  json doc;
  doc["domestic"] = grid.domestic_id;
  doc["foreign"] = grid.foreign_id;
  doc["seed"] = grid.seed;
  doc["mse_unit"] = "squared return";

  json windows = json::array();
  for (std::size_t w = 0; w < grid.windows.size(); ++w) {
    const auto& ws = grid.windows[w];
    json jw;
    jw["id"] = w + 1;
    jw["start"] = format_date(ws.window.start);
    jw["end"] = format_date(ws.window.end);
    jw["rows"] = ws.rows;
    jw["train_rows"] = ws.split.train.size();
    jw["validation_rows"] = ws.split.validation.size();
    jw["test_rows"] = ws.split.test.size();
    if (ws.rows > 0) {
      jw["baselines"] = {{"momentum_domestic", ws.baselines.momentum_domestic.hit_ratio},
                         {"momentum_foreign", ws.baselines.momentum_foreign.hit_ratio},
                         {"buy_hold", ws.baselines.buy_hold.hit_ratio}};
    }
    json summary;
    for (const auto& v : grid.variants) summary[v] = summary_json(summarize(grid, v, w));
    jw["summary"] = summary;
    windows.push_back(jw);
  }
  doc["windows"] = windows;

  json cells = json::array();
  for (const auto& c : grid.cells) {
    json jc;
    jc["window"] = c.window + 1;
    jc["scaling"] = format_range(grid.scalings[c.scaling]);
    jc["variant"] = c.variant;
    jc["status"] = c.ok ? "ok" : "failed";
    if (c.ok) {
      jc["hit_ratio"] = c.test.hit_ratio;
      jc["mse"] = c.test.mse;
      jc["n_days"] = c.test.n_days;
      jc["val_mse_scaled"] = c.val_mse;
      jc["trials"] = c.trials.size();
      const SearchSpace space = SearchSpace::fusion_default(c.variant == "intermediate");
      json config;
      for (std::size_t d = 0; d < c.best_config.size() && d < space.size(); ++d) {
        // epochs may be overridden; report the tuned dimensions only.
        if (space.dimensions()[d].name == "epochs") continue;
        config[space.dimensions()[d].name] = space.dimensions()[d].choices[c.best_config[d]];
      }
      jc["best_config"] = config;
    } else {
      jc["error"] = c.error;
    }
    cells.push_back(jc);
  }
  doc["cells"] = cells;

  json overall;
  for (const auto& v : grid.variants) overall[v] = summary_json(summarize(grid, v, std::nullopt));
  doc["overall"] = overall;
  out << doc.dump(2) << '\n';
}

void emit_report_text(std::ostream& out, const ExperimentGrid& grid) {
  out << fmt::format("Hit ratio (MSE x 1e-5) on test rows: domestic {}, foreign {}, seed {}\n",
                     grid.domestic_id, grid.foreign_id, grid.seed);
  std::vector<std::string> header{"Scaling"};
  header.insert(header.end(), grid.variants.begin(), grid.variants.end());

  for (std::size_t w = 0; w < grid.windows.size(); ++w) {
    const auto& ws = grid.windows[w];
    out << fmt::format("\nWindow {}: {} .. {}  rows {}  (train {}, validation {}, test {})\n", w + 1,
                       format_date(ws.window.start), format_date(ws.window.end), ws.rows,
                       ws.split.train.size(), ws.split.validation.size(), ws.split.test.size());
    std::vector<std::vector<std::string>> rows{header};
    for (std::size_t s = 0; s < grid.scalings.size(); ++s) {
      std::vector<std::string> row{format_range(grid.scalings[s])};
      for (const auto& v : grid.variants) {
        for (const auto& c : grid.cells) {
          if (c.window == w && c.scaling == s && c.variant == v) row.push_back(format_cell(c));
        }
      }
      rows.push_back(std::move(row));
    }
    std::vector<std::string> summary{"Mean+/-SD"};
    for (const auto& v : grid.variants) summary.push_back(format_summary(summarize(grid, v, w)));
    rows.push_back(std::move(summary));
    print_table(out, rows);
    if (ws.rows > 0) {
      out << fmt::format("Rule baselines: momentum_domestic {:.3f}  momentum_foreign {:.3f}  buy_hold {:.3f}\n",
                         ws.baselines.momentum_domestic.hit_ratio, ws.baselines.momentum_foreign.hit_ratio,
                         ws.baselines.buy_hold.hit_ratio);
    }
  }

  out << "\nAll windows\n";
  std::vector<std::vector<std::string>> rows{header};
  std::vector<std::string> summary{"Mean+/-SD"};
  for (const auto& v : grid.variants) summary.push_back(format_summary(summarize(grid, v, std::nullopt)));
  rows.push_back(std::move(summary));
  print_table(out, rows);

  for (const auto& c : grid.cells) {
    if (!c.ok) {
      out << fmt::format("failed: window {} scaling {} {}: {}\n", c.window + 1,
                         format_range(grid.scalings[c.scaling]), c.variant, c.error);
    }
  }
}

ScatterExport export_scatter_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const AlignedPair pair = load_pair(cfg);
  const auto window = resolve_windows(cfg, pair).front();
  const FeatureMatrix matrix = build_matrix(restrict_to_window(pair, window.start, window.end));
  std::filesystem::create_directories(out_dir);

  const bool next_dotc = cfg.scatter_target == "dotc";
  const std::size_t n = next_dotc ? matrix.size() - 1 : matrix.size();
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = next_dotc ? matrix.rows[i + 1].domestic.dotc : matrix.rows[i].target;
  }

  ScatterExport result;
  const std::array<std::string, 2> markets{lower(matrix.domestic_id), lower(matrix.foreign_id)};
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const auto feature = kAllFeatures[f];
      std::vector<double> x(n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = m == 0 ? matrix.rows[i].domestic[feature] : matrix.rows[i].foreign[feature];
      }
      const std::string stem = fmt::format("scatter_{}_{}", markets[m], feature_name(feature));
      RegressionFit fit;
      try {
        fit = fit_with_ci(x, target, cfg.scatter_bootstrap, cfg.scatter_level,
                          derive_seed(cfg.seed, 0x5CA7, m, f));
      } catch (const DataError& e) {
        std::cerr << fmt::format("warning: skipping {}: {}\n", stem, e.what());
        result.skipped.push_back(stem);
        continue;
      }
      const auto csv_path = out_dir / (stem + ".csv");
      std::ofstream csv(csv_path);
      if (!csv) throw DataError(fmt::format("cannot write '{}'", csv_path.string()));
      csv << fmt::format("date,{}_{},target_{}_next\n", markets[m], feature_name(feature), cfg.scatter_target);
      for (std::size_t i = 0; i < n; ++i) {
        csv << fmt::format("{},{},{}\n", format_date(matrix.rows[i].date), x[i], target[i]);
      }

      json j;
      j["market"] = m == 0 ? matrix.domestic_id : matrix.foreign_id;
      j["feature"] = feature_name(feature);
      j["target"] = fmt::format("{}_next", cfg.scatter_target);
      j["n"] = n;
      j["beta0"] = fit.beta0;
      j["beta1"] = fit.beta1;
      j["ci_level"] = cfg.scatter_level;
      j["ci_low"] = fit.ci_low;
      j["ci_high"] = fit.ci_high;
      j["n_boot"] = fit.n_boot;
      j["degenerate_ci"] = fit.degenerate_ci;
      const auto json_path = out_dir / (stem + ".json");
      std::ofstream js(json_path);
      if (!js) throw DataError(fmt::format("cannot write '{}'", json_path.string()));
      js << j.dump(2) << '\n';
      result.files.push_back(csv_path);
      result.files.push_back(json_path);
    }
  }
  return result;
}

}  // namespace mmf
