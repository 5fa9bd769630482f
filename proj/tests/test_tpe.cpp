#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "mmfusion/error.hpp"
#include "mmfusion/tpe.hpp"

using namespace mmf;

namespace {

Trial trial(std::size_t id, double loss, TrialConfig config = {0}) {
  return Trial{id, std::move(config), loss, TrialStatus::completed};
}

SearchSpace units_only() {
  SearchSpace s;
  s.add("hidden_layers", {"2"})
      .add("hidden_units", {"2", "4", "8", "16"})
      .add("learning_rate", {"0.001"});
  return s;
}

double units_loss(const SearchSpace& space, const TrialConfig& c) {
  const double u = space.number(c, "hidden_units");
  return (u - 8.0) * (u - 8.0);
}

}  // namespace

TEST_CASE("split_good_bad sizes") {
  std::vector<Trial> t;
  for (std::size_t i = 0; i < 20; ++i) t.push_back(trial(i, static_cast<double>(20 - i)));
  auto [good, bad] = split_good_bad(t, 0.25);
  CHECK(good.size() == 5);
  CHECK(bad.size() == 15);
  for (const auto& g : good) CHECK(g.id >= 15);

  std::vector<Trial> two{trial(0, 1.0), trial(1, 2.0)};
  CHECK(split_good_bad(two, 0.25).first.size() == 1);
  CHECK_THROWS_AS(split_good_bad(std::span<const Trial>(two.data(), 1), 0.25), ConfigError);
}

TEST_CASE("split_good_bad breaks ties by trial id") {
  std::vector<Trial> t{trial(3, 1.0), trial(1, 1.0)};
  const auto [good, bad] = split_good_bad(t, 0.25);
  REQUIRE(good.size() == 1);
  CHECK(good[0].id == 1);
  CHECK(bad[0].id == 3);
}

TEST_CASE("split_good_bad partitions every completed trial exactly once") {
  Rng rng(1);
  std::uniform_int_distribution<int> loss(0, 5);
  for (std::size_t n = 2; n < 60; ++n) {
    std::vector<Trial> t;
    for (std::size_t i = 0; i < n; ++i) t.push_back(trial(i, loss(rng)));
    const auto [good, bad] = split_good_bad(t, 0.25);
    CHECK(good.size() == static_cast<std::size_t>(std::ceil(0.25 * static_cast<double>(n))));
    std::set<std::size_t> ids;
    for (const auto& x : good) ids.insert(x.id);
    for (const auto& x : bad) ids.insert(x.id);
    CHECK(ids.size() == n);
    double worst_good = -1;
    for (const auto& x : good) worst_good = std::max(worst_good, x.loss);
    for (const auto& x : bad) CHECK(x.loss >= worst_good);
  }
}

TEST_CASE("parzen_categorical_weights examples") {
  const std::vector<std::size_t> obs{0, 0, 0, 1, 2};
  const auto w = parzen_categorical_weights(obs, 3);
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(0.25));
  CHECK(w[2] == doctest::Approx(0.25));

  const auto uniform = parzen_categorical_weights({}, 4);
  for (double x : uniform) CHECK(x == doctest::Approx(0.25));

  const std::vector<std::size_t> same(7, 0);
  const auto skew = parzen_categorical_weights(same, 2);
  CHECK(skew[0] == doctest::Approx(8.0 / 9.0));
  CHECK(skew[1] == doctest::Approx(1.0 / 9.0));

  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(parzen_categorical_weights(bad, 3), ConfigError);
}

TEST_CASE("parzen weights are normalized and strictly positive") {
  Rng rng(2);
  for (std::size_t k = 1; k < 12; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::vector<std::size_t> obs(rng() % 40);
    for (auto& o : obs) o = pick(rng);
    const auto w = parzen_categorical_weights(obs, k);
    CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) <= 1e-12);
    for (double x : w) CHECK(x > 0.0);
  }
}

TEST_CASE("SearchSpace lookups") {
  const auto s = SearchSpace::fusion_default();
  CHECK(s.size() == 8);
  CHECK(s.dimensions()[s.index_of("hidden_units")].choices == std::vector<std::string>{"2", "4", "8", "16"});
  CHECK(s.dimensions()[s.index_of("optimizer")].choices == std::vector<std::string>{"rmsprop", "adam", "sgd"});
  CHECK(SearchSpace::fusion_default(true).size() == 9);
  CHECK_THROWS_AS(s.index_of("momentum"), ConfigError);
  const TrialConfig c{1, 2, 0, 2, 1, 0, 0, 0};
  CHECK(s.contains(c));
  CHECK(s.number(c, "hidden_units") == 8.0);
  CHECK(s.value(c, "optimizer") == "adam");
  CHECK(s.number(c, "batch_size") == 128.0);
  CHECK_FALSE(s.contains(TrialConfig{2, 0, 0, 0, 0, 0, 0, 0}));
  CHECK_FALSE(s.contains(TrialConfig{0, 0}));
  SearchSpace empty;
  CHECK_THROWS_AS(empty.add("x", {}), ConfigError);
}

TEST_CASE("TpeConfig validation") {
  TpeConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TpeConfig{};
  c.n_candidates = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("suggest stays inside the space and honours singletons") {
  const auto space = SearchSpace::fusion_default(true);
  TpeConfig cfg;
  Rng rng(3);
  std::vector<Trial> history;
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < 40; ++i) {
    auto c = suggest(history, space, cfg, rng);
    CHECK(space.contains(c));
    CHECK(space.value(c, "learning_rate") == "0.001");
    CHECK(space.value(c, "epochs") == "100");
    history.push_back(trial(i, u(rng), c));
  }
}

TEST_CASE("suggest samples uniformly during startup") {
  const auto space = units_only();
  TpeConfig cfg;
  Rng rng(4);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 40000; ++i) ++counts[suggest({}, space, cfg, rng)[1]];
  for (int c : counts) CHECK(std::abs(c / 40000.0 - 0.25) < 0.01);
}

TEST_CASE("suggest concentrates on the optimum after startup") {
  const auto space = units_only();
  TpeConfig cfg;
  cfg.seed = 5;
  cfg.max_trials = 60;
  const auto result = optimize([&](const TrialConfig& c) { return units_loss(space, c); }, space, cfg);
  std::size_t eights = 0;
  std::size_t guided = 0;
  for (const auto& t : result.history) {
    if (t.id < cfg.n_startup) continue;
    ++guided;
    if (space.value(t.config, "hidden_units") == "8") ++eights;
  }
  CHECK(static_cast<double>(eights) / static_cast<double>(guided) > 0.25);
}

TEST_CASE("optimize finds hidden_units = 8 within 30 trials in at least 90 of 100 runs") {
  const auto space = units_only();
  int found = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    TpeConfig cfg;
    cfg.seed = seed;
    cfg.max_trials = 30;
    const auto r = optimize([&](const TrialConfig& c) { return units_loss(space, c); }, space, cfg);
    CHECK(r.history.size() == 30);
    if (space.value(r.best.config, "hidden_units") == "8") ++found;
  }
  CHECK(found >= 90);
}

TEST_CASE("optimize degenerate budgets and landscapes") {
  const auto space = units_only();
  TpeConfig cfg;
  cfg.max_trials = 1;
  auto r = optimize([](const TrialConfig&) { return 3.0; }, space, cfg);
  REQUIRE(r.history.size() == 1);
  CHECK(r.best.id == r.history[0].id);
  CHECK(r.best.loss == 3.0);

  cfg.max_trials = 25;
  r = optimize([](const TrialConfig&) { return 1.0; }, space, cfg);
  CHECK(r.history.size() == 25);
  CHECK(r.best.loss == 1.0);

  SearchSpace single;
  single.add("a", {"x"}).add("b", {"y"});
  r = optimize([](const TrialConfig&) { return 2.0; }, single, cfg);
  for (const auto& t : r.history) CHECK(t.config == TrialConfig{0, 0});
}

TEST_CASE("failed trials are recorded and excluded") {
  const auto space = units_only();
  TpeConfig cfg;
  cfg.max_trials = 30;
  cfg.seed = 7;
  const auto r = optimize(
      [&](const TrialConfig& c) {
        const double u = space.number(c, "hidden_units");
        if (u == 2.0) return std::nan("");
        if (u == 16.0) throw TrainingError("diverged");
        return units_loss(space, c);
      },
      space, cfg);
  CHECK(r.history.size() == 30);
  std::size_t failed = 0;
  for (const auto& t : r.history) {
    const double u = space.number(t.config, "hidden_units");
    if (u == 2.0 || u == 16.0) {
      CHECK(t.status == TrialStatus::failed);
      ++failed;
    } else {
      CHECK(t.status == TrialStatus::completed);
    }
  }
  CHECK(failed > 0);
  CHECK(r.best.status == TrialStatus::completed);

  CHECK_THROWS_AS(optimize([](const TrialConfig&) -> double { throw TrainingError("no"); }, space, cfg), TrainingError);
}

TEST_CASE("optimize is deterministic in its seed") {
  const auto space = SearchSpace::fusion_default();
  TpeConfig cfg;
  cfg.seed = 99;
  cfg.max_trials = 30;
  auto objective = [&](const TrialConfig& c) {
    return std::abs(space.number(c, "hidden_units") - 4.0) + space.number(c, "dropout") +
           (space.value(c, "optimizer") == "adam" ? 0.0 : 1.0);
  };
  const auto a = optimize(objective, space, cfg);
  const auto b = optimize(objective, space, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].config == b.history[i].config);
    CHECK(a.history[i].loss == b.history[i].loss);
  }
}

TEST_CASE("TrialStore serializes concurrent suggestions") {
  const auto space = units_only();
  TpeConfig cfg;
  cfg.max_trials = 200;
  TrialStore store(space, cfg);
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&] {
      for (int i = 0; i < 25; ++i) {
        auto c = store.suggest();
        const double loss = units_loss(space, c);
        store.record(std::move(c), loss);
      }
    });
  }
  for (auto& t : workers) t.join();
  const auto h = store.history();
  CHECK(h.size() == 100);
  std::set<std::size_t> ids;
  for (const auto& t : h) ids.insert(t.id);
  CHECK(ids.size() == 100);
}

TEST_CASE("trial history CSV") {
  const auto space = units_only();
  std::vector<Trial> t{trial(0, 0.5, {0, 2, 0}), Trial{1, {0, 3, 0}, std::nan(""), TrialStatus::failed}};
  std::ostringstream out;
  write_trials_csv(out, space, t);
  CHECK(out.str() ==
        "trial_id,hidden_layers,hidden_units,learning_rate,val_mse,status\n"
        "0,2,8,0.001,0.5,completed\n"
        "1,2,16,0.001,nan,failed\n");
}
