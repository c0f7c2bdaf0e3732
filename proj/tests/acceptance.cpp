// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. The end-to-end criteria drive the shared library through
// its C interface, like the command-line tool does.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <unistd.h>

#include "evade/csv.hpp"
#include "evade/ddpg.hpp"
#include "evade/evade.h"
#include "evade/mlp.hpp"
#include "evade/rng.hpp"
#include "evade/ssm.hpp"
#include "evade/stats.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

namespace fs = std::filesystem;
using namespace evade;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------------ 1-4

Outcome ttc_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const ssm::VehicleDims dims;
  Rng rng(2024);
  int finite = 0, bad_time = 0, bad_kind = 0, missed = 0, corners = 0;
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const ssm::PairState p = oracle::random_pair(rng, dims);
    const auto r = ssm::ttc_2d(p, dims);
    const auto c = oracle::rectangle_sweep(p, dims, 120.0, 1e-3);
    if (!r.combined) {
      if (c) ++missed;
      continue;
    }
    ++finite;
    if (!c) {
      ++missed;
      continue;
    }
    // The sweep brackets the first contact in (time - step, time].
    const double lo = c->time - c->step, hi = c->time;
    const double miss = std::max({0.0, lo - *r.combined, *r.combined - hi});
    worst = std::max(worst, miss);
    if (miss > 2e-3) ++bad_time;
    if (c->corner) {
      ++corners;
    } else if (r.kind != c->face) {
      ++bad_kind;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = bad_time == 0 && bad_kind == 0 && missed == 0 && finite > 0 && secs < 30.0;
  return {pass, fmt("%d finite of 500, worst bracket miss %.2e s, kind mismatches %d, "
                    "oracle disagreements %d, corner contacts %d, %.1f s",
                    finite, worst, bad_kind, missed, corners, secs)};
}

Outcome ttc_reduction() {
  const ssm::VehicleDims dims;
  Rng rng(7);
  double worst = 0.0;
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const double s0 = rng.uniform(dims.length + 0.1, 120.0);
    const double v0 = rng.uniform(0.0, 30.0);
    const double v = v0 + rng.uniform(0.01, 15.0);
    const double lat = rng.uniform(-1.5, 1.5), vlat = rng.uniform(-0.5, 0.5);
    const auto r = ssm::ttc_2d({s0, lat, v, vlat, v0, vlat}, dims);
    const auto c = ssm::ttc_conventional(s0, dims.length, v, v0);
    if (!r.combined || !c || r.kind != ssm::ConflictKind::RearEnd) {
      ++failures;
      continue;
    }
    worst = std::max(worst, std::abs(*r.combined - *c) / *c);
  }
  return {failures == 0 && worst <= 1e-12,
          fmt("1000 cases, worst relative error %.2e, structural failures %d", worst, failures)};
}

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(99);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> sizes{static_cast<int>(1 + rng.below(8))};
    const int hidden = static_cast<int>(1 + rng.below(2));
    for (int h = 0; h < hidden; ++h) sizes.push_back(static_cast<int>(2 + rng.below(31)));
    sizes.push_back(static_cast<int>(1 + rng.below(2)));
    const auto act = trial % 2 ? nn::OutputActivation::TanhScaled : nn::OutputActivation::Identity;
    const nn::Mlp net = nn::Mlp::random(sizes, act, 2.0, rng, 0.3);
    Eigen::MatrixXd x(sizes.front(), 3), w(sizes.back(), 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(-2, 2);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-1, 1);
    const auto g = oracle::check_gradients(net, x, w);
    worst = std::max(worst, g.max_rel_error);
    checked += g.checked;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt("20 nets, %zu partials, max relative error %.2e, %.1f s", checked, worst, secs)};
}

Outcome quadratic_critic() {
  Rng rng(5);
  int converged = 0;
  double worst = 0.0;
  int most_updates = 0;
  for (int f = 0; f < 10; ++f) {
    const double lon = rng.uniform(-5, 5), lat = rng.uniform(-5, 5);
    const rl::CriticFn critic = [=](const Eigen::MatrixXd&, const Eigen::MatrixXd& a) {
      Eigen::MatrixXd d = a;
      d.row(0).array() -= lon;
      d.row(1).array() -= lat;
      return rl::CriticEvaluation{-d.colwise().squaredNorm(), -2.0 * d};
    };
    nn::Mlp actor =
        nn::Mlp::random({6, 64, 64, 2}, nn::OutputActivation::TanhScaled, 7.0, rng);
    nn::Adam opt(actor, {5e-4});
    Eigen::MatrixXd s(6, 1);
    s << rng.uniform(5, 60), rng.uniform(5, 30), rng.uniform(-4, 4), rng.uniform(-4, 4),
        rng.uniform(-1, 1), rng.uniform(-1, 1);
    double err = 1e9;
    int k = 0;
    for (; k < 5000; ++k) {
      rl::actor_update(actor, opt, s, critic);
      const Eigen::VectorXd a = actor.forward(Eigen::VectorXd(s.col(0)));
      err = std::max(std::abs(a(0) - lon), std::abs(a(1) - lat));
      if (err < 1e-2) break;
    }
    if (err < 1e-2) ++converged;
    worst = std::max(worst, err);
    most_updates = std::max(most_updates, k + 1);
  }
  return {converged == 10, fmt("%d/10 fixtures within 1e-2 (worst %.2e), at most %d updates",
                               converged, worst, most_updates)};
}

// ------------------------------------------------------------ pipeline

void require_ok(evade_status s, const char* what) {
  if (s != EVADE_OK) throw std::runtime_error(std::string(what) + ": " + evade_last_error());
}

struct RunPaths {
  fs::path root;
  fs::path raw() const { return root / "raw"; }
  fs::path clean() const { return root / "clean"; }
  fs::path ex() const { return root / "ex"; }
  fs::path split() const { return root / "split"; }
  fs::path model(const std::string& tag) const { return root / ("model_" + tag); }
  fs::path eval(const std::string& tag) const { return root / ("eval_" + tag); }
};

void run_data_stages(const RunPaths& p) {
  const std::string raw = p.raw().string(), clean = p.clean().string(), ex = p.ex().string(),
                    split = p.split().string();
  evade_gen_options g;
  evade_gen_options_init(&g);
  g.out_dir = raw.c_str();
  require_ok(evade_gen_synthetic(&g), "gen-synthetic");

  const std::string lane = (p.raw() / "lane.csv").string(),
                    targets = (p.raw() / "front_targets.csv").string(),
                    wsu = (p.raw() / "wsu.csv").string();
  evade_clean_options c;
  evade_clean_options_init(&c);
  c.lane = lane.c_str();
  c.targets = targets.c_str();
  c.wsu = wsu.c_str();
  c.out_dir = clean.c_str();
  require_ok(evade_clean(&c), "clean");

  const std::string cleaned = (p.clean() / "cleaned.csv").string();
  evade_extract_options e;
  evade_extract_options_init(&e);
  e.cleaned = cleaned.c_str();
  e.out_dir = ex.c_str();
  require_ok(evade_extract_conflicts(&e), "extract-conflicts");

  const std::string conflicts = (p.ex() / "conflicts.csv").string();
  evade_split_options s;
  evade_split_options_init(&s);
  s.conflicts = conflicts.c_str();
  s.out_dir = split.c_str();
  s.train_fraction = 0.8;
  s.seed = 0;
  require_ok(evade_split(&s), "split");
}

void train_ddpg(const RunPaths& p, const std::string& tag, evade_reward reward,
                std::int64_t episodes) {
  const std::string conflicts = (p.split() / "conflicts_train.csv").string();
  const std::string out = p.model(tag).string();
  evade_train_options t;
  evade_train_options_init(&t);
  t.conflicts = conflicts.c_str();
  t.out_dir = out.c_str();
  t.reward = reward;
  t.episodes = episodes;
  t.seed = 0;
  require_ok(evade_train(&t), "train");
}

void train_nn(const RunPaths& p) {
  const std::string conflicts = (p.split() / "conflicts_train.csv").string();
  const std::string out = p.model("nn").string();
  evade_train_nn_options t;
  evade_train_nn_options_init(&t);
  t.conflicts = conflicts.c_str();
  t.out_dir = out.c_str();
  t.seed = 0;
  require_ok(evade_train_nn(&t), "train-nn");
}

void evaluate(const RunPaths& p, const std::string& tag) {
  const std::string model = p.model(tag).string(), out = p.eval(tag).string(),
                    test = (p.split() / "conflicts_test.csv").string();
  evade_evaluate_options o;
  evade_evaluate_options_init(&o);
  o.model_dir = model.c_str();
  o.test = test.c_str();
  o.out_dir = out.c_str();
  require_ok(evade_evaluate(&o), "evaluate");
}

double metric_rmse(const RunPaths& p, const std::string& tag, const std::string& variable) {
  const csv::Table t = csv::Table::read(p.eval(tag) / "metrics.csv");
  const std::size_t var = t.require("variable"), col = t.require("rmse");
  for (std::size_t i = 0; i < t.rows(); ++i)
    if (t.row(i)[var] == variable) return *csv::to_double(t.row(i)[col]);
  throw std::runtime_error("metric " + variable + " missing");
}

std::vector<double> episode_rewards(const fs::path& log) {
  const csv::Table t = csv::Table::read(log);
  const std::size_t col = t.require("cumulative_reward");
  std::vector<double> out;
  for (std::size_t i = 0; i < t.rows(); ++i) out.push_back(*csv::to_double(t.row(i)[col]));
  return out;
}

std::size_t count_conflicts(const fs::path& conflicts_csv) {
  const csv::Table t = csv::Table::read(conflicts_csv);
  const std::size_t col = t.require("conflict_id");
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.rows(); ++i)
    if (i == 0 || t.row(i)[col] != t.row(i - 1)[col]) ++n;
  return n;
}

struct Pipeline {
  RunPaths first, second;
  double data_seconds = 0.0, train_seconds = 0.0;
  std::string error;
};

Pipeline run_pipelines() {
  Pipeline pl;
  const fs::path base = fs::temp_directory_path() / ("evade_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(base);
  pl.first.root = base / "run1";
  pl.second.root = base / "run2";
  try {
    auto t0 = std::chrono::steady_clock::now();
    run_data_stages(pl.first);
    pl.data_seconds = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    train_ddpg(pl.first, "v", EVADE_REWARD_SPEED, 1500);
    pl.train_seconds = seconds_since(t0);
    train_ddpg(pl.first, "untrained", EVADE_REWARD_SPEED, 0);
    train_ddpg(pl.first, "dv", EVADE_REWARD_SPEED_DIFF, 1500);
    train_nn(pl.first);
    for (const char* tag : {"v", "untrained", "dv", "nn"}) evaluate(pl.first, tag);

    run_data_stages(pl.second);
    train_ddpg(pl.second, "v", EVADE_REWARD_SPEED, 1500);
    evaluate(pl.second, "v");
  } catch (const std::exception& e) {
    pl.error = e.what();
  }
  return pl;
}

Outcome end_to_end(const Pipeline& pl) {
  if (!pl.error.empty()) return {false, "pipeline failed: " + pl.error};
  const std::size_t conflicts = count_conflicts(pl.first.ex() / "conflicts.csv");
  const auto rewards = episode_rewards(pl.first.model("v") / "training_log.csv");
  if (rewards.size() != 1500) return {false, fmt("training log has %zu episodes", rewards.size())};
  const double first = std::accumulate(rewards.begin(), rewards.begin() + 50, 0.0) / 50.0;
  // Plateau: mean episodic reward over the final 200 episodes (four rolling windows).
  const double plateau = std::accumulate(rewards.end() - 200, rewards.end(), 0.0) / 200.0;
  const double closed = (plateau - first) / (0.0 - first);
  const double trained = metric_rmse(pl.first, "v", "v_lon");
  const double untrained = metric_rmse(pl.first, "untrained", "v_lon");
  const double minutes = (pl.data_seconds + pl.train_seconds) / 60.0;
  const bool a = closed >= 0.5, b = trained <= 0.5 * untrained;
  return {conflicts >= 200 && a && b && minutes < 30.0,
          fmt("%zu conflicts; (a) first-50 mean %.2f, final plateau %.2f, gap closed %.0f%% [%s]; "
              "(b) v_lon RMSE %.4f vs untrained %.4f [%s]; %.1f min",
              conflicts, first, plateau, 100.0 * closed, a ? "ok" : "short", trained, untrained,
              b ? "ok" : "short", minutes)};
}

Outcome model_ordering(const Pipeline& pl) {
  if (!pl.error.empty()) return {false, "pipeline failed: " + pl.error};
  const double v = metric_rmse(pl.first, "v", "v_lon");
  const double dv = metric_rmse(pl.first, "dv", "v_lon");
  const double nn = metric_rmse(pl.first, "nn", "v_lon");
  return {v <= dv && v <= nn,
          fmt("v_lon RMSE: DDPGv %.4f, DDPGdv %.4f, NN %.4f", v, dv, nn)};
}

Outcome determinism(const Pipeline& pl) {
  if (!pl.error.empty()) return {false, "pipeline failed: " + pl.error};
  const std::vector<std::pair<fs::path, fs::path>> files{
      {pl.first.ex() / "conflicts.csv", pl.second.ex() / "conflicts.csv"},
      {pl.first.model("v") / "training_log.csv", pl.second.model("v") / "training_log.csv"},
      {pl.first.eval("v") / "metrics.csv", pl.second.eval("v") / "metrics.csv"}};
  std::string detail;
  bool same = true;
  for (const auto& [a, b] : files) {
    const std::string x = scratch::slurp(a), y = scratch::slurp(b);
    const bool eq = !x.empty() && x == y;
    same = same && eq;
    detail += a.filename().string() + (eq ? " identical" : " DIFFERS") + " (" +
              std::to_string(x.size()) + " bytes); ";
  }
  detail.resize(detail.size() - 2);
  return {same, detail};
}

// ------------------------------------------------------------------ 7-9

Outcome sweep_recovery() {
  const auto f = oracle::affine_sweep_fixture();
  const auto grid = stats::threshold_grid(0.5, 10.0, 0.1);
  const auto s = stats::threshold_sweep(f.points, f.sites, stats::KindFilter::Rear, grid);
  if (!s.best) return {false, "no defined correlation on the grid"};
  const bool pass = std::abs(s.best->threshold - 3.3) <= 0.1 + 1e-9 && *s.best->r >= 0.999;
  return {pass, fmt("%zu thresholds, argmax %.1f s with r = %.12f", grid.size(),
                    s.best->threshold, *s.best->r)};
}

Outcome conflict_exactness() {
  // Safe gaps between runs, one safe record at each trace end.
  std::vector<double> ttcs{8.0};
  const std::vector<std::size_t> lengths{10, 11, 25};
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // [first, last] indices
  for (std::size_t len : lengths) {
    const std::size_t start = ttcs.size();
    for (std::size_t k = 0; k < len; ++k) ttcs.push_back(1.0 + 3.9 * static_cast<double>(k) / 25.0);
    runs.emplace_back(start, ttcs.size() - 1);
    ttcs.push_back(5.2);
    ttcs.push_back(7.5);
  }
  const auto trace = oracle::following_trace(ttcs);
  traj::LaneChangeEvent ev;
  ev.event_id = 1;
  ev.records = trace;
  std::int64_t id = 1;
  const auto conflicts = traj::extract_conflicts(ev, 5.0, 11, id);

  bool ok = conflicts.size() == 2;
  std::string detail = fmt("runs {10, 11, 25} -> %zu conflicts", conflicts.size());
  for (std::size_t c = 0; ok && c < conflicts.size(); ++c) {
    const auto [first, last] = runs[c + 1];
    const auto& recs = conflicts[c].records;
    ok = recs.size() == last - first + 1 &&
         recs.front().raw.time_cs == trace[first].raw.time_cs &&
         recs.back().raw.time_cs == trace[last].raw.time_cs &&
         !ssm::classify_risk(trace[first - 1].ttc, 5.0) &&
         !ssm::classify_risk(trace[last + 1].ttc, 5.0);
    for (const auto& r : recs) ok = ok && ssm::classify_risk(r.ttc, 5.0);
    detail += fmt(", length %zu [%s]", recs.size(), ok ? "bounds ok" : "bounds wrong");
  }
  return {ok, detail};
}

Outcome metric_units() {
  const double r = stats::rmse(std::vector<double>{1, 2}, std::vector<double>{2, 4});
  const double j = stats::jsd(std::vector<double>{0, 1, 2}, std::vector<double>{10, 11, 12});
  const double p =
      stats::pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 1, 4, 3}).r;
  const double er = std::abs(r - std::sqrt(2.5)), ej = std::abs(j - std::log(2.0)),
               ep = std::abs(p - 0.6);
  return {er <= 1e-12 && ej <= 1e-12 && ep <= 1e-12,
          fmt("rmse err %.1e, jsd err %.1e, pearson err %.1e", er, ej, ep)};
}

}  // namespace

int main() {
  std::vector<std::pair<int, std::function<Outcome()>>> fast{
      {1, ttc_oracle}, {2, ttc_reduction}, {3, gradient_fidelity}, {4, quadratic_critic},
      {7, sweep_recovery}, {8, conflict_exactness}, {9, metric_units}};
  std::vector<std::pair<int, Outcome>> results;
  for (auto& [n, fn] : fast) {
    try {
      results.emplace_back(n, fn());
    } catch (const std::exception& e) {
      results.emplace_back(n, Outcome{false, std::string("exception: ") + e.what()});
    }
    std::fflush(stdout);
  }
  const Pipeline pl = run_pipelines();
  for (auto [n, fn] : std::vector<std::pair<int, Outcome (*)(const Pipeline&)>>{
           {5, end_to_end}, {6, model_ordering}, {10, determinism}}) {
    try {
      results.emplace_back(n, fn(pl));
    } catch (const std::exception& e) {
      results.emplace_back(n, Outcome{false, std::string("exception: ") + e.what()});
    }
  }
  std::sort(results.begin(), results.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  bool all = true;
  for (const auto& [n, o] : results) {
    std::printf("criterion %2d: %s  %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    all = all && o.pass;
  }
  if (pl.error.empty()) fs::remove_all(pl.first.root.parent_path());
  return all ? 0 : 1;
}
