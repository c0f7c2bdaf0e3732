#include <doctest.h>

#include <json.hpp>

#include "evade/rng.hpp"
#include "evade/synth.hpp"
#include "evade/trajectory.hpp"
#include "scratch.hpp"

using namespace evade;
using namespace evade::synth;

namespace {

std::vector<traj::ConflictEvent> pipeline(std::vector<traj::TrajectoryRecord> records,
                                          const SynthConfig& cfg) {
  records = traj::filter_outliers(traj::filter_valid(records));
  traj::smooth_lanes(records, 5.0);
  const auto derived = traj::derive_kinematics(records, cfg.dims);
  std::vector<traj::ConflictEvent> out;
  std::int64_t id = 1;
  for (const auto& ev : traj::extract_lane_changes(derived)) {
    auto c = traj::extract_conflicts(ev, cfg.threshold, cfg.min_run, id);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

std::vector<traj::ConflictEvent> run_template(Template kind, std::uint64_t seed,
                                              double noise_scale) {
  SynthConfig cfg;
  cfg.noise_scale = noise_scale;
  const Scenario s = generate_one(kind, cfg, 1, seed);
  Rng rng(seed + 1000);
  return pipeline(observe(s, cfg, rng), cfg);
}

}  // namespace

TEST_CASE("noise-free templates produce their intended conflicts") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cut = run_template(Template::CutIn, seed, 0.0);
    REQUIRE(cut.size() == 1);
    CHECK(cut[0].dominant_kind == ssm::ConflictKind::Sideswipe);
    CHECK(cut[0].records.size() >= 11);

    const auto brake = run_template(Template::BrakingLeader, seed, 0.0);
    REQUIRE(brake.size() == 1);
    CHECK(brake[0].dominant_kind == ssm::ConflictKind::RearEnd);

    CHECK(run_template(Template::Benign, seed, 0.0).empty());
  }
}

TEST_CASE("noisy templates still produce their intended conflicts") {
  for (std::uint64_t seed = 11; seed <= 15; ++seed) {
    const auto cut = run_template(Template::CutIn, seed, 1.0);
    REQUIRE(cut.size() == 1);
    CHECK(cut[0].dominant_kind == ssm::ConflictKind::Sideswipe);
    CHECK(run_template(Template::Benign, seed, 1.0).empty());
  }
}

TEST_CASE("scenarios carry their truth conflicts") {
  SynthConfig cfg;
  const Scenario cut = generate_one(Template::CutIn, cfg, 3, 9);
  CHECK(cut.trip == 3);
  CHECK(cut.intended_conflicts == 1);
  CHECK(truth_conflicts(cut, cfg) == cut.intended_kinds);
  CHECK(cut.truth.size() == 401);
  CHECK(cut.attempts >= 1);
  const Scenario benign = generate_one(Template::Benign, cfg, 4, 9);
  CHECK(benign.intended_conflicts == 0);
  CHECK(truth_conflicts(benign, cfg).empty());
}

TEST_CASE("noise-free observation matches the truth") {
  SynthConfig cfg;
  cfg.noise_scale = 0.0;
  const Scenario s = generate_one(Template::BrakingLeader, cfg, 1, 2);
  Rng rng(0);
  const auto recs = observe(s, cfg, rng);
  REQUIRE(recs.size() == s.truth.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& t = s.truth[i];
    CHECK(recs[i].time_cs == t.time_cs);
    CHECK(recs[i].gps_speed == doctest::Approx(t.v_ego).epsilon(1e-12));
    CHECK(recs[i].ax == doctest::Approx(t.a_ego).epsilon(1e-12));
    CHECK(recs[i].range_lon == doctest::Approx(t.x_lead - t.x_ego - cfg.dims.length).epsilon(1e-9));
    CHECK(recs[i].range_rate == doctest::Approx(t.v_lead - t.v_ego).epsilon(1e-9));
    CHECK(recs[i].transversal == doctest::Approx(t.y_lead - t.y_ego).epsilon(1e-9).scale(1.0));
    CHECK(recs[i].lane_dist_right - recs[i].lane_dist_left ==
          doctest::Approx(cfg.lane_width).epsilon(1e-9));
  }
}

TEST_CASE("corpus generation is seeded") {
  SynthConfig cfg;
  cfg.cut_in = 3;
  cfg.braking = 2;
  cfg.benign = 1;
  cfg.seed = 5;
  const Corpus a = generate(cfg), b = generate(cfg);
  REQUIRE(a.scenarios.size() == 6);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].time_cs == b.records[i].time_cs);
    CHECK(a.records[i].range_lon == b.records[i].range_lon);
    CHECK(a.records[i].lane_dist_left == b.records[i].lane_dist_left);
  }
  cfg.seed = 6;
  const Corpus c = generate(cfg);
  CHECK(c.records[100].range_lon != a.records[100].range_lon);

  const auto d1 = scratch::dir("corpus"), d2 = scratch::dir("corpus");
  cfg.seed = 5;
  write_corpus(a, cfg, d1);
  write_corpus(b, cfg, d2);
  for (const char* f : {"lane.csv", "front_targets.csv", "wsu.csv", "scenarios.json"})
    CHECK(scratch::slurp(d1 / f) == scratch::slurp(d2 / f));
  const auto meta = nlohmann::json::parse(scratch::slurp(d1 / "scenarios.json"));
  CHECK(meta["intended_conflicts_total"] == 5);
}

TEST_CASE("written corpus survives the cleaning pass") {
  SynthConfig cfg;
  cfg.cut_in = 2;
  cfg.braking = 2;
  cfg.benign = 1;
  const auto dir = scratch::dir("clean_corpus");
  write_corpus(generate(cfg), cfg, dir);
  const auto res =
      traj::clean(dir / "lane.csv", dir / "front_targets.csv", dir / "wsu.csv", 5.0, cfg.dims);
  CHECK(res.errors.empty());
  CHECK(res.joined == 5 * 401);
  CHECK(res.after_validity == res.joined);
  // Leaders that drift past 100 m are dropped as free flow.
  CHECK(res.after_outliers <= res.joined);
  CHECK(res.after_outliers > res.joined / 2);
  CHECK(res.records.size() < res.after_outliers);
}
