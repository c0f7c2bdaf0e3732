#pragma once

// Synthetic connected-vehicle trips with known ground truth, written in the
// same three-table CSV layout as the field data.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evade/rng.hpp"
#include "evade/ssm.hpp"
#include "evade/trajectory.hpp"

namespace evade::synth {

enum class Template { CutIn, BrakingLeader, Benign };
std::string_view to_string(Template t);

struct SynthConfig {
  int cut_in = 130;
  int braking = 130;
  int benign = 40;
  std::uint64_t seed = 0;
  /// Multiplies every sensor noise standard deviation; 0 gives exact data.
  double noise_scale = 1.0;
  /// Constant offset of the CAN accelerometer (m/s^2), e.g. road grade.
  double ax_bias = 0.3;
  double ax_noise = 0.1;
  double lane_width = 3.6;
  double duration_s = 40.0;
  std::int64_t device = 1;
  ssm::VehicleDims dims;
  double threshold = 5.0;  // for the intended conflict count
  std::size_t min_run = 11;
};

/// Ground-truth state of ego and leader at one sample.
struct TruthSample {
  std::int64_t time_cs = 0;
  double x_ego = 0.0, v_ego = 0.0, a_ego = 0.0, y_ego = 0.0, vy_ego = 0.0;
  double x_lead = 0.0, v_lead = 0.0, y_lead = 0.0, vy_lead = 0.0;
};

struct Scenario {
  std::int64_t device = 0;
  std::int64_t trip = 0;
  Template kind = Template::Benign;
  std::int64_t cross_time_cs = 0;
  int intended_conflicts = 0;
  std::vector<ssm::ConflictKind> intended_kinds;
  int attempts = 1;  // parameter draws until the template's target was met
  std::vector<TruthSample> truth;
};

struct Corpus {
  std::vector<Scenario> scenarios;
  std::vector<traj::TrajectoryRecord> records;  // joined view with noise applied
};

Corpus generate(const SynthConfig& config);

/// Single scenario of the given template, for fixtures.
Scenario generate_one(Template kind, const SynthConfig& config, std::int64_t trip,
                      std::uint64_t seed);

/// Conflicts in the noise-free truth: per-sample 2D-TTC runs inside the
/// lane-change window, with the same threshold and run-length rule.
std::vector<ssm::ConflictKind> truth_conflicts(const Scenario& s, const SynthConfig& config);

/// Writes lane.csv, front_targets.csv, wsu.csv and scenarios.json.
void write_corpus(const Corpus& corpus, const SynthConfig& config,
                  const std::filesystem::path& dir);

/// Records of one scenario with sensor noise drawn from rng.
std::vector<traj::TrajectoryRecord> observe(const Scenario& s, const SynthConfig& config,
                                            Rng& rng);

}  // namespace evade::synth
