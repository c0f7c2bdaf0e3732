#pragma once

// Subcommand runners shared by the C API and the tests. Each runner
// validates its options, writes its artifacts and a manifest.json into the
// output directory, and reports failures as ConfigError / IoError /
// DataError.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evade/env.hpp"
#include "evade/ssm.hpp"
#include "evade/stats.hpp"
#include "evade/synth.hpp"

namespace evade::app {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path);

struct GenSyntheticOptions {
  fs::path out_dir;
  synth::SynthConfig synth;
};
void gen_synthetic(const GenSyntheticOptions& o);

struct CleanOptions {
  fs::path lane, targets, wsu;
  fs::path out_dir;
  double sigma = 5.0;
  ssm::VehicleDims dims;
};
/// Writes cleaned.csv, row_errors.csv and clean_summary.json.
void clean(const CleanOptions& o);

struct ExtractOptions {
  fs::path cleaned;
  fs::path out_dir;
  double threshold = 5.0;
  std::size_t min_run = 11;
};
/// Writes conflicts.csv and events.jsonl.
void extract_conflicts(const ExtractOptions& o);

struct SplitOptions {
  fs::path conflicts;
  fs::path out_dir;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};
/// Writes conflicts_train.csv and conflicts_test.csv.
void split(const SplitOptions& o);

struct TrainOptions {
  fs::path conflicts;
  fs::path out_dir;
  env::RewardKind reward = env::RewardKind::Speed;
  std::int64_t episodes = 1500;
  std::uint64_t seed = 0;
  bool reward_clip = true;
};
/// Writes the networks, model.json, training_log.csv and timing.csv.
void train(const TrainOptions& o);

struct TrainNnOptions {
  fs::path conflicts;
  fs::path out_dir;
  std::int64_t epochs = 200;
  std::uint64_t seed = 0;
  int bins = 100;
};
/// Writes policy.bin, model.json, epoch_loss.csv and metrics_train.csv.
void train_nn(const TrainNnOptions& o);

/// Policy network named by model_dir/model.json.
nn::Mlp load_policy(const fs::path& model_dir);

struct EvaluateOptions {
  fs::path model_dir;
  fs::path test;
  fs::path out_dir;
  int bins = 100;
};
/// Writes metrics.csv and metrics.md.
void evaluate(const EvaluateOptions& o);

struct RolloutOptions {
  fs::path model_dir;
  fs::path conflicts;
  fs::path out_dir;
  std::optional<std::int64_t> conflict_id;  // all conflicts when unset
  ssm::VehicleDims dims;
};
/// One rollout_<conflict_id>.csv per conflict, model and recorded columns.
void rollout(const RolloutOptions& o);

struct SweepOptions {
  fs::path points, sites;
  fs::path out_dir;
  double min = 0.5, max = 10.0, step = 0.1;
  stats::KindFilter kind = stats::KindFilter::All;
};
/// Writes sweep.csv and sweep.md.
void sweep_threshold(const SweepOptions& o);

}  // namespace evade::app
