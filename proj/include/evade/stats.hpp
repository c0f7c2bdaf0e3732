#pragma once

// Evaluation: error metrics, risk/crash correlation with a threshold sweep,
// the supervised benchmark network and one-step model evaluation.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evade/env.hpp"
#include "evade/mlp.hpp"
#include "evade/ssm.hpp"
#include "evade/trajectory.hpp"

namespace evade::stats {

/// Throws DataError on empty or mismatched inputs.
double rmse(std::span<const double> estimates, std::span<const double> observed);

/// Jensen-Shannon divergence (natural log) of two samples binned over their
/// pooled min-max range. Returns 0 when every value in both samples is equal.
double jsd(std::span<const double> p, std::span<const double> q, int bins = 100);

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, Student t with n - 2 dof
  std::size_t n = 0;
};

/// Sample Pearson correlation. Throws DataError for fewer than 3 pairs,
/// mismatched lengths or zero variance.
Correlation pearson(std::span<const double> x, std::span<const double> y);

struct SiteAggregate {
  std::string segment_id;
  std::int64_t risk_count = 0;
  std::int64_t gps_count = 0;
  std::int64_t crash_count = 0;
  double aadt = 0.0;
};

/// nullopt when the denominator is not positive.
std::optional<double> risk_rate(const SiteAggregate& s);
std::optional<double> crash_rate(const SiteAggregate& s);

enum class KindFilter { Rear, Side, All };
std::optional<KindFilter> parse_kind_filter(std::string_view text);
std::string_view to_string(KindFilter k);

struct RiskPoint {
  std::string segment_id;
  ssm::TtcResult ttc;
};

struct Site {
  std::string segment_id;
  double aadt = 0.0;
  std::int64_t rear_crashes = 0;
  std::int64_t sideswipe_crashes = 0;
};

/// Per-site aggregates at one threshold, in site order. Points whose segment
/// is unknown are ignored.
std::vector<SiteAggregate> aggregate(std::span<const RiskPoint> points, std::span<const Site> sites,
                                     KindFilter filter, double threshold);

struct SweepEntry {
  double threshold = 0.0;
  std::optional<double> r;  // nullopt: correlation undefined at this threshold
  std::optional<double> p_value;
  std::size_t segments = 0;
};

struct SweepResult {
  std::vector<SweepEntry> curve;
  std::optional<SweepEntry> best;  // highest r, lowest threshold on ties
};

/// Thresholds min, min + step, ... up to max inclusive.
std::vector<double> threshold_grid(double min, double max, double step);

SweepResult threshold_sweep(std::span<const RiskPoint> points, std::span<const Site> sites,
                            KindFilter filter, std::span<const double> thresholds);

std::vector<RiskPoint> read_points_csv(const std::filesystem::path& path);
std::vector<Site> read_sites_csv(const std::filesystem::path& path);
void write_sweep_csv(std::ostream& out, const SweepResult& s);
void write_sweep_markdown(std::ostream& out, const SweepResult& s, KindFilter filter);

inline constexpr std::array<std::string_view, 6> kMetricVariables = {
    "d_lon", "v_lon", "a_lon", "d_lat", "v_lat", "a_lat"};

struct VariableMetric {
  double rmse = 0.0;
  double jsd = 0.0;
};

struct MetricReport {
  std::array<VariableMetric, 6> variables{};  // kMetricVariables order
  std::size_t transitions = 0;

  const VariableMetric& at(std::string_view name) const;
};

/// One-step teacher-forced evaluation: every recorded state is advanced with
/// the policy's action and compared with the next recorded state. The
/// accelerations compared are the policy action and the recorded driver
/// action at the same state.
MetricReport evaluate_policy(const env::Policy& policy,
                             std::span<const traj::ConflictEvent> conflicts, int bins = 100);
env::Policy net_policy(const nn::Mlp& net, double action_bound = env::kActionBound);

void write_metrics_csv(std::ostream& out, const MetricReport& m);
/// One column pair per model.
void write_metrics_markdown(std::ostream& out, std::span<const std::string> names,
                            std::span<const MetricReport> reports);

struct NnConfig {
  std::vector<int> hidden = {256, 256};
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::int64_t epochs = 200;
  std::uint64_t seed = 0;
};

struct NnResult {
  nn::Mlp net;
  std::vector<double> epoch_loss;  // mean minibatch MSE per epoch
  MetricReport train_report;
};

/// Regression of the recorded driver action on the state. Throws DataError
/// when the set holds no transition.
NnResult nn_benchmark_train(std::span<const traj::ConflictEvent> conflicts,
                            const NnConfig& config, int bins = 100);
/// Lower-level fit on explicit samples (columns).
NnResult nn_fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                const NnConfig& config);

/// Seeded shuffle, then the first round(fraction * n) conflicts train.
struct Split {
  std::vector<traj::ConflictEvent> train;
  std::vector<traj::ConflictEvent> test;
};
Split split_conflicts(std::span<const traj::ConflictEvent> conflicts, double train_fraction,
                      std::uint64_t seed);

}  // namespace evade::stats
