#pragma once

// Connected-vehicle trajectory processing: CSV ingestion, validity and
// outlier filters, lane-distance smoothing, derived 2D-TTC inputs,
// lane-change windows and conflict extraction.
//
// Lateral sign convention: positive to the left. LaneDistanceLeft/Right are
// signed offsets of the vehicle centreline from the left/right boundary of
// its current lane, so both grow while the vehicle drifts left and both drop
// by one lane width when it crosses into the lane on its left.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evade/ssm.hpp"

namespace evade::traj {

/// Native sampling interval of the CV data, in centiseconds.
inline constexpr std::int64_t kSampleCs = 10;
/// Consecutive samples further apart than this start a new run.
inline constexpr std::int64_t kMaxGapCs = 15;
/// Half-width of a lane-change window.
inline constexpr std::int64_t kLaneChangeHalfWindowCs = 1500;
/// Minimum jump of a lane distance between consecutive samples that marks a
/// boundary crossing.
inline constexpr double kLaneJumpMetres = 1.0;

struct TrajectoryRecord {
  std::int64_t device = 0;
  std::int64_t trip = 0;
  std::int64_t time_cs = 0;
  double lane_dist_left = 0.0;
  double lane_dist_right = 0.0;
  int lane_quality_left = 0;
  int lane_quality_right = 0;
  std::int64_t obstacle_id = 0;
  int target_type = 0;
  double range_lon = 0.0;
  double range_rate = 0.0;
  double transversal = 0.0;
  int gps_valid = 0;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double gps_speed = 0.0;
  int can_valid = 0;
  double ax = 0.0;
};

struct DerivedRecord {
  TrajectoryRecord raw;
  double v_lat = 0.0;   // from smoothed lane distances
  double v0_lon = 0.0;  // gps_speed + range_rate
  double v0_lat = 0.0;  // v_lat + d(transversal)/dt
  double s0_lon = 0.0;  // range + leader length
  double dv_lat = 0.0;  // v0_lat - v_lat
  double a_lat = 0.0;   // finite difference of v_lat
  ssm::TtcResult ttc;

  double d_lon() const { return raw.range_lon; }
  double v_lon() const { return raw.gps_speed; }
  double dv_lon() const { return raw.range_rate; }
  double d_lat() const { return raw.transversal; }
  ssm::PairState pair_state() const;
};

enum class LaneDirection { Left, Right };

struct LaneChangeEvent {
  std::int64_t event_id = 0;
  std::int64_t device = 0;
  std::int64_t trip = 0;
  LaneDirection direction = LaneDirection::Left;
  std::int64_t cross_time_cs = 0;
  bool truncated = false;
  std::vector<DerivedRecord> records;
};

struct ConflictEvent {
  std::int64_t conflict_id = 0;
  std::int64_t event_id = 0;
  std::int64_t device = 0;
  std::int64_t trip = 0;
  std::int64_t obstacle_id = 0;
  ssm::ConflictKind dominant_kind = ssm::ConflictKind::None;
  std::vector<DerivedRecord> records;
};

struct RowError {
  std::string file;
  std::size_t line = 0;
  std::string message;
};

struct Inputs {
  std::vector<TrajectoryRecord> records;  // inner join on (Device, Trip, Time)
  std::vector<RowError> errors;
};

/// Reads the lane, front-target and WSU tables and joins them exactly on
/// (Device, Trip, Time). Malformed rows are reported and skipped.
Inputs read_inputs(const std::filesystem::path& lane_csv,
                   const std::filesystem::path& targets_csv,
                   const std::filesystem::path& wsu_csv);

std::vector<TrajectoryRecord> filter_valid(std::span<const TrajectoryRecord> records);
std::vector<TrajectoryRecord> filter_outliers(std::span<const TrajectoryRecord> records);

/// Gaussian smoothing of a uniformly sampled series. The kernel is truncated
/// at +-4 sigma and renormalised where it overhangs either end. Series
/// shorter than three samples are returned unchanged.
std::vector<double> smooth_lane_distance(std::span<const double> series, double sigma);

/// Boundary crossing between two consecutive lane-distance samples: both
/// distances jump by at least kLaneJumpMetres in the same direction.
std::optional<LaneDirection> lane_jump(double prev_left, double prev_right, double left,
                                       double right);

/// Smooths lane distances per (device, trip) on every gap-free segment. Lane
/// crossings are unwrapped before smoothing and restored afterwards, so a
/// crossing stays a single-step jump. Records are updated in place.
void smooth_lanes(std::vector<TrajectoryRecord>& records, double sigma);

/// Derives the 2D-TTC inputs per (device, trip, obstacle) run. The first
/// record of each time-contiguous run has no backward difference and is
/// dropped. Output is ordered by (device, trip, time, obstacle).
std::vector<DerivedRecord> derive_kinematics(std::span<const TrajectoryRecord> records,
                                             const ssm::VehicleDims& dims);

/// Lane-change events with their +-15 s windows. Event ids are assigned
/// sequentially from first_event_id in (device, trip, time) order.
std::vector<LaneChangeEvent> extract_lane_changes(std::span<const DerivedRecord> records,
                                                  std::int64_t first_event_id = 1);

/// Maximal per-obstacle runs of consecutive records with ttc_2d < threshold
/// and at least min_run records. next_conflict_id is advanced per conflict.
std::vector<ConflictEvent> extract_conflicts(const LaneChangeEvent& event, double threshold,
                                             std::size_t min_run,
                                             std::int64_t& next_conflict_id);

struct CleanResult {
  std::vector<DerivedRecord> records;
  std::vector<RowError> errors;
  std::size_t joined = 0;
  std::size_t after_validity = 0;
  std::size_t after_outliers = 0;
};

/// Full cleaning pass: join, filters, smoothing, kinematics.
CleanResult clean(const std::filesystem::path& lane_csv, const std::filesystem::path& targets_csv,
                  const std::filesystem::path& wsu_csv, double sigma,
                  const ssm::VehicleDims& dims);

void write_derived_csv(std::ostream& out, std::span<const DerivedRecord> records);
std::vector<DerivedRecord> read_derived_csv(const std::filesystem::path& path);

void write_conflicts_csv(std::ostream& out, std::span<const ConflictEvent> conflicts);
std::vector<ConflictEvent> read_conflicts_csv(const std::filesystem::path& path);

void write_events_jsonl(std::ostream& out, std::span<const LaneChangeEvent> events,
                        std::span<const ConflictEvent> conflicts);

std::string_view to_string(LaneDirection d);

}  // namespace evade::traj
