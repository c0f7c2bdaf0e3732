#pragma once

// Two-dimensional time-to-collision (2D-TTC) for an ego/leader vehicle pair.
//
// Geometry: both vehicles are rectangles of the same length and width that
// keep their current velocity. Longitudinal quantities are measured along the
// ego's heading, lateral quantities are positive toward the left. The spacing
// s0_lon is front-bumper to front-bumper (range + length), which equals the
// centre-to-centre distance for vehicles of equal length; s0_lat is the
// centre-to-centre lateral offset of the leader relative to the ego.

#include <optional>
#include <string_view>

namespace evade::ssm {

struct VehicleDims {
  double length = 4.8;  // m
  double width = 1.6;   // m
};

struct PairState {
  double s0_lon = 0.0;  // m, >= 0
  double s0_lat = 0.0;  // m, signed
  double v_lon = 0.0;   // m/s, ego
  double v_lat = 0.0;   // m/s, ego
  double v0_lon = 0.0;  // m/s, leader
  double v0_lat = 0.0;  // m/s, leader
};

/// Time to collision in seconds; std::nullopt means "no collision".
using Ttc = std::optional<double>;

enum class ConflictKind { None, RearEnd, Sideswipe };

struct TtcResult {
  Ttc lon;
  Ttc lat;
  Ttc combined;
  ConflictKind kind = ConflictKind::None;
};

/// Mirrors the lateral axis when the leader sits on the right (s0_lat < 0),
/// so the closed-form cases only need a leader on the left.
PairState canonicalize(const PairState& p);

Ttc ttc_longitudinal(const PairState& p, const VehicleDims& dims);
Ttc ttc_lateral(const PairState& p, const VehicleDims& dims);
TtcResult ttc_2d(const PairState& p, const VehicleDims& dims);

/// Conventional single-lane TTC: (s0 - l) / (v - v0) when closing.
Ttc ttc_conventional(double s0, double length, double v, double v0);

/// True iff the pair is in conflict, i.e. ttc_2d < threshold (strict).
bool classify_risk(const TtcResult& t, double threshold);

std::string_view to_string(ConflictKind kind);
std::optional<ConflictKind> parse_conflict_kind(std::string_view text);

}  // namespace evade::ssm
