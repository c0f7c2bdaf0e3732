#include "evade/ssm.hpp"

#include <cmath>

namespace evade::ssm {

PairState canonicalize(const PairState& p) {
  if (!(p.s0_lat < 0.0)) return p;
  PairState q = p;
  q.s0_lat = -p.s0_lat;
  q.v_lat = -p.v_lat;
  q.v0_lat = -p.v0_lat;
  return q;
}

Ttc ttc_longitudinal(const PairState& raw, const VehicleDims& dims) {
  const PairState p = canonicalize(raw);
  const double closing = p.v_lon - p.v0_lon;
  if (!(p.s0_lon > dims.length) || !(closing > 0.0)) return std::nullopt;
  const double t = (p.s0_lon - dims.length) / closing;
  // Remaining lateral offset when the bumpers meet; the follower may also
  // have drifted past the leader to the other side.
  const double s1_lat = p.s0_lat - (p.v_lat - p.v0_lat) * t;
  if (!(std::abs(s1_lat) < dims.width)) return std::nullopt;
  return t;
}

Ttc ttc_lateral(const PairState& raw, const VehicleDims& dims) {
  const PairState p = canonicalize(raw);
  const double closing = p.v_lat - p.v0_lat;
  if (!(p.s0_lat > dims.width) || !(closing > 0.0)) return std::nullopt;
  const double t = (p.s0_lat - dims.width) / closing;
  const double s1_lon = p.s0_lon - (p.v_lon - p.v0_lon) * t;
  if (!(std::abs(s1_lon) < dims.length)) return std::nullopt;
  return t;
}

TtcResult ttc_2d(const PairState& p, const VehicleDims& dims) {
  TtcResult r;
  r.lon = ttc_longitudinal(p, dims);
  r.lat = ttc_lateral(p, dims);
  if (r.lon && (!r.lat || *r.lon <= *r.lat)) {
    r.combined = r.lon;
    r.kind = ConflictKind::RearEnd;
  } else if (r.lat) {
    r.combined = r.lat;
    r.kind = ConflictKind::Sideswipe;
  }
  return r;
}

Ttc ttc_conventional(double s0, double length, double v, double v0) {
  if (!(v > v0)) return std::nullopt;
  return (s0 - length) / (v - v0);
}

bool classify_risk(const TtcResult& t, double threshold) {
  return t.combined.has_value() && *t.combined < threshold;
}

std::string_view to_string(ConflictKind kind) {
  switch (kind) {
    case ConflictKind::RearEnd:
      return "rear_end";
    case ConflictKind::Sideswipe:
      return "sideswipe";
    case ConflictKind::None:
      break;
  }
  return "none";
}

std::optional<ConflictKind> parse_conflict_kind(std::string_view text) {
  if (text == "rear_end" || text == "rear") return ConflictKind::RearEnd;
  if (text == "sideswipe" || text == "side") return ConflictKind::Sideswipe;
  if (text == "none" || text.empty()) return ConflictKind::None;
  return std::nullopt;
}

}  // namespace evade::ssm
