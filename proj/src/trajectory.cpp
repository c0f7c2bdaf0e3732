#include "evade/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <tuple>

#include <json.hpp>

#include "evade/csv.hpp"
#include "evade/errors.hpp"
#include "log.hpp"

namespace evade::traj {
namespace {

using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;

struct LaneRow {
  double left, right;
  int quality_left, quality_right;
};

struct WsuRow {
  int gps_valid;
  double lat, lon, speed;
  int can_valid;
  double ax;
};

// Field extraction that records a row error instead of throwing.
class RowReader {
 public:
  RowReader(const csv::Table& t, std::size_t row, std::string file, std::vector<RowError>& errors)
      : t_(t), row_(row), file_(std::move(file)), errors_(errors) {}

  double real(std::size_t col) {
    const auto& r = t_.row(row_);
    if (col >= r.size()) return fail(col, "missing field");
    if (auto v = csv::to_double(r[col]); v && std::isfinite(*v)) return *v;
    return fail(col, "not a finite number");
  }
  std::int64_t integer(std::size_t col) {
    const auto& r = t_.row(row_);
    if (col >= r.size()) return static_cast<std::int64_t>(fail(col, "missing field"));
    if (auto v = csv::to_int(r[col])) return *v;
    return static_cast<std::int64_t>(fail(col, "not an integer"));
  }
  bool ok() const { return ok_; }

 private:
  double fail(std::size_t col, const char* what) {
    if (ok_) {
      const std::string name = col < t_.header().size() ? t_.header()[col] : "?";
      errors_.push_back({file_, t_.line(row_), name + ": " + what});
    }
    ok_ = false;
    return 0.0;
  }

  const csv::Table& t_;
  std::size_t row_;
  std::string file_;
  std::vector<RowError>& errors_;
  bool ok_ = true;
};

Key key_of(const TrajectoryRecord& r) { return {r.device, r.trip, r.time_cs}; }

bool same_trip(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  return a.device == b.device && a.trip == b.trip;
}

double seconds_between(std::int64_t from_cs, std::int64_t to_cs) {
  return static_cast<double>(to_cs - from_cs) / 100.0;
}

// Lane samples of one (device, trip): unique times in order.
struct LaneSample {
  std::int64_t time_cs;
  double left, right;
};

}  // namespace

ssm::PairState DerivedRecord::pair_state() const {
  return ssm::PairState{s0_lon, raw.transversal, raw.gps_speed, v_lat, v0_lon, v0_lat};
}

Inputs read_inputs(const std::filesystem::path& lane_csv, const std::filesystem::path& targets_csv,
                   const std::filesystem::path& wsu_csv) {
  Inputs in;
  const csv::Table lane = csv::Table::read(lane_csv);
  const csv::Table targets = csv::Table::read(targets_csv);
  const csv::Table wsu = csv::Table::read(wsu_csv);

  auto common = [](const csv::Table& t) {
    return std::array<std::size_t, 3>{t.require("Device"), t.require("Trip"), t.require("Time")};
  };

  std::map<Key, LaneRow> lanes;
  {
    const auto c = common(lane);
    const std::size_t dl = lane.require("LaneDistanceLeft"), dr = lane.require("LaneDistanceRight"),
                      ql = lane.require("LaneQualityLeft"), qr = lane.require("LaneQualityRight");
    for (std::size_t i = 0; i < lane.rows(); ++i) {
      RowReader r(lane, i, lane_csv.filename().string(), in.errors);
      const Key k{r.integer(c[0]), r.integer(c[1]), r.integer(c[2])};
      LaneRow row{r.real(dl), r.real(dr), static_cast<int>(r.integer(ql)),
                  static_cast<int>(r.integer(qr))};
      if (!r.ok()) continue;
      if (!lanes.emplace(k, row).second)
        in.errors.push_back({lane_csv.filename().string(), lane.line(i), "duplicate key"});
    }
  }

  std::map<Key, WsuRow> wsus;
  {
    const auto c = common(wsu);
    const std::size_t gv = wsu.require("GpsValidWsu"), la = wsu.require("LatitudeWsu"),
                      lo = wsu.require("LongitudeWsu"), sp = wsu.require("GpsSpeedWsu"),
                      cv = wsu.require("ValidCanWsu"), ax = wsu.require("AxWsu");
    for (std::size_t i = 0; i < wsu.rows(); ++i) {
      RowReader r(wsu, i, wsu_csv.filename().string(), in.errors);
      const Key k{r.integer(c[0]), r.integer(c[1]), r.integer(c[2])};
      WsuRow row{static_cast<int>(r.integer(gv)), r.real(la), r.real(lo), r.real(sp),
                 static_cast<int>(r.integer(cv)), r.real(ax)};
      if (!r.ok()) continue;
      if (!wsus.emplace(k, row).second)
        in.errors.push_back({wsu_csv.filename().string(), wsu.line(i), "duplicate key"});
    }
  }

  const auto c = common(targets);
  const std::size_t oid = targets.require("ObstacleId"), tt = targets.require("TargetType"),
                    rg = targets.require("Range"), rr = targets.require("RangeRate"),
                    tv = targets.require("Transversal");
  for (std::size_t i = 0; i < targets.rows(); ++i) {
    RowReader r(targets, i, targets_csv.filename().string(), in.errors);
    TrajectoryRecord rec;
    rec.device = r.integer(c[0]);
    rec.trip = r.integer(c[1]);
    rec.time_cs = r.integer(c[2]);
    rec.obstacle_id = r.integer(oid);
    rec.target_type = static_cast<int>(r.integer(tt));
    rec.range_lon = r.real(rg);
    rec.range_rate = r.real(rr);
    rec.transversal = r.real(tv);
    if (!r.ok()) continue;
    const auto l = lanes.find(key_of(rec));
    const auto w = wsus.find(key_of(rec));
    if (l == lanes.end() || w == wsus.end()) continue;
    rec.lane_dist_left = l->second.left;
    rec.lane_dist_right = l->second.right;
    rec.lane_quality_left = l->second.quality_left;
    rec.lane_quality_right = l->second.quality_right;
    rec.gps_valid = w->second.gps_valid;
    rec.lat_deg = w->second.lat;
    rec.lon_deg = w->second.lon;
    rec.gps_speed = w->second.speed;
    rec.can_valid = w->second.can_valid;
    rec.ax = w->second.ax;
    in.records.push_back(rec);
  }
  std::stable_sort(in.records.begin(), in.records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.device, a.trip, a.time_cs, a.obstacle_id) <
           std::tie(b.device, b.trip, b.time_cs, b.obstacle_id);
  });
  return in;
}

std::vector<TrajectoryRecord> filter_valid(std::span<const TrajectoryRecord> records) {
  std::vector<TrajectoryRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.lane_quality_left > 0 && r.lane_quality_right > 0 && r.gps_valid == 1 &&
        r.can_valid == 1 && r.target_type == 0)
      out.push_back(r);
  }
  return out;
}

std::vector<TrajectoryRecord> filter_outliers(std::span<const TrajectoryRecord> records) {
  std::vector<TrajectoryRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.gps_speed > 90.0 || r.ax > 7.0) continue;
    if (!(r.gps_speed + r.range_rate > -1.0)) continue;  // opposite direction
    if (!(r.range_lon < 100.0)) continue;                // free flow
    if (!(std::abs(r.transversal) < 7.0)) continue;      // beyond adjacent lanes
    out.push_back(r);
  }
  return out;
}

std::vector<double> smooth_lane_distance(std::span<const double> series, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("smoothing sigma must be positive");
  std::vector<double> out(series.begin(), series.end());
  if (series.size() < 3) {
    detail::log().warn("series of {} samples left unsmoothed", series.size());
    return out;
  }
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (std::ptrdiff_t k = -radius; k <= radius; ++k)
    kernel[static_cast<std::size_t>(k + radius)] =
        std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));

  const auto n = static_cast<std::ptrdiff_t>(series.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - radius);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + radius);
    double acc = 0.0, norm = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double w = kernel[static_cast<std::size_t>(j - i + radius)];
      acc += w * series[static_cast<std::size_t>(j)];
      norm += w;
    }
    out[static_cast<std::size_t>(i)] = acc / norm;
  }
  return out;
}

std::optional<LaneDirection> lane_jump(double prev_left, double prev_right, double left,
                                       double right) {
  const double dl = left - prev_left;
  const double dr = right - prev_right;
  if (dl <= -kLaneJumpMetres && dr <= -kLaneJumpMetres) return LaneDirection::Left;
  if (dl >= kLaneJumpMetres && dr >= kLaneJumpMetres) return LaneDirection::Right;
  return std::nullopt;
}

namespace {

std::vector<LaneSample> lane_trace(auto first, auto last) {
  std::vector<LaneSample> trace;
  for (auto it = first; it != last; ++it) {
    const TrajectoryRecord& r = *it;
    if (!trace.empty() && trace.back().time_cs == r.time_cs) continue;
    trace.push_back({r.time_cs, r.lane_dist_left, r.lane_dist_right});
  }
  return trace;
}

bool gap_between(const LaneSample& a, const LaneSample& b) {
  return b.time_cs - a.time_cs > kMaxGapCs;
}

}  // namespace

void smooth_lanes(std::vector<TrajectoryRecord>& records, double sigma) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.device, a.trip, a.time_cs, a.obstacle_id) <
           std::tie(b.device, b.trip, b.time_cs, b.obstacle_id);
  });
  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin + 1;
    while (end < records.size() && same_trip(records[begin], records[end])) ++end;

    std::vector<LaneSample> trace = lane_trace(records.begin() + static_cast<std::ptrdiff_t>(begin),
                                               records.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t seg = 0;
    while (seg < trace.size()) {
      std::size_t seg_end = seg + 1;
      while (seg_end < trace.size() && !gap_between(trace[seg_end - 1], trace[seg_end]))
        ++seg_end;
      // Unwrap lane crossings into a continuous offset so the kernel never
      // straddles a one-lane jump. The unwrap width is averaged over the
      // samples before the crossing to keep sensor noise out of the step.
      std::vector<double> left, right;
      std::vector<std::size_t> crossings;
      double cum = 0.0;
      std::size_t lane_start = seg;
      for (std::size_t i = seg; i < seg_end; ++i) {
        if (i > seg && lane_jump(trace[i - 1].left, trace[i - 1].right, trace[i].left,
                                 trace[i].right)) {
          const std::size_t from = std::max(lane_start, i >= 10 ? i - 10 : 0);
          double width = 0.0;
          for (std::size_t k = from; k < i; ++k) width += trace[k].right - trace[k].left;
          width /= static_cast<double>(i - from);
          cum += trace[i].left < trace[i - 1].left ? width : -width;
          crossings.push_back(i - seg);
          lane_start = i;
        }
        left.push_back(trace[i].left + cum);
        right.push_back(trace[i].right + cum);
      }
      if (left.size() >= 3) {
        left = smooth_lane_distance(left, sigma);
        right = smooth_lane_distance(right, sigma);
      }
      // Re-wrap with the smoothed width just before each crossing, which is
      // the width derive_kinematics adds back.
      double back = 0.0;
      std::size_t next = 0;
      for (std::size_t j = 0; j < left.size(); ++j) {
        if (next < crossings.size() && crossings[next] == j) {
          const double width = right[j - 1] - left[j - 1];
          back += trace[seg + j].left < trace[seg + j - 1].left ? width : -width;
          ++next;
        }
        trace[seg + j].left = left[j] - back;
        trace[seg + j].right = right[j] - back;
      }
      seg = seg_end;
    }

    std::size_t t = 0;
    for (std::size_t i = begin; i < end; ++i) {
      while (trace[t].time_cs != records[i].time_cs) ++t;
      records[i].lane_dist_left = trace[t].left;
      records[i].lane_dist_right = trace[t].right;
    }
    begin = end;
  }
}

std::vector<DerivedRecord> derive_kinematics(std::span<const TrajectoryRecord> records,
                                             const ssm::VehicleDims& dims) {
  std::vector<TrajectoryRecord> sorted(records.begin(), records.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.device, a.trip, a.obstacle_id, a.time_cs) <
           std::tie(b.device, b.trip, b.obstacle_id, b.time_cs);
  });

  std::vector<DerivedRecord> out;
  out.reserve(sorted.size());
  std::size_t begin = 0;
  while (begin < sorted.size()) {
    // One contiguous run of a single (device, trip, obstacle) stream.
    std::size_t end = begin + 1;
    while (end < sorted.size() && same_trip(sorted[begin], sorted[end]) &&
           sorted[end].obstacle_id == sorted[begin].obstacle_id) {
      const std::int64_t gap = sorted[end].time_cs - sorted[end - 1].time_cs;
      if (gap <= 0 || gap > kMaxGapCs) break;
      ++end;
    }

    const std::size_t first_out = out.size();
    for (std::size_t i = begin + 1; i < end; ++i) {
      const TrajectoryRecord& prev = sorted[i - 1];
      const TrajectoryRecord& cur = sorted[i];
      const double dt = seconds_between(prev.time_cs, cur.time_cs);
      double d_left = cur.lane_dist_left - prev.lane_dist_left;
      double d_right = cur.lane_dist_right - prev.lane_dist_right;
      if (auto jump = lane_jump(prev.lane_dist_left, prev.lane_dist_right, cur.lane_dist_left,
                                cur.lane_dist_right)) {
        // Both boundary offsets are re-referenced to the new lane.
        const double lane_width = prev.lane_dist_right - prev.lane_dist_left;
        const double shift = *jump == LaneDirection::Left ? lane_width : -lane_width;
        d_left += shift;
        d_right += shift;
      }
      DerivedRecord d;
      d.raw = cur;
      d.v_lat = (d_left + d_right) / (2.0 * dt);
      d.v0_lon = cur.gps_speed + cur.range_rate;
      d.v0_lat = d.v_lat + (cur.transversal - prev.transversal) / dt;
      d.s0_lon = cur.range_lon + dims.length;
      d.dv_lat = d.v0_lat - d.v_lat;
      out.push_back(d);
    }
    const std::size_t n = out.size() - first_out;
    for (std::size_t k = 0; k < n; ++k) {
      DerivedRecord& d = out[first_out + k];
      if (n < 2) {
        d.a_lat = 0.0;
      } else if (k + 1 < n) {
        const DerivedRecord& next = out[first_out + k + 1];
        d.a_lat = (next.v_lat - d.v_lat) / seconds_between(d.raw.time_cs, next.raw.time_cs);
      } else {
        const DerivedRecord& prev = out[first_out + k - 1];
        d.a_lat = (d.v_lat - prev.v_lat) / seconds_between(prev.raw.time_cs, d.raw.time_cs);
      }
      d.ttc = ssm::ttc_2d(d.pair_state(), dims);
    }
    begin = end;
  }

  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.raw.device, a.raw.trip, a.raw.time_cs, a.raw.obstacle_id) <
           std::tie(b.raw.device, b.raw.trip, b.raw.time_cs, b.raw.obstacle_id);
  });
  return out;
}

std::vector<LaneChangeEvent> extract_lane_changes(std::span<const DerivedRecord> records,
                                                  std::int64_t first_event_id) {
  std::vector<DerivedRecord> sorted(records.begin(), records.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.raw.device, a.raw.trip, a.raw.time_cs, a.raw.obstacle_id) <
           std::tie(b.raw.device, b.raw.trip, b.raw.time_cs, b.raw.obstacle_id);
  });

  std::vector<LaneChangeEvent> events;
  std::int64_t next_id = first_event_id;
  std::size_t begin = 0;
  while (begin < sorted.size()) {
    std::size_t end = begin + 1;
    while (end < sorted.size() && same_trip(sorted[begin].raw, sorted[end].raw)) ++end;

    std::vector<LaneSample> trace;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = sorted[i].raw;
      if (!trace.empty() && trace.back().time_cs == r.time_cs) continue;
      trace.push_back({r.time_cs, r.lane_dist_left, r.lane_dist_right});
    }
    const std::int64_t trip_start = sorted[begin].raw.time_cs;
    const std::int64_t trip_end = sorted[end - 1].raw.time_cs;

    for (std::size_t i = 1; i < trace.size(); ++i) {
      if (trace[i].time_cs - trace[i - 1].time_cs > kMaxGapCs) continue;
      const auto dir =
          lane_jump(trace[i - 1].left, trace[i - 1].right, trace[i].left, trace[i].right);
      if (!dir) continue;
      LaneChangeEvent ev;
      ev.event_id = next_id++;
      ev.device = sorted[begin].raw.device;
      ev.trip = sorted[begin].raw.trip;
      ev.direction = *dir;
      ev.cross_time_cs = trace[i].time_cs;
      const std::int64_t lo = ev.cross_time_cs - kLaneChangeHalfWindowCs;
      const std::int64_t hi = ev.cross_time_cs + kLaneChangeHalfWindowCs;
      ev.truncated = lo < trip_start || hi > trip_end;
      for (std::size_t k = begin; k < end; ++k) {
        const std::int64_t t = sorted[k].raw.time_cs;
        if (t >= lo && t <= hi) ev.records.push_back(sorted[k]);
      }
      events.push_back(std::move(ev));
    }
    begin = end;
  }
  return events;
}

std::vector<ConflictEvent> extract_conflicts(const LaneChangeEvent& event, double threshold,
                                             std::size_t min_run,
                                             std::int64_t& next_conflict_id) {
  if (!(threshold > 0.0)) throw ConfigError("conflict threshold must be positive");
  std::vector<DerivedRecord> sorted = event.records;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.raw.obstacle_id, a.raw.time_cs) < std::tie(b.raw.obstacle_id, b.raw.time_cs);
  });

  std::vector<ConflictEvent> out;
  auto flush = [&](std::size_t first, std::size_t last) {
    if (last - first < min_run || last == first) return;
    ConflictEvent c;
    c.conflict_id = next_conflict_id++;
    c.event_id = event.event_id;
    c.device = event.device;
    c.trip = event.trip;
    c.obstacle_id = sorted[first].raw.obstacle_id;
    c.records.assign(sorted.begin() + static_cast<std::ptrdiff_t>(first),
                     sorted.begin() + static_cast<std::ptrdiff_t>(last));
    std::size_t rear = 0, side = 0;
    const DerivedRecord* lowest = &c.records.front();
    for (const auto& r : c.records) {
      if (r.ttc.kind == ssm::ConflictKind::RearEnd) ++rear;
      if (r.ttc.kind == ssm::ConflictKind::Sideswipe) ++side;
      if (*r.ttc.combined < *lowest->ttc.combined) lowest = &r;
    }
    c.dominant_kind = rear > side   ? ssm::ConflictKind::RearEnd
                      : side > rear ? ssm::ConflictKind::Sideswipe
                                    : lowest->ttc.kind;
    out.push_back(std::move(c));
  };

  std::size_t run_start = 0;
  bool in_run = false;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const bool risky = ssm::classify_risk(sorted[i].ttc, threshold);
    const bool continues = in_run && sorted[i].raw.obstacle_id == sorted[i - 1].raw.obstacle_id &&
                           sorted[i].raw.time_cs - sorted[i - 1].raw.time_cs <= kMaxGapCs;
    if (in_run && (!risky || !continues)) {
      flush(run_start, i);
      in_run = false;
    }
    if (risky && !in_run) {
      run_start = i;
      in_run = true;
    }
  }
  if (in_run) flush(run_start, sorted.size());
  return out;
}

CleanResult clean(const std::filesystem::path& lane_csv, const std::filesystem::path& targets_csv,
                  const std::filesystem::path& wsu_csv, double sigma,
                  const ssm::VehicleDims& dims) {
  if (!(sigma > 0.0)) throw ConfigError("smoothing sigma must be positive");
  Inputs in = read_inputs(lane_csv, targets_csv, wsu_csv);
  CleanResult result;
  result.errors = std::move(in.errors);
  result.joined = in.records.size();
  std::vector<TrajectoryRecord> kept = filter_valid(in.records);
  result.after_validity = kept.size();
  kept = filter_outliers(kept);
  result.after_outliers = kept.size();
  smooth_lanes(kept, sigma);
  result.records = derive_kinematics(kept, dims);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

const std::vector<std::string>& derived_columns() {
  static const std::vector<std::string> cols = {
      "Device",          "Trip",          "Time",        "ObstacleId",     "LaneDistanceLeft",
      "LaneDistanceRight", "LaneQualityLeft", "LaneQualityRight", "TargetType", "Range",
      "RangeRate",       "Transversal",   "GpsValidWsu", "LatitudeWsu",    "LongitudeWsu",
      "GpsSpeedWsu",     "ValidCanWsu",   "AxWsu",       "v_lat",          "v0_lon",
      "v0_lat",          "s0_lon",        "dv_lat",      "a_lat",          "ttc_lon",
      "ttc_lat",         "ttc_2d",        "kind"};
  return cols;
}

void write_derived_fields(csv::Writer& w, const DerivedRecord& d) {
  const auto& r = d.raw;
  w.field(r.device).field(r.trip).field(r.time_cs).field(r.obstacle_id);
  w.field(r.lane_dist_left).field(r.lane_dist_right);
  w.field(r.lane_quality_left).field(r.lane_quality_right).field(r.target_type);
  w.field(r.range_lon).field(r.range_rate).field(r.transversal);
  w.field(r.gps_valid).field(r.lat_deg).field(r.lon_deg).field(r.gps_speed);
  w.field(r.can_valid).field(r.ax);
  w.field(d.v_lat).field(d.v0_lon).field(d.v0_lat).field(d.s0_lon).field(d.dv_lat).field(d.a_lat);
  w.field(d.ttc.lon).field(d.ttc.lat).field(d.ttc.combined);
  w.field(ssm::to_string(d.ttc.kind));
}

struct DerivedColumns {
  std::vector<std::size_t> idx;
  explicit DerivedColumns(const csv::Table& t) {
    for (const auto& name : derived_columns()) idx.push_back(t.require(name));
  }
};

DerivedRecord parse_derived(const csv::Table& t, std::size_t row, const DerivedColumns& c,
                            const std::string& file) {
  const auto& f = t.row(row);
  auto fail = [&](std::size_t col) -> DataError {
    return DataError(file + ":" + std::to_string(t.line(row)) + ": bad field '" +
                     derived_columns()[col] + "'");
  };
  auto field = [&](std::size_t col) -> std::string_view {
    if (c.idx[col] >= f.size()) throw fail(col);
    return f[c.idx[col]];
  };
  auto real = [&](std::size_t col) {
    auto v = csv::to_double(field(col));
    if (!v) throw fail(col);
    return *v;
  };
  auto integer = [&](std::size_t col) {
    auto v = csv::to_int(field(col));
    if (!v) throw fail(col);
    return *v;
  };
  auto optional_real = [&](std::size_t col) -> ssm::Ttc {
    if (field(col).empty()) return std::nullopt;
    return real(col);
  };

  DerivedRecord d;
  auto& r = d.raw;
  std::size_t k = 0;
  r.device = integer(k++);
  r.trip = integer(k++);
  r.time_cs = integer(k++);
  r.obstacle_id = integer(k++);
  r.lane_dist_left = real(k++);
  r.lane_dist_right = real(k++);
  r.lane_quality_left = static_cast<int>(integer(k++));
  r.lane_quality_right = static_cast<int>(integer(k++));
  r.target_type = static_cast<int>(integer(k++));
  r.range_lon = real(k++);
  r.range_rate = real(k++);
  r.transversal = real(k++);
  r.gps_valid = static_cast<int>(integer(k++));
  r.lat_deg = real(k++);
  r.lon_deg = real(k++);
  r.gps_speed = real(k++);
  r.can_valid = static_cast<int>(integer(k++));
  r.ax = real(k++);
  d.v_lat = real(k++);
  d.v0_lon = real(k++);
  d.v0_lat = real(k++);
  d.s0_lon = real(k++);
  d.dv_lat = real(k++);
  d.a_lat = real(k++);
  d.ttc.lon = optional_real(k++);
  d.ttc.lat = optional_real(k++);
  d.ttc.combined = optional_real(k++);
  const auto kind = ssm::parse_conflict_kind(field(k));
  if (!kind) throw fail(k);
  d.ttc.kind = *kind;
  return d;
}

}  // namespace

void write_derived_csv(std::ostream& out, std::span<const DerivedRecord> records) {
  csv::Writer w(out);
  w.row(derived_columns());
  for (const auto& d : records) {
    write_derived_fields(w, d);
    w.end_row();
  }
}

std::vector<DerivedRecord> read_derived_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::Table::read(path);
  const DerivedColumns cols(t);
  std::vector<DerivedRecord> out;
  out.reserve(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i)
    out.push_back(parse_derived(t, i, cols, path.filename().string()));
  return out;
}

void write_conflicts_csv(std::ostream& out, std::span<const ConflictEvent> conflicts) {
  csv::Writer w(out);
  std::vector<std::string> header = {"conflict_id", "event_id", "conflict_kind"};
  header.insert(header.end(), derived_columns().begin(), derived_columns().end());
  w.row(header);
  for (const auto& c : conflicts) {
    for (const auto& d : c.records) {
      w.field(c.conflict_id).field(c.event_id).field(ssm::to_string(c.dominant_kind));
      write_derived_fields(w, d);
      w.end_row();
    }
  }
}

std::vector<ConflictEvent> read_conflicts_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::Table::read(path);
  const DerivedColumns cols(t);
  const std::size_t cid = t.require("conflict_id"), eid = t.require("event_id"),
                    ckind = t.require("conflict_kind");
  const std::string file = path.filename().string();
  std::vector<ConflictEvent> out;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto& f = t.row(i);
    auto bad = [&](const char* what) {
      return DataError(file + ":" + std::to_string(t.line(i)) + ": bad " + what);
    };
    if (f.size() < t.header().size()) throw bad("row length");
    const auto conflict_id = csv::to_int(f[cid]);
    const auto event_id = csv::to_int(f[eid]);
    const auto kind = ssm::parse_conflict_kind(f[ckind]);
    if (!conflict_id || !event_id || !kind) throw bad("conflict columns");
    DerivedRecord d = parse_derived(t, i, cols, file);
    if (out.empty() || out.back().conflict_id != *conflict_id) {
      ConflictEvent c;
      c.conflict_id = *conflict_id;
      c.event_id = *event_id;
      c.device = d.raw.device;
      c.trip = d.raw.trip;
      c.obstacle_id = d.raw.obstacle_id;
      c.dominant_kind = *kind;
      out.push_back(std::move(c));
    }
    out.back().records.push_back(d);
  }
  return out;
}

void write_events_jsonl(std::ostream& out, std::span<const LaneChangeEvent> events,
                        std::span<const ConflictEvent> conflicts) {
  for (const auto& ev : events) {
    nlohmann::ordered_json j;
    j["event_id"] = ev.event_id;
    j["device"] = ev.device;
    j["trip"] = ev.trip;
    j["direction"] = to_string(ev.direction);
    j["cross_time_cs"] = ev.cross_time_cs;
    j["window_start_cs"] = ev.cross_time_cs - kLaneChangeHalfWindowCs;
    j["window_end_cs"] = ev.cross_time_cs + kLaneChangeHalfWindowCs;
    j["truncated"] = ev.truncated;
    j["record_count"] = ev.records.size();
    auto ids = nlohmann::json::array();
    auto kinds = nlohmann::json::array();
    for (const auto& c : conflicts) {
      if (c.event_id != ev.event_id) continue;
      ids.push_back(c.conflict_id);
      kinds.push_back(ssm::to_string(c.dominant_kind));
    }
    j["conflict_ids"] = ids;
    j["conflict_kinds"] = kinds;
    out << j.dump() << '\n';
  }
}

std::string_view to_string(LaneDirection d) { return d == LaneDirection::Left ? "left" : "right"; }

}  // namespace evade::traj
