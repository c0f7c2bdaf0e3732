#include "evade/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "evade/csv.hpp"
#include "evade/errors.hpp"
#include "log.hpp"

namespace evade::synth {

std::string_view to_string(Template t) {
  switch (t) {
    case Template::CutIn: return "cut_in";
    case Template::BrakingLeader: return "braking_leader";
    case Template::Benign: return "benign";
  }
  return "benign";
}

namespace {

constexpr double kDt = 0.1;
constexpr std::int64_t kStartCs = 1000;
constexpr double kCutInLateralSpeed = 0.7;
constexpr double kCutInRamp = 0.5;  // s to reach / shed the lateral speed
constexpr int kMaxAttempts = 200;

struct Params {
  double v0 = 25.0;
  double lc_start = 12.0;
  double lc_duration = 7.0;
  int reaction_steps = 10;
  double lead_y = 3.6;
  double lead_v = 25.0;
  double lead_x = 40.0;
  double brake_start = 1e9, brake_decel = 0.0, brake_duration = 0.0;
  double cut_start = 1e9;
};

/// Human driver: delayed perception, car following when the leader is in
/// (or about to enter) the ego lane, speed keeping otherwise.
struct Driver {
  double desired_speed = 25.0;
  double gain_gap = 0.15;
  double gain_speed = 0.8;
  double headway = 0.8;
  double standstill = 2.0;
  double actuator = 0.5;

  double command(double gap, double dv, double d_lat, double vy_lead, double v) const {
    // A leader drifting towards the ego lane counts once its own lateral
    // motion would bring it inside the lane within 3 s.
    const bool relevant = std::abs(d_lat) < 2.2 || std::abs(d_lat + 3.0 * vy_lead) < 2.2;
    if (relevant && gap > 0.0) {
      const double a = gain_gap * (gap - (standstill + headway * v)) + gain_speed * dv;
      return std::clamp(a, -6.5, 1.5);
    }
    return std::clamp(0.3 * (desired_speed - v), -2.0, 1.0);
  }
};

Params draw(Template kind, const SynthConfig& cfg, Rng& rng) {
  Params p;
  const double w = cfg.lane_width;
  p.v0 = rng.uniform(20.0, 30.0);
  p.lc_start = rng.uniform(11.0, 13.0);
  p.lc_duration = std::round(rng.uniform(6.0, 8.0) / kDt) * kDt;
  p.reaction_steps = static_cast<int>(std::lround(rng.uniform(0.7, 1.0) / kDt));
  const double cross = p.lc_start + 0.5 * p.lc_duration;
  switch (kind) {
    case Template::BrakingLeader: {
      p.lead_y = w;
      p.lead_v = p.v0 + rng.uniform(-0.5, 0.5);
      p.brake_start = cross + rng.uniform(-0.5, 0.8);
      p.brake_decel = rng.uniform(4.0, 6.0);
      p.brake_duration = rng.uniform(1.5, 2.5);
      const double gap_at_brake = rng.uniform(14.0, 20.0);
      p.lead_x = gap_at_brake + cfg.dims.length - (p.lead_v - p.v0) * p.brake_start;
      break;
    }
    case Template::CutIn: {
      p.lead_y = 2.0 * w;
      const double closing = rng.uniform(1.2, 2.0);
      p.lead_v = p.v0 - closing;
      p.cut_start = p.lc_start + p.lc_duration + rng.uniform(3.0, 5.0);
      // Longitudinal offset left when the lateral gap would close at the
      // nominal lateral speed: inside the vehicle length, so the geometry is
      // a side contact rather than a rear-end one.
      const double lateral_ttc = (w - cfg.dims.width) / kCutInLateralSpeed;
      const double s1 = rng.uniform(3.5, 4.5);
      const double s0_at_cut = s1 + closing * lateral_ttc;
      p.lead_x = s0_at_cut + closing * p.cut_start;
      break;
    }
    case Template::Benign: {
      p.lead_y = w;
      p.lead_v = p.v0 + rng.uniform(0.0, 1.0);
      p.lead_x = rng.uniform(55.0, 75.0);
      break;
    }
  }
  return p;
}

std::vector<TruthSample> simulate(const Params& p, const SynthConfig& cfg) {
  const auto n = static_cast<std::size_t>(std::lround(cfg.duration_s / kDt)) + 1;
  const double w = cfg.lane_width;
  Driver driver;
  driver.desired_speed = p.v0;

  std::vector<TruthSample> out;
  out.reserve(n);
  TruthSample s;
  s.v_ego = p.v0;
  s.x_lead = p.lead_x;
  s.v_lead = p.lead_v;
  s.y_lead = p.lead_y;

  int cut_phase = 0;  // 0 idle, 1 ramp in, 2 drift, 3 ramp out, 4 done
  int phase_steps = 0;
  const int ramp_steps = static_cast<int>(std::lround(kCutInRamp / kDt));
  const double ramp_accel = kCutInLateralSpeed / kCutInRamp;
  double a_cmd_prev = 0.0;

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * kDt;
    s.time_cs = kStartCs + static_cast<std::int64_t>(k) * 10;

    // Driver reacts to the state seen reaction_steps ago.
    const std::size_t seen = k >= static_cast<std::size_t>(p.reaction_steps)
                                 ? k - static_cast<std::size_t>(p.reaction_steps)
                                 : 0;
    const TruthSample& v = seen < out.size() ? out[seen] : s;
    const double cmd = driver.command(v.x_lead - v.x_ego - cfg.dims.length, v.v_lead - v.v_ego,
                                      v.y_lead - v.y_ego, v.vy_lead, v.v_ego);
    double a = a_cmd_prev + driver.actuator * (cmd - a_cmd_prev);
    a = std::max(a, -s.v_ego / kDt);
    a_cmd_prev = a;
    s.a_ego = a;

    double ay_ego = 0.0;
    const double tau = (t - p.lc_start) / p.lc_duration;
    if (tau >= -1e-9 && tau < 1.0 - 1e-9)
      ay_ego = 2.0 * std::numbers::pi * w / (p.lc_duration * p.lc_duration) *
               std::sin(2.0 * std::numbers::pi * tau);

    double a_lead = (t >= p.brake_start - 1e-9 && t < p.brake_start + p.brake_duration - 1e-9)
                        ? -p.brake_decel
                        : 0.0;
    a_lead = std::max(a_lead, -s.v_lead / kDt);

    double ay_lead = 0.0;
    if (cut_phase == 0 && t >= p.cut_start - 1e-9) cut_phase = 1;
    if (cut_phase == 2 && s.y_lead <= w + 0.5 * kCutInLateralSpeed * kCutInRamp + 1e-9) {
      cut_phase = 3;
      phase_steps = 0;
    }
    if (cut_phase == 1) {
      ay_lead = -ramp_accel;
      if (++phase_steps == ramp_steps) cut_phase = 2;
    } else if (cut_phase == 3) {
      ay_lead = ramp_accel;
      if (++phase_steps == ramp_steps) cut_phase = 4;
    }

    out.push_back(s);

    const double v_ego_next = s.v_ego + a * kDt;
    s.x_ego += 0.5 * (s.v_ego + v_ego_next) * kDt;
    s.v_ego = v_ego_next;
    const double vy_ego_next = s.vy_ego + ay_ego * kDt;
    s.y_ego += 0.5 * (s.vy_ego + vy_ego_next) * kDt;
    s.vy_ego = vy_ego_next;
    const double v_lead_next = s.v_lead + a_lead * kDt;
    s.x_lead += 0.5 * (s.v_lead + v_lead_next) * kDt;
    s.v_lead = v_lead_next;
    const double vy_lead_next = s.vy_lead + ay_lead * kDt;
    s.y_lead += 0.5 * (s.vy_lead + vy_lead_next) * kDt;
    s.vy_lead = cut_phase == 4 ? 0.0 : vy_lead_next;
  }
  return out;
}

int lane_index(double y, double w) { return static_cast<int>(std::floor(y / w + 0.5)); }

std::int64_t crossing_time(const std::vector<TruthSample>& truth, double w) {
  for (std::size_t k = 1; k < truth.size(); ++k)
    if (lane_index(truth[k].y_ego, w) != lane_index(truth[k - 1].y_ego, w)) return truth[k].time_cs;
  return -1;
}

bool visible(const TruthSample& s, const ssm::VehicleDims& dims) {
  const double range = s.x_lead - s.x_ego - dims.length;
  return range < 100.0 && std::abs(s.y_lead - s.y_ego) < 7.0 && s.v_lead > -1.0;
}

ssm::TtcResult truth_ttc(const TruthSample& s, const ssm::VehicleDims& dims) {
  return ssm::ttc_2d({s.x_lead - s.x_ego, s.y_lead - s.y_ego, s.v_ego, s.vy_ego, s.v_lead,
                      s.vy_lead},
                     dims);
}

struct TruthSummary {
  std::vector<ssm::ConflictKind> kinds;
  std::size_t shortest_run = 0;
  double min_ttc = 1e9;  // inside the window
  double min_gap = 1e9;
};

TruthSummary summarise(const Scenario& sc, const SynthConfig& cfg) {
  TruthSummary out;
  const auto& truth = sc.truth;
  const std::int64_t lo = sc.cross_time_cs - traj::kLaneChangeHalfWindowCs;
  const std::int64_t hi = sc.cross_time_cs + traj::kLaneChangeHalfWindowCs;
  std::size_t run = 0, rear = 0, side = 0;
  double run_min = 1e9;
  ssm::ConflictKind run_min_kind = ssm::ConflictKind::None;
  auto close_run = [&] {
    if (run >= cfg.min_run) {
      out.kinds.push_back(rear > side   ? ssm::ConflictKind::RearEnd
                          : side > rear ? ssm::ConflictKind::Sideswipe
                                        : run_min_kind);
      out.shortest_run = out.shortest_run == 0 ? run : std::min(out.shortest_run, run);
    }
    run = rear = side = 0;
    run_min = 1e9;
  };
  // The pipeline drops the first sample of every run, so start at 1.
  for (std::size_t k = 1; k < truth.size(); ++k) {
    const TruthSample& s = truth[k];
    out.min_gap = std::min(out.min_gap, s.x_lead - s.x_ego - cfg.dims.length);
    if (s.time_cs < lo || s.time_cs > hi) continue;
    const bool seen = visible(s, cfg.dims);
    const ssm::TtcResult ttc = truth_ttc(s, cfg.dims);
    if (seen && ttc.combined) out.min_ttc = std::min(out.min_ttc, *ttc.combined);
    if (seen && ssm::classify_risk(ttc, cfg.threshold)) {
      ++run;
      if (ttc.kind == ssm::ConflictKind::RearEnd) ++rear;
      if (ttc.kind == ssm::ConflictKind::Sideswipe) ++side;
      if (*ttc.combined < run_min) {
        run_min = *ttc.combined;
        run_min_kind = ttc.kind;
      }
    } else {
      close_run();
    }
  }
  close_run();
  return out;
}

bool acceptable(Template kind, const TruthSummary& t) {
  if (t.min_gap < 0.3) return false;
  if (kind == Template::Benign) return t.kinds.empty() && t.min_ttc > 8.0;
  const auto want = kind == Template::CutIn ? ssm::ConflictKind::Sideswipe
                                            : ssm::ConflictKind::RearEnd;
  return t.kinds.size() == 1 && t.kinds.front() == want && t.shortest_run >= 13 &&
         t.min_ttc < 4.0;
}

}  // namespace

std::vector<ssm::ConflictKind> truth_conflicts(const Scenario& s, const SynthConfig& config) {
  return summarise(s, config).kinds;
}

Scenario generate_one(Template kind, const SynthConfig& config, std::int64_t trip,
                      std::uint64_t seed) {
  Rng rng(seed);
  Scenario sc;
  sc.device = config.device;
  sc.trip = trip;
  sc.kind = kind;
  for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
    const Params p = draw(kind, config, rng);
    sc.truth = simulate(p, config);
    sc.cross_time_cs = crossing_time(sc.truth, config.lane_width);
    sc.attempts = attempt;
    const TruthSummary t = summarise(sc, config);
    sc.intended_kinds = t.kinds;
    sc.intended_conflicts = static_cast<int>(t.kinds.size());
    if (acceptable(kind, t)) return sc;
  }
  detail::log().warn("trip {}: {} target not met after {} draws", trip, to_string(kind),
                     kMaxAttempts);
  return sc;
}

std::vector<traj::TrajectoryRecord> observe(const Scenario& sc, const SynthConfig& cfg, Rng& rng) {
  const double w = cfg.lane_width;
  const double ns = cfg.noise_scale;
  auto noise = [&](double sd) { return ns > 0.0 ? rng.normal(0.0, sd * ns) : 0.0; };
  constexpr double kLat0 = 42.28, kLon0 = -83.74;
  const double metres_per_deg_lon = 111320.0 * std::cos(kLat0 * std::numbers::pi / 180.0);

  std::vector<traj::TrajectoryRecord> out;
  out.reserve(sc.truth.size());
  for (const TruthSample& s : sc.truth) {
    traj::TrajectoryRecord r;
    r.device = sc.device;
    r.trip = sc.trip;
    r.time_cs = s.time_cs;
    const double centre = w * lane_index(s.y_ego, w);
    r.lane_dist_left = s.y_ego - (centre + 0.5 * w) + noise(0.03);
    r.lane_dist_right = s.y_ego - (centre - 0.5 * w) + noise(0.03);
    r.lane_quality_left = 3;
    r.lane_quality_right = 3;
    r.obstacle_id = 1;
    r.target_type = 0;
    r.range_lon = s.x_lead - s.x_ego - cfg.dims.length + noise(0.02);
    r.range_rate = s.v_lead - s.v_ego + noise(0.02);
    r.transversal = s.y_lead - s.y_ego + noise(0.005);
    r.gps_valid = 1;
    r.lat_deg = kLat0;
    r.lon_deg = kLon0 + s.x_ego / metres_per_deg_lon;
    r.gps_speed = s.v_ego + noise(0.02);
    r.can_valid = 1;
    r.ax = s.a_ego + (ns > 0.0 ? cfg.ax_bias : 0.0) + noise(cfg.ax_noise);
    out.push_back(r);
  }
  return out;
}

Corpus generate(const SynthConfig& config) {
  if (config.cut_in < 0 || config.braking < 0 || config.benign < 0)
    throw ConfigError("scenario counts must be non-negative");
  if (!(config.noise_scale >= 0.0)) throw ConfigError("noise scale must be non-negative");
  Corpus c;
  Rng seeds(config.seed);
  Rng noise_rng(seeds.next_u64());
  std::vector<Template> plan;
  plan.insert(plan.end(), static_cast<std::size_t>(config.cut_in), Template::CutIn);
  plan.insert(plan.end(), static_cast<std::size_t>(config.braking), Template::BrakingLeader);
  plan.insert(plan.end(), static_cast<std::size_t>(config.benign), Template::Benign);
  for (std::size_t i = plan.size(); i > 1; --i) std::swap(plan[i - 1], plan[seeds.below(i)]);

  std::int64_t trip = 1;
  for (Template kind : plan) {
    Scenario sc = generate_one(kind, config, trip++, seeds.next_u64());
    auto recs = observe(sc, config, noise_rng);
    c.records.insert(c.records.end(), recs.begin(), recs.end());
    c.scenarios.push_back(std::move(sc));
  }
  return c;
}

void write_corpus(const Corpus& corpus, const SynthConfig& config,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    return f;
  };
  {
    std::ofstream f = open("lane.csv");
    csv::Writer w(f);
    w.row({"Device", "Trip", "Time", "LaneDistanceLeft", "LaneDistanceRight", "LaneQualityLeft",
           "LaneQualityRight"});
    for (const auto& r : corpus.records) {
      w.field(r.device).field(r.trip).field(r.time_cs).field(r.lane_dist_left);
      w.field(r.lane_dist_right).field(r.lane_quality_left).field(r.lane_quality_right);
      w.end_row();
    }
  }
  {
    std::ofstream f = open("front_targets.csv");
    csv::Writer w(f);
    w.row({"Device", "Trip", "Time", "ObstacleId", "TargetType", "Range", "RangeRate",
           "Transversal"});
    for (const auto& r : corpus.records) {
      w.field(r.device).field(r.trip).field(r.time_cs).field(r.obstacle_id);
      w.field(r.target_type).field(r.range_lon).field(r.range_rate).field(r.transversal);
      w.end_row();
    }
  }
  {
    std::ofstream f = open("wsu.csv");
    csv::Writer w(f);
    w.row({"Device", "Trip", "Time", "GpsValidWsu", "LatitudeWsu", "LongitudeWsu", "GpsSpeedWsu",
           "ValidCanWsu", "AxWsu"});
    for (const auto& r : corpus.records) {
      w.field(r.device).field(r.trip).field(r.time_cs).field(r.gps_valid).field(r.lat_deg);
      w.field(r.lon_deg).field(r.gps_speed).field(r.can_valid).field(r.ax);
      w.end_row();
    }
  }
  nlohmann::ordered_json j;
  j["seed"] = config.seed;
  j["noise_scale"] = config.noise_scale;
  j["ax_bias"] = config.ax_bias;
  j["lane_width"] = config.lane_width;
  j["threshold"] = config.threshold;
  j["min_run"] = config.min_run;
  int total = 0;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& s : corpus.scenarios) {
    nlohmann::ordered_json e;
    e["device"] = s.device;
    e["trip"] = s.trip;
    e["template"] = to_string(s.kind);
    e["cross_time_cs"] = s.cross_time_cs;
    e["intended_conflicts"] = s.intended_conflicts;
    e["attempts"] = s.attempts;
    std::vector<std::string> kinds;
    for (auto k : s.intended_kinds) kinds.emplace_back(ssm::to_string(k));
    e["intended_kinds"] = kinds;
    total += s.intended_conflicts;
    list.push_back(e);
  }
  j["intended_conflicts_total"] = total;
  j["scenarios"] = list;
  std::ofstream f = open("scenarios.json");
  f << j.dump(2) << '\n';
}

}  // namespace evade::synth
