#include "evade/env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "evade/csv.hpp"

namespace evade::env {

Action clamp(const Action& a, double bound) {
  return {std::clamp(a.a_lon, -bound, bound), std::clamp(a.a_lat, -bound, bound)};
}

std::optional<RewardKind> parse_reward_kind(std::string_view text) {
  if (text == "d" || text == "distance") return RewardKind::Distance;
  if (text == "v" || text == "speed") return RewardKind::Speed;
  if (text == "dv" || text == "speed_diff") return RewardKind::SpeedDiff;
  return std::nullopt;
}

std::string_view to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::Distance:
      return "d";
    case RewardKind::Speed:
      return "v";
    case RewardKind::SpeedDiff:
      break;
  }
  return "dv";
}

EnvState step_kinematics(const EnvState& s, const Action& a, double dt) {
  EnvState n;
  n.v_lon = s.v_lon + a.a_lon * dt;
  n.dv_lon = s.dv_lon - a.a_lon * dt;
  n.d_lon = s.d_lon + (s.v_lon + s.dv_lon) * dt - 0.5 * (s.v_lon + n.v_lon) * dt;
  n.v_lat = s.v_lat + a.a_lat * dt;
  n.dv_lat = s.dv_lat - a.a_lat * dt;
  n.d_lat = s.d_lat + (s.v_lat + s.dv_lat) * dt - 0.5 * (s.v_lat + n.v_lat) * dt;
  return n;
}

namespace {

double term(double simulated, double observed) {
  return -std::abs(simulated - observed) / (std::abs(observed) + kRewardEpsilon);
}

}  // namespace

RewardTerms reward_terms(RewardKind kind, const EnvState& sim, const EnvState& obs) {
  switch (kind) {
    case RewardKind::Distance:
      return {term(sim.d_lon, obs.d_lon), term(sim.d_lat, obs.d_lat)};
    case RewardKind::Speed:
      return {term(sim.v_lon, obs.v_lon), term(sim.v_lat, obs.v_lat)};
    case RewardKind::SpeedDiff:
      break;
  }
  return {term(sim.dv_lon, obs.dv_lon), term(sim.dv_lat, obs.dv_lat)};
}

double reward_distance(const EnvState& sim, const EnvState& obs) {
  return reward_terms(RewardKind::Distance, sim, obs).total();
}
double reward_speed(const EnvState& sim, const EnvState& obs) {
  return reward_terms(RewardKind::Speed, sim, obs).total();
}
double reward_speed_diff(const EnvState& sim, const EnvState& obs) {
  return reward_terms(RewardKind::SpeedDiff, sim, obs).total();
}

EnvState observe(const traj::DerivedRecord& r) {
  return {r.d_lon(), r.v_lon(), r.dv_lon(), r.d_lat(), r.v_lat, r.dv_lat};
}

Action human_action(const traj::DerivedRecord& r) { return {r.raw.ax, r.a_lat}; }

std::vector<EnvState> observe(const traj::ConflictEvent& c) {
  std::vector<EnvState> out;
  out.reserve(c.records.size());
  for (const auto& r : c.records) out.push_back(observe(r));
  return out;
}

Transition make_transition(const EnvState& s, const Action& a, const EnvState& observed_next,
                           bool terminal, const TransitionOptions& opts) {
  const EnvState sim = step_kinematics(s, a, opts.dt);
  RewardTerms r = reward_terms(opts.reward, sim, observed_next);
  if (opts.clip_reward) {
    r.lon = std::max(r.lon, kRewardTermFloor);
    r.lat = std::max(r.lat, kRewardTermFloor);
  }
  return {s, a, r.total(), observed_next, terminal};
}

std::vector<Transition> make_transitions(const traj::ConflictEvent& conflict,
                                         const Policy& noisy_policy,
                                         const TransitionOptions& opts) {
  const std::vector<EnvState> obs = observe(conflict);
  std::vector<Transition> out;
  if (obs.size() < 2) return out;
  out.reserve(obs.size() - 1);
  for (std::size_t t = 0; t + 1 < obs.size(); ++t) {
    const Action a = clamp(noisy_policy(obs[t]));
    out.push_back(make_transition(obs[t], a, obs[t + 1], t + 2 == obs.size(), opts));
  }
  return out;
}

std::vector<LeaderSpeed> leader_profile(std::span<const EnvState> observed) {
  std::vector<LeaderSpeed> out;
  out.reserve(observed.size());
  for (const auto& s : observed) out.push_back({s.v_lon + s.dv_lon, s.v_lat + s.dv_lat});
  return out;
}

Rollout rollout(const EnvState& initial, std::span<const LeaderSpeed> leader,
                const Policy& policy, double dt) {
  Rollout r;
  if (leader.empty()) return r;
  r.states.reserve(leader.size());
  r.states.push_back(initial);
  for (std::size_t k = 0; k + 1 < leader.size(); ++k) {
    const Action a = clamp(policy(r.states.back()));
    EnvState next = step_kinematics(r.states.back(), a, dt);
    next.dv_lon = leader[k + 1].v0_lon - next.v_lon;
    next.dv_lat = leader[k + 1].v0_lat - next.v_lat;
    r.actions.push_back(a);
    r.states.push_back(next);
  }
  return r;
}

ssm::PairState pair_state(const EnvState& s, const ssm::VehicleDims& dims) {
  return {s.d_lon + dims.length, s.d_lat, s.v_lon, s.v_lat, s.v_lon + s.dv_lon,
          s.v_lat + s.dv_lat};
}

void write_rollout_csv(std::ostream& out, const Rollout& r, const ssm::VehicleDims& dims,
                       double dt) {
  csv::Writer w(out);
  w.row({"time_s", "d_lon", "v_lon", "dv_lon", "d_lat", "v_lat", "dv_lat", "a_lon", "a_lat",
         "ttc_2d"});
  for (std::size_t k = 0; k < r.states.size(); ++k) {
    const EnvState& s = r.states[k];
    w.field(static_cast<double>(k) * dt);
    for (double v : s.to_array()) w.field(v);
    if (k < r.actions.size()) {
      w.field(r.actions[k].a_lon).field(r.actions[k].a_lat);
    } else {
      w.field(std::string_view()).field(std::string_view());
    }
    w.field(ssm::ttc_2d(pair_state(s, dims), dims).combined);
    w.end_row();
  }
}

}  // namespace evade::env
