#pragma once

// Data-driven kinematic environment for the evasive-behaviour agent.

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "evade/ssm.hpp"
#include "evade/trajectory.hpp"

namespace evade::env {

inline constexpr double kDt = 0.1;            // s
inline constexpr double kActionBound = 7.0;   // m/s^2, both axes
inline constexpr double kRewardEpsilon = 1e-7;
inline constexpr double kRewardTermFloor = -100.0;

inline constexpr std::size_t kStateDim = 6;
inline constexpr std::size_t kActionDim = 2;

/// Observation (d_lon, v_lon, dv_lon, d_lat, v_lat, dv_lat); dv = leader - ego.
struct EnvState {
  double d_lon = 0.0;
  double v_lon = 0.0;
  double dv_lon = 0.0;
  double d_lat = 0.0;
  double v_lat = 0.0;
  double dv_lat = 0.0;

  std::array<double, kStateDim> to_array() const {
    return {d_lon, v_lon, dv_lon, d_lat, v_lat, dv_lat};
  }
  static EnvState from_array(std::span<const double, kStateDim> a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
};

struct Action {
  double a_lon = 0.0;
  double a_lat = 0.0;
};

Action clamp(const Action& a, double bound = kActionBound);

struct Transition {
  EnvState s;
  Action a;
  double r = 0.0;
  EnvState s_next;
  bool terminal = false;
};

enum class RewardKind { Distance, Speed, SpeedDiff };

std::optional<RewardKind> parse_reward_kind(std::string_view text);
std::string_view to_string(RewardKind kind);

/// One step of the point-mass model: ego speeds integrate the action, the
/// leader keeps its speed, distances follow leader minus ego (trapezoidal)
/// displacement.
EnvState step_kinematics(const EnvState& s, const Action& a, double dt = kDt);

/// Longitudinal and lateral terms of a reward, each <= 0.
struct RewardTerms {
  double lon = 0.0;
  double lat = 0.0;
  double total() const { return lon + lat; }
};

RewardTerms reward_terms(RewardKind kind, const EnvState& sim, const EnvState& obs);
double reward_distance(const EnvState& sim, const EnvState& obs);
double reward_speed(const EnvState& sim, const EnvState& obs);
double reward_speed_diff(const EnvState& sim, const EnvState& obs);

EnvState observe(const traj::DerivedRecord& r);
/// Recorded driver action at a record: CAN longitudinal acceleration and the
/// finite-difference lateral acceleration.
Action human_action(const traj::DerivedRecord& r);
std::vector<EnvState> observe(const traj::ConflictEvent& c);

using Policy = std::function<Action(const EnvState&)>;

struct TransitionOptions {
  RewardKind reward = RewardKind::Speed;
  bool clip_reward = true;  // floor each reward term at kRewardTermFloor
  double dt = kDt;
};

/// Teacher-forced experience: the simulated next state only feeds the reward,
/// the stored next state is the observed one.
Transition make_transition(const EnvState& s, const Action& a, const EnvState& observed_next,
                           bool terminal, const TransitionOptions& opts);

/// One transition per consecutive record pair; the action comes from
/// `noisy_policy` and is clamped to the action bound.
std::vector<Transition> make_transitions(const traj::ConflictEvent& conflict,
                                         const Policy& noisy_policy,
                                         const TransitionOptions& opts);

struct LeaderSpeed {
  double v0_lon = 0.0;
  double v0_lat = 0.0;
};

std::vector<LeaderSpeed> leader_profile(std::span<const EnvState> observed);

struct Rollout {
  std::vector<EnvState> states;
  std::vector<Action> actions;  // actions[k] was applied to states[k]
};

/// Closed-loop generation from the initial state; after each step the
/// relative speeds are re-anchored to the recorded leader speeds.
Rollout rollout(const EnvState& initial, std::span<const LeaderSpeed> leader,
                const Policy& policy, double dt = kDt);

ssm::PairState pair_state(const EnvState& s, const ssm::VehicleDims& dims);

/// time_s, six state components, a_lon, a_lat, ttc_2d (empty when none).
void write_rollout_csv(std::ostream& out, const Rollout& r, const ssm::VehicleDims& dims,
                       double dt = kDt);

}  // namespace evade::env
