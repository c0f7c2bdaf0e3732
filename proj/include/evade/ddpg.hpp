#pragma once

// Deep deterministic policy gradient agent trained on recorded conflicts.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "evade/env.hpp"
#include "evade/mlp.hpp"
#include "evade/rng.hpp"
#include "evade/trajectory.hpp"

namespace evade::rl {

/// Discrete Ornstein-Uhlenbeck process with unit step:
/// x <- x + theta * (mu - x) + sigma * N(0, 1), per action component.
struct OuNoise {
  double theta = 0.15;
  double sigma = 0.2;
  double mu = 0.0;
  std::array<double, env::kActionDim> state{};

  void reset() { state.fill(mu); }
  env::Action sample(Rng& rng);
};

/// Fixed-capacity FIFO experience store.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000);

  void push(const env::Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return storage_.size(); }
  /// i-th oldest stored transition.
  const env::Transition& at(std::size_t i) const;

  /// Uniform sample without replacement; nullopt while size() < n.
  std::optional<std::vector<env::Transition>> sample(std::size_t n, Rng& rng) const;
  /// Storage indices (0 = oldest) of a sample without replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::vector<env::Transition> storage_;
  std::size_t head_ = 0;  // next write position
  std::size_t size_ = 0;
};

/// Column-major view of a minibatch.
struct Batch {
  Eigen::MatrixXd states;       // 6 x N
  Eigen::MatrixXd actions;      // 2 x N
  Eigen::RowVectorXd rewards;   // 1 x N
  Eigen::MatrixXd next_states;  // 6 x N
  Eigen::RowVectorXd not_terminal;

  static Batch from(std::span<const env::Transition> transitions);
  Eigen::Index size() const { return states.cols(); }
};

struct DdpgConfig {
  double actor_learning_rate = 5e-4;
  double critic_learning_rate = 1e-3;
  double gamma = 0.9;
  double tau = 0.01;
  std::size_t batch_size = 256;
  std::size_t replay_capacity = 10000;
  std::vector<int> hidden = {256, 256};
  double action_bound = env::kActionBound;
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  bool exploration = true;
  env::TransitionOptions transitions;
  std::uint64_t seed = 0;
};

/// The four networks, their optimisers, exploration noise and replay memory.
struct AgentBundle {
  DdpgConfig config;
  nn::Mlp actor, target_actor, critic, target_critic;
  nn::Adam actor_opt, critic_opt;
  OuNoise noise;
  ReplayBuffer buffer;
  Rng rng;

  static AgentBundle create(const DdpgConfig& config);

  /// Deterministic policy output (no exploration noise).
  env::Action act(const env::EnvState& s) const;
  env::Policy policy() const;
};

/// Critic value and its gradient with respect to the action for a batch.
struct CriticEvaluation {
  Eigen::RowVectorXd q;        // 1 x N
  Eigen::MatrixXd dq_daction;  // 2 x N
};
using CriticFn =
    std::function<CriticEvaluation(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions)>;

/// Critic evaluation through an MLP over the concatenated (state, action).
CriticFn mlp_critic(const nn::Mlp& critic);

/// One Adam step of the critic on the TD targets computed with the target
/// networks; terminal transitions drop the bootstrap term. Returns the
/// mean-squared loss before the step.
double critic_update(AgentBundle& agent, const Batch& batch);

/// One Adam step of the actor along the sampled policy gradient of `critic`.
/// Returns the mean Q before the step.
double actor_update(nn::Mlp& actor, nn::Adam& opt, const Eigen::MatrixXd& states,
                    const CriticFn& critic);
double actor_update(AgentBundle& agent, const Batch& batch);

struct EpisodeLog {
  std::int64_t episode = 0;
  std::int64_t conflict_id = 0;
  std::size_t steps = 0;
  double cumulative_reward = 0.0;
  std::optional<double> mean_critic_loss;  // none before the buffer holds a batch
  double wall_time_s = 0.0;
};

struct TrainingLog {
  std::vector<EpisodeLog> episodes;
};

using EpisodeCallback = std::function<void(const EpisodeLog&)>;

/// Runs `episodes` episodes over the conflicts, drawn without replacement and
/// reshuffled once all have been used. Throws DataError on an empty set.
TrainingLog train(AgentBundle& agent, std::span<const traj::ConflictEvent> conflicts,
                  std::int64_t episodes, const EpisodeCallback& on_episode = {});

/// Trailing moving average of episodic reward.
std::vector<double> rolling_reward(const TrainingLog& log, std::size_t window = 50);

/// Deterministic columns only (episode, conflict_id, steps, reward, loss).
void write_training_log_csv(std::ostream& out, const TrainingLog& log);
void write_timing_csv(std::ostream& out, const TrainingLog& log);

/// Writes actor/critic/target networks and model.json into dir.
void save_agent(const AgentBundle& agent, const std::filesystem::path& dir);

}  // namespace evade::rl
