#include "evade/ddpg.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "evade/csv.hpp"
#include "evade/errors.hpp"

namespace evade::rl {

env::Action OuNoise::sample(Rng& rng) {
  for (double& x : state) x += theta * (mu - x) + sigma * rng.normal();
  return {state[0], state[1]};
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : storage_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(const env::Transition& t) {
  storage_[head_] = t;
  head_ = (head_ + 1) % storage_.size();
  size_ = std::min(size_ + 1, storage_.size());
}

const env::Transition& ReplayBuffer::at(std::size_t i) const {
  const std::size_t oldest = size_ < storage_.size() ? 0 : head_;
  return storage_[(oldest + i) % storage_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  // Floyd's algorithm: n distinct indices out of size_.
  std::vector<char> taken(size_, 0);
  std::vector<std::size_t> picked;
  picked.reserve(n);
  for (std::size_t j = size_ - n; j < size_; ++j) {
    const auto t = static_cast<std::size_t>(rng.below(j + 1));
    const std::size_t choice = taken[t] ? j : t;
    taken[choice] = 1;
    picked.push_back(choice);
  }
  return picked;
}

std::optional<std::vector<env::Transition>> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (n == 0 || size_ < n) return std::nullopt;
  std::vector<env::Transition> out;
  out.reserve(n);
  for (std::size_t i : sample_indices(n, rng)) out.push_back(at(i));
  return out;
}

Batch Batch::from(std::span<const env::Transition> transitions) {
  const auto n = static_cast<Eigen::Index>(transitions.size());
  Batch b;
  b.states.resize(env::kStateDim, n);
  b.actions.resize(env::kActionDim, n);
  b.rewards.resize(n);
  b.next_states.resize(env::kStateDim, n);
  b.not_terminal.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = transitions[static_cast<std::size_t>(i)];
    const auto s = t.s.to_array();
    const auto s2 = t.s_next.to_array();
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(env::kStateDim); ++k) {
      b.states(k, i) = s[static_cast<std::size_t>(k)];
      b.next_states(k, i) = s2[static_cast<std::size_t>(k)];
    }
    b.actions(0, i) = t.a.a_lon;
    b.actions(1, i) = t.a.a_lat;
    b.rewards(i) = t.r;
    b.not_terminal(i) = t.terminal ? 0.0 : 1.0;
  }
  return b;
}

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
  Eigen::MatrixXd x(states.rows() + actions.rows(), states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

}  // namespace

AgentBundle AgentBundle::create(const DdpgConfig& config) {
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(config.tau >= 0.0 && config.tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
  AgentBundle a;
  a.config = config;
  a.rng = Rng(config.seed);
  a.actor = nn::Mlp::random(layer_sizes(env::kStateDim, config.hidden, env::kActionDim),
                            nn::OutputActivation::TanhScaled, config.action_bound, a.rng);
  a.critic = nn::Mlp::random(
      layer_sizes(env::kStateDim + env::kActionDim, config.hidden, 1),
      nn::OutputActivation::Identity, 1.0, a.rng);
  a.target_actor = a.actor;
  a.target_critic = a.critic;
  a.actor_opt = nn::Adam(a.actor, {.learning_rate = config.actor_learning_rate});
  a.critic_opt = nn::Adam(a.critic, {.learning_rate = config.critic_learning_rate});
  a.noise = OuNoise{config.ou_theta, config.ou_sigma, 0.0, {}};
  a.buffer = ReplayBuffer(config.replay_capacity);
  return a;
}

env::Action AgentBundle::act(const env::EnvState& s) const {
  const auto in = s.to_array();
  const auto out = actor.forward(std::span<const double>(in));
  return {out[0], out[1]};
}

env::Policy AgentBundle::policy() const {
  return [net = actor](const env::EnvState& s) {
    const auto in = s.to_array();
    const auto out = net.forward(std::span<const double>(in));
    return env::Action{out[0], out[1]};
  };
}

CriticFn mlp_critic(const nn::Mlp& critic) {
  return [&critic](const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
    nn::ForwardCache cache;
    CriticEvaluation e;
    e.q = critic.forward(stack(states, actions), &cache);
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, states.cols());
    const nn::Gradients g = critic.backward(cache, ones, /*parameters=*/false);
    e.dq_daction = g.input.bottomRows(actions.rows());
    return e;
  };
}

double critic_update(AgentBundle& agent, const Batch& batch) {
  const auto n = static_cast<double>(batch.size());
  const Eigen::MatrixXd next_actions = agent.target_actor.forward(batch.next_states, nullptr);
  const Eigen::RowVectorXd next_q =
      agent.target_critic.forward(stack(batch.next_states, next_actions), nullptr);
  const Eigen::RowVectorXd targets =
      batch.rewards + agent.config.gamma * batch.not_terminal.cwiseProduct(next_q);

  nn::ForwardCache cache;
  const Eigen::RowVectorXd q = agent.critic.forward(stack(batch.states, batch.actions), &cache);
  const Eigen::RowVectorXd diff = q - targets;
  const double loss = diff.squaredNorm() / n;
  const nn::Gradients g = agent.critic.backward(cache, (2.0 / n) * diff);
  agent.critic_opt.step(agent.critic, g);
  return loss;
}

double actor_update(nn::Mlp& actor, nn::Adam& opt, const Eigen::MatrixXd& states,
                    const CriticFn& critic) {
  const auto n = static_cast<double>(states.cols());
  nn::ForwardCache cache;
  const Eigen::MatrixXd actions = actor.forward(states, &cache);
  const CriticEvaluation e = critic(states, actions);
  // Ascend mean Q: descend on -Q / N.
  const nn::Gradients g = actor.backward(cache, (-1.0 / n) * e.dq_daction);
  opt.step(actor, g);
  return e.q.mean();
}

double actor_update(AgentBundle& agent, const Batch& batch) {
  return actor_update(agent.actor, agent.actor_opt, batch.states, mlp_critic(agent.critic));
}

TrainingLog train(AgentBundle& agent, std::span<const traj::ConflictEvent> conflicts,
                  std::int64_t episodes, const EpisodeCallback& on_episode) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < conflicts.size(); ++i)
    if (conflicts[i].records.size() >= 2) usable.push_back(i);
  if (usable.empty()) throw DataError("training set holds no conflict with two or more records");
  if (episodes < 0) throw ConfigError("episode count must be non-negative");

  TrainingLog log;
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  const auto& cfg = agent.config;

  for (std::int64_t ep = 0; ep < episodes; ++ep) {
    if (cursor == order.size()) {
      order = usable;
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[agent.rng.below(i)]);
      cursor = 0;
    }
    const traj::ConflictEvent& conflict = conflicts[order[cursor++]];
    const auto started = std::chrono::steady_clock::now();

    agent.noise.reset();
    const std::vector<env::EnvState> obs = env::observe(conflict);
    EpisodeLog row;
    row.episode = ep + 1;
    row.conflict_id = conflict.conflict_id;
    double loss_sum = 0.0;
    std::size_t updates = 0;

    for (std::size_t t = 0; t + 1 < obs.size(); ++t) {
      env::Action a = agent.act(obs[t]);
      if (cfg.exploration) {
        const env::Action n = agent.noise.sample(agent.rng);
        a.a_lon += n.a_lon;
        a.a_lat += n.a_lat;
      }
      a = env::clamp(a, cfg.action_bound);
      const env::Transition tr =
          env::make_transition(obs[t], a, obs[t + 1], t + 2 == obs.size(), cfg.transitions);
      agent.buffer.push(tr);
      row.cumulative_reward += tr.r;
      ++row.steps;

      if (auto sample = agent.buffer.sample(cfg.batch_size, agent.rng)) {
        const Batch batch = Batch::from(*sample);
        loss_sum += critic_update(agent, batch);
        actor_update(agent, batch);
        nn::soft_update(agent.target_critic, agent.critic, cfg.tau);
        nn::soft_update(agent.target_actor, agent.actor, cfg.tau);
        ++updates;
      }
    }
    if (updates > 0) row.mean_critic_loss = loss_sum / static_cast<double>(updates);
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    log.episodes.push_back(row);
    if (on_episode) on_episode(row);
  }
  return log;
}

std::vector<double> rolling_reward(const TrainingLog& log, std::size_t window) {
  std::vector<double> out;
  if (window == 0) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < log.episodes.size(); ++i) {
    acc += log.episodes[i].cumulative_reward;
    if (i >= window) acc -= log.episodes[i - window].cumulative_reward;
    out.push_back(acc / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

void write_training_log_csv(std::ostream& out, const TrainingLog& log) {
  csv::Writer w(out);
  w.row({"episode", "conflict_id", "steps", "cumulative_reward", "mean_critic_loss"});
  for (const auto& e : log.episodes) {
    w.field(e.episode).field(e.conflict_id).field(static_cast<std::int64_t>(e.steps));
    w.field(e.cumulative_reward).field(e.mean_critic_loss);
    w.end_row();
  }
}

void write_timing_csv(std::ostream& out, const TrainingLog& log) {
  csv::Writer w(out);
  w.row({"episode", "wall_time_s"});
  for (const auto& e : log.episodes) {
    w.field(e.episode).field(e.wall_time_s);
    w.end_row();
  }
}

void save_agent(const AgentBundle& agent, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save(agent.actor, dir / "actor.bin");
  nn::save(agent.critic, dir / "critic.bin");
  nn::save(agent.target_actor, dir / "target_actor.bin");
  nn::save(agent.target_critic, dir / "target_critic.bin");

  const auto& c = agent.config;
  nlohmann::ordered_json j;
  j["kind"] = "ddpg";
  j["policy"] = "actor.bin";
  j["reward"] = env::to_string(c.transitions.reward);
  j["reward_clip"] = c.transitions.clip_reward;
  j["actor_learning_rate"] = c.actor_learning_rate;
  j["critic_learning_rate"] = c.critic_learning_rate;
  j["gamma"] = c.gamma;
  j["tau"] = c.tau;
  j["batch_size"] = c.batch_size;
  j["replay_capacity"] = c.replay_capacity;
  j["hidden"] = c.hidden;
  j["action_bound"] = c.action_bound;
  j["ou_theta"] = c.ou_theta;
  j["ou_sigma"] = c.ou_sigma;
  j["seed"] = c.seed;
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "model.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace evade::rl
