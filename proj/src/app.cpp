#include "evade/app.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "evade/csv.hpp"
#include "evade/ddpg.hpp"
#include "evade/errors.hpp"
#include "evade/mlp.hpp"
#include "evade/trajectory.hpp"
#include "log.hpp"

namespace evade::app {

using json = nlohmann::ordered_json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 initialisation failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

namespace {

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

void prepare_out(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("missing output directory");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create " + dir.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

json dims_json(const ssm::VehicleDims& d) { return json{{"length", d.length}, {"width", d.width}}; }

/// Inputs are recorded by file name and content hash, so manifests do not
/// depend on where a run happened.
void write_manifest(const fs::path& dir, std::string_view subcommand, json config,
                    const std::vector<std::pair<std::string, fs::path>>& inputs) {
  json j;
  j["tool"] = "evade-lab";
  j["version"] = EVADE_VERSION_STRING;
  j["subcommand"] = subcommand;
  j["config"] = std::move(config);
  json in = json::object();
  for (const auto& [name, path] : inputs) {
    if (fs::is_directory(path)) {
      json files = json::object();
      std::vector<fs::path> entries;
      for (const auto& e : fs::directory_iterator(path))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") entries.push_back(e.path());
      std::sort(entries.begin(), entries.end());
      for (const auto& e : entries) files[e.filename().string()] = sha256_file(e);
      in[name] = json{{"file", path.filename().string()}, {"sha256", files}};
    } else {
      in[name] = json{{"file", path.filename().string()}, {"sha256", sha256_file(path)}};
    }
  }
  j["inputs"] = std::move(in);
  std::ofstream f = open_out(dir / "manifest.json");
  f << j.dump(2) << '\n';
}

void check_dims(const ssm::VehicleDims& d) {
  if (!(d.length > 0.0) || !(d.width > 0.0)) throw ConfigError("vehicle dimensions must be positive");
}

std::vector<traj::ConflictEvent> read_conflicts(const fs::path& p) {
  require_file(p, "conflicts file");
  return traj::read_conflicts_csv(p);
}

}  // namespace

void gen_synthetic(const GenSyntheticOptions& o) {
  prepare_out(o.out_dir);
  check_dims(o.synth.dims);
  const synth::Corpus corpus = synth::generate(o.synth);
  synth::write_corpus(corpus, o.synth, o.out_dir);
  const auto& s = o.synth;
  write_manifest(o.out_dir, "gen-synthetic",
                 json{{"cut_in", s.cut_in},
                      {"braking", s.braking},
                      {"benign", s.benign},
                      {"seed", s.seed},
                      {"noise_scale", s.noise_scale},
                      {"ax_bias", s.ax_bias},
                      {"ax_noise", s.ax_noise},
                      {"lane_width", s.lane_width},
                      {"duration_s", s.duration_s},
                      {"dims", dims_json(s.dims)},
                      {"threshold", s.threshold},
                      {"min_run", s.min_run}},
                 {});
}

void clean(const CleanOptions& o) {
  require_file(o.lane, "lane file");
  require_file(o.targets, "targets file");
  require_file(o.wsu, "wsu file");
  if (!(o.sigma > 0.0)) throw ConfigError("sigma must be positive");
  check_dims(o.dims);
  prepare_out(o.out_dir);
  const traj::CleanResult r = traj::clean(o.lane, o.targets, o.wsu, o.sigma, o.dims);
  {
    std::ofstream f = open_out(o.out_dir / "cleaned.csv");
    traj::write_derived_csv(f, r.records);
  }
  {
    std::ofstream f = open_out(o.out_dir / "row_errors.csv");
    csv::Writer w(f);
    w.row({"file", "line", "message"});
    for (const auto& e : r.errors) {
      w.field(e.file).field(static_cast<std::int64_t>(e.line)).field(e.message);
      w.end_row();
    }
  }
  {
    std::ofstream f = open_out(o.out_dir / "clean_summary.json");
    json j{{"joined", r.joined},
           {"after_validity", r.after_validity},
           {"after_outliers", r.after_outliers},
           {"derived", r.records.size()},
           {"row_errors", r.errors.size()}};
    f << j.dump(2) << '\n';
  }
  if (!r.errors.empty()) detail::log().warn("{} malformed input rows skipped", r.errors.size());
  write_manifest(o.out_dir, "clean", json{{"sigma", o.sigma}, {"dims", dims_json(o.dims)}},
                 {{"lane", o.lane}, {"targets", o.targets}, {"wsu", o.wsu}});
}

void extract_conflicts(const ExtractOptions& o) {
  require_file(o.cleaned, "cleaned file");
  if (!(o.threshold > 0.0)) throw ConfigError("threshold must be positive");
  if (o.min_run < 1) throw ConfigError("min-run must be at least 1");
  prepare_out(o.out_dir);
  const auto records = traj::read_derived_csv(o.cleaned);
  const auto events = traj::extract_lane_changes(records);
  std::vector<traj::ConflictEvent> conflicts;
  std::int64_t next_id = 1;
  for (const auto& e : events) {
    auto c = traj::extract_conflicts(e, o.threshold, o.min_run, next_id);
    conflicts.insert(conflicts.end(), std::make_move_iterator(c.begin()),
                     std::make_move_iterator(c.end()));
  }
  {
    std::ofstream f = open_out(o.out_dir / "conflicts.csv");
    traj::write_conflicts_csv(f, conflicts);
  }
  {
    std::ofstream f = open_out(o.out_dir / "events.jsonl");
    traj::write_events_jsonl(f, events, conflicts);
  }
  detail::log().info("{} lane changes, {} conflicts", events.size(), conflicts.size());
  write_manifest(o.out_dir, "extract-conflicts",
                 json{{"threshold", o.threshold}, {"min_run", o.min_run}},
                 {{"cleaned", o.cleaned}});
}

void split(const SplitOptions& o) {
  const auto conflicts = read_conflicts(o.conflicts);
  prepare_out(o.out_dir);
  const stats::Split s = stats::split_conflicts(conflicts, o.train_fraction, o.seed);
  {
    std::ofstream f = open_out(o.out_dir / "conflicts_train.csv");
    traj::write_conflicts_csv(f, s.train);
  }
  {
    std::ofstream f = open_out(o.out_dir / "conflicts_test.csv");
    traj::write_conflicts_csv(f, s.test);
  }
  write_manifest(o.out_dir, "split", json{{"train_fraction", o.train_fraction}, {"seed", o.seed}},
                 {{"conflicts", o.conflicts}});
}

void train(const TrainOptions& o) {
  if (o.episodes < 0) throw ConfigError("episodes must be non-negative");
  const auto conflicts = read_conflicts(o.conflicts);
  prepare_out(o.out_dir);
  rl::DdpgConfig cfg;
  cfg.seed = o.seed;
  cfg.transitions.reward = o.reward;
  cfg.transitions.clip_reward = o.reward_clip;
  rl::AgentBundle agent = rl::AgentBundle::create(cfg);
  const rl::TrainingLog log =
      rl::train(agent, conflicts, o.episodes, [&](const rl::EpisodeLog& e) {
        if (e.episode % 50 == 0)
          detail::log().info("episode {} reward {:.4f}", e.episode, e.cumulative_reward);
      });
  rl::save_agent(agent, o.out_dir);
  {
    std::ofstream f = open_out(o.out_dir / "training_log.csv");
    rl::write_training_log_csv(f, log);
  }
  {
    std::ofstream f = open_out(o.out_dir / "timing.csv");
    rl::write_timing_csv(f, log);
  }
  write_manifest(o.out_dir, "train",
                 json{{"reward", env::to_string(o.reward)},
                      {"episodes", o.episodes},
                      {"seed", o.seed},
                      {"reward_clip", o.reward_clip}},
                 {{"conflicts", o.conflicts}});
}

void train_nn(const TrainNnOptions& o) {
  if (o.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (o.bins < 2) throw ConfigError("bins must be at least 2");
  const auto conflicts = read_conflicts(o.conflicts);
  prepare_out(o.out_dir);
  stats::NnConfig cfg;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  const stats::NnResult r = stats::nn_benchmark_train(conflicts, cfg, o.bins);
  nn::save(r.net, o.out_dir / "policy.bin");
  {
    std::ofstream f = open_out(o.out_dir / "model.json");
    json j{{"kind", "nn"},
           {"policy", "policy.bin"},
           {"hidden", cfg.hidden},
           {"learning_rate", cfg.learning_rate},
           {"batch_size", cfg.batch_size},
           {"epochs", cfg.epochs},
           {"seed", cfg.seed}};
    f << j.dump(2) << '\n';
  }
  {
    std::ofstream f = open_out(o.out_dir / "epoch_loss.csv");
    csv::Writer w(f);
    w.row({"epoch", "mse"});
    for (std::size_t i = 0; i < r.epoch_loss.size(); ++i) {
      w.field(static_cast<std::int64_t>(i + 1)).field(r.epoch_loss[i]);
      w.end_row();
    }
  }
  {
    std::ofstream f = open_out(o.out_dir / "metrics_train.csv");
    stats::write_metrics_csv(f, r.train_report);
  }
  write_manifest(o.out_dir, "train-nn",
                 json{{"epochs", o.epochs}, {"seed", o.seed}, {"bins", o.bins}},
                 {{"conflicts", o.conflicts}});
}

nn::Mlp load_policy(const fs::path& model_dir) {
  const fs::path meta = model_dir / "model.json";
  require_file(meta, "model.json");
  std::ifstream in(meta);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(meta.string() + ": " + e.what());
  }
  if (!j.contains("policy") || !j["policy"].is_string())
    throw DataError(meta.string() + ": no policy entry");
  const fs::path policy = model_dir / j["policy"].get<std::string>();
  require_file(policy, "policy network");
  nn::Mlp net = nn::load(policy);
  if (net.input_size() != static_cast<int>(env::kStateDim) ||
      net.output_size() != static_cast<int>(env::kActionDim))
    throw DataError(policy.string() + ": network is not a 6-input, 2-output policy");
  return net;
}

void evaluate(const EvaluateOptions& o) {
  if (o.bins < 2) throw ConfigError("bins must be at least 2");
  const nn::Mlp net = load_policy(o.model_dir);
  const auto test = read_conflicts(o.test);
  prepare_out(o.out_dir);
  const stats::MetricReport m = stats::evaluate_policy(stats::net_policy(net), test, o.bins);
  {
    std::ofstream f = open_out(o.out_dir / "metrics.csv");
    stats::write_metrics_csv(f, m);
  }
  {
    std::ofstream f = open_out(o.out_dir / "metrics.md");
    const std::vector<std::string> names{o.model_dir.filename().empty()
                                             ? o.model_dir.parent_path().filename().string()
                                             : o.model_dir.filename().string()};
    const std::vector<stats::MetricReport> reports{m};
    stats::write_metrics_markdown(f, names, reports);
  }
  write_manifest(o.out_dir, "evaluate", json{{"bins", o.bins}},
                 {{"model", o.model_dir}, {"test", o.test}});
}

void rollout(const RolloutOptions& o) {
  check_dims(o.dims);
  const nn::Mlp net = load_policy(o.model_dir);
  const auto conflicts = read_conflicts(o.conflicts);
  prepare_out(o.out_dir);
  const env::Policy policy = stats::net_policy(net);
  std::size_t written = 0;
  for (const auto& c : conflicts) {
    if (o.conflict_id && c.conflict_id != *o.conflict_id) continue;
    const auto observed = env::observe(c);
    if (observed.empty()) continue;
    const auto leader = env::leader_profile(observed);
    const env::Rollout r = env::rollout(observed.front(), leader, policy);
    std::ofstream f = open_out(o.out_dir / ("rollout_" + std::to_string(c.conflict_id) + ".csv"));
    csv::Writer w(f);
    w.row({"time_s", "d_lon", "v_lon", "dv_lon", "d_lat", "v_lat", "dv_lat", "a_lon", "a_lat",
           "ttc_2d", "obs_d_lon", "obs_v_lon", "obs_dv_lon", "obs_d_lat", "obs_v_lat",
           "obs_dv_lat", "obs_a_lon", "obs_a_lat", "obs_ttc_2d"});
    for (std::size_t k = 0; k < r.states.size(); ++k) {
      const env::EnvState& s = r.states[k];
      w.field(static_cast<double>(k) * env::kDt);
      for (double v : s.to_array()) w.field(v);
      if (k < r.actions.size()) {
        w.field(r.actions[k].a_lon).field(r.actions[k].a_lat);
      } else {
        w.field(std::optional<double>{}).field(std::optional<double>{});
      }
      w.field(ssm::ttc_2d(env::pair_state(s, o.dims), o.dims).combined);
      const env::EnvState& ob = observed[k];
      for (double v : ob.to_array()) w.field(v);
      const env::Action h = env::human_action(c.records[k]);
      w.field(h.a_lon).field(h.a_lat);
      w.field(ssm::ttc_2d(env::pair_state(ob, o.dims), o.dims).combined);
      w.end_row();
    }
    ++written;
  }
  if (o.conflict_id && written == 0)
    throw DataError("conflict " + std::to_string(*o.conflict_id) + " not found");
  json cfg{{"dims", dims_json(o.dims)}};
  if (o.conflict_id) cfg["conflict_id"] = *o.conflict_id;
  write_manifest(o.out_dir, "rollout", cfg, {{"model", o.model_dir}, {"conflicts", o.conflicts}});
}

void sweep_threshold(const SweepOptions& o) {
  require_file(o.points, "points file");
  require_file(o.sites, "sites file");
  const auto grid = stats::threshold_grid(o.min, o.max, o.step);
  prepare_out(o.out_dir);
  const auto points = stats::read_points_csv(o.points);
  const auto sites = stats::read_sites_csv(o.sites);
  const stats::SweepResult r = stats::threshold_sweep(points, sites, o.kind, grid);
  {
    std::ofstream f = open_out(o.out_dir / "sweep.csv");
    stats::write_sweep_csv(f, r);
  }
  {
    std::ofstream f = open_out(o.out_dir / "sweep.md");
    stats::write_sweep_markdown(f, r, o.kind);
  }
  write_manifest(o.out_dir, "sweep-threshold",
                 json{{"min", o.min}, {"max", o.max}, {"step", o.step},
                      {"kind", stats::to_string(o.kind)}},
                 {{"points", o.points}, {"sites", o.sites}});
}

}  // namespace evade::app
