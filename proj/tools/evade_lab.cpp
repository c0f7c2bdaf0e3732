// evade-lab: command-line front end over the C API.

#include <cstdio>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "evade/evade.h"

namespace {

int report(evade_status s) {
  if (s != EVADE_OK) std::fprintf(stderr, "evade-lab: %s\n", evade_last_error());
  return static_cast<int>(s);
}

void add_dims(CLI::App* cmd, evade_dims& d) {
  cmd->add_option("--length", d.length, "Vehicle length (m)")->capture_default_str();
  cmd->add_option("--width", d.width, "Vehicle width (m)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evasive lane-change behaviour toolkit"};
  app.set_version_flag("--version", std::string(evade_version()));
  app.require_subcommand(1);

  std::string s_out, s_lane, s_targets, s_wsu, s_cleaned, s_conflicts, s_model, s_test, s_points,
      s_sites;

  evade_gen_options gen;
  evade_gen_options_init(&gen);
  auto* c_gen = app.add_subcommand("gen-synthetic", "Generate a synthetic CSV corpus");
  c_gen->add_option("--out", s_out, "Output directory")->required();
  c_gen->add_option("--cut-in", gen.cut_in, "Cut-in scenarios")->capture_default_str();
  c_gen->add_option("--braking", gen.braking, "Braking-leader scenarios")->capture_default_str();
  c_gen->add_option("--benign", gen.benign, "Benign lane changes")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  c_gen->add_option("--noise-scale", gen.noise_scale, "Sensor noise multiplier")
      ->capture_default_str();
  c_gen->add_option("--ax-bias", gen.ax_bias, "CAN accelerometer offset (m/s^2)")
      ->capture_default_str();

  evade_clean_options cl;
  evade_clean_options_init(&cl);
  auto* c_clean = app.add_subcommand("clean", "Join, filter and smooth the raw tables");
  c_clean->add_option("--lane", s_lane, "Lane table CSV")->required();
  c_clean->add_option("--targets", s_targets, "Front-target table CSV")->required();
  c_clean->add_option("--wsu", s_wsu, "WSU table CSV")->required();
  c_clean->add_option("--out", s_out, "Output directory")->required();
  c_clean->add_option("--sigma", cl.sigma, "Gaussian sigma in samples")->capture_default_str();
  add_dims(c_clean, cl.dims);

  evade_extract_options ex;
  evade_extract_options_init(&ex);
  auto* c_ex = app.add_subcommand("extract-conflicts", "Lane changes and conflict events");
  c_ex->add_option("--cleaned", s_cleaned, "cleaned.csv from clean")->required();
  c_ex->add_option("--out", s_out, "Output directory")->required();
  c_ex->add_option("--threshold", ex.threshold, "2D-TTC threshold (s)")->capture_default_str();
  c_ex->add_option("--min-run", ex.min_run, "Minimum consecutive records")->capture_default_str();

  evade_split_options sp;
  evade_split_options_init(&sp);
  auto* c_split = app.add_subcommand("split", "Seeded train/test split by conflict");
  c_split->add_option("--conflicts", s_conflicts, "conflicts.csv")->required();
  c_split->add_option("--out", s_out, "Output directory")->required();
  c_split->add_option("--train-fraction", sp.train_fraction, "Training share")
      ->capture_default_str();
  c_split->add_option("--seed", sp.seed, "Random seed")->capture_default_str();

  evade_train_options tr;
  evade_train_options_init(&tr);
  std::string reward = "v";
  bool no_clip = false;
  auto* c_train = app.add_subcommand("train", "Train a DDPG agent on conflicts");
  c_train->add_option("--conflicts", s_conflicts, "Training conflicts CSV")->required();
  c_train->add_option("--out", s_out, "Model directory")->required();
  c_train->add_option("--reward", reward, "Reward: d, v or dv")
      ->check(CLI::IsMember({"d", "v", "dv"}))
      ->capture_default_str();
  c_train->add_option("--episodes", tr.episodes, "Episodes")->capture_default_str();
  c_train->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  c_train->add_flag("--no-reward-clip", no_clip, "Do not floor reward terms at -100");

  evade_train_nn_options tn;
  evade_train_nn_options_init(&tn);
  auto* c_tn = app.add_subcommand("train-nn", "Train the supervised benchmark network");
  c_tn->add_option("--conflicts", s_conflicts, "Training conflicts CSV")->required();
  c_tn->add_option("--out", s_out, "Model directory")->required();
  c_tn->add_option("--epochs", tn.epochs, "Epochs")->capture_default_str();
  c_tn->add_option("--seed", tn.seed, "Random seed")->capture_default_str();
  c_tn->add_option("--bins", tn.bins, "JSD histogram bins")->capture_default_str();

  evade_evaluate_options ev;
  evade_evaluate_options_init(&ev);
  auto* c_ev = app.add_subcommand("evaluate", "One-step RMSE/JSD of a model on test conflicts");
  c_ev->add_option("--model", s_model, "Model directory")->required();
  c_ev->add_option("--test", s_test, "Test conflicts CSV")->required();
  c_ev->add_option("--out", s_out, "Output directory")->required();
  c_ev->add_option("--bins", ev.bins, "JSD histogram bins")->capture_default_str();

  evade_rollout_options ro;
  evade_rollout_options_init(&ro);
  std::int64_t conflict_id = 0;
  auto* c_ro = app.add_subcommand("rollout", "Closed-loop trajectories from a model");
  c_ro->add_option("--model", s_model, "Model directory")->required();
  c_ro->add_option("--conflicts", s_conflicts, "Conflicts CSV")->required();
  c_ro->add_option("--out", s_out, "Output directory")->required();
  auto* o_cid = c_ro->add_option("--conflict-id", conflict_id, "Only this conflict");
  add_dims(c_ro, ro.dims);

  evade_sweep_options sw;
  evade_sweep_options_init(&sw);
  std::string kind = "all";
  auto* c_sw = app.add_subcommand("sweep-threshold", "Risk/crash correlation over thresholds");
  c_sw->add_option("--points", s_points, "Per-point TTC CSV")->required();
  c_sw->add_option("--sites", s_sites, "Per-segment crash CSV")->required();
  c_sw->add_option("--out", s_out, "Output directory")->required();
  c_sw->add_option("--min", sw.min, "First threshold (s)")->capture_default_str();
  c_sw->add_option("--max", sw.max, "Last threshold (s)")->capture_default_str();
  c_sw->add_option("--step", sw.step, "Increment (s)")->capture_default_str();
  c_sw->add_option("--kind", kind, "Conflict type: rear, side or all")
      ->check(CLI::IsMember({"rear", "side", "all"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return EVADE_ERR_CONFIG;
  }

  const char* out = s_out.c_str();
  if (c_gen->parsed()) {
    gen.out_dir = out;
    return report(evade_gen_synthetic(&gen));
  }
  if (c_clean->parsed()) {
    cl.lane = s_lane.c_str();
    cl.targets = s_targets.c_str();
    cl.wsu = s_wsu.c_str();
    cl.out_dir = out;
    return report(evade_clean(&cl));
  }
  if (c_ex->parsed()) {
    ex.cleaned = s_cleaned.c_str();
    ex.out_dir = out;
    return report(evade_extract_conflicts(&ex));
  }
  if (c_split->parsed()) {
    sp.conflicts = s_conflicts.c_str();
    sp.out_dir = out;
    return report(evade_split(&sp));
  }
  if (c_train->parsed()) {
    static const std::map<std::string, evade_reward> rewards{
        {"d", EVADE_REWARD_DISTANCE}, {"v", EVADE_REWARD_SPEED}, {"dv", EVADE_REWARD_SPEED_DIFF}};
    tr.conflicts = s_conflicts.c_str();
    tr.out_dir = out;
    tr.reward = rewards.at(reward);
    tr.reward_clip = no_clip ? 0 : 1;
    return report(evade_train(&tr));
  }
  if (c_tn->parsed()) {
    tn.conflicts = s_conflicts.c_str();
    tn.out_dir = out;
    return report(evade_train_nn(&tn));
  }
  if (c_ev->parsed()) {
    ev.model_dir = s_model.c_str();
    ev.test = s_test.c_str();
    ev.out_dir = out;
    return report(evade_evaluate(&ev));
  }
  if (c_ro->parsed()) {
    ro.model_dir = s_model.c_str();
    ro.conflicts = s_conflicts.c_str();
    ro.out_dir = out;
    ro.has_conflict_id = o_cid->count() > 0;
    ro.conflict_id = conflict_id;
    return report(evade_rollout(&ro));
  }
  if (c_sw->parsed()) {
    static const std::map<std::string, evade_kind_filter> kinds{
        {"rear", EVADE_FILTER_REAR}, {"side", EVADE_FILTER_SIDE}, {"all", EVADE_FILTER_ALL}};
    sw.points = s_points.c_str();
    sw.sites = s_sites.c_str();
    sw.out_dir = out;
    sw.kind = kinds.at(kind);
    return report(evade_sweep_threshold(&sw));
  }
  return EVADE_ERR_CONFIG;
}
