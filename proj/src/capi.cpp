#include "evade/evade.h"

#include <exception>
#include <new>
#include <stdexcept>
#include <string>

#include "evade/app.hpp"
#include "evade/errors.hpp"
#include "evade/mlp.hpp"
#include "evade/stats.hpp"

struct evade_model {
  evade::nn::Mlp net;
};

namespace {

thread_local std::string g_last_error;

template <class F>
evade_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return EVADE_OK;
  } catch (const evade::ConfigError& e) {
    g_last_error = e.what();
    return EVADE_ERR_CONFIG;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return EVADE_ERR_CONFIG;
  } catch (const evade::IoError& e) {
    g_last_error = e.what();
    return EVADE_ERR_IO;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return EVADE_ERR_IO;
  } catch (const evade::DataError& e) {
    g_last_error = e.what();
    return EVADE_ERR_DATA;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EVADE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return EVADE_ERR_INTERNAL;
  }
}

std::filesystem::path path_of(const char* p) { return p ? std::filesystem::path(p) : std::filesystem::path(); }

evade::ssm::VehicleDims dims_of(evade_dims d) { return {d.length, d.width}; }

template <class T>
void require(const T* o) {
  if (!o) throw evade::ConfigError("null options");
}

}  // namespace

extern "C" {

const char* evade_version(void) { return EVADE_VERSION_STRING; }

const char* evade_last_error(void) { return g_last_error.c_str(); }

evade_dims evade_default_dims(void) {
  const evade::ssm::VehicleDims d;
  return {d.length, d.width};
}

evade_status evade_ttc_2d(const evade_pair_state* s, evade_dims dims, evade_ttc* out) {
  return guarded([&] {
    if (!s || !out) throw evade::ConfigError("null argument");
    const auto r = evade::ssm::ttc_2d({s->s0_lon, s->s0_lat, s->v_lon, s->v_lat, s->v0_lon, s->v0_lat},
                                      dims_of(dims));
    out->has_lon = r.lon.has_value();
    out->has_lat = r.lat.has_value();
    out->has_combined = r.combined.has_value();
    out->lon = r.lon.value_or(0.0);
    out->lat = r.lat.value_or(0.0);
    out->combined = r.combined.value_or(0.0);
    out->kind = static_cast<evade_conflict_kind>(r.kind);
  });
}

void evade_gen_options_init(evade_gen_options* o) {
  const evade::synth::SynthConfig d;
  *o = {nullptr, d.cut_in, d.braking, d.benign, d.seed, d.noise_scale, d.ax_bias};
}

evade_status evade_gen_synthetic(const evade_gen_options* o) {
  return guarded([&] {
    require(o);
    evade::app::GenSyntheticOptions g;
    g.out_dir = path_of(o->out_dir);
    g.synth.cut_in = o->cut_in;
    g.synth.braking = o->braking;
    g.synth.benign = o->benign;
    g.synth.seed = o->seed;
    g.synth.noise_scale = o->noise_scale;
    g.synth.ax_bias = o->ax_bias;
    evade::app::gen_synthetic(g);
  });
}

void evade_clean_options_init(evade_clean_options* o) {
  *o = {nullptr, nullptr, nullptr, nullptr, 5.0, evade_default_dims()};
}

evade_status evade_clean(const evade_clean_options* o) {
  return guarded([&] {
    require(o);
    evade::app::clean({path_of(o->lane), path_of(o->targets), path_of(o->wsu), path_of(o->out_dir),
                       o->sigma, dims_of(o->dims)});
  });
}

void evade_extract_options_init(evade_extract_options* o) { *o = {nullptr, nullptr, 5.0, 11}; }

evade_status evade_extract_conflicts(const evade_extract_options* o) {
  return guarded([&] {
    require(o);
    if (o->min_run < 1) throw evade::ConfigError("min-run must be at least 1");
    evade::app::extract_conflicts({path_of(o->cleaned), path_of(o->out_dir), o->threshold,
                                   static_cast<std::size_t>(o->min_run)});
  });
}

void evade_split_options_init(evade_split_options* o) { *o = {nullptr, nullptr, 0.8, 0}; }

evade_status evade_split(const evade_split_options* o) {
  return guarded([&] {
    require(o);
    evade::app::split({path_of(o->conflicts), path_of(o->out_dir), o->train_fraction, o->seed});
  });
}

void evade_train_options_init(evade_train_options* o) {
  *o = {nullptr, nullptr, EVADE_REWARD_SPEED, 1500, 0, 1};
}

evade_status evade_train(const evade_train_options* o) {
  return guarded([&] {
    require(o);
    evade::app::TrainOptions t;
    t.conflicts = path_of(o->conflicts);
    t.out_dir = path_of(o->out_dir);
    switch (o->reward) {
      case EVADE_REWARD_DISTANCE: t.reward = evade::env::RewardKind::Distance; break;
      case EVADE_REWARD_SPEED: t.reward = evade::env::RewardKind::Speed; break;
      case EVADE_REWARD_SPEED_DIFF: t.reward = evade::env::RewardKind::SpeedDiff; break;
      default: throw evade::ConfigError("unknown reward kind");
    }
    t.episodes = o->episodes;
    t.seed = o->seed;
    t.reward_clip = o->reward_clip != 0;
    evade::app::train(t);
  });
}

void evade_train_nn_options_init(evade_train_nn_options* o) {
  *o = {nullptr, nullptr, 200, 0, 100};
}

evade_status evade_train_nn(const evade_train_nn_options* o) {
  return guarded([&] {
    require(o);
    evade::app::train_nn({path_of(o->conflicts), path_of(o->out_dir), o->epochs, o->seed, o->bins});
  });
}

void evade_evaluate_options_init(evade_evaluate_options* o) { *o = {nullptr, nullptr, nullptr, 100}; }

evade_status evade_evaluate(const evade_evaluate_options* o) {
  return guarded([&] {
    require(o);
    evade::app::evaluate({path_of(o->model_dir), path_of(o->test), path_of(o->out_dir), o->bins});
  });
}

void evade_rollout_options_init(evade_rollout_options* o) {
  *o = {nullptr, nullptr, nullptr, 0, 0, evade_default_dims()};
}

evade_status evade_rollout(const evade_rollout_options* o) {
  return guarded([&] {
    require(o);
    evade::app::RolloutOptions r;
    r.model_dir = path_of(o->model_dir);
    r.conflicts = path_of(o->conflicts);
    r.out_dir = path_of(o->out_dir);
    if (o->has_conflict_id) r.conflict_id = o->conflict_id;
    r.dims = dims_of(o->dims);
    evade::app::rollout(r);
  });
}

void evade_sweep_options_init(evade_sweep_options* o) {
  *o = {nullptr, nullptr, nullptr, 0.5, 10.0, 0.1, EVADE_FILTER_ALL};
}

evade_status evade_sweep_threshold(const evade_sweep_options* o) {
  return guarded([&] {
    require(o);
    evade::app::SweepOptions s;
    s.points = path_of(o->points);
    s.sites = path_of(o->sites);
    s.out_dir = path_of(o->out_dir);
    s.min = o->min;
    s.max = o->max;
    s.step = o->step;
    switch (o->kind) {
      case EVADE_FILTER_REAR: s.kind = evade::stats::KindFilter::Rear; break;
      case EVADE_FILTER_SIDE: s.kind = evade::stats::KindFilter::Side; break;
      case EVADE_FILTER_ALL: s.kind = evade::stats::KindFilter::All; break;
      default: throw evade::ConfigError("unknown kind filter");
    }
    evade::app::sweep_threshold(s);
  });
}

evade_status evade_model_load(const char* model_dir, evade_model** out) {
  return guarded([&] {
    if (!model_dir || !out) throw evade::ConfigError("null argument");
    *out = nullptr;
    auto m = std::make_unique<evade_model>();
    m->net = evade::app::load_policy(model_dir);
    *out = m.release();
  });
}

void evade_model_free(evade_model* model) { delete model; }

evade_status evade_model_act(const evade_model* model, const double state[6], double action[2]) {
  return guarded([&] {
    if (!model || !state || !action) throw evade::ConfigError("null argument");
    const auto a = evade::stats::net_policy(model->net)(
        evade::env::EnvState{state[0], state[1], state[2], state[3], state[4], state[5]});
    action[0] = a.a_lon;
    action[1] = a.a_lat;
  });
}

}  // extern "C"
