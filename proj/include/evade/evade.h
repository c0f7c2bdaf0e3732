/* C interface to the evasive-behaviour toolkit.
 *
 * Every function returns an evade_status; on failure evade_last_error()
 * describes the problem (thread-local, valid until the next call on the
 * same thread). Option structs must be initialised with their *_init
 * function before fields are overridden. */
#ifndef EVADE_EVADE_H
#define EVADE_EVADE_H

#include <stdint.h>

#if defined(EVADE_BUILDING_LIBRARY)
#define EVADE_API __attribute__((visibility("default")))
#else
#define EVADE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum evade_status {
  EVADE_OK = 0,
  EVADE_ERR_INTERNAL = 1,
  EVADE_ERR_CONFIG = 2,
  EVADE_ERR_IO = 3,
  EVADE_ERR_DATA = 4
} evade_status;

typedef enum evade_conflict_kind {
  EVADE_KIND_NONE = 0,
  EVADE_KIND_REAR_END = 1,
  EVADE_KIND_SIDESWIPE = 2
} evade_conflict_kind;

typedef enum evade_reward {
  EVADE_REWARD_DISTANCE = 0,
  EVADE_REWARD_SPEED = 1,
  EVADE_REWARD_SPEED_DIFF = 2
} evade_reward;

typedef enum evade_kind_filter {
  EVADE_FILTER_REAR = 0,
  EVADE_FILTER_SIDE = 1,
  EVADE_FILTER_ALL = 2
} evade_kind_filter;

EVADE_API const char* evade_version(void);
EVADE_API const char* evade_last_error(void);

typedef struct evade_dims {
  double length;
  double width;
} evade_dims;

EVADE_API evade_dims evade_default_dims(void);

/* Centre-to-centre offsets (leader minus follower) and absolute speeds. */
typedef struct evade_pair_state {
  double s0_lon, s0_lat;
  double v_lon, v_lat;
  double v0_lon, v0_lat;
} evade_pair_state;

/* has_* is 0 when the corresponding time to collision is infinite. */
typedef struct evade_ttc {
  int has_lon, has_lat, has_combined;
  double lon, lat, combined;
  evade_conflict_kind kind;
} evade_ttc;

EVADE_API evade_status evade_ttc_2d(const evade_pair_state* state, evade_dims dims,
                                    evade_ttc* out);

typedef struct evade_gen_options {
  const char* out_dir;
  int cut_in, braking, benign;
  uint64_t seed;
  double noise_scale;
  double ax_bias;
} evade_gen_options;
EVADE_API void evade_gen_options_init(evade_gen_options* o);
EVADE_API evade_status evade_gen_synthetic(const evade_gen_options* o);

typedef struct evade_clean_options {
  const char* lane;
  const char* targets;
  const char* wsu;
  const char* out_dir;
  double sigma;
  evade_dims dims;
} evade_clean_options;
EVADE_API void evade_clean_options_init(evade_clean_options* o);
EVADE_API evade_status evade_clean(const evade_clean_options* o);

typedef struct evade_extract_options {
  const char* cleaned;
  const char* out_dir;
  double threshold;
  int min_run;
} evade_extract_options;
EVADE_API void evade_extract_options_init(evade_extract_options* o);
EVADE_API evade_status evade_extract_conflicts(const evade_extract_options* o);

typedef struct evade_split_options {
  const char* conflicts;
  const char* out_dir;
  double train_fraction;
  uint64_t seed;
} evade_split_options;
EVADE_API void evade_split_options_init(evade_split_options* o);
EVADE_API evade_status evade_split(const evade_split_options* o);

typedef struct evade_train_options {
  const char* conflicts;
  const char* out_dir;
  evade_reward reward;
  int64_t episodes;
  uint64_t seed;
  int reward_clip;
} evade_train_options;
EVADE_API void evade_train_options_init(evade_train_options* o);
EVADE_API evade_status evade_train(const evade_train_options* o);

typedef struct evade_train_nn_options {
  const char* conflicts;
  const char* out_dir;
  int64_t epochs;
  uint64_t seed;
  int bins;
} evade_train_nn_options;
EVADE_API void evade_train_nn_options_init(evade_train_nn_options* o);
EVADE_API evade_status evade_train_nn(const evade_train_nn_options* o);

typedef struct evade_evaluate_options {
  const char* model_dir;
  const char* test;
  const char* out_dir;
  int bins;
} evade_evaluate_options;
EVADE_API void evade_evaluate_options_init(evade_evaluate_options* o);
EVADE_API evade_status evade_evaluate(const evade_evaluate_options* o);

typedef struct evade_rollout_options {
  const char* model_dir;
  const char* conflicts;
  const char* out_dir;
  int has_conflict_id;
  int64_t conflict_id;
  evade_dims dims;
} evade_rollout_options;
EVADE_API void evade_rollout_options_init(evade_rollout_options* o);
EVADE_API evade_status evade_rollout(const evade_rollout_options* o);

typedef struct evade_sweep_options {
  const char* points;
  const char* sites;
  const char* out_dir;
  double min, max, step;
  evade_kind_filter kind;
} evade_sweep_options;
EVADE_API void evade_sweep_options_init(evade_sweep_options* o);
EVADE_API evade_status evade_sweep_threshold(const evade_sweep_options* o);

/* A trained policy loaded from a model directory. */
typedef struct evade_model evade_model;
EVADE_API evade_status evade_model_load(const char* model_dir, evade_model** out);
EVADE_API void evade_model_free(evade_model* model);
/* state: d_lon, v_lon, dv_lon, d_lat, v_lat, dv_lat; action: a_lon, a_lat. */
EVADE_API evade_status evade_model_act(const evade_model* model, const double state[6],
                                       double action[2]);

#ifdef __cplusplus
}
#endif

#endif
