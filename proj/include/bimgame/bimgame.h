#ifndef BIMGAME_BIMGAME_H
#define BIMGAME_BIMGAME_H

/* C interface to the ball-in-maze library. Every function returns a status
 * code; on failure bim_last_error() describes the problem for the calling
 * thread. Handles are opaque and owned by the caller until freed. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BIM_API __declspec(dllexport)
#else
#define BIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bim_status {
  BIM_OK = 0,
  BIM_ERR_CONFIG = 1,
  BIM_ERR_DOMAIN = 2,
  BIM_ERR_INTEGRATION = 3,
  BIM_ERR_SHAPE = 4,
  BIM_ERR_NUMERIC = 5,
  BIM_ERR_DATASET = 6,
  BIM_ERR_STALE_ARTIFACT = 7,
  BIM_ERR_PRECONDITION = 8,
  BIM_ERR_IO = 9,
  BIM_ERR_INVALID_ARGUMENT = 10,
  BIM_ERR_INTERNAL = 11
} bim_status;

BIM_API const char* bim_version(void);
BIM_API const char* bim_status_name(bim_status status);
/* Message of the last failed call on this thread; "" after a success. */
BIM_API const char* bim_last_error(void);

/* Progress lines from long-running operations. */
typedef void (*bim_log_fn)(const char* line, void* user);

/* ---- key = value configuration ------------------------------------------ */

typedef struct bim_config bim_config;

BIM_API bim_status bim_config_create(bim_config** out);
BIM_API bim_status bim_config_load(const char* path, bim_config** out);
BIM_API bim_status bim_config_parse(const char* text, bim_config** out);
BIM_API bim_status bim_config_set(bim_config* cfg, const char* key, const char* value);
/* Copies the value into buf (truncated to buflen - 1). *found is 0 when the
 * key is absent. */
BIM_API bim_status bim_config_get(const bim_config* cfg, const char* key, char* buf,
                                  size_t buflen, int* found);
BIM_API bim_status bim_config_save(const bim_config* cfg, const char* path);
BIM_API void bim_config_free(bim_config* cfg);

/* ---- simulator -------------------------------------------------------------- */

typedef struct bim_maze bim_maze;

typedef struct bim_state {
  double x, y;
  double vx, vy;
  double tilt_x, tilt_y;
  int64_t step_count;
  int ring; /* 1 = outermost band, walls + 1 = center */
} bim_state;

typedef struct bim_step_info {
  double reward;
  int terminal;
  int wall_contacts;
  int inward_crossings;
  int outward_crossings;
} bim_step_info;

/* Geometry keys as in a plan's geometry.* section (cfg may be NULL for the
 * default five-wall board); task is "FULL" or "STG<k>". */
BIM_API bim_status bim_maze_create(const bim_config* geometry, const char* task,
                                   bim_maze** out);
BIM_API bim_status bim_maze_reset(bim_maze* maze, uint64_t seed);
/* action: 0 tilt x+, 1 tilt x-, 2 tilt y+, 3 tilt y-, 4 no-op. */
BIM_API bim_status bim_maze_step(bim_maze* maze, int action, bim_step_info* info);
BIM_API bim_status bim_maze_state(const bim_maze* maze, bim_state* out);
BIM_API int bim_maze_wall_count(const bim_maze* maze);
BIM_API bim_status bim_maze_penetration(const bim_maze* maze, double* out);
BIM_API bim_status bim_maze_write_geometry_csv(const bim_maze* maze, const char* path);
/* Grayscale top-down render of the current state, size x size pixels. */
BIM_API bim_status bim_maze_write_png(const bim_maze* maze, int size, const char* path);
BIM_API void bim_maze_free(bim_maze* maze);

/* ---- pipeline operations ------------------------------------------------------
 * Each takes a configuration whose keys match the corresponding section of a
 * plan file. Unknown keys are ignored. */

/* Keys: task, n, test_fraction, max_steps, keep_unsolved, workers,
 * histogram_bin, geometry.*, expert.* (K, H, seed, reward_mode,
 * progress_sign, exhaustive). Writes the dataset and <out>.hist.csv. */
BIM_API bim_status bim_expert_generate(const bim_config* cfg, const char* out_path,
                                       bim_log_fn log, void* user);

/* Finite-difference check of the BPTT, pre-training and actor-critic
 * gradients on a tiny network; *max_rel_error receives the worst case. */
BIM_API bim_status bim_nn_gradcheck(int seeds, bim_log_fn log, void* user,
                                    double* max_rel_error);

/* Keys: arch.*, gamma, l2_lambda, policy_loss_weight, value_loss_weight,
 * epochs, batch_episodes, lr, rms_decay, rms_epsilon, clip_norm, seed.
 * metrics_csv may be NULL. value_only trains the frozen value potential. */
BIM_API bim_status bim_imitate_pretrain(const bim_config* cfg, const char* data_path,
                                        int value_only, const char* out_path,
                                        const char* metrics_csv, bim_log_fn log, void* user);

/* Keys: iterations, rollouts, max_steps, warm_start, query_budget,
 * eval_episodes, rollout_selection, eval_selection, seed, train.*. The
 * expert, geometry and task come from the dataset file. */
BIM_API bim_status bim_dagger_run(const bim_config* cfg, const char* data_path,
                                  const char* out_path, const char* metrics_csv,
                                  bim_log_fn log, void* user);

/* Keys: task, geometry.*, and the actor-critic keys (arch.*, workers, t_max,
 * gamma, entropy_beta, lr, budget, init, shaping, seed, threaded, ...).
 * Writes curve.csv, eval.csv, final.net and manifest.txt into out_dir. */
BIM_API bim_status bim_rl_train(const bim_config* cfg, const char* out_dir, bim_log_fn log,
                                void* user);

/* Runs (or resumes) an experiment plan file. */
BIM_API bim_status bim_plan_run(const char* plan_path, bim_log_fn log, void* user);

/* Speed-up of a treatment learning curve over a baseline curve (both CSV
 * files written by bim_rl_train). The report text goes to buf. */
BIM_API bim_status bim_speedup(const char* baseline_csv, const char* treatment_csv,
                               double threshold, int64_t baseline_budget, char* buf,
                               size_t buflen, double* ratio);

/* Keys: task, geometry.*, episodes, selection (greedy|sample), max_steps. */
BIM_API bim_status bim_evaluate(const char* checkpoint, const bim_config* cfg,
                                double* mean_return, double* solved_fraction,
                                double* mean_length);

#ifdef __cplusplus
}
#endif

#endif
