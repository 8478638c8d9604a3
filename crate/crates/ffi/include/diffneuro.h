#ifndef DIFFNEURO_H
#define DIFFNEURO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define DN_OK 0

#define DN_ERR_NULL 1

#define DN_ERR_INVALID_INPUT 2

#define DN_ERR_CONFIG 3

#define DN_ERR_IO 4

#define DN_ERR_PANIC 5

/**
 * Resolved configuration.
 */
typedef struct DnConfig DnConfig;

/**
 * Closed-loop grasp driven one step at a time.
 */
typedef struct DnGraspLoop DnGraspLoop;

/**
 * Streaming saliency pipeline.
 */
typedef struct DnVisionPipeline DnVisionPipeline;

typedef struct DnDeviceParams {
  double r_on;
  double r_off;
  double v_tp;
  double v_tn;
  double alpha_p;
  double alpha_n;
  double window_exponent;
} DnDeviceParams;

typedef struct DnPulseTrain {
  /**
   * Volts; the sign selects set or reset.
   */
  double amplitude;
  /**
   * Seconds.
   */
  double pulse_width;
  /**
   * In (0, 1].
   */
  double duty_cycle;
  uint32_t count;
} DnPulseTrain;

/**
 * One control step of the grasp loop.
 */
typedef struct DnGraspRow {
  double t;
  double force;
  double piezo_r;
  double mem_r;
  double gain;
  double output;
  double force_cmd;
  /**
   * Bit `i` set when marker `i` fired this step, in the order contact,
   * hazard_onset, sensitized, amplified, pain_reflex, regrasp,
   * stable_hold, slip, grip_increase, gain_clamped.
   */
  uint32_t markers;
} DnGraspRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next call into this library on the same thread.
 */
const char *dn_last_error(void);

/**
 * NUL-terminated library version.
 */
const char *dn_version(void);

/**
 * Fill `out` with the default device parameters.
 */
int32_t dn_device_params_default(struct DnDeviceParams *out);

/**
 * Resistance (Ω) of a device in state `x`.
 */
int32_t dn_resistance(const struct DnDeviceParams *p, double x, double *out_r);

/**
 * Apply `train` to a device in state `x`; the new state goes to `out_x`.
 */
int32_t dn_apply_pulse_train(const struct DnDeviceParams *p,
                             double x,
                             const struct DnPulseTrain *train,
                             double *out_x);

/**
 * Built-in defaults.
 */
int32_t dn_config_default(struct DnConfig **out);

/**
 * Defaults layered with a configuration document.
 */
int32_t dn_config_from_text(const char *doc, struct DnConfig **out);

/**
 * Write the 64-character hex fingerprint plus NUL into `buf`.
 */
int32_t dn_config_fingerprint(const struct DnConfig *cfg, char *buf, uintptr_t cap);

void dn_config_free(struct DnConfig *cfg);

/**
 * `cfg` may be NULL for the defaults.
 */
int32_t dn_vision_new(const struct DnConfig *cfg, struct DnVisionPipeline **out);

/**
 * Number of cells in each saliency map.
 */
int32_t dn_vision_cells(const struct DnVisionPipeline *h, uintptr_t *out_cells);

/**
 * Push one 8-bit grayscale frame. The first frame only primes the
 * pipeline and sets `*out_produced = 0`; later frames write the binary
 * map (0 = salient) into `out_map` when it is non-NULL and `cap` is at
 * least the cell count.
 */
int32_t dn_vision_push_frame(struct DnVisionPipeline *h,
                             const uint8_t *data,
                             uintptr_t width,
                             uintptr_t height,
                             uint8_t *out_map,
                             uintptr_t cap,
                             int32_t *out_produced);

void dn_vision_free(struct DnVisionPipeline *h);

/**
 * `cfg` may be NULL for the defaults; `scenario` is scenario-file text.
 */
int32_t dn_grasp_new(const struct DnConfig *cfg, const char *scenario, struct DnGraspLoop **out);

/**
 * Step with the scenario's own force profile.
 */
int32_t dn_grasp_step(struct DnGraspLoop *h, struct DnGraspRow *out_row);

/**
 * Step with an externally sensed force (N).
 */
int32_t dn_grasp_step_force(struct DnGraspLoop *h, double force, struct DnGraspRow *out_row);

void dn_grasp_free(struct DnGraspLoop *h);

/**
 * Run a whole scenario. `csv_path` may be NULL; `*out_passed` is 1 when
 * every scripted check holds.
 */
int32_t dn_scenario_run(const struct DnConfig *cfg,
                        const char *scenario,
                        const char *csv_path,
                        int32_t *out_passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIFFNEURO_H */
