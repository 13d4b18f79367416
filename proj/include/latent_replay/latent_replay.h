//------------------------------------------------------------------------------
//
//   Copyright 2026 The latent-replay authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

#ifndef LATENT_REPLAY_LATENT_REPLAY_H
#define LATENT_REPLAY_LATENT_REPLAY_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(LR_BUILDING_LIBRARY)
#define LR_API __declspec(dllexport)
#else
#define LR_API __declspec(dllimport)
#endif
#else
#define LR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lr_status
{
  LR_OK          = 0,
  LR_ERR_CONFIG  = 1,
  LR_ERR_RUNTIME = 2,
  LR_ERR_IO      = 3,
  LR_ERR_FORMAT  = 4,
  LR_ERR_SHAPE   = 5,
  LR_ERR_LOOKUP  = 6,
  LR_ERR_ARITH   = 7,
  LR_ERR_ARG     = 8,  /* null pointer or out-of-range argument */
  LR_ERR_BUFFER  = 9,  /* output buffer too small, see the needed size */
} lr_status;

/* Message of the last failed call on this thread ("" after a success). */
LR_API char const *lr_last_error(void);
LR_API char const *lr_status_name(lr_status status);
LR_API char const *lr_version(void);

/* ---- per-layer cost tables ---------------------------------------------- */

typedef struct lr_cost_table lr_cost_table;

LR_API lr_status lr_cost_table_load(char const *csv_path, lr_cost_table **out);
LR_API lr_status lr_cost_table_parse(char const *csv_text, lr_cost_table **out);
LR_API void      lr_cost_table_free(lr_cost_table *table);
LR_API lr_status lr_cost_table_size(lr_cost_table const *table, size_t *rows);
/* Name of row i; the pointer stays valid until the table is freed. */
LR_API lr_status lr_cost_table_name(lr_cost_table const *table, size_t row, char const **name);
LR_API lr_status lr_computation_pct(lr_cost_table const *table, char const *replay_layer, double *pct);
LR_API lr_status lr_pattern_size(lr_cost_table const *table, char const *layer, uint64_t *elements);
LR_API lr_status lr_memory_footprint(uint64_t rm_size, uint64_t pattern_elems, uint64_t bytes_per_elem,
                                     uint64_t *bytes);

/* Trade-off CSV for the given candidate layers (all rows when candidates is
 * NULL, header only when count is 0). Writes at most `capacity` bytes
 * including the terminating NUL; *needed receives the full size. */
LR_API lr_status lr_tradeoff_csv(lr_cost_table const *table, char const *const *candidates, size_t count,
                                 uint64_t rm_size, uint64_t bytes_per_elem, char *buffer, size_t capacity,
                                 size_t *needed);

/* ---- replay arithmetic -------------------------------------------------- */

LR_API lr_status lr_compose_minibatch(size_t batch_size, size_t rm_items, size_t mb, size_t *n_native,
                                      size_t *n_replay);

/* ---- networks ----------------------------------------------------------- */

typedef struct lr_network lr_network;

LR_API lr_status lr_network_load(char const *spec_path, uint64_t init_seed, lr_network **out);
LR_API void      lr_network_free(lr_network *net);
/* Elements in one input pattern and number of classes. */
LR_API lr_status lr_network_dims(lr_network const *net, size_t *input_elems, size_t *classes);
/* Eval-mode logits for n patterns; `logits` holds n * classes floats. */
LR_API lr_status lr_network_forward(lr_network const *net, float const *input, size_t n, float *logits);

/* ---- experiments and scenarios ------------------------------------------ */

/* Runs an experiment config. out_dir overrides the config's output directory
 * and seed (when non-NULL) replaces its seeds list. */
LR_API lr_status lr_experiment_run(char const *config_path, char const *out_dir, uint64_t const *seed);

/* Writes a TinyNIC scenario (manifest + tensor files) generated from a JSON
 * parameter file; NULL params_path uses the defaults. */
LR_API lr_status lr_scenario_generate(char const *params_path, uint64_t seed, char const *out_dir);

#ifdef __cplusplus
}
#endif

#endif
