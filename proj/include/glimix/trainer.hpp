#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "glimix/model.hpp"
#include "glimix/scene_gen.hpp"

namespace glimix {

struct TrainConfig {
  ModelConfig model;

  double learning_rate = 3e-4;
  double grad_clip = 10.0;
  int batch_size = 1;
  int steps = 2000;
  double kl_coeff = 1.0;

  // schedules (monotone by construction)
  double presence_prior_start = 0.99;
  double presence_prior_end = 0.05;
  double presence_anneal_frac = 0.5;  // fraction of steps to reach the end value
  double temperature_start = 1.0;
  double temperature_end = 0.5;

  std::uint64_t seed = 1;
  int checkpoint_every = 500;
  int log_every = 1;
};

double presence_prior_at(const TrainConfig& cfg, int step);
double temperature_at(const TrainConfig& cfg, int step);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
/// Applies the keys present in `text` on top of `base`.
TrainConfig train_config_override(const TrainConfig& base,
                                  const std::string& text);

struct TrainResult {
  int last_step = 0;
  std::string last_checkpoint;
  std::string log_path;
  double final_elbo = 0.0;
};

/// Stochastic gradient ascent on the ELBO with Adam, gradient-norm clipping,
/// per-step CSV logging and periodic checkpoints. Aborts on a non-finite
/// loss, pointing at the last good checkpoint.
TrainResult train(Model& model, const std::vector<SceneSample>& dataset,
                  const TrainConfig& cfg, const std::string& out_dir,
                  int start_step = 0);

// --- checkpoint container (versioned single-file binary with an embedded
// JSON config echo) ---

struct Checkpoint {
  TrainConfig config;
  int step = 0;
  std::vector<std::pair<std::string, ad::Mat>> values;
  std::vector<std::pair<std::string, ad::Mat>> adam_m;
  std::vector<std::pair<std::string, ad::Mat>> adam_v;
};

void write_checkpoint(const std::string& path, const Model& model,
                      const TrainConfig& cfg, int step);
Checkpoint read_checkpoint(const std::string& path);
/// Builds a model with the checkpointed config and loads its parameters
/// (and Adam state, so training can resume).
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace glimix
