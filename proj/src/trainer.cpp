#include "glimix/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace glimix {

double presence_prior_at(const TrainConfig& cfg, int step) {
  const double horizon =
      std::max(1.0, cfg.presence_anneal_frac * static_cast<double>(cfg.steps));
  const double t = std::min(1.0, static_cast<double>(step) / horizon);
  return cfg.presence_prior_start +
         t * (cfg.presence_prior_end - cfg.presence_prior_start);
}

double temperature_at(const TrainConfig& cfg, int step) {
  const double t =
      std::min(1.0, static_cast<double>(step) /
                        std::max(1.0, static_cast<double>(cfg.steps)));
  return cfg.temperature_start +
         t * (cfg.temperature_end - cfg.temperature_start);
}

namespace {

json model_config_to_json(const ModelConfig& m) {
  json j;
  j["cell_size"] = m.cell_size;
  j["latent_what"] = m.latent_what;
  j["latent_mask"] = m.latent_mask;
  j["feat_dim"] = m.feat_dim;
  j["hidden"] = m.hidden;
  j["msg_dim"] = m.msg_dim;
  j["cell_depth"] = m.cell_depth;
  j["cell_subdiv"] = m.cell_subdiv;
  j["glimpse_depth"] = m.glimpse_depth;
  j["glimpse_subdiv"] = m.glimpse_subdiv;
  j["global_depth"] = m.global_depth;
  j["global_subdiv"] = m.global_subdiv;
  j["radius_factor"] = m.radius_factor;
  j["max_neighbors"] = m.max_neighbors;
  j["max_offset_factor"] = m.max_offset_factor;
  j["r_min_factor"] = m.r_min_factor;
  j["r_max_factor"] = m.r_max_factor;
  j["min_glimpse_points"] = m.min_glimpse_points;
  j["sigma_c"] = m.chamfer.sigma_c;
  j["normalizer_mode"] =
      m.chamfer.normalizer_mode == ChamferParams::Normalizer::kDrop
          ? "drop"
          : "divide_by_n";
  j["tau_factor"] = m.tau_factor;
  j["crop_margin_taus"] = m.crop_margin_taus;
  j["pgf_dims"] = m.pgf.feature_dims;
  j["pgf_radius"] = m.pgf.radius;
  j["pgf_noise_std"] = m.pgf.noise_std;
  j["pgf_max_neighbors"] = m.pgf.max_neighbors;
  j["pgf_msg_dim"] = m.pgf.msg_dim;
  j["pgf_hidden"] = m.pgf.hidden;
  j["scene_pgf_noise_std"] = m.scene_pgf_noise_std;
  j["presence_channels"] = m.presence.channels;
  j["presence_radius"] = m.presence.radius;
  j["presence_max_neighbors"] = m.presence.max_neighbors;
  j["presence_msg_dim"] = m.presence.msg_dim;
  j["presence_hidden"] = m.presence.hidden;
  j["presence_gnn"] = m.presence_gnn;
  j["prior_apothem_mean"] = m.prior_apothem_mean;
  j["prior_apothem_std"] = m.prior_apothem_std;
  return j;
}

void model_config_from_json(const json& j, ModelConfig& m) {
  m.cell_size = j.value("cell_size", m.cell_size);
  m.latent_what = j.value("latent_what", m.latent_what);
  m.latent_mask = j.value("latent_mask", m.latent_mask);
  m.feat_dim = j.value("feat_dim", m.feat_dim);
  m.hidden = j.value("hidden", m.hidden);
  m.msg_dim = j.value("msg_dim", m.msg_dim);
  m.cell_depth = j.value("cell_depth", m.cell_depth);
  m.cell_subdiv = j.value("cell_subdiv", m.cell_subdiv);
  m.glimpse_depth = j.value("glimpse_depth", m.glimpse_depth);
  m.glimpse_subdiv = j.value("glimpse_subdiv", m.glimpse_subdiv);
  m.global_depth = j.value("global_depth", m.global_depth);
  m.global_subdiv = j.value("global_subdiv", m.global_subdiv);
  m.radius_factor = j.value("radius_factor", m.radius_factor);
  m.max_neighbors = j.value("max_neighbors", m.max_neighbors);
  m.max_offset_factor = j.value("max_offset_factor", m.max_offset_factor);
  m.r_min_factor = j.value("r_min_factor", m.r_min_factor);
  m.r_max_factor = j.value("r_max_factor", m.r_max_factor);
  m.min_glimpse_points = j.value("min_glimpse_points", m.min_glimpse_points);
  m.chamfer.sigma_c = j.value("sigma_c", m.chamfer.sigma_c);
  if (j.value("normalizer_mode", "drop") == std::string("divide_by_n"))
    m.chamfer.normalizer_mode = ChamferParams::Normalizer::kDivideByN;
  else
    m.chamfer.normalizer_mode = ChamferParams::Normalizer::kDrop;
  m.tau_factor = j.value("tau_factor", m.tau_factor);
  m.crop_margin_taus = j.value("crop_margin_taus", m.crop_margin_taus);
  if (j.contains("pgf_dims"))
    m.pgf.feature_dims = j["pgf_dims"].get<std::vector<int>>();
  m.pgf.radius = j.value("pgf_radius", m.pgf.radius);
  m.pgf.noise_std = j.value("pgf_noise_std", m.pgf.noise_std);
  m.pgf.max_neighbors = j.value("pgf_max_neighbors", m.pgf.max_neighbors);
  m.pgf.msg_dim = j.value("pgf_msg_dim", m.pgf.msg_dim);
  m.pgf.hidden = j.value("pgf_hidden", m.pgf.hidden);
  m.scene_pgf_noise_std = j.value("scene_pgf_noise_std", m.scene_pgf_noise_std);
  if (j.contains("presence_channels"))
    m.presence.channels = j["presence_channels"].get<std::vector<int>>();
  m.presence.radius = j.value("presence_radius", m.presence.radius);
  m.presence.max_neighbors =
      j.value("presence_max_neighbors", m.presence.max_neighbors);
  m.presence.msg_dim = j.value("presence_msg_dim", m.presence.msg_dim);
  m.presence.hidden = j.value("presence_hidden", m.presence.hidden);
  m.presence_gnn = j.value("presence_gnn", m.presence_gnn);
  m.prior_apothem_mean = j.value("prior_apothem_mean", m.prior_apothem_mean);
  m.prior_apothem_std = j.value("prior_apothem_std", m.prior_apothem_std);
}

json train_config_to_json_obj(const TrainConfig& cfg) {
  json j;
  j["model"] = model_config_to_json(cfg.model);
  j["learning_rate"] = cfg.learning_rate;
  j["grad_clip"] = cfg.grad_clip;
  j["batch_size"] = cfg.batch_size;
  j["steps"] = cfg.steps;
  j["kl_coeff"] = cfg.kl_coeff;
  j["presence_prior_start"] = cfg.presence_prior_start;
  j["presence_prior_end"] = cfg.presence_prior_end;
  j["presence_anneal_frac"] = cfg.presence_anneal_frac;
  j["temperature_start"] = cfg.temperature_start;
  j["temperature_end"] = cfg.temperature_end;
  j["seed"] = cfg.seed;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["log_every"] = cfg.log_every;
  return j;
}

void train_config_from_json_obj(const json& j, TrainConfig& cfg) {
  if (j.contains("model")) model_config_from_json(j["model"], cfg.model);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.steps = j.value("steps", cfg.steps);
  cfg.kl_coeff = j.value("kl_coeff", cfg.kl_coeff);
  cfg.presence_prior_start =
      j.value("presence_prior_start", cfg.presence_prior_start);
  cfg.presence_prior_end = j.value("presence_prior_end", cfg.presence_prior_end);
  cfg.presence_anneal_frac =
      j.value("presence_anneal_frac", cfg.presence_anneal_frac);
  cfg.temperature_start = j.value("temperature_start", cfg.temperature_start);
  cfg.temperature_end = j.value("temperature_end", cfg.temperature_end);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.log_every = j.value("log_every", cfg.log_every);
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  return train_config_to_json_obj(cfg).dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig cfg;
  train_config_from_json_obj(json::parse(text, nullptr, true, true), cfg);
  return cfg;
}

TrainConfig train_config_override(const TrainConfig& base,
                                  const std::string& text) {
  TrainConfig cfg = base;
  train_config_from_json_obj(json::parse(text, nullptr, true, true), cfg);
  return cfg;
}

namespace {

void adam_step(ParamStore& store, double lr, double clip, int t) {
  double norm2 = 0.0;
  for (const auto& e : store.entries()) norm2 += e.grad.squaredNorm();
  const double norm = std::sqrt(norm2);
  const double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double bc2 = 1.0 - std::pow(kBeta2, t);
  for (auto& e : store.entries()) {
    const ad::Mat g = e.grad * scale;
    e.adam_m = kBeta1 * e.adam_m + (1.0 - kBeta1) * g;
    e.adam_v = kBeta2 * e.adam_v + (1.0 - kBeta2) * g.cwiseProduct(g);
    const ad::Mat mhat = e.adam_m / bc1;
    const ad::Mat vhat = e.adam_v / bc2;
    e.value -=
        lr * mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                ad::Mat::Constant(vhat.rows(), vhat.cols(), kEps));
  }
}

}  // namespace

TrainResult train(Model& model, const std::vector<SceneSample>& dataset,
                  const TrainConfig& cfg, const std::string& out_dir,
                  int start_step) {
  if (dataset.empty()) throw std::invalid_argument("empty dataset");
  fs::create_directories(out_dir);

  const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();
  std::ofstream log(log_path, start_step > 0 ? std::ios::app : std::ios::out);
  if (start_step == 0)
    log << "step,elbo,forward,backward,kl_total,active_glimpses,alpha0_mass\n";

  // epoch-shuffled visit order, deterministic in the seed
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(mix_seed(cfg.seed, 0x5bff1e));
  auto reshuffle = [&] {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
  };
  reshuffle();
  // fast-forward the visit sequence so resumed runs see the same scenes
  std::size_t cursor = 0;
  for (long consumed = static_cast<long>(start_step) * cfg.batch_size;
       consumed > 0; --consumed) {
    if (cursor >= dataset.size()) {
      cursor = 0;
      reshuffle();
    }
    ++cursor;
  }

  TrainResult result;
  result.log_path = log_path;
  std::string last_good;

  for (int step = start_step; step < cfg.steps; ++step) {
    model.params().zero_grad();
    ElboOptions opt;
    opt.sample = true;
    opt.temperature = temperature_at(cfg, step);
    opt.presence_prior = presence_prior_at(cfg, step);
    opt.kl_coeff = cfg.kl_coeff;
    // gate the object KL by presence on the same horizon as the prior anneal,
    // so young decoders are not starved before they can earn their keep
    opt.kl_gate = std::min(
        1.0, static_cast<double>(step) /
                 std::max(1.0, cfg.presence_anneal_frac * cfg.steps));

    double elbo_acc = 0.0, fwd_acc = 0.0, bwd_acc = 0.0, kl_acc = 0.0;
    double active_acc = 0.0, alpha0_acc = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= dataset.size()) {
        cursor = 0;
        reshuffle();
      }
      const SceneSample& scene = dataset[order[cursor++]];
      opt.noise_seed = mix_seed(cfg.seed, (static_cast<std::uint64_t>(step) << 8) + b);

      ad::Tape tape;
      ParamBinder bind(tape);
      ElboResult res = model.elbo(tape, bind, scene.cloud, opt);
      tape.backward(tape.neg(res.elbo));
      bind.accumulate_grads(1.0 / cfg.batch_size);

      elbo_acc += res.diag.elbo / cfg.batch_size;
      fwd_acc += res.diag.forward_ll / cfg.batch_size;
      bwd_acc += res.diag.backward_ll / cfg.batch_size;
      kl_acc += res.diag.kl_total / cfg.batch_size;
      active_acc += res.diag.active_glimpses / cfg.batch_size;
      alpha0_acc += res.diag.alpha0_mass / cfg.batch_size;
    }

    if (!std::isfinite(elbo_acc)) {
      log.flush();
      throw std::runtime_error(
          "non-finite loss at step " + std::to_string(step) +
          "; last checkpoint: " + (last_good.empty() ? "none" : last_good));
    }

    adam_step(model.params(), cfg.learning_rate, cfg.grad_clip,
              step - start_step + 1);

    if (cfg.log_every > 0 && step % cfg.log_every == 0) {
      char row[256];
      std::snprintf(row, sizeof(row), "%d,%.6f,%.6f,%.6f,%.6f,%.3f,%.6f\n",
                    step, elbo_acc, fwd_acc, bwd_acc, kl_acc, active_acc,
                    alpha0_acc);
      log << row;
    }
    result.final_elbo = elbo_acc;
    result.last_step = step + 1;

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_%06d.bin", step + 1);
      const std::string path = (fs::path(out_dir) / name).string();
      write_checkpoint(path, model, cfg, step + 1);
      last_good = path;
    }
  }

  const std::string final_path = (fs::path(out_dir) / "ckpt_final.bin").string();
  write_checkpoint(final_path, model, cfg, result.last_step);
  result.last_checkpoint = final_path;
  return result;
}

// --- checkpoint binary format ---
// magic | u32 version | u64 json_len | json | i64 step | u64 tensor_count |
// per tensor: (u64 name_len, name, u64 rows, u64 cols, doubles) x {value, m, v}

namespace {

constexpr char kMagic[8] = {'G', 'L', 'X', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ofstream& f, std::uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t read_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_mat(std::ofstream& f, const ad::Mat& m) {
  write_u64(f, static_cast<std::uint64_t>(m.rows()));
  write_u64(f, static_cast<std::uint64_t>(m.cols()));
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
}

ad::Mat read_mat(std::ifstream& f) {
  const std::uint64_t rows = read_u64(f), cols = read_u64(f);
  ad::Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  f.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(sizeof(double) * m.size()));
  return m;
}

}  // namespace

void write_checkpoint(const std::string& path, const Model& model,
                      const TrainConfig& cfg, int step) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = 1;
  f.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::string config = train_config_to_json(cfg);
  write_u64(f, config.size());
  f.write(config.data(), static_cast<std::streamsize>(config.size()));
  const std::int64_t step64 = step;
  f.write(reinterpret_cast<const char*>(&step64), sizeof(step64));
  write_u64(f, model.params().entries().size());
  for (const auto& e : model.params().entries()) {
    write_u64(f, e.name.size());
    f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_mat(f, e.value);
    write_mat(f, e.adam_m);
    write_mat(f, e.adam_v);
  }
  if (!f) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != 1)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  const std::uint64_t json_len = read_u64(f);
  std::string config(json_len, '\0');
  f.read(config.data(), static_cast<std::streamsize>(json_len));
  Checkpoint ckpt;
  ckpt.config = train_config_from_json(config);
  std::int64_t step64 = 0;
  f.read(reinterpret_cast<char*>(&step64), sizeof(step64));
  ckpt.step = static_cast<int>(step64);
  const std::uint64_t count = read_u64(f);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = read_u64(f);
    std::string name(name_len, '\0');
    f.read(name.data(), static_cast<std::streamsize>(name_len));
    ckpt.values.emplace_back(name, read_mat(f));
    ckpt.adam_m.emplace_back(name, read_mat(f));
    ckpt.adam_v.emplace_back(name, read_mat(f));
  }
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return ckpt;
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<Model>(ckpt.config.model, ckpt.config.seed);
  if (ckpt.values.size() != model->params().entries().size())
    throw std::runtime_error("checkpoint/config mismatch: parameter count");
  for (std::size_t i = 0; i < ckpt.values.size(); ++i) {
    ParamStore::Entry* e = model->params().find(ckpt.values[i].first);
    if (!e) throw std::runtime_error("checkpoint/config mismatch: unknown tensor " +
                                     ckpt.values[i].first);
    if (e->value.rows() != ckpt.values[i].second.rows() ||
        e->value.cols() != ckpt.values[i].second.cols())
      throw std::runtime_error("checkpoint/config mismatch: shape of " +
                               ckpt.values[i].first);
    e->value = ckpt.values[i].second;
    e->adam_m = ckpt.adam_m[i].second;
    e->adam_v = ckpt.adam_v[i].second;
  }
  return model;
}

}  // namespace glimix
