#pragma once

#include <functional>
#include <string>
#include <vector>

#include "glimix/model.hpp"
#include "glimix/scene_gen.hpp"

namespace glimix {

/// Adjusted Rand Index between two labelings, computed over ground-truth
/// foreground points only (true label >= 1). Returns 1.0 by convention when
/// both restricted labelings are single-class.
double ari_score(const std::vector<int>& pred, const std::vector<int>& truth);

/// Segmentation covering of ground-truth foreground segments by predicted
/// segments (prediction label 0 is not a candidate segment). weighted=true
/// gives the size-weighted mean of the per-segment max IoU (SC), otherwise
/// the unweighted mean (mSC).
double segmentation_covering(const std::vector<int>& pred,
                             const std::vector<int>& truth, bool weighted);

struct SceneEval {
  bool ok = false;
  std::string error;
  double ari = 0.0, sc = 0.0, msc = 0.0;
  double cd_forward = 0.0, cd_backward = 0.0;  // means per point
  int true_objects = 0;
  int pred_objects = 0;
};

struct EvalReport {
  std::vector<SceneEval> per_scene;
  int evaluated = 0;
  int warnings = 0;  // scenes skipped on error
  double mean_ari = 0.0, std_ari = 0.0;
  double mean_sc = 0.0, std_sc = 0.0;
  double mean_msc = 0.0, std_msc = 0.0;
  double mean_cd_forward = 0.0, mean_cd_backward = 0.0;
  double count_within_one = 0.0;  // fraction with |pred - true| <= 1 objects
  double mean_count_excess = 0.0;  // mean (pred - true)
  std::vector<double> sorted_ari, sorted_sc, sorted_msc;  // ascending
};

using InferFn = std::function<InferResult(const SceneSample&)>;

SceneEval evaluate_scene(const SceneSample& scene, const InferFn& infer);
SceneEval evaluate_scene(const SceneSample& scene, const Model& model);
EvalReport evaluate_dataset(const std::vector<SceneSample>& dataset,
                            const InferFn& infer);
EvalReport evaluate_dataset(const std::vector<SceneSample>& dataset,
                            const Model& model);

/// report.json + per_scene.csv under `directory`.
void write_report(const EvalReport& report, const std::string& directory);

}  // namespace glimix
