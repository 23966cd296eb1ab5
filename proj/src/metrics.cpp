#include "glimix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace glimix {

namespace {

std::vector<int> compact(const std::vector<int>& labels,
                         const std::vector<std::size_t>& keep) {
  std::map<int, int> ids;
  for (std::size_t i : keep) ids.emplace(labels[i], 0);
  int next = 0;
  for (auto& [k, v] : ids) v = next++;
  std::vector<int> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(ids[labels[i]]);
  return out;
}

double comb2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double ari_score(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size() || pred.size() < 2)
    throw std::invalid_argument("ari: need equal lengths >= 2");

  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] >= 1) fg.push_back(i);
  if (fg.size() < 2) return 1.0;

  const std::vector<int> a = compact(pred, fg);
  const std::vector<int> b = compact(truth, fg);
  const int ka = 1 + *std::max_element(a.begin(), a.end());
  const int kb = 1 + *std::max_element(b.begin(), b.end());

  std::vector<std::vector<double>> cont(ka, std::vector<double>(kb, 0.0));
  std::vector<double> rows(ka, 0.0), cols(kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    cont[a[i]][b[i]] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) sum_ij += comb2(cont[i][j]);
  for (int i = 0; i < ka; ++i) sum_a += comb2(rows[i]);
  for (int j = 0; j < kb; ++j) sum_b += comb2(cols[j]);
  const double total = comb2(static_cast<double>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double maximum = 0.5 * (sum_a + sum_b);
  const double denom = maximum - expected;
  if (std::abs(denom) < 1e-12) return 1.0;  // both single-class (or degenerate)
  return (sum_ij - expected) / denom;
}

double segmentation_covering(const std::vector<int>& pred,
                             const std::vector<int>& truth, bool weighted) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("segmentation_covering: length mismatch");

  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] >= 1) fg.push_back(i);
  if (fg.empty())
    throw std::invalid_argument("segmentation_covering: no foreground");

  std::map<int, std::vector<std::size_t>> gt_segments, pred_segments;
  for (std::size_t i : fg) {
    gt_segments[truth[i]].push_back(i);
    if (pred[i] != 0) pred_segments[pred[i]].push_back(i);
  }
  if (pred_segments.empty()) return 0.0;

  double acc = 0.0, weight_total = 0.0;
  for (const auto& [label, gt_pts] : gt_segments) {
    double best = 0.0;
    for (const auto& [plabel, p_pts] : pred_segments) {
      std::size_t inter = 0;
      // both index lists ascending
      std::size_t x = 0, y = 0;
      while (x < gt_pts.size() && y < p_pts.size()) {
        if (gt_pts[x] == p_pts[y]) {
          ++inter;
          ++x;
          ++y;
        } else if (gt_pts[x] < p_pts[y]) {
          ++x;
        } else {
          ++y;
        }
      }
      const double uni =
          static_cast<double>(gt_pts.size() + p_pts.size() - inter);
      best = std::max(best, static_cast<double>(inter) / uni);
    }
    const double w = weighted ? static_cast<double>(gt_pts.size()) : 1.0;
    acc += w * best;
    weight_total += w;
  }
  return acc / weight_total;
}

SceneEval evaluate_scene(const SceneSample& scene, const InferFn& infer_fn) {
  SceneEval out;
  try {
    if (!scene.cloud.labels)
      throw std::runtime_error("scene has no ground-truth labels");
    InferResult infer = infer_fn(scene);
    const std::vector<int>& truth = *scene.cloud.labels;
    out.ari = ari_score(infer.labels, truth);
    out.sc = segmentation_covering(infer.labels, truth, true);
    out.msc = segmentation_covering(infer.labels, truth, false);
    out.true_objects = *std::max_element(truth.begin(), truth.end());
    out.pred_objects =
        *std::max_element(infer.labels.begin(), infer.labels.end());

    MatX3 recon(infer.recon.scene_pred.rows() +
                    [&] {
                      int m = 0;
                      for (const auto& g : infer.recon.glimpse_pred)
                        m += static_cast<int>(g.rows());
                      return m;
                    }(),
                3);
    int at = 0;
    recon.middleRows(at, infer.recon.scene_pred.rows()) =
        infer.recon.scene_pred;
    at += static_cast<int>(infer.recon.scene_pred.rows());
    for (std::size_t g = 0; g < infer.recon.glimpse_pred.size(); ++g) {
      // only active glimpses contribute reconstruction points
      if (infer.assignment.z_pres[g] < 0.5) continue;
      recon.middleRows(at, infer.recon.glimpse_pred[g].rows()) =
          infer.recon.glimpse_pred[g];
      at += static_cast<int>(infer.recon.glimpse_pred[g].rows());
    }
    recon.conservativeResize(at, 3);
    ChamferDistance cd = chamfer_distance(scene.cloud.positions, recon);
    out.cd_forward = cd.forward_mean;
    out.cd_backward = cd.backward_mean;
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

SceneEval evaluate_scene(const SceneSample& scene, const Model& model) {
  return evaluate_scene(scene, [&](const SceneSample& s) {
    return model.infer(s.cloud);
  });
}

EvalReport evaluate_dataset(const std::vector<SceneSample>& dataset,
                            const Model& model) {
  return evaluate_dataset(dataset, [&](const SceneSample& s) {
    return model.infer(s.cloud);
  });
}

EvalReport evaluate_dataset(const std::vector<SceneSample>& dataset,
                            const InferFn& infer) {
  EvalReport report;
  for (const SceneSample& scene : dataset) {
    SceneEval ev = evaluate_scene(scene, infer);
    if (!ev.ok) {
      ++report.warnings;
      std::cerr << "warning: scene evaluation failed: " << ev.error << "\n";
    }
    report.per_scene.push_back(std::move(ev));
  }

  auto collect = [&](auto getter) {
    std::vector<double> vals;
    for (const SceneEval& ev : report.per_scene)
      if (ev.ok) vals.push_back(getter(ev));
    return vals;
  };
  auto mean_of = [](const std::vector<double>& v) {
    return v.empty() ? 0.0
                     : std::accumulate(v.begin(), v.end(), 0.0) /
                           static_cast<double>(v.size());
  };
  auto std_of = [&](const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size()));
  };

  std::vector<double> ari = collect([](const SceneEval& e) { return e.ari; });
  std::vector<double> sc = collect([](const SceneEval& e) { return e.sc; });
  std::vector<double> msc = collect([](const SceneEval& e) { return e.msc; });
  std::vector<double> cdf =
      collect([](const SceneEval& e) { return e.cd_forward; });
  std::vector<double> cdb =
      collect([](const SceneEval& e) { return e.cd_backward; });

  report.evaluated = static_cast<int>(ari.size());
  report.mean_ari = mean_of(ari);
  report.std_ari = std_of(ari, report.mean_ari);
  report.mean_sc = mean_of(sc);
  report.std_sc = std_of(sc, report.mean_sc);
  report.mean_msc = mean_of(msc);
  report.std_msc = std_of(msc, report.mean_msc);
  report.mean_cd_forward = mean_of(cdf);
  report.mean_cd_backward = mean_of(cdb);

  int within = 0;
  double excess = 0.0;
  for (const SceneEval& ev : report.per_scene) {
    if (!ev.ok) continue;
    if (std::abs(ev.pred_objects - ev.true_objects) <= 1) ++within;
    excess += ev.pred_objects - ev.true_objects;
  }
  if (report.evaluated > 0) {
    report.count_within_one =
        static_cast<double>(within) / report.evaluated;
    report.mean_count_excess = excess / report.evaluated;
  }

  report.sorted_ari = ari;
  report.sorted_sc = sc;
  report.sorted_msc = msc;
  std::sort(report.sorted_ari.begin(), report.sorted_ari.end());
  std::sort(report.sorted_sc.begin(), report.sorted_sc.end());
  std::sort(report.sorted_msc.begin(), report.sorted_msc.end());
  return report;
}

void write_report(const EvalReport& report, const std::string& directory) {
  fs::create_directories(directory);

  json j;
  j["evaluated"] = report.evaluated;
  j["warnings"] = report.warnings;
  j["mean_ari"] = report.mean_ari;
  j["std_ari"] = report.std_ari;
  j["mean_sc"] = report.mean_sc;
  j["std_sc"] = report.std_sc;
  j["mean_msc"] = report.mean_msc;
  j["std_msc"] = report.std_msc;
  j["mean_cd_forward"] = report.mean_cd_forward;
  j["mean_cd_backward"] = report.mean_cd_backward;
  j["count_within_one"] = report.count_within_one;
  j["mean_count_excess"] = report.mean_count_excess;
  std::ofstream jf(fs::path(directory) / "report.json");
  jf << j.dump(2) << "\n";

  std::ofstream csv(fs::path(directory) / "per_scene.csv");
  csv << "scene,ok,ari,sc,msc,cd_forward,cd_backward,true_objects,pred_objects\n";
  for (std::size_t i = 0; i < report.per_scene.size(); ++i) {
    const SceneEval& ev = report.per_scene[i];
    char row[256];
    std::snprintf(row, sizeof(row), "%zu,%d,%.6f,%.6f,%.6f,%.8f,%.8f,%d,%d\n",
                  i, ev.ok ? 1 : 0, ev.ari, ev.sc, ev.msc, ev.cd_forward,
                  ev.cd_backward, ev.true_objects, ev.pred_objects);
    csv << row;
  }
}

}  // namespace glimix
