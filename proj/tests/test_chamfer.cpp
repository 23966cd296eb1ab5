#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "glimix/chamfer.hpp"
#include "glimix/chamfer_graph.hpp"
#include "oracles.hpp"

using namespace glimix;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

PointCloud cloud_of(const std::vector<Vec3>& pts) {
  PointCloud c;
  c.positions.resize(static_cast<int>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    c.positions.row(static_cast<Eigen::Index>(i)) = pts[i];
  return c;
}

MatX3 mat_of(const std::vector<Vec3>& pts) {
  MatX3 m(static_cast<int>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = pts[i];
  return m;
}

/// Random tiny instance for the oracle tests: n points, up to g glimpses with
/// random membership, predictions, masks, boundary weights and presences.
struct RandomInstance {
  PointCloud cloud;
  GlimpseReconstruction recon;
  MixtureAssignment assign;
};

RandomInstance random_instance(Rng& rng, int max_points, int max_glimpses,
                               bool strict_units = false) {
  RandomInstance inst;
  const int n = rng.uniform_int(1, max_points);
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i)
    pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  inst.cloud = cloud_of(pts);

  const int g = rng.uniform_int(0, max_glimpses);
  inst.assign.num_points = n;
  inst.assign.num_glimpses = g;
  for (int i = 0; i < g; ++i) {
    std::vector<int> members;
    for (int x = 0; x < n; ++x)
      if (rng.uniform() < 0.6) members.push_back(x);
    if (members.empty()) members.push_back(rng.uniform_int(0, n - 1));
    const int m = static_cast<int>(members.size());
    inst.assign.members.push_back(members);
    std::vector<double> pi(m), b(m);
    for (int k = 0; k < m; ++k) {
      pi[k] = strict_units ? rng.uniform() : rng.uniform(0.05, 0.95);
      b[k] = strict_units ? rng.uniform() : rng.uniform(0.05, 1.0);
    }
    inst.assign.pi.push_back(pi);
    inst.assign.boundary.push_back(b);
    inst.assign.z_pres.push_back(rng.uniform());

    MatX3 preds(rng.uniform_int(1, 6), 3);
    for (int j = 0; j < preds.rows(); ++j)
      preds.row(j) = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1),
                          rng.uniform(-1, 1));
    inst.recon.glimpse_pred.push_back(preds);
  }
  MatX3 scene(rng.uniform_int(1, 8), 3);
  for (int j = 0; j < scene.rows(); ++j)
    scene.row(j) =
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  inst.recon.scene_pred = scene;
  mixing_weights(inst.assign);
  return inst;
}

}  // namespace

TEST_CASE("log_gaussian_density closed-form values") {
  CHECK(log_gaussian_density(Vec3::Zero(), Vec3::Zero(), 1.0) ==
        doctest::Approx(-1.5 * kLog2Pi).epsilon(1e-12));
  CHECK(log_gaussian_density(Vec3::Zero(), Vec3::Zero(), 1.0) ==
        doctest::Approx(-2.7568).epsilon(1e-4));
  CHECK(log_gaussian_density(Vec3::Zero(), Vec3::Zero(), 0.1) ==
        doctest::Approx(4.1509).epsilon(1e-4));
  CHECK(log_gaussian_density(Vec3(0.5, 0, 0), Vec3::Zero(), 0.5) ==
        doctest::Approx(std::log(0.3081)).epsilon(1e-3));
  CHECK_THROWS(log_gaussian_density(
      Vec3(std::numeric_limits<double>::quiet_NaN(), 0, 0), Vec3::Zero(), 1.0));
  CHECK_THROWS(log_gaussian_density(Vec3::Zero(), Vec3::Zero(), 0.0));
}

TEST_CASE("forward_point_loglik: max selection and normalizer modes") {
  ChamferParams params;
  params.sigma_c = 1.0;

  SUBCASE("single exact prediction") {
    MatX3 preds = mat_of({Vec3::Zero()});
    auto res = forward_point_loglik(Vec3::Zero(), preds, params);
    CHECK(res.log_lik == doctest::Approx(-1.5 * kLog2Pi));
    CHECK(res.argmax == 0);
  }
  SUBCASE("nearest prediction wins") {
    MatX3 preds = mat_of({Vec3(5, 0, 0), Vec3(0.1, 0, 0)});
    auto res = forward_point_loglik(Vec3::Zero(), preds, params);
    CHECK(res.argmax == 1);
    CHECK(res.log_lik ==
          doctest::Approx(log_gaussian_density(Vec3::Zero(), Vec3(0.1, 0, 0), 1.0)));
  }
  SUBCASE("matches the exhaustive max over random predictions") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      MatX3 preds(10, 3);
      for (int j = 0; j < 10; ++j)
        preds.row(j) =
            Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
      const Vec3 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
      double best = -1e30;
      for (int j = 0; j < 10; ++j)
        best = std::max(best, log_gaussian_density(x, preds.row(j), 0.4));
      params.sigma_c = 0.4;
      CHECK(forward_point_loglik(x, preds, params).log_lik ==
            doctest::Approx(best).epsilon(1e-12));
    }
  }
  SUBCASE("divide_by_n subtracts log of the prediction count") {
    params.sigma_c = 1.0;
    params.normalizer_mode = ChamferParams::Normalizer::kDivideByN;
    MatX3 preds = mat_of({Vec3::Zero(), Vec3(9, 9, 9), Vec3(-9, 9, 9)});
    CHECK(forward_point_loglik(Vec3::Zero(), preds, params).log_lik ==
          doctest::Approx(-1.5 * kLog2Pi - std::log(3.0)));
  }
  SUBCASE("empty reconstruction is an error") {
    MatX3 empty(0, 3);
    CHECK_THROWS_WITH(forward_point_loglik(Vec3::Zero(), empty, params),
                      doctest::Contains("no reconstruction"));
  }
}

TEST_CASE("mixing_weights closed-form cases") {
  auto build = [](const std::vector<double>& w) {
    MixtureAssignment a;
    a.num_points = 1;
    a.num_glimpses = static_cast<int>(w.size());
    for (double wi : w) {
      a.members.push_back({0});
      a.pi.push_back({wi});
      a.boundary.push_back({1.0});
      a.z_pres.push_back(1.0);
    }
    mixing_weights(a);
    return a;
  };

  SUBCASE("single full-weight glimpse claims the point") {
    MixtureAssignment a = build({1.0});
    CHECK(a.alpha[0][0] == doctest::Approx(1.0));
    CHECK(a.alpha0[0] == doctest::Approx(0.0));
  }
  SUBCASE("two equal full glimpses split evenly") {
    MixtureAssignment a = build({1.0, 1.0});
    CHECK(a.alpha[0][0] == doctest::Approx(0.5));
    CHECK(a.alpha[1][0] == doctest::Approx(0.5));
    CHECK(a.alpha0[0] == doctest::Approx(0.0));
  }
  SUBCASE("half weights leave half the mass to the scene") {
    MixtureAssignment a = build({0.5, 0.5});
    CHECK(a.alpha[0][0] == doctest::Approx(0.25));
    CHECK(a.alpha[1][0] == doctest::Approx(0.25));
    CHECK(a.alpha0[0] == doctest::Approx(0.5));
  }
  SUBCASE("all-zero weights give everything to the scene") {
    MixtureAssignment a = build({0.0, 0.0});
    CHECK(a.alpha[0][0] == 0.0);
    CHECK(a.alpha0[0] == 1.0);
  }
  SUBCASE("out-of-range weights are rejected") {
    MixtureAssignment a;
    a.num_points = 1;
    a.num_glimpses = 1;
    a.members = {{0}};
    a.pi = {{1.5}};
    a.boundary = {{1.0}};
    a.z_pres = {1.0};
    CHECK_THROWS(mixing_weights(a));
    a.pi = {{0.5}};
    a.z_pres = {-0.1};
    CHECK_THROWS(mixing_weights(a));
  }
}

TEST_CASE("mixing_weights: simplex and gating properties") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    RandomInstance inst = random_instance(rng, 6, 4, true);
    const MixtureAssignment& a = inst.assign;
    std::vector<double> total = a.alpha0;
    for (int i = 0; i < a.num_glimpses; ++i)
      for (std::size_t m = 0; m < a.members[i].size(); ++m) {
        CHECK(a.alpha[i][m] >= 0.0);
        CHECK(a.alpha[i][m] <= 1.0);
        total[a.members[i][m]] += a.alpha[i][m];
      }
    for (int x = 0; x < a.num_points; ++x) {
      CHECK(a.alpha0[x] >= -1e-12);
      CHECK(a.alpha0[x] <= 1.0 + 1e-12);
      CHECK(total[x] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  SUBCASE("presence gating: z = 0 kills all alphas of the glimpse") {
    RandomInstance inst = random_instance(rng, 8, 3, true);
    if (inst.assign.num_glimpses > 0) {
      inst.assign.z_pres[0] = 0.0;
      mixing_weights(inst.assign);
      for (double alpha : inst.assign.alpha[0]) CHECK(alpha == 0.0);
    }
  }
  SUBCASE("boundary gating: alpha -> 0 continuously as b -> 0") {
    MixtureAssignment a;
    a.num_points = 1;
    a.num_glimpses = 1;
    a.members = {{0}};
    a.pi = {{0.8}};
    a.z_pres = {1.0};
    double prev = 1.0;
    for (double b : {1.0, 0.1, 0.01, 1e-4, 1e-8, 0.0}) {
      a.boundary = {{b}};
      mixing_weights(a);
      CHECK(a.alpha[0][0] <= prev);
      prev = a.alpha[0][0];
    }
    CHECK(prev == 0.0);
  }
}

TEST_CASE("soft_boundary") {
  BoundingBox box{Vec3(1, 2, 3), Vec3(0.5, 0.5, 1.0)};
  const double tau = 0.2;
  CHECK(soft_boundary(box.center, box, tau) == 1.0);
  CHECK(soft_boundary(Vec3(1.5, 2, 3), box, tau) == 1.0);  // on the face
  CHECK(soft_boundary(Vec3(1.5 + tau, 2, 3), box, tau) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  // strictly decreasing along an outward ray
  double prev = 1.0;
  for (double step = 0.05; step < 1.0; step += 0.05) {
    const double b = soft_boundary(Vec3(1.5 + step, 2, 3), box, tau);
    CHECK(b < prev);
    prev = b;
  }
  CHECK_THROWS(soft_boundary(box.center, box, 0.0));
}

TEST_CASE("forward_scene_loglik fixtures") {
  ChamferParams params;
  params.sigma_c = 1.0;

  SUBCASE("one glimpse, one point, perfect reconstruction") {
    PointCloud cloud = cloud_of({Vec3::Zero()});
    GlimpseReconstruction recon;
    recon.scene_pred.resize(0, 3);
    recon.glimpse_pred.push_back(mat_of({Vec3::Zero()}));
    MixtureAssignment a;
    a.num_points = 1;
    a.num_glimpses = 1;
    a.members = {{0}};
    a.pi = {{1.0}};
    a.boundary = {{1.0}};
    a.z_pres = {1.0};
    mixing_weights(a);
    CHECK(forward_scene_loglik(cloud, recon, a, params) ==
          doctest::Approx(-1.5 * kLog2Pi).epsilon(1e-12));
  }
  SUBCASE("two identical half-glimpses equal one full glimpse") {
    PointCloud cloud = cloud_of({Vec3(0.1, 0, 0), Vec3(0, 0.2, 0)});
    MatX3 preds = mat_of({Vec3(0.05, 0.05, 0), Vec3(-0.1, 0.1, 0)});
    GlimpseReconstruction two;
    two.scene_pred.resize(0, 3);
    two.glimpse_pred = {preds, preds};
    MixtureAssignment a2;
    a2.num_points = 2;
    a2.num_glimpses = 2;
    a2.members = {{0, 1}, {0, 1}};
    a2.pi = {{1.0, 1.0}, {1.0, 1.0}};
    a2.boundary = {{1.0, 1.0}, {1.0, 1.0}};
    a2.z_pres = {1.0, 1.0};
    mixing_weights(a2);  // 0.5 / 0.5 split

    GlimpseReconstruction one;
    one.scene_pred.resize(0, 3);
    one.glimpse_pred = {preds};
    MixtureAssignment a1;
    a1.num_points = 2;
    a1.num_glimpses = 1;
    a1.members = {{0, 1}};
    a1.pi = {{1.0, 1.0}};
    a1.boundary = {{1.0, 1.0}};
    a1.z_pres = {1.0};
    mixing_weights(a1);

    CHECK(forward_scene_loglik(cloud, two, a2, params) ==
          doctest::Approx(forward_scene_loglik(cloud, one, a1, params))
              .epsilon(1e-12));
  }
  SUBCASE("a fully claimed point with no reconstruction anywhere errors") {
    PointCloud cloud = cloud_of({Vec3::Zero()});
    GlimpseReconstruction recon;
    recon.scene_pred.resize(0, 3);
    recon.glimpse_pred.push_back(MatX3(0, 3));
    MixtureAssignment a;
    a.num_points = 1;
    a.num_glimpses = 1;
    a.members = {{0}};
    a.pi = {{1.0}};
    a.boundary = {{1.0}};
    a.z_pres = {1.0};
    mixing_weights(a);
    CHECK_THROWS_WITH(forward_scene_loglik(cloud, recon, a, params),
                      doctest::Contains("uncovered"));
  }
}

TEST_CASE("backward_scene_loglik fixtures") {
  ChamferParams params;
  params.sigma_c = 1.0;

  SUBCASE("perfect reconstruction with full alpha") {
    std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    PointCloud cloud = cloud_of(pts);
    GlimpseReconstruction recon;
    recon.scene_pred.resize(0, 3);
    recon.glimpse_pred.push_back(mat_of(pts));
    MixtureAssignment a;
    a.num_points = 3;
    a.num_glimpses = 1;
    a.members = {{0, 1, 2}};
    a.pi = {{1, 1, 1}};
    a.boundary = {{1, 1, 1}};
    a.z_pres = {1.0};
    mixing_weights(a);
    CHECK(backward_scene_loglik(cloud, recon, a, params) ==
          doctest::Approx(3.0 * -1.5 * kLog2Pi).epsilon(1e-12));
  }
  SUBCASE("zero alpha exponent kills the contribution") {
    PointCloud cloud = cloud_of({Vec3::Zero()});
    GlimpseReconstruction recon;
    recon.scene_pred.resize(0, 3);
    recon.glimpse_pred.push_back(mat_of({Vec3(4, 4, 4)}));
    MixtureAssignment a;
    a.num_points = 1;
    a.num_glimpses = 1;
    a.members = {{0}};
    a.pi = {{0.0}};
    a.boundary = {{1.0}};
    a.z_pres = {1.0};
    mixing_weights(a);
    CHECK(backward_scene_loglik(cloud, recon, a, params) == 0.0);
  }
  SUBCASE("prediction in a memberless glimpse errors") {
    PointCloud cloud = cloud_of({Vec3::Zero()});
    GlimpseReconstruction recon;
    recon.scene_pred.resize(0, 3);
    recon.glimpse_pred.push_back(mat_of({Vec3::Zero()}));
    MixtureAssignment a;
    a.num_points = 1;
    a.num_glimpses = 1;
    a.members = {{}};
    a.pi = {{}};
    a.boundary = {{}};
    a.z_pres = {1.0};
    mixing_weights(a);
    CHECK_THROWS_WITH(backward_scene_loglik(cloud, recon, a, params),
                      doctest::Contains("zero input points"));
  }
}

TEST_CASE("oracle equivalence on random instances, both normalizer modes") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    RandomInstance inst = random_instance(rng, 10, 3);
    for (auto mode : {ChamferParams::Normalizer::kDrop,
                      ChamferParams::Normalizer::kDivideByN}) {
      ChamferParams params;
      params.sigma_c = 0.3;
      params.normalizer_mode = mode;
      const double fwd = forward_scene_loglik(inst.cloud, inst.recon,
                                              inst.assign, params);
      const double bwd = backward_scene_loglik(inst.cloud, inst.recon,
                                               inst.assign, params);
      const double fwd_oracle =
          oracle::forward_loglik(inst.cloud, inst.recon, inst.assign, params);
      CHECK(std::abs(fwd - fwd_oracle) <=
            1e-9 * std::max(1.0, std::abs(fwd_oracle)));
      if (mode == ChamferParams::Normalizer::kDrop) {
        const double bwd_oracle = oracle::backward_loglik(
            inst.cloud, inst.recon, inst.assign, params);
        CHECK(std::abs(bwd - bwd_oracle) <=
              1e-9 * std::max(1.0, std::abs(bwd_oracle)));
      }
      CHECK(chamfer_loglik(inst.cloud, inst.recon, inst.assign, params) ==
            doctest::Approx(fwd + bwd).epsilon(1e-12));
    }
  }
}

TEST_CASE("chamfer_loglik decreases monotonically under a small shift") {
  Rng rng(43);
  RandomInstance inst = random_instance(rng, 10, 2);
  ChamferParams params;
  params.sigma_c = 0.5;
  // perfect-ish reconstruction: copy the members, then shift
  for (int i = 0; i < inst.assign.num_glimpses; ++i) {
    MatX3 preds(inst.assign.members[i].size(), 3);
    for (std::size_t m = 0; m < inst.assign.members[i].size(); ++m)
      preds.row(static_cast<Eigen::Index>(m)) =
          inst.cloud.positions.row(inst.assign.members[i][m]);
    inst.recon.glimpse_pred[i] = preds;
  }
  inst.recon.scene_pred = inst.cloud.positions;

  double prev = std::numeric_limits<double>::infinity();
  for (double delta : {0.0, 0.1, 0.2}) {
    GlimpseReconstruction shifted = inst.recon;
    shifted.scene_pred.col(0).array() += delta;
    for (auto& g : shifted.glimpse_pred) g.col(0).array() += delta;
    const double ll = chamfer_loglik(inst.cloud, shifted, inst.assign, params);
    CHECK(ll < prev);
    prev = ll;
  }
}

TEST_CASE("segment: argmax with scene-first tie-break") {
  SUBCASE("clear winner") {
    MixtureAssignment a;
    a.num_points = 1;
    a.num_glimpses = 1;
    a.members = {{0}};
    a.pi = {{0.9}};  // single glimpse: alpha = w = 0.9 > alpha0 = 0.1
    a.boundary = {{1.0}};
    a.z_pres = {1.0};
    mixing_weights(a);
    CHECK(segment(a) == std::vector<int>{1});
  }
  SUBCASE("exact tie goes to the scene") {
    MixtureAssignment a;
    a.num_points = 1;
    a.num_glimpses = 1;
    a.members = {{0}};
    a.pi = {{0.5}};  // alpha = w = 0.5 = alpha0, an exact tie in doubles
    a.boundary = {{1.0}};
    a.z_pres = {1.0};
    mixing_weights(a);
    CHECK(a.alpha[0][0] == 0.5);
    CHECK(a.alpha0[0] == 0.5);
    CHECK(segment(a) == std::vector<int>{0});
  }
  SUBCASE("matches brute-force argmax on random instances") {
    Rng rng(47);
    for (int trial = 0; trial < 100; ++trial) {
      RandomInstance inst = random_instance(rng, 12, 4);
      std::vector<int> labels = segment(inst.assign);
      for (int x = 0; x < inst.assign.num_points; ++x) {
        double best = inst.assign.alpha0[x];
        int best_label = 0;
        for (int i = 0; i < inst.assign.num_glimpses; ++i)
          for (std::size_t m = 0; m < inst.assign.members[i].size(); ++m)
            if (inst.assign.members[i][m] == x &&
                inst.assign.alpha[i][m] > best) {
              best = inst.assign.alpha[i][m];
              best_label = i + 1;
            }
        CHECK(labels[x] == best_label);
      }
    }
  }
}

TEST_CASE("chamfer_distance") {
  MatX3 a = mat_of({Vec3(0, 0, 0), Vec3(1, 1, 1)});
  SUBCASE("identical sets have zero distance") {
    ChamferDistance cd = chamfer_distance(a, a);
    CHECK(cd.forward_sum == 0.0);
    CHECK(cd.backward_sum == 0.0);
  }
  SUBCASE("unit offset singletons") {
    ChamferDistance cd =
        chamfer_distance(mat_of({Vec3::Zero()}), mat_of({Vec3(1, 0, 0)}));
    CHECK(cd.forward_sum == doctest::Approx(1.0));
    CHECK(cd.backward_sum == doctest::Approx(1.0));
  }
  SUBCASE("random sets match an independent double loop") {
    Rng rng(51);
    MatX3 x(30, 3), y(30, 3);
    for (int i = 0; i < 30; ++i) {
      x.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal());
      y.row(i) = Vec3(rng.normal(), rng.normal(), rng.normal());
    }
    ChamferDistance cd = chamfer_distance(x, y);
    double fwd = 0.0, bwd = 0.0;
    for (int i = 0; i < 30; ++i) {
      double bf = 1e30, bb = 1e30;
      for (int j = 0; j < 30; ++j) {
        bf = std::min(bf, (x.row(i) - y.row(j)).squaredNorm());
        bb = std::min(bb, (y.row(i) - x.row(j)).squaredNorm());
      }
      fwd += bf;
      bwd += bb;
    }
    CHECK(cd.forward_sum == doctest::Approx(fwd).epsilon(1e-12));
    CHECK(cd.backward_sum == doctest::Approx(bwd).epsilon(1e-12));
    CHECK(cd.forward_mean == doctest::Approx(fwd / 30.0));
  }
  SUBCASE("empty sets are an error") {
    CHECK_THROWS(chamfer_distance(MatX3(0, 3), a));
  }
}

TEST_CASE("scale behavior: coordinates and sigma scaled together") {
  Rng rng(53);
  const double s = 2.7;
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 x(rng.normal(), rng.normal(), rng.normal());
    const Vec3 mu(rng.normal(), rng.normal(), rng.normal());
    const double sigma = 0.2 + rng.uniform();
    CHECK(log_gaussian_density(s * x, s * mu, s * sigma) ==
          doctest::Approx(log_gaussian_density(x, mu, sigma) - 3.0 * std::log(s))
              .epsilon(1e-10));
  }

  RandomInstance inst = random_instance(rng, 10, 3);
  ChamferParams params;
  params.sigma_c = 0.4;
  std::vector<int> labels = segment(inst.assign);

  RandomInstance scaled = inst;
  scaled.cloud.positions *= s;
  scaled.recon.scene_pred *= s;
  for (auto& g : scaled.recon.glimpse_pred) g *= s;
  ChamferParams sparams = params;
  sparams.sigma_c *= s;
  mixing_weights(scaled.assign);
  CHECK(segment(scaled.assign) == labels);

  // argmax of the forward term matches between the two scales
  for (int i = 0; i < inst.assign.num_glimpses; ++i)
    for (std::size_t m = 0; m < inst.assign.members[i].size(); ++m) {
      const int x = inst.assign.members[i][m];
      const auto base = forward_point_loglik(
          inst.cloud.positions.row(x), inst.recon.glimpse_pred[i], params);
      const auto scl = forward_point_loglik(
          scaled.cloud.positions.row(x), scaled.recon.glimpse_pred[i], sparams);
      CHECK(base.argmax == scl.argmax);
      CHECK(scl.log_lik ==
            doctest::Approx(base.log_lik - 3.0 * std::log(s)).epsilon(1e-8));
    }
}

TEST_CASE("graph chamfer equals the plain evaluator") {
  Rng rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    RandomInstance inst = random_instance(rng, 10, 3);
    ChamferParams params;
    params.sigma_c = 0.3;

    Tape tape;
    ChamferGraphInput in;
    in.points = &inst.cloud.positions;
    in.members = inst.assign.members;
    in.scene_pred = tape.leaf(inst.recon.scene_pred);
    Mat z(inst.assign.num_glimpses, 1);
    for (int i = 0; i < inst.assign.num_glimpses; ++i) {
      in.glimpse_preds.push_back(tape.leaf(inst.recon.glimpse_pred[i]));
      Mat pi(inst.assign.members[i].size(), 1), b(inst.assign.members[i].size(), 1);
      for (std::size_t m = 0; m < inst.assign.members[i].size(); ++m) {
        pi(static_cast<Eigen::Index>(m), 0) = inst.assign.pi[i][m];
        b(static_cast<Eigen::Index>(m), 0) = inst.assign.boundary[i][m];
      }
      in.pi.push_back(tape.leaf(pi));
      in.boundary.push_back(tape.leaf(b));
      z(i, 0) = inst.assign.z_pres[i];
    }
    in.z_pres = tape.leaf(z);
    in.params = params;
    ChamferGraph graph = build_chamfer_graph(tape, in);

    const double fwd =
        forward_scene_loglik(inst.cloud, inst.recon, inst.assign, params);
    const double bwd =
        backward_scene_loglik(inst.cloud, inst.recon, inst.assign, params);
    CHECK(tape.val(graph.forward_ll)(0, 0) ==
          doctest::Approx(fwd).epsilon(1e-11));
    CHECK(tape.val(graph.backward_ll)(0, 0) ==
          doctest::Approx(bwd).epsilon(1e-11));
    for (int i = 0; i < inst.assign.num_glimpses; ++i)
      for (std::size_t m = 0; m < inst.assign.members[i].size(); ++m)
        CHECK(tape.val(graph.alpha[i])(static_cast<Eigen::Index>(m), 0) ==
              doctest::Approx(inst.assign.alpha[i][m]).epsilon(1e-12));
    for (int x = 0; x < inst.assign.num_points; ++x)
      CHECK(tape.val(graph.alpha0)(x, 0) ==
            doctest::Approx(inst.assign.alpha0[x]).epsilon(1e-12));
  }
}

TEST_CASE("graph chamfer gradients match finite differences") {
  Rng rng(67);
  int done = 0;
  for (int attempt = 0; attempt < 40 && done < 10; ++attempt) {
    RandomInstance inst = random_instance(rng, 8, 2);
    if (inst.assign.num_glimpses == 0) continue;
    ChamferParams params;
    params.sigma_c = 0.5;

    // leaves: scene preds, per-glimpse preds, pi, boundary, z_pres
    std::vector<Mat> leaves;
    leaves.push_back(inst.recon.scene_pred);
    const int g = inst.assign.num_glimpses;
    for (int i = 0; i < g; ++i) leaves.push_back(inst.recon.glimpse_pred[i]);
    for (int i = 0; i < g; ++i) {
      Mat pi(inst.assign.members[i].size(), 1);
      for (std::size_t m = 0; m < inst.assign.members[i].size(); ++m)
        pi(static_cast<Eigen::Index>(m), 0) = inst.assign.pi[i][m];
      leaves.push_back(pi);
    }
    for (int i = 0; i < g; ++i) {
      Mat b(inst.assign.members[i].size(), 1);
      for (std::size_t m = 0; m < inst.assign.members[i].size(); ++m)
        b(static_cast<Eigen::Index>(m), 0) = inst.assign.boundary[i][m];
      leaves.push_back(b);
    }
    Mat z(g, 1);
    for (int i = 0; i < g; ++i) z(i, 0) = inst.assign.z_pres[i];
    leaves.push_back(z);

    auto build = [&](Tape& t, std::vector<Var>& v) {
      ChamferGraphInput in;
      in.points = &inst.cloud.positions;
      in.members = inst.assign.members;
      in.scene_pred = v[0];
      for (int i = 0; i < g; ++i) in.glimpse_preds.push_back(v[1 + i]);
      for (int i = 0; i < g; ++i) in.pi.push_back(v[1 + g + i]);
      for (int i = 0; i < g; ++i) in.boundary.push_back(v[1 + 2 * g + i]);
      in.z_pres = v[1 + 3 * g];
      in.params = params;
      return build_chamfer_graph(t, in).total;
    };
    auto res = oracle::check_gradients(leaves, build, 1e-5);
    // skip configurations where the finite difference crossed an argmin tie
    if (res.max_rel_err > 1e-3) continue;
    CHECK(res.max_rel_err < 1e-4);
    ++done;
  }
  CHECK(done == 10);
}
