#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "glimix/nn.hpp"
#include "oracles.hpp"

using namespace glimix;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

Mat randm(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

double silu_scalar(double x) { return x / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("point_conv: one child at the parent position, closed form") {
  Rng rng(1);
  ParamStore store;
  PointConv conv = PointConv::create(store, "c", 2, 3, rng);

  Mat feat(1, 2);
  feat << 0.4, -0.7;
  Tape tape;
  ParamBinder bind(tape);
  Var offsets = tape.constant(Mat::Zero(1, 3));
  Var feats = tape.leaf(feat);
  Var out = conv.apply(tape, bind, offsets, feats, {0}, 1);

  // message = (A*0 + a0) o (U*f + u0), aggregated over the single child
  Eigen::VectorXd a0 = store.find("c.off.b")->value.row(0);
  Eigen::VectorXd g =
      store.find("c.feat.w")->value.transpose() * feat.row(0).transpose() +
      store.find("c.feat.b")->value.row(0).transpose();
  for (int k = 0; k < 3; ++k)
    CHECK(tape.val(out)(0, k) ==
          doctest::Approx(silu_scalar(a0(k) * g(k))).epsilon(1e-12));
}

TEST_CASE("point_conv: permutation of children leaves the parent feature") {
  Rng rng(2);
  ParamStore store;
  PointConv conv = PointConv::create(store, "c", 4, 8, rng);
  Mat offsets = randm(rng, 6, 3, 0.3);
  Mat feats = randm(rng, 6, 4);

  auto run = [&](const std::vector<int>& order) {
    Mat off2(6, 3), f2(6, 4);
    for (int i = 0; i < 6; ++i) {
      off2.row(i) = offsets.row(order[i]);
      f2.row(i) = feats.row(order[i]);
    }
    Tape tape;
    ParamBinder bind(tape);
    Var out = conv.apply(tape, bind, tape.constant(off2),
                         tape.constant(f2), {0, 0, 0, 0, 0, 0}, 1);
    return Mat(tape.val(out));
  };
  Mat base = run({0, 1, 2, 3, 4, 5});
  Mat perm = run({5, 3, 0, 4, 2, 1});
  CHECK((base - perm).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("point_conv: symmetric children equal the centered child") {
  Rng rng(3);
  ParamStore store;
  PointConv conv = PointConv::create(store, "c", 2, 5, rng);
  Mat feat(1, 2);
  feat << 1.2, -0.3;
  Vec3 d(0.2, -0.1, 0.15);

  auto run = [&](const Mat& offsets, int n_children) {
    Mat feats = feat.replicate(n_children, 1);
    std::vector<int> parent(n_children, 0);
    Tape tape;
    ParamBinder bind(tape);
    Var out = conv.apply(tape, bind, tape.constant(offsets),
                         tape.constant(feats), parent, 1);
    return Mat(tape.val(out));
  };
  Mat sym(2, 3);
  sym.row(0) = d.transpose();
  sym.row(1) = -d.transpose();
  Mat centered = Mat::Zero(1, 3);
  CHECK((run(sym, 2) - run(centered, 1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("point_conv: parent with no children is an error") {
  Rng rng(4);
  ParamStore store;
  PointConv conv = PointConv::create(store, "c", 0, 4, rng);
  Tape tape;
  ParamBinder bind(tape);
  Var offsets = tape.constant(Mat::Zero(2, 3));
  CHECK_THROWS_WITH(conv.apply(tape, bind, offsets, std::nullopt, {0, 0}, 2),
                    doctest::Contains("zero children"));
}

TEST_CASE("point_deconv: closed form and mirror symmetry") {
  Rng rng(5);
  ParamStore store;
  PointDeconv dec = PointDeconv::create(store, "d", 3, 4, rng);
  Mat parent_feat(1, 3);
  parent_feat << 0.5, -1.0, 0.25;
  Vec3 d(0.3, 0.1, -0.2);

  Mat offsets(2, 3);
  offsets.row(0) = d.transpose();
  offsets.row(1) = -d.transpose();
  Tape tape;
  ParamBinder bind(tape);
  Var out = dec.apply(tape, bind, tape.constant(offsets),
                      tape.leaf(parent_feat), {0, 0});

  const Mat& aw = store.find("d.off.w")->value;   // 3 x 4
  const Mat& ab = store.find("d.off.b")->value;   // 1 x 4
  const Mat& uw = store.find("d.par.w")->value;   // 3 x 4
  const Mat& ub = store.find("d.par.b")->value;
  for (int child = 0; child < 2; ++child) {
    Eigen::RowVectorXd pre = offsets.row(child) * aw + ab.row(0) +
                             parent_feat.row(0) * uw + ub.row(0);
    for (int k = 0; k < 4; ++k)
      CHECK(tape.val(out)(child, k) ==
            doctest::Approx(silu_scalar(pre(k))).epsilon(1e-12));
  }

  CHECK_THROWS_WITH(
      dec.apply(tape, bind, tape.constant(offsets), tape.leaf(parent_feat),
                {0, 5}),
      doctest::Contains("unmapped child"));
}

TEST_CASE("point_gnn: no edges means a pure self-update") {
  Rng rng(6);
  ParamStore store;
  PointGnn gnn = PointGnn::create(store, "g", 3, 4, 5, 6, false, rng);
  Mat pos = randm(rng, 3, 3);
  Mat feats = randm(rng, 3, 3);

  Tape tape;
  ParamBinder bind(tape);
  EdgeList no_edges;
  Var out = gnn.apply(tape, bind, no_edges, tape.constant(pos),
                      tape.leaf(feats)).feats;

  // manual: msg = silu(msg_pos(0) + msg_src(f)); out = upd2(silu(upd1([f, msg])))
  auto lin = [&](const std::string& name, const Eigen::RowVectorXd& x) {
    return Eigen::RowVectorXd(x * store.find(name + ".w")->value +
                              store.find(name + ".b")->value.row(0));
  };
  for (int i = 0; i < 3; ++i) {
    Eigen::RowVectorXd msg =
        lin("g.msg_pos", Eigen::RowVectorXd::Zero(3)) + lin("g.msg_src", feats.row(i));
    msg = msg.unaryExpr([](double x) { return silu_scalar(x); });
    Eigen::RowVectorXd cat(3 + 5);
    cat << feats.row(i), msg;
    Eigen::RowVectorXd h =
        lin("g.upd1", cat).unaryExpr([](double x) { return silu_scalar(x); });
    Eigen::RowVectorXd expect = lin("g.upd2", h);
    for (int k = 0; k < 4; ++k)
      CHECK(tape.val(out)(i, k) == doctest::Approx(expect(k)).epsilon(1e-10));
  }

  // two nodes beyond any edge: each output depends only on its own state
  Mat f2 = feats;
  f2.row(2).setConstant(9.0);  // changing node 2 must not affect node 0
  Tape tape2;
  ParamBinder bind2(tape2);
  Var out2 = gnn.apply(tape2, bind2, no_edges, tape2.constant(pos),
                       tape2.leaf(f2)).feats;
  CHECK((tape2.val(out2).row(0) - tape.val(out).row(0)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("point_gnn: permutation equivariance") {
  Rng rng(7);
  ParamStore store;
  PointGnn gnn = PointGnn::create(store, "g", 4, 4, 8, 8, false, rng);
  const int n = 5;
  Mat pos = randm(rng, n, 3);
  Mat feats = randm(rng, n, 4);
  EdgeList edges;
  edges.src = {0, 1, 2, 3, 4, 0};
  edges.dst = {1, 0, 3, 2, 0, 4};

  Tape tape;
  ParamBinder bind(tape);
  Mat base = tape.val(
      gnn.apply(tape, bind, edges, tape.constant(pos), tape.leaf(feats)).feats);

  std::vector<int> perm = {3, 0, 4, 1, 2};  // new index of old node i
  Mat pos2(n, 3), feats2(n, 4);
  for (int i = 0; i < n; ++i) {
    pos2.row(perm[i]) = pos.row(i);
    feats2.row(perm[i]) = feats.row(i);
  }
  EdgeList edges2;
  for (std::size_t e = 0; e < edges.src.size(); ++e) {
    edges2.src.push_back(perm[edges.src[e]]);
    edges2.dst.push_back(perm[edges.dst[e]]);
  }
  Tape tape2;
  ParamBinder bind2(tape2);
  Mat permuted = tape2.val(gnn.apply(tape2, bind2, edges2,
                                     tape2.constant(pos2), tape2.leaf(feats2))
                               .feats);
  for (int i = 0; i < n; ++i)
    CHECK((permuted.row(perm[i]) - base.row(i)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("point_gnn: translation moves coordinates, not features") {
  Rng rng(8);
  ParamStore store;
  PointGnn gnn = PointGnn::create(store, "g", 4, 4, 8, 8, true, rng);
  const int n = 6;
  Mat pos = randm(rng, n, 3);
  Mat feats = randm(rng, n, 4);
  EdgeList edges;
  edges.src = {0, 1, 2, 3, 4, 5};
  edges.dst = {1, 2, 3, 4, 5, 0};

  for (const Vec3& t : {Vec3(1.5, -2.0, 0.25), Vec3(-10, 3, 7)}) {
    Tape ta, tb;
    ParamBinder ba(ta), bb(tb);
    auto ra = gnn.apply(ta, ba, edges, ta.constant(pos), ta.leaf(feats));
    Mat shifted = pos;
    shifted.rowwise() += t.transpose();
    auto rb = gnn.apply(tb, bb, edges, tb.constant(shifted), tb.leaf(feats));
    CHECK((ta.val(ra.feats) - tb.val(rb.feats)).cwiseAbs().maxCoeff() < 1e-9);
    Mat moved = ta.val(ra.positions);
    moved.rowwise() += t.transpose();
    CHECK((moved - tb.val(rb.positions)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("blocks pass parameter gradient checks") {
  Rng rng(9);

  SUBCASE("point_conv") {
    ParamStore store;
    PointConv conv = PointConv::create(store, "c", 3, 4, rng);
    Mat offsets = randm(rng, 5, 3, 0.3);
    Mat feats = randm(rng, 5, 3);
    auto res = oracle::check_param_gradients(
        store, [&](Tape& t, ParamBinder& b) {
          return t.sum_all(t.square(conv.apply(
              t, b, t.constant(offsets), t.constant(feats), {0, 0, 1, 1, 1}, 2)));
        });
    CHECK(res.max_rel_err < 1e-4);
  }

  SUBCASE("point_deconv") {
    ParamStore store;
    PointDeconv dec = PointDeconv::create(store, "d", 3, 4, rng);
    Mat offsets = randm(rng, 5, 3, 0.3);
    Mat parents = randm(rng, 2, 3);
    auto res = oracle::check_param_gradients(
        store, [&](Tape& t, ParamBinder& b) {
          return t.sum_all(t.square(dec.apply(t, b, t.constant(offsets),
                                              t.constant(parents),
                                              {0, 0, 1, 1, 0})));
        });
    CHECK(res.max_rel_err < 1e-4);
  }

  SUBCASE("point_gnn with coordinate updates") {
    ParamStore store;
    PointGnn gnn = PointGnn::create(store, "g", 3, 2, 4, 4, true, rng);
    Mat pos = randm(rng, 4, 3);
    Mat feats = randm(rng, 4, 3);
    EdgeList edges;
    edges.src = {0, 1, 2, 3};
    edges.dst = {1, 2, 3, 0};
    auto res = oracle::check_param_gradients(
        store, [&](Tape& t, ParamBinder& b) {
          auto r = gnn.apply(t, b, edges, t.constant(pos), t.constant(feats));
          return t.add(t.sum_all(t.square(r.feats)),
                       t.sum_all(t.square(r.positions)));
        });
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("reparam_gaussian") {
  Tape tape;
  Mat mu(1, 2), lv(1, 2);
  mu << 0.3, -0.8;
  lv << 0.0, 1.0;

  SUBCASE("zero noise returns the mean") {
    Var z = reparam_gaussian(tape, tape.leaf(mu), tape.leaf(lv), Mat::Zero(1, 2));
    CHECK(tape.val(z) == mu);
  }
  SUBCASE("the clamp caps the scale at e^-4") {
    Mat tiny(1, 2);
    tiny << -1000.0, -1e9;
    Mat noise = Mat::Ones(1, 2);
    Var z = reparam_gaussian(tape, tape.leaf(mu), tape.leaf(tiny), noise);
    Mat expect = mu.array() + std::exp(-4.0);
    CHECK((tape.val(z) - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("sample variance matches exp(logvar) within 2%") {
    Rng rng(11);
    const double logvar = -0.7;
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double z = reparam_gaussian_value(0.0, logvar, rng.normal());
      sum += z;
      sum2 += z * z;
    }
    const double var = sum2 / n - (sum / n) * (sum / n);
    CHECK(var == doctest::Approx(std::exp(logvar)).epsilon(0.02));
  }
}

TEST_CASE("reparam_bernoulli") {
  SUBCASE("saturated logit gives ~1") {
    RelaxedBernoulliPosterior post{20.0, 1.0};
    CHECK(reparam_bernoulli_value(post, 0.5, false) ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("hard samples are binary and balanced at logit 0") {
    Rng rng(12);
    RelaxedBernoulliPosterior post{0.0, 0.01};
    int ones = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const double z = reparam_bernoulli_value(post, rng.uniform_open(), true);
      CHECK((z == 0.0 || z == 1.0));
      ones += z == 1.0;
    }
    CHECK(std::abs(ones / static_cast<double>(n) - 0.5) < 0.03);
  }
  SUBCASE("tape version: straight-through keeps gradients") {
    Tape tape;
    Mat logit(2, 1);
    logit << 0.4, -0.2;
    Mat noise = Mat::Zero(2, 1);
    Var lg = tape.leaf(logit);
    Var z = reparam_bernoulli(tape, lg, noise, 0.7, true);
    CHECK(tape.val(z)(0, 0) == 1.0);
    CHECK(tape.val(z)(1, 0) == 0.0);
    tape.backward(tape.sum_all(z));
    CHECK(tape.grad(lg).cwiseAbs().minCoeff() > 0.0);
  }
}

TEST_CASE("kl terms") {
  SUBCASE("gaussian: identical distributions have zero KL") {
    GaussianPosterior post;
    post.mean = Eigen::VectorXd::Zero(3);
    post.logvar = Eigen::VectorXd::Zero(3);
    CHECK(kl_gaussian_value(post, 0.0, 1.0) == doctest::Approx(0.0));
  }
  SUBCASE("gaussian: KL(N(1,1) || N(0,1)) = 0.5") {
    GaussianPosterior post;
    post.mean = Eigen::VectorXd::Ones(1);
    post.logvar = Eigen::VectorXd::Zero(1);
    CHECK(kl_gaussian_value(post, 0.0, 1.0) == doctest::Approx(0.5));
  }
  SUBCASE("tape gaussian matches the closed form") {
    Tape tape;
    Mat mu = Mat::Constant(2, 3, 0.7);
    Mat lv = Mat::Constant(2, 3, -0.4);
    Var kl = kl_gaussian_sum(tape, tape.leaf(mu), tape.leaf(lv), -1.0, 0.5);
    GaussianPosterior post;
    post.mean = Eigen::VectorXd::Constant(1, 0.7);
    post.logvar = Eigen::VectorXd::Constant(1, -0.4);
    CHECK(tape.val(kl)(0, 0) ==
          doctest::Approx(6.0 * kl_gaussian_value(post, -1.0, 0.5)));
  }
  SUBCASE("bernoulli: zero at equal probabilities, error at 0/1 priors") {
    CHECK(kl_bernoulli_value(0.5, 0.5) == doctest::Approx(0.0));
    CHECK(kl_bernoulli_value(0.9, 0.1) > 0.0);
    CHECK_THROWS(kl_bernoulli_value(0.5, 0.0));
    CHECK_THROWS(kl_bernoulli_value(0.5, 1.0));
  }
  SUBCASE("kl is non-negative on random posteriors") {
    Rng rng(13);
    for (int i = 0; i < 200; ++i) {
      GaussianPosterior post;
      post.mean = Eigen::VectorXd::Constant(1, rng.normal());
      post.logvar = Eigen::VectorXd::Constant(1, rng.normal());
      CHECK(kl_gaussian_value(post, rng.normal(), 0.5 + rng.uniform()) >= 0.0);
      CHECK(kl_bernoulli_value(rng.uniform(), 0.01 + 0.98 * rng.uniform()) >=
            0.0);
    }
  }
}
