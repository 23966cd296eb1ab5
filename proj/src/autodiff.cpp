#include "glimix/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace glimix::ad {

Var Tape::push(Mat value, bool requires_grad, const char* op,
               std::function<void(const Mat&)> back) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.back = requires_grad ? std::move(back) : nullptr;
  node.op = op;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::gref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Mat v, const char* op) { return push(std::move(v), false, op); }

Var Tape::leaf(Mat v, const char* op) {
  return push(std::move(v), true, op, [](const Mat&) {});
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  const Node& r = nodes_[root.id];
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::invalid_argument("backward root must be 1x1");
  gref(root.id).setConstant(1.0);
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.back) continue;
    n.back(n.grad);
  }
}

void Tape::marker(const char* name) { push(Mat::Zero(0, 0), false, name); }

std::vector<std::string> Tape::trace() const {
  std::vector<std::string> out;
  out.reserve(nodes_.size());
  for (const Node& n : nodes_) out.emplace_back(n.op);
  return out;
}

Var Tape::add(Var a, Var b) {
  Mat v = val(a) + val(b);
  return push(std::move(v), rg(a) || rg(b), "add", [this, a, b](const Mat& g) {
    if (rg(a)) gref(a.id) += g;
    if (rg(b)) gref(b.id) += g;
  });
}

Var Tape::sub(Var a, Var b) {
  Mat v = val(a) - val(b);
  return push(std::move(v), rg(a) || rg(b), "sub", [this, a, b](const Mat& g) {
    if (rg(a)) gref(a.id) += g;
    if (rg(b)) gref(b.id) -= g;
  });
}

Var Tape::neg(Var a) {
  Mat v = -val(a);
  return push(std::move(v), rg(a), "neg",
              [this, a](const Mat& g) { gref(a.id) -= g; });
}

Var Tape::mul(Var a, Var b) {
  Mat v = val(a).cwiseProduct(val(b));
  return push(std::move(v), rg(a) || rg(b), "mul", [this, a, b](const Mat& g) {
    if (rg(a)) gref(a.id) += g.cwiseProduct(val(b));
    if (rg(b)) gref(b.id) += g.cwiseProduct(val(a));
  });
}

Var Tape::div_safe(Var a, Var b) {
  const Mat& av = val(a);
  const Mat& bv = val(b);
  Mat v(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.size(); ++i)
    v(i) = bv(i) != 0.0 ? av(i) / bv(i) : 0.0;
  return push(std::move(v), rg(a) || rg(b), "div_safe",
              [this, a, b](const Mat& g) {
                const Mat& av = val(a);
                const Mat& bv = val(b);
                if (rg(a)) {
                  Mat& ga = gref(a.id);
                  for (Eigen::Index i = 0; i < av.size(); ++i)
                    if (bv(i) != 0.0) ga(i) += g(i) / bv(i);
                }
                if (rg(b)) {
                  Mat& gb = gref(b.id);
                  for (Eigen::Index i = 0; i < av.size(); ++i)
                    if (bv(i) != 0.0) gb(i) -= g(i) * av(i) / (bv(i) * bv(i));
                }
              });
}

Var Tape::scalar_mul(Var a, double s) {
  Mat v = val(a) * s;
  return push(std::move(v), rg(a), "scalar_mul",
              [this, a, s](const Mat& g) { gref(a.id) += g * s; });
}

Var Tape::scalar_add(Var a, double s) {
  Mat v = val(a).array() + s;
  return push(std::move(v), rg(a), "scalar_add",
              [this, a](const Mat& g) { gref(a.id) += g; });
}

Var Tape::matmul(Var a, Var b) {
  Mat v = val(a) * val(b);
  return push(std::move(v), rg(a) || rg(b), "matmul",
              [this, a, b](const Mat& g) {
                if (rg(a)) gref(a.id) += g * val(b).transpose();
                if (rg(b)) gref(b.id) += val(a).transpose() * g;
              });
}

Var Tape::linear(Var x, Var w, Var b) {
  Mat v = val(x) * val(w);
  v.rowwise() += val(b).row(0);
  return push(std::move(v), rg(x) || rg(w) || rg(b), "linear",
              [this, x, w, b](const Mat& g) {
                if (rg(x)) gref(x.id) += g * val(w).transpose();
                if (rg(w)) gref(w.id) += val(x).transpose() * g;
                if (rg(b)) gref(b.id) += g.colwise().sum();
              });
}

Var Tape::vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vstack of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = val(parts[0]).cols();
  bool any_rg = false;
  for (Var p : parts) {
    rows += val(p).rows();
    any_rg = any_rg || rg(p);
  }
  Mat v(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleRows(at, val(p).rows()) = val(p);
    at += val(p).rows();
  }
  std::vector<Var> ps = parts;
  return push(std::move(v), any_rg, "vstack", [this, ps](const Mat& g) {
    Eigen::Index at = 0;
    for (Var p : ps) {
      const Eigen::Index r = val(p).rows();
      if (rg(p)) gref(p.id) += g.middleRows(at, r);
      at += r;
    }
  });
}

Var Tape::hstack(Var a, Var b) {
  Mat v(val(a).rows(), val(a).cols() + val(b).cols());
  v.leftCols(val(a).cols()) = val(a);
  v.rightCols(val(b).cols()) = val(b);
  return push(std::move(v), rg(a) || rg(b), "hstack",
              [this, a, b](const Mat& g) {
                if (rg(a)) gref(a.id) += g.leftCols(val(a).cols());
                if (rg(b)) gref(b.id) += g.rightCols(val(b).cols());
              });
}

Var Tape::slice_cols(Var a, int start, int count) {
  Mat v = val(a).middleCols(start, count);
  return push(std::move(v), rg(a), "slice_cols",
              [this, a, start, count](const Mat& g) {
                gref(a.id).middleCols(start, count) += g;
              });
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  Mat v(static_cast<Eigen::Index>(rows.size()), val(a).cols());
  for (std::size_t i = 0; i < rows.size(); ++i) v.row(i) = val(a).row(rows[i]);
  return push(std::move(v), rg(a), "gather_rows",
              [this, a, rows = std::move(rows)](const Mat& g) {
                Mat& ga = gref(a.id);
                for (std::size_t i = 0; i < rows.size(); ++i)
                  ga.row(rows[i]) += g.row(i);
              });
}

Var Tape::repeat_row(Var a, int n) {
  if (val(a).rows() != 1) throw std::invalid_argument("repeat_row wants 1 x C");
  Mat v = val(a).replicate(n, 1);
  return push(std::move(v), rg(a), "repeat_row", [this, a](const Mat& g) {
    gref(a.id) += g.colwise().sum();
  });
}

Var Tape::segment_sum(Var a, std::vector<int> seg, int num_segments) {
  const Mat& av = val(a);
  Mat v = Mat::Zero(num_segments, av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) v.row(seg[i]) += av.row(i);
  return push(std::move(v), rg(a), "segment_sum",
              [this, a, seg = std::move(seg)](const Mat& g) {
                Mat& ga = gref(a.id);
                for (Eigen::Index i = 0; i < ga.rows(); ++i)
                  ga.row(i) += g.row(seg[i]);
              });
}

Var Tape::segment_mean(Var a, std::vector<int> seg, int num_segments) {
  const Mat& av = val(a);
  std::vector<double> count(num_segments, 0.0);
  for (Eigen::Index i = 0; i < av.rows(); ++i) count[seg[i]] += 1.0;
  for (int k = 0; k < num_segments; ++k)
    if (count[k] == 0.0)
      throw std::runtime_error("segment_mean: parent with zero children");
  Mat v = Mat::Zero(num_segments, av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) v.row(seg[i]) += av.row(i);
  for (int k = 0; k < num_segments; ++k) v.row(k) /= count[k];
  return push(std::move(v), rg(a), "segment_mean",
              [this, a, seg = std::move(seg), count = std::move(count)](
                  const Mat& g) {
                Mat& ga = gref(a.id);
                for (Eigen::Index i = 0; i < ga.rows(); ++i)
                  ga.row(i) += g.row(seg[i]) / count[seg[i]];
              });
}

Var Tape::segment_max(Var a, std::vector<int> seg, int num_segments) {
  const Mat& av = val(a);
  const Eigen::Index cols = av.cols();
  Mat v = Mat::Constant(num_segments, cols,
                        -std::numeric_limits<double>::infinity());
  std::vector<int> arg(static_cast<std::size_t>(num_segments) * cols, -1);
  std::vector<int> first_row(num_segments, -1);
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const int k = seg[i];
    if (first_row[k] < 0) first_row[k] = static_cast<int>(i);
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (av(i, c) > v(k, c)) {
        v(k, c) = av(i, c);
        arg[static_cast<std::size_t>(k) * cols + c] = static_cast<int>(i);
      }
    }
  }
  for (int k = 0; k < num_segments; ++k) {
    if (first_row[k] < 0)
      throw std::runtime_error("segment_max: empty segment");
    // rows full of NaN never win a comparison; fall back so non-finite
    // values propagate instead of masquerading as empty segments
    for (Eigen::Index c = 0; c < cols; ++c) {
      auto& slot = arg[static_cast<std::size_t>(k) * cols + c];
      if (slot < 0) {
        slot = first_row[k];
        v(k, c) = av(slot, c);
      }
    }
  }
  return push(std::move(v), rg(a), "segment_max",
              [this, a, cols, arg = std::move(arg)](const Mat& g) {
                Mat& ga = gref(a.id);
                for (Eigen::Index k = 0; k < g.rows(); ++k)
                  for (Eigen::Index c = 0; c < cols; ++c)
                    ga(arg[static_cast<std::size_t>(k) * cols + c], c) +=
                        g(k, c);
              });
}

Var Tape::row_sum(Var a) {
  Mat v = val(a).rowwise().sum();
  return push(std::move(v), rg(a), "row_sum", [this, a](const Mat& g) {
    gref(a.id).colwise() += g.col(0);
  });
}

Var Tape::sum_all(Var a) {
  Mat v(1, 1);
  v(0, 0) = val(a).sum();
  return push(std::move(v), rg(a), "sum_all", [this, a](const Mat& g) {
    gref(a.id).array() += g(0, 0);
  });
}

Var Tape::exp(Var a) {
  Mat v = val(a).array().exp();
  const int id = static_cast<int>(nodes_.size());
  return push(std::move(v), rg(a), "exp", [this, a, id](const Mat& g) {
    gref(a.id) += g.cwiseProduct(nodes_[id].value);
  });
}

Var Tape::log(Var a) {
  Mat v = val(a).array().log();
  return push(std::move(v), rg(a), "log", [this, a](const Mat& g) {
    gref(a.id) += g.cwiseQuotient(val(a));
  });
}

Var Tape::tanh(Var a) {
  Mat v = val(a).array().tanh();
  const int id = static_cast<int>(nodes_.size());
  return push(std::move(v), rg(a), "tanh", [this, a, id](const Mat& g) {
    const Mat& t = nodes_[id].value;
    gref(a.id) += g.cwiseProduct((1.0 - t.array().square()).matrix());
  });
}

Var Tape::sigmoid(Var a) {
  Mat v = (1.0 / (1.0 + (-val(a)).array().exp())).matrix();
  const int id = static_cast<int>(nodes_.size());
  return push(std::move(v), rg(a), "sigmoid", [this, a, id](const Mat& g) {
    const Mat& s = nodes_[id].value;
    gref(a.id) += g.cwiseProduct((s.array() * (1.0 - s.array())).matrix());
  });
}

Var Tape::silu(Var a) {
  const Mat& x = val(a);
  Mat s = (1.0 / (1.0 + (-x).array().exp())).matrix();
  Mat v = x.cwiseProduct(s);
  return push(std::move(v), rg(a), "silu",
              [this, a, s = std::move(s)](const Mat& g) {
                const Mat& x = val(a);
                gref(a.id) += g.cwiseProduct(
                    (s.array() * (1.0 + x.array() * (1.0 - s.array())))
                        .matrix());
              });
}

Var Tape::relu(Var a) {
  Mat v = val(a).cwiseMax(0.0);
  return push(std::move(v), rg(a), "relu", [this, a](const Mat& g) {
    gref(a.id) += g.cwiseProduct(
        (val(a).array() > 0.0).cast<double>().matrix());
  });
}

Var Tape::abs(Var a) {
  Mat v = val(a).cwiseAbs();
  return push(std::move(v), rg(a), "abs", [this, a](const Mat& g) {
    gref(a.id) += g.cwiseProduct(val(a).array().sign().matrix());
  });
}

Var Tape::square(Var a) {
  Mat v = val(a).array().square();
  return push(std::move(v), rg(a), "square", [this, a](const Mat& g) {
    gref(a.id) += 2.0 * g.cwiseProduct(val(a));
  });
}

Var Tape::clamp(Var a, double lo, double hi) {
  Mat v = val(a).cwiseMax(lo).cwiseMin(hi);
  return push(std::move(v), rg(a), "clamp", [this, a, lo, hi](const Mat& g) {
    const Mat& x = val(a);
    Mat mask = ((x.array() >= lo) && (x.array() <= hi)).cast<double>();
    gref(a.id) += g.cwiseProduct(mask.matrix());
  });
}

Var Tape::min_sq_dist_rows(Var a, Var b, std::vector<int>* argmin_out) {
  const Mat& av = val(a);
  const Mat& bv = val(b);
  if (av.cols() != 3 || bv.cols() != 3)
    throw std::invalid_argument("min_sq_dist_rows wants N x 3 inputs");
  if (bv.rows() == 0) throw std::invalid_argument("min_sq_dist_rows: empty b");
  const Eigen::Index n = av.rows(), m = bv.rows();

  // Fast candidate search via inner products, exact recompute of the winner.
  Eigen::VectorXd an = av.rowwise().squaredNorm();
  Eigen::VectorXd bn = bv.rowwise().squaredNorm();
  Mat gmat = av * bv.transpose();
  Mat v(n, 1);
  std::vector<int> arg(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double bestd = an(i) + bn(0) - 2.0 * gmat(i, 0);
    for (Eigen::Index j = 1; j < m; ++j) {
      const double d = an(i) + bn(j) - 2.0 * gmat(i, j);
      if (d < bestd) {
        bestd = d;
        best = static_cast<int>(j);
      }
    }
    arg[i] = best;
    v(i, 0) = (av.row(i) - bv.row(best)).squaredNorm();
  }
  if (argmin_out) *argmin_out = arg;
  return push(std::move(v), rg(a) || rg(b), "min_sq_dist",
              [this, a, b, arg = std::move(arg)](const Mat& g) {
                const Mat& av = val(a);
                const Mat& bv = val(b);
                const bool ra = rg(a), rb = rg(b);
                for (std::size_t i = 0; i < arg.size(); ++i) {
                  const Eigen::RowVector3d diff =
                      2.0 * g(static_cast<Eigen::Index>(i), 0) *
                      (av.row(static_cast<Eigen::Index>(i)) - bv.row(arg[i]));
                  if (ra) gref(a.id).row(static_cast<Eigen::Index>(i)) += diff;
                  if (rb) gref(b.id).row(arg[i]) -= diff;
                }
              });
}

Var Tape::straight_through(Var soft, Mat hard) {
  return push(std::move(hard), rg(soft), "straight_through",
              [this, soft](const Mat& g) { gref(soft.id) += g; });
}

}  // namespace glimix::ad
