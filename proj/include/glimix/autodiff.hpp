#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace glimix::ad {

using Mat = Eigen::MatrixXd;

struct Var {
  int id = -1;
  bool ok() const { return id >= 0; }
};

/// Eager reverse-mode tape over dense matrices. Values are computed when an
/// op is recorded; backward() walks the nodes in reverse and accumulates
/// gradients. One tape per evaluation; not thread-safe.
class Tape {
 public:
  Var constant(Mat v, const char* op = "const");
  Var leaf(Mat v, const char* op = "leaf");  // differentiable input

  const Mat& val(Var v) const { return nodes_[v.id].value; }
  /// Gradient after backward(); zero matrix when the node was never touched.
  Mat grad(Var v) const;

  void backward(Var root);

  /// No-op node used to delimit regions in the op trace.
  void marker(const char* name);
  std::vector<std::string> trace() const;
  std::size_t size() const { return nodes_.size(); }

  // arithmetic
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var mul(Var a, Var b);  // elementwise
  /// a/b elementwise with the convention 0 where b == 0 (no gradient there).
  Var div_safe(Var a, Var b);
  Var scalar_mul(Var a, double s);
  Var scalar_add(Var a, double s);

  // linear algebra
  Var matmul(Var a, Var b);
  /// x [N x I] * W [I x O] + row-broadcast bias [1 x O].
  Var linear(Var x, Var w, Var b);

  // shape
  Var vstack(const std::vector<Var>& parts);
  Var hstack(Var a, Var b);
  Var slice_cols(Var a, int start, int count);
  Var gather_rows(Var a, std::vector<int> rows);
  Var repeat_row(Var a, int n);  // a is 1 x C

  // segment reductions (seg ids in [0, num_segments))
  Var segment_sum(Var a, std::vector<int> seg, int num_segments);
  Var segment_mean(Var a, std::vector<int> seg, int num_segments);
  Var segment_max(Var a, std::vector<int> seg, int num_segments);

  Var row_sum(Var a);  // N x C -> N x 1
  Var sum_all(Var a);  // -> 1 x 1

  // elementwise nonlinearities
  Var exp(Var a);
  Var log(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var silu(Var a);
  Var relu(Var a);
  Var abs(Var a);
  Var square(Var a);
  Var clamp(Var a, double lo, double hi);

  /// Per row of a [N x 3]: exact squared distance to the nearest row of
  /// b [M x 3]; gradient flows only through the argmin pair (ties keep the
  /// lowest index). Also exposes the matched indices.
  Var min_sq_dist_rows(Var a, Var b, std::vector<int>* argmin = nullptr);

  /// Value of `hard`, gradient of `soft`.
  Var straight_through(Var soft, Mat hard);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(const Mat&)> back;
    const char* op = "";
  };

  Var push(Mat value, bool requires_grad, const char* op,
           std::function<void(const Mat&)> back = nullptr);
  bool rg(Var v) const { return nodes_[v.id].requires_grad; }
  Mat& gref(int id);

  std::vector<Node> nodes_;
};

}  // namespace glimix::ad
