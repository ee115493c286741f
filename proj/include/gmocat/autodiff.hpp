#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gmocat::ad {

using Mat = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; only meaningful while the tape
/// that created it is alive and has not been cleared.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Define-by-run reverse-mode tape over dense matrices. Forward calls append
/// nodes; backward() walks them in reverse, pulling each node's accumulated
/// gradient into its parents. Every trained component builds its forward pass
/// on a tape, so composed gradients are exact by construction.
class Tape {
 public:
  /// Pull closure: receives the node's accumulated gradient and adds the
  /// corresponding contributions into parent nodes via accumulate().
  using PullFn = std::function<void(Tape&, const Mat& self_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Mat value, bool requires_grad = true);
  Var emit(Mat value, PullFn pull);

  const Mat& value(Var v) const;
  /// Accumulated gradient; a zero matrix of the value's shape if untouched.
  Mat grad(Var v) const;

  /// Seeds `root` with `seed` and propagates to every ancestor.
  void backward(Var root, const Mat& seed);
  void backward_scalar(Var root);

  void accumulate(std::int32_t id, const Mat& g);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool has_grad = false;
    PullFn pull;  // empty for leaves
  };
  const Node& at(Var v) const;
  std::vector<Node> nodes_;
};

// Arithmetic and structural ops. All inputs must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_rowvec(Var a, Var row);          // broadcast a 1xC row over the rows of a
Var add_scalar(Var a, double s);
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
Var hadamard_const(Var a, const Mat& c);
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);             // a * b^T
Var row(Var a, Eigen::Index i);
Var entry(Var a, Eigen::Index r, Eigen::Index c);  // 1x1
Var hcat(std::span<const Var> parts);    // single-row parts side by side
Var vstack(std::span<const Var> parts);
Var mean_rows(Var a);                    // 1xC column means
Var sum_all(Var a);                      // 1x1
Var mean_all(Var a);                     // 1x1

// Nonlinearities.
Var leaky_relu(Var a, double negative_slope);
Var tanh_op(Var a);
Var exp_op(Var a);
Var softmax_rows(Var a);
/// Row log-softmax over the allowed entries; disallowed entries get -inf
/// value and zero gradient. `a` must be 1xN with at least one entry allowed.
Var masked_log_softmax_row(Var a, const std::vector<std::uint8_t>& allowed);
Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
/// Inverted dropout with an externally drawn 0/1 keep mask.
Var dropout_mask(Var a, const Mat& keep, double keep_prob);
Var clamp_op(Var a, double lo, double hi);
Var min2(Var a, Var b);

}  // namespace gmocat::ad
