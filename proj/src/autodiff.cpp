#include "gmocat/autodiff.hpp"

#include <cmath>
#include <limits>

#include "gmocat/errors.hpp"

namespace gmocat::ad {

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape != b.tape) {
    throw ContractViolation("autodiff: operands live on different tapes");
  }
  return *a.tape;
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractViolation("autodiff: invalid var");
  return *a.tape;
}

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractViolation(std::string("autodiff: shape mismatch in ") + op);
  }
}

}  // namespace

Var Tape::leaf(Mat value, bool requires_grad) {
  (void)requires_grad;  // gradients for constants are simply never read
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::emit(Mat value, PullFn pull) {
  Node node;
  node.value = std::move(value);
  node.pull = std::move(pull);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::at(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<std::int32_t>(nodes_.size())) {
    throw ContractViolation("autodiff: var does not belong to this tape");
  }
  return nodes_[v.id];
}

const Mat& Tape::value(Var v) const { return at(v).value; }

Mat Tape::grad(Var v) const {
  const Node& node = at(v);
  if (!node.has_grad) return Mat::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::accumulate(std::int32_t id, const Mat& g) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = g;
    node.has_grad = true;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var root, const Mat& seed) {
  const Node& root_node = at(root);
  check_same_shape(seed, root_node.value, "backward seed");
  accumulate(root.id, seed);
  for (std::int32_t i = root.id; i >= 0; --i) {
    Node& node = nodes_[i];
    if (node.has_grad && node.pull) node.pull(*this, node.grad);
  }
}

void Tape::backward_scalar(Var root) {
  const Node& node = at(root);
  if (node.value.rows() != 1 || node.value.cols() != 1) {
    throw ContractViolation("autodiff: backward_scalar on a non-scalar node");
  }
  backward(root, Mat::Ones(1, 1));
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(t.value(a), t.value(b), "add");
  return t.emit(t.value(a) + t.value(b), [ia = a.id, ib = b.id](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(t.value(a), t.value(b), "sub");
  return t.emit(t.value(a) - t.value(b), [ia = a.id, ib = b.id](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

Var add_rowvec(Var a, Var rowv) {
  Tape& t = same_tape(a, rowv);
  const Mat& av = t.value(a);
  const Mat& rv = t.value(rowv);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ContractViolation("autodiff: add_rowvec expects a 1xC row");
  }
  Mat out = av;
  out.rowwise() += rv.row(0);
  return t.emit(std::move(out), [ia = a.id, ir = rowv.id](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ir, g.colwise().sum());
  });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  return t.emit(t.value(a).array() + s,
                [ia = a.id](Tape& tp, const Mat& g) { tp.accumulate(ia, g); });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  return t.emit(t.value(a) * s,
                [ia = a.id, s](Tape& tp, const Mat& g) { tp.accumulate(ia, s * g); });
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(t.value(a), t.value(b), "hadamard");
  return t.emit(t.value(a).cwiseProduct(t.value(b)),
                [ia = a.id, ib = b.id](Tape& tp, const Mat& g) {
                  tp.accumulate(ia, g.cwiseProduct(tp.value(Var{&tp, ib})));
                  tp.accumulate(ib, g.cwiseProduct(tp.value(Var{&tp, ia})));
                });
}

Var hadamard_const(Var a, const Mat& c) {
  Tape& t = tape_of(a);
  check_same_shape(t.value(a), c, "hadamard_const");
  return t.emit(t.value(a).cwiseProduct(c),
                [ia = a.id, c](Tape& tp, const Mat& g) { tp.accumulate(ia, g.cwiseProduct(c)); });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (t.value(a).cols() != t.value(b).rows()) {
    throw ContractViolation("autodiff: matmul inner dimensions differ");
  }
  return t.emit(t.value(a) * t.value(b), [ia = a.id, ib = b.id](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g * tp.value(Var{&tp, ib}).transpose());
    tp.accumulate(ib, tp.value(Var{&tp, ia}).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (t.value(a).cols() != t.value(b).cols()) {
    throw ContractViolation("autodiff: matmul_nt inner dimensions differ");
  }
  return t.emit(t.value(a) * t.value(b).transpose(),
                [ia = a.id, ib = b.id](Tape& tp, const Mat& g) {
                  tp.accumulate(ia, g * tp.value(Var{&tp, ib}));
                  tp.accumulate(ib, g.transpose() * tp.value(Var{&tp, ia}));
                });
}

Var row(Var a, Eigen::Index i) {
  Tape& t = tape_of(a);
  const Mat& av = t.value(a);
  if (i < 0 || i >= av.rows()) throw ContractViolation("autodiff: row index out of range");
  return t.emit(av.row(i), [ia = a.id, i, r = av.rows(), c = av.cols()](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(r, c);
    full.row(i) = g;
    tp.accumulate(ia, full);
  });
}

Var entry(Var a, Eigen::Index r, Eigen::Index c) {
  Tape& t = tape_of(a);
  const Mat& av = t.value(a);
  if (r < 0 || r >= av.rows() || c < 0 || c >= av.cols()) {
    throw ContractViolation("autodiff: entry index out of range");
  }
  Mat out(1, 1);
  out(0, 0) = av(r, c);
  return t.emit(std::move(out),
                [ia = a.id, r, c, rows = av.rows(), cols = av.cols()](Tape& tp, const Mat& g) {
                  Mat full = Mat::Zero(rows, cols);
                  full(r, c) = g(0, 0);
                  tp.accumulate(ia, full);
                });
}

Var hcat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("autodiff: hcat of nothing");
  Tape& t = tape_of(parts[0]);
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (p.tape != &t) throw ContractViolation("autodiff: hcat across tapes");
    if (t.value(p).rows() != 1) throw ContractViolation("autodiff: hcat expects single rows");
    cols += t.value(p).cols();
  }
  Mat out(1, cols);
  std::vector<std::int32_t> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Mat& pv = t.value(p);
    out.block(0, offset, 1, pv.cols()) = pv;
    ids.push_back(p.id);
    widths.push_back(pv.cols());
    offset += pv.cols();
  }
  return t.emit(std::move(out), [ids, widths](Tape& tp, const Mat& g) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      tp.accumulate(ids[k], g.block(0, off, 1, widths[k]));
      off += widths[k];
    }
  });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("autodiff: vstack of nothing");
  Tape& t = tape_of(parts[0]);
  Eigen::Index rows = 0;
  const Eigen::Index cols = t.value(parts[0]).cols();
  for (Var p : parts) {
    if (p.tape != &t) throw ContractViolation("autodiff: vstack across tapes");
    if (t.value(p).cols() != cols) throw ContractViolation("autodiff: vstack width mismatch");
    rows += t.value(p).rows();
  }
  Mat out(rows, cols);
  std::vector<std::int32_t> ids;
  std::vector<Eigen::Index> heights;
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Mat& pv = t.value(p);
    out.block(offset, 0, pv.rows(), cols) = pv;
    ids.push_back(p.id);
    heights.push_back(pv.rows());
    offset += pv.rows();
  }
  return t.emit(std::move(out), [ids, heights, cols](Tape& tp, const Mat& g) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      tp.accumulate(ids[k], g.block(off, 0, heights[k], cols));
      off += heights[k];
    }
  });
}

Var mean_rows(Var a) {
  Tape& t = tape_of(a);
  const Mat& av = t.value(a);
  const double r = static_cast<double>(av.rows());
  Mat out = av.colwise().mean();
  return t.emit(std::move(out), [ia = a.id, rows = av.rows(), r](Tape& tp, const Mat& g) {
    Mat full(rows, g.cols());
    for (Eigen::Index i = 0; i < rows; ++i) full.row(i) = g.row(0) / r;
    tp.accumulate(ia, full);
  });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  const Mat& av = t.value(a);
  Mat out(1, 1);
  out(0, 0) = av.sum();
  return t.emit(std::move(out),
                [ia = a.id, rows = av.rows(), cols = av.cols()](Tape& tp, const Mat& g) {
                  tp.accumulate(ia, Mat::Constant(rows, cols, g(0, 0)));
                });
}

Var mean_all(Var a) {
  Tape& t = tape_of(a);
  const Mat& av = t.value(a);
  const double n = static_cast<double>(av.size());
  Mat out(1, 1);
  out(0, 0) = av.mean();
  return t.emit(std::move(out),
                [ia = a.id, rows = av.rows(), cols = av.cols(), n](Tape& tp, const Mat& g) {
                  tp.accumulate(ia, Mat::Constant(rows, cols, g(0, 0) / n));
                });
}

Var leaky_relu(Var a, double negative_slope) {
  Tape& t = tape_of(a);
  const Mat& av = t.value(a);
  Mat out = av.unaryExpr([&](double x) { return x > 0 ? x : negative_slope * x; });
  return t.emit(std::move(out), [ia = a.id, av, negative_slope](Tape& tp, const Mat& g) {
    Mat dx = g;
    for (Eigen::Index i = 0; i < dx.size(); ++i) {
      if (av(i) <= 0) dx(i) *= negative_slope;
    }
    tp.accumulate(ia, dx);
  });
}

Var tanh_op(Var a) {
  Tape& t = tape_of(a);
  Mat out = t.value(a).array().tanh();
  return t.emit(out, [ia = a.id, out](Tape& tp, const Mat& g) {
    tp.accumulate(ia, (g.array() * (1.0 - out.array().square())).matrix());
  });
}

Var exp_op(Var a) {
  Tape& t = tape_of(a);
  Mat out = t.value(a).array().exp();
  return t.emit(out, [ia = a.id, out](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g.cwiseProduct(out));
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Mat& av = t.value(a);
  Mat out(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const double m = av.row(i).maxCoeff();
    Eigen::ArrayXd e = (av.row(i).array() - m).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return t.emit(out, [ia = a.id, out](Tape& tp, const Mat& g) {
    Mat dx(out.rows(), out.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double dot = g.row(i).cwiseProduct(out.row(i)).sum();
      dx.row(i) = (out.row(i).array() * (g.row(i).array() - dot)).matrix();
    }
    tp.accumulate(ia, dx);
  });
}

Var masked_log_softmax_row(Var a, const std::vector<std::uint8_t>& allowed) {
  Tape& t = tape_of(a);
  const Mat& av = t.value(a);
  if (av.rows() != 1 || static_cast<std::size_t>(av.cols()) != allowed.size()) {
    throw ContractViolation("autodiff: masked_log_softmax_row expects 1xN with an N-mask");
  }
  double max_allowed = -std::numeric_limits<double>::infinity();
  std::size_t allowed_count = 0;
  for (std::size_t j = 0; j < allowed.size(); ++j) {
    if (allowed[j]) {
      ++allowed_count;
      max_allowed = std::max(max_allowed, av(0, static_cast<Eigen::Index>(j)));
    }
  }
  if (allowed_count == 0) {
    throw ContractViolation("autodiff: masked_log_softmax_row with an empty mask");
  }
  double lse = 0.0;
  for (std::size_t j = 0; j < allowed.size(); ++j) {
    if (allowed[j]) lse += std::exp(av(0, static_cast<Eigen::Index>(j)) - max_allowed);
  }
  lse = max_allowed + std::log(lse);

  Mat out(1, av.cols());
  for (std::size_t j = 0; j < allowed.size(); ++j) {
    out(0, static_cast<Eigen::Index>(j)) =
        allowed[j] ? av(0, static_cast<Eigen::Index>(j)) - lse
                   : -std::numeric_limits<double>::infinity();
  }
  return t.emit(out, [ia = a.id, out, allowed](Tape& tp, const Mat& g) {
    double gsum = 0.0;
    for (std::size_t j = 0; j < allowed.size(); ++j) {
      if (allowed[j]) gsum += g(0, static_cast<Eigen::Index>(j));
    }
    Mat dx = Mat::Zero(1, out.cols());
    for (std::size_t j = 0; j < allowed.size(); ++j) {
      if (!allowed[j]) continue;
      const Eigen::Index jj = static_cast<Eigen::Index>(j);
      dx(0, jj) = g(0, jj) - std::exp(out(0, jj)) * gsum;
    }
    tp.accumulate(ia, dx);
  });
}

Var layer_norm_rows(Var a, Var gain, Var bias, double eps) {
  Tape& t = same_tape(a, gain);
  same_tape(gain, bias);
  const Mat& av = t.value(a);
  const Mat& gv = t.value(gain);
  const Mat& bv = t.value(bias);
  if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != av.cols() || bv.cols() != av.cols()) {
    throw ContractViolation("autodiff: layer_norm gain/bias must be 1xC rows");
  }
  const Eigen::Index rows = av.rows();
  const Eigen::Index cols = av.cols();
  Mat xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mu = av.row(i).mean();
    const double var = (av.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (av.row(i).array() - mu) * inv_std(i);
  }
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    out.row(i) = xhat.row(i).cwiseProduct(gv.row(0)) + bv.row(0);
  }
  return t.emit(std::move(out),
                [ia = a.id, ig = gain.id, ib = bias.id, xhat, inv_std, gv](Tape& tp, const Mat& g) {
                  const Eigen::Index rows = xhat.rows();
                  const Eigen::Index cols = xhat.cols();
                  Mat dgain = Mat::Zero(1, cols);
                  Mat dbias = Mat::Zero(1, cols);
                  Mat dx(rows, cols);
                  for (Eigen::Index i = 0; i < rows; ++i) {
                    dgain.row(0) += g.row(i).cwiseProduct(xhat.row(i));
                    dbias.row(0) += g.row(i);
                    const Eigen::RowVectorXd gs = g.row(i).cwiseProduct(gv.row(0));
                    const double mean_gs = gs.mean();
                    const double mean_gs_xhat = gs.cwiseProduct(xhat.row(i)).mean();
                    dx.row(i) = inv_std(i) *
                                (gs.array() - mean_gs - xhat.row(i).array() * mean_gs_xhat);
                  }
                  tp.accumulate(ia, dx);
                  tp.accumulate(ig, dgain);
                  tp.accumulate(ib, dbias);
                });
}

Var dropout_mask(Var a, const Mat& keep, double keep_prob) {
  Tape& t = tape_of(a);
  check_same_shape(t.value(a), keep, "dropout_mask");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ContractViolation("autodiff: keep_prob must be in (0,1]");
  }
  Mat out = t.value(a).cwiseProduct(keep) / keep_prob;
  return t.emit(std::move(out), [ia = a.id, keep, keep_prob](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g.cwiseProduct(keep) / keep_prob);
  });
}

Var clamp_op(Var a, double lo, double hi) {
  Tape& t = tape_of(a);
  const Mat& av = t.value(a);
  Mat out = av.cwiseMax(lo).cwiseMin(hi);
  return t.emit(std::move(out), [ia = a.id, av, lo, hi](Tape& tp, const Mat& g) {
    Mat dx = g;
    for (Eigen::Index i = 0; i < dx.size(); ++i) {
      if (av(i) < lo || av(i) > hi) dx(i) = 0.0;
    }
    tp.accumulate(ia, dx);
  });
}

Var min2(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Mat& av = t.value(a);
  const Mat& bv = t.value(b);
  check_same_shape(av, bv, "min2");
  Mat out = av.cwiseMin(bv);
  return t.emit(std::move(out), [ia = a.id, ib = b.id, av, bv](Tape& tp, const Mat& g) {
    Mat da = Mat::Zero(av.rows(), av.cols());
    Mat db = Mat::Zero(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.size(); ++i) {
      if (av(i) <= bv(i)) {
        da(i) = g(i);  // ties take the first branch
      } else {
        db(i) = g(i);
      }
    }
    tp.accumulate(ia, da);
    tp.accumulate(ib, db);
  });
}

}  // namespace gmocat::ad
