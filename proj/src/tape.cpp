#include "marlrr/tape.hpp"

#include <cmath>

#include "marlrr/layers.hpp"

namespace marlrr {

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw DimensionError(std::string(op) + ": " + detail);
}

std::string dims(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

std::string dims(const Mat& a, const Mat& b) { return dims(a) + " vs " + dims(b); }

}  // namespace

Tape::Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back) {
  if (backward_done_) throw StateError("tape already differentiated; record a new pass");
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(static_cast<int>(nodes_.size()) - 1);
}

Tape::Node& Tape::node(Var v) {
  if (v.id_ < 0 || v.id_ >= static_cast<int>(nodes_.size())) {
    throw StateError("variable does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id_)];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id_ < 0 || v.id_ >= static_cast<int>(nodes_.size())) {
    throw StateError("variable does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id_)];
}

void Tape::accumulate(Var v, const Mat& g) { accumulate_expr(v, g); }

template <typename Expr>
void Tape::accumulate_expr(Var v, const Expr& g) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Tape::Var Tape::input(Mat value, bool requires_grad) {
  return push(std::move(value), requires_grad, [](Tape&, const Mat&) {});
}

Tape::Var Tape::param(const ParamStore& store, const std::string& name) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var(it->second);
  const Tensor& t = store.at(name);
  Mat value;
  if (t.rank() == 1) {
    value = Eigen::Map<const Mat>(t.data().data(), 1, t.size());
  } else if (t.rank() == 2) {
    value = t.matrix();
  } else {
    throw DimensionError("parameter '" + name + "' must be rank 1 or 2, got " +
                         shape_string(t.shape()));
  }
  Var v = push(std::move(value), true, [](Tape&, const Mat&) {});
  param_ids_.emplace(name, v.id_);
  return v;
}

const Mat& Tape::value(Var v) const { return node(v).value; }

const Mat& Tape::grad(Var v) const {
  const Node& n = node(v);
  return n.grad.size() == 0 ? empty_ : n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).needs_grad; }

Tape::Var Tape::matmul_nt(Var x, Var w) {
  const Mat& xv = value(x);
  const Mat& wv = value(w);
  require(xv.cols() == wv.cols(), "matmul_nt", dims(xv, wv));
  Mat out = xv * wv.transpose();
  return push(std::move(out), requires_grad(x) || requires_grad(w), [x, w](Tape& t, const Mat& g) {
    if (t.requires_grad(x)) t.accumulate_expr(x, g * t.value(w));
    if (t.requires_grad(w)) t.accumulate_expr(w, g.transpose() * t.value(x));
  });
}

Tape::Var Tape::matmul(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  require(av.cols() == bv.rows(), "matmul", dims(av, bv));
  Mat out = av * bv;
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate_expr(b, t.value(a).transpose() * g);
  });
}

Tape::Var Tape::add_row(Var x, Var row) {
  const Mat& xv = value(x);
  const Mat& rv = value(row);
  require(rv.rows() == 1 && rv.cols() == xv.cols(), "add_row", dims(xv, rv));
  Mat out = xv.rowwise() + rv.row(0);
  return push(std::move(out), requires_grad(x) || requires_grad(row),
              [x, row](Tape& t, const Mat& g) {
                if (t.requires_grad(x)) t.accumulate(x, g);
                if (t.requires_grad(row)) t.accumulate_expr(row, g.colwise().sum());
              });
}

Tape::Var Tape::add(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add",
          dims(value(a), value(b)));
  Mat out = value(a) + value(b);
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "sub",
          dims(value(a), value(b)));
  Mat out = value(a) - value(b);
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate_expr(b, -g);
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "mul",
          dims(value(a), value(b)));
  Mat out = value(a).cwiseProduct(value(b));
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate_expr(b, g.cwiseProduct(t.value(a)));
  });
}

Tape::Var Tape::scale(Var x, double c) {
  Mat out = value(x) * c;
  return push(std::move(out), requires_grad(x),
              [x, c](Tape& t, const Mat& g) { t.accumulate_expr(x, g * c); });
}

Tape::Var Tape::add_scalar(Var x, double c) {
  Mat out = value(x).array() + c;
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Mat& g) { t.accumulate(x, g); });
}

Tape::Var Tape::relu(Var x) {
  Mat out = value(x).cwiseMax(0.0);
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Mat& g) {
    t.accumulate_expr(x, (t.value(x).array() > 0.0).select(g, 0.0));
  });
}

Tape::Var Tape::sigmoid(Var x) {
  Mat out = value(x).unaryExpr([](double v) { return sigmoid_scalar(v); });
  Var v = push(std::move(out), requires_grad(x), {});
  if (requires_grad(x)) {
    const int id = v.id();
    node(v).back = [x, id](Tape& t, const Mat& g) {
      const Mat& s = t.nodes_[static_cast<std::size_t>(id)].value;
      t.accumulate_expr(x, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
    };
  }
  return v;
}

Tape::Var Tape::tanh(Var x) {
  Mat out = value(x).array().tanh().matrix();
  Var v = push(std::move(out), requires_grad(x), {});
  if (requires_grad(x)) {
    const int id = v.id();
    node(v).back = [x, id](Tape& t, const Mat& g) {
      const Mat& y = t.nodes_[static_cast<std::size_t>(id)].value;
      t.accumulate_expr(x, g.cwiseProduct((1.0 - y.array().square()).matrix()));
    };
  }
  return v;
}

Tape::Var Tape::elu(Var x) {
  Mat out = value(x).unaryExpr([](double v) { return elu_scalar(v); });
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    t.accumulate_expr(x, (xv.array() > 0.0).select(g.array(), g.array() * xv.array().exp()).matrix());
  });
}

Tape::Var Tape::abs(Var x) {
  Mat out = value(x).cwiseAbs();
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Mat& g) {
    // Subgradient 0 at the kink.
    t.accumulate_expr(x, g.cwiseProduct(t.value(x).unaryExpr([](double v) {
      return static_cast<double>((v > 0.0) - (v < 0.0));
    })));
  });
}

Tape::Var Tape::square(Var x) {
  Mat out = value(x).array().square().matrix();
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Mat& g) {
    t.accumulate_expr(x, 2.0 * g.cwiseProduct(t.value(x)));
  });
}

Tape::Var Tape::slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  const Mat& xv = value(x);
  require(start >= 0 && count >= 0 && start + count <= xv.cols(), "slice_cols",
          dims(xv) + " slice " + std::to_string(start) + "+" + std::to_string(count));
  Mat out = xv.middleCols(start, count);
  return push(std::move(out), requires_grad(x), [x, start, count](Tape& t, const Mat& g) {
    Node& n = t.node(x);
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad.middleCols(start, count) += g;
  });
}

Tape::Var Tape::slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
  const Mat& xv = value(x);
  require(start >= 0 && count >= 0 && start + count <= xv.rows(), "slice_rows",
          dims(xv) + " slice " + std::to_string(start) + "+" + std::to_string(count));
  Mat out = xv.middleRows(start, count);
  return push(std::move(out), requires_grad(x), [x, start, count](Tape& t, const Mat& g) {
    Node& n = t.node(x);
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad.middleRows(start, count) += g;
  });
}

Tape::Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols", "no parts");
  const Eigen::Index rows = value(parts.front()).rows();
  Eigen::Index cols = 0;
  bool needs = false;
  for (Var p : parts) {
    require(value(p).rows() == rows, "concat_cols", dims(value(parts.front()), value(p)));
    cols += value(p).cols();
    needs = needs || requires_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  return push(std::move(out), needs, [parts](Tape& t, const Mat& g) {
    Eigen::Index offset = 0;
    for (Var p : parts) {
      const Eigen::Index c = t.value(p).cols();
      if (t.requires_grad(p)) t.accumulate_expr(p, g.middleCols(offset, c));
      offset += c;
    }
  });
}

Tape::Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows", "no parts");
  const Eigen::Index cols = value(parts.front()).cols();
  Eigen::Index rows = 0;
  bool needs = false;
  for (Var p : parts) {
    require(value(p).cols() == cols, "concat_rows", dims(value(parts.front()), value(p)));
    rows += value(p).rows();
    needs = needs || requires_grad(p);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  return push(std::move(out), needs, [parts](Tape& t, const Mat& g) {
    Eigen::Index offset = 0;
    for (Var p : parts) {
      const Eigen::Index r = t.value(p).rows();
      if (t.requires_grad(p)) t.accumulate_expr(p, g.middleRows(offset, r));
      offset += r;
    }
  });
}

Tape::Var Tape::reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
  const Mat& xv = value(x);
  require(rows * cols == xv.size(), "reshape", dims(xv) + " to " + std::to_string(rows) + "x" +
                                                   std::to_string(cols));
  Mat out = Eigen::Map<const Mat>(xv.data(), rows, cols);
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Mat& g) {
    const Mat& xv2 = t.value(x);
    t.accumulate_expr(x, Eigen::Map<const Mat>(g.data(), xv2.rows(), xv2.cols()));
  });
}

Tape::Var Tape::gather_cols(Var x, const std::vector<int>& index) {
  const Mat& xv = value(x);
  require(static_cast<Eigen::Index>(index.size()) == xv.rows(), "gather_cols",
          dims(xv) + " with " + std::to_string(index.size()) + " indices");
  Mat out(xv.rows(), 1);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const int c = index[static_cast<std::size_t>(r)];
    require(c >= 0 && c < xv.cols(), "gather_cols", "index " + std::to_string(c) + " out of range");
    out(r, 0) = xv(r, c);
  }
  return push(std::move(out), requires_grad(x), [x, index](Tape& t, const Mat& g) {
    Node& n = t.node(x);
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) n.grad(r, index[static_cast<std::size_t>(r)]) += g(r, 0);
  });
}

Tape::Var Tape::max_cols(Var x, const Mat* mask) {
  const Mat& xv = value(x);
  if (mask) require(mask->rows() == xv.rows() && mask->cols() == xv.cols(), "max_cols", dims(xv, *mask));
  std::vector<int> arg(static_cast<std::size_t>(xv.rows()), -1);
  Mat out(xv.rows(), 1);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    int best = -1;
    for (Eigen::Index c = 0; c < xv.cols(); ++c) {
      if (mask && (*mask)(r, c) == 0.0) continue;
      if (best < 0 || xv(r, c) > xv(r, best)) best = static_cast<int>(c);
    }
    if (best < 0) throw ContractViolation("max_cols: row " + std::to_string(r) + " fully masked");
    arg[static_cast<std::size_t>(r)] = best;
    out(r, 0) = xv(r, best);
  }
  return push(std::move(out), requires_grad(x), [x, arg](Tape& t, const Mat& g) {
    Node& n = t.node(x);
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) n.grad(r, arg[static_cast<std::size_t>(r)]) += g(r, 0);
  });
}

Tape::Var Tape::row_sum(Var x) {
  Mat out = value(x).rowwise().sum();
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Mat& g) {
    const Eigen::Index cols = t.value(x).cols();
    t.accumulate_expr(x, g.replicate(1, cols));
  });
}

Tape::Var Tape::row_dot(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "row_dot",
          dims(value(a), value(b)));
  Mat out = value(a).cwiseProduct(value(b)).rowwise().sum();
  return push(std::move(out), requires_grad(a) || requires_grad(b), [a, b](Tape& t, const Mat& g) {
    const Eigen::Index cols = t.value(a).cols();
    if (t.requires_grad(a)) t.accumulate_expr(a, t.value(b).cwiseProduct(g.replicate(1, cols)));
    if (t.requires_grad(b)) t.accumulate_expr(b, t.value(a).cwiseProduct(g.replicate(1, cols)));
  });
}

Tape::Var Tape::sum(Var x) {
  Mat out(1, 1);
  out(0, 0) = value(x).sum();
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    t.accumulate_expr(x, Mat::Constant(xv.rows(), xv.cols(), g(0, 0)));
  });
}

Tape::Var Tape::batched_vecmat(Var u, Var w, Eigen::Index width) {
  const Mat& uv = value(u);
  const Mat& wv = value(w);
  const Eigen::Index n = uv.cols();
  require(wv.rows() == uv.rows() && wv.cols() == n * width, "batched_vecmat", dims(uv, wv));
  Mat out = Mat::Zero(uv.rows(), width);
  for (Eigen::Index b = 0; b < uv.rows(); ++b) {
    for (Eigen::Index i = 0; i < n; ++i) out.row(b) += uv(b, i) * wv.row(b).segment(i * width, width);
  }
  return push(std::move(out), requires_grad(u) || requires_grad(w),
              [u, w, width](Tape& t, const Mat& g) {
                const Mat& uv2 = t.value(u);
                const Mat& wv2 = t.value(w);
                const Eigen::Index n2 = uv2.cols();
                if (t.requires_grad(u)) {
                  Mat gu(uv2.rows(), n2);
                  for (Eigen::Index b = 0; b < uv2.rows(); ++b)
                    for (Eigen::Index i = 0; i < n2; ++i)
                      gu(b, i) = g.row(b).dot(wv2.row(b).segment(i * width, width));
                  t.accumulate(u, gu);
                }
                if (t.requires_grad(w)) {
                  Mat gw(wv2.rows(), wv2.cols());
                  for (Eigen::Index b = 0; b < uv2.rows(); ++b)
                    for (Eigen::Index i = 0; i < n2; ++i)
                      gw.row(b).segment(i * width, width) = uv2(b, i) * g.row(b);
                  t.accumulate(w, gw);
                }
              });
}

Tape::Var Tape::masked_mean_square(Var x, const Mat& target, const Mat& mask) {
  const Mat& xv = value(x);
  require(target.rows() == xv.rows() && target.cols() == xv.cols(), "masked_mean_square",
          dims(xv, target));
  require(mask.rows() == xv.rows() && mask.cols() == xv.cols(), "masked_mean_square",
          dims(xv, mask));
  const double count = mask.sum();
  if (!(count > 0.0)) throw ContractViolation("masked_mean_square: empty mask");
  Mat diff = (xv - target).cwiseProduct(mask);
  Mat out(1, 1);
  out(0, 0) = diff.cwiseProduct(xv - target).sum() / count;
  return push(std::move(out), requires_grad(x), [x, diff, count](Tape& t, const Mat& g) {
    t.accumulate_expr(x, diff * (2.0 * g(0, 0) / count));
  });
}

void Tape::backward(Var root) {
  if (nodes_.empty()) throw StateError("backward called without a recorded forward pass");
  if (backward_done_) throw StateError("backward already run on this tape");
  Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw DimensionError("backward root must be scalar, got " + dims(r.value));
  }
  backward_done_ = true;
  if (!r.needs_grad) return;
  r.grad = Mat::Ones(1, 1);
  for (int id = root.id_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
    n.back(*this, n.grad);
  }
}

GradStore Tape::gradients(const ParamStore& params) const {
  if (!backward_done_) throw StateError("gradients requested before backward");
  GradStore grads(params);
  for (auto& [name, t] : grads.entries()) {
    auto it = param_ids_.find(name);
    if (it == param_ids_.end()) continue;
    const Node& n = nodes_[static_cast<std::size_t>(it->second)];
    if (n.grad.size() == 0) continue;
    t.data() = Eigen::Map<const Vec>(n.grad.data(), n.grad.size());
  }
  return grads;
}

}  // namespace marlrr
