#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "marlrr/tensor.hpp"

namespace marlrr {

/// Reverse-mode gradient tape over row-major matrices.
///
/// Every operation evaluates eagerly and appends a node; `backward` walks the
/// nodes in reverse creation order. A tape is rebuilt for every forward pass.
/// Parameters enter through `param`, which registers one leaf per name and
/// accumulates its gradient under that name.
class Tape {
 public:
  class Var {
   public:
    Var() = default;
    bool valid() const { return id_ >= 0; }
    int id() const { return id_; }

   private:
    friend class Tape;
    explicit Var(int id) : id_(id) {}
    int id_ = -1;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Constant leaf. With `requires_grad` its gradient is readable after backward.
  Var input(Mat value, bool requires_grad = false);
  /// Parameter leaf for `store[name]`; repeated calls with the same name reuse the leaf.
  /// Rank-1 parameters become 1×n rows, rank-2 stay out×in.
  Var param(const ParamStore& store, const std::string& name);

  const Mat& value(Var v) const;
  /// Gradient of the last backward's root with respect to `v` (zeros if unreached).
  const Mat& grad(Var v) const;
  bool requires_grad(Var v) const;

  // Linear algebra.
  Var matmul_nt(Var x, Var w);   // x · wᵀ
  Var matmul(Var a, Var b);      // a · b
  Var add_row(Var x, Var row);   // x + 1·row (row broadcast)

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double c);
  Var add_scalar(Var x, double c);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var elu(Var x);
  Var abs(Var x);
  Var square(Var x);

  // Structural.
  Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
  Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var reshape(Var x, Eigen::Index rows, Eigen::Index cols);

  // Reductions.
  Var gather_cols(Var x, const std::vector<int>& index);  // [R×C] -> [R×1]
  /// Row-wise max over columns where `mask` is nonzero; lowest index wins ties.
  Var max_cols(Var x, const Mat* mask = nullptr);
  Var row_sum(Var x);
  Var row_dot(Var a, Var b);
  Var sum(Var x);
  /// out[b, e] = Σ_i u[b, i] · w[b, i·width + e]; u is [B×n], w is [B×(n·width)].
  Var batched_vecmat(Var u, Var w, Eigen::Index width);
  /// Σ mask·(x − target)² / Σ mask as a 1×1 value.
  Var masked_mean_square(Var x, const Mat& target, const Mat& mask);

  /// Seeds d(root)/d(root) = 1 and propagates. Root must be 1×1.
  void backward(Var root);
  bool has_backward() const { return backward_done_; }

  /// Gradients for every entry of `params`; names never touched get zeros.
  GradStore gradients(const ParamStore& params) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&, const Mat&)> back;
  };

  Var push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back = {});
  Node& node(Var v);
  const Node& node(Var v) const;
  void accumulate(Var v, const Mat& g);
  template <typename Expr>
  void accumulate_expr(Var v, const Expr& g);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_ids_;
  bool backward_done_ = false;
  Mat empty_;
};

}  // namespace marlrr
