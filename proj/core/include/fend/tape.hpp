#pragma once

#include <cstdint>
#include <vector>

#include "fend/tensor.hpp"

namespace fend::num {

// Reverse-mode autodiff tape. Ops evaluate eagerly; backward() replays the
// recorded program in reverse, accumulating gradients additively (tensors may
// be reused as inputs any number of times; weight sharing across timesteps
// relies on this).
//
// Every forward op validates that its output is finite and throws
// NumericError otherwise.
class Tape {
 public:
  using Id = std::int32_t;
  static constexpr Id kNone = -1;

  // Leaves. `param` marks the tensor as a gradient target.
  Id param(Tensor t);
  Id constant(Tensor t);

  // Elementwise on same-shape tensors.
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double c);
  Id add_const(Id a, double c);
  Id tanh(Id a);
  Id sigmoid(Id a);
  Id sqrt(Id a);

  // [m x k] * [k x n] -> [m x n]
  Id matmul(Id a, Id b);
  // [r x d] * [s x d]^T -> [r x s]
  Id matmul_nt(Id a, Id b);
  // x:[r x in], w:[out x in], b:[out] or kNone -> [r x out]
  Id linear(Id x, Id w, Id b);

  // [r x n] -> [r]
  Id row_sum(Id x);
  // log(sum(exp(row))) per row, max-shifted: [r x n] -> [r]
  Id lse_rows(Id x);
  // sum(w ∘ x) with constant weights -> scalar
  Id weighted_sum(Id x, Tensor w);
  Id sum(Id x);
  Id mean(Id x);

  // Normalizes to zero mean / unit variance with eps=1e-5 inside the sqrt,
  // no learned affine. Accepts [n] (whole vector) or [r x n] (per row);
  // n >= 2 required.
  Id layer_norm(Id x);

  // x:[r x n] divided row-wise by d:[r]; also [n] / scalar [1].
  Id div_rows(Id x, Id d);

  // x:[r x T x Cin], w:[Cout x Cin x k] (k odd), b:[Cout] or kNone
  // -> [r x T x Cout], zero-padded "same" convolution over the T axis.
  Id conv1d_same(Id x, Id w, Id b);
  // [r x T x C] -> [r x C] at time t.
  Id time_slice(Id x, std::size_t t);
  // columns [lo, hi) of [r x c] -> [r x (hi-lo)]
  Id col_slice(Id x, std::size_t lo, std::size_t hi);

  // Backward pass from a scalar loss. May be called once per tape.
  void backward(Id loss);

  const Tensor& val(Id id) const { return nodes_[id].val; }
  // Valid after backward(); zeros for nodes the loss does not reach.
  const Tensor& grad(Id id) const { return grads_[id]; }
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf, kAdd, kSub, kMul, kScale, kAddConst, kTanh, kSigmoid, kSqrt,
    kMatmul, kMatmulNT, kLinear, kRowSum, kLseRows, kWeightedSum, kSum,
    kLayerNorm, kDivRows, kConv1d, kTimeSlice, kColSlice,
  };

  struct Node {
    Op op;
    Id a = kNone, b = kNone, c = kNone;
    double scalar = 0.0;   // Scale/AddConst factor
    std::size_t lo = 0, hi = 0;  // TimeSlice index / ColSlice range
    Tensor val;
    Tensor aux;            // op-specific cache (weights, row stats, ...)
  };

  Id push(Node n, const char* opname);
  void check(Id id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool ran_backward_ = false;
};

}  // namespace fend::num
