#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ivfuse/tensor.hpp"

namespace ivfuse::nn {

// Reverse-mode automatic differentiation over Tensor-valued expressions.
//
// Every operation builds a Node holding the forward value plus a closure
// that scatters the node's gradient into its inputs. A leaf created from a
// parameter keeps accumulating into its `grad` slot across backward calls
// until zeroed, which is what the optimizer reads. Leaves with
// `requires_grad == false` (constants, frozen parameters) terminate
// propagation, and interior nodes that depend on no differentiable leaf
// skip closure bookkeeping entirely.

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backprop;  // reads this->grad, writes inputs' grads
  uint64_t seq = 0;                     // creation order, used for topo sort

  Tensor& ensure_grad();
};

class Value {
 public:
  Value() = default;
  explicit Value(NodePtr n) : n_(std::move(n)) {}

  static Value leaf(Tensor t, bool requires_grad);
  static Value constant(Tensor t) { return leaf(std::move(t), false); }
  static Value scalar(double v) { return constant(Tensor::scalar(v)); }

  bool defined() const { return n_ != nullptr; }
  const Tensor& val() const { return n_->value; }
  const Tensor& grad() const { return n_->grad; }
  const NodePtr& node() const { return n_; }
  const std::vector<int>& shape() const { return n_->value.shape; }
  double item() const { return n_->value.data[0]; }

 private:
  NodePtr n_;
};

// Seeds the (scalar) root with `seed` and propagates to every reachable
// differentiable leaf. Gradients accumulate; call ParamTree::zero_grad
// between optimizer steps.
void backward(const Value& root, double seed = 1.0);

// --- elementwise / shape ops -------------------------------------------

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);             // elementwise
Value affine(const Value& x, double mul, double off);  // mul*x + off
Value tanh_op(const Value& x);
Value relu(const Value& x);
Value leaky_relu(const Value& x, double slope);
Value concat_channels(const std::vector<Value>& xs);     // {Ci,H,W} -> {sum Ci,H,W}
Value slice_channels(const Value& x, int begin, int count);
Value permute_channels(const Value& x, const std::vector<int>& perm);
Value detach(const Value& x);     // value copy, gradient barrier
Value reduce_sum(const Value& x); // -> scalar

// 2-d convolution, stride 1, odd square kernel, replicate padding so the
// spatial size is preserved. x {Cin,H,W}, w {Cout,Cin,K,K}, b {Cout}.
Value conv2d(const Value& x, const Value& w, const Value& b);

// Fixed-kernel Laplacian [[0,1,0],[1,-4,1],[0,1,0]], replicate padding.
// Accepts {H,W} or {1,H,W}; output has the input's shape.
Value laplacian(const Value& x);
Tensor laplacian(const Tensor& x);

// --- channel attention primitives --------------------------------------

// gram(a,b)[i][j] = inv_scale * sum_{h,w} a[i]·b[j]; {C,H,W}² -> {C,C}.
Value gram(const Value& a, const Value& b, double inv_scale);
Value softmax_rows(const Value& a);            // rowwise softmax of {R,C}
Value channel_mix(const Value& a, const Value& v);  // {C,C}·{C,H,W} -> {C,H,W}

// --- scalar objectives ---------------------------------------------------

// Mean absolute difference (the resolution-independent ‖·‖₁ used by every
// objective). Subgradient at zero difference is 0.
Value l1_mean(const Value& a, const Value& b);
Value l1_mean(const Value& a, const Tensor& b);
Value l1_mean(const Tensor& a, const Value& b);

// KL(p‖q̂) where p is the fixed target image and q̂ the variable image,
// both turned into distributions by adding eps and normalizing to unit
// pixel sum. Natural log. Gradient flows into q only.
Value kl_from_target(const Tensor& p_img, const Value& q_img, double eps);

}  // namespace ivfuse::nn
