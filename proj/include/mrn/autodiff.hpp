#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mrn/tensor.hpp"

namespace mrn {

// Primitive set of the computation graph. Deliberately small: dense affine,
// 3x3 convolution, relu, 2x pooling and duplication, add, scalar scale,
// channel concat, and the two scalar reductions the losses need.
enum class Op {
    leaf,
    linear,
    conv2d,
    relu,
    avg_pool_2x2,
    upsample_duplicate_2x,
    add,
    scale,
    concat_channels,
    mse_loss,
    frobenius_norm,
};

const char* op_name(Op op);

using ValueId = int;

struct GraphNode {
    Op op = Op::leaf;
    std::vector<ValueId> parents;
    Tensor value;
    Tensor grad;             // valid only when has_grad is set by backward()
    bool has_grad = false;
    bool requires_grad = false;
    double attr = 0.0;       // scale factor for Op::scale
};

// Tape-style computation graph. Nodes are appended in evaluation order, so
// the creation sequence is already a topological order; backward walks it in
// reverse and accumulates parent gradients left to right.
class Graph {
  public:
    ValueId leaf(Tensor v);                 // honours v.requires_grad
    ValueId constant(Tensor v);             // requires_grad forced off
    ValueId parameter(Tensor v);            // requires_grad forced on

    // y = W x + b. Rank-1 x gives a plain affine map; rank-3 x (C,H,W) mixes
    // channels per pixel, the 1x1-convolution reading of a dense layer.
    ValueId linear(ValueId x, ValueId W, ValueId b);
    // 3x3 convolution, stride 1, zero padding; x (C,H,W), k (Co,C,3,3), b (Co).
    ValueId conv2d(ValueId x, ValueId k, ValueId b);
    ValueId relu(ValueId x);
    // Halves every spatial dim of size > 1 (must be even); size-1 dims stay.
    ValueId avg_pool_2x2(ValueId x);
    // Duplicates every spatial dim of size > 1; exact right inverse of the
    // pooling above, so pool(upsample(x)) == x for every input.
    ValueId upsample_duplicate_2x(ValueId x);
    // Same op with the duplicated axes chosen by the caller rather than
    // inferred from the sizes; the way to grow a single-cell grid.
    ValueId upsample_duplicate_2x(ValueId x, bool dup_h, bool dup_w);
    ValueId add(ValueId a, ValueId b);
    ValueId scale(ValueId x, double factor);
    ValueId concat_channels(ValueId a, ValueId b);
    ValueId mse_loss(ValueId pred, ValueId target);
    ValueId frobenius_norm(ValueId x);

    const Tensor& value(ValueId id) const { return node(id).value; }
    const GraphNode& node(ValueId id) const;
    int size() const { return static_cast<int>(nodes_.size()); }

    // Overwrites a leaf's value (shape must match), e.g. between forward
    // passes of an optimization loop.
    void set_value(ValueId id, Tensor v);

    // Recomputes every node up to root from current leaf values and returns
    // the root's value.
    Tensor eval(ValueId root);

    // Populates grads of every requires_grad node reachable from loss. The
    // loss must be scalar; its own grad is seeded with 1.
    void backward(ValueId loss);

    const Tensor& grad(ValueId id) const;
    bool has_grad(ValueId id) const { return node(id).has_grad; }

  private:
    GraphNode& mutable_node(ValueId id);
    Tensor compute(const GraphNode& n) const;
    ValueId push(GraphNode n);

    std::vector<GraphNode> nodes_;
};

// Builds a scalar loss from a single variable input; used by grad_check.
using GraphBuilder = std::function<ValueId(Graph&, ValueId)>;

// Compares reverse-mode gradients against central finite differences
// coordinate by coordinate and returns the maximum relative error, with
// denominator max(|analytic|, |numeric|, 1e-8). Throws NumericError if either
// side is NaN or Inf.
double grad_check(const GraphBuilder& f, const Tensor& x, double eps = 1e-5);

// --- Optimizers ---------------------------------------------------------

struct SgdConfig {
    double lr = 1e-2;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment estimates, one slot per parameter, plus the step count
// used for bias correction.
struct AdamState {
    std::vector<arrayd> m;
    std::vector<arrayd> v;
    long t = 0;
};

void sgd_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
              const SgdConfig& cfg);
void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace mrn
