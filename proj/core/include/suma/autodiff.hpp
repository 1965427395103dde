#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "suma/matrix.hpp"
#include "suma/rng.hpp"
#include "suma/tokenizer.hpp"

namespace suma::autodiff {

/// A named trainable matrix with a gradient accumulator of the same shape.
struct Parameter {
    std::string name;
    RealMatrix value;
    RealMatrix grad;

    Parameter() = default;
    Parameter(std::string n, RealMatrix v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

    void zero_grad() {
        for (double& g : grad.flat()) g = 0.0;
    }
};

using NodeId = std::size_t;

/// Reverse-mode tape over matrix-valued operations. Each op records its
/// cached intermediates in a backward closure; backward() walks the nodes in
/// reverse creation order (a valid topological order by construction) and
/// flushes leaf gradients into their Parameter accumulators. Frozen inputs
/// enter through constant() and never receive gradients.
class Tape {
public:
    NodeId constant(RealMatrix value);
    NodeId parameter(Parameter& p);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId silu(NodeId a);
    /// Row-wise layer norm with 1 x d gain and bias parameters.
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias);
    /// Adds table rows 0..seq-1 to the corresponding rows of x.
    NodeId add_position_rows(NodeId x, NodeId table);
    /// Fused causal/full multihead attention: projections, per-head softmax
    /// mixing, output projection.
    NodeId attention(NodeId x, NodeId wq, NodeId wk, NodeId wv, NodeId wo, std::size_t n_heads,
                     bool causal);
    /// Mean next-token negative log-likelihood; returns a 1 x 1 node.
    NodeId cross_entropy(NodeId logits, std::vector<TokenId> targets);

    const RealMatrix& value(NodeId id) const { return nodes_[id].value; }
    std::size_t size() const { return nodes_.size(); }

    void backward(NodeId loss_node);

private:
    struct Node {
        RealMatrix value;
        RealMatrix grad;
        Parameter* param = nullptr;
        std::function<void(Tape&)> backward_fn;
    };
    std::vector<Node> nodes_;

    NodeId push(RealMatrix value);
    RealMatrix& grad(NodeId id) { return nodes_[id].grad; }
    friend struct TapeAccess;
};

/// Max relative error between recorded parameter gradients and central finite
/// differences of loss_fn, over n_coords coordinates sampled across all
/// parameter groups. loss_fn must recompute the primal from current values.
double finite_difference_max_rel_error(std::span<Parameter* const> params,
                                       const std::function<double()>& loss_fn,
                                       std::size_t n_coords, double step, Rng& rng);

}  // namespace suma::autodiff
