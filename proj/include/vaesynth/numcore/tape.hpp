#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/ops.hpp"
#include "vaesynth/numcore/tensor.hpp"

namespace vaesynth::numcore {

/// Records a straight-line program over the fixed operator set and replays it in
/// reverse. Parameter leaves reference tensors owned elsewhere (a ParamSet) and
/// receive their gradient additively in that tensor's grad buffer.
template <typename T>
class Tape {
   public:
    using Var = std::size_t;

    Var constant(Tensor<T> value) {
        Node n;
        n.owned = std::move(value);
        n.owned.drop_grad();
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    /// Trainable leaf; `param` must outlive the tape.
    Var parameter(Tensor<T>& param) {
        Node n;
        n.ref = &param;
        n.grad_target = &param;
        n.needs_grad = true;
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    /// Read-only leaf without a copy; `value` must outlive the tape.
    Var reference(const Tensor<T>& value) {
        Node n;
        n.ref = &value;
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    Var apply(OpKind kind, std::vector<Var> inputs, OpAttrs attrs = {}) {
        TensorRefs<T> refs;
        bool needs = false;
        for (Var v : inputs) {
            refs.push_back(&value(v));
            needs = needs || nodes_.at(v).needs_grad;
        }
        Node n;
        n.owned = op_forward<T>(kind, refs, attrs);
        n.kind = kind;
        n.inputs = std::move(inputs);
        n.attrs = std::move(attrs);
        n.needs_grad = needs;
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    const Tensor<T>& value(Var v) const {
        const Node& n = nodes_.at(v);
        return n.ref != nullptr ? *n.ref : n.owned;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Reverse sweep from a scalar root with seed gradient 1.
    void backward(Var root) {
        if (value(root).numel() != 1) {
            throw ShapeError("backward root must be scalar, got " + shape_str(value(root).shape()));
        }
        std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
        grads[root] = Tensor<T>(value(root).shape(), T{1});
        for (Var i = root + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!grads[i] || !n.needs_grad) continue;
            if (n.grad_target != nullptr) {
                if (!n.grad_target->has_grad()) n.grad_target->zero_grad();
                auto dst = n.grad_target->grad();
                const auto src = grads[i]->data();
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
                continue;
            }
            if (!n.kind) continue;
            TensorRefs<T> refs;
            for (Var v : n.inputs) refs.push_back(&value(v));
            auto in_grads = op_backward<T>(*n.kind, refs, n.attrs, *grads[i], &n.owned);
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                const Var src = n.inputs[k];
                if (!nodes_[src].needs_grad) continue;
                if (!grads[src]) {
                    grads[src] = std::move(in_grads[k]);
                } else {
                    auto dst = grads[src]->data();
                    const auto add = in_grads[k].data();
                    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += add[e];
                }
            }
            grads[i].reset();
        }
    }

   private:
    struct Node {
        std::optional<OpKind> kind;
        std::vector<Var> inputs;
        OpAttrs attrs;
        Tensor<T> owned;
        const Tensor<T>* ref = nullptr;
        Tensor<T>* grad_target = nullptr;
        bool needs_grad = false;
    };

    std::vector<Node> nodes_;
};

}  // namespace vaesynth::numcore
