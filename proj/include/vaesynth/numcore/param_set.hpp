#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/tensor.hpp"

namespace vaesynth::numcore {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;  // carries the gradient buffer
    Tensor<T> m;      // first moment
    Tensor<T> v;      // second moment
};

/// Named parameters in insertion order, plus Adam moment buffers for each.
template <typename T>
class ParamSet {
   public:
    Tensor<T>& add(std::string name, Tensor<T> value) {
        if (find(name) != nullptr) throw ValidationError("duplicate parameter name '" + name + "'");
        Param<T> p{std::move(name), std::move(value), {}, {}};
        p.m = Tensor<T>(p.value.shape());
        p.v = Tensor<T>(p.value.shape());
        params_.push_back(std::move(p));
        return params_.back().value;
    }

    Param<T>* find(const std::string& name) {
        for (auto& p : params_) {
            if (p.name == name) return &p;
        }
        return nullptr;
    }
    const Param<T>* find(const std::string& name) const {
        for (const auto& p : params_) {
            if (p.name == name) return &p;
        }
        return nullptr;
    }

    Tensor<T>& at(const std::string& name) {
        auto* p = find(name);
        if (p == nullptr) throw ValidationError("no parameter named '" + name + "'");
        return p->value;
    }
    const Tensor<T>& at(const std::string& name) const {
        const auto* p = find(name);
        if (p == nullptr) throw ValidationError("no parameter named '" + name + "'");
        return p->value;
    }

    std::size_t size() const noexcept { return params_.size(); }
    bool empty() const noexcept { return params_.empty(); }

    std::size_t element_count() const noexcept {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    /// Sum of squares over every parameter element, accumulated in double.
    double sum_squares() const noexcept {
        double acc = 0.0;
        for (const auto& p : params_) {
            for (T v : p.value.data()) acc += static_cast<double>(v) * static_cast<double>(v);
        }
        return acc;
    }

    void zero_grad() {
        for (auto& p : params_) p.value.zero_grad();
    }
    void drop_grad() {
        for (auto& p : params_) p.value.drop_grad();
    }

    void reset_optimizer_state() {
        for (auto& p : params_) {
            p.m = Tensor<T>(p.value.shape());
            p.v = Tensor<T>(p.value.shape());
        }
    }

    auto begin() noexcept { return params_.begin(); }
    auto end() noexcept { return params_.end(); }
    auto begin() const noexcept { return params_.begin(); }
    auto end() const noexcept { return params_.end(); }

    /// Values only; moment buffers are not compared.
    bool same_values(const ParamSet& other) const {
        if (params_.size() != other.params_.size()) return false;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value)) {
                return false;
            }
        }
        return true;
    }

   private:
    std::vector<Param<T>> params_;
};

}  // namespace vaesynth::numcore
