#pragma once

#include <map>
#include <string>
#include <vector>

#include "drape/tensor.hpp"

namespace drape {

// A trainable tensor. Lives outside any tape; each training step binds it as
// a leaf, pulls the leaf gradient back after backward, then the optimizer
// consumes the accumulated gradient.
struct Param {
    std::string name;
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;
    bool frozen = false;

    Param() = default;
    Param(std::string n, const Shape& s, std::vector<float> v)
        : name(std::move(n)), shape(s), value(std::move(v)), grad(shape.count(), 0.0f) {
        if (static_cast<int>(value.size()) != shape.count())
            throw std::runtime_error("param " + name + ": " + std::to_string(value.size()) +
                                     " values for shape " + shape.str());
    }
};

void zero_grad(const std::vector<Param*>& params);

// Binds params as tape leaves and routes tape gradients back into Param::grad.
template <typename T>
class BoundParams {
  public:
    typename TapeT<T>::Id bind(TapeT<T>& tape, Param& p) {
        std::vector<T> v(p.value.begin(), p.value.end());
        auto id = tape.leaf(p.shape, std::move(v), !p.frozen);
        bound_.emplace_back(&p, id);
        return id;
    }
    void pull_grads(const TapeT<T>& tape) {
        for (auto& [p, id] : bound_) {
            if (p->frozen) continue;
            const auto& g = tape.grad(id);
            for (size_t i = 0; i < g.size(); ++i) p->grad[i] += static_cast<float>(g[i]);
        }
    }

  private:
    std::vector<std::pair<Param*, typename TapeT<T>::Id>> bound_;
};

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Bias-corrected Adam. Moment state is keyed by parameter name, so the
// update sequence is independent of pointer identity.
class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<Param*>& params);
    int64_t steps_taken() const { return t_; }

  private:
    struct Moments {
        std::vector<float> m, v;
    };
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace drape
