#include "drape/adam.hpp"

#include <cmath>

namespace drape {

void zero_grad(const std::vector<Param*>& params) {
    for (Param* p : params) p->grad.assign(p->value.size(), 0.0f);
}

void Adam::step(const std::vector<Param*>& params) {
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (Param* p : params) {
        if (p->frozen) continue;
        auto& mo = state_[p->name];
        if (mo.m.empty()) {
            mo.m.assign(p->value.size(), 0.0f);
            mo.v.assign(p->value.size(), 0.0f);
        }
        for (size_t i = 0; i < p->value.size(); ++i) {
            float g = p->grad[i];
            mo.m[i] = static_cast<float>(b1) * mo.m[i] + (1.0f - static_cast<float>(b1)) * g;
            mo.v[i] = static_cast<float>(b2) * mo.v[i] + (1.0f - static_cast<float>(b2)) * g * g;
            float mhat = mo.m[i] / static_cast<float>(bc1);
            float vhat = mo.v[i] / static_cast<float>(bc2);
            p->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace drape
