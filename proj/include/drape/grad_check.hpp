#pragma once

#include <algorithm>
#include <utility>

#include "drape/tensor.hpp"

namespace drape {

struct GradCheck {
    double max_rel_err = 0.0;
    int checked = 0;
};

// Central-difference oracle in f64. `build(tape, leaf_ids)` constructs the
// graph from the given leaves and returns a scalar node; it runs once with
// gradients enabled and then twice per perturbed element. The relative error
// denominator is floored at 1 so near-zero gradients are compared absolutely.
template <typename Builder>
GradCheck check_gradients(const std::vector<std::pair<Shape, std::vector<double>>>& leaves,
                          Builder&& build, double h = 1e-4) {
    TapeF64 tape;
    std::vector<int> ids;
    ids.reserve(leaves.size());
    for (const auto& [s, v] : leaves) ids.push_back(tape.leaf(s, v, true));
    int loss = build(tape, ids);
    tape.backward(loss);

    GradCheck res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        for (size_t i = 0; i < leaves[li].second.size(); ++i) {
            auto eval = [&](double delta) {
                TapeF64 t2;
                std::vector<int> ids2;
                ids2.reserve(leaves.size());
                for (size_t lj = 0; lj < leaves.size(); ++lj) {
                    auto vals = leaves[lj].second;
                    if (lj == li) vals[i] += delta;
                    ids2.push_back(t2.leaf(leaves[lj].first, std::move(vals), false));
                }
                return t2.scalar(build(t2, ids2));
            };
            double fd = (eval(h) - eval(-h)) / (2.0 * h);
            double ad = tape.grad(ids[li])[i];
            double denom = std::max({1.0, std::abs(fd), std::abs(ad)});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - ad) / denom);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace drape
