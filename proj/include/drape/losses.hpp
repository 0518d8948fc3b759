#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drape/grid.hpp"
#include "drape/image.hpp"
#include "drape/mesh_ops.hpp"
#include "drape/normalize.hpp"
#include "drape/tensor.hpp"
#include "drape/uv_atlas.hpp"

namespace drape {

// Nearest body vertex for every garment vertex.
std::vector<int> nearest_body_pairing(const std::vector<Vec3>& garment, const PointGrid& body);

// Sum over garment vertices of min((x - b).N - margin, 0)^2 against each
// vertex's nearest body point.
double collision_energy(const std::vector<Vec3>& garment, const std::vector<Vec3>& body_vertices,
                        const std::vector<Vec3>& body_normals, double margin);

template <typename T>
std::vector<Vec3> tensor_to_points(const TapeT<T>& t, typename TapeT<T>::Id x) {
    const Shape& s = t.shape(x);
    if (s.ndim != 2 || s.d[1] != 3)
        throw std::runtime_error("points: tensor " + s.str() + ", expected nx3");
    const auto& v = t.val(x);
    std::vector<Vec3> out(s.d[0]);
    for (int i = 0; i < s.d[0]; ++i)
        out[i] = Vec3{static_cast<double>(v[static_cast<size_t>(i) * 3]),
                      static_cast<double>(v[static_cast<size_t>(i) * 3 + 1]),
                      static_cast<double>(v[static_cast<size_t>(i) * 3 + 2])};
    return out;
}

// In-tape collision energy. The pairing is recomputed from the current
// vertex values and then held fixed, so gradients flow only through the
// garment positions, not through the choice of nearest point.
template <typename T>
typename TapeT<T>::Id collision_loss(TapeT<T>& t, typename TapeT<T>::Id garment,
                                     const std::vector<Vec3>& body_vertices,
                                     const std::vector<Vec3>& body_normals, double margin) {
    if (body_vertices.empty()) throw std::runtime_error("collision: empty body");
    PointGrid grid(body_vertices);
    std::vector<int> pairing = nearest_body_pairing(tensor_to_points(t, garment), grid);
    return collision_penalty(t, garment, body_vertices, body_normals, pairing, margin);
}

// Fixed per-frame quantities the reconstruction losses compare against.
// Pointers alias caller-owned storage and must outlive the loss nodes.
struct MeshTargets {
    const UvAtlas* atlas = nullptr;
    const std::vector<std::array<int, 3>>* faces = nullptr;
    const std::vector<std::array<int, 2>>* edges = nullptr;
    // Canonical -> posed 3x4 affine (row-major [R | t]) per vertex.
    const std::vector<std::array<double, 12>>* repose = nullptr;
    const std::vector<Vec3>* gt_posed = nullptr;
    const std::vector<double>* gt_edge_lengths = nullptr;
    const std::vector<Vec3>* gt_normals = nullptr;
    const std::vector<Vec3>* body_posed = nullptr;
    const std::vector<Vec3>* body_normals = nullptr;
    NormBounds bounds;

    void validate() const;
};

struct LossSettings {
    double lambda = 0.1;           // weight of the geometric terms
    double delta = 1e-4;           // weight of the KL term
    double collision_margin = 0.004;
    bool normal_active = true;     // normal term joins the schedule late
};

template <typename T>
struct LossNodes {
    typename TapeT<T>::Id uv, threed, collision, edge, normal, kl, reg, rec, total;
};

struct LossValues {
    double uv = 0, threed = 0, collision = 0, edge = 0, normal = 0, kl = 0;
    double reg = 0, rec = 0, total = 0;
};

template <typename T>
std::vector<T> mask_values(const std::vector<uint8_t>& mask) {
    std::vector<T> m(mask.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = mask[i] ? T(1) : T(0);
    return m;
}

template <typename T>
std::vector<T> mask_values(const UvImage& img) {
    return mask_values<T>(img.mask);
}

template <typename T>
typename TapeT<T>::Id image_constant(TapeT<T>& t, const UvImage& img) {
    std::vector<T> v(img.data.begin(), img.data.end());
    return t.constant(Shape{1, img.channels, img.height, img.width}, std::move(v));
}

// Mean squared difference over the target's valid pixels and channels.
template <typename T>
typename TapeT<T>::Id masked_mse(TapeT<T>& t, typename TapeT<T>::Id pred,
                                 const UvImage& target) {
    int valid = 0;
    for (auto m : target.mask) valid += m ? 1 : 0;
    if (valid == 0) throw std::runtime_error("loss: target mask has no valid pixels");
    auto diff = t.mul_mask(t.sub(pred, image_constant(t, target)), mask_values<T>(target));
    return t.scale(t.sum(t.mul(diff, diff)), T(1) / T(valid * target.channels));
}

// Normalized UV map -> world coordinates -> per-vertex gather -> posed
// positions. The repose transforms carry no gradient.
template <typename T>
typename TapeT<T>::Id posed_vertices_op(TapeT<T>& t, typename TapeT<T>::Id uv_out,
                                        const MeshTargets& mesh) {
    std::vector<T> gain(3), off(3);
    for (int c = 0; c < 3; ++c) {
        gain[c] = static_cast<T>(mesh.bounds.scale(c));
        off[c] = static_cast<T>(mesh.bounds.offset(c));
    }
    auto denorm = t.add_channel_bias(t.mul_channel(uv_out, t.constant(Shape{3}, std::move(gain))),
                                     t.constant(Shape{3}, std::move(off)));
    return vertex_affine(t, uv_gather(t, denorm, *mesh.atlas), *mesh.repose);
}

// Full loss stack over a pyramid of composed outputs. Every listed level
// pays a masked UV error; the geometric terms are evaluated on mesh_output
// (the finest-resolution composition) after mapping it back to posed world
// space.
template <typename T>
LossNodes<T> loss_suite(
    TapeT<T>& t, const std::vector<typename TapeT<T>::Id>& level_outputs,
    const std::vector<const UvImage*>& level_targets, typename TapeT<T>::Id mesh_output,
    const std::vector<std::pair<typename TapeT<T>::Id, typename TapeT<T>::Id>>& latents,
    const MeshTargets& mesh, const LossSettings& cfg) {
    using Id = typename TapeT<T>::Id;
    if (level_outputs.empty()) throw std::runtime_error("loss: no level outputs");
    if (level_outputs.size() != level_targets.size())
        throw std::runtime_error("loss: " + std::to_string(level_outputs.size()) +
                                 " outputs for " + std::to_string(level_targets.size()) +
                                 " targets");
    mesh.validate();

    LossNodes<T> out;
    out.uv = masked_mse(t, level_outputs[0], *level_targets[0]);
    for (size_t l = 1; l < level_outputs.size(); ++l)
        out.uv = t.add(out.uv, masked_mse(t, level_outputs[l], *level_targets[l]));

    Id posed = posed_vertices_op(t, mesh_output, mesh);
    const int n = t.shape(posed).d[0];

    std::vector<T> gt(static_cast<size_t>(n) * 3);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) gt[static_cast<size_t>(i) * 3 + k] =
            static_cast<T>((*mesh.gt_posed)[i][k]);
    auto d3 = t.sub(posed, t.constant(Shape{n, 3}, std::move(gt)));
    out.threed = t.mean(t.mul(d3, d3));

    out.collision = t.scale(collision_loss(t, posed, *mesh.body_posed, *mesh.body_normals,
                                           cfg.collision_margin),
                            T(1) / T(n));

    int e = static_cast<int>(mesh.edges->size());
    std::vector<T> gtl(mesh.gt_edge_lengths->begin(), mesh.gt_edge_lengths->end());
    auto el = edge_lengths_op(t, posed, *mesh.edges);
    out.edge = t.mean(t.abs_op(t.sub(el, t.constant(Shape{e}, std::move(gtl)))));

    if (cfg.normal_active) {
        std::vector<T> gtn(static_cast<size_t>(n) * 3);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) gtn[static_cast<size_t>(i) * 3 + k] =
                static_cast<T>((*mesh.gt_normals)[i][k]);
        auto nr = vertex_normals_op(t, posed, *mesh.faces);
        out.normal = t.mean(t.abs_op(t.sub(nr, t.constant(Shape{n, 3}, std::move(gtn)))));
    } else {
        out.normal = t.scalar_const(T(0));
    }

    if (latents.empty()) {
        out.kl = t.scalar_const(T(0));
    } else {
        Id kl = 0;
        bool first = true;
        for (const auto& [mu, lv] : latents) {
            Id term = t.scale(t.kl_divergence(mu, lv), T(1) / T(t.shape(mu).count()));
            kl = first ? term : t.add(kl, term);
            first = false;
        }
        out.kl = kl;
    }

    out.reg = t.add(t.add(out.collision, out.edge), t.add(out.normal, out.threed));
    out.rec = t.add(out.uv, t.scale(out.reg, static_cast<T>(cfg.lambda)));
    out.total = t.add(out.rec, t.scale(out.kl, static_cast<T>(cfg.delta)));
    return out;
}

template <typename T>
LossValues read_losses(const TapeT<T>& t, const LossNodes<T>& n) {
    auto v = [&](typename TapeT<T>::Id id) { return static_cast<double>(t.val(id)[0]); };
    LossValues out;
    out.uv = v(n.uv);
    out.threed = v(n.threed);
    out.collision = v(n.collision);
    out.edge = v(n.edge);
    out.normal = v(n.normal);
    out.kl = v(n.kl);
    out.reg = v(n.reg);
    out.rec = v(n.rec);
    out.total = v(n.total);
    return out;
}

}  // namespace drape
