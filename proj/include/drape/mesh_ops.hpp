#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "drape/geometry.hpp"
#include "drape/tensor.hpp"
#include "drape/uv_atlas.hpp"

namespace drape {

// Per-vertex average of the atlas entry pixels (two on the seam, one
// elsewhere). Image is [1, C, H, W]; the result is [vertexCount, C].
template <typename T>
typename TapeT<T>::Id uv_gather(TapeT<T>& tape, typename TapeT<T>::Id image,
                                const UvAtlas& atlas) {
    const Shape& s = tape.shape(image);
    if (s.ndim != 4 || s.d[0] != 1 || s.d[2] != atlas.height || s.d[3] != atlas.width)
        throw std::runtime_error("uv_gather: image " + s.str() + " but the atlas needs 1xCx" +
                                 std::to_string(atlas.height) + "x" +
                                 std::to_string(atlas.width));
    int n = atlas.vertex_count(), c = s.d[1], h = s.d[2], w = s.d[3];
    struct Read {
        int vertex, y, x;
        T weight;
    };
    std::vector<Read> reads;
    reads.reserve(static_cast<size_t>(n) + atlas.faces.size());
    for (int v = 0; v < n; ++v) {
        int k = (atlas.front[v].valid() ? 1 : 0) + (atlas.back[v].valid() ? 1 : 0);
        for (int side = 0; side < 2; ++side) {
            const auto& e = atlas.entry(v, side);
            if (e.valid()) reads.push_back({v, e.y, e.x, T(1) / T(k)});
        }
    }
    std::vector<T> val(static_cast<size_t>(n) * c, T(0));
    for (const Read& r : reads)
        for (int ch = 0; ch < c; ++ch)
            val[static_cast<size_t>(r.vertex) * c + ch] +=
                r.weight * tape.val(image)[(static_cast<size_t>(ch) * h + r.y) * w + r.x];
    return tape.make(Shape{n, c}, std::move(val), {image},
                     [image, reads, c, h, w](TapeT<T>& t, int out) {
                         const auto& g = t.grad_buffer(out);
                         auto& gi = t.grad_buffer(image);
                         for (const Read& r : reads)
                             for (int ch = 0; ch < c; ++ch)
                                 gi[(static_cast<size_t>(ch) * h + r.y) * w + r.x] +=
                                     r.weight * g[static_cast<size_t>(r.vertex) * c + ch];
                     });
}

// Applies a fixed 3x4 affine (row-major [R | t]) per vertex to an [n, 3]
// tensor. The transforms carry no gradient.
template <typename T>
typename TapeT<T>::Id vertex_affine(TapeT<T>& tape, typename TapeT<T>::Id x,
                                    const std::vector<std::array<double, 12>>& tf) {
    const Shape& s = tape.shape(x);
    if (s.ndim != 2 || s.d[1] != 3 || s.d[0] != static_cast<int>(tf.size()))
        throw std::runtime_error("vertex_affine: " + std::to_string(tf.size()) +
                                 " transforms for tensor " + s.str());
    int n = s.d[0];
    std::vector<T> val(static_cast<size_t>(n) * 3);
    for (int v = 0; v < n; ++v) {
        const auto& m = tf[v];
        const T* p = &tape.val(x)[static_cast<size_t>(v) * 3];
        for (int r = 0; r < 3; ++r)
            val[static_cast<size_t>(v) * 3 + r] = static_cast<T>(
                m[r * 4 + 0] * p[0] + m[r * 4 + 1] * p[1] + m[r * 4 + 2] * p[2] + m[r * 4 + 3]);
    }
    return tape.make(Shape{n, 3}, std::move(val), {x}, [x, tf, n](TapeT<T>& t, int out) {
        const auto& g = t.grad_buffer(out);
        auto& gx = t.grad_buffer(x);
        for (int v = 0; v < n; ++v) {
            const auto& m = tf[v];
            const T* gp = &g[static_cast<size_t>(v) * 3];
            for (int col = 0; col < 3; ++col)
                gx[static_cast<size_t>(v) * 3 + col] += static_cast<T>(
                    m[0 * 4 + col] * gp[0] + m[1 * 4 + col] * gp[1] + m[2 * 4 + col] * gp[2]);
        }
    });
}

// Area-weighted vertex normals of an [n, 3] tensor, normalized per vertex.
// A vertex whose accumulated normal is shorter than 1e-12 yields zeros (and
// passes no gradient) instead of dividing by zero.
template <typename T>
typename TapeT<T>::Id vertex_normals_op(TapeT<T>& tape, typename TapeT<T>::Id x,
                                        const std::vector<std::array<int, 3>>& faces) {
    const Shape& s = tape.shape(x);
    if (s.ndim != 2 || s.d[1] != 3)
        throw std::runtime_error("vertex_normals: tensor " + s.str() + ", expected nx3");
    int n = s.d[0];
    const auto& xv = tape.val(x);
    auto at = [&](int v) {
        return Vec3{static_cast<double>(xv[static_cast<size_t>(v) * 3]),
                    static_cast<double>(xv[static_cast<size_t>(v) * 3 + 1]),
                    static_cast<double>(xv[static_cast<size_t>(v) * 3 + 2])};
    };
    std::vector<Vec3> acc(n);
    for (const auto& f : faces) {
        Vec3 fn = (at(f[1]) - at(f[0])).cross(at(f[2]) - at(f[0]));
        for (int k = 0; k < 3; ++k) acc[f[k]] += fn;
    }
    std::vector<double> len(n);
    std::vector<T> val(static_cast<size_t>(n) * 3, T(0));
    for (int v = 0; v < n; ++v) {
        len[v] = acc[v].norm();
        if (len[v] >= 1e-12)
            for (int k = 0; k < 3; ++k)
                val[static_cast<size_t>(v) * 3 + k] = static_cast<T>(acc[v][k] / len[v]);
    }
    return tape.make(
        Shape{n, 3}, std::move(val), {x}, [x, faces, acc, len, n](TapeT<T>& t, int out) {
            const auto& g = t.grad_buffer(out);
            auto& gx = t.grad_buffer(x);
            const auto& xv2 = t.val(x);
            auto at2 = [&](int v) {
                return Vec3{static_cast<double>(xv2[static_cast<size_t>(v) * 3]),
                            static_cast<double>(xv2[static_cast<size_t>(v) * 3 + 1]),
                            static_cast<double>(xv2[static_cast<size_t>(v) * 3 + 2])};
            };
            // Through the normalization: d_acc = (g - n (n . g)) / |acc|.
            std::vector<Vec3> dacc(n);
            for (int v = 0; v < n; ++v) {
                if (len[v] < 1e-12) continue;
                Vec3 nv = acc[v] / len[v];
                Vec3 gv{static_cast<double>(g[static_cast<size_t>(v) * 3]),
                        static_cast<double>(g[static_cast<size_t>(v) * 3 + 1]),
                        static_cast<double>(g[static_cast<size_t>(v) * 3 + 2])};
                dacc[v] = (gv - nv * nv.dot(gv)) / len[v];
            }
            // Through each face normal fn = (b - a) x (c - a).
            for (const auto& f : faces) {
                Vec3 dfn = dacc[f[0]] + dacc[f[1]] + dacc[f[2]];
                Vec3 u = at2(f[1]) - at2(f[0]);
                Vec3 w = at2(f[2]) - at2(f[0]);
                Vec3 du = w.cross(dfn);
                Vec3 dw = dfn.cross(u);
                Vec3 da = -(du + dw);
                for (int k = 0; k < 3; ++k) {
                    gx[static_cast<size_t>(f[0]) * 3 + k] += static_cast<T>(da[k]);
                    gx[static_cast<size_t>(f[1]) * 3 + k] += static_cast<T>(du[k]);
                    gx[static_cast<size_t>(f[2]) * 3 + k] += static_cast<T>(dw[k]);
                }
            }
        });
}

// Lengths of the given vertex pairs in an [n, 3] tensor; result is [count].
template <typename T>
typename TapeT<T>::Id edge_lengths_op(TapeT<T>& tape, typename TapeT<T>::Id x,
                                      const std::vector<std::array<int, 2>>& edges) {
    const Shape& s = tape.shape(x);
    if (s.ndim != 2 || s.d[1] != 3)
        throw std::runtime_error("edge_lengths: tensor " + s.str() + ", expected nx3");
    int e = static_cast<int>(edges.size());
    const auto& xv = tape.val(x);
    std::vector<T> val(e);
    for (int i = 0; i < e; ++i) {
        double d2 = 0;
        for (int k = 0; k < 3; ++k) {
            double d = static_cast<double>(xv[static_cast<size_t>(edges[i][0]) * 3 + k]) -
                       static_cast<double>(xv[static_cast<size_t>(edges[i][1]) * 3 + k]);
            d2 += d * d;
        }
        val[i] = static_cast<T>(std::sqrt(d2));
    }
    auto lengths = val;
    return tape.make(Shape{e}, std::move(val), {x},
                     [x, edges, lengths, e](TapeT<T>& t, int out) {
                         const auto& g = t.grad_buffer(out);
                         auto& gx = t.grad_buffer(x);
                         const auto& xv2 = t.val(x);
                         for (int i = 0; i < e; ++i) {
                             double l = static_cast<double>(lengths[i]);
                             if (l < 1e-12) continue;
                             for (int k = 0; k < 3; ++k) {
                                 double d =
                                     (static_cast<double>(
                                          xv2[static_cast<size_t>(edges[i][0]) * 3 + k]) -
                                      static_cast<double>(
                                          xv2[static_cast<size_t>(edges[i][1]) * 3 + k])) / l;
                                 T gv = static_cast<T>(d * static_cast<double>(g[i]));
                                 gx[static_cast<size_t>(edges[i][0]) * 3 + k] += gv;
                                 gx[static_cast<size_t>(edges[i][1]) * 3 + k] -= gv;
                             }
                         }
                     });
}

// Sum over vertices of min((x_i - b_{p(i)}) . N_{p(i)} - margin, 0)^2 for a
// fixed pairing p into body points b with outward unit normals N. Vertices
// deeper than the margin are pushed along the body normal.
template <typename T>
typename TapeT<T>::Id collision_penalty(TapeT<T>& tape, typename TapeT<T>::Id x,
                                        const std::vector<Vec3>& body_points,
                                        const std::vector<Vec3>& body_normals,
                                        const std::vector<int>& pairing, double margin) {
    const Shape& s = tape.shape(x);
    if (s.ndim != 2 || s.d[1] != 3 || s.d[0] != static_cast<int>(pairing.size()))
        throw std::runtime_error("collision: " + std::to_string(pairing.size()) +
                                 " pairs for tensor " + s.str());
    if (body_points.size() != body_normals.size())
        throw std::runtime_error("collision: normal count does not match body points");
    int n = s.d[0];
    const auto& xv = tape.val(x);
    std::vector<double> depth(n, 0.0);
    double total = 0.0;
    for (int v = 0; v < n; ++v) {
        int j = pairing[v];
        if (j < 0 || j >= static_cast<int>(body_points.size()))
            throw std::runtime_error("collision: pair index " + std::to_string(j) +
                                     " outside the body");
        Vec3 p{static_cast<double>(xv[static_cast<size_t>(v) * 3]),
               static_cast<double>(xv[static_cast<size_t>(v) * 3 + 1]),
               static_cast<double>(xv[static_cast<size_t>(v) * 3 + 2])};
        double d = (p - body_points[j]).dot(body_normals[j]) - margin;
        depth[v] = d < 0.0 ? d : 0.0;
        total += depth[v] * depth[v];
    }
    return tape.make(Shape{}, {static_cast<T>(total)}, {x},
                     [x, body_normals, pairing, depth, n](TapeT<T>& t, int out) {
                         T g = t.grad_buffer(out)[0];
                         auto& gx = t.grad_buffer(x);
                         for (int v = 0; v < n; ++v) {
                             if (depth[v] == 0.0) continue;
                             const Vec3& nr = body_normals[pairing[v]];
                             for (int k = 0; k < 3; ++k)
                                 gx[static_cast<size_t>(v) * 3 + k] +=
                                     g * static_cast<T>(2.0 * depth[v] * nr[k]);
                         }
                     });
}

}  // namespace drape
