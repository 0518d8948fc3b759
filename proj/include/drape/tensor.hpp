#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace drape {

// Dense row-major shape, up to 4 dims (batch, channel, height, width).
struct Shape {
    std::array<int, 4> d{1, 1, 1, 1};
    int ndim = 0;

    Shape() = default;
    Shape(std::initializer_list<int> dims) {
        if (dims.size() > 4) throw std::runtime_error("shape: more than 4 dims");
        ndim = static_cast<int>(dims.size());
        int i = 0;
        for (int v : dims) d[i++] = v;
    }

    int count() const {
        int n = 1;
        for (int i = 0; i < ndim; ++i) n *= d[i];
        return ndim == 0 ? 1 : n;
    }
    bool operator==(const Shape& o) const { return ndim == o.ndim && d == o.d; }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const {
        if (ndim == 0) return "scalar";
        std::string s;
        for (int i = 0; i < ndim; ++i) s += (i ? "x" : "") + std::to_string(d[i]);
        return s;
    }
};

// Reverse-mode tape over dense tensors. Nodes are appended in topological
// order; backward walks them in reverse. The scalar type is templated so the
// same operator definitions run in f32 for training and f64 for gradient
// checking.
template <typename T>
class TapeT {
  public:
    using Id = int;

    struct Node {
        Shape shape;
        std::vector<T> val;
        std::vector<T> grad;
        bool needs = false;  // participates in backward
        std::function<void(TapeT&, Id)> back;
    };

    Id leaf(const Shape& shape, std::vector<T> values, bool requires_grad) {
        if (static_cast<int>(values.size()) != shape.count())
            throw std::runtime_error("tensor: " + std::to_string(values.size()) +
                                     " values for shape " + shape.str());
        Node n;
        n.shape = shape;
        n.val = std::move(values);
        n.needs = requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size()) - 1;
    }
    Id constant(const Shape& shape, std::vector<T> values) {
        return leaf(shape, std::move(values), false);
    }
    Id scalar_const(T v) { return constant(Shape{}, {v}); }

    const Shape& shape(Id id) const { return nodes_[id].shape; }
    const std::vector<T>& val(Id id) const { return nodes_[id].val; }
    const std::vector<T>& grad(Id id) const { return nodes_[id].grad; }
    T scalar(Id id) const {
        if (nodes_[id].shape.count() != 1)
            throw std::runtime_error("tensor: node is not a scalar");
        return nodes_[id].val[0];
    }
    int size() const { return static_cast<int>(nodes_.size()); }

    // ---- elementwise ----

    Id add(Id a, Id b) {
        return binary(a, b, [](T x, T y) { return x + y; },
                      [](TapeT& t, Id out, Id a2, Id b2) {
                          t.accumulate(a2, t.nodes_[out].grad);
                          t.accumulate(b2, t.nodes_[out].grad);
                      });
    }
    Id sub(Id a, Id b) {
        return binary(a, b, [](T x, T y) { return x - y; },
                      [](TapeT& t, Id out, Id a2, Id b2) {
                          t.accumulate(a2, t.nodes_[out].grad);
                          t.accumulate_scaled(b2, t.nodes_[out].grad, T(-1));
                      });
    }
    Id mul(Id a, Id b) {
        return binary(a, b, [](T x, T y) { return x * y; },
                      [](TapeT& t, Id out, Id a2, Id b2) {
                          auto& g = t.nodes_[out].grad;
                          if (t.nodes_[a2].needs)
                              for (size_t i = 0; i < g.size(); ++i)
                                  t.nodes_[a2].grad[i] += g[i] * t.nodes_[b2].val[i];
                          if (t.nodes_[b2].needs)
                              for (size_t i = 0; i < g.size(); ++i)
                                  t.nodes_[b2].grad[i] += g[i] * t.nodes_[a2].val[i];
                      });
    }
    Id div(Id a, Id b) {
        return binary(a, b, [](T x, T y) { return x / y; },
                      [](TapeT& t, Id out, Id a2, Id b2) {
                          auto& g = t.nodes_[out].grad;
                          if (t.nodes_[a2].needs)
                              for (size_t i = 0; i < g.size(); ++i)
                                  t.nodes_[a2].grad[i] += g[i] / t.nodes_[b2].val[i];
                          if (t.nodes_[b2].needs)
                              for (size_t i = 0; i < g.size(); ++i) {
                                  T y = t.nodes_[b2].val[i];
                                  t.nodes_[b2].grad[i] -= g[i] * t.nodes_[a2].val[i] / (y * y);
                              }
                      });
    }

    Id scale(Id a, T s) {
        return unary(a, [s](T x) { return x * s; },
                     [s](TapeT& t, Id out, Id a2) {
                         t.accumulate_scaled(a2, t.nodes_[out].grad, s);
                     });
    }
    Id add_const(Id a, T c) {
        return unary(a, [c](T x) { return x + c; },
                     [](TapeT& t, Id out, Id a2) { t.accumulate(a2, t.nodes_[out].grad); });
    }
    Id exp_op(Id a) {
        return unary(a, [](T x) { return std::exp(x); },
                     [](TapeT& t, Id out, Id a2) {
                         auto& g = t.nodes_[out].grad;
                         for (size_t i = 0; i < g.size(); ++i)
                             t.nodes_[a2].grad[i] += g[i] * t.nodes_[out].val[i];
                     });
    }
    Id tanh_op(Id a) {
        return unary(a, [](T x) { return std::tanh(x); },
                     [](TapeT& t, Id out, Id a2) {
                         auto& g = t.nodes_[out].grad;
                         for (size_t i = 0; i < g.size(); ++i) {
                             T y = t.nodes_[out].val[i];
                             t.nodes_[a2].grad[i] += g[i] * (T(1) - y * y);
                         }
                     });
    }
    Id abs_op(Id a) {
        return unary(a, [](T x) { return std::abs(x); },
                     [](TapeT& t, Id out, Id a2) {
                         auto& g = t.nodes_[out].grad;
                         for (size_t i = 0; i < g.size(); ++i) {
                             T x = t.nodes_[a2].val[i];
                             t.nodes_[a2].grad[i] += x < T(0) ? -g[i] : (x > T(0) ? g[i] : T(0));
                         }
                     });
    }
    Id clamp_min(Id a, T lo) {
        return unary(a, [lo](T x) { return x < lo ? lo : x; },
                     [lo](TapeT& t, Id out, Id a2) {
                         auto& g = t.nodes_[out].grad;
                         for (size_t i = 0; i < g.size(); ++i)
                             if (t.nodes_[a2].val[i] > lo) t.nodes_[a2].grad[i] += g[i];
                     });
    }
    Id clamp(Id a, T lo, T hi) {
        return unary(a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
                     [lo, hi](TapeT& t, Id out, Id a2) {
                         auto& g = t.nodes_[out].grad;
                         for (size_t i = 0; i < g.size(); ++i) {
                             T x = t.nodes_[a2].val[i];
                             if (x > lo && x < hi) t.nodes_[a2].grad[i] += g[i];
                         }
                     });
    }
    Id relu(Id a) { return clamp_min(a, T(0)); }
    Id pow_const(Id a, T p) {
        return unary(a, [p](T x) { return std::pow(x, p); },
                     [p](TapeT& t, Id out, Id a2) {
                         auto& g = t.nodes_[out].grad;
                         for (size_t i = 0; i < g.size(); ++i) {
                             T x = t.nodes_[a2].val[i];
                             t.nodes_[a2].grad[i] += g[i] * p * std::pow(x, p - T(1));
                         }
                     });
    }
    Id gelu(Id a) {
        return unary(a,
                     [](T x) {
                         return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
                     },
                     [](TapeT& t, Id out, Id a2) {
                         auto& g = t.nodes_[out].grad;
                         const T inv_sqrt2 = T(1) / std::sqrt(T(2));
                         const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
                         for (size_t i = 0; i < g.size(); ++i) {
                             T x = t.nodes_[a2].val[i];
                             T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
                             T pdf = std::exp(T(-0.5) * x * x) * inv_sqrt2pi;
                             t.nodes_[a2].grad[i] += g[i] * (cdf + x * pdf);
                         }
                     });
    }

    // ---- reductions and shaping ----

    Id sum(Id a) {
        T total = 0;
        for (T v : nodes_[a].val) total += v;
        return make(Shape{}, {total}, {a}, [a](TapeT& t, Id out) {
            T g = t.nodes_[out].grad[0];
            for (auto& v : t.nodes_[a].grad) v += g;
        });
    }
    Id mean(Id a) { return scale(sum(a), T(1) / T(nodes_[a].shape.count())); }

    Id reshape(Id a, const Shape& shape) {
        if (shape.count() != nodes_[a].shape.count())
            throw std::runtime_error("reshape: " + nodes_[a].shape.str() + " to " + shape.str());
        return make(shape, nodes_[a].val, {a},
                    [a](TapeT& t, Id out) { t.accumulate(a, t.nodes_[out].grad); });
    }

    Id concat_channels(Id a, Id b) {
        const Shape& sa = nodes_[a].shape;
        const Shape& sb = nodes_[b].shape;
        if (sa.ndim != 4 || sb.ndim != 4 || sa.d[0] != sb.d[0] || sa.d[2] != sb.d[2] ||
            sa.d[3] != sb.d[3])
            throw std::runtime_error("concat: incompatible shapes " + sa.str() + " and " +
                                     sb.str());
        Shape out{sa.d[0], sa.d[1] + sb.d[1], sa.d[2], sa.d[3]};
        std::vector<T> val(out.count());
        int hw = sa.d[2] * sa.d[3];
        for (int n = 0; n < sa.d[0]; ++n) {
            std::copy_n(&nodes_[a].val[static_cast<size_t>(n) * sa.d[1] * hw], sa.d[1] * hw,
                        &val[static_cast<size_t>(n) * out.d[1] * hw]);
            std::copy_n(&nodes_[b].val[static_cast<size_t>(n) * sb.d[1] * hw], sb.d[1] * hw,
                        &val[static_cast<size_t>(n) * out.d[1] * hw + sa.d[1] * hw]);
        }
        int ca = sa.d[1], cb = sb.d[1];
        return make(out, std::move(val), {a, b}, [a, b, ca, cb, hw](TapeT& t, Id out2) {
            const auto& g = t.nodes_[out2].grad;
            int batch = t.nodes_[a].shape.d[0];
            for (int n = 0; n < batch; ++n) {
                size_t base = static_cast<size_t>(n) * (ca + cb) * hw;
                if (t.nodes_[a].needs)
                    for (int i = 0; i < ca * hw; ++i)
                        t.nodes_[a].grad[static_cast<size_t>(n) * ca * hw + i] += g[base + i];
                if (t.nodes_[b].needs)
                    for (int i = 0; i < cb * hw; ++i)
                        t.nodes_[b].grad[static_cast<size_t>(n) * cb * hw + i] +=
                            g[base + ca * hw + i];
            }
        });
    }

    Id slice_channels(Id a, int from, int to) {
        const Shape& s = nodes_[a].shape;
        if (s.ndim != 4 || from < 0 || to > s.d[1] || from >= to)
            throw std::runtime_error("slice: channels [" + std::to_string(from) + ", " +
                                     std::to_string(to) + ") of " + s.str());
        Shape out{s.d[0], to - from, s.d[2], s.d[3]};
        int hw = s.d[2] * s.d[3];
        std::vector<T> val(out.count());
        for (int n = 0; n < s.d[0]; ++n)
            std::copy_n(&nodes_[a].val[(static_cast<size_t>(n) * s.d[1] + from) * hw],
                        (to - from) * hw, &val[static_cast<size_t>(n) * (to - from) * hw]);
        int c_in = s.d[1];
        return make(out, std::move(val), {a}, [a, from, to, hw, c_in](TapeT& t, Id out2) {
            const auto& g = t.nodes_[out2].grad;
            int batch = t.nodes_[a].shape.d[0];
            for (int n = 0; n < batch; ++n)
                for (int i = 0; i < (to - from) * hw; ++i)
                    t.nodes_[a].grad[(static_cast<size_t>(n) * c_in + from) * hw + i] +=
                        g[static_cast<size_t>(n) * (to - from) * hw + i];
        });
    }

    // ---- channel broadcasts ----

    Id add_channel_bias(Id a, Id bias) {
        const Shape& s = nodes_[a].shape;
        const Shape& sb = nodes_[bias].shape;
        if (s.ndim != 4 || sb.count() != s.d[1])
            throw std::runtime_error("bias: " + sb.str() + " does not match channels of " +
                                     s.str());
        std::vector<T> val = nodes_[a].val;
        int hw = s.d[2] * s.d[3];
        for (int n = 0; n < s.d[0]; ++n)
            for (int c = 0; c < s.d[1]; ++c) {
                T b = nodes_[bias].val[c];
                T* p = &val[(static_cast<size_t>(n) * s.d[1] + c) * hw];
                for (int i = 0; i < hw; ++i) p[i] += b;
            }
        Id bi = bias;
        return make(s, std::move(val), {a, bias}, [a, bi, hw](TapeT& t, Id out) {
            const auto& g = t.nodes_[out].grad;
            const Shape& s2 = t.nodes_[a].shape;
            if (t.nodes_[a].needs) t.accumulate(a, g);
            if (t.nodes_[bi].needs)
                for (int n = 0; n < s2.d[0]; ++n)
                    for (int c = 0; c < s2.d[1]; ++c) {
                        const T* p = &g[(static_cast<size_t>(n) * s2.d[1] + c) * hw];
                        T acc = 0;
                        for (int i = 0; i < hw; ++i) acc += p[i];
                        t.nodes_[bi].grad[c] += acc;
                    }
        });
    }

    Id mul_channel(Id a, Id gain) {
        const Shape& s = nodes_[a].shape;
        if (s.ndim != 4 || nodes_[gain].shape.count() != s.d[1])
            throw std::runtime_error("channel gain: " + nodes_[gain].shape.str() +
                                     " does not match channels of " + s.str());
        std::vector<T> val = nodes_[a].val;
        int hw = s.d[2] * s.d[3];
        for (int n = 0; n < s.d[0]; ++n)
            for (int c = 0; c < s.d[1]; ++c) {
                T m = nodes_[gain].val[c];
                T* p = &val[(static_cast<size_t>(n) * s.d[1] + c) * hw];
                for (int i = 0; i < hw; ++i) p[i] *= m;
            }
        Id gi = gain;
        return make(s, std::move(val), {a, gain}, [a, gi, hw](TapeT& t, Id out) {
            const auto& g = t.nodes_[out].grad;
            const Shape& s2 = t.nodes_[a].shape;
            for (int n = 0; n < s2.d[0]; ++n)
                for (int c = 0; c < s2.d[1]; ++c) {
                    size_t base = (static_cast<size_t>(n) * s2.d[1] + c) * hw;
                    if (t.nodes_[a].needs) {
                        T m = t.nodes_[gi].val[c];
                        for (int i = 0; i < hw; ++i) t.nodes_[a].grad[base + i] += g[base + i] * m;
                    }
                    if (t.nodes_[gi].needs) {
                        T acc = 0;
                        for (int i = 0; i < hw; ++i)
                            acc += g[base + i] * t.nodes_[a].val[base + i];
                        t.nodes_[gi].grad[c] += acc;
                    }
                }
        });
    }

    // Broadcast multiply by a constant height-by-width mask over batch and
    // channels (masked losses).
    Id mul_mask(Id a, const std::vector<T>& mask) {
        const Shape& s = nodes_[a].shape;
        int hw = s.d[2] * s.d[3];
        if (s.ndim != 4 || static_cast<int>(mask.size()) != hw)
            throw std::runtime_error("mask: size does not match " + s.str());
        std::vector<T> val = nodes_[a].val;
        for (int nc = 0; nc < s.d[0] * s.d[1]; ++nc)
            for (int i = 0; i < hw; ++i) val[static_cast<size_t>(nc) * hw + i] *= mask[i];
        return make(s, std::move(val), {a}, [a, mask, hw](TapeT& t, Id out) {
            const auto& g = t.nodes_[out].grad;
            const Shape& s2 = t.nodes_[a].shape;
            for (int nc = 0; nc < s2.d[0] * s2.d[1]; ++nc)
                for (int i = 0; i < hw; ++i)
                    t.nodes_[a].grad[static_cast<size_t>(nc) * hw + i] +=
                        g[static_cast<size_t>(nc) * hw + i] * mask[i];
        });
    }

    // ---- linear ----

    Id linear(Id x, Id w, Id b) {
        const Shape& sx = nodes_[x].shape;
        const Shape& sw = nodes_[w].shape;
        if (sx.ndim != 2 || sw.ndim != 2 || sx.d[1] != sw.d[0])
            throw std::runtime_error("linear: " + sx.str() + " x " + sw.str());
        int rows = sx.d[0], k = sx.d[1], m = sw.d[1];
        if (nodes_[b].shape.count() != m)
            throw std::runtime_error("linear: bias " + nodes_[b].shape.str() + " needs " +
                                     std::to_string(m));
        std::vector<T> val(static_cast<size_t>(rows) * m);
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < m; ++j) {
                T acc = nodes_[b].val[j];
                for (int i = 0; i < k; ++i)
                    acc += nodes_[x].val[static_cast<size_t>(r) * k + i] *
                           nodes_[w].val[static_cast<size_t>(i) * m + j];
                val[static_cast<size_t>(r) * m + j] = acc;
            }
        return make(Shape{rows, m}, std::move(val), {x, w, b},
                    [x, w, b, rows, k, m](TapeT& t, Id out) {
                        const auto& g = t.nodes_[out].grad;
                        for (int r = 0; r < rows; ++r)
                            for (int j = 0; j < m; ++j) {
                                T gv = g[static_cast<size_t>(r) * m + j];
                                if (t.nodes_[b].needs) t.nodes_[b].grad[j] += gv;
                                for (int i = 0; i < k; ++i) {
                                    if (t.nodes_[x].needs)
                                        t.nodes_[x].grad[static_cast<size_t>(r) * k + i] +=
                                            gv * t.nodes_[w].val[static_cast<size_t>(i) * m + j];
                                    if (t.nodes_[w].needs)
                                        t.nodes_[w].grad[static_cast<size_t>(i) * m + j] +=
                                            gv * t.nodes_[x].val[static_cast<size_t>(r) * k + i];
                                }
                            }
                    });
    }

    // ---- convolutions ----

    // Valid index range [j0, j1) so that j * stride + offset lies in
    // [0, extent) and j in [0, count).
    static std::pair<int, int> tap_range(int offset, int stride, int extent, int count) {
        int j0 = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
        int j1 = extent - offset <= 0 ? 0 : (extent - offset + stride - 1) / stride;
        return {std::min(j0, count), std::min(j1, count)};
    }

    Id conv2d(Id x, Id w, int stride, int pad) {
        const Shape& sx = nodes_[x].shape;
        const Shape& sw = nodes_[w].shape;
        if (sx.ndim != 4 || sw.ndim != 4 || sx.d[1] != sw.d[1])
            throw std::runtime_error("conv2d: input " + sx.str() + " with kernel " + sw.str());
        int n = sx.d[0], cin = sx.d[1], h = sx.d[2], wd = sx.d[3];
        int cout = sw.d[0], kh = sw.d[2], kw = sw.d[3];
        int oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
        if (oh < 1 || ow < 1)
            throw std::runtime_error("conv2d: kernel " + sw.str() + " too large for " + sx.str());
        std::vector<T> val(static_cast<size_t>(n) * cout * oh * ow, T(0));
        const T* X = nodes_[x].val.data();
        const T* W = nodes_[w].val.data();
        for (int b = 0; b < n; ++b)
            for (int o = 0; o < cout; ++o) {
                T* plane = &val[(static_cast<size_t>(b) * cout + o) * oh * ow];
                for (int c = 0; c < cin; ++c)
                    for (int u = 0; u < kh; ++u) {
                        auto [i0, i1] = tap_range(u - pad, stride, h, oh);
                        for (int v = 0; v < kw; ++v) {
                            T wv = W[((static_cast<size_t>(o) * cin + c) * kh + u) * kw + v];
                            if (wv == T(0)) continue;
                            auto [j0, j1] = tap_range(v - pad, stride, wd, ow);
                            for (int i = i0; i < i1; ++i) {
                                const T* xrow = &X[((static_cast<size_t>(b) * cin + c) * h +
                                                    i * stride - pad + u) * wd + (v - pad)];
                                T* orow = plane + static_cast<size_t>(i) * ow;
                                if (stride == 1)
                                    for (int j = j0; j < j1; ++j) orow[j] += wv * xrow[j];
                                else
                                    for (int j = j0; j < j1; ++j)
                                        orow[j] += wv * xrow[static_cast<size_t>(j) * stride];
                            }
                        }
                    }
            }
        return make(Shape{n, cout, oh, ow}, std::move(val), {x, w},
                    [x, w, stride, pad](TapeT& t, Id out) {
                        t.conv2d_backward(x, w, stride, pad, out);
                    });
    }

    Id conv2d_transpose(Id x, Id w, int stride, int pad, int out_h = -1, int out_w = -1) {
        const Shape& sx = nodes_[x].shape;
        const Shape& sw = nodes_[w].shape;
        if (sx.ndim != 4 || sw.ndim != 4 || sx.d[1] != sw.d[0])
            throw std::runtime_error("conv2d_transpose: input " + sx.str() + " with kernel " +
                                     sw.str());
        int n = sx.d[0], a = sx.d[1], h = sx.d[2], wd = sx.d[3];
        int cout = sw.d[1], kh = sw.d[2], kw = sw.d[3];
        if (out_h < 0) out_h = (h - 1) * stride - 2 * pad + kh;
        if (out_w < 0) out_w = (wd - 1) * stride - 2 * pad + kw;
        if (out_h < 1 || out_w < 1)
            throw std::runtime_error("conv2d_transpose: empty output for " + sx.str());
        std::vector<T> val(static_cast<size_t>(n) * cout * out_h * out_w, T(0));
        const T* X = nodes_[x].val.data();
        const T* W = nodes_[w].val.data();
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < a; ++c)
                for (int o = 0; o < cout; ++o) {
                    T* plane = &val[(static_cast<size_t>(b) * cout + o) * out_h * out_w];
                    for (int u = 0; u < kh; ++u) {
                        auto [i0, i1] = tap_range(u - pad, stride, out_h, h);
                        for (int v = 0; v < kw; ++v) {
                            T wv = W[((static_cast<size_t>(c) * cout + o) * kh + u) * kw + v];
                            if (wv == T(0)) continue;
                            auto [j0, j1] = tap_range(v - pad, stride, out_w, wd);
                            for (int i = i0; i < i1; ++i) {
                                const T* xrow = &X[((static_cast<size_t>(b) * a + c) * h + i) * wd];
                                T* orow = plane + static_cast<size_t>(i * stride - pad + u) * out_w +
                                          (v - pad);
                                if (stride == 1)
                                    for (int j = j0; j < j1; ++j) orow[j] += wv * xrow[j];
                                else
                                    for (int j = j0; j < j1; ++j)
                                        orow[static_cast<size_t>(j) * stride] += wv * xrow[j];
                            }
                        }
                    }
                }
        return make(Shape{n, cout, out_h, out_w}, std::move(val), {x, w},
                    [x, w, stride, pad](TapeT& t, Id out) {
                        t.conv2d_transpose_backward(x, w, stride, pad, out);
                    });
    }

    Id depthwise_conv2d(Id x, Id w, int stride, int pad) {
        const Shape& sx = nodes_[x].shape;
        const Shape& sw = nodes_[w].shape;
        if (sx.ndim != 4 || sw.ndim != 4 || sw.d[0] != sx.d[1] || sw.d[1] != 1)
            throw std::runtime_error("depthwise: input " + sx.str() + " with kernel " + sw.str());
        int n = sx.d[0], cc = sx.d[1], h = sx.d[2], wd = sx.d[3];
        int kh = sw.d[2], kw = sw.d[3];
        int oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
        if (oh < 1 || ow < 1)
            throw std::runtime_error("depthwise: kernel " + sw.str() + " too large for " +
                                     sx.str());
        std::vector<T> val(static_cast<size_t>(n) * cc * oh * ow, T(0));
        const T* X = nodes_[x].val.data();
        const T* W = nodes_[w].val.data();
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < cc; ++c) {
                T* plane = &val[(static_cast<size_t>(b) * cc + c) * oh * ow];
                for (int u = 0; u < kh; ++u) {
                    auto [i0, i1] = tap_range(u - pad, stride, h, oh);
                    for (int v = 0; v < kw; ++v) {
                        T wv = W[(static_cast<size_t>(c) * kh + u) * kw + v];
                        if (wv == T(0)) continue;
                        auto [j0, j1] = tap_range(v - pad, stride, wd, ow);
                        for (int i = i0; i < i1; ++i) {
                            const T* xrow = &X[((static_cast<size_t>(b) * cc + c) * h +
                                                i * stride - pad + u) * wd + (v - pad)];
                            T* orow = plane + static_cast<size_t>(i) * ow;
                            if (stride == 1)
                                for (int j = j0; j < j1; ++j) orow[j] += wv * xrow[j];
                            else
                                for (int j = j0; j < j1; ++j)
                                    orow[j] += wv * xrow[static_cast<size_t>(j) * stride];
                        }
                    }
                }
            }
        return make(Shape{n, cc, oh, ow}, std::move(val), {x, w},
                    [x, w, stride, pad](TapeT& t, Id out) {
                        t.depthwise_backward(x, w, stride, pad, out);
                    });
    }

    // ---- resampling ----

    Id avg_pool2x(Id x) {
        const Shape& s = nodes_[x].shape;
        if (s.ndim != 4 || s.d[2] % 2 || s.d[3] % 2)
            throw std::runtime_error("avg_pool2x: needs even spatial dims, got " + s.str());
        int n = s.d[0], c = s.d[1], h = s.d[2] / 2, w = s.d[3] / 2;
        std::vector<T> val(static_cast<size_t>(n) * c * h * w);
        for (int nc = 0; nc < n * c; ++nc)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const T* p = &nodes_[x].val[(static_cast<size_t>(nc) * s.d[2] + 2 * i) *
                                                s.d[3] + 2 * j];
                    val[(static_cast<size_t>(nc) * h + i) * w + j] =
                        (p[0] + p[1] + p[s.d[3]] + p[s.d[3] + 1]) * T(0.25);
                }
        return make(Shape{n, c, h, w}, std::move(val), {x}, [x, h, w](TapeT& t, Id out) {
            const auto& g = t.nodes_[out].grad;
            const Shape& s2 = t.nodes_[x].shape;
            for (int nc = 0; nc < s2.d[0] * s2.d[1]; ++nc)
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        T gv = g[(static_cast<size_t>(nc) * h + i) * w + j] * T(0.25);
                        T* p = &t.nodes_[x].grad[(static_cast<size_t>(nc) * s2.d[2] + 2 * i) *
                                                 s2.d[3] + 2 * j];
                        p[0] += gv;
                        p[1] += gv;
                        p[s2.d[3]] += gv;
                        p[s2.d[3] + 1] += gv;
                    }
        });
    }

    Id bilinear_upsample2x(Id x) {
        const Shape& s = nodes_[x].shape;
        if (s.ndim != 4) throw std::runtime_error("upsample: needs 4-d input, got " + s.str());
        int h = s.d[2], w = s.d[3], oh = 2 * h, ow = 2 * w;
        auto taps = [](int o, int extent) {
            double src = (o + 0.5) * 0.5 - 0.5;
            int lo = static_cast<int>(std::floor(src));
            double f = src - lo;
            int i0 = std::clamp(lo, 0, extent - 1);
            int i1 = std::clamp(lo + 1, 0, extent - 1);
            return std::array<double, 3>{static_cast<double>(i0), static_cast<double>(i1), f};
        };
        std::vector<T> val(static_cast<size_t>(s.d[0]) * s.d[1] * oh * ow);
        for (int nc = 0; nc < s.d[0] * s.d[1]; ++nc)
            for (int oy = 0; oy < oh; ++oy) {
                auto ty = taps(oy, h);
                int y0 = static_cast<int>(ty[0]), y1 = static_cast<int>(ty[1]);
                T fy = static_cast<T>(ty[2]);
                for (int ox = 0; ox < ow; ++ox) {
                    auto tx = taps(ox, w);
                    int x0 = static_cast<int>(tx[0]), x1 = static_cast<int>(tx[1]);
                    T fx = static_cast<T>(tx[2]);
                    const T* p = &nodes_[x].val[static_cast<size_t>(nc) * h * w];
                    T v = (T(1) - fy) * ((T(1) - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1]) +
                          fy * ((T(1) - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1]);
                    val[(static_cast<size_t>(nc) * oh + oy) * ow + ox] = v;
                }
            }
        return make(Shape{s.d[0], s.d[1], oh, ow}, std::move(val), {x},
                    [x, h, w, oh, ow, taps](TapeT& t, Id out) {
                        const auto& g = t.nodes_[out].grad;
                        const Shape& s2 = t.nodes_[x].shape;
                        for (int nc = 0; nc < s2.d[0] * s2.d[1]; ++nc)
                            for (int oy = 0; oy < oh; ++oy) {
                                auto ty = taps(oy, h);
                                int y0 = static_cast<int>(ty[0]), y1 = static_cast<int>(ty[1]);
                                T fy = static_cast<T>(ty[2]);
                                for (int ox = 0; ox < ow; ++ox) {
                                    auto tx = taps(ox, w);
                                    int x0 = static_cast<int>(tx[0]), x1 = static_cast<int>(tx[1]);
                                    T fx = static_cast<T>(tx[2]);
                                    T gv = g[(static_cast<size_t>(nc) * oh + oy) * ow + ox];
                                    T* p = &t.nodes_[x].grad[static_cast<size_t>(nc) * h * w];
                                    p[y0 * w + x0] += gv * (T(1) - fy) * (T(1) - fx);
                                    p[y0 * w + x1] += gv * (T(1) - fy) * fx;
                                    p[y1 * w + x0] += gv * fy * (T(1) - fx);
                                    p[y1 * w + x1] += gv * fy * fx;
                                }
                            }
                    });
    }

    // ---- normalization ----

    // Per spatial position, normalize over channels, then apply gain and bias.
    Id layer_norm(Id x, Id gamma, Id beta, T eps = T(1e-6)) {
        const Shape& s = nodes_[x].shape;
        if (s.ndim != 4 || nodes_[gamma].shape.count() != s.d[1] ||
            nodes_[beta].shape.count() != s.d[1])
            throw std::runtime_error("layer_norm: params do not match channels of " + s.str());
        int n = s.d[0], c = s.d[1], hw = s.d[2] * s.d[3];
        std::vector<T> val(nodes_[x].val.size());
        std::vector<T> inv_std(static_cast<size_t>(n) * hw), xhat(nodes_[x].val.size());
        for (int b = 0; b < n; ++b)
            for (int i = 0; i < hw; ++i) {
                T m = 0;
                for (int ch = 0; ch < c; ++ch)
                    m += nodes_[x].val[(static_cast<size_t>(b) * c + ch) * hw + i];
                m /= c;
                T var = 0;
                for (int ch = 0; ch < c; ++ch) {
                    T d = nodes_[x].val[(static_cast<size_t>(b) * c + ch) * hw + i] - m;
                    var += d * d;
                }
                var /= c;
                T is = T(1) / std::sqrt(var + eps);
                inv_std[static_cast<size_t>(b) * hw + i] = is;
                for (int ch = 0; ch < c; ++ch) {
                    size_t at = (static_cast<size_t>(b) * c + ch) * hw + i;
                    T xh = (nodes_[x].val[at] - m) * is;
                    xhat[at] = xh;
                    val[at] = nodes_[gamma].val[ch] * xh + nodes_[beta].val[ch];
                }
            }
        return make(s, std::move(val), {x, gamma, beta},
                    [x, gamma, beta, inv_std, xhat](TapeT& t, Id out) {
                        const auto& g = t.nodes_[out].grad;
                        const Shape& s2 = t.nodes_[x].shape;
                        int n2 = s2.d[0], c2 = s2.d[1], hw2 = s2.d[2] * s2.d[3];
                        for (int b = 0; b < n2; ++b)
                            for (int i = 0; i < hw2; ++i) {
                                T sum_gg = 0, sum_ggx = 0;
                                for (int ch = 0; ch < c2; ++ch) {
                                    size_t at = (static_cast<size_t>(b) * c2 + ch) * hw2 + i;
                                    T gg = g[at] * t.nodes_[gamma].val[ch];
                                    sum_gg += gg;
                                    sum_ggx += gg * xhat[at];
                                    if (t.nodes_[gamma].needs)
                                        t.nodes_[gamma].grad[ch] += g[at] * xhat[at];
                                    if (t.nodes_[beta].needs) t.nodes_[beta].grad[ch] += g[at];
                                }
                                if (!t.nodes_[x].needs) continue;
                                T is = inv_std[static_cast<size_t>(b) * hw2 + i];
                                for (int ch = 0; ch < c2; ++ch) {
                                    size_t at = (static_cast<size_t>(b) * c2 + ch) * hw2 + i;
                                    T gg = g[at] * t.nodes_[gamma].val[ch];
                                    t.nodes_[x].grad[at] +=
                                        is * (gg - sum_gg / c2 - xhat[at] * sum_ggx / c2);
                                }
                            }
                    });
    }

    // Batch statistics over (batch, height, width) per channel in training
    // mode; running statistics in eval mode. Updated running stats are
    // written to the out-parameters (no gradient flows through them).
    Id batch_norm(Id x, Id gamma, Id beta, const std::vector<T>& running_mean,
                  const std::vector<T>& running_var, bool training, T momentum,
                  std::vector<T>* new_mean = nullptr, std::vector<T>* new_var = nullptr,
                  T eps = T(1e-5)) {
        const Shape& s = nodes_[x].shape;
        int c = s.d[1];
        if (s.ndim != 4 || nodes_[gamma].shape.count() != c || nodes_[beta].shape.count() != c ||
            static_cast<int>(running_mean.size()) != c ||
            static_cast<int>(running_var.size()) != c)
            throw std::runtime_error("batch_norm: params do not match channels of " + s.str());
        int n = s.d[0], hw = s.d[2] * s.d[3];
        int count = n * hw;
        std::vector<T> mean(c), var(c);
        if (training) {
            for (int ch = 0; ch < c; ++ch) {
                T m = 0;
                for (int b = 0; b < n; ++b) {
                    const T* p = &nodes_[x].val[(static_cast<size_t>(b) * c + ch) * hw];
                    for (int i = 0; i < hw; ++i) m += p[i];
                }
                m /= count;
                T v = 0;
                for (int b = 0; b < n; ++b) {
                    const T* p = &nodes_[x].val[(static_cast<size_t>(b) * c + ch) * hw];
                    for (int i = 0; i < hw; ++i) v += (p[i] - m) * (p[i] - m);
                }
                v /= count;
                mean[ch] = m;
                var[ch] = v;
            }
            if (new_mean) {
                new_mean->resize(c);
                new_var->resize(c);
                for (int ch = 0; ch < c; ++ch) {
                    (*new_mean)[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean[ch];
                    (*new_var)[ch] = (T(1) - momentum) * running_var[ch] + momentum * var[ch];
                }
            }
        } else {
            mean = running_mean;
            var = running_var;
        }
        std::vector<T> val(nodes_[x].val.size()), xhat(nodes_[x].val.size()), inv_std(c);
        for (int ch = 0; ch < c; ++ch) inv_std[ch] = T(1) / std::sqrt(var[ch] + eps);
        for (int b = 0; b < n; ++b)
            for (int ch = 0; ch < c; ++ch) {
                size_t base = (static_cast<size_t>(b) * c + ch) * hw;
                for (int i = 0; i < hw; ++i) {
                    T xh = (nodes_[x].val[base + i] - mean[ch]) * inv_std[ch];
                    xhat[base + i] = xh;
                    val[base + i] = nodes_[gamma].val[ch] * xh + nodes_[beta].val[ch];
                }
            }
        bool use_batch_stats = training;
        return make(s, std::move(val), {x, gamma, beta},
                    [x, gamma, beta, xhat, inv_std, use_batch_stats](TapeT& t, Id out) {
                        const auto& g = t.nodes_[out].grad;
                        const Shape& s2 = t.nodes_[x].shape;
                        int n2 = s2.d[0], c2 = s2.d[1], hw2 = s2.d[2] * s2.d[3];
                        int count2 = n2 * hw2;
                        for (int ch = 0; ch < c2; ++ch) {
                            T sum_g = 0, sum_gx = 0;
                            for (int b = 0; b < n2; ++b) {
                                size_t base = (static_cast<size_t>(b) * c2 + ch) * hw2;
                                for (int i = 0; i < hw2; ++i) {
                                    sum_g += g[base + i];
                                    sum_gx += g[base + i] * xhat[base + i];
                                }
                            }
                            if (t.nodes_[gamma].needs) t.nodes_[gamma].grad[ch] += sum_gx;
                            if (t.nodes_[beta].needs) t.nodes_[beta].grad[ch] += sum_g;
                            if (!t.nodes_[x].needs) continue;
                            T gm = t.nodes_[gamma].val[ch];
                            for (int b = 0; b < n2; ++b) {
                                size_t base = (static_cast<size_t>(b) * c2 + ch) * hw2;
                                for (int i = 0; i < hw2; ++i) {
                                    if (use_batch_stats)
                                        t.nodes_[x].grad[base + i] +=
                                            gm * inv_std[ch] *
                                            (g[base + i] - sum_g / count2 -
                                             xhat[base + i] * sum_gx / count2);
                                    else
                                        t.nodes_[x].grad[base + i] +=
                                            gm * inv_std[ch] * g[base + i];
                                }
                            }
                        }
                    });
    }

    // ---- losses ----

    // Closed-form KL against the standard normal, summed over elements.
    Id kl_divergence(Id mu, Id logvar) {
        if (nodes_[mu].shape != nodes_[logvar].shape)
            throw std::runtime_error("kl: " + nodes_[mu].shape.str() + " vs " +
                                     nodes_[logvar].shape.str());
        T total = 0;
        for (size_t i = 0; i < nodes_[mu].val.size(); ++i) {
            T m = nodes_[mu].val[i], lv = nodes_[logvar].val[i];
            total += T(-0.5) * (T(1) + lv - m * m - std::exp(lv));
        }
        return make(Shape{}, {total}, {mu, logvar}, [mu, logvar](TapeT& t, Id out) {
            T g = t.nodes_[out].grad[0];
            for (size_t i = 0; i < t.nodes_[mu].val.size(); ++i) {
                if (t.nodes_[mu].needs) t.nodes_[mu].grad[i] += g * t.nodes_[mu].val[i];
                if (t.nodes_[logvar].needs)
                    t.nodes_[logvar].grad[i] +=
                        g * T(-0.5) * (T(1) - std::exp(t.nodes_[logvar].val[i]));
            }
        });
    }

    // ---- backward ----

    void backward(Id loss) {
        if (nodes_[loss].shape.count() != 1)
            throw std::runtime_error("backward: output has shape " + nodes_[loss].shape.str() +
                                     ", expected a scalar");
        for (auto& n : nodes_)
            if (n.needs) n.grad.assign(n.val.size(), T(0));
        if (!nodes_[loss].needs) return;  // nothing reachable requires grad
        nodes_[loss].grad.assign(1, T(1));
        for (Id i = loss; i >= 0; --i)
            if (nodes_[i].needs && nodes_[i].back) nodes_[i].back(*this, i);
    }

    // Generic node constructor for ops defined outside the class.
    Id make(const Shape& shape, std::vector<T> val, std::initializer_list<Id> parents,
            std::function<void(TapeT&, Id)> back) {
        Node n;
        n.shape = shape;
        n.val = std::move(val);
        for (Id p : parents) n.needs = n.needs || nodes_[p].needs;
        if (n.needs) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size()) - 1;
    }

    void accumulate(Id target, const std::vector<T>& g) {
        if (!nodes_[target].needs) return;
        auto& dst = nodes_[target].grad;
        for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    void accumulate_scaled(Id target, const std::vector<T>& g, T s) {
        if (!nodes_[target].needs) return;
        auto& dst = nodes_[target].grad;
        for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * s;
    }
    std::vector<T>& grad_buffer(Id id) { return nodes_[id].grad; }
    bool needs_grad(Id id) const { return nodes_[id].needs; }

  private:
    std::vector<Node> nodes_;

    template <typename FwdFn, typename BackFn>
    Id unary(Id a, FwdFn fwd, BackFn back) {
        std::vector<T> val(nodes_[a].val.size());
        for (size_t i = 0; i < val.size(); ++i) val[i] = fwd(nodes_[a].val[i]);
        return make(nodes_[a].shape, std::move(val), {a},
                    [a, back](TapeT& t, Id out) { back(t, out, a); });
    }
    template <typename FwdFn, typename BackFn>
    Id binary(Id a, Id b, FwdFn fwd, BackFn back) {
        if (nodes_[a].shape != nodes_[b].shape)
            throw std::runtime_error("elementwise: " + nodes_[a].shape.str() + " vs " +
                                     nodes_[b].shape.str());
        std::vector<T> val(nodes_[a].val.size());
        for (size_t i = 0; i < val.size(); ++i)
            val[i] = fwd(nodes_[a].val[i], nodes_[b].val[i]);
        return make(nodes_[a].shape, std::move(val), {a, b},
                    [a, b, back](TapeT& t, Id out) { back(t, out, a, b); });
    }

    void conv2d_backward(Id x, Id w, int stride, int pad, Id out) {
        const auto& g = nodes_[out].grad;
        const Shape& sx = nodes_[x].shape;
        const Shape& sw = nodes_[w].shape;
        const Shape& so = nodes_[out].shape;
        int n = sx.d[0], cin = sx.d[1], h = sx.d[2], wd = sx.d[3];
        int cout = sw.d[0], kh = sw.d[2], kw = sw.d[3];
        int oh = so.d[2], ow = so.d[3];
        bool gx = nodes_[x].needs, gw = nodes_[w].needs;
        const T* X = nodes_[x].val.data();
        const T* W = nodes_[w].val.data();
        for (int b = 0; b < n; ++b)
            for (int o = 0; o < cout; ++o) {
                const T* gplane = &g[(static_cast<size_t>(b) * cout + o) * oh * ow];
                for (int c = 0; c < cin; ++c)
                    for (int u = 0; u < kh; ++u) {
                        auto [i0, i1] = tap_range(u - pad, stride, h, oh);
                        for (int v = 0; v < kw; ++v) {
                            auto [j0, j1] = tap_range(v - pad, stride, wd, ow);
                            size_t wi = ((static_cast<size_t>(o) * cin + c) * kh + u) * kw + v;
                            T wv = W[wi];
                            T wacc = 0;
                            for (int i = i0; i < i1; ++i) {
                                size_t row = ((static_cast<size_t>(b) * cin + c) * h +
                                              i * stride - pad + u) * wd + (v - pad);
                                const T* grow = gplane + static_cast<size_t>(i) * ow;
                                if (gx) {
                                    T* gxrow = nodes_[x].grad.data() + row;
                                    if (stride == 1)
                                        for (int j = j0; j < j1; ++j) gxrow[j] += grow[j] * wv;
                                    else
                                        for (int j = j0; j < j1; ++j)
                                            gxrow[static_cast<size_t>(j) * stride] += grow[j] * wv;
                                }
                                if (gw) {
                                    const T* xrow = X + row;
                                    if (stride == 1)
                                        for (int j = j0; j < j1; ++j) wacc += grow[j] * xrow[j];
                                    else
                                        for (int j = j0; j < j1; ++j)
                                            wacc += grow[j] * xrow[static_cast<size_t>(j) * stride];
                                }
                            }
                            if (gw) nodes_[w].grad[wi] += wacc;
                        }
                    }
            }
    }

    void conv2d_transpose_backward(Id x, Id w, int stride, int pad, Id out) {
        const auto& g = nodes_[out].grad;
        const Shape& sx = nodes_[x].shape;
        const Shape& sw = nodes_[w].shape;
        const Shape& so = nodes_[out].shape;
        int n = sx.d[0], a = sx.d[1], h = sx.d[2], wd = sx.d[3];
        int cout = sw.d[1], kh = sw.d[2], kw = sw.d[3];
        int oh = so.d[2], ow = so.d[3];
        bool gx = nodes_[x].needs, gw = nodes_[w].needs;
        const T* X = nodes_[x].val.data();
        const T* W = nodes_[w].val.data();
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < a; ++c)
                for (int o = 0; o < cout; ++o) {
                    const T* gplane = &g[(static_cast<size_t>(b) * cout + o) * oh * ow];
                    for (int u = 0; u < kh; ++u) {
                        auto [i0, i1] = tap_range(u - pad, stride, oh, h);
                        for (int v = 0; v < kw; ++v) {
                            auto [j0, j1] = tap_range(v - pad, stride, ow, wd);
                            size_t wi = ((static_cast<size_t>(c) * cout + o) * kh + u) * kw + v;
                            T wv = W[wi];
                            T wacc = 0;
                            for (int i = i0; i < i1; ++i) {
                                size_t row = ((static_cast<size_t>(b) * a + c) * h + i) * wd;
                                const T* grow = gplane +
                                                static_cast<size_t>(i * stride - pad + u) * ow +
                                                (v - pad);
                                if (gx) {
                                    T* gxrow = nodes_[x].grad.data() + row;
                                    if (stride == 1)
                                        for (int j = j0; j < j1; ++j) gxrow[j] += grow[j] * wv;
                                    else
                                        for (int j = j0; j < j1; ++j)
                                            gxrow[j] += grow[static_cast<size_t>(j) * stride] * wv;
                                }
                                if (gw) {
                                    const T* xrow = X + row;
                                    if (stride == 1)
                                        for (int j = j0; j < j1; ++j) wacc += xrow[j] * grow[j];
                                    else
                                        for (int j = j0; j < j1; ++j)
                                            wacc += xrow[j] * grow[static_cast<size_t>(j) * stride];
                                }
                            }
                            if (gw) nodes_[w].grad[wi] += wacc;
                        }
                    }
                }
    }

    void depthwise_backward(Id x, Id w, int stride, int pad, Id out) {
        const auto& g = nodes_[out].grad;
        const Shape& sx = nodes_[x].shape;
        const Shape& sw = nodes_[w].shape;
        const Shape& so = nodes_[out].shape;
        int n = sx.d[0], cc = sx.d[1], h = sx.d[2], wd = sx.d[3];
        int kh = sw.d[2], kw = sw.d[3];
        int oh = so.d[2], ow = so.d[3];
        bool gx = nodes_[x].needs, gw = nodes_[w].needs;
        const T* X = nodes_[x].val.data();
        const T* W = nodes_[w].val.data();
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < cc; ++c) {
                const T* gplane = &g[(static_cast<size_t>(b) * cc + c) * oh * ow];
                for (int u = 0; u < kh; ++u) {
                    auto [i0, i1] = tap_range(u - pad, stride, h, oh);
                    for (int v = 0; v < kw; ++v) {
                        auto [j0, j1] = tap_range(v - pad, stride, wd, ow);
                        size_t wi = (static_cast<size_t>(c) * kh + u) * kw + v;
                        T wv = W[wi];
                        T wacc = 0;
                        for (int i = i0; i < i1; ++i) {
                            size_t row = ((static_cast<size_t>(b) * cc + c) * h +
                                          i * stride - pad + u) * wd + (v - pad);
                            const T* grow = gplane + static_cast<size_t>(i) * ow;
                            if (gx) {
                                T* gxrow = nodes_[x].grad.data() + row;
                                if (stride == 1)
                                    for (int j = j0; j < j1; ++j) gxrow[j] += grow[j] * wv;
                                else
                                    for (int j = j0; j < j1; ++j)
                                        gxrow[static_cast<size_t>(j) * stride] += grow[j] * wv;
                            }
                            if (gw) {
                                const T* xrow = X + row;
                                if (stride == 1)
                                    for (int j = j0; j < j1; ++j) wacc += grow[j] * xrow[j];
                                else
                                    for (int j = j0; j < j1; ++j)
                                        wacc += grow[j] * xrow[static_cast<size_t>(j) * stride];
                            }
                        }
                        if (gw) nodes_[w].grad[wi] += wacc;
                    }
                }
            }
    }
};

using Tape = TapeT<float>;
using TapeF64 = TapeT<double>;

}  // namespace drape
