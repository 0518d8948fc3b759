#pragma once

#include <string>
#include <vector>

#include "drape/adam.hpp"
#include "drape/archive.hpp"
#include "drape/rng.hpp"
#include "drape/tensor.hpp"

namespace drape {

std::vector<float> conv_init(Pcg32& rng, int fan_in, int count);

void collect_params(std::vector<Param*>& out, std::initializer_list<Param*> ps);
void freeze_params(const std::vector<Param*>& params);
bool all_frozen(const std::vector<Param*>& params);
void save_params(const std::vector<Param*>& params, NamedTensorArchive& ar);
void load_params(const std::vector<Param*>& params, const NamedTensorArchive& ar);

struct Conv2d {
    Param w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(const std::string& name, int in, int out, int k, int stride, int pad, Pcg32& rng);

    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x) {
        return t.add_channel_bias(t.conv2d(x, bp.bind(t, w), stride, pad), bp.bind(t, b));
    }
    void collect(std::vector<Param*>& out) { collect_params(out, {&w, &b}); }
};

// Weight layout [in, out, k, k]; with k == stride and no padding this exactly
// inverts a patchify convolution.
struct ConvTranspose2d {
    Param w, b;
    int stride = 1, pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(const std::string& name, int in, int out, int k, int stride, int pad,
                    Pcg32& rng);

    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x) {
        return t.add_channel_bias(t.conv2d_transpose(x, bp.bind(t, w), stride, pad),
                                  bp.bind(t, b));
    }
    void collect(std::vector<Param*>& out) { collect_params(out, {&w, &b}); }
};

struct DepthwiseConv2d {
    Param w, b;
    int pad = 0;

    DepthwiseConv2d() = default;
    DepthwiseConv2d(const std::string& name, int channels, int k, Pcg32& rng);

    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x) {
        return t.add_channel_bias(t.depthwise_conv2d(x, bp.bind(t, w), 1, pad), bp.bind(t, b));
    }
    void collect(std::vector<Param*>& out) { collect_params(out, {&w, &b}); }
};

struct LayerNorm {
    Param gamma, beta;

    LayerNorm() = default;
    LayerNorm(const std::string& name, int channels);

    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x) {
        return t.layer_norm(x, bp.bind(t, gamma), bp.bind(t, beta));
    }
    void collect(std::vector<Param*>& out) { collect_params(out, {&gamma, &beta}); }
};

// Running statistics live in frozen params so they serialize and survive
// freeze assertions, but never receive optimizer updates.
struct BatchNorm2d {
    Param gamma, beta, running_mean, running_var;
    float momentum = 0.1f;

    BatchNorm2d() = default;
    BatchNorm2d(const std::string& name, int channels);

    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x, bool training) {
        std::vector<T> rm(running_mean.value.begin(), running_mean.value.end());
        std::vector<T> rv(running_var.value.begin(), running_var.value.end());
        if (training) {
            std::vector<T> nm, nv;
            int y = t.batch_norm(x, bp.bind(t, gamma), bp.bind(t, beta), rm, rv, true,
                                 static_cast<T>(momentum), &nm, &nv);
            for (size_t i = 0; i < nm.size(); ++i) {
                running_mean.value[i] = static_cast<float>(nm[i]);
                running_var.value[i] = static_cast<float>(nv[i]);
            }
            return y;
        }
        return t.batch_norm(x, bp.bind(t, gamma), bp.bind(t, beta), rm, rv, false,
                            static_cast<T>(momentum));
    }
    void collect(std::vector<Param*>& out) {
        collect_params(out, {&gamma, &beta, &running_mean, &running_var});
    }
};

// Depthwise conv -> layer norm -> 1x1 expand x4 -> GELU -> 1x1 project, with
// a residual connection around the whole block.
struct ConvNextBlock {
    DepthwiseConv2d dw;
    LayerNorm norm;
    Conv2d expand, project;

    ConvNextBlock() = default;
    ConvNextBlock(const std::string& name, int dim, int kernel, Pcg32& rng);

    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x) {
        int y = dw.forward(t, bp, x);
        y = norm.forward(t, bp, y);
        y = expand.forward(t, bp, y);
        y = t.gelu(y);
        y = project.forward(t, bp, y);
        return t.add(x, y);
    }
    void collect(std::vector<Param*>& out);
};

struct Downsample {
    LayerNorm norm;
    Conv2d conv;  // 2x2, stride 2

    Downsample() = default;
    Downsample(const std::string& name, int in, int out, Pcg32& rng);

    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x) {
        return conv.forward(t, bp, norm.forward(t, bp, x));
    }
    void collect(std::vector<Param*>& out);
};

// Stage layout of a patch encoder: stem stride, then len(depths) stages with
// a 2x downsample between consecutive stages. Spatial reduction is
// stem_stride * 2^(stages - 1).
struct EncoderConfig {
    std::vector<int> depths;
    std::vector<int> widths;
    int kernel = 7;
    int stem_stride = 4;

    int stages() const { return static_cast<int>(depths.size()); }
    int total_reduction() const;
    int code_width() const { return widths.back(); }
    void validate() const;
};

// Tail-slices the stage lists so stem * 2^(stages-1) equals height / 4,
// which pins the output grid at 4x8 for a width x height (width = 2 *
// height) input regardless of resolution.
EncoderConfig sliced_encoder_config(int width, int height, const std::vector<int>& depths,
                                    const std::vector<int>& widths, int kernel);

// Reference stage recipe (deep stages, wide features) sliced per resolution.
EncoderConfig deep_encoder_config(int width, int height);
// Narrow recipe for small experiments and tests.
EncoderConfig toy_encoder_config(int width, int height);

struct ConvNextEncoder {
    EncoderConfig config;
    Conv2d stem;
    LayerNorm stem_norm;
    std::vector<ConvNextBlock> blocks;  // flattened stage-major
    std::vector<Downsample> downs;

    ConvNextEncoder() = default;
    ConvNextEncoder(const std::string& name, int in_channels, const EncoderConfig& cfg,
                    Pcg32& rng);

    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x) {
        int y = stem_norm.forward(t, bp, stem.forward(t, bp, x));
        int bi = 0;
        for (int s = 0; s < config.stages(); ++s) {
            if (s > 0) y = downs[s - 1].forward(t, bp, y);
            for (int d = 0; d < config.depths[s]; ++d) y = blocks[bi++].forward(t, bp, y);
        }
        return y;
    }
    void collect(std::vector<Param*>& out);
};

// Mirror of the encoder: blocks at each width from coarse to fine with 2x
// transpose upsampling between stages, an inverse-stem transpose, and a 1x1
// projection to the output channels (activation left to the caller).
struct ConvNextDecoder {
    EncoderConfig config;
    Conv2d inlet;  // 1x1, latent channels -> widths.back()
    std::vector<ConvNextBlock> blocks;
    std::vector<ConvTranspose2d> ups;
    ConvTranspose2d unstem;
    Conv2d outlet;  // 1x1 -> out channels

    ConvNextDecoder() = default;
    ConvNextDecoder(const std::string& name, int in_channels, int out_channels,
                    const EncoderConfig& cfg, Pcg32& rng);

    template <typename T>
    int forward(TapeT<T>& t, BoundParams<T>& bp, int x) {
        int y = inlet.forward(t, bp, x);
        int bi = 0;
        for (int s = config.stages() - 1; s >= 0; --s) {
            for (int d = 0; d < config.depths[s]; ++d) y = blocks[bi++].forward(t, bp, y);
            if (s > 0) y = ups[s - 1].forward(t, bp, y);
        }
        y = unstem.forward(t, bp, y);
        return outlet.forward(t, bp, y);
    }
    void collect(std::vector<Param*>& out);
};

// z = mu + exp(logvar/2) * eta with logvar clamped to [floor, ceil]. Entries
// clamped at the floor snap to exactly zero variance, so their samples are
// bit-equal to mu. Writes the clamped logvar (the one the KL term should
// see) to logvar_out.
template <typename T>
int reparameterize(TapeT<T>& t, int mu, int logvar_raw, float floor, float ceil, int eta,
                   int* logvar_out) {
    int lv = t.clamp(logvar_raw, static_cast<T>(floor), static_cast<T>(ceil));
    Shape sh = t.shape(lv);
    std::vector<T> snap(t.val(lv).size());
    for (size_t i = 0; i < snap.size(); ++i)
        snap[i] = t.val(lv)[i] <= static_cast<T>(floor) ? T(0) : T(1);
    int sigma = t.mul(t.exp_op(t.scale(lv, T(0.5))), t.constant(sh, std::move(snap)));
    if (logvar_out) *logvar_out = lv;
    return t.add(mu, t.mul(sigma, eta));
}

}  // namespace drape
