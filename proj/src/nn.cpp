#include "drape/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace drape {

std::vector<float> conv_init(Pcg32& rng, int fan_in, int count) {
    std::vector<float> v(count);
    double stddev = std::sqrt(2.0 / fan_in);
    for (float& x : v) x = static_cast<float>(rng.normal(0.0, stddev));
    return v;
}

void collect_params(std::vector<Param*>& out, std::initializer_list<Param*> ps) {
    for (Param* p : ps) out.push_back(p);
}

void freeze_params(const std::vector<Param*>& params) {
    for (Param* p : params) p->frozen = true;
}

bool all_frozen(const std::vector<Param*>& params) {
    for (const Param* p : params)
        if (!p->frozen) return false;
    return true;
}

void save_params(const std::vector<Param*>& params, NamedTensorArchive& ar) {
    for (const Param* p : params) {
        std::vector<uint64_t> dims;
        for (int i = 0; i < p->shape.ndim; ++i) dims.push_back(p->shape.d[i]);
        ar.add(NamedTensor::make_f32(p->name, dims, p->value));
    }
}

void load_params(const std::vector<Param*>& params, const NamedTensorArchive& ar) {
    for (Param* p : params) {
        if (!ar.has(p->name))
            throw std::runtime_error("params: archive is missing tensor " + p->name);
        const NamedTensor& t = ar.get(p->name);
        if (t.dtype != Dtype::f32 || t.element_count() != p->value.size())
            throw std::runtime_error("params: tensor " + p->name + " has " +
                                     std::to_string(t.element_count()) + " elements, expected " +
                                     std::to_string(p->value.size()));
        p->value = t.f32;
    }
}

Conv2d::Conv2d(const std::string& name, int in, int out, int k, int stride_, int pad_,
               Pcg32& rng)
    : w(name + ".w", Shape{out, in, k, k}, conv_init(rng, in * k * k, out * in * k * k)),
      b(name + ".b", Shape{out}, std::vector<float>(out, 0.0f)),
      stride(stride_),
      pad(pad_) {}

ConvTranspose2d::ConvTranspose2d(const std::string& name, int in, int out, int k, int stride_,
                                 int pad_, Pcg32& rng)
    : w(name + ".w", Shape{in, out, k, k}, conv_init(rng, in * k * k, in * out * k * k)),
      b(name + ".b", Shape{out}, std::vector<float>(out, 0.0f)),
      stride(stride_),
      pad(pad_) {}

DepthwiseConv2d::DepthwiseConv2d(const std::string& name, int channels, int k, Pcg32& rng)
    : w(name + ".w", Shape{channels, 1, k, k}, conv_init(rng, k * k, channels * k * k)),
      b(name + ".b", Shape{channels}, std::vector<float>(channels, 0.0f)),
      pad(k / 2) {}

LayerNorm::LayerNorm(const std::string& name, int channels)
    : gamma(name + ".g", Shape{channels}, std::vector<float>(channels, 1.0f)),
      beta(name + ".b", Shape{channels}, std::vector<float>(channels, 0.0f)) {}

BatchNorm2d::BatchNorm2d(const std::string& name, int channels)
    : gamma(name + ".g", Shape{channels}, std::vector<float>(channels, 1.0f)),
      beta(name + ".b", Shape{channels}, std::vector<float>(channels, 0.0f)),
      running_mean(name + ".rm", Shape{channels}, std::vector<float>(channels, 0.0f)),
      running_var(name + ".rv", Shape{channels}, std::vector<float>(channels, 1.0f)) {
    running_mean.frozen = true;
    running_var.frozen = true;
}

ConvNextBlock::ConvNextBlock(const std::string& name, int dim, int kernel, Pcg32& rng)
    : dw(name + ".dw", dim, kernel, rng),
      norm(name + ".ln", dim),
      expand(name + ".pw1", dim, 4 * dim, 1, 1, 0, rng),
      project(name + ".pw2", 4 * dim, dim, 1, 1, 0, rng) {}

void ConvNextBlock::collect(std::vector<Param*>& out) {
    dw.collect(out);
    norm.collect(out);
    expand.collect(out);
    project.collect(out);
}

Downsample::Downsample(const std::string& name, int in, int out, Pcg32& rng)
    : norm(name + ".ln", in), conv(name + ".conv", in, out, 2, 2, 0, rng) {}

void Downsample::collect(std::vector<Param*>& out) {
    norm.collect(out);
    conv.collect(out);
}

int EncoderConfig::total_reduction() const {
    int r = stem_stride;
    for (int s = 1; s < stages(); ++s) r *= 2;
    return r;
}

void EncoderConfig::validate() const {
    if (depths.empty() || depths.size() != widths.size())
        throw std::runtime_error("encoder config: depths and widths must match and be nonempty");
    for (int d : depths)
        if (d < 1) throw std::runtime_error("encoder config: stage depth must be positive");
    for (int w : widths)
        if (w < 1) throw std::runtime_error("encoder config: stage width must be positive");
    if (kernel < 1 || kernel % 2 == 0)
        throw std::runtime_error("encoder config: kernel must be odd and positive");
    if (stem_stride < 1) throw std::runtime_error("encoder config: stem stride must be positive");
}

ConvNextEncoder::ConvNextEncoder(const std::string& name, int in_channels,
                                 const EncoderConfig& cfg, Pcg32& rng)
    : config(cfg) {
    cfg.validate();
    stem = Conv2d(name + ".stem", in_channels, cfg.widths[0], cfg.stem_stride, cfg.stem_stride,
                  0, rng);
    stem_norm = LayerNorm(name + ".stemln", cfg.widths[0]);
    for (int s = 0; s < cfg.stages(); ++s) {
        if (s > 0)
            downs.push_back(Downsample(name + ".down" + std::to_string(s - 1),
                                       cfg.widths[s - 1], cfg.widths[s], rng));
        for (int d = 0; d < cfg.depths[s]; ++d)
            blocks.push_back(ConvNextBlock(
                name + ".s" + std::to_string(s) + "b" + std::to_string(d), cfg.widths[s],
                cfg.kernel, rng));
    }
}

void ConvNextEncoder::collect(std::vector<Param*>& out) {
    stem.collect(out);
    stem_norm.collect(out);
    int bi = 0;
    for (int s = 0; s < config.stages(); ++s) {
        if (s > 0) downs[s - 1].collect(out);
        for (int d = 0; d < config.depths[s]; ++d) blocks[bi++].collect(out);
    }
}

ConvNextDecoder::ConvNextDecoder(const std::string& name, int in_channels, int out_channels,
                                 const EncoderConfig& cfg, Pcg32& rng)
    : config(cfg) {
    cfg.validate();
    inlet = Conv2d(name + ".in", in_channels, cfg.widths.back(), 1, 1, 0, rng);
    ups.resize(cfg.stages() - 1);
    for (int s = cfg.stages() - 1; s >= 0; --s) {
        for (int d = 0; d < cfg.depths[s]; ++d)
            blocks.push_back(ConvNextBlock(
                name + ".s" + std::to_string(s) + "b" + std::to_string(d), cfg.widths[s],
                cfg.kernel, rng));
        if (s > 0)
            ups[s - 1] = ConvTranspose2d(name + ".up" + std::to_string(s - 1), cfg.widths[s],
                                         cfg.widths[s - 1], 2, 2, 0, rng);
    }
    unstem = ConvTranspose2d(name + ".unstem", cfg.widths[0], cfg.widths[0], cfg.stem_stride,
                             cfg.stem_stride, 0, rng);
    outlet = Conv2d(name + ".out", cfg.widths[0], out_channels, 1, 1, 0, rng);
}

void ConvNextDecoder::collect(std::vector<Param*>& out) {
    inlet.collect(out);
    int bi = 0;
    for (int s = config.stages() - 1; s >= 0; --s) {
        for (int d = 0; d < config.depths[s]; ++d) blocks[bi++].collect(out);
        if (s > 0) ups[s - 1].collect(out);
    }
    unstem.collect(out);
    outlet.collect(out);
}

EncoderConfig sliced_encoder_config(int width, int height, const std::vector<int>& depths,
                                    const std::vector<int>& widths, int kernel) {
    if (width != 2 * height || height < 8 || height % 4 != 0 ||
        ((height / 4) & (height / 4 - 1)) != 0)
        throw std::runtime_error("encoder: input must be 2h x h with h = 4 * 2^k, got " +
                                 std::to_string(width) + "x" + std::to_string(height));
    int red = height / 4;
    int stem, stages;
    if (red == 2) {
        stem = 2;
        stages = 1;
    } else {
        stem = 4;
        stages = 1;
        for (int r = 4; r < red; r *= 2) ++stages;
    }
    if (stages > static_cast<int>(depths.size()))
        throw std::runtime_error("encoder: resolution " + std::to_string(width) + "x" +
                                 std::to_string(height) + " needs more stages than defined");
    EncoderConfig cfg;
    cfg.depths.assign(depths.end() - stages, depths.end());
    cfg.widths.assign(widths.end() - stages, widths.end());
    cfg.kernel = kernel;
    cfg.stem_stride = stem;
    cfg.validate();
    return cfg;
}

EncoderConfig deep_encoder_config(int width, int height) {
    return sliced_encoder_config(width, height, {3, 3, 3, 9, 3}, {32, 64, 128, 256, 128}, 7);
}

EncoderConfig toy_encoder_config(int width, int height) {
    return sliced_encoder_config(width, height, {1, 1, 2, 2, 2}, {8, 12, 16, 24, 32}, 5);
}

}  // namespace drape
