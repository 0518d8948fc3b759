#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "drape/image.hpp"
#include "drape/nn.hpp"
#include "drape/rng.hpp"

namespace drape {

// The three condition inputs are compressed by separate encoders into a
// shared 4x8 grid; the widths below stack to the combined conditioning
// width the draping model consumes.
struct ConditionerConfig {
    EncoderConfig trunk;  // widths.back() is replaced by each code width
    int template_code = 16;
    int body_code = 32;
    int normal_code = 80;
    double beta_kl = 1e-4;  // weight of the KL term on the normal codes
    float logvar_floor = -10.0f;
    float logvar_ceil = 10.0f;

    int combined() const { return template_code + body_code + normal_code; }
    void validate() const;
};

// Encoded condition grids, each [width x 4 x 8] CHW with tanh applied.
struct ConditionCodes {
    int grid_h = 0, grid_w = 0;
    int garment_width = 0, body_width = 0, normal_width = 0;
    std::vector<float> garment, body, normal;

    int combined_width() const { return garment_width + body_width + normal_width; }
    // Channel-stacked [combined x h x w] in garment, body, normal order.
    std::vector<float> stacked() const;
};

// Template autoencoder, body autoencoder, and the variational normal model
// (its decoder is conditioned on the template and body codes).
struct Conditioners {
    ConditionerConfig config;
    ConvNextEncoder enc_template, enc_body, enc_normal;
    ConvNextDecoder dec_template, dec_body, dec_normal;
    Conv2d norm_mu, norm_logvar;  // 1x1 heads over the normal code grid

    Conditioners() = default;
    Conditioners(const ConditionerConfig& cfg, Pcg32& rng);

    std::vector<Param*> template_params();
    std::vector<Param*> body_params();
    std::vector<Param*> normal_params();
    std::vector<Param*> params();
    void freeze();
    bool frozen();

    void save(NamedTensorArchive& ar);
    void save(const std::string& path);
    static Conditioners load(const NamedTensorArchive& ar);
    static Conditioners load(const std::string& path);
};

// tanh(encoder(image)) for each condition input. Requires frozen weights;
// deterministic given the inputs.
ConditionCodes condition_encode(Conditioners& cond, const UvImage& garment_template,
                                const UvImage& body_depth, const UvImage& normal_map);

// Draws normal codes from the prior, decodes them conditioned on the
// template and body codes, renormalizes in-mask pixels to unit length, and
// zeroes the background. raw_out, when given, receives the pre-renormalized
// decoder output.
UvImage sample_normals(Conditioners& cond, const UvImage& garment_template,
                       const UvImage& body_depth, Pcg32& rng, UvImage* raw_out = nullptr);

struct ConditionerSample {
    const UvImage* garment_template = nullptr;
    const UvImage* body_depth = nullptr;
    const UvImage* normal_map = nullptr;
};

struct ConditionerTrainResult {
    std::vector<float> template_loss, body_loss, normal_loss;  // per step
};

// Three stages: template autoencoder, body autoencoder, then the normal
// model against the frozen template/body codes. Losses are batch means of
// 1 - masked MS-SSIM; the normal stage adds beta_kl * KL / numel. All
// weights are frozen on return.
ConditionerTrainResult train_conditioners(Conditioners& cond,
                                          const std::vector<ConditionerSample>& data,
                                          int steps_per_stage, Pcg32& rng, int msssim_window = 11,
                                          std::ostream* log = nullptr);

}  // namespace drape
