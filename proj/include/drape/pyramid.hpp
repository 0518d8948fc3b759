#pragma once

#include <array>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drape/body_model.hpp"
#include "drape/conditioners.hpp"
#include "drape/losses.hpp"
#include "drape/normalize.hpp"
#include "drape/rescale.hpp"
#include "drape/rng.hpp"
#include "drape/synth.hpp"
#include "drape/uv_atlas.hpp"

namespace drape {

struct TrainConfig {
    double lambda = 0.1;          // weight of the geometric terms
    double delta0 = 1e-4;         // initial KL weight, must stay below 1e-3
    double delta_factor = 1.5;    // multiplied in when the loss flattens
    double delta_cap = 0.1;
    int flat_window = 200;        // steps per flatness window
    double flat_threshold = 0.01; // relative improvement below this ramps delta
    int normal_start = 2000;      // global step the normal loss joins at
    double lr = 1e-4;
    int batch = 4;
    int steps = 100;              // per level when incremental, total end-to-end
    bool end_to_end = false;
    bool with_reg = true;         // lambda drops to 0 when off
    double collision_margin = 0.004;
    int eval_frames = 48;         // frames sampled for the V2V summary, 0 = all

    void validate() const;
};

// One conditional VAE level: trunk encoder over the (offset) image, 1x1
// heads fusing the condition grid into the latent distribution, mirrored
// decoder fed the sample stacked with the conditions.
struct DrapeVae {
    EncoderConfig config;
    int latent = 0;
    int cond = 0;
    float logvar_floor = -10.0f, logvar_ceil = 10.0f;
    ConvNextEncoder encoder;
    Conv2d mu_head, logvar_head;
    ConvNextDecoder decoder;

    DrapeVae() = default;
    DrapeVae(const std::string& prefix, const EncoderConfig& cfg, int latent_width,
             int cond_width, Pcg32& rng);

    void collect(std::vector<Param*>& out);

    struct Out {
        int out = -1, mu = -1, logvar = -1;
    };

    template <typename T>
    Out forward_posterior(TapeT<T>& t, BoundParams<T>& bp, int target, int codes, int eta) {
        int fused = t.concat_channels(encoder.forward(t, bp, target), codes);
        int mu = mu_head.forward(t, bp, fused);
        int lv = -1;
        int z = reparameterize(t, mu, logvar_head.forward(t, bp, fused), logvar_floor,
                               logvar_ceil, eta, &lv);
        int y = t.tanh_op(decoder.forward(t, bp, t.concat_channels(z, codes)));
        return {y, mu, lv};
    }

    template <typename T>
    int forward_prior(TapeT<T>& t, BoundParams<T>& bp, int eta, int codes) {
        return t.tanh_op(decoder.forward(t, bp, t.concat_channels(eta, codes)));
    }
};

struct LevelSpec {
    int width = 0, height = 0;
    EncoderConfig config;
};

// Strictly doubling level stack from (base_width x base_height) upward.
std::vector<LevelSpec> make_level_specs(int base_width, int base_height, int levels, bool toy);

// The level VAEs plus the frozen 2x upscalers bridging them. Upscalers are
// trained separately and attached in memory; the checkpoint holds only the
// levels.
struct PyramidModel {
    std::vector<LevelSpec> specs;
    int latent = 0;
    int cond_width = 0;
    float logvar_floor = -10.0f, logvar_ceil = 10.0f;
    std::vector<DrapeVae> levels;
    std::vector<UpscalerNet> upscalers;  // one per transition

    PyramidModel() = default;
    PyramidModel(std::vector<LevelSpec> level_specs, int latent_width, int condition_width,
                 Pcg32& rng);

    int level_count() const { return static_cast<int>(levels.size()); }
    std::vector<Param*> level_params(int level);
    std::vector<Param*> params();
    void freeze_levels();
    bool levels_frozen();
    bool upscalers_frozen();
    void validate() const;

    void save(NamedTensorArchive& ar);
    void save(const std::string& path);
    static PyramidModel load(const NamedTensorArchive& ar);
    static PyramidModel load(const std::string& path);
};

struct PyramidForwardOut {
    std::vector<int> composed;                 // masked absolute output per level
    std::vector<std::pair<int, int>> latents;  // (mu, logvar) per level, posterior only
    int final_out = -1;
};

// Composes the pyramid on the tape. Level 1 predicts absolute coordinates;
// each later level adds its offsets to the upscaled previous composition.
// targets nonempty selects the posterior path (targets[l] is the level-l
// supervision image node); empty runs the prior with z = eta. The
// composition identity composed = (upscaled + offsets) * mask is re-checked
// value by value and throws std::logic_error on any mismatch.
template <typename T>
PyramidForwardOut pyramid_forward(TapeT<T>& t, BoundParams<T>& bp, PyramidModel& model,
                                  int codes, const std::vector<int>& targets,
                                  const std::vector<std::vector<uint8_t>>& level_masks,
                                  const std::vector<int>& etas, int max_level = -1) {
    int n = max_level < 0 ? model.level_count() : max_level;
    if (n < 1 || n > model.level_count())
        throw std::runtime_error("pyramid: cannot compose " + std::to_string(n) + " of " +
                                 std::to_string(model.level_count()) + " levels");
    if (static_cast<int>(level_masks.size()) < n || static_cast<int>(etas.size()) < n)
        throw std::runtime_error("pyramid: need a mask and an eta per level");
    bool posterior = !targets.empty();
    if (posterior && static_cast<int>(targets.size()) < n)
        throw std::runtime_error("pyramid: need a target per level");
    if (static_cast<int>(model.upscalers.size()) < n - 1)
        throw std::runtime_error("pyramid: expected " + std::to_string(model.level_count() - 1) +
                                 " upscalers, have " + std::to_string(model.upscalers.size()));

    PyramidForwardOut out;
    int prev = -1;
    for (int l = 0; l < n; ++l) {
        std::vector<T> maskv = mask_values<T>(level_masks[l]);
        int up_masked = -1;
        if (l > 0) {
            int up = model.upscalers[l - 1].forward(t, bp, prev, level_masks[l - 1], false);
            up_masked = t.mul_mask(up, maskv);
        }
        int offset, composed;
        if (posterior) {
            int enc_in = l == 0 ? targets[0]
                                : t.mul_mask(t.sub(targets[l], up_masked), maskv);
            auto v = model.levels[l].forward_posterior(t, bp, enc_in, codes, etas[l]);
            out.latents.emplace_back(v.mu, v.logvar);
            offset = v.out;
        } else {
            offset = model.levels[l].forward_prior(t, bp, etas[l], codes);
        }
        if (l == 0) {
            composed = t.mul_mask(offset, maskv);
        } else {
            composed = t.mul_mask(t.add(up_masked, offset), maskv);
            const auto& cv = t.val(composed);
            const auto& uv = t.val(up_masked);
            const auto& ov = t.val(offset);
            size_t hw = maskv.size();
            for (size_t i = 0; i < cv.size(); ++i)
                if (cv[i] != (uv[i] + ov[i]) * maskv[i % hw])
                    throw std::logic_error("pyramid: telescoping identity violated");
        }
        out.composed.push_back(composed);
        prev = composed;
    }
    out.final_out = prev;
    return out;
}

// Pushes a level's composition up to the finest resolution through the
// frozen upscalers, masking at each level.
template <typename T>
int chain_upscale(TapeT<T>& t, BoundParams<T>& bp, PyramidModel& model, int x, int from_level,
                  const std::vector<std::vector<uint8_t>>& level_masks) {
    for (int l = from_level + 1; l < model.level_count(); ++l) {
        int up = model.upscalers[l - 1].forward(t, bp, x, level_masks[l - 1], false);
        x = t.mul_mask(up, mask_values<T>(level_masks[l]));
    }
    return x;
}

struct VaeForwardResult {
    UvImage reconstruction;  // masked, normalized range
    std::vector<float> mu, logvar;
};

// Single-level posterior pass on a fresh tape; eta drawn from rng.
VaeForwardResult vae_forward(DrapeVae& vae, const UvImage& input, const ConditionCodes& codes,
                             Pcg32& rng);

// One garment's static data: UV layout, topology, and per-level masks
// (coarse to fine, finest = atlas mask).
struct PyramidGarment {
    UvAtlas atlas;
    std::vector<std::array<int, 2>> edges;
    std::vector<int> body_indices;
    UvImage template_norm;  // normalized template coordinate map
    std::vector<std::vector<uint8_t>> level_masks;
};

// One animation frame: per-level supervision images plus the posed-space
// ground truth the geometric losses compare against.
struct PyramidFrame {
    int garment = 0;
    std::vector<UvImage> targets;  // normalized, coarse to fine
    std::vector<float> codes;      // stacked condition grid
    std::vector<std::array<double, 12>> repose;  // canonical -> posed per vertex
    std::vector<Vec3> gt_posed;
    std::vector<double> gt_edge_lengths;
    std::vector<Vec3> gt_normals;
    std::vector<Vec3> body_posed;
    std::vector<Vec3> body_normals;
};

struct PyramidDataset {
    std::vector<PyramidGarment> garments;
    std::vector<PyramidFrame> frames;
    NormBounds bounds;
    int levels = 0;
    int width = 0, height = 0;  // finest resolution
    int cond_width = 0, code_h = 0, code_w = 0;

    MeshTargets mesh_targets(const PyramidFrame& frame) const;
    void validate() const;
};

// Root-rotation-free copy of a pose.
Pose without_root(Pose pose);

// Per-vertex canonical -> posed affines; matches repose() exactly.
std::vector<std::array<double, 12>> repose_affines(const BodyModel& model,
                                                   const BodyShape& shape, const Pose& pose,
                                                   const std::vector<int>& body_indices);

// Raw material for one garment in a dataset.
struct GarmentData {
    const Mesh* garment_template = nullptr;  // canonical template mesh
    const UvAtlas* atlas = nullptr;
    const std::vector<int>* body_indices = nullptr;
    std::vector<const GarmentSequence*> sequences;
};

// Validity masks for every level, coarse to fine; the last one is the input
// mask, each coarser one follows the downscaling rule (any of the four
// parents valid).
std::vector<std::vector<uint8_t>> build_level_masks(const std::vector<uint8_t>& mask, int height,
                                                    int width, int levels);

// Renders every frame into UV space, encodes the condition codes, and
// assembles the supervision pyramid. Coordinate maps are normalized with
// bounds when given, else with bounds computed from this dataset.
PyramidDataset build_pyramid_dataset(const BodyModel& body,
                                     const std::vector<GarmentData>& garments, int levels,
                                     Conditioners& cond, const NormBounds* bounds = nullptr);

struct PyramidTrainResult {
    std::vector<LossValues> steps;   // batch means per global step
    std::vector<double> delta_trace; // per global step, nondecreasing
    std::vector<double> level_v2v;   // converged per-level training V2V, mm
    double final_v2v = 0.0;
};

// Trains the level VAEs. End-to-end supervises every level each step;
// incremental trains one level at a time, freezing it before the next.
// delta ramps by delta_factor whenever a flat_window of L_rec improves by
// less than flat_threshold relative, and never decreases.
PyramidTrainResult train_pyramid(PyramidModel& model, const PyramidDataset& data,
                                 const TrainConfig& cfg, Pcg32& rng, std::ostream* log = nullptr,
                                 const std::string& checkpoint_path = "");

// Posterior reconstruction with eta = 0, chain-upscaled to the finest level,
// mapped back to posed space. max_level < 0 uses all levels.
std::vector<Vec3> reconstruct_posed(PyramidModel& model, const PyramidDataset& data,
                                    const PyramidFrame& frame, int max_level = -1);

// Full inference: pose the body, render the conditions, sample normals and
// per-level latents from the prior, compose, and map the finest output to a
// posed garment mesh. uv_out, when given, receives the denormalized
// coordinate map.
Mesh drape(PyramidModel& model, Conditioners& cond, const BodyModel& body,
           const Mesh& garment_template, const UvAtlas& atlas,
           const std::vector<int>& body_indices, const Pose& pose, const BodyShape& shape,
           const NormBounds& bounds, Pcg32& rng, UvImage* uv_out = nullptr);

}  // namespace drape
