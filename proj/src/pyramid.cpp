#include "drape/pyramid.hpp"

#include <algorithm>
#include <cmath>

#include "drape/mesh.hpp"

namespace drape {

void TrainConfig::validate() const {
    if (lambda < 0.0) throw std::runtime_error("train: lambda must be nonnegative");
    if (!(delta0 > 0.0) || delta0 >= 1e-3)
        throw std::runtime_error("train: delta0 must be positive and below 1e-3");
    if (delta_factor < 1.0) throw std::runtime_error("train: delta_factor must be at least 1");
    if (delta_cap < delta0) throw std::runtime_error("train: delta_cap must be at least delta0");
    if (flat_window <= 0) throw std::runtime_error("train: flat_window must be positive");
    if (!(flat_threshold > 0.0)) throw std::runtime_error("train: flat_threshold must be positive");
    if (normal_start < 0) throw std::runtime_error("train: normal_start must be nonnegative");
    if (!(lr > 0.0)) throw std::runtime_error("train: lr must be positive");
    if (batch <= 0 || steps <= 0) throw std::runtime_error("train: batch and steps must be positive");
    if (collision_margin < 0.0) throw std::runtime_error("train: collision_margin must be nonnegative");
    if (eval_frames < 0) throw std::runtime_error("train: eval_frames must be nonnegative");
}

DrapeVae::DrapeVae(const std::string& prefix, const EncoderConfig& cfg, int latent_width,
                   int cond_width, Pcg32& rng)
    : config(cfg), latent(latent_width), cond(cond_width) {
    cfg.validate();
    if (latent <= 0 || cond <= 0)
        throw std::runtime_error("vae: latent and condition widths must be positive");
    encoder = ConvNextEncoder(prefix + ".enc", 3, cfg, rng);
    mu_head = Conv2d(prefix + ".mu", cfg.widths.back() + cond, latent, 1, 1, 0, rng);
    logvar_head = Conv2d(prefix + ".logvar", cfg.widths.back() + cond, latent, 1, 1, 0, rng);
    decoder = ConvNextDecoder(prefix + ".dec", latent + cond, 3, cfg, rng);
}

void DrapeVae::collect(std::vector<Param*>& out) {
    encoder.collect(out);
    mu_head.collect(out);
    logvar_head.collect(out);
    decoder.collect(out);
}

std::vector<LevelSpec> make_level_specs(int base_width, int base_height, int levels, bool toy) {
    if (levels < 1) throw std::runtime_error("pyramid: need at least one level");
    if (base_width != 2 * base_height)
        throw std::runtime_error("pyramid: level resolution must be 2h x h");
    std::vector<LevelSpec> specs;
    for (int l = 0; l < levels; ++l) {
        LevelSpec s;
        s.width = base_width << l;
        s.height = base_height << l;
        s.config = toy ? toy_encoder_config(s.width, s.height)
                       : deep_encoder_config(s.width, s.height);
        specs.push_back(std::move(s));
    }
    return specs;
}

PyramidModel::PyramidModel(std::vector<LevelSpec> level_specs, int latent_width,
                           int condition_width, Pcg32& rng)
    : specs(std::move(level_specs)), latent(latent_width), cond_width(condition_width) {
    for (size_t i = 0; i < specs.size(); ++i) {
        levels.emplace_back("lvl" + std::to_string(i), specs[i].config, latent, cond_width, rng);
        levels.back().logvar_floor = logvar_floor;
        levels.back().logvar_ceil = logvar_ceil;
    }
    validate();
}

std::vector<Param*> PyramidModel::level_params(int level) {
    std::vector<Param*> out;
    levels.at(level).collect(out);
    return out;
}

std::vector<Param*> PyramidModel::params() {
    std::vector<Param*> out;
    for (DrapeVae& lv : levels) lv.collect(out);
    return out;
}

void PyramidModel::freeze_levels() { freeze_params(params()); }

bool PyramidModel::levels_frozen() { return all_frozen(params()); }

bool PyramidModel::upscalers_frozen() {
    for (UpscalerNet& u : upscalers)
        if (!u.frozen()) return false;
    return true;
}

void PyramidModel::validate() const {
    if (specs.empty()) throw std::runtime_error("pyramid: no levels");
    if (levels.size() != specs.size())
        throw std::runtime_error("pyramid: level modules do not match the specs");
    if (latent <= 0 || cond_width <= 0)
        throw std::runtime_error("pyramid: latent and condition widths must be positive");
    int grid_h = -1, grid_w = -1;
    for (size_t i = 0; i < specs.size(); ++i) {
        const LevelSpec& s = specs[i];
        if (s.width != 2 * s.height)
            throw std::runtime_error("pyramid: level resolution must be 2h x h");
        if (i > 0 && s.height != specs[i - 1].height * 2)
            throw std::runtime_error("pyramid: level resolutions must double");
        s.config.validate();
        int red = s.config.total_reduction();
        if (s.height % red != 0 || s.width % red != 0)
            throw std::runtime_error("pyramid: level " + std::to_string(i) +
                                     " does not fit its encoder reduction");
        if (i == 0) {
            grid_h = s.height / red;
            grid_w = s.width / red;
        } else if (s.height / red != grid_h || s.width / red != grid_w) {
            throw std::runtime_error("pyramid: level grids must match");
        }
    }
}

void PyramidModel::save(NamedTensorArchive& ar) {
    std::vector<uint32_t> meta = {static_cast<uint32_t>(levels.size()),
                                  static_cast<uint32_t>(latent),
                                  static_cast<uint32_t>(cond_width)};
    ar.add(NamedTensor::make_u32("pyr.meta", {meta.size()}, meta));
    ar.add(NamedTensor::make_f32("pyr.hyper", {2}, {logvar_floor, logvar_ceil}));
    for (size_t i = 0; i < specs.size(); ++i) {
        const LevelSpec& s = specs[i];
        std::vector<uint32_t> lm = {static_cast<uint32_t>(s.width),
                                    static_cast<uint32_t>(s.height),
                                    static_cast<uint32_t>(s.config.kernel),
                                    static_cast<uint32_t>(s.config.stem_stride),
                                    static_cast<uint32_t>(s.config.stages())};
        for (int d : s.config.depths) lm.push_back(static_cast<uint32_t>(d));
        for (int w : s.config.widths) lm.push_back(static_cast<uint32_t>(w));
        ar.add(NamedTensor::make_u32("lvl" + std::to_string(i) + ".meta", {lm.size()}, lm));
    }
    save_params(params(), ar);
}

void PyramidModel::save(const std::string& path) {
    NamedTensorArchive ar;
    save(ar);
    ar.save(path);
}

PyramidModel PyramidModel::load(const NamedTensorArchive& ar) {
    const auto& meta = ar.get("pyr.meta").u32;
    const auto& hyper = ar.get("pyr.hyper").f32;
    int n = static_cast<int>(meta.at(0));
    std::vector<LevelSpec> specs(n);
    for (int i = 0; i < n; ++i) {
        const auto& lm = ar.get("lvl" + std::to_string(i) + ".meta").u32;
        LevelSpec& s = specs[i];
        s.width = static_cast<int>(lm.at(0));
        s.height = static_cast<int>(lm.at(1));
        s.config.kernel = static_cast<int>(lm.at(2));
        s.config.stem_stride = static_cast<int>(lm.at(3));
        int stages = static_cast<int>(lm.at(4));
        for (int k = 0; k < stages; ++k) s.config.depths.push_back(static_cast<int>(lm.at(5 + k)));
        for (int k = 0; k < stages; ++k)
            s.config.widths.push_back(static_cast<int>(lm.at(5 + stages + k)));
    }
    Pcg32 rng(0);
    PyramidModel m(std::move(specs), static_cast<int>(meta.at(1)), static_cast<int>(meta.at(2)),
                   rng);
    m.logvar_floor = hyper.at(0);
    m.logvar_ceil = hyper.at(1);
    for (DrapeVae& lv : m.levels) {
        lv.logvar_floor = m.logvar_floor;
        lv.logvar_ceil = m.logvar_ceil;
    }
    load_params(m.params(), ar);
    m.freeze_levels();
    return m;
}

PyramidModel PyramidModel::load(const std::string& path) {
    NamedTensorArchive ar = NamedTensorArchive::load(path);
    return load(ar);
}

VaeForwardResult vae_forward(DrapeVae& vae, const UvImage& input, const ConditionCodes& codes,
                             Pcg32& rng) {
    input.validate();
    if (input.channels != 3) throw std::runtime_error("vae: input must have 3 channels");
    int red = vae.config.total_reduction();
    if (input.height % red != 0 || input.width % red != 0 ||
        input.height / red != codes.grid_h || input.width / red != codes.grid_w)
        throw std::runtime_error("vae: input " + std::to_string(input.width) + "x" +
                                 std::to_string(input.height) + " does not reduce to the " +
                                 std::to_string(codes.grid_w) + "x" +
                                 std::to_string(codes.grid_h) + " condition grid");
    if (codes.combined_width() != vae.cond)
        throw std::runtime_error("vae: expected " + std::to_string(vae.cond) +
                                 " condition channels, got " +
                                 std::to_string(codes.combined_width()));

    TapeT<float> t;
    BoundParams<float> bp;
    int x = image_constant(t, input);
    int c = t.constant(Shape{1, codes.combined_width(), codes.grid_h, codes.grid_w},
                       codes.stacked());
    Shape zs{1, vae.latent, codes.grid_h, codes.grid_w};
    std::vector<float> ev(zs.count());
    for (float& e : ev) e = static_cast<float>(rng.normal());
    auto fwd = vae.forward_posterior(t, bp, x, c, t.constant(zs, std::move(ev)));

    VaeForwardResult res;
    res.reconstruction = UvImage(input.height, input.width, 3);
    res.reconstruction.mask = input.mask;
    res.reconstruction.role = input.role;
    const auto& v = t.val(fwd.out);
    std::copy(v.begin(), v.end(), res.reconstruction.data.begin());
    res.reconstruction.zero_background();
    res.mu = t.val(fwd.mu);
    res.logvar = t.val(fwd.logvar);
    return res;
}

Pose without_root(Pose pose) {
    if (!pose.joint_rotations.empty()) pose.joint_rotations[0] = Mat3::identity();
    return pose;
}

std::vector<std::array<double, 12>> repose_affines(const BodyModel& model,
                                                   const BodyShape& shape, const Pose& pose,
                                                   const std::vector<int>& body_indices) {
    std::vector<Affine3> joints = joint_transforms(model, shape, pose);
    std::vector<Vec3> offsets = shape_offsets(model, shape, body_indices);
    std::vector<double> rows = gather_weights(model, body_indices);
    const int j_count = model.joint_count();
    std::vector<std::array<double, 12>> out(body_indices.size());
    for (size_t v = 0; v < body_indices.size(); ++v) {
        Affine3 a{Mat3::zero(), Vec3{}};
        for (int j = 0; j < j_count; ++j) {
            double w = rows[v * j_count + j];
            if (w == 0.0) continue;
            a = a + joints[j].scaled(w);
        }
        Vec3 tr = a(offsets[v]);  // folds the shape offset into the translation
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) out[v][r * 4 + c] = a.linear(r, c);
            out[v][r * 4 + 3] = tr[r];
        }
    }
    return out;
}

std::vector<std::vector<uint8_t>> build_level_masks(const std::vector<uint8_t>& mask, int height,
                                                    int width, int levels) {
    if (levels < 1) throw std::runtime_error("pyramid: need at least one level");
    if (static_cast<int>(mask.size()) != height * width)
        throw std::runtime_error("pyramid: mask has " + std::to_string(mask.size()) +
                                 " entries for " + std::to_string(width) + "x" +
                                 std::to_string(height));
    std::vector<std::vector<uint8_t>> out(levels);
    out[levels - 1] = mask;
    UvImage img(height, width, 1);
    img.mask = mask;
    for (int l = levels - 2; l >= 0; --l) {
        img = downscale2x(img);
        out[l] = img.mask;
    }
    return out;
}

MeshTargets PyramidDataset::mesh_targets(const PyramidFrame& frame) const {
    const PyramidGarment& g = garments.at(frame.garment);
    MeshTargets mt;
    mt.atlas = &g.atlas;
    mt.faces = &g.atlas.faces;
    mt.edges = &g.edges;
    mt.repose = &frame.repose;
    mt.gt_posed = &frame.gt_posed;
    mt.gt_edge_lengths = &frame.gt_edge_lengths;
    mt.gt_normals = &frame.gt_normals;
    mt.body_posed = &frame.body_posed;
    mt.body_normals = &frame.body_normals;
    mt.bounds = bounds;
    return mt;
}

void PyramidDataset::validate() const {
    if (garments.empty() || frames.empty()) throw std::runtime_error("pyramid: empty dataset");
    if (levels < 1) throw std::runtime_error("pyramid: need at least one level");
    size_t code_count = static_cast<size_t>(cond_width) * code_h * code_w;
    for (const PyramidFrame& f : frames) {
        if (f.garment < 0 || f.garment >= static_cast<int>(garments.size()))
            throw std::runtime_error("pyramid: frame references a missing garment");
        if (static_cast<int>(f.targets.size()) != levels)
            throw std::runtime_error("pyramid: frame has " + std::to_string(f.targets.size()) +
                                     " targets for " + std::to_string(levels) + " levels");
        if (f.codes.size() != code_count)
            throw std::runtime_error("pyramid: frame condition code size mismatch");
    }
    for (const PyramidGarment& g : garments)
        if (static_cast<int>(g.level_masks.size()) != levels)
            throw std::runtime_error("pyramid: garment mask pyramid is incomplete");
}

PyramidDataset build_pyramid_dataset(const BodyModel& body,
                                     const std::vector<GarmentData>& garments, int levels,
                                     Conditioners& cond, const NormBounds* bounds) {
    if (garments.empty()) throw std::runtime_error("pyramid: no garments");
    if (levels < 1) throw std::runtime_error("pyramid: need at least one level");

    PyramidDataset data;
    data.levels = levels;

    struct FrameRaw {
        int garment = 0;
        Pose pose0;
        const GarmentSequence* seq = nullptr;
        UvImage canonical, body_depth, normals;
        std::vector<Vec3> gt_posed, gt_normals, body_posed, body_normals;
    };
    std::vector<UvImage> template_raw;
    std::vector<FrameRaw> raws;

    for (size_t gi = 0; gi < garments.size(); ++gi) {
        const GarmentData& g = garments[gi];
        if (!g.garment_template || !g.atlas || !g.body_indices)
            throw std::runtime_error("pyramid: garment data is incomplete");
        if (g.sequences.empty()) throw std::runtime_error("pyramid: garment has no sequences");
        const UvAtlas& atlas = *g.atlas;
        atlas.validate();
        if (gi == 0) {
            data.width = atlas.width;
            data.height = atlas.height;
        } else if (atlas.width != data.width || atlas.height != data.height) {
            throw std::runtime_error("pyramid: garments must share one atlas resolution");
        }

        PyramidGarment pg;
        pg.atlas = atlas;
        EdgeSet es = edge_lengths(*g.garment_template);
        for (const Edge& e : es.edges) pg.edges.push_back({e.a, e.b});
        pg.body_indices = *g.body_indices;
        pg.level_masks = build_level_masks(atlas.mask, atlas.height, atlas.width, levels);
        data.garments.push_back(std::move(pg));
        template_raw.push_back(
            mesh_to_uv(atlas, g.garment_template->vertices, UvRole::garment_template));

        for (const GarmentSequence* seq : g.sequences) {
            if (!seq) throw std::runtime_error("pyramid: garment data is incomplete");
            for (const SequenceFrame& f : seq->frames) {
                FrameRaw r;
                r.garment = static_cast<int>(gi);
                r.seq = seq;
                r.pose0 = without_root(f.pose);

                std::vector<Vec3> shaped = body.template_vertices;
                std::vector<Vec3> offs = shape_offsets(body, seq->shape);
                for (size_t i = 0; i < shaped.size(); ++i) shaped[i] += offs[i];
                r.body_posed = skin(shaped, r.pose0, body.blend_weights, body, seq->shape);
                r.body_normals = vertex_normals(Mesh{r.body_posed, body.faces, MeshRole::body});

                r.gt_posed = repose(f.canonical, r.pose0, seq->shape, *g.body_indices, body);
                r.gt_normals = vertex_normals(
                    Mesh{r.gt_posed, g.garment_template->faces, MeshRole::garment_posed});

                r.canonical = mesh_to_uv(atlas, f.canonical, UvRole::garment_canonical);
                std::vector<Vec3> dvals(g.body_indices->size());
                for (size_t v = 0; v < dvals.size(); ++v)
                    dvals[v] = r.body_posed[(*g.body_indices)[v]];
                r.body_depth = mesh_to_uv(atlas, dvals, UvRole::body);
                r.normals = mesh_to_uv(atlas, r.gt_normals, UvRole::normals);
                raws.push_back(std::move(r));
            }
        }
    }

    if (bounds) {
        data.bounds = *bounds;
        data.bounds.validate();
    } else {
        std::vector<const UvImage*> coord_maps;
        for (const UvImage& img : template_raw) coord_maps.push_back(&img);
        for (const FrameRaw& r : raws) {
            coord_maps.push_back(&r.canonical);
            coord_maps.push_back(&r.body_depth);
        }
        data.bounds = compute_bounds(coord_maps);
    }

    for (size_t gi = 0; gi < garments.size(); ++gi)
        data.garments[gi].template_norm = normalize_uv(template_raw[gi], data.bounds);

    for (FrameRaw& r : raws) {
        const PyramidGarment& pg = data.garments[r.garment];
        PyramidFrame pf;
        pf.garment = r.garment;

        UvImage dn = normalize_uv(r.body_depth, data.bounds);
        ConditionCodes codes = condition_encode(cond, pg.template_norm, dn, r.normals);
        if (data.cond_width == 0) {
            data.cond_width = codes.combined_width();
            data.code_h = codes.grid_h;
            data.code_w = codes.grid_w;
        }
        pf.codes = codes.stacked();

        pf.targets.resize(levels);
        pf.targets[levels - 1] = normalize_uv(r.canonical, data.bounds);
        for (int l = levels - 2; l >= 0; --l) pf.targets[l] = downscale2x(pf.targets[l + 1]);

        pf.repose = repose_affines(body, r.seq->shape, r.pose0, pg.body_indices);
        pf.gt_posed = std::move(r.gt_posed);
        pf.gt_normals = std::move(r.gt_normals);
        pf.gt_edge_lengths.reserve(pg.edges.size());
        for (const auto& e : pg.edges)
            pf.gt_edge_lengths.push_back(distance(pf.gt_posed[e[0]], pf.gt_posed[e[1]]));
        pf.body_posed = std::move(r.body_posed);
        pf.body_normals = std::move(r.body_normals);
        data.frames.push_back(std::move(pf));
    }

    data.validate();
    return data;
}

namespace {

std::vector<size_t> eval_subset(size_t count, int wanted) {
    std::vector<size_t> out;
    if (wanted <= 0 || static_cast<size_t>(wanted) >= count) {
        for (size_t i = 0; i < count; ++i) out.push_back(i);
        return out;
    }
    size_t stride = count / static_cast<size_t>(wanted);
    for (int i = 0; i < wanted; ++i) out.push_back(static_cast<size_t>(i) * stride);
    return out;
}

double v2v_mm(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double sum = 0.0;
    for (size_t i = 0; i < a.size(); ++i) sum += distance(a[i], b[i]);
    return sum / static_cast<double>(a.size()) * 1000.0;
}

}  // namespace

PyramidTrainResult train_pyramid(PyramidModel& model, const PyramidDataset& data,
                                 const TrainConfig& cfg, Pcg32& rng, std::ostream* log,
                                 const std::string& checkpoint_path) {
    cfg.validate();
    model.validate();
    data.validate();
    const int n_levels = model.level_count();
    if (data.levels != n_levels)
        throw std::runtime_error("pyramid: dataset has " + std::to_string(data.levels) +
                                 " levels for a " + std::to_string(n_levels) + " level model");
    if (static_cast<int>(model.upscalers.size()) != n_levels - 1)
        throw std::runtime_error("pyramid: expected " + std::to_string(n_levels - 1) +
                                 " upscalers, have " + std::to_string(model.upscalers.size()));
    if (!model.upscalers_frozen())
        throw std::runtime_error("pyramid: upscalers must be frozen before training");
    if (data.cond_width != model.cond_width)
        throw std::runtime_error("pyramid: dataset condition width " +
                                 std::to_string(data.cond_width) + " does not match the model's " +
                                 std::to_string(model.cond_width));
    if (data.width != model.specs.back().width || data.height != model.specs.back().height)
        throw std::runtime_error("pyramid: dataset resolution does not match the model");

    PyramidTrainResult res;
    double delta = cfg.delta0;
    const double lambda = cfg.with_reg ? cfg.lambda : 0.0;
    int global_step = 0;

    auto run_phase = [&](int phase) {  // phase < 0 trains every level at once
        const int top = phase < 0 ? n_levels - 1 : phase;
        std::vector<Param*> ps = phase < 0 ? model.params() : model.level_params(phase);
        AdamConfig oc;
        oc.lr = static_cast<float>(cfg.lr);
        Adam opt(oc);
        double window_sum = 0.0;
        int window_n = 0;
        double prev_window = -1.0;

        for (int step = 0; step < cfg.steps; ++step, ++global_step) {
            TapeT<float> t;
            BoundParams<float> bp;
            LossSettings settings;
            settings.lambda = lambda;
            settings.delta = delta;
            settings.collision_margin = cfg.collision_margin;
            settings.normal_active = global_step >= cfg.normal_start;

            int total = -1;
            LossValues mean;
            for (int k = 0; k < cfg.batch; ++k) {
                const PyramidFrame& f =
                    data.frames[rng.next_below(static_cast<uint32_t>(data.frames.size()))];
                const PyramidGarment& g = data.garments[f.garment];

                int codes = t.constant(Shape{1, data.cond_width, data.code_h, data.code_w},
                                       std::vector<float>(f.codes.begin(), f.codes.end()));
                std::vector<int> targets(top + 1), etas(top + 1);
                for (int l = 0; l <= top; ++l) {
                    targets[l] = image_constant(t, f.targets[l]);
                    Shape zs{1, model.latent, data.code_h, data.code_w};
                    // Frozen lower levels feed their mean reconstruction upward.
                    std::vector<float> ev(zs.count(), 0.0f);
                    if (phase < 0 || l == phase)
                        for (float& e : ev) e = static_cast<float>(rng.normal());
                    etas[l] = t.constant(zs, std::move(ev));
                }

                auto fwd =
                    pyramid_forward(t, bp, model, codes, targets, g.level_masks, etas, top + 1);
                int mesh_node = chain_upscale(t, bp, model, fwd.final_out, top, g.level_masks);

                std::vector<int> outs;
                std::vector<const UvImage*> tgts;
                std::vector<std::pair<int, int>> lat;
                if (phase < 0) {
                    for (int l = 0; l <= top; ++l) {
                        outs.push_back(fwd.composed[l]);
                        tgts.push_back(&f.targets[l]);
                        lat.push_back(fwd.latents[l]);
                    }
                } else {
                    outs.push_back(fwd.composed[top]);
                    tgts.push_back(&f.targets[top]);
                    lat.push_back(fwd.latents[top]);
                }

                MeshTargets mt = data.mesh_targets(f);
                LossNodes<float> nodes = loss_suite(t, outs, tgts, mesh_node, lat, mt, settings);
                LossValues v = read_losses(t, nodes);
                mean.uv += v.uv / cfg.batch;
                mean.threed += v.threed / cfg.batch;
                mean.collision += v.collision / cfg.batch;
                mean.edge += v.edge / cfg.batch;
                mean.normal += v.normal / cfg.batch;
                mean.kl += v.kl / cfg.batch;
                mean.reg += v.reg / cfg.batch;
                mean.rec += v.rec / cfg.batch;
                mean.total += v.total / cfg.batch;
                total = k == 0 ? nodes.total : t.add(total, nodes.total);
            }
            total = t.scale(total, 1.0f / static_cast<float>(cfg.batch));
            zero_grad(ps);
            t.backward(total);
            bp.pull_grads(t);
            opt.step(ps);

            res.steps.push_back(mean);
            res.delta_trace.push_back(delta);
            if (log)
                *log << "{\"step\":" << global_step << ",\"phase\":" << phase
                     << ",\"uv\":" << mean.uv << ",\"threed\":" << mean.threed
                     << ",\"collision\":" << mean.collision << ",\"edge\":" << mean.edge
                     << ",\"normal\":" << mean.normal << ",\"kl\":" << mean.kl
                     << ",\"reg\":" << mean.reg << ",\"rec\":" << mean.rec
                     << ",\"total\":" << mean.total << ",\"delta\":" << delta
                     << ",\"lambda\":" << lambda << "}\n";

            window_sum += mean.rec;
            if (++window_n == cfg.flat_window) {
                double cur = window_sum / cfg.flat_window;
                if (prev_window >= 0.0 &&
                    prev_window - cur < cfg.flat_threshold * std::abs(prev_window))
                    delta = std::min(delta * cfg.delta_factor, cfg.delta_cap);
                prev_window = cur;
                window_sum = 0.0;
                window_n = 0;
            }
        }
        if (phase >= 0) freeze_params(ps);
        if (!checkpoint_path.empty()) model.save(checkpoint_path);
    };

    if (cfg.end_to_end) {
        run_phase(-1);
    } else {
        for (int k = 0; k < n_levels; ++k) run_phase(k);
    }
    model.freeze_levels();
    if (!checkpoint_path.empty()) model.save(checkpoint_path);

    std::vector<size_t> eval = eval_subset(data.frames.size(), cfg.eval_frames);
    for (int l = 1; l <= n_levels; ++l) {
        double sum = 0.0;
        for (size_t idx : eval) {
            const PyramidFrame& f = data.frames[idx];
            sum += v2v_mm(reconstruct_posed(model, data, f, l), f.gt_posed);
        }
        res.level_v2v.push_back(sum / static_cast<double>(eval.size()));
    }
    res.final_v2v = res.level_v2v.back();
    return res;
}

std::vector<Vec3> reconstruct_posed(PyramidModel& model, const PyramidDataset& data,
                                    const PyramidFrame& frame, int max_level) {
    int n = max_level < 0 ? model.level_count() : max_level;
    const PyramidGarment& g = data.garments.at(frame.garment);

    TapeT<float> t;
    BoundParams<float> bp;
    int codes = t.constant(Shape{1, data.cond_width, data.code_h, data.code_w},
                           std::vector<float>(frame.codes.begin(), frame.codes.end()));
    std::vector<int> targets(n), etas(n);
    for (int l = 0; l < n; ++l) {
        targets[l] = image_constant(t, frame.targets[l]);
        Shape zs{1, model.latent, data.code_h, data.code_w};
        etas[l] = t.constant(zs, std::vector<float>(zs.count(), 0.0f));
    }
    auto fwd = pyramid_forward(t, bp, model, codes, targets, g.level_masks, etas, n);
    int x = chain_upscale(t, bp, model, fwd.final_out, n - 1, g.level_masks);

    UvImage rec(data.height, data.width, 3);
    rec.mask = g.atlas.mask;
    rec.role = UvRole::garment_canonical;
    const auto& v = t.val(x);
    std::copy(v.begin(), v.end(), rec.data.begin());
    rec.zero_background();
    rec = denormalize_uv(rec, data.bounds);

    std::vector<Vec3> canonical = uv_to_mesh_points(g.atlas, rec);
    std::vector<Vec3> out(canonical.size());
    for (size_t i = 0; i < canonical.size(); ++i) {
        const auto& a = frame.repose[i];
        const Vec3& c = canonical[i];
        out[i] = Vec3{a[0] * c.x + a[1] * c.y + a[2] * c.z + a[3],
                      a[4] * c.x + a[5] * c.y + a[6] * c.z + a[7],
                      a[8] * c.x + a[9] * c.y + a[10] * c.z + a[11]};
    }
    return out;
}

Mesh drape(PyramidModel& model, Conditioners& cond, const BodyModel& body,
           const Mesh& garment_template, const UvAtlas& atlas,
           const std::vector<int>& body_indices, const Pose& pose, const BodyShape& shape,
           const NormBounds& bounds, Pcg32& rng, UvImage* uv_out) {
    model.validate();
    if (!model.levels_frozen()) throw std::runtime_error("drape: model weights are not frozen");
    if (static_cast<int>(model.upscalers.size()) != model.level_count() - 1 ||
        !model.upscalers_frozen())
        throw std::runtime_error("drape: upscalers are missing or not frozen");
    if (atlas.width != model.specs.back().width || atlas.height != model.specs.back().height)
        throw std::runtime_error("drape: atlas resolution does not match the model");
    const int n_levels = model.level_count();

    Pose pose0 = without_root(pose);
    std::vector<Vec3> shaped = body.template_vertices;
    std::vector<Vec3> offs = shape_offsets(body, shape);
    for (size_t i = 0; i < shaped.size(); ++i) shaped[i] += offs[i];
    std::vector<Vec3> body_posed = skin(shaped, pose0, body.blend_weights, body, shape);

    UvImage gt_norm =
        normalize_uv(mesh_to_uv(atlas, garment_template.vertices, UvRole::garment_template),
                     bounds);
    std::vector<Vec3> dvals(body_indices.size());
    for (size_t v = 0; v < dvals.size(); ++v) dvals[v] = body_posed[body_indices[v]];
    UvImage d_norm = normalize_uv(mesh_to_uv(atlas, dvals, UvRole::body), bounds);

    UvImage nhat = sample_normals(cond, gt_norm, d_norm, rng);
    ConditionCodes codes = condition_encode(cond, gt_norm, d_norm, nhat);

    std::vector<std::vector<uint8_t>> level_masks =
        build_level_masks(atlas.mask, atlas.height, atlas.width, n_levels);

    TapeT<float> t;
    BoundParams<float> bp;
    int c = t.constant(Shape{1, codes.combined_width(), codes.grid_h, codes.grid_w},
                       codes.stacked());
    std::vector<int> etas(n_levels);
    for (int l = 0; l < n_levels; ++l) {
        Shape zs{1, model.latent, codes.grid_h, codes.grid_w};
        std::vector<float> ev(zs.count());
        for (float& e : ev) e = static_cast<float>(rng.normal());
        etas[l] = t.constant(zs, std::move(ev));
    }
    auto fwd = pyramid_forward(t, bp, model, c, {}, level_masks, etas, n_levels);

    UvImage rec(atlas.height, atlas.width, 3);
    rec.mask = atlas.mask;
    rec.role = UvRole::garment_canonical;
    const auto& v = t.val(fwd.final_out);
    std::copy(v.begin(), v.end(), rec.data.begin());
    rec.zero_background();
    rec = denormalize_uv(rec, bounds);
    if (uv_out) *uv_out = rec;

    Mesh out;
    out.vertices = repose(uv_to_mesh_points(atlas, rec), pose, shape, body_indices, body);
    out.faces = garment_template.faces;
    out.role = MeshRole::garment_posed;
    return out;
}

}  // namespace drape
