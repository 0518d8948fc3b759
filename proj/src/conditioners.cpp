#include "drape/conditioners.hpp"

#include <cmath>
#include <stdexcept>

#include "drape/losses.hpp"
#include "drape/msssim.hpp"

namespace drape {

void ConditionerConfig::validate() const {
    trunk.validate();
    if (template_code <= 0 || body_code <= 0 || normal_code <= 0)
        throw std::runtime_error("conditioner: code widths must be positive");
    if (!(logvar_floor < logvar_ceil))
        throw std::runtime_error("conditioner: logvar floor must be below ceil");
    if (beta_kl < 0.0) throw std::runtime_error("conditioner: beta_kl must be nonnegative");
}

std::vector<float> ConditionCodes::stacked() const {
    std::vector<float> out;
    out.reserve(garment.size() + body.size() + normal.size());
    out.insert(out.end(), garment.begin(), garment.end());
    out.insert(out.end(), body.begin(), body.end());
    out.insert(out.end(), normal.begin(), normal.end());
    return out;
}

Conditioners::Conditioners(const ConditionerConfig& cfg, Pcg32& rng) : config(cfg) {
    cfg.validate();
    auto with_code = [&](int code) {
        EncoderConfig e = cfg.trunk;
        e.widths.back() = code;
        return e;
    };
    EncoderConfig et = with_code(cfg.template_code);
    enc_template = ConvNextEncoder("cond.t.enc", 3, et, rng);
    dec_template = ConvNextDecoder("cond.t.dec", cfg.template_code, 3, et, rng);
    EncoderConfig eb = with_code(cfg.body_code);
    enc_body = ConvNextEncoder("cond.b.enc", 3, eb, rng);
    dec_body = ConvNextDecoder("cond.b.dec", cfg.body_code, 3, eb, rng);
    EncoderConfig en = with_code(cfg.normal_code);
    enc_normal = ConvNextEncoder("cond.n.enc", 3, en, rng);
    norm_mu = Conv2d("cond.n.mu", cfg.normal_code, cfg.normal_code, 1, 1, 0, rng);
    norm_logvar = Conv2d("cond.n.logvar", cfg.normal_code, cfg.normal_code, 1, 1, 0, rng);
    dec_normal = ConvNextDecoder("cond.n.dec", cfg.normal_code + cfg.template_code + cfg.body_code,
                                 3, en, rng);
}

std::vector<Param*> Conditioners::template_params() {
    std::vector<Param*> out;
    enc_template.collect(out);
    dec_template.collect(out);
    return out;
}

std::vector<Param*> Conditioners::body_params() {
    std::vector<Param*> out;
    enc_body.collect(out);
    dec_body.collect(out);
    return out;
}

std::vector<Param*> Conditioners::normal_params() {
    std::vector<Param*> out;
    enc_normal.collect(out);
    norm_mu.collect(out);
    norm_logvar.collect(out);
    dec_normal.collect(out);
    return out;
}

std::vector<Param*> Conditioners::params() {
    std::vector<Param*> out = template_params();
    for (Param* p : body_params()) out.push_back(p);
    for (Param* p : normal_params()) out.push_back(p);
    return out;
}

void Conditioners::freeze() { freeze_params(params()); }

bool Conditioners::frozen() { return all_frozen(params()); }

void Conditioners::save(NamedTensorArchive& ar) {
    std::vector<uint32_t> meta = {static_cast<uint32_t>(config.template_code),
                                  static_cast<uint32_t>(config.body_code),
                                  static_cast<uint32_t>(config.normal_code),
                                  static_cast<uint32_t>(config.trunk.kernel),
                                  static_cast<uint32_t>(config.trunk.stem_stride),
                                  static_cast<uint32_t>(config.trunk.stages())};
    for (int d : config.trunk.depths) meta.push_back(static_cast<uint32_t>(d));
    for (int w : config.trunk.widths) meta.push_back(static_cast<uint32_t>(w));
    ar.add(NamedTensor::make_u32("cond.meta", {meta.size()}, meta));
    ar.add(NamedTensor::make_f32("cond.hyper", {3},
                                 {static_cast<float>(config.beta_kl), config.logvar_floor,
                                  config.logvar_ceil}));
    save_params(params(), ar);
}

void Conditioners::save(const std::string& path) {
    NamedTensorArchive ar;
    save(ar);
    ar.save(path);
}

Conditioners Conditioners::load(const NamedTensorArchive& ar) {
    const auto& meta = ar.get("cond.meta").u32;
    const auto& hyper = ar.get("cond.hyper").f32;
    ConditionerConfig cfg;
    cfg.template_code = static_cast<int>(meta.at(0));
    cfg.body_code = static_cast<int>(meta.at(1));
    cfg.normal_code = static_cast<int>(meta.at(2));
    cfg.trunk.kernel = static_cast<int>(meta.at(3));
    cfg.trunk.stem_stride = static_cast<int>(meta.at(4));
    int stages = static_cast<int>(meta.at(5));
    for (int s = 0; s < stages; ++s) cfg.trunk.depths.push_back(static_cast<int>(meta.at(6 + s)));
    for (int s = 0; s < stages; ++s)
        cfg.trunk.widths.push_back(static_cast<int>(meta.at(6 + stages + s)));
    cfg.beta_kl = hyper.at(0);
    cfg.logvar_floor = hyper.at(1);
    cfg.logvar_ceil = hyper.at(2);
    Pcg32 rng(0);
    Conditioners cond(cfg, rng);
    load_params(cond.params(), ar);
    cond.freeze();
    return cond;
}

Conditioners Conditioners::load(const std::string& path) {
    NamedTensorArchive ar = NamedTensorArchive::load(path);
    return load(ar);
}

namespace {

void check_condition_images(const UvImage& g, const UvImage& d, const UvImage& n, int reduction) {
    for (const UvImage* img : {&g, &d, &n}) {
        img->validate();
        if (img->channels != 3)
            throw std::runtime_error("condition: inputs must have 3 channels");
        if (img->height != g.height || img->width != g.width)
            throw std::runtime_error("condition: inputs must share one resolution");
    }
    if (g.height % reduction != 0 || g.width % reduction != 0)
        throw std::runtime_error("condition: image " + std::to_string(g.width) + "x" +
                                 std::to_string(g.height) + " does not fit reduction " +
                                 std::to_string(reduction));
}

std::vector<float> encode_one(ConvNextEncoder& enc, const UvImage& img) {
    TapeT<float> t;
    BoundParams<float> bp;
    int x = image_constant(t, img);
    int code = t.tanh_op(enc.forward(t, bp, x));
    return t.val(code);
}

}  // namespace

ConditionCodes condition_encode(Conditioners& cond, const UvImage& garment_template,
                                const UvImage& body_depth, const UvImage& normal_map) {
    if (!cond.frozen()) throw std::runtime_error("condition: conditioners are not frozen");
    int red = cond.config.trunk.total_reduction();
    check_condition_images(garment_template, body_depth, normal_map, red);
    ConditionCodes codes;
    codes.grid_h = garment_template.height / red;
    codes.grid_w = garment_template.width / red;
    codes.garment_width = cond.config.template_code;
    codes.body_width = cond.config.body_code;
    codes.normal_width = cond.config.normal_code;
    codes.garment = encode_one(cond.enc_template, garment_template);
    codes.body = encode_one(cond.enc_body, body_depth);
    codes.normal = encode_one(cond.enc_normal, normal_map);
    return codes;
}

UvImage sample_normals(Conditioners& cond, const UvImage& garment_template,
                       const UvImage& body_depth, Pcg32& rng, UvImage* raw_out) {
    if (!cond.frozen()) throw std::runtime_error("condition: conditioners are not frozen");
    int red = cond.config.trunk.total_reduction();
    check_condition_images(garment_template, body_depth, garment_template, red);

    TapeT<float> t;
    BoundParams<float> bp;
    int ct = t.tanh_op(cond.enc_template.forward(t, bp, image_constant(t, garment_template)));
    int cb = t.tanh_op(cond.enc_body.forward(t, bp, image_constant(t, body_depth)));
    Shape zs{1, cond.config.normal_code, garment_template.height / red,
             garment_template.width / red};
    std::vector<float> eta(zs.count());
    for (float& e : eta) e = static_cast<float>(rng.normal());
    int z = t.constant(zs, std::move(eta));
    int rec = t.tanh_op(cond.dec_normal.forward(t, bp, t.concat_channels(t.concat_channels(z, ct), cb)));

    UvImage out(garment_template.height, garment_template.width, 3);
    out.mask = garment_template.mask;
    out.role = UvRole::normals;
    const auto& v = t.val(rec);
    std::copy(v.begin(), v.end(), out.data.begin());
    if (raw_out) {
        *raw_out = out;
        raw_out->zero_background();
    }
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            if (!out.mask_at(y, x)) continue;
            double nx = out.at(0, y, x), ny = out.at(1, y, x), nz = out.at(2, y, x);
            double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
            if (norm < 1e-12) {
                out.at(0, y, x) = 0.0f;
                out.at(1, y, x) = 0.0f;
                out.at(2, y, x) = 1.0f;
            } else {
                out.at(0, y, x) = static_cast<float>(nx / norm);
                out.at(1, y, x) = static_cast<float>(ny / norm);
                out.at(2, y, x) = static_cast<float>(nz / norm);
            }
        }
    }
    out.zero_background();
    return out;
}

ConditionerTrainResult train_conditioners(Conditioners& cond,
                                          const std::vector<ConditionerSample>& data,
                                          int steps_per_stage, Pcg32& rng, int msssim_window,
                                          std::ostream* log) {
    if (data.empty()) throw std::runtime_error("train_conditioners: empty dataset");
    for (const ConditionerSample& s : data)
        if (!s.garment_template || !s.body_depth || !s.normal_map)
            throw std::runtime_error("train_conditioners: sample is missing an image");
    const int batch = 4;
    ConditionerTrainResult res;

    auto pick = [&]() -> const ConditionerSample& {
        return data[rng.next_below(static_cast<uint32_t>(data.size()))];
    };

    auto autoencoder_stage = [&](ConvNextEncoder& enc, ConvNextDecoder& dec, bool body,
                                 std::vector<float>& trace, const char* tag) {
        Adam opt;
        std::vector<Param*> ps;
        enc.collect(ps);
        dec.collect(ps);
        for (int step = 0; step < steps_per_stage; ++step) {
            TapeT<float> t;
            BoundParams<float> bp;
            int loss = -1;
            for (int k = 0; k < batch; ++k) {
                const ConditionerSample& s = pick();
                const UvImage& img = body ? *s.body_depth : *s.garment_template;
                int x = image_constant(t, img);
                int rec = t.tanh_op(dec.forward(t, bp, t.tanh_op(enc.forward(t, bp, x))));
                int term = t.sub(t.scalar_const(1.0f),
                                 ms_ssim(t, rec, x, img.mask, 0, msssim_window));
                loss = k == 0 ? term : t.add(loss, term);
            }
            loss = t.scale(loss, 1.0f / batch);
            zero_grad(ps);
            t.backward(loss);
            bp.pull_grads(t);
            opt.step(ps);
            trace.push_back(t.val(loss)[0]);
            if (log) *log << tag << " step " << step << " loss " << t.val(loss)[0] << "\n";
        }
        freeze_params(ps);
    };

    autoencoder_stage(cond.enc_template, cond.dec_template, false, res.template_loss, "template");
    autoencoder_stage(cond.enc_body, cond.dec_body, true, res.body_loss, "body");

    {
        Adam opt;
        std::vector<Param*> ps = cond.normal_params();
        for (int step = 0; step < steps_per_stage; ++step) {
            TapeT<float> t;
            BoundParams<float> bp;
            int loss = -1;
            for (int k = 0; k < batch; ++k) {
                const ConditionerSample& s = pick();
                int ct = t.tanh_op(cond.enc_template.forward(t, bp, image_constant(t, *s.garment_template)));
                int cb = t.tanh_op(cond.enc_body.forward(t, bp, image_constant(t, *s.body_depth)));
                int cn = t.tanh_op(cond.enc_normal.forward(t, bp, image_constant(t, *s.normal_map)));
                int mu = cond.norm_mu.forward(t, bp, cn);
                int lv_raw = cond.norm_logvar.forward(t, bp, cn);
                Shape zs = t.shape(mu);
                std::vector<float> ev(zs.count());
                for (float& e : ev) e = static_cast<float>(rng.normal());
                int lv = -1;
                int z = reparameterize(t, mu, lv_raw, cond.config.logvar_floor,
                                       cond.config.logvar_ceil, t.constant(zs, std::move(ev)), &lv);
                int rec = t.tanh_op(cond.dec_normal.forward(
                    t, bp, t.concat_channels(t.concat_channels(z, ct), cb)));
                int nm = image_constant(t, *s.normal_map);
                int term = t.sub(t.scalar_const(1.0f),
                                 ms_ssim(t, rec, nm, s.normal_map->mask, 0, msssim_window));
                term = t.add(term, t.scale(t.kl_divergence(mu, lv),
                                           static_cast<float>(cond.config.beta_kl / zs.count())));
                loss = k == 0 ? term : t.add(loss, term);
            }
            loss = t.scale(loss, 1.0f / batch);
            zero_grad(ps);
            t.backward(loss);
            bp.pull_grads(t);
            opt.step(ps);
            res.normal_loss.push_back(t.val(loss)[0]);
            if (log) *log << "normal step " << step << " loss " << t.val(loss)[0] << "\n";
        }
        freeze_params(ps);
    }
    return res;
}

}  // namespace drape
