#include "drape/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drape {

namespace {

enum : int {
    kPelvis = 0, kSpine, kChest, kNeck, kHead,
    kLShoulder, kLElbow, kRShoulder, kRElbow,
    kLHip, kLKnee, kRHip, kRKnee,
    kJointCount
};

const int kParents[kJointCount] = {-1, 0, 1, 2, 3, 2, 5, 2, 7, 0, 9, 0, 11};

struct Ring {
    double y = 0.0;
    int first = 0;  // vertex id of segment 0; segments are contiguous
};

struct Part {
    std::vector<Ring> rings;
    int pole_bottom = -1, pole_top = -1;
    std::vector<int> chain;  // joints touching this part, ascending rest y
};

struct Builder {
    int segments;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec3> radial;  // unit cylindrical radial, zero at poles

    explicit Builder(int segs) : segments(segs) {}

    int add_vertex(const Vec3& p, const Vec3& rad) {
        vertices.push_back(p);
        radial.push_back(rad);
        return static_cast<int>(vertices.size()) - 1;
    }

    // Stacked rings around a vertical axis at (cx, cz), capped with cone fans.
    Part add_tube(double cx, double cz, const std::vector<double>& ys,
                  const std::vector<double>& radii) {
        Part part;
        const int s_count = segments;
        for (size_t r = 0; r < ys.size(); ++r) {
            Ring ring{ys[r], static_cast<int>(vertices.size())};
            for (int s = 0; s < s_count; ++s) {
                double a = 2.0 * M_PI * s / s_count;
                Vec3 rad{std::cos(a), 0.0, std::sin(a)};
                add_vertex({cx + radii[r] * rad.x, ys[r], cz + radii[r] * rad.z}, rad);
            }
            part.rings.push_back(ring);
        }
        for (size_t r = 0; r + 1 < ys.size(); ++r) {
            int lo = part.rings[r].first, hi = part.rings[r + 1].first;
            for (int s = 0; s < s_count; ++s) {
                int sn = (s + 1) % s_count;
                faces.push_back({lo + s, hi + s, lo + sn});
                faces.push_back({lo + sn, hi + s, hi + sn});
            }
        }
        part.pole_bottom = add_vertex({cx, ys.front() - 0.5 * radii.front(), cz}, Vec3{});
        for (int s = 0; s < s_count; ++s)
            faces.push_back({part.pole_bottom, part.rings.front().first + s,
                             part.rings.front().first + (s + 1) % s_count});
        part.pole_top = add_vertex({cx, ys.back() + 0.5 * radii.back(), cz}, Vec3{});
        for (int s = 0; s < s_count; ++s)
            faces.push_back({part.pole_top, part.rings.back().first + (s + 1) % s_count,
                             part.rings.back().first + s});
        return part;
    }
};

double lerp_profile(const std::vector<std::pair<double, double>>& pts, double t) {
    if (t <= pts.front().first) return pts.front().second;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        if (t <= pts[i + 1].first) {
            double u = (t - pts[i].first) / (pts[i + 1].first - pts[i].first);
            return pts[i].second + u * (pts[i + 1].second - pts[i].second);
        }
    }
    return pts.back().second;
}

Vec3 random_unit(Pcg32& rng) {
    Vec3 v;
    do {
        v = {rng.normal(), rng.normal(), rng.normal()};
    } while (v.norm() < 1e-6);
    return v.normalized();
}

}  // namespace

Mesh SynthBody::mesh() const {
    Mesh m;
    m.vertices = model.template_vertices;
    m.faces = model.faces;
    m.role = MeshRole::body;
    return m;
}

const GarmentRegion& SynthBody::region(const std::string& name) const {
    for (const auto& r : regions)
        if (r.name == name) return r;
    throw std::runtime_error("synth body: no region named '" + name + "'");
}

SynthBody make_body(const BodyConfig& config, uint64_t seed) {
    if (config.segments < 8 || config.segments % 4 != 0)
        throw std::runtime_error("make_body: segments must be a multiple of 4, >= 8");
    if (config.torso_rings < 6 || config.limb_rings < 4 || config.head_rings < 4)
        throw std::runtime_error("make_body: too few rings");

    Pcg32 rng(seed, 0x5eedb0d7);
    auto jitter = [&rng] { return 1.0 + 0.08 * rng.uniform(-1.0, 1.0); };
    const double sc = config.scale;

    const double torso_len = 0.55 * sc * jitter();
    const double torso_rad = jitter();
    const double head_ry = 0.10 * sc * jitter();
    const double head_rxz = 0.088 * sc * jitter();
    const double arm_len = 0.44 * sc * jitter();
    const double arm_rad = 0.040 * sc * jitter();
    const double leg_len = 0.75 * sc * jitter();
    const double leg_rad = 0.065 * sc * jitter();

    const std::vector<std::pair<double, double>> torso_profile = {
        {0.0, 0.160 * sc * torso_rad}, {0.40, 0.125 * sc * torso_rad},
        {0.72, 0.150 * sc * torso_rad}, {1.0, 0.130 * sc * torso_rad}};

    Builder b(config.segments);

    // Torso: base ring at the origin so the root joint rests there.
    std::vector<double> tys, trs;
    for (int r = 0; r < config.torso_rings; ++r) {
        double t = static_cast<double>(r) / (config.torso_rings - 1);
        tys.push_back(t * torso_len);
        trs.push_back(lerp_profile(torso_profile, t));
    }
    Part torso = b.add_tube(0.0, 0.0, tys, trs);

    // Head: ellipsoid as a ring stack.
    double head_cy = torso_len + 0.03 * sc + head_ry;
    std::vector<double> hys, hrs;
    for (int r = 0; r < config.head_rings; ++r) {
        double phi = M_PI * (config.head_rings - r) / (config.head_rings + 1);
        hys.push_back(head_cy + head_ry * std::cos(phi));
        hrs.push_back(std::max(head_rxz * std::sin(phi), 0.2 * head_rxz));
    }
    Part head = b.add_tube(0.0, 0.0, hys, hrs);

    auto limb = [&](double cx, double top_y, double len, double rad, int rings) {
        std::vector<double> ys, rs;
        for (int r = 0; r < rings; ++r) {
            double t = static_cast<double>(r) / (rings - 1);
            ys.push_back(top_y - len + t * len);
            rs.push_back(rad * (1.0 - 0.25 * (1.0 - t)));
        }
        return b.add_tube(cx, 0.0, ys, rs);
    };

    const double chest_r = lerp_profile(torso_profile, 0.72);
    const double shoulder_x = chest_r + arm_rad + 0.025 * sc;
    const double shoulder_y = 0.94 * torso_len;
    Part l_arm = limb(-shoulder_x, shoulder_y, arm_len, arm_rad, config.limb_rings);
    Part r_arm = limb(+shoulder_x, shoulder_y, arm_len, arm_rad, config.limb_rings);
    const double hip_x = 0.075 * sc;
    Part l_leg = limb(-hip_x, 0.0, leg_len, leg_rad, config.limb_rings);
    Part r_leg = limb(+hip_x, 0.0, leg_len, leg_rad, config.limb_rings);

    BodyModel model;
    model.template_vertices = b.vertices;
    model.faces = b.faces;
    model.parents.assign(kParents, kParents + kJointCount);
    const size_t m = b.vertices.size();
    const int S = config.segments;

    // Joint regressor: each joint is the average of one full ring.
    model.joint_regressor.assign(static_cast<size_t>(kJointCount) * m, 0.0);
    auto regress_ring = [&](int joint, const Part& part, double frac) {
        int idx = static_cast<int>(std::lround(frac * (part.rings.size() - 1)));
        const Ring& ring = part.rings[idx];
        for (int s = 0; s < S; ++s)
            model.joint_regressor[static_cast<size_t>(joint) * m + ring.first + s] = 1.0 / S;
        return ring.y;
    };
    std::array<double, kJointCount> joint_y{};
    joint_y[kPelvis] = regress_ring(kPelvis, torso, 0.0);
    joint_y[kSpine] = regress_ring(kSpine, torso, 0.40);
    joint_y[kChest] = regress_ring(kChest, torso, 0.72);
    joint_y[kNeck] = regress_ring(kNeck, torso, 1.0);
    joint_y[kHead] = regress_ring(kHead, head, 0.5);
    joint_y[kLShoulder] = regress_ring(kLShoulder, l_arm, 1.0);
    joint_y[kLElbow] = regress_ring(kLElbow, l_arm, 0.5);
    joint_y[kRShoulder] = regress_ring(kRShoulder, r_arm, 1.0);
    joint_y[kRElbow] = regress_ring(kRElbow, r_arm, 0.5);
    joint_y[kLHip] = regress_ring(kLHip, l_leg, 1.0);
    joint_y[kLKnee] = regress_ring(kLKnee, l_leg, 0.45);
    joint_y[kRHip] = regress_ring(kRHip, r_leg, 1.0);
    joint_y[kRKnee] = regress_ring(kRKnee, r_leg, 0.45);

    // Blend weights: within each part, interpolate linearly in height along
    // its joint chain.
    torso.chain = {kPelvis, kSpine, kChest, kNeck};
    head.chain = {kNeck, kHead};
    l_arm.chain = {kLElbow, kLShoulder};
    r_arm.chain = {kRElbow, kRShoulder};
    l_leg.chain = {kLKnee, kLHip};
    r_leg.chain = {kRKnee, kRHip};

    model.blend_weights.assign(m * kJointCount, 0.0);
    auto assign_part_weights = [&](const Part& part) {
        auto weigh = [&](int vid, double y) {
            double* row = &model.blend_weights[static_cast<size_t>(vid) * kJointCount];
            const auto& chain = part.chain;
            if (y <= joint_y[chain.front()]) {
                row[chain.front()] = 1.0;
                return;
            }
            if (y >= joint_y[chain.back()]) {
                row[chain.back()] = 1.0;
                return;
            }
            for (size_t i = 0; i + 1 < chain.size(); ++i) {
                double lo = joint_y[chain[i]], hi = joint_y[chain[i + 1]];
                if (y <= hi) {
                    double u = (y - lo) / (hi - lo);
                    row[chain[i]] = 1.0 - u;
                    row[chain[i + 1]] = u;
                    return;
                }
            }
        };
        for (const Ring& ring : part.rings)
            for (int s = 0; s < S; ++s) weigh(ring.first + s, ring.y);
        weigh(part.pole_bottom, b.vertices[part.pole_bottom].y);
        weigh(part.pole_top, b.vertices[part.pole_top].y);
    };
    for (const Part* p : {&torso, &head, &l_arm, &r_arm, &l_leg, &r_leg})
        assign_part_weights(*p);

    // Blendshapes: 5 radial profiles and 5 axial stretches. Both act
    // uniformly within a ring, so ring-averaged joints stay on their axes and
    // the root (ring at y=0) never moves.
    const double y_span = leg_len + 0.05;
    const double radial_amp = 0.012 * sc * jitter();
    const double axial_amp = 0.03 * jitter();
    model.blend_shapes.assign(kShapeCoeffs, std::vector<Vec3>(m));
    for (int k = 0; k < 5; ++k) {
        double phase = 0.7 * k + 0.3;
        for (size_t v = 0; v < m; ++v) {
            double eta = b.vertices[v].y / y_span;
            model.blend_shapes[k][v] =
                b.radial[v] * (radial_amp * std::sin((k + 1) * 1.1 * eta + phase));
        }
    }
    for (int k = 5; k < kShapeCoeffs; ++k) {
        double phase = 0.5 * (k - 5) + 0.9;
        for (size_t v = 0; v < m; ++v) {
            double y = b.vertices[v].y;
            double eta = y / y_span;
            double stretch = axial_amp * (0.5 + 0.5 * std::sin((k - 4) * 0.9 * eta + phase));
            model.blend_shapes[k][v] = Vec3{0.0, y * stretch, 0.0};
        }
    }

    model.validate();

    SynthBody body;
    body.model = std::move(model);

    // Garment regions: ring bands of the torso tube. Segment 0 and S/2 are
    // the unwrap seams (z = 0 columns).
    auto build_region = [&](const std::string& name, bool skirt_role, int ring_lo,
                            int ring_hi) {
        GarmentRegion region;
        region.name = name;
        region.skirt_role = skirt_role;
        for (int r = ring_lo; r <= ring_hi; ++r)
            for (int s = 0; s < S; ++s)
                region.body_indices.push_back(torso.rings[r].first + s);
        region.side_labels.resize(region.body_indices.size());
        for (int r = ring_lo; r <= ring_hi; ++r)
            for (int s = 0; s < S; ++s) {
                bool front = s <= S / 2;  // seam columns 0 and S/2 count as front
                region.side_labels[static_cast<size_t>(r - ring_lo) * S + s] = front ? 0 : 1;
            }
        int n_rings = ring_hi - ring_lo + 1;
        const int rows[3] = {0, (n_rings - 1) / 2, n_rings - 1};
        const int front_cols[3] = {0, S / 4, S / 2};
        const int back_cols[3] = {S / 2, 3 * S / 4, 0};
        for (int side = 0; side < 2; ++side)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    AtlasKeypoint kp;
                    kp.side = static_cast<uint8_t>(side);
                    kp.vertex = rows[i] * S + (side == 0 ? front_cols[j] : back_cols[j]);
                    kp.u = 0.5 * j;
                    kp.v = 0.5 * i;
                    region.keypoints.push_back(kp);
                }
        return region;
    };
    int shirt_lo = static_cast<int>(std::lround(0.42 * (config.torso_rings - 1)));
    int skirt_hi = static_cast<int>(std::lround(0.34 * (config.torso_rings - 1)));
    body.regions.push_back(build_region("shirt", false, shirt_lo, config.torso_rings - 1));
    body.regions.push_back(build_region("skirt", true, 0, skirt_hi));
    return body;
}

Mesh make_garment(const BodyModel& body, const std::vector<int>& region, double offset) {
    if (region.empty()) throw std::runtime_error("make_garment: empty region");
    if (offset <= 0.0) throw std::runtime_error("make_garment: offset must be positive");
    Mesh body_mesh;
    body_mesh.vertices = body.template_vertices;
    body_mesh.faces = body.faces;
    auto normals = vertex_normals(body_mesh);
    Mesh garment = extract_submesh(body_mesh, region);
    for (size_t v = 0; v < garment.vertices.size(); ++v)
        garment.vertices[v] += normals[region[v]] * offset;
    garment.role = MeshRole::garment_template;
    return garment;
}

GarmentSequence make_sequence(const BodyModel& body, const Mesh& garment,
                              const std::vector<int>& region, int n_frames,
                              const WrinkleConfig& wrinkles, const PoseConfig& poses,
                              uint64_t seed) {
    if (n_frames < 1) throw std::runtime_error("make_sequence: n_frames must be >= 1");
    if (garment.vertices.size() != region.size())
        throw std::runtime_error("make_sequence: garment vertex count does not match region");

    Pcg32 rng(seed, 0x5e9ce);
    const int joints = body.joint_count();

    GarmentSequence seq;
    for (auto& c : seq.shape.coeffs) c = std::clamp(rng.normal() * 0.8, -2.0, 2.0);

    struct JointTrack {
        Vec3 axis;
        double amplitude, cycles, phase;
    };
    std::vector<JointTrack> tracks(joints);
    for (int j = 0; j < joints; ++j) {
        JointTrack t;
        if (j == 0) {
            t.axis = (Vec3{0, 1, 0} + random_unit(rng) * 0.3).normalized();
            t.amplitude = rng.uniform(0.3, 1.0) * poses.root_amplitude;
        } else {
            t.axis = random_unit(rng);
            t.amplitude = rng.uniform(0.2, 1.0) * poses.joint_amplitude;
        }
        t.cycles = rng.uniform(poses.min_cycles, poses.max_cycles);
        t.phase = rng.uniform(0.0, 2.0 * M_PI);
        tracks[j] = t;
    }

    struct Wave {
        Vec3 dir;
        double freq, phase, drift, amp;
    };
    std::vector<Wave> waves(wrinkles.components);
    double share_sum = 0.0;
    for (auto& w : waves) {
        w.dir = random_unit(rng);
        w.freq = rng.uniform(wrinkles.min_frequency, wrinkles.max_frequency);
        w.phase = rng.uniform(0.0, 2.0 * M_PI);
        w.drift = rng.uniform(-wrinkles.time_drift, wrinkles.time_drift);
        w.amp = rng.uniform(0.3, 1.0);
        share_sum += w.amp;
    }
    for (auto& w : waves)
        w.amp *= share_sum > 0.0 ? wrinkles.amplitude / share_sum : 0.0;

    auto shell_normals = vertex_normals(garment);

    seq.frames.resize(n_frames);
    for (int t = 0; t < n_frames; ++t) {
        SequenceFrame& frame = seq.frames[t];
        frame.pose = Pose::rest(joints);
        for (int j = 0; j < joints; ++j) {
            const auto& tr = tracks[j];
            double angle = tr.amplitude *
                           std::sin(2.0 * M_PI * tr.cycles * t / std::max(n_frames - 1, 1) +
                                    tr.phase);
            frame.pose.joint_rotations[j] = Mat3::axis_angle(tr.axis, angle);
        }
        frame.canonical.resize(garment.vertices.size());
        for (size_t v = 0; v < garment.vertices.size(); ++v) {
            const Vec3& p = garment.vertices[v];
            double height = 0.0;
            for (const auto& w : waves)
                height += w.amp * std::sin(w.freq * w.dir.dot(p) + w.phase + w.drift * t);
            frame.canonical[v] = p + shell_normals[v] * height;
        }
        frame.posed = repose(frame.canonical, frame.pose, seq.shape, region, body);
    }
    return seq;
}

Pose sample_pose(int joints, Pcg32& rng, double max_angle, double root_max_angle) {
    Pose pose = Pose::rest(joints);
    for (int j = 0; j < joints; ++j) {
        double limit = j == 0 ? root_max_angle : max_angle;
        pose.joint_rotations[j] = Mat3::axis_angle(random_unit(rng), rng.uniform(-limit, limit));
    }
    return pose;
}

}  // namespace drape
