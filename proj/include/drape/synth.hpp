#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drape/body_model.hpp"
#include "drape/mesh.hpp"
#include "drape/rng.hpp"
#include "drape/uv_atlas.hpp"

namespace drape {

// Procedural articulated figure: capsule torso and limbs, ellipsoid head,
// 13-joint skeleton, ring-symmetric blendshapes. Proportions are randomized
// by seed; topology is seed-independent.
struct BodyConfig {
    int segments = 24;     // vertices per ring, multiple of 4
    int torso_rings = 32;
    int limb_rings = 10;
    int head_rings = 9;
    double scale = 1.0;
};

// Body surface patch a garment shell is grown from. body_indices orders the
// region's vertices; side_labels and keypoints feed the atlas build.
struct GarmentRegion {
    std::string name;
    bool skirt_role = false;
    std::vector<int> body_indices;
    std::vector<uint8_t> side_labels;
    std::vector<AtlasKeypoint> keypoints;
};

struct SynthBody {
    BodyModel model;
    std::vector<GarmentRegion> regions;  // "shirt" then "skirt"

    Mesh mesh() const;
    const GarmentRegion& region(const std::string& name) const;
};

SynthBody make_body(const BodyConfig& config, uint64_t seed);

// Offset shell over the masked body region: region submesh displaced along
// body vertex normals. Garment vertex v corresponds to body vertex region[v].
Mesh make_garment(const BodyModel& body, const std::vector<int>& region, double offset);

struct WrinkleConfig {
    int components = 3;
    double amplitude = 0.006;      // meters, summed across components
    double min_frequency = 25.0;   // radians per meter along the wave direction
    double max_frequency = 70.0;
    double time_drift = 0.5;       // phase advance per frame, radians
};

struct PoseConfig {
    double joint_amplitude = 0.45;  // radians, per-joint sinusoid peak
    double root_amplitude = 2.0;    // radians, global yaw
    double min_cycles = 0.5;        // sinusoid cycles per sequence
    double max_cycles = 1.5;
};

struct SequenceFrame {
    Pose pose;
    std::vector<Vec3> canonical;  // ground-truth canonical garment
    std::vector<Vec3> posed;      // skin(canonical + shape offsets)
};

struct GarmentSequence {
    BodyShape shape;
    std::vector<SequenceFrame> frames;
};

// Animated garment: smooth sinusoidal joint trajectories, canonical-space
// wrinkles (so posed frames are exactly skinned canonical geometry), one
// shape per sequence.
GarmentSequence make_sequence(const BodyModel& body, const Mesh& garment,
                              const std::vector<int>& region, int n_frames,
                              const WrinkleConfig& wrinkles, const PoseConfig& poses,
                              uint64_t seed);

// Independent random pose (for property tests): random axis-angle per joint.
Pose sample_pose(int joints, Pcg32& rng, double max_angle, double root_max_angle);

}  // namespace drape
