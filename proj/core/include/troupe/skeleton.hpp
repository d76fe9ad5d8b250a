#pragma once

#include "troupe/tensor.hpp"

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace troupe {

// Coordinates are canvas fractions in [0,1] so the same sequence rasterizes
// at any resolution. Invisible joints carry (0,0) and take no part in
// geometry.
struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = false;

    static Keypoint at(double x, double y) { return {x, y, true}; }
    static Keypoint hidden() { return {0.0, 0.0, false}; }
};

// Fixed 8-joint stick figure used throughout:
// 0 head, 1 neck, 2 pelvis, 3 left hand, 4 right hand,
// 5 left foot, 6 right foot, 7 torso mid.
enum JointId : int {
    kHead = 0,
    kNeck = 1,
    kPelvis = 2,
    kLHand = 3,
    kRHand = 4,
    kLFoot = 5,
    kRFoot = 6,
    kTorsoMid = 7,
};
constexpr int kNumJoints = 8;
constexpr int kNumBones = 7;

using Edge = std::pair<int, int>;

const std::vector<Edge>& default_edges();

struct Skeleton {
    std::vector<Keypoint> joints;
    std::vector<Edge> edges;

    static Skeleton make_default();  // 8 joints (hidden), default bone graph
    void validate() const;
    // lengths of bones whose endpoints are both visible, in edge order
    std::vector<double> bone_lengths() const;
};

Skeleton translate_skeleton(const Skeleton& s, double dx, double dy);
Skeleton scale_skeleton(const Skeleton& s, double factor, double cx, double cy);

struct PoseSequence {
    std::vector<Skeleton> frames;

    void validate() const;
    int num_frames() const { return static_cast<int>(frames.size()); }

    // bounding box over visible joints of all frames; false if none visible
    bool bbox(double& x0, double& y0, double& x1, double& y1) const;

    std::string to_json() const;
    static PoseSequence from_json(const std::string& text);
};

PoseSequence translate_sequence(const PoseSequence& seq, double dx, double dy);
PoseSequence scale_sequence(const PoseSequence& seq, double factor, double cx, double cy);

// per-bone palette colors (multiples of 1/256)
const std::array<std::array<float, 3>, kNumBones>& bone_palette();

int line_thickness(int height);  // max(1, round(H/64))

// Bresenham line between integer pixels; callback for each (x, y), which may
// lie off-canvas
void bresenham(int x0, int y0, int x1, int y1, const std::function<void(int, int)>& plot);

// PoseRaster: [F,H,W,3], background exactly zero, one palette color per bone.
Tensor rasterize(const PoseSequence& seq, int height, int width);

// single skeleton onto an existing frame buffer (used for multi-figure
// rasters and diagnostics); thickness in pixels
void rasterize_skeleton(const Skeleton& s, int height, int width, int thickness, float* frame_rgb);

}  // namespace troupe
