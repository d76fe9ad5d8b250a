#include "troupe/skeleton.hpp"

#include "troupe/common.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>

namespace troupe {

const std::vector<Edge>& default_edges() {
    static const std::vector<Edge> edges = {
        {kHead, kNeck}, {kNeck, kTorsoMid}, {kTorsoMid, kPelvis}, {kNeck, kLHand},
        {kNeck, kRHand}, {kPelvis, kLFoot}, {kPelvis, kRFoot},
    };
    return edges;
}

Skeleton Skeleton::make_default() {
    Skeleton s;
    s.joints.assign(kNumJoints, Keypoint::hidden());
    s.edges = default_edges();
    return s;
}

void Skeleton::validate() const {
    const int j = static_cast<int>(joints.size());
    for (const auto& [a, b] : edges) {
        require(a != b, "skeleton: self-edge");
        require(a >= 0 && a < j && b >= 0 && b < j, "skeleton: edge index out of range");
    }
    for (const auto& kp : joints) {
        require(std::isfinite(kp.x) && std::isfinite(kp.y), "skeleton: non-finite keypoint");
        if (!kp.visible) {
            require(kp.x == 0.0 && kp.y == 0.0, "skeleton: invisible keypoint must carry (0,0)");
        }
    }
}

std::vector<double> Skeleton::bone_lengths() const {
    std::vector<double> out;
    out.reserve(edges.size());
    for (const auto& [a, b] : edges) {
        const auto& pa = joints[static_cast<size_t>(a)];
        const auto& pb = joints[static_cast<size_t>(b)];
        if (pa.visible && pb.visible) {
            out.push_back(std::hypot(pa.x - pb.x, pa.y - pb.y));
        }
    }
    return out;
}

Skeleton translate_skeleton(const Skeleton& s, double dx, double dy) {
    Skeleton out = s;
    for (auto& kp : out.joints) {
        if (kp.visible) {
            kp.x += dx;
            kp.y += dy;
        }
    }
    return out;
}

Skeleton scale_skeleton(const Skeleton& s, double factor, double cx, double cy) {
    require(factor > 0.0, "scale_skeleton: factor must be positive");
    Skeleton out = s;
    for (auto& kp : out.joints) {
        if (kp.visible) {
            kp.x = cx + factor * (kp.x - cx);
            kp.y = cy + factor * (kp.y - cy);
        }
    }
    return out;
}

void PoseSequence::validate() const {
    require(!frames.empty(), "pose sequence: needs at least one frame");
    for (const auto& f : frames) {
        f.validate();
        require(f.edges == frames.front().edges, "pose sequence: frames must share the edge list");
    }
}

bool PoseSequence::bbox(double& x0, double& y0, double& x1, double& y1) const {
    bool any = false;
    for (const auto& f : frames) {
        for (const auto& kp : f.joints) {
            if (!kp.visible) continue;
            if (!any) {
                x0 = x1 = kp.x;
                y0 = y1 = kp.y;
                any = true;
            } else {
                x0 = std::min(x0, kp.x);
                x1 = std::max(x1, kp.x);
                y0 = std::min(y0, kp.y);
                y1 = std::max(y1, kp.y);
            }
        }
    }
    return any;
}

PoseSequence translate_sequence(const PoseSequence& seq, double dx, double dy) {
    PoseSequence out;
    out.frames.reserve(seq.frames.size());
    for (const auto& f : seq.frames) {
        out.frames.push_back(translate_skeleton(f, dx, dy));
    }
    return out;
}

PoseSequence scale_sequence(const PoseSequence& seq, double factor, double cx, double cy) {
    PoseSequence out;
    out.frames.reserve(seq.frames.size());
    for (const auto& f : seq.frames) {
        out.frames.push_back(scale_skeleton(f, factor, cx, cy));
    }
    return out;
}

std::string PoseSequence::to_json() const {
    nlohmann::json j;
    j["edges"] = nlohmann::json::array();
    if (!frames.empty()) {
        for (const auto& [a, b] : frames.front().edges) {
            j["edges"].push_back({a, b});
        }
    }
    j["frames"] = nlohmann::json::array();
    for (const auto& f : frames) {
        nlohmann::json jf = nlohmann::json::array();
        for (const auto& kp : f.joints) {
            jf.push_back({kp.x, kp.y, kp.visible});
        }
        j["frames"].push_back(jf);
    }
    return j.dump();
}

PoseSequence PoseSequence::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("pose json: ") + e.what());
    }
    if (!j.contains("edges") || !j.contains("frames")) {
        throw format_error("pose json: missing edges or frames");
    }
    std::vector<Edge> edges;
    for (const auto& e : j["edges"]) {
        edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    PoseSequence seq;
    for (const auto& jf : j["frames"]) {
        Skeleton s;
        s.edges = edges;
        for (const auto& jk : jf) {
            Keypoint kp;
            kp.x = jk.at(0).get<double>();
            kp.y = jk.at(1).get<double>();
            kp.visible = jk.at(2).get<bool>();
            s.joints.push_back(kp);
        }
        seq.frames.push_back(std::move(s));
    }
    seq.validate();
    return seq;
}

const std::array<std::array<float, 3>, kNumBones>& bone_palette() {
    // multiples of 1/256, one saturated color per bone
    static const std::array<std::array<float, 3>, kNumBones> palette = {{
        {240 / 256.0f, 64 / 256.0f, 64 / 256.0f},
        {240 / 256.0f, 160 / 256.0f, 48 / 256.0f},
        {224 / 256.0f, 224 / 256.0f, 64 / 256.0f},
        {64 / 256.0f, 224 / 256.0f, 80 / 256.0f},
        {64 / 256.0f, 192 / 256.0f, 240 / 256.0f},
        {96 / 256.0f, 96 / 256.0f, 240 / 256.0f},
        {208 / 256.0f, 80 / 256.0f, 224 / 256.0f},
    }};
    return palette;
}

int line_thickness(int height) {
    return std::max(1, static_cast<int>(std::lround(height / 64.0)));
}

void bresenham(int x0, int y0, int x1, int y1, const std::function<void(int, int)>& plot) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    int x = x0, y = y0;
    while (true) {
        plot(x, y);
        if (x == x1 && y == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y += sy;
        }
    }
}

namespace {

int to_pixel(double frac, int extent) {
    return static_cast<int>(std::floor(frac * extent));
}

}  // namespace

void rasterize_skeleton(const Skeleton& s, int height, int width, int thickness, float* frame_rgb) {
    const auto& palette = bone_palette();
    const int lo = -((thickness - 1) / 2);
    const int hi = thickness / 2;
    for (size_t e = 0; e < s.edges.size(); ++e) {
        const auto& [a, b] = s.edges[e];
        const auto& pa = s.joints[static_cast<size_t>(a)];
        const auto& pb = s.joints[static_cast<size_t>(b)];
        if (!pa.visible || !pb.visible) continue;
        const auto& color = palette[e % kNumBones];
        bresenham(to_pixel(pa.x, width), to_pixel(pa.y, height), to_pixel(pb.x, width), to_pixel(pb.y, height),
                  [&](int px, int py) {
                      for (int oy = lo; oy <= hi; ++oy) {
                          for (int ox = lo; ox <= hi; ++ox) {
                              const int qx = px + ox, qy = py + oy;
                              if (qx < 0 || qx >= width || qy < 0 || qy >= height) continue;
                              float* p = frame_rgb + (static_cast<int64_t>(qy) * width + qx) * 3;
                              p[0] = color[0];
                              p[1] = color[1];
                              p[2] = color[2];
                          }
                      }
                  });
    }
}

Tensor rasterize(const PoseSequence& seq, int height, int width) {
    require(height >= 16 && width >= 16, "rasterize: canvas must be at least 16x16");
    seq.validate();
    const int F = seq.num_frames();
    Tensor raster = Tensor::zeros({F, height, width, 3});
    const int t = line_thickness(height);
    for (int f = 0; f < F; ++f) {
        rasterize_skeleton(seq.frames[static_cast<size_t>(f)], height, width, t,
                           raster.ptr() + static_cast<int64_t>(f) * height * width * 3);
    }
    return raster;
}

}  // namespace troupe
