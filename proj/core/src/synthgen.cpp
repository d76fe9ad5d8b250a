#include "troupe/synthgen.hpp"

#include "troupe/common.hpp"
#include "troupe/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace troupe {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

const std::vector<std::string>& vocab_words() {
    static const std::vector<std::string> words = {
        "<null>", "<pad>", "one", "two", "three", "four", "five", "six",
        "humanoid", "blob", "quadruped", "humanoids", "blobs", "quadrupeds", "dancing",
    };
    return words;
}

std::string json_slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw io_error("cannot open: " + path);
    }
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw io_error("cannot open for writing: " + path);
    }
    f << text;
    if (!f) {
        throw io_error("write failed: " + path);
    }
}

}  // namespace

const char* archetype_name(Archetype a) {
    switch (a) {
        case Archetype::humanoid: return "humanoid";
        case Archetype::blob: return "blob";
        case Archetype::quadruped: return "quadruped";
    }
    return "?";
}

int TextVocab::size() const {
    return static_cast<int>(vocab_words().size());
}

const std::string& TextVocab::word(int id) const {
    require(id >= 0 && id < size(), "vocab: id out of range");
    return vocab_words()[static_cast<size_t>(id)];
}

int TextVocab::id(const std::string& w) const {
    const auto& words = vocab_words();
    for (size_t i = 0; i < words.size(); ++i) {
        if (words[i] == w) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

std::vector<int> TextVocab::encode_prompt(int count, Archetype a) const {
    require(count >= 1 && count <= 6, "prompt: count must be 1..6");
    const int count_id = 2 + (count - 1);
    const int arch_id = (count == 1 ? 8 : 11) + static_cast<int>(a);
    const int dancing = id("dancing");
    return {count_id, arch_id, dancing, kPad};
}

std::vector<int> TextVocab::null_prompt() const {
    return std::vector<int>(kPromptLen, kNull);
}

const TextVocab& text_vocab() {
    static const TextVocab v;
    return v;
}

const char* motion_name(int motion_id) {
    static const char* names[kNumMotions] = {"wave", "squat", "spin", "sway", "jump", "lean", "kick", "bounce"};
    require(motion_id >= 0 && motion_id < kNumMotions, "bad motion id");
    return names[motion_id];
}

namespace {

// Base poses in local coordinates (x right, y down), all joints within
// +-0.31; motions keep them within +-0.34. Placement margins depend on that
// bound (see subject_fit_cap).
using LocalPose = std::array<std::pair<double, double>, kNumJoints>;

const LocalPose& base_pose(Archetype a) {
    static const LocalPose humanoid = {{
        {0.00, -0.26}, {0.00, -0.16}, {0.00, 0.10}, {-0.22, -0.02},
        {0.22, -0.02}, {-0.12, 0.30}, {0.12, 0.30}, {0.00, 0.00},
    }};
    static const LocalPose blob = {{
        {0.00, -0.22}, {0.00, -0.12}, {0.00, 0.12}, {-0.24, 0.02},
        {0.24, 0.02}, {-0.10, 0.28}, {0.10, 0.28}, {0.00, 0.00},
    }};
    static const LocalPose quadruped = {{
        {0.30, -0.10}, {0.16, -0.06}, {-0.16, 0.00}, {0.14, 0.26},
        {0.22, 0.28}, {-0.20, 0.26}, {-0.12, 0.28}, {0.00, -0.02},
    }};
    switch (a) {
        case Archetype::blob: return blob;
        case Archetype::quadruped: return quadruped;
        default: return humanoid;
    }
}

void rotate_about(LocalPose& p, double cx, double cy, double alpha) {
    const double c = std::cos(alpha), s = std::sin(alpha);
    for (auto& [x, y] : p) {
        const double dx = x - cx, dy = y - cy;
        x = cx + c * dx - s * dy;
        y = cy + s * dx + c * dy;
    }
}

LocalPose posed_local(Archetype a, int motion_id, double t) {
    LocalPose p = base_pose(a);
    const double e = 0.5 * (1.0 - std::cos(kTau * t));
    const double s1 = std::sin(kTau * t);
    switch (motion_id) {
        case 0: {  // wave: right hand raised and wiggling
            p[kRHand].first += 0.04 * s1 * e;
            p[kRHand].second += -0.20 * e;
            p[kHead].first += 0.01 * e;
            break;
        }
        case 1: {  // squat: everything except feet sinks
            for (int j : {kHead, kNeck, kPelvis, kLHand, kRHand, kTorsoMid}) {
                p[static_cast<size_t>(j)].second += 0.10 * e;
            }
            break;
        }
        case 2: {  // spin: swing rotation about torso
            rotate_about(p, p[kTorsoMid].first, p[kTorsoMid].second, 0.5 * s1);
            break;
        }
        case 3: {  // sway: lateral shift
            for (auto& [x, y] : p) x += 0.08 * s1;
            break;
        }
        case 4: {  // jump: whole body lifts
            for (auto& [x, y] : p) y += -0.07 * e;
            break;
        }
        case 5: {  // lean: rotation about pelvis
            rotate_about(p, p[kPelvis].first, p[kPelvis].second, 0.35 * s1);
            break;
        }
        case 6: {  // kick: right foot out, left hand counterweight
            p[kRFoot].first += 0.16 * e;
            p[kRFoot].second += -0.12 * e;
            p[kLHand].first += -0.04 * e;
            p[kLHand].second += -0.04 * e;
            break;
        }
        case 7: {  // bounce: two dips per cycle
            const double b = std::sin(kTau * t);
            for (auto& [x, y] : p) y += -0.06 * b * b;
            break;
        }
        default: break;
    }
    return p;
}

Skeleton skeleton_from_local(const LocalPose& p, double cx, double cy, double scale) {
    Skeleton s = Skeleton::make_default();
    for (int j = 0; j < kNumJoints; ++j) {
        s.joints[static_cast<size_t>(j)] =
            Keypoint::at(cx + scale * p[static_cast<size_t>(j)].first, cy + scale * p[static_cast<size_t>(j)].second);
    }
    return s;
}

struct CellLayout {
    int cols, rows;
    double jitter;
    double scale_cap;
};

CellLayout layout_for(int n) {
    // caps keep the motion envelope (0.44 * scale half-extent) inside the
    // cell for the worst-case jitter, which is what makes masks disjoint by
    // construction
    if (n == 1) return {1, 1, 0.030, 0.80};
    if (n == 2) return {2, 1, 0.030, 0.45};
    if (n <= 4) return {2, 2, 0.030, 0.45};
    return {3, 2, 0.012, 0.33};
}

std::array<float, 3> byte_color(int r, int g, int b) {
    return {r / 256.0f, g / 256.0f, b / 256.0f};
}

const std::array<std::array<float, 3>, 8>& body_palette() {
    static const std::array<std::array<float, 3>, 8> pal = {{
        byte_color(236, 88, 64), byte_color(64, 160, 236), byte_color(96, 208, 96), byte_color(232, 200, 72),
        byte_color(200, 96, 220), byte_color(72, 208, 200), byte_color(240, 140, 180), byte_color(168, 168, 240),
    }};
    return pal;
}

// ---- flat-shaded body rendering ----

template <typename Paint>
void fill_disc(double cx, double cy, double r, int H, int W, Paint&& paint) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(cx + r + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(cy + r + 1)));
    const double r2 = r * r;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            if (dx * dx + dy * dy <= r2) {
                paint(x, y);
            }
        }
    }
}

template <typename Paint>
void fill_capsule(double ax, double ay, double bx, double by, double r, int H, int W, Paint&& paint) {
    const double lox = std::min(ax, bx) - r - 1, hix = std::max(ax, bx) + r + 1;
    const double loy = std::min(ay, by) - r - 1, hiy = std::max(ay, by) + r + 1;
    const int x0 = std::max(0, static_cast<int>(std::floor(lox)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(hix)));
    const int y0 = std::max(0, static_cast<int>(std::floor(loy)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(hiy)));
    const double ux = bx - ax, uy = by - ay;
    const double len2 = ux * ux + uy * uy;
    const double r2 = r * r;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double px = x + 0.5 - ax, py = y + 0.5 - ay;
            double t = len2 > 0 ? (px * ux + py * uy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double dx = px - t * ux, dy = py - t * uy;
            if (dx * dx + dy * dy <= r2) {
                paint(x, y);
            }
        }
    }
}

template <typename Paint>
void render_body(const SubjectSpec& sub, const Skeleton& s, int H, int W, Paint&& paint) {
    auto px = [&](int j) { return s.joints[static_cast<size_t>(j)].x * W; };
    auto py = [&](int j) { return s.joints[static_cast<size_t>(j)].y * H; };
    const double S = sub.base_scale * H;
    switch (sub.archetype) {
        case Archetype::humanoid: {
            for (const auto& [a, b] : s.edges) {
                fill_capsule(px(a), py(a), px(b), py(b), 0.045 * S, H, W, paint);
            }
            fill_disc(px(kHead), py(kHead), 0.10 * S, H, W, paint);
            break;
        }
        case Archetype::blob: {
            for (const auto& [a, b] : s.edges) {
                fill_capsule(px(a), py(a), px(b), py(b), 0.030 * S, H, W, paint);
            }
            fill_disc(px(kTorsoMid), py(kTorsoMid), 0.22 * S, H, W, paint);
            fill_disc(px(kHead), py(kHead), 0.10 * S, H, W, paint);
            break;
        }
        case Archetype::quadruped: {
            for (const auto& [a, b] : s.edges) {
                fill_capsule(px(a), py(a), px(b), py(b), 0.035 * S, H, W, paint);
            }
            fill_capsule(px(kNeck), py(kNeck), px(kPelvis), py(kPelvis), 0.11 * S, H, W, paint);
            fill_capsule(px(kHead), py(kHead), px(kNeck), py(kNeck), 0.05 * S, H, W, paint);
            fill_disc(px(kHead), py(kHead), 0.09 * S, H, W, paint);
            break;
        }
    }
}

std::vector<SubjectSpec> plan_subjects(uint64_t seed, int n) {
    Rng rng = Rng(seed).child("subjects");
    const Archetype arch = static_cast<Archetype>(rng.uniform_int(kNumArchetypes));
    const CellLayout lay = layout_for(n);

    std::vector<int> cells(static_cast<size_t>(lay.cols) * lay.rows);
    for (size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
    for (size_t i = cells.size(); i > 1; --i) {
        std::swap(cells[i - 1], cells[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
    }

    std::vector<int> colors(body_palette().size());
    for (size_t i = 0; i < colors.size(); ++i) colors[i] = static_cast<int>(i);
    for (size_t i = colors.size(); i > 1; --i) {
        std::swap(colors[i - 1], colors[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
    }

    std::vector<SubjectSpec> subs;
    subs.reserve(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        const int cell = cells[static_cast<size_t>(k)];
        const int cx = cell % lay.cols, cy = cell / lay.cols;
        SubjectSpec sub;
        sub.archetype = arch;
        sub.base_x = (cx + 0.5) / lay.cols + rng.uniform(-lay.jitter, lay.jitter);
        sub.base_y = (cy + 0.5) / lay.rows + rng.uniform(-lay.jitter, lay.jitter);
        sub.base_scale = rng.uniform(0.30, lay.scale_cap);
        sub.color = body_palette()[static_cast<size_t>(colors[static_cast<size_t>(k)])];
        subs.push_back(sub);
    }
    return subs;
}

std::array<float, 3> plan_background(uint64_t seed) {
    Rng rng = Rng(seed).child("background");
    const int r = static_cast<int>(16 + rng.uniform_int(44));
    const int g = static_cast<int>(16 + rng.uniform_int(44));
    const int b = static_cast<int>(16 + rng.uniform_int(44));
    return byte_color(r, g, b);
}

}  // namespace

std::vector<SubjectSpec> episode_subjects(const EpisodeMeta& meta) {
    auto subs = plan_subjects(meta.seed, meta.n_subjects);
    for (size_t k = 0; k < subs.size(); ++k) {
        subs[k].archetype = meta.archetypes[k];
    }
    return subs;
}

PoseSequence subject_gt_sequence(const EpisodeMeta& meta, int subject) {
    const auto subs = episode_subjects(meta);
    require(subject >= 0 && subject < static_cast<int>(subs.size()), "subject index out of range");
    const auto& sub = subs[static_cast<size_t>(subject)];
    PoseSequence seq;
    for (int f = 0; f < meta.frames; ++f) {
        const double t = static_cast<double>(f) / meta.frames;
        seq.frames.push_back(
            skeleton_from_local(posed_local(sub.archetype, meta.motion_id, t), sub.base_x, sub.base_y, sub.base_scale));
    }
    return seq;
}

PoseSequence canonical_driving(int motion_id, int frames) {
    PoseSequence seq;
    for (int f = 0; f < frames; ++f) {
        const double t = static_cast<double>(f) / frames;
        seq.frames.push_back(skeleton_from_local(posed_local(Archetype::humanoid, motion_id, t), 0.5, 0.5, 0.5));
    }
    return seq;
}

Episode generate_episode(const GenParams& p) {
    require(p.n_subjects >= 1 && p.n_subjects <= 6, "generate_episode: n_subjects must be 1..6");
    require(p.motion_id >= 0 && p.motion_id < kNumMotions, "generate_episode: bad motion id");
    require(p.height >= 16 && p.width >= 16 && p.frames >= 1, "generate_episode: bad canvas");

    Episode e;
    e.meta.version = 1;
    e.meta.seed = p.seed;
    e.meta.n_subjects = p.n_subjects;
    e.meta.motion_id = p.motion_id;
    e.meta.misalign = p.misalign;
    e.meta.height = p.height;
    e.meta.width = p.width;
    e.meta.frames = p.frames;
    e.meta.background = plan_background(p.seed);

    const auto subs = plan_subjects(p.seed, p.n_subjects);
    for (const auto& s : subs) {
        e.meta.archetypes.push_back(s.archetype);
    }
    e.text = text_vocab().encode_prompt(p.n_subjects, subs.front().archetype);
    e.meta.text = e.text;

    const int H = p.height, W = p.width, F = p.frames;

    // per-subject frame-0 masks
    for (int k = 0; k < p.n_subjects; ++k) {
        Mask m(H, W);
        const auto skel = skeleton_from_local(posed_local(subs[static_cast<size_t>(k)].archetype, p.motion_id, 0.0),
                                              subs[static_cast<size_t>(k)].base_x, subs[static_cast<size_t>(k)].base_y,
                                              subs[static_cast<size_t>(k)].base_scale);
        render_body(subs[static_cast<size_t>(k)], skel, H, W, [&](int x, int y) { m.at(y, x) = 1; });
        e.masks.push_back(std::move(m));
    }
    e.union_mask = Mask(H, W);
    for (int k = 0; k < p.n_subjects; ++k) {
        for (size_t i = 0; i < e.union_mask.v.size(); ++i) {
            if (e.masks[static_cast<size_t>(k)].v[i]) {
                if (e.union_mask.v[i]) {
                    throw std::logic_error("generate_episode: subject masks overlap (placement bug)");
                }
                e.union_mask.v[i] = 1;
            }
        }
    }

    // ground-truth video
    e.gt_video = Tensor::zeros({F, H, W, 3});
    for (int f = 0; f < F; ++f) {
        float* frame = e.gt_video.ptr() + static_cast<int64_t>(f) * H * W * 3;
        for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) {
            frame[i * 3 + 0] = e.meta.background[0];
            frame[i * 3 + 1] = e.meta.background[1];
            frame[i * 3 + 2] = e.meta.background[2];
        }
        const double t = static_cast<double>(f) / F;
        for (int k = 0; k < p.n_subjects; ++k) {
            const auto& sub = subs[static_cast<size_t>(k)];
            const auto skel =
                skeleton_from_local(posed_local(sub.archetype, p.motion_id, t), sub.base_x, sub.base_y, sub.base_scale);
            render_body(sub, skel, H, W, [&](int x, int y) {
                float* px = frame + (static_cast<int64_t>(y) * W + x) * 3;
                px[0] = sub.color[0];
                px[1] = sub.color[1];
                px[2] = sub.color[2];
            });
        }
    }

    // reference = frame 0
    e.reference = Tensor({H, W, 3});
    std::copy(e.gt_video.ptr(), e.gt_video.ptr() + static_cast<int64_t>(H) * W * 3, e.reference.ptr());

    // driving: canonical motion, optionally misaligned
    PoseSequence drv = canonical_driving(p.motion_id, F);
    if (p.misalign.scale != 1.0) {
        drv = scale_sequence(drv, p.misalign.scale, 0.5, 0.5);
    }
    if (p.misalign.dx != 0.0 || p.misalign.dy != 0.0) {
        drv = translate_sequence(drv, p.misalign.dx, p.misalign.dy);
    }
    e.driving = std::move(drv);
    return e;
}

bool episodes_equal(const Episode& a, const Episode& b) {
    auto tensors_equal = [](const Tensor& x, const Tensor& y) {
        if (x.shape != y.shape) return false;
        for (int64_t i = 0; i < x.numel(); ++i) {
            if (x[i] != y[i]) return false;
        }
        return true;
    };
    if (!tensors_equal(a.reference, b.reference) || !tensors_equal(a.gt_video, b.gt_video)) return false;
    if (a.masks.size() != b.masks.size()) return false;
    for (size_t k = 0; k < a.masks.size(); ++k) {
        if (a.masks[k].v != b.masks[k].v) return false;
    }
    if (a.union_mask.v != b.union_mask.v) return false;
    if (a.text != b.text) return false;
    if (a.driving.to_json() != b.driving.to_json()) return false;
    if (a.meta.seed != b.meta.seed || a.meta.n_subjects != b.meta.n_subjects ||
        a.meta.motion_id != b.meta.motion_id || a.meta.archetypes != b.meta.archetypes) {
        return false;
    }
    if (a.meta.misalign.dx != b.meta.misalign.dx || a.meta.misalign.dy != b.meta.misalign.dy ||
        a.meta.misalign.scale != b.meta.misalign.scale) {
        return false;
    }
    return a.meta.background == b.meta.background && a.meta.height == b.meta.height &&
           a.meta.width == b.meta.width && a.meta.frames == b.meta.frames;
}

void write_episode(const Episode& e, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json m;
    m["version"] = e.meta.version;
    m["seed"] = e.meta.seed;
    m["n_subjects"] = e.meta.n_subjects;
    m["motion_id"] = e.meta.motion_id;
    m["misalign"] = {{"dx", e.meta.misalign.dx}, {"dy", e.meta.misalign.dy}, {"scale", e.meta.misalign.scale}};
    m["text"] = e.meta.text;
    nlohmann::json arch = nlohmann::json::array();
    for (auto a : e.meta.archetypes) {
        arch.push_back(static_cast<int>(a));
    }
    m["archetypes"] = arch;
    m["background"] = {static_cast<int>(std::lround(e.meta.background[0] * 256.0f)),
                       static_cast<int>(std::lround(e.meta.background[1] * 256.0f)),
                       static_cast<int>(std::lround(e.meta.background[2] * 256.0f))};
    m["height"] = e.meta.height;
    m["width"] = e.meta.width;
    m["frames"] = e.meta.frames;
    write_text_file(dir + "/manifest.json", m.dump(2));

    write_png(dir + "/reference.png", e.reference);
    for (size_t k = 0; k < e.masks.size(); ++k) {
        write_png_mask(dir + "/mask_" + std::to_string(k) + ".png", e.masks[k]);
    }
    const int F = e.gt_video.dim(0), H = e.gt_video.dim(1), W = e.gt_video.dim(2);
    for (int f = 0; f < F; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "gt_%03d.png", f);
        Tensor frame({H, W, 3});
        std::copy(e.gt_video.ptr() + static_cast<int64_t>(f) * H * W * 3,
                  e.gt_video.ptr() + static_cast<int64_t>(f + 1) * H * W * 3, frame.ptr());
        write_png(dir + "/" + name, frame);
    }
    write_text_file(dir + "/driving.json", e.driving.to_json());
}

Episode read_episode(const std::string& dir) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(json_slurp(dir + "/manifest.json"));
    } catch (const nlohmann::json::exception& ex) {
        throw format_error(std::string("manifest.json: ") + ex.what());
    }
    Episode e;
    const int version = m.at("version").get<int>();
    if (version != 1) {
        throw format_error("episode manifest version " + std::to_string(version) + " unsupported (reader supports 1)");
    }
    e.meta.version = version;
    e.meta.seed = m.at("seed").get<uint64_t>();
    e.meta.n_subjects = m.at("n_subjects").get<int>();
    e.meta.motion_id = m.at("motion_id").get<int>();
    e.meta.misalign.dx = m.at("misalign").at("dx").get<double>();
    e.meta.misalign.dy = m.at("misalign").at("dy").get<double>();
    e.meta.misalign.scale = m.at("misalign").at("scale").get<double>();
    e.meta.text = m.at("text").get<std::vector<int>>();
    for (const auto& a : m.at("archetypes")) {
        e.meta.archetypes.push_back(static_cast<Archetype>(a.get<int>()));
    }
    const auto bg = m.at("background").get<std::vector<int>>();
    e.meta.background = {bg[0] / 256.0f, bg[1] / 256.0f, bg[2] / 256.0f};
    e.meta.height = m.at("height").get<int>();
    e.meta.width = m.at("width").get<int>();
    e.meta.frames = m.at("frames").get<int>();
    e.text = e.meta.text;

    e.reference = read_png(dir + "/reference.png");
    for (int k = 0; k < e.meta.n_subjects; ++k) {
        e.masks.push_back(read_png_mask(dir + "/mask_" + std::to_string(k) + ".png"));
    }
    e.union_mask = Mask(e.meta.height, e.meta.width);
    for (const auto& mk : e.masks) {
        for (size_t i = 0; i < mk.v.size(); ++i) {
            if (mk.v[i]) e.union_mask.v[i] = 1;
        }
    }
    e.gt_video = Tensor({e.meta.frames, e.meta.height, e.meta.width, 3});
    for (int f = 0; f < e.meta.frames; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "gt_%03d.png", f);
        const Tensor frame = read_png(dir + "/" + name);
        if (frame.dim(0) != e.meta.height || frame.dim(1) != e.meta.width) {
            throw format_error(std::string(name) + ": frame size does not match manifest");
        }
        std::copy(frame.ptr(), frame.ptr() + frame.numel(),
                  e.gt_video.ptr() + static_cast<int64_t>(f) * e.meta.height * e.meta.width * 3);
    }
    e.driving = PoseSequence::from_json(json_slurp(dir + "/driving.json"));
    return e;
}

void write_index(const std::string& dataset_dir, const std::vector<std::string>& episode_dirs) {
    fs::create_directories(dataset_dir);
    nlohmann::json j = episode_dirs;
    write_text_file(dataset_dir + "/index.json", j.dump(2));
}

std::vector<std::string> read_index(const std::string& dataset_dir) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_slurp(dataset_dir + "/index.json"));
    } catch (const nlohmann::json::exception& ex) {
        throw format_error(std::string("index.json: ") + ex.what());
    }
    return j.get<std::vector<std::string>>();
}

namespace {

int draw_subject_count(Rng& rng) {
    // favors small groups but covers the full 1..6 range
    static const double weights[6] = {0.22, 0.26, 0.22, 0.14, 0.08, 0.08};
    const double u = rng.uniform();
    double acc = 0;
    for (int i = 0; i < 6; ++i) {
        acc += weights[i];
        if (u < acc) return i + 1;
    }
    return 6;
}

GenParams plan_episode(uint64_t seed, const SplitSpec& spec, bool misaligned, bool single_driver) {
    Rng rng = Rng(seed).child("plan");
    GenParams p;
    p.seed = seed;
    p.height = spec.height;
    p.width = spec.width;
    p.frames = spec.frames;
    p.motion_id = static_cast<int>(rng.uniform_int(kNumMotions));
    if (single_driver) {
        p.n_subjects = 2 + static_cast<int>(rng.uniform_int(2));
    } else {
        p.n_subjects = draw_subject_count(rng);
    }
    if (misaligned) {
        const double mag_x = rng.uniform(0.10, 0.25);
        const double mag_y = rng.uniform(0.10, 0.25);
        p.misalign.dx = rng.uniform_int(2) == 0 ? mag_x : -mag_x;
        p.misalign.dy = rng.uniform_int(2) == 0 ? mag_y : -mag_y;
        p.misalign.scale = rng.uniform(0.80, 1.25);
    }
    return p;
}

}  // namespace

DatasetPlan make_eval_split(const SplitSpec& spec) {
    require(spec.train_count > 0 && spec.test_count > 0, "make_eval_split: counts must be positive");
    const uint64_t train_lo = spec.train_seed_base;
    const uint64_t train_hi = spec.train_seed_base + static_cast<uint64_t>(spec.train_count);
    const uint64_t test_lo = spec.test_seed_base;
    const uint64_t test_hi = spec.test_seed_base + 2 * 10000 + static_cast<uint64_t>(spec.test_count);
    if (train_lo < test_hi && test_lo < train_hi) {
        throw std::invalid_argument("make_eval_split: train and test seed ranges overlap");
    }

    DatasetPlan plan;
    plan.train.name = "train";
    for (int i = 0; i < spec.train_count; ++i) {
        plan.train.episodes.push_back(plan_episode(spec.train_seed_base + static_cast<uint64_t>(i), spec, false, false));
    }
    plan.test_aligned.name = "test_aligned";
    plan.test_misaligned.name = "test_misaligned";
    plan.test_single_driver.name = "test_single_driver";
    for (int i = 0; i < spec.test_count; ++i) {
        plan.test_aligned.episodes.push_back(
            plan_episode(spec.test_seed_base + static_cast<uint64_t>(i), spec, false, false));
        plan.test_misaligned.episodes.push_back(
            plan_episode(spec.test_seed_base + 10000 + static_cast<uint64_t>(i), spec, true, false));
        plan.test_single_driver.episodes.push_back(
            plan_episode(spec.test_seed_base + 20000 + static_cast<uint64_t>(i), spec, false, true));
    }
    return plan;
}

uint64_t materialize_split(const SplitPlan& split, const std::string& root) {
    const std::string split_dir = root + "/" + split.name;
    std::vector<std::string> names;
    names.reserve(split.episodes.size());
    for (size_t i = 0; i < split.episodes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "ep_%05zu", i);
        names.emplace_back(name);
    }

    uint64_t hash = 0xcbf29ce484222325ull;
    std::vector<uint64_t> hashes(split.episodes.size(), 0);
    parallel_for(static_cast<int>(split.episodes.size()), [&](int i) {
        const Episode e = generate_episode(split.episodes[static_cast<size_t>(i)]);
        write_episode(e, split_dir + "/" + names[static_cast<size_t>(i)]);
        uint64_t h = fnv1a(e.reference.ptr(), sizeof(float) * static_cast<size_t>(e.reference.numel()));
        h = fnv1a(e.gt_video.ptr(), sizeof(float) * static_cast<size_t>(e.gt_video.numel()), h);
        for (const auto& m : e.masks) {
            h = fnv1a(m.v.data(), m.v.size(), h);
        }
        const std::string dj = e.driving.to_json();
        h = fnv1a(dj.data(), dj.size(), h);
        h = fnv1a(e.text.data(), sizeof(int) * e.text.size(), h);
        hashes[static_cast<size_t>(i)] = h;
    });
    for (uint64_t h : hashes) {
        hash = fnv1a(&h, sizeof(h), hash);
    }
    write_index(split_dir, names);
    return hash;
}

}  // namespace troupe
