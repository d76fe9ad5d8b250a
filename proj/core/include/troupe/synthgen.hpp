#pragma once

#include "troupe/image.hpp"
#include "troupe/skeleton.hpp"
#include "troupe/tensor.hpp"

#include <array>
#include <string>
#include <vector>

namespace troupe {

enum class Archetype : int { humanoid = 0, blob = 1, quadruped = 2 };
constexpr int kNumArchetypes = 3;
const char* archetype_name(Archetype a);

// Fixed closed vocabulary. id 0 is the null token (CFG unconditional),
// id 1 the padding token.
struct TextVocab {
    static constexpr int kNull = 0;
    static constexpr int kPad = 1;
    static constexpr int kPromptLen = 4;

    int size() const;
    const std::string& word(int id) const;
    int id(const std::string& word) const;  // -1 if absent
    // "<count> <archetype(s)> dancing", padded to kPromptLen
    std::vector<int> encode_prompt(int count, Archetype a) const;
    std::vector<int> null_prompt() const;
};

const TextVocab& text_vocab();

constexpr int kNumMotions = 8;
const char* motion_name(int motion_id);  // wave squat spin sway jump lean kick bounce

struct SubjectSpec {
    Archetype archetype = Archetype::humanoid;
    double base_x = 0.5, base_y = 0.5;
    double base_scale = 0.5;
    std::array<float, 3> color = {1, 1, 1};
};

struct Misalign {
    double dx = 0.0, dy = 0.0;
    double scale = 1.0;
    bool zero() const { return dx == 0.0 && dy == 0.0 && scale == 1.0; }
};

struct GenParams {
    int n_subjects = 1;
    int motion_id = 0;
    Misalign misalign;
    uint64_t seed = 0;
    int height = 64, width = 64, frames = 16;
};

struct EpisodeMeta {
    int version = 1;
    uint64_t seed = 0;
    int n_subjects = 0;
    int motion_id = 0;
    Misalign misalign;
    std::vector<int> text;
    std::vector<Archetype> archetypes;
    std::array<float, 3> background = {0, 0, 0};
    int height = 0, width = 0, frames = 0;
};

struct Episode {
    Tensor reference;          // [H,W,3]
    std::vector<Mask> masks;   // per subject, frame 0
    Mask union_mask;
    std::vector<int> text;
    PoseSequence driving;      // single canonical skeleton per frame
    Tensor gt_video;           // [F,H,W,3]
    EpisodeMeta meta;
};

Episode generate_episode(const GenParams& p);
bool episodes_equal(const Episode& a, const Episode& b);

// subject placement recomputed from meta (deterministic in meta.seed)
std::vector<SubjectSpec> episode_subjects(const EpisodeMeta& meta);
// per-subject ground-truth skeleton sequence in canvas coordinates
PoseSequence subject_gt_sequence(const EpisodeMeta& meta, int subject);
// canonical driving sequence before misalignment (center 0.5/0.5, scale 0.5)
PoseSequence canonical_driving(int motion_id, int frames);

// Episode directory: manifest.json, reference.png, mask_<k>.png,
// gt_<fff>.png, driving.json. read(write(e)) is field-for-field identical.
void write_episode(const Episode& e, const std::string& dir);
Episode read_episode(const std::string& dir);

void write_index(const std::string& dataset_dir, const std::vector<std::string>& episode_dirs);
std::vector<std::string> read_index(const std::string& dataset_dir);

struct SplitPlan {
    std::string name;
    std::vector<GenParams> episodes;
};

struct DatasetPlan {
    SplitPlan train;
    SplitPlan test_aligned;
    SplitPlan test_misaligned;
    SplitPlan test_single_driver;
};

struct SplitSpec {
    int train_count = 500;
    int test_count = 20;
    uint64_t train_seed_base = 1000;
    uint64_t test_seed_base = 900000;
    int height = 64, width = 64, frames = 16;
};

DatasetPlan make_eval_split(const SplitSpec& spec);

// generate + write all episodes of a split into <root>/<split.name>;
// returns the dataset content hash (stable across runs)
uint64_t materialize_split(const SplitPlan& split, const std::string& root);

}  // namespace troupe
