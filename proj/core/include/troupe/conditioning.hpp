#pragma once

#include "troupe/image.hpp"
#include "troupe/rng.hpp"
#include "troupe/tensor.hpp"

#include <vector>

namespace troupe {

// Latent codec: exact space-to-channel rearrangement (4x4 blocks folded into
// channels, C = 3*16 = 48) with a fixed affine (x - 0.5) * 4 per channel.
// Both constants are powers of two, so decode(encode(v)) is bit-exact for
// any video whose values are multiples of 2^-16 (everything the 8-bit image
// pipeline produces).
constexpr int kCodecFactor = 4;
constexpr int kLatentChannels = 3 * kCodecFactor * kCodecFactor;
constexpr float kCodecMean = 0.5f;
constexpr float kCodecScale = 4.0f;

Tensor encode_latent(const Tensor& video);  // [F,H,W,3] -> [48,F,H/4,W/4]
Tensor decode_latent(const Tensor& grid);   // inverse

// layout helpers for conditioning inputs
Tensor fhwc_to_cfhw(const Tensor& raster);      // [F,H,W,3] -> [3,F,H,W]
Tensor mask_to_tensor(const Mask& m);           // -> [1,H,W] float 0/1

template <typename T>
struct PoseShiftEncoderT {
    int p_w1 = -1, p_b1 = -1, p_w2 = -1, p_b2 = -1, p_w3 = -1, p_b3 = -1;
    int out_channels = 0;

    // stages: 3->16 s(1,2,2), 16->32 s(1,2,2), 32->out s1; last stage
    // zero-initialized so the pose branch starts silent
    void init(ParamStoreT<T>& store, Rng& rng, int out_ch);
    // raster: [3,F,H,W] -> [out,F,H/4,W/4]; identity_activations drops the
    // nonlinearities (used by the shift-equivariance check)
    typename GraphT<T>::Id forward(GraphT<T>& g, ParamStoreT<T>& store, typename GraphT<T>::Id raster,
                                   bool identity_activations = false) const;
};

template <typename T>
struct MaskEncoderT {
    int p_w1 = -1, p_b1 = -1, p_w2 = -1, p_b2 = -1;
    int out_channels = 0;

    void init(ParamStoreT<T>& store, Rng& rng, int out_ch);
    // mask: [1,H,W] -> [out,H/4,W/4]
    typename GraphT<T>::Id forward(GraphT<T>& g, ParamStoreT<T>& store, typename GraphT<T>::Id mask) const;
};

template <typename T>
struct TextEmbedderT {
    int p_table = -1, p_pos = -1;
    int p_wq = -1, p_wk = -1, p_wv = -1, p_wo = -1;
    int p_mw1 = -1, p_mb1 = -1, p_mw2 = -1, p_mb2 = -1;
    int width = 0;

    void init(ParamStoreT<T>& store, Rng& rng, int vocab, int w, int prompt_len);
    typename GraphT<T>::Id forward(GraphT<T>& g, ParamStoreT<T>& store, const std::vector<int>& ids) const;
};

// token embedding parameters shared by the three segments; owned by the
// backbone (created at pretrain, frozen during fine-tuning)
template <typename T>
struct TokenEmbedT {
    int p_patch_w = -1, p_patch_b = -1;  // [D, C*ph*pw]
    int p_type = -1;                     // [3, D]: 0 noisy, 1 reference, 2 pose
    int width = 0, patch_h = 1, patch_w = 1;

    void init(ParamStoreT<T>& store, Rng& rng, int D, int latent_channels, int ph, int pw);
};

enum class SegmentType : int { noisy = 0, reference = 1, pose = 2 };

struct DropFlags {
    bool text = false;
    bool pose = false;
    bool mask = false;
};

// assembled denoiser input: one sample
template <typename T>
struct BundleT {
    typename GraphT<T>::Id tokens = -1;     // [n_ref + n_noisy + n_pose, D]
    typename GraphT<T>::Id text_feat = -1;  // [L, text_width]
    int n_ref = 0, n_noisy = 0, n_pose = 0;
    int t = 0;
    DropFlags drops;
    // latent geometry (for reading the prediction back out)
    int C = 0, F = 0, H = 0, W = 0, ph = 1, pw = 1;
};

// factored sinusoidal position embedding over (frame, y, x); frame -1 is the
// reference slot
TensorT<float> sincos_pos3d(int D, int frame, int Ht, int Wt);
TensorT<double> sincos_pos3d_d(int D, int frame, int Ht, int Wt);

template <typename T>
struct AssembleInputsT {
    typename GraphT<T>::Id noisy = -1;      // [C,F,H',W'] latent
    typename GraphT<T>::Id ref = -1;        // [C,1,H',W'] or -1 (T2V)
    typename GraphT<T>::Id pose_feat = -1;  // [C,F,H',W'] or -1
    typename GraphT<T>::Id mask_feat = -1;  // [C,H',W'] or -1
    std::vector<int> text_ids;
    int timestep = 0;
    DropFlags drops;
};

template <typename T>
BundleT<T> assemble(GraphT<T>& g, ParamStoreT<T>& store, const TokenEmbedT<T>& emb, const TextEmbedderT<T>& text_enc,
                    const AssembleInputsT<T>& in);

using PoseShiftEncoder = PoseShiftEncoderT<float>;
using MaskEncoder = MaskEncoderT<float>;
using TextEmbedder = TextEmbedderT<float>;
using TokenEmbed = TokenEmbedT<float>;
using Bundle = BundleT<float>;
using AssembleInputs = AssembleInputsT<float>;

}  // namespace troupe
