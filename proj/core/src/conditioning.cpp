#include "troupe/conditioning.hpp"

#include "troupe/common.hpp"
#include "troupe/synthgen.hpp"

#include <cmath>

namespace troupe {

Tensor encode_latent(const Tensor& video) {
    require(video.ndim() == 4 && video.dim(3) == 3, "encode_latent: expects [F,H,W,3]");
    const int F = video.dim(0), H = video.dim(1), W = video.dim(2);
    require(H % kCodecFactor == 0 && W % kCodecFactor == 0, "encode_latent: H and W must be divisible by 4");
    const int Hp = H / kCodecFactor, Wp = W / kCodecFactor;
    Tensor out({kLatentChannels, F, Hp, Wp});
    for (int by = 0; by < kCodecFactor; ++by) {
        for (int bx = 0; bx < kCodecFactor; ++bx) {
            for (int ch = 0; ch < 3; ++ch) {
                const int c = (by * kCodecFactor + bx) * 3 + ch;
                for (int f = 0; f < F; ++f) {
                    for (int y = 0; y < Hp; ++y) {
                        for (int x = 0; x < Wp; ++x) {
                            const float v =
                                video[((static_cast<int64_t>(f) * H + (y * kCodecFactor + by)) * W +
                                       (x * kCodecFactor + bx)) *
                                          3 +
                                      ch];
                            out[((static_cast<int64_t>(c) * F + f) * Hp + y) * Wp + x] = (v - kCodecMean) * kCodecScale;
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor decode_latent(const Tensor& grid) {
    require(grid.ndim() == 4 && grid.dim(0) == kLatentChannels, "decode_latent: expects [48,F,H',W']");
    const int F = grid.dim(1), Hp = grid.dim(2), Wp = grid.dim(3);
    const int H = Hp * kCodecFactor, W = Wp * kCodecFactor;
    Tensor out({F, H, W, 3});
    for (int by = 0; by < kCodecFactor; ++by) {
        for (int bx = 0; bx < kCodecFactor; ++bx) {
            for (int ch = 0; ch < 3; ++ch) {
                const int c = (by * kCodecFactor + bx) * 3 + ch;
                for (int f = 0; f < F; ++f) {
                    for (int y = 0; y < Hp; ++y) {
                        for (int x = 0; x < Wp; ++x) {
                            const float z = grid[((static_cast<int64_t>(c) * F + f) * Hp + y) * Wp + x];
                            out[((static_cast<int64_t>(f) * H + (y * kCodecFactor + by)) * W +
                                 (x * kCodecFactor + bx)) *
                                    3 +
                                ch] = z * (1.0f / kCodecScale) + kCodecMean;
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor fhwc_to_cfhw(const Tensor& raster) {
    require(raster.ndim() == 4 && raster.dim(3) == 3, "fhwc_to_cfhw: expects [F,H,W,3]");
    const int F = raster.dim(0), H = raster.dim(1), W = raster.dim(2);
    Tensor out({3, F, H, W});
    for (int f = 0; f < F; ++f) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                for (int c = 0; c < 3; ++c) {
                    out[((static_cast<int64_t>(c) * F + f) * H + y) * W + x] =
                        raster[((static_cast<int64_t>(f) * H + y) * W + x) * 3 + c];
                }
            }
        }
    }
    return out;
}

Tensor mask_to_tensor(const Mask& m) {
    Tensor out({1, m.h, m.w});
    for (size_t i = 0; i < m.v.size(); ++i) {
        out[static_cast<int64_t>(i)] = m.v[i] ? 1.0f : 0.0f;
    }
    return out;
}

namespace {

template <typename T>
TensorT<T> conv_weight(Rng& rng, int cout, int cin, int k, int nd) {
    std::vector<int> shape;
    shape.push_back(cout);
    shape.push_back(cin);
    for (int i = 0; i < nd; ++i) shape.push_back(k);
    TensorT<T> w(shape);
    int64_t fan_in = cin;
    for (int i = 0; i < nd; ++i) fan_in *= k;
    fill_normal(w, rng, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    return w;
}

template <typename T>
TensorT<T> dense_weight(Rng& rng, int dout, int din) {
    TensorT<T> w({dout, din});
    fill_normal(w, rng, 0.0, std::sqrt(1.0 / static_cast<double>(din)));
    return w;
}

}  // namespace

template <typename T>
void PoseShiftEncoderT<T>::init(ParamStoreT<T>& store, Rng& rng, int out_ch) {
    out_channels = out_ch;
    p_w1 = store.add("pose_enc.conv1.weight", conv_weight<T>(rng, 16, 3, 3, 3), ParamGroup::pose_encoder);
    p_b1 = store.add("pose_enc.conv1.bias", TensorT<T>::zeros({16}), ParamGroup::pose_encoder);
    p_w2 = store.add("pose_enc.conv2.weight", conv_weight<T>(rng, 32, 16, 3, 3), ParamGroup::pose_encoder);
    p_b2 = store.add("pose_enc.conv2.bias", TensorT<T>::zeros({32}), ParamGroup::pose_encoder);
    p_w3 = store.add("pose_enc.conv3.weight", TensorT<T>::zeros({out_ch, 32, 3, 3, 3}), ParamGroup::pose_encoder);
    p_b3 = store.add("pose_enc.conv3.bias", TensorT<T>::zeros({out_ch}), ParamGroup::pose_encoder);
}

template <typename T>
typename GraphT<T>::Id PoseShiftEncoderT<T>::forward(GraphT<T>& g, ParamStoreT<T>& store,
                                                     typename GraphT<T>::Id raster, bool identity_activations) const {
    auto x = g.conv3d(raster, g.param(store, p_w1), g.param(store, p_b1), 1, 2, 2, 1);
    if (!identity_activations) x = g.silu(x);
    x = g.conv3d(x, g.param(store, p_w2), g.param(store, p_b2), 1, 2, 2, 1);
    if (!identity_activations) x = g.silu(x);
    return g.conv3d(x, g.param(store, p_w3), g.param(store, p_b3), 1, 1, 1, 1);
}

template <typename T>
void MaskEncoderT<T>::init(ParamStoreT<T>& store, Rng& rng, int out_ch) {
    out_channels = out_ch;
    p_w1 = store.add("mask_enc.conv1.weight", conv_weight<T>(rng, 16, 1, 3, 2), ParamGroup::mask_encoder);
    p_b1 = store.add("mask_enc.conv1.bias", TensorT<T>::zeros({16}), ParamGroup::mask_encoder);
    p_w2 = store.add("mask_enc.conv2.weight", TensorT<T>::zeros({out_ch, 16, 3, 3}), ParamGroup::mask_encoder);
    p_b2 = store.add("mask_enc.conv2.bias", TensorT<T>::zeros({out_ch}), ParamGroup::mask_encoder);
}

template <typename T>
typename GraphT<T>::Id MaskEncoderT<T>::forward(GraphT<T>& g, ParamStoreT<T>& store,
                                                typename GraphT<T>::Id mask) const {
    auto x = g.conv2d(mask, g.param(store, p_w1), g.param(store, p_b1), 2, 1);
    x = g.silu(x);
    return g.conv2d(x, g.param(store, p_w2), g.param(store, p_b2), 2, 1);
}

template <typename T>
void TextEmbedderT<T>::init(ParamStoreT<T>& store, Rng& rng, int vocab, int w, int prompt_len) {
    width = w;
    TensorT<T> table({vocab, w});
    fill_normal(table, rng, 0.0, 0.02);
    p_table = store.add("text_enc.table", std::move(table), ParamGroup::text_embedder);
    TensorT<T> pos({prompt_len, w});
    fill_normal(pos, rng, 0.0, 0.02);
    p_pos = store.add("text_enc.pos", std::move(pos), ParamGroup::text_embedder);
    p_wq = store.add("text_enc.attn.wq", dense_weight<T>(rng, w, w), ParamGroup::text_embedder);
    p_wk = store.add("text_enc.attn.wk", dense_weight<T>(rng, w, w), ParamGroup::text_embedder);
    p_wv = store.add("text_enc.attn.wv", dense_weight<T>(rng, w, w), ParamGroup::text_embedder);
    p_wo = store.add("text_enc.attn.wo", dense_weight<T>(rng, w, w), ParamGroup::text_embedder);
    p_mw1 = store.add("text_enc.mlp.w1", dense_weight<T>(rng, 2 * w, w), ParamGroup::text_embedder);
    p_mb1 = store.add("text_enc.mlp.b1", TensorT<T>::zeros({2 * w}), ParamGroup::text_embedder);
    p_mw2 = store.add("text_enc.mlp.w2", dense_weight<T>(rng, w, 2 * w), ParamGroup::text_embedder);
    p_mb2 = store.add("text_enc.mlp.b2", TensorT<T>::zeros({w}), ParamGroup::text_embedder);
}

template <typename T>
typename GraphT<T>::Id TextEmbedderT<T>::forward(GraphT<T>& g, ParamStoreT<T>& store,
                                                 const std::vector<int>& ids) const {
    auto x = g.embed_rows(g.param(store, p_table), ids);
    x = g.add(x, g.param(store, p_pos));
    {
        auto h = g.layernorm(x, T(1e-5));
        auto q = g.linear(h, g.param(store, p_wq), -1);
        auto k = g.linear(h, g.param(store, p_wk), -1);
        auto v = g.linear(h, g.param(store, p_wv), -1);
        auto a = g.attention(q, k, v, 2);
        x = g.add(x, g.linear(a, g.param(store, p_wo), -1));
    }
    {
        auto h = g.layernorm(x, T(1e-5));
        h = g.linear(h, g.param(store, p_mw1), g.param(store, p_mb1));
        h = g.gelu(h);
        h = g.linear(h, g.param(store, p_mw2), g.param(store, p_mb2));
        x = g.add(x, h);
    }
    return x;
}

template <typename T>
void TokenEmbedT<T>::init(ParamStoreT<T>& store, Rng& rng, int D, int latent_channels, int ph_, int pw_) {
    width = D;
    patch_h = ph_;
    patch_w = pw_;
    p_patch_w =
        store.add("embed.patch.weight", dense_weight<T>(rng, D, latent_channels * ph_ * pw_), ParamGroup::backbone);
    p_patch_b = store.add("embed.patch.bias", TensorT<T>::zeros({D}), ParamGroup::backbone);
    TensorT<T> type({3, D});
    fill_normal(type, rng, 0.0, 0.02);
    p_type = store.add("embed.type", std::move(type), ParamGroup::backbone);
}

namespace {

template <typename T>
TensorT<T> sincos_pos3d_impl(int D, int frame, int Ht, int Wt) {
    require(D % 2 == 0, "pos3d: width must be even");
    const int pxy = 2 * (D / 6);          // per spatial axis, even
    const int pf = D - 2 * pxy;           // remainder to the frame axis, even
    TensorT<T> out({Ht * Wt, D});
    auto write_axis = [&](int base, int part, double pos, T* row) {
        for (int i = 0; i < part / 2; ++i) {
            const double freq = std::pow(10000.0, -2.0 * i / part);
            row[base + 2 * i] = static_cast<T>(std::sin(pos * freq));
            row[base + 2 * i + 1] = static_cast<T>(std::cos(pos * freq));
        }
    };
    for (int y = 0; y < Ht; ++y) {
        for (int x = 0; x < Wt; ++x) {
            T* row = out.ptr() + (static_cast<int64_t>(y) * Wt + x) * D;
            write_axis(0, pf, static_cast<double>(frame), row);
            write_axis(pf, pxy, static_cast<double>(y), row);
            write_axis(pf + pxy, pxy, static_cast<double>(x), row);
        }
    }
    return out;
}

}  // namespace

TensorT<float> sincos_pos3d(int D, int frame, int Ht, int Wt) {
    return sincos_pos3d_impl<float>(D, frame, Ht, Wt);
}
TensorT<double> sincos_pos3d_d(int D, int frame, int Ht, int Wt) {
    return sincos_pos3d_impl<double>(D, frame, Ht, Wt);
}

namespace {

template <typename T>
TensorT<T> pos_for_frames(int D, int f0, int frames, int Ht, int Wt) {
    TensorT<T> out({frames * Ht * Wt, D});
    for (int f = 0; f < frames; ++f) {
        const auto plane = sincos_pos3d_impl<T>(D, f0 + f, Ht, Wt);
        std::copy(plane.ptr(), plane.ptr() + plane.numel(), out.ptr() + static_cast<int64_t>(f) * Ht * Wt * D);
    }
    return out;
}

template <typename T>
typename GraphT<T>::Id type_vector(GraphT<T>& g, ParamStoreT<T>& store, const TokenEmbedT<T>& emb, SegmentType s) {
    auto row = g.embed_rows(g.param(store, emb.p_type), {static_cast<int>(s)});
    return g.reshape(row, {emb.width});
}

}  // namespace

template <typename T>
BundleT<T> assemble(GraphT<T>& g, ParamStoreT<T>& store, const TokenEmbedT<T>& emb, const TextEmbedderT<T>& text_enc,
                    const AssembleInputsT<T>& in) {
    BundleT<T> b;
    b.drops = in.drops;
    b.t = in.timestep;
    const auto& noisy_v = g.val(in.noisy);
    require(noisy_v.ndim() == 4, "assemble: noisy latent must be [C,F,H,W]");
    b.C = noisy_v.dim(0);
    b.F = noisy_v.dim(1);
    b.H = noisy_v.dim(2);
    b.W = noisy_v.dim(3);
    b.ph = emb.patch_h;
    b.pw = emb.patch_w;
    require(b.H % b.ph == 0 && b.W % b.pw == 0, "assemble: patch must divide the latent grid");
    const int Ht = b.H / b.ph, Wt = b.W / b.pw;
    const int D = emb.width;

    auto patch_w = g.param(store, emb.p_patch_w);
    auto patch_b = g.param(store, emb.p_patch_b);

    // noisy tokens (mask features pre-added on the latent grid)
    auto noisy = in.noisy;
    if (in.mask_feat >= 0 && !in.drops.mask) {
        noisy = g.broadcast_add_frames(noisy, in.mask_feat);
    }
    auto tok_noisy = g.linear(g.patchify(noisy, 1, b.ph, b.pw), patch_w, patch_b);
    tok_noisy = g.add_rowvec(tok_noisy, type_vector(g, store, emb, SegmentType::noisy));
    tok_noisy = g.add(tok_noisy, g.leaf(pos_for_frames<T>(D, 0, b.F, Ht, Wt)));
    b.n_noisy = b.F * Ht * Wt;

    std::vector<typename GraphT<T>::Id> parts;
    if (in.ref >= 0) {
        auto tok_ref = g.linear(g.patchify(in.ref, 1, b.ph, b.pw), patch_w, patch_b);
        tok_ref = g.add_rowvec(tok_ref, type_vector(g, store, emb, SegmentType::reference));
        tok_ref = g.add(tok_ref, g.leaf(sincos_pos3d_impl<T>(D, -1, Ht, Wt)));
        b.n_ref = Ht * Wt;
        parts.push_back(tok_ref);
    }
    parts.push_back(tok_noisy);
    if (in.pose_feat >= 0) {
        auto tok_pose = g.linear(g.patchify(in.pose_feat, 1, b.ph, b.pw), patch_w, patch_b);
        tok_pose = g.add_rowvec(tok_pose, type_vector(g, store, emb, SegmentType::pose));
        tok_pose = g.add(tok_pose, g.leaf(pos_for_frames<T>(D, 0, b.F, Ht, Wt)));
        b.n_pose = b.F * Ht * Wt;
        parts.push_back(tok_pose);
    }
    auto tokens = parts.size() == 1 ? parts[0] : g.concat_rows(parts);
    if (in.drops.pose && b.n_pose > 0) {
        tokens = g.zero_rows(tokens, b.n_ref + b.n_noisy, b.n_ref + b.n_noisy + b.n_pose);
    }
    b.tokens = tokens;

    const std::vector<int> ids = in.drops.text ? text_vocab().null_prompt() : in.text_ids;
    b.text_feat = text_enc.forward(g, store, ids);
    return b;
}

template struct PoseShiftEncoderT<float>;
template struct PoseShiftEncoderT<double>;
template struct MaskEncoderT<float>;
template struct MaskEncoderT<double>;
template struct TextEmbedderT<float>;
template struct TextEmbedderT<double>;
template struct TokenEmbedT<float>;
template struct TokenEmbedT<double>;
template BundleT<float> assemble<float>(GraphT<float>&, ParamStoreT<float>&, const TokenEmbedT<float>&,
                                        const TextEmbedderT<float>&, const AssembleInputsT<float>&);
template BundleT<double> assemble<double>(GraphT<double>&, ParamStoreT<double>&, const TokenEmbedT<double>&,
                                          const TextEmbedderT<double>&, const AssembleInputsT<double>&);

}  // namespace troupe
