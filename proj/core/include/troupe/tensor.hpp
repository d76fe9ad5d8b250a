#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace troupe {

// Dense row-major tensor, always contiguous. Reshape shares storage;
// every op allocates fresh outputs, so shared storage is never mutated
// behind a reader's back.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> s);

    static TensorT zeros(std::vector<int> s);
    static TensorT full(std::vector<int> s, T v);

    int64_t numel() const;
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }
    bool empty() const { return !data; }

    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    T& operator[](int64_t i) { return (*data)[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return (*data)[static_cast<size_t>(i)]; }

    TensorT reshaped(std::vector<int> s) const;
    TensorT clone() const;
    bool same_shape(const TensorT& o) const { return shape == o.shape; }
    bool all_finite() const;

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(shape);
        for (int64_t i = 0; i < numel(); ++i) {
            out[i] = static_cast<U>((*this)[i]);
        }
        return out;
    }
};

using Tensor = TensorT<float>;

template <typename T>
void fill_normal(TensorT<T>& t, class Rng& rng, double mean = 0.0, double stddev = 1.0);
template <typename T>
void fill_uniform(TensorT<T>& t, class Rng& rng, double lo, double hi);

// y += a * x, elementwise (optimizer / gradient reduction helper)
template <typename T>
void axpy(TensorT<T>& y, T a, const TensorT<T>& x);

enum class ParamGroup {
    backbone = 0,
    text_embedder = 1,
    pose_encoder = 2,
    mask_encoder = 3,
    lora = 4,
};

template <typename T>
struct ParamStoreT {
    struct Entry {
        std::string name;
        TensorT<T> value;
        TensorT<T> grad;
        ParamGroup group;
    };
    std::vector<Entry> entries;
    std::unordered_map<std::string, int> index;

    int add(const std::string& name, TensorT<T> value, ParamGroup group);
    int find(const std::string& name) const;  // -1 if absent
    Entry& at(int i) { return entries[static_cast<size_t>(i)]; }
    const Entry& at(int i) const { return entries[static_cast<size_t>(i)]; }
    void zero_grads();
    uint64_t checksum(ParamGroup group) const;
    uint64_t checksum_all() const;
};

using ParamStore = ParamStoreT<float>;

struct AttnProbe {
    double row_sum_min = 1.0;
    double row_sum_max = 1.0;
    int64_t rows = 0;
};

// Reverse-mode tape. One graph per sample per step; build forward with the
// op methods, call backward(loss) once, then harvest parameter gradients.
template <typename T>
class GraphT {
public:
    using Id = int;

    explicit GraphT(bool recording = true) : recording_(recording) {}

    Id leaf(TensorT<T> v);
    Id param(ParamStoreT<T>& store, int param_index);

    const TensorT<T>& val(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    const TensorT<T>& grad(Id id) const;

    // elementwise
    Id add(Id a, Id b);
    Id scale(Id a, T s);
    Id mul(Id a, Id b);
    Id silu(Id a);
    Id gelu(Id a);

    // token-matrix ops, x: [n, d]
    Id linear(Id x, Id w, Id b);          // w: [dout, din], b: [dout] or -1
    Id layernorm(Id x, T eps);
    Id modulate(Id x, Id scale_vec, Id shift_vec);  // y = x*(1+s) + t, rowwise broadcast
    Id colscale(Id x, Id gate_vec);                 // y = x * g, rowwise broadcast
    Id add_rowvec(Id x, Id v);
    Id concat_rows(const std::vector<Id>& parts);
    Id slice_rows(Id x, int r0, int r1);
    Id zero_rows(Id x, int r0, int r1);
    Id attention(Id q, Id k, Id v, int heads, AttnProbe* probe = nullptr);

    // grids
    Id conv2d(Id x, Id w, Id b, int stride, int pad);              // x: [Cin,H,W]
    Id conv3d(Id x, Id w, Id b, int sf, int sh, int sw, int pad);  // x: [Cin,F,H,W]
    Id patchify(Id grid, int pt, int ph, int pw);                  // [C,F,H,W] -> [nt, C*pt*ph*pw]
    Id unpatchify(Id tokens, int C, int F, int H, int W, int pt, int ph, int pw);
    Id broadcast_add_frames(Id grid, Id plane);                    // [C,F,H,W] + [C,H,W]
    Id translate_grid(Id grid, int dh, int dw);                    // spatial shift, zero fill
    // y = x + sum_j copy(x[region] shifted by offsets[j]); offsets in (dh,dw)
    Id region_duplicate_add(Id grid, int h0, int h1, int w0, int w1,
                            const std::vector<std::pair<int, int>>& offsets);

    Id embed_rows(Id table, std::vector<int> ids);
    Id reshape(Id x, std::vector<int> s);

    Id mse_loss(Id pred, TensorT<T> target);  // scalar [1]

    void backward(Id loss);
    // add each used parameter's gradient into its store slot
    void harvest(ParamStoreT<T>& store, T scl = T(1));
    // add into an external buffer aligned with store.entries (for ordered
    // cross-sample reduction)
    void harvest_into(std::vector<TensorT<T>>& bufs, T scl = T(1)) const;

    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        TensorT<T> value;
        std::function<void(GraphT&)> back;
    };
    std::vector<Node> nodes_;
    std::vector<TensorT<T>> grads_;
    std::vector<std::pair<int, Id>> param_nodes_;  // (store index, node id)
    std::unordered_map<int, Id> param_cache_;
    bool recording_;

    Id push(TensorT<T> v, std::function<void(GraphT&)> back);
    TensorT<T>& grad_buf(Id id);
    void accum(Id id, const TensorT<T>& g);
};

using Graph = GraphT<float>;

template <typename F>
void parallel_for(int n, F&& f) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) {
        f(i);
    }
}

}  // namespace troupe
