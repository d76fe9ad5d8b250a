#include "troupe/tensor.hpp"

#include "troupe/common.hpp"
#include "troupe/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <utility>

namespace troupe {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapM = Eigen::Map<const RowMat<T>>;

template <typename T>
int64_t shape_numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
        n *= d;
    }
    return n;
}

}  // namespace

template <typename T>
TensorT<T>::TensorT(std::vector<int> s) : shape(std::move(s)) {
    data = std::make_shared<std::vector<T>>(static_cast<size_t>(shape_numel<T>(shape)), T(0));
}

template <typename T>
TensorT<T> TensorT<T>::zeros(std::vector<int> s) {
    return TensorT<T>(std::move(s));
}

template <typename T>
TensorT<T> TensorT<T>::full(std::vector<int> s, T v) {
    TensorT<T> t(std::move(s));
    std::fill(t.data->begin(), t.data->end(), v);
    return t;
}

template <typename T>
int64_t TensorT<T>::numel() const {
    return data ? static_cast<int64_t>(data->size()) : 0;
}

template <typename T>
TensorT<T> TensorT<T>::reshaped(std::vector<int> s) const {
    require(shape_numel<T>(s) == numel(), "reshape: element count mismatch");
    TensorT<T> t;
    t.shape = std::move(s);
    t.data = data;
    return t;
}

template <typename T>
TensorT<T> TensorT<T>::clone() const {
    TensorT<T> t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<T>>(*data);
    return t;
}

template <typename T>
bool TensorT<T>::all_finite() const {
    for (int64_t i = 0; i < numel(); ++i) {
        if (!std::isfinite(static_cast<double>((*this)[i]))) {
            return false;
        }
    }
    return true;
}

template <typename T>
void fill_normal(TensorT<T>& t, Rng& rng, double mean, double stddev) {
    for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = static_cast<T>(mean + stddev * rng.normal());
    }
}

template <typename T>
void fill_uniform(TensorT<T>& t, Rng& rng, double lo, double hi) {
    for (int64_t i = 0; i < t.numel(); ++i) {
        t[i] = static_cast<T>(rng.uniform(lo, hi));
    }
}

template <typename T>
void axpy(TensorT<T>& y, T a, const TensorT<T>& x) {
    require(y.numel() == x.numel(), "axpy: size mismatch");
    T* yp = y.ptr();
    const T* xp = x.ptr();
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) {
        yp[i] += a * xp[i];
    }
}

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

template <typename T>
int ParamStoreT<T>::add(const std::string& name, TensorT<T> value, ParamGroup group) {
    require(index.find(name) == index.end(), "duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.grad = TensorT<T>::zeros(value.shape);
    e.value = std::move(value);
    e.group = group;
    entries.push_back(std::move(e));
    const int id = static_cast<int>(entries.size()) - 1;
    index[name] = id;
    return id;
}

template <typename T>
int ParamStoreT<T>::find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
}

template <typename T>
void ParamStoreT<T>::zero_grads() {
    for (auto& e : entries) {
        std::fill(e.grad.data->begin(), e.grad.data->end(), T(0));
    }
}

template <typename T>
uint64_t ParamStoreT<T>::checksum(ParamGroup group) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& e : entries) {
        if (e.group != group) {
            continue;
        }
        h = fnv1a(e.name.data(), e.name.size(), h);
        h = fnv1a(e.value.ptr(), sizeof(T) * static_cast<size_t>(e.value.numel()), h);
    }
    return h;
}

template <typename T>
uint64_t ParamStoreT<T>::checksum_all() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& e : entries) {
        h = fnv1a(e.name.data(), e.name.size(), h);
        h = fnv1a(e.value.ptr(), sizeof(T) * static_cast<size_t>(e.value.numel()), h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

template <typename T>
typename GraphT<T>::Id GraphT<T>::push(TensorT<T> v, std::function<void(GraphT&)> back) {
    nodes_.push_back(Node{std::move(v), recording_ ? std::move(back) : nullptr});
    return static_cast<Id>(nodes_.size()) - 1;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::leaf(TensorT<T> v) {
    return push(std::move(v), nullptr);
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::param(ParamStoreT<T>& store, int param_index) {
    auto it = param_cache_.find(param_index);
    if (it != param_cache_.end()) {
        return it->second;
    }
    const Id id = push(store.at(param_index).value, nullptr);
    param_cache_[param_index] = id;
    param_nodes_.emplace_back(param_index, id);
    return id;
}

template <typename T>
TensorT<T>& GraphT<T>::grad_buf(Id id) {
    if (grads_[static_cast<size_t>(id)].empty()) {
        grads_[static_cast<size_t>(id)] = TensorT<T>::zeros(nodes_[static_cast<size_t>(id)].value.shape);
    }
    return grads_[static_cast<size_t>(id)];
}

template <typename T>
const TensorT<T>& GraphT<T>::grad(Id id) const {
    return grads_[static_cast<size_t>(id)];
}

template <typename T>
void GraphT<T>::accum(Id id, const TensorT<T>& g) {
    axpy(grad_buf(id), T(1), g);
}

template <typename T>
void GraphT<T>::backward(Id loss) {
    require(recording_, "backward on a non-recording graph");
    grads_.assign(nodes_.size(), TensorT<T>());
    require(nodes_[static_cast<size_t>(loss)].value.numel() == 1, "backward: loss must be scalar");
    grad_buf(loss)[0] = T(1);
    for (int i = loss; i >= 0; --i) {
        if (grads_[static_cast<size_t>(i)].empty()) {
            continue;
        }
        if (nodes_[static_cast<size_t>(i)].back) {
            nodes_[static_cast<size_t>(i)].back(*this);
        }
    }
}

template <typename T>
void GraphT<T>::harvest(ParamStoreT<T>& store, T scl) {
    for (const auto& [pi, nid] : param_nodes_) {
        const auto& g = grads_[static_cast<size_t>(nid)];
        if (!g.empty()) {
            axpy(store.at(pi).grad, scl, g);
        }
    }
}

template <typename T>
void GraphT<T>::harvest_into(std::vector<TensorT<T>>& bufs, T scl) const {
    for (const auto& [pi, nid] : param_nodes_) {
        const auto& g = grads_[static_cast<size_t>(nid)];
        if (g.empty()) {
            continue;
        }
        if (bufs[static_cast<size_t>(pi)].empty()) {
            bufs[static_cast<size_t>(pi)] = TensorT<T>::zeros(g.shape);
        }
        axpy(bufs[static_cast<size_t>(pi)], scl, g);
    }
}

// ---- elementwise ----

template <typename T>
typename GraphT<T>::Id GraphT<T>::add(Id a, Id b) {
    const auto& va = val(a);
    const auto& vb = val(b);
    require(va.numel() == vb.numel(), "add: size mismatch");
    TensorT<T> out = va.clone();
    axpy(out, T(1), vb);
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, a, b](GraphT& g) {
        g.accum(a, g.grads_[static_cast<size_t>(self)].reshaped(g.val(a).shape));
        g.accum(b, g.grads_[static_cast<size_t>(self)].reshaped(g.val(b).shape));
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::scale(Id a, T s) {
    TensorT<T> out = val(a).clone();
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] *= s;
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, a, s](GraphT& g) {
        axpy(g.grad_buf(a), s, g.grads_[static_cast<size_t>(self)].reshaped(g.val(a).shape));
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::mul(Id a, Id b) {
    const auto& va = val(a);
    const auto& vb = val(b);
    require(va.numel() == vb.numel(), "mul: size mismatch");
    TensorT<T> out(va.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] = va[i] * vb[i];
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, a, b](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        const auto& va2 = g.val(a);
        const auto& vb2 = g.val(b);
        auto& da = g.grad_buf(a);
        auto& db = g.grad_buf(b);
        for (int64_t i = 0; i < dy.numel(); ++i) {
            da[i] += dy[i] * vb2[i];
            db[i] += dy[i] * va2[i];
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::silu(Id a) {
    const auto& va = val(a);
    TensorT<T> out(va.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        const T x = va[i];
        const T sig = T(1) / (T(1) + std::exp(-x));
        out[i] = x * sig;
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, a](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        const auto& va2 = g.val(a);
        auto& da = g.grad_buf(a);
        for (int64_t i = 0; i < dy.numel(); ++i) {
            const T x = va2[i];
            const T sig = T(1) / (T(1) + std::exp(-x));
            da[i] += dy[i] * sig * (T(1) + x * (T(1) - sig));
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::gelu(Id a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    const auto& va = val(a);
    TensorT<T> out(va.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double x = static_cast<double>(va[i]);
        const double t = std::tanh(kC * (x + kA * x * x * x));
        out[i] = static_cast<T>(0.5 * x * (1.0 + t));
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, a](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        const auto& va2 = g.val(a);
        auto& da = g.grad_buf(a);
        for (int64_t i = 0; i < dy.numel(); ++i) {
            const double x = static_cast<double>(va2[i]);
            const double u = kC * (x + kA * x * x * x);
            const double t = std::tanh(u);
            const double du = kC * (1.0 + 3.0 * kA * x * x);
            const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
            da[i] += dy[i] * static_cast<T>(d);
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

// ---- token-matrix ops ----

template <typename T>
typename GraphT<T>::Id GraphT<T>::linear(Id x, Id w, Id b) {
    const auto& vx = val(x);
    const auto& vw = val(w);
    require(vx.ndim() == 2 && vw.ndim() == 2, "linear: expects 2-d operands");
    const int n = vx.dim(0), din = vx.dim(1), dout = vw.dim(0);
    require(vw.dim(1) == din, "linear: width mismatch");
    TensorT<T> out({n, dout});
    CMapM<T> X(vx.ptr(), n, din);
    CMapM<T> W(vw.ptr(), dout, din);
    MapM<T> Y(out.ptr(), n, dout);
    Y.noalias() = X * W.transpose();
    if (b >= 0) {
        const auto& vb = val(b);
        require(vb.numel() == dout, "linear: bias size mismatch");
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < dout; ++j) {
                out[static_cast<int64_t>(i) * dout + j] += vb[j];
            }
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x, w, b, n, din, dout](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        CMapM<T> dY(dy.ptr(), n, dout);
        CMapM<T> X2(g.val(x).ptr(), n, din);
        CMapM<T> W2(g.val(w).ptr(), dout, din);
        {
            MapM<T> dX(g.grad_buf(x).ptr(), n, din);
            dX.noalias() += dY * W2;
        }
        {
            MapM<T> dW(g.grad_buf(w).ptr(), dout, din);
            dW.noalias() += dY.transpose() * X2;
        }
        if (b >= 0) {
            auto& db = g.grad_buf(b);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < dout; ++j) {
                    db[j] += dy[static_cast<int64_t>(i) * dout + j];
                }
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::layernorm(Id x, T eps) {
    const auto& vx = val(x);
    require(vx.ndim() == 2, "layernorm: expects [n,d]");
    const int n = vx.dim(0), d = vx.dim(1);
    TensorT<T> out({n, d});
    TensorT<T> xhat({n, d});
    TensorT<T> inv_std({n});
    for (int i = 0; i < n; ++i) {
        const T* row = vx.ptr() + static_cast<int64_t>(i) * d;
        T mean = 0;
        for (int j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<T>(d);
        T var = 0;
        for (int j = 0; j < d; ++j) {
            const T c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[i] = is;
        T* orow = out.ptr() + static_cast<int64_t>(i) * d;
        T* hrow = xhat.ptr() + static_cast<int64_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            hrow[j] = (row[j] - mean) * is;
            orow[j] = hrow[j];
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x, n, d, xhat, inv_std](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        auto& dx = g.grad_buf(x);
        for (int i = 0; i < n; ++i) {
            const T* dyr = dy.ptr() + static_cast<int64_t>(i) * d;
            const T* hr = xhat.ptr() + static_cast<int64_t>(i) * d;
            T* dxr = dx.ptr() + static_cast<int64_t>(i) * d;
            T mg = 0, mgh = 0;
            for (int j = 0; j < d; ++j) {
                mg += dyr[j];
                mgh += dyr[j] * hr[j];
            }
            mg /= static_cast<T>(d);
            mgh /= static_cast<T>(d);
            const T is = inv_std[i];
            for (int j = 0; j < d; ++j) {
                dxr[j] += is * (dyr[j] - mg - hr[j] * mgh);
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::modulate(Id x, Id scale_vec, Id shift_vec) {
    const auto& vx = val(x);
    const auto& vs = val(scale_vec);
    const auto& vt = val(shift_vec);
    const int n = vx.dim(0), d = vx.dim(1);
    require(vs.numel() == d && vt.numel() == d, "modulate: vector size mismatch");
    TensorT<T> out({n, d});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            const int64_t k = static_cast<int64_t>(i) * d + j;
            out[k] = vx[k] * (T(1) + vs[j]) + vt[j];
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x, scale_vec, shift_vec, n, d](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        const auto& vx2 = g.val(x);
        const auto& vs2 = g.val(scale_vec);
        auto& dx = g.grad_buf(x);
        auto& ds = g.grad_buf(scale_vec);
        auto& dt = g.grad_buf(shift_vec);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                const int64_t k = static_cast<int64_t>(i) * d + j;
                dx[k] += dy[k] * (T(1) + vs2[j]);
                ds[j] += dy[k] * vx2[k];
                dt[j] += dy[k];
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::colscale(Id x, Id gate_vec) {
    const auto& vx = val(x);
    const auto& vg = val(gate_vec);
    const int n = vx.dim(0), d = vx.dim(1);
    require(vg.numel() == d, "colscale: gate size mismatch");
    TensorT<T> out({n, d});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            const int64_t k = static_cast<int64_t>(i) * d + j;
            out[k] = vx[k] * vg[j];
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x, gate_vec, n, d](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        const auto& vx2 = g.val(x);
        const auto& vg2 = g.val(gate_vec);
        auto& dx = g.grad_buf(x);
        auto& dg = g.grad_buf(gate_vec);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                const int64_t k = static_cast<int64_t>(i) * d + j;
                dx[k] += dy[k] * vg2[j];
                dg[j] += dy[k] * vx2[k];
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::add_rowvec(Id x, Id v) {
    const auto& vx = val(x);
    const auto& vv = val(v);
    const int n = vx.dim(0), d = vx.dim(1);
    require(vv.numel() == d, "add_rowvec: size mismatch");
    TensorT<T> out = vx.clone();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            out[static_cast<int64_t>(i) * d + j] += vv[j];
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x, v, n, d](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        g.accum(x, dy);
        auto& dv = g.grad_buf(v);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                dv[j] += dy[static_cast<int64_t>(i) * d + j];
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::concat_rows(const std::vector<Id>& parts) {
    require(!parts.empty(), "concat_rows: empty");
    const int d = val(parts[0]).dim(1);
    int n = 0;
    for (Id p : parts) {
        require(val(p).ndim() == 2 && val(p).dim(1) == d, "concat_rows: width mismatch");
        n += val(p).dim(0);
    }
    TensorT<T> out({n, d});
    int r = 0;
    for (Id p : parts) {
        const auto& vp = val(p);
        std::copy(vp.ptr(), vp.ptr() + vp.numel(), out.ptr() + static_cast<int64_t>(r) * d);
        r += vp.dim(0);
    }
    const Id self = push(std::move(out), nullptr);
    std::vector<Id> ps = parts;
    nodes_[static_cast<size_t>(self)].back = [self, ps, d](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        int r2 = 0;
        for (Id p : ps) {
            const int np = g.val(p).dim(0);
            auto& dp = g.grad_buf(p);
            const T* src = dy.ptr() + static_cast<int64_t>(r2) * d;
            for (int64_t i = 0; i < static_cast<int64_t>(np) * d; ++i) {
                dp[i] += src[i];
            }
            r2 += np;
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::slice_rows(Id x, int r0, int r1) {
    const auto& vx = val(x);
    const int d = vx.dim(1);
    require(0 <= r0 && r0 <= r1 && r1 <= vx.dim(0), "slice_rows: bad range");
    TensorT<T> out({r1 - r0, d});
    std::copy(vx.ptr() + static_cast<int64_t>(r0) * d, vx.ptr() + static_cast<int64_t>(r1) * d, out.ptr());
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x, r0, r1, d](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        auto& dx = g.grad_buf(x);
        T* dst = dx.ptr() + static_cast<int64_t>(r0) * d;
        for (int64_t i = 0; i < static_cast<int64_t>(r1 - r0) * d; ++i) {
            dst[i] += dy[i];
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::zero_rows(Id x, int r0, int r1) {
    const auto& vx = val(x);
    const int d = vx.dim(1);
    require(0 <= r0 && r0 <= r1 && r1 <= vx.dim(0), "zero_rows: bad range");
    TensorT<T> out = vx.clone();
    std::fill(out.ptr() + static_cast<int64_t>(r0) * d, out.ptr() + static_cast<int64_t>(r1) * d, T(0));
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x, r0, r1, d](GraphT& g) {
        TensorT<T> dy = g.grads_[static_cast<size_t>(self)].clone();
        std::fill(dy.ptr() + static_cast<int64_t>(r0) * d, dy.ptr() + static_cast<int64_t>(r1) * d, T(0));
        g.accum(x, dy);
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::attention(Id q, Id k, Id v, int heads, AttnProbe* probe) {
    const auto& vq = val(q);
    const auto& vk = val(k);
    const auto& vv = val(v);
    const int nq = vq.dim(0), nk = vk.dim(0), D = vq.dim(1);
    require(vk.dim(1) == D && vv.dim(1) == D, "attention: width mismatch");
    require(D % heads == 0, "attention: width not divisible by heads");
    const int dh = D / heads;
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));

    TensorT<T> out({nq, D});
    // per-head softmax probabilities, cached for backward
    auto probs = std::make_shared<std::vector<TensorT<T>>>();
    probs->reserve(static_cast<size_t>(heads));

    CMapM<T> Q(vq.ptr(), nq, D);
    CMapM<T> K(vk.ptr(), nk, D);
    CMapM<T> V(vv.ptr(), nk, D);
    MapM<T> O(out.ptr(), nq, D);

    for (int h = 0; h < heads; ++h) {
        TensorT<T> p({nq, nk});
        MapM<T> P(p.ptr(), nq, nk);
        P.noalias() = Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose() * inv_sqrt;
        for (int i = 0; i < nq; ++i) {
            T* row = p.ptr() + static_cast<int64_t>(i) * nk;
            T mx = row[0];
            for (int j = 1; j < nk; ++j) mx = std::max(mx, row[j]);
            T sum = 0;
            for (int j = 0; j < nk; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            const T inv = T(1) / sum;
            for (int j = 0; j < nk; ++j) row[j] *= inv;
            if (probe) {
                double s = 0;
                for (int j = 0; j < nk; ++j) s += static_cast<double>(row[j]);
                probe->row_sum_min = std::min(probe->row_sum_min, s);
                probe->row_sum_max = std::max(probe->row_sum_max, s);
                probe->rows++;
            }
        }
        O.middleCols(h * dh, dh).noalias() = P * V.middleCols(h * dh, dh);
        probs->push_back(std::move(p));
    }

    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, q, k, v, heads, dh, nq, nk, D, inv_sqrt, probs](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        CMapM<T> dO(dy.ptr(), nq, D);
        CMapM<T> Q2(g.val(q).ptr(), nq, D);
        CMapM<T> K2(g.val(k).ptr(), nk, D);
        CMapM<T> V2(g.val(v).ptr(), nk, D);
        MapM<T> dQ(g.grad_buf(q).ptr(), nq, D);
        MapM<T> dK(g.grad_buf(k).ptr(), nk, D);
        MapM<T> dV(g.grad_buf(v).ptr(), nk, D);
        for (int h = 0; h < heads; ++h) {
            CMapM<T> P((*probs)[static_cast<size_t>(h)].ptr(), nq, nk);
            RowMat<T> dOh = dO.middleCols(h * dh, dh);
            dV.middleCols(h * dh, dh).noalias() += P.transpose() * dOh;
            RowMat<T> dP = dOh * V2.middleCols(h * dh, dh).transpose();
            // softmax backward: dS = P .* (dP - rowsum(dP .* P))
            RowMat<T> dS(nq, nk);
            for (int i = 0; i < nq; ++i) {
                T dot = 0;
                for (int j = 0; j < nk; ++j) dot += dP(i, j) * P(i, j);
                for (int j = 0; j < nk; ++j) dS(i, j) = P(i, j) * (dP(i, j) - dot);
            }
            dQ.middleCols(h * dh, dh).noalias() += dS * K2.middleCols(h * dh, dh) * inv_sqrt;
            dK.middleCols(h * dh, dh).noalias() += dS.transpose() * Q2.middleCols(h * dh, dh) * inv_sqrt;
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

// ---- grid ops ----

template <typename T>
typename GraphT<T>::Id GraphT<T>::conv2d(Id x, Id w, Id b, int stride, int pad) {
    const auto& vx = val(x);
    const auto& vw = val(w);
    require(vx.ndim() == 3 && vw.ndim() == 4, "conv2d: expects [Cin,H,W] and [Cout,Cin,kh,kw]");
    const int Cin = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
    const int Cout = vw.dim(0), kh = vw.dim(2), kw = vw.dim(3);
    require(vw.dim(1) == Cin, "conv2d: channel mismatch");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    TensorT<T> out({Cout, Ho, Wo});
    const auto& vb = b >= 0 ? val(b) : TensorT<T>();
    for (int co = 0; co < Cout; ++co) {
        for (int ho = 0; ho < Ho; ++ho) {
            for (int wo = 0; wo < Wo; ++wo) {
                T acc = b >= 0 ? vb[co] : T(0);
                for (int ci = 0; ci < Cin; ++ci) {
                    for (int i = 0; i < kh; ++i) {
                        const int hi = ho * stride - pad + i;
                        if (hi < 0 || hi >= H) continue;
                        for (int j = 0; j < kw; ++j) {
                            const int wi = wo * stride - pad + j;
                            if (wi < 0 || wi >= W) continue;
                            acc += vx[(static_cast<int64_t>(ci) * H + hi) * W + wi] *
                                   vw[((static_cast<int64_t>(co) * Cin + ci) * kh + i) * kw + j];
                        }
                    }
                }
                out[(static_cast<int64_t>(co) * Ho + ho) * Wo + wo] = acc;
            }
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x, w, b, stride, pad, Cin, H, W, Cout, kh, kw, Ho, Wo](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        const auto& vx2 = g.val(x);
        const auto& vw2 = g.val(w);
        auto& dx = g.grad_buf(x);
        auto& dw = g.grad_buf(w);
        for (int co = 0; co < Cout; ++co) {
            for (int ho = 0; ho < Ho; ++ho) {
                for (int wo = 0; wo < Wo; ++wo) {
                    const T gy = dy[(static_cast<int64_t>(co) * Ho + ho) * Wo + wo];
                    if (gy == T(0)) continue;
                    for (int ci = 0; ci < Cin; ++ci) {
                        for (int i = 0; i < kh; ++i) {
                            const int hi = ho * stride - pad + i;
                            if (hi < 0 || hi >= H) continue;
                            for (int j = 0; j < kw; ++j) {
                                const int wi = wo * stride - pad + j;
                                if (wi < 0 || wi >= W) continue;
                                const int64_t xi = (static_cast<int64_t>(ci) * H + hi) * W + wi;
                                const int64_t wi2 = ((static_cast<int64_t>(co) * Cin + ci) * kh + i) * kw + j;
                                dx[xi] += gy * vw2[wi2];
                                dw[wi2] += gy * vx2[xi];
                            }
                        }
                    }
                }
            }
        }
        if (b >= 0) {
            auto& db = g.grad_buf(b);
            for (int co = 0; co < Cout; ++co) {
                T s = 0;
                for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) {
                    s += dy[static_cast<int64_t>(co) * Ho * Wo + i];
                }
                db[co] += s;
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::conv3d(Id x, Id w, Id b, int sf, int sh, int sw, int pad) {
    const auto& vx = val(x);
    const auto& vw = val(w);
    require(vx.ndim() == 4 && vw.ndim() == 5, "conv3d: expects [Cin,F,H,W] and [Cout,Cin,kf,kh,kw]");
    const int Cin = vx.dim(0), F = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    const int Cout = vw.dim(0), kf = vw.dim(2), kh = vw.dim(3), kw = vw.dim(4);
    require(vw.dim(1) == Cin, "conv3d: channel mismatch");
    const int Fo = (F + 2 * pad - kf) / sf + 1;
    const int Ho = (H + 2 * pad - kh) / sh + 1;
    const int Wo = (W + 2 * pad - kw) / sw + 1;
    TensorT<T> out({Cout, Fo, Ho, Wo});
    const auto& vb = b >= 0 ? val(b) : TensorT<T>();
    for (int co = 0; co < Cout; ++co) {
        for (int fo = 0; fo < Fo; ++fo) {
            for (int ho = 0; ho < Ho; ++ho) {
                for (int wo = 0; wo < Wo; ++wo) {
                    T acc = b >= 0 ? vb[co] : T(0);
                    for (int ci = 0; ci < Cin; ++ci) {
                        for (int a = 0; a < kf; ++a) {
                            const int fi = fo * sf - pad + a;
                            if (fi < 0 || fi >= F) continue;
                            for (int i = 0; i < kh; ++i) {
                                const int hi = ho * sh - pad + i;
                                if (hi < 0 || hi >= H) continue;
                                for (int j = 0; j < kw; ++j) {
                                    const int wi = wo * sw - pad + j;
                                    if (wi < 0 || wi >= W) continue;
                                    acc += vx[((static_cast<int64_t>(ci) * F + fi) * H + hi) * W + wi] *
                                           vw[(((static_cast<int64_t>(co) * Cin + ci) * kf + a) * kh + i) * kw + j];
                                }
                            }
                        }
                    }
                    out[((static_cast<int64_t>(co) * Fo + fo) * Ho + ho) * Wo + wo] = acc;
                }
            }
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x, w, b, sf, sh, sw, pad, Cin, F, H, W, Cout, kf, kh, kw, Fo, Ho,
                                              Wo](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        const auto& vx2 = g.val(x);
        const auto& vw2 = g.val(w);
        auto& dx = g.grad_buf(x);
        auto& dw = g.grad_buf(w);
        for (int co = 0; co < Cout; ++co) {
            for (int fo = 0; fo < Fo; ++fo) {
                for (int ho = 0; ho < Ho; ++ho) {
                    for (int wo = 0; wo < Wo; ++wo) {
                        const T gy = dy[((static_cast<int64_t>(co) * Fo + fo) * Ho + ho) * Wo + wo];
                        if (gy == T(0)) continue;
                        for (int ci = 0; ci < Cin; ++ci) {
                            for (int a = 0; a < kf; ++a) {
                                const int fi = fo * sf - pad + a;
                                if (fi < 0 || fi >= F) continue;
                                for (int i = 0; i < kh; ++i) {
                                    const int hi = ho * sh - pad + i;
                                    if (hi < 0 || hi >= H) continue;
                                    for (int j = 0; j < kw; ++j) {
                                        const int wi = wo * sw - pad + j;
                                        if (wi < 0 || wi >= W) continue;
                                        const int64_t xi = ((static_cast<int64_t>(ci) * F + fi) * H + hi) * W + wi;
                                        const int64_t wi2 =
                                            (((static_cast<int64_t>(co) * Cin + ci) * kf + a) * kh + i) * kw + j;
                                        dx[xi] += gy * vw2[wi2];
                                        dw[wi2] += gy * vx2[xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if (b >= 0) {
            auto& db = g.grad_buf(b);
            const int64_t plane = static_cast<int64_t>(Fo) * Ho * Wo;
            for (int co = 0; co < Cout; ++co) {
                T s = 0;
                for (int64_t i = 0; i < plane; ++i) {
                    s += dy[co * plane + i];
                }
                db[co] += s;
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::patchify(Id grid, int pt, int ph, int pw) {
    const auto& vg = val(grid);
    require(vg.ndim() == 4, "patchify: expects [C,F,H,W]");
    const int C = vg.dim(0), F = vg.dim(1), H = vg.dim(2), W = vg.dim(3);
    require(F % pt == 0 && H % ph == 0 && W % pw == 0, "patchify: patch must divide dims");
    const int Ft = F / pt, Ht = H / ph, Wt = W / pw;
    const int nt = Ft * Ht * Wt;
    const int dim = C * pt * ph * pw;
    TensorT<T> out({nt, dim});
    for (int ft = 0; ft < Ft; ++ft) {
        for (int ht = 0; ht < Ht; ++ht) {
            for (int wt = 0; wt < Wt; ++wt) {
                const int64_t row = (static_cast<int64_t>(ft) * Ht + ht) * Wt + wt;
                for (int c = 0; c < C; ++c) {
                    for (int dt = 0; dt < pt; ++dt) {
                        for (int dy2 = 0; dy2 < ph; ++dy2) {
                            for (int dx2 = 0; dx2 < pw; ++dx2) {
                                const int64_t fidx = ((static_cast<int64_t>(c) * pt + dt) * ph + dy2) * pw + dx2;
                                const int64_t gidx =
                                    ((static_cast<int64_t>(c) * F + (ft * pt + dt)) * H + (ht * ph + dy2)) * W +
                                    (wt * pw + dx2);
                                out[row * dim + fidx] = vg[gidx];
                            }
                        }
                    }
                }
            }
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, grid, pt, ph, pw, C, F, H, W](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        auto& dg = g.grad_buf(grid);
        const int Ft = F / pt, Ht = H / ph, Wt = W / pw;
        const int dim = C * pt * ph * pw;
        for (int ft = 0; ft < Ft; ++ft) {
            for (int ht = 0; ht < Ht; ++ht) {
                for (int wt = 0; wt < Wt; ++wt) {
                    const int64_t row = (static_cast<int64_t>(ft) * Ht + ht) * Wt + wt;
                    for (int c = 0; c < C; ++c) {
                        for (int dt = 0; dt < pt; ++dt) {
                            for (int dy2 = 0; dy2 < ph; ++dy2) {
                                for (int dx2 = 0; dx2 < pw; ++dx2) {
                                    const int64_t fidx = ((static_cast<int64_t>(c) * pt + dt) * ph + dy2) * pw + dx2;
                                    const int64_t gidx =
                                        ((static_cast<int64_t>(c) * F + (ft * pt + dt)) * H + (ht * ph + dy2)) * W +
                                        (wt * pw + dx2);
                                    dg[gidx] += dy[row * dim + fidx];
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::unpatchify(Id tokens, int C, int F, int H, int W, int pt, int ph, int pw) {
    const auto& vt = val(tokens);
    const int Ft = F / pt, Ht = H / ph, Wt = W / pw;
    const int nt = Ft * Ht * Wt;
    const int dim = C * pt * ph * pw;
    require(vt.ndim() == 2 && vt.dim(0) == nt && vt.dim(1) == dim, "unpatchify: token shape mismatch");
    TensorT<T> out({C, F, H, W});
    for (int ft = 0; ft < Ft; ++ft) {
        for (int ht = 0; ht < Ht; ++ht) {
            for (int wt = 0; wt < Wt; ++wt) {
                const int64_t row = (static_cast<int64_t>(ft) * Ht + ht) * Wt + wt;
                for (int c = 0; c < C; ++c) {
                    for (int dt = 0; dt < pt; ++dt) {
                        for (int dy2 = 0; dy2 < ph; ++dy2) {
                            for (int dx2 = 0; dx2 < pw; ++dx2) {
                                const int64_t fidx = ((static_cast<int64_t>(c) * pt + dt) * ph + dy2) * pw + dx2;
                                const int64_t gidx =
                                    ((static_cast<int64_t>(c) * F + (ft * pt + dt)) * H + (ht * ph + dy2)) * W +
                                    (wt * pw + dx2);
                                out[gidx] = vt[row * dim + fidx];
                            }
                        }
                    }
                }
            }
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, tokens, C, F, H, W, pt, ph, pw](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        auto& dt2 = g.grad_buf(tokens);
        const int Ft = F / pt, Ht = H / ph, Wt = W / pw;
        const int dim = C * pt * ph * pw;
        for (int ft = 0; ft < Ft; ++ft) {
            for (int ht = 0; ht < Ht; ++ht) {
                for (int wt = 0; wt < Wt; ++wt) {
                    const int64_t row = (static_cast<int64_t>(ft) * Ht + ht) * Wt + wt;
                    for (int c = 0; c < C; ++c) {
                        for (int dtk = 0; dtk < pt; ++dtk) {
                            for (int dy2 = 0; dy2 < ph; ++dy2) {
                                for (int dx2 = 0; dx2 < pw; ++dx2) {
                                    const int64_t fidx = ((static_cast<int64_t>(c) * pt + dtk) * ph + dy2) * pw + dx2;
                                    const int64_t gidx =
                                        ((static_cast<int64_t>(c) * F + (ft * pt + dtk)) * H + (ht * ph + dy2)) * W +
                                        (wt * pw + dx2);
                                    dt2[row * dim + fidx] += dy[gidx];
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::broadcast_add_frames(Id grid, Id plane) {
    const auto& vg = val(grid);
    const auto& vp = val(plane);
    require(vg.ndim() == 4 && vp.ndim() == 3, "broadcast_add_frames: shape mismatch");
    const int C = vg.dim(0), F = vg.dim(1), H = vg.dim(2), W = vg.dim(3);
    require(vp.dim(0) == C && vp.dim(1) == H && vp.dim(2) == W, "broadcast_add_frames: plane mismatch");
    TensorT<T> out = vg.clone();
    const int64_t hw = static_cast<int64_t>(H) * W;
    for (int c = 0; c < C; ++c) {
        for (int f = 0; f < F; ++f) {
            T* dst = out.ptr() + (static_cast<int64_t>(c) * F + f) * hw;
            const T* src = vp.ptr() + c * hw;
            for (int64_t i = 0; i < hw; ++i) {
                dst[i] += src[i];
            }
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, grid, plane, C, F, H, W](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        g.accum(grid, dy);
        auto& dp = g.grad_buf(plane);
        const int64_t hw = static_cast<int64_t>(H) * W;
        for (int c = 0; c < C; ++c) {
            for (int f = 0; f < F; ++f) {
                const T* src = dy.ptr() + (static_cast<int64_t>(c) * F + f) * hw;
                T* dst = dp.ptr() + c * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    dst[i] += src[i];
                }
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::translate_grid(Id grid, int dh, int dw) {
    const auto& vg = val(grid);
    require(vg.ndim() == 4, "translate_grid: expects [C,F,H,W]");
    const int C = vg.dim(0), F = vg.dim(1), H = vg.dim(2), W = vg.dim(3);
    TensorT<T> out({C, F, H, W});
    for (int c = 0; c < C; ++c) {
        for (int f = 0; f < F; ++f) {
            for (int h = 0; h < H; ++h) {
                const int hs = h - dh;
                if (hs < 0 || hs >= H) continue;
                for (int w = 0; w < W; ++w) {
                    const int ws = w - dw;
                    if (ws < 0 || ws >= W) continue;
                    out[((static_cast<int64_t>(c) * F + f) * H + h) * W + w] =
                        vg[((static_cast<int64_t>(c) * F + f) * H + hs) * W + ws];
                }
            }
        }
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, grid, dh, dw, C, F, H, W](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        auto& dg = g.grad_buf(grid);
        for (int c = 0; c < C; ++c) {
            for (int f = 0; f < F; ++f) {
                for (int h = 0; h < H; ++h) {
                    const int hs = h - dh;
                    if (hs < 0 || hs >= H) continue;
                    for (int w = 0; w < W; ++w) {
                        const int ws = w - dw;
                        if (ws < 0 || ws >= W) continue;
                        dg[((static_cast<int64_t>(c) * F + f) * H + hs) * W + ws] +=
                            dy[((static_cast<int64_t>(c) * F + f) * H + h) * W + w];
                    }
                }
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::region_duplicate_add(Id grid, int h0, int h1, int w0, int w1,
                                                       const std::vector<std::pair<int, int>>& offsets) {
    const auto& vg = val(grid);
    require(vg.ndim() == 4, "region_duplicate_add: expects [C,F,H,W]");
    const int C = vg.dim(0), F = vg.dim(1), H = vg.dim(2), W = vg.dim(3);
    require(0 <= h0 && h0 <= h1 && h1 < H && 0 <= w0 && w0 <= w1 && w1 < W, "region_duplicate_add: bad box");
    TensorT<T> out = vg.clone();
    for (const auto& [dh, dw] : offsets) {
        for (int c = 0; c < C; ++c) {
            for (int f = 0; f < F; ++f) {
                for (int h = h0; h <= h1; ++h) {
                    const int th = h + dh;
                    if (th < 0 || th >= H) continue;
                    for (int w = w0; w <= w1; ++w) {
                        const int tw = w + dw;
                        if (tw < 0 || tw >= W) continue;
                        out[((static_cast<int64_t>(c) * F + f) * H + th) * W + tw] +=
                            vg[((static_cast<int64_t>(c) * F + f) * H + h) * W + w];
                    }
                }
            }
        }
    }
    const Id self = push(std::move(out), nullptr);
    auto offs = offsets;
    nodes_[static_cast<size_t>(self)].back = [self, grid, h0, h1, w0, w1, offs, C, F, H, W](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        g.accum(grid, dy);
        auto& dg = g.grad_buf(grid);
        for (const auto& [dh, dw] : offs) {
            for (int c = 0; c < C; ++c) {
                for (int f = 0; f < F; ++f) {
                    for (int h = h0; h <= h1; ++h) {
                        const int th = h + dh;
                        if (th < 0 || th >= H) continue;
                        for (int w = w0; w <= w1; ++w) {
                            const int tw = w + dw;
                            if (tw < 0 || tw >= W) continue;
                            dg[((static_cast<int64_t>(c) * F + f) * H + h) * W + w] +=
                                dy[((static_cast<int64_t>(c) * F + f) * H + th) * W + tw];
                        }
                    }
                }
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::embed_rows(Id table, std::vector<int> ids) {
    const auto& vt = val(table);
    require(vt.ndim() == 2, "embed_rows: table must be [V,d]");
    const int V = vt.dim(0), d = vt.dim(1);
    const int L = static_cast<int>(ids.size());
    for (int id : ids) {
        require(0 <= id && id < V, "embed_rows: id out of vocabulary");
    }
    TensorT<T> out({L, d});
    for (int i = 0; i < L; ++i) {
        std::copy(vt.ptr() + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d,
                  vt.ptr() + static_cast<int64_t>(ids[static_cast<size_t>(i)] + 1) * d,
                  out.ptr() + static_cast<int64_t>(i) * d);
    }
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, table, ids, d](GraphT& g) {
        const auto& dy = g.grads_[static_cast<size_t>(self)];
        auto& dt = g.grad_buf(table);
        for (size_t i = 0; i < ids.size(); ++i) {
            const T* src = dy.ptr() + static_cast<int64_t>(i) * d;
            T* dst = dt.ptr() + static_cast<int64_t>(ids[i]) * d;
            for (int j = 0; j < d; ++j) {
                dst[j] += src[j];
            }
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::reshape(Id x, std::vector<int> s) {
    TensorT<T> out = val(x).reshaped(s);
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, x](GraphT& g) {
        g.accum(x, g.grads_[static_cast<size_t>(self)].reshaped(g.val(x).shape));
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

template <typename T>
typename GraphT<T>::Id GraphT<T>::mse_loss(Id pred, TensorT<T> target) {
    const auto& vp = val(pred);
    require(vp.numel() == target.numel(), "mse_loss: size mismatch");
    const int64_t n = vp.numel();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(vp[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    TensorT<T> out({1});
    out[0] = static_cast<T>(acc / static_cast<double>(n));
    const Id self = push(std::move(out), nullptr);
    nodes_[static_cast<size_t>(self)].back = [self, pred, target, n](GraphT& g) {
        const T gy = g.grads_[static_cast<size_t>(self)][0];
        const auto& vp2 = g.val(pred);
        auto& dp = g.grad_buf(pred);
        const T c = gy * T(2) / static_cast<T>(n);
        for (int64_t i = 0; i < n; ++i) {
            dp[i] += c * (vp2[i] - target[i]);
        }
    };
    if (!recording_) nodes_[static_cast<size_t>(self)].back = nullptr;
    return self;
}

// explicit instantiations
template struct TensorT<float>;
template struct TensorT<double>;
template struct ParamStoreT<float>;
template struct ParamStoreT<double>;
template class GraphT<float>;
template class GraphT<double>;

template void fill_normal<float>(TensorT<float>&, Rng&, double, double);
template void fill_normal<double>(TensorT<double>&, Rng&, double, double);
template void fill_uniform<float>(TensorT<float>&, Rng&, double, double);
template void fill_uniform<double>(TensorT<double>&, Rng&, double, double);
template void axpy<float>(TensorT<float>&, float, const TensorT<float>&);
template void axpy<double>(TensorT<double>&, double, const TensorT<double>&);

}  // namespace troupe
