#pragma once

// Architecture modules: toy visual/audio encoders, SNRP (channel + spatial
// feature selectors), DAMF (STC projections, CAR recalibration, bidirectional
// cross-attention, residual multiplication), the four-stage fusion decoder,
// and the mask head. Everything is templated on the scalar type so tests can
// run a 64-bit shadow of any submodule.

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sdavs/ops.h"
#include "sdavs/optim.h"
#include "sdavs/rng.h"
#include "sdavs/tensor.h"

namespace sdavs {

// ---------- parameter registry ----------

enum class Init { fan_in_uniform, zeros, ones };

template <typename S>
class ParamStore {
  public:
    explicit ParamStore(uint64_t seed) : seed_(seed) {}

    Tensor<S> make(const std::string& name, Shape shape, Init init, int64_t fan_in = 1) {
        if (index_.count(name)) throw std::runtime_error("duplicate parameter name: " + name);
        Tensor<S> t = Tensor<S>::zeros(shape, /*requires_grad=*/true);
        switch (init) {
            case Init::fan_in_uniform: {
                Rng rng(param_seed(seed_, name));
                init_fan_in(t, fan_in, rng);
                break;
            }
            case Init::zeros:
                break;
            case Init::ones:
                for (S& v : t.val()) v = S(1);
                break;
        }
        index_[name] = params_.size();
        params_.push_back({name, t});
        return t;
    }

    const std::vector<std::pair<std::string, Tensor<S>>>& entries() const { return params_; }

    std::vector<Tensor<S>> tensors() const {
        std::vector<Tensor<S>> out;
        out.reserve(params_.size());
        for (const auto& [_, t] : params_) out.push_back(t);
        return out;
    }

    Tensor<S>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second].second;
    }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& [_, t] : params_) n += t.size();
        return n;
    }

  private:
    uint64_t seed_;
    std::vector<std::pair<std::string, Tensor<S>>> params_;
    std::map<std::string, size_t> index_;
};

// ---------- layers ----------

template <typename S>
struct Conv2dLayer {
    Tensor<S> w, b;
    int stride = 1;

    Conv2dLayer() = default;
    Conv2dLayer(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t out, int64_t k,
                int stride_ = 1)
        : stride(stride_) {
        w = ps.make(name + ".w", {out, in, k, k}, Init::fan_in_uniform, in * k * k);
        b = ps.make(name + ".b", {out}, Init::zeros);
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return conv2d(x, w, b, stride); }
};

// Dense 3-D conv used by the spatial selector (collapses channels to 1).
template <typename S>
struct Conv3dLayer {
    Tensor<S> w, b;

    Conv3dLayer() = default;
    Conv3dLayer(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t out, int64_t kt,
                int64_t k) {
        w = ps.make(name + ".w", {out, in, kt, k, k}, Init::fan_in_uniform, in * kt * k * k);
        b = ps.make(name + ".b", {out}, Init::zeros);
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return conv3d(x, w, b, /*depthwise=*/false); }
};

template <typename S>
struct DwConv3dLayer {
    Tensor<S> w, b;

    DwConv3dLayer() = default;
    DwConv3dLayer(ParamStore<S>& ps, const std::string& name, int64_t c, int64_t kt, int64_t k) {
        w = ps.make(name + ".w", {c, kt, k, k}, Init::fan_in_uniform, kt * k * k);
        b = ps.make(name + ".b", {c}, Init::zeros);
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return conv3d(x, w, b, /*depthwise=*/true); }
};

template <typename S>
struct LinearLayer {
    Tensor<S> w, b;  // w: (in, out)

    LinearLayer() = default;
    LinearLayer(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t out,
                bool bias = true) {
        w = ps.make(name + ".w", {in, out}, Init::fan_in_uniform, in);
        if (bias) b = ps.make(name + ".b", {out}, Init::zeros);
    }
    Tensor<S> operator()(const Tensor<S>& x) const { return linear(x, w, b); }
};

// Two-layer perceptron with ReLU between (reduction MLP used by CFS).
template <typename S>
struct Mlp {
    LinearLayer<S> l1, l2;

    Mlp() = default;
    Mlp(ParamStore<S>& ps, const std::string& name, int64_t in, int64_t hidden, int64_t out,
        bool bias = true)
        : l1(ps, name + ".l1", in, hidden, bias), l2(ps, name + ".l2", hidden, out, bias) {}
    Tensor<S> operator()(const Tensor<S>& x) const { return l2(relu(l1(x))); }
};

template <typename S>
struct LayerNormChannel {
    Tensor<S> gamma, beta;

    LayerNormChannel() = default;
    LayerNormChannel(ParamStore<S>& ps, const std::string& name, int64_t c) {
        gamma = ps.make(name + ".gamma", {c}, Init::ones);
        beta = ps.make(name + ".beta", {c}, Init::zeros);
    }
    Tensor<S> operator()(const Tensor<S>& x) const {
        return layer_norm(x, gamma, beta, S(1e-5), /*axis=*/1);
    }
};

// ---------- toy encoders ----------

// Per-frame conv pyramid. A stride-2 stem puts the four levels at
// (H,W)/4, /8, /16, /32 with the configured channel ladder.
template <typename S>
struct VisualEncoder {
    Conv2dLayer<S> stem;
    std::array<Conv2dLayer<S>, 4> down, refine;

    VisualEncoder() = default;
    VisualEncoder(ParamStore<S>& ps, const std::string& name, const std::array<int64_t, 4>& ladder,
                  int64_t stem_c = 8) {
        stem = Conv2dLayer<S>(ps, name + ".stem", 3, stem_c, 3, 2);
        int64_t in = stem_c;
        for (int i = 0; i < 4; ++i) {
            down[size_t(i)] = Conv2dLayer<S>(ps, name + ".s" + std::to_string(i) + ".down", in,
                                             ladder[size_t(i)], 3, 2);
            refine[size_t(i)] = Conv2dLayer<S>(ps, name + ".s" + std::to_string(i) + ".refine",
                                               ladder[size_t(i)], ladder[size_t(i)], 3, 1);
            in = ladder[size_t(i)];
        }
    }

    // frames: B×3×T×H×W (H, W divisible by 32) -> 4 levels, coarsest last
    std::vector<Tensor<S>> operator()(const Tensor<S>& frames) const {
        const int64_t H = frames.shape()[3], W = frames.shape()[4];
        if (H % 32 != 0 || W % 32 != 0)
            throw std::runtime_error("visual_encode: H and W must be divisible by 32, got " +
                                     shape_str(frames.shape()));
        std::vector<Tensor<S>> levels;
        Tensor<S> x = relu(stem(frames));
        for (int i = 0; i < 4; ++i) {
            x = refine[size_t(i)](relu(down[size_t(i)](x)));
            levels.push_back(x);
        }
        return levels;
    }
};

// Three stride-2 convs over the (frame, mel) grid: (96,64) -> (12,8).
template <typename S>
struct AudioEncoder {
    Conv2dLayer<S> c1, c2, c3;

    AudioEncoder() = default;
    AudioEncoder(ParamStore<S>& ps, const std::string& name, int64_t ca) {
        c1 = Conv2dLayer<S>(ps, name + ".c1", 1, 16, 3, 2);
        c2 = Conv2dLayer<S>(ps, name + ".c2", 16, 32, 3, 2);
        c3 = Conv2dLayer<S>(ps, name + ".c3", 32, ca, 3, 2);
    }

    // spectrograms: B×T×96×64 -> B×Ca×T×12×8
    Tensor<S> operator()(const Tensor<S>& spec) const {
        if (spec.rank() != 4 || spec.shape()[2] != 96 || spec.shape()[3] != 64)
            throw std::runtime_error("audio_encode: expected B×T×96×64, got " +
                                     shape_str(spec.shape()));
        const int64_t B = spec.shape()[0], T = spec.shape()[1];
        Tensor<S> x = reshape(spec, {B * T, 1, 96, 64});
        x = c3(relu(c2(relu(c1(x)))));
        const int64_t ca = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
        x = reshape(x, {B, T, ca, h, w});
        return permute(x, {0, 2, 1, 3, 4});  // B×Ca×T×h×w
    }
};

// ---------- SNRP ----------

template <typename S>
struct SnrpOutput {
    Tensor<S> f_a;     // projected audio, video shape
    Tensor<S> f_v;     // gated video
    Tensor<S> gate_c;  // B×C×T×1×1 (undefined when CFS disabled)
    Tensor<S> gate_s;  // B×1×T×H×W (undefined when SFS disabled)
};

template <typename S>
struct Snrp {
    Conv2dLayer<S> proj;   // 1×1, audio channels -> stage channels
    Mlp<S> cfs_mlp;        // C -> C/4 -> C
    Conv3dLayer<S> sfs;    // (1,3,3), C -> 1
    bool use_cfs = true, use_sfs = true;

    Snrp() = default;
    Snrp(ParamStore<S>& ps, const std::string& name, int64_t ca, int64_t cv, bool cfs, bool sfs_)
        : use_cfs(cfs), use_sfs(sfs_) {
        proj = Conv2dLayer<S>(ps, name + ".proj", ca, cv, 1, 1);
        cfs_mlp = Mlp<S>(ps, name + ".cfs", cv, std::max<int64_t>(cv / 4, 1), cv);
        sfs = Conv3dLayer<S>(ps, name + ".sfs", cv, 1, 1, 3);
    }

    // Audio features upsampled to the video grid, then 1×1-convolved to the
    // stage's channel count.
    Tensor<S> project_audio(const Tensor<S>& f_a, int64_t out_h, int64_t out_w) const {
        return proj(upsample_bilinear(f_a, out_h, out_w));
    }

    // gate_c = sigmoid(MLP(GAP_hw(F'_a))), broadcast over H,W.
    std::pair<Tensor<S>, Tensor<S>> channel_selector(const Tensor<S>& f_a_proj,
                                                     const Tensor<S>& f_v) const {
        const int64_t B = f_a_proj.shape()[0], C = f_a_proj.shape()[1], T = f_a_proj.shape()[2];
        Tensor<S> pool = global_avg_pool(f_a_proj);            // B×C×T×1×1
        Tensor<S> rows = reshape(permute(reshape(pool, {B, C, T}), {0, 2, 1}), {B * T, C});
        Tensor<S> gate = sigmoid(cfs_mlp(rows));               // (B·T)×C
        gate = reshape(permute(reshape(gate, {B, T, C}), {0, 2, 1}), {B, C, T, 1, 1});
        return {gate, mul(f_v, gate)};
    }

    // gate_s = sigmoid(conv(F'_a)) with one output channel, broadcast over C.
    std::pair<Tensor<S>, Tensor<S>> spatial_selector(const Tensor<S>& f_a_proj,
                                                     const Tensor<S>& f_v) const {
        Tensor<S> gate = sigmoid(sfs(f_a_proj));  // B×1×T×H×W
        return {gate, mul(f_v, gate)};
    }

    SnrpOutput<S> operator()(const Tensor<S>& f_a, const Tensor<S>& f_v) const {
        if (f_a.shape()[0] != f_v.shape()[0] || f_a.shape()[2] != f_v.shape()[2])
            throw std::runtime_error("snrp: audio/video B or T mismatch: " + shape_str(f_a.shape()) +
                                     " vs " + shape_str(f_v.shape()));
        SnrpOutput<S> out;
        out.f_a = project_audio(f_a, f_v.shape()[3], f_v.shape()[4]);
        Tensor<S> v = f_v;
        if (use_cfs) {
            auto [gc, gated] = channel_selector(out.f_a, v);
            out.gate_c = gc;
            v = gated;
        }
        if (use_sfs) {
            auto [gs, gated] = spatial_selector(out.f_a, v);
            out.gate_s = gs;
            v = gated;
        }
        out.f_v = v;
        return out;
    }
};

// ---------- DAMF ----------

enum class RmMode { straight, add, mul };
enum class Branch { both, a2v, v2a };
enum class QueryPairing { printed, textual };

// Channel-wise Adaptive Recalibration: X ⊙ σ(W2 ReLU(W1 GAP(X))).
template <typename S>
struct Car {
    LinearLayer<S> w1, w2;  // bias-free

    Car() = default;
    Car(ParamStore<S>& ps, const std::string& name, int64_t c)
        : w1(ps, name + ".w1", c, std::max<int64_t>(c / 4, 1), /*bias=*/false),
          w2(ps, name + ".w2", std::max<int64_t>(c / 4, 1), c, /*bias=*/false) {}

    Tensor<S> operator()(const Tensor<S>& x) const {
        const int64_t B = x.shape()[0], C = x.shape()[1];
        Tensor<S> gap = reshape(mean_trailing(x, 3), {B, C});  // GAP over T,H,W
        Tensor<S> gate = sigmoid(w2(relu(w1(gap))));
        return mul(x, reshape(gate, {B, C, 1, 1, 1}));
    }
};

// Spatial-Temporal-Channel enhancer: depthwise conv3d + CAR + LN(channel).
// Query branch uses a (3,3,3) kernel (temporal mixing); key/value branches
// use (1,3,3) and never mix across T.
template <typename S>
struct Stc {
    DwConv3dLayer<S> dw;
    Car<S> car;
    LayerNormChannel<S> ln;

    Stc() = default;
    Stc(ParamStore<S>& ps, const std::string& name, int64_t c, int64_t kt)
        : dw(ps, name + ".dw", c, kt, 3), car(ps, name + ".car", c), ln(ps, name + ".ln", c) {}

    Tensor<S> operator()(const Tensor<S>& x) const { return ln(car(dw(x))); }
};

// Single-head cross-attention over T·H·W tokens with channels as embedding,
// scale 1/sqrt(C). Rows of the attention matrix sum to 1.
template <typename S>
Tensor<S> cross_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v) {
    if (q.shape()[0] != k.shape()[0] || q.shape()[1] != k.shape()[1] ||
        k.shape() != v.shape())
        throw std::runtime_error("cross_attention: B/C mismatch between q/k/v");
    const int64_t B = q.shape()[0], C = q.shape()[1];
    const int64_t T = q.shape()[2], H = q.shape()[3], W = q.shape()[4];
    auto tok = [&](const Tensor<S>& x) {
        return reshape(permute(x, {0, 2, 3, 4, 1}),
                       {B, x.shape()[2] * x.shape()[3] * x.shape()[4], C});
    };
    Tensor<S> Q = mul_scalar(tok(q), S(1.0 / std::sqrt(double(C))));
    Tensor<S> K = tok(k), V = tok(v);
    Tensor<S> attn = softmax_lastdim(matmul(Q, K, false, true));
    Tensor<S> out = matmul(attn, V);
    return permute(reshape(out, {B, T, H, W, C}), {0, 4, 1, 2, 3});
}

template <typename S>
struct DamfOutput {
    Tensor<S> attn_a2v, attn_v2a;  // raw attention outputs F_{a→v}, F_{v→a}
    Tensor<S> f_a2v, f_v2a;        // post-RM features F'_{a→v}, F'_{v→a}
};

template <typename S>
struct Damf {
    Stc<S> stc_q, stc_k, stc_v;  // shared between both directions
    bool use_stc = true;
    RmMode rm = RmMode::mul;
    Branch branch = Branch::both;
    QueryPairing pairing = QueryPairing::printed;

    Damf() = default;
    Damf(ParamStore<S>& ps, const std::string& name, int64_t c, bool stc_on, RmMode rm_,
         Branch branch_, QueryPairing pairing_)
        : stc_q(ps, name + ".q", c, 3),
          stc_k(ps, name + ".k", c, 1),
          stc_v(ps, name + ".v", c, 1),
          use_stc(stc_on),
          rm(rm_),
          branch(branch_),
          pairing(pairing_) {}

    DamfOutput<S> operator()(const Tensor<S>& f_v, const Tensor<S>& f_a) const {
        if (f_v.shape() != f_a.shape())
            throw std::runtime_error("damf: F'_v and F'_a must share shape, got " +
                                     shape_str(f_v.shape()) + " vs " + shape_str(f_a.shape()));
        Tensor<S> qv = use_stc ? stc_q(f_v) : f_v;
        Tensor<S> qa = use_stc ? stc_q(f_a) : f_a;
        Tensor<S> ka = use_stc ? stc_k(f_a) : f_a;
        Tensor<S> va = use_stc ? stc_v(f_a) : f_a;
        Tensor<S> kv = use_stc ? stc_k(f_v) : f_v;
        Tensor<S> vv = use_stc ? stc_v(f_v) : f_v;

        DamfOutput<S> out;
        // printed pairing follows the formula (video query attends audio
        // keys/values to produce F_{a→v}); textual swaps the query sources.
        if (branch != Branch::v2a) {
            out.attn_a2v = pairing == QueryPairing::printed ? cross_attention(qv, ka, va)
                                                            : cross_attention(qa, kv, vv);
        }
        if (branch != Branch::a2v) {
            out.attn_v2a = pairing == QueryPairing::printed ? cross_attention(qa, kv, vv)
                                                            : cross_attention(qv, ka, va);
        }
        auto apply_rm = [&](const Tensor<S>& attn, const Tensor<S>& resid) -> Tensor<S> {
            if (!attn.defined()) return Tensor<S>::zeros(resid.shape());  // disabled branch
            switch (rm) {
                case RmMode::mul: return mul(attn, resid);
                case RmMode::add: return add(attn, resid);
                case RmMode::straight: return attn;
            }
            return attn;
        };
        out.f_a2v = apply_rm(out.attn_a2v, f_a);
        out.f_v2a = apply_rm(out.attn_v2a, f_v);
        return out;
    }
};

// ---------- full model ----------

enum class SnrpMode { on, off, post };

struct ModelConfig {
    std::array<int64_t, 4> ladder{16, 32, 64, 128};
    int64_t ca = 64;
    int64_t head = 16;
    int64_t stem = 8;
    SnrpMode snrp = SnrpMode::on;
    bool cfs = true, sfs = true;
    bool damf = true, stc = true;
    RmMode rm = RmMode::mul;
    Branch branch = Branch::both;
    QueryPairing pairing = QueryPairing::printed;
};

// Features captured at the finest stage for the consistency statistics.
// "after" holds the attention-exchange outputs (pre-RM): each side of the
// mutual attention is a convex mixture over the other modality's values, so
// this pair is where the alignment the fusion produces is actually visible.
// The post-RM features re-inject modality-specific structure (and under
// RM=mul are near-disjoint products), which buries it. A disabled branch
// falls back to that side's pre-DAMF feature: no exchange, no update.
template <typename S>
struct ConsistencyTaps {
    Tensor<S> audio_before, video_before;  // SNRP outputs feeding DAMF
    Tensor<S> audio_after, video_after;    // attention-exchange outputs
};

template <typename S>
struct Model {
    ModelConfig cfg;
    ParamStore<S> params;
    VisualEncoder<S> venc;
    AudioEncoder<S> aenc;
    Conv2dLayer<S> audio_in;  // 1×1, ca -> coarsest stage channels
    std::array<Snrp<S>, 4> snrps;
    std::array<Damf<S>, 4> damfs;
    std::array<Conv2dLayer<S>, 4> agg;     // stage -> head channels (1×1)
    std::array<Conv2dLayer<S>, 3> tconv;   // fused transition conv (3×3)
    std::array<Conv2dLayer<S>, 3> skipp;   // encoder skip projection (1×1)
    std::array<Conv2dLayer<S>, 3> aproj;   // audio carry projection (1×1)
    Conv2dLayer<S> head_mlp, head_fc;      // 1×1 mask head

    explicit Model(const ModelConfig& c, uint64_t seed) : cfg(c), params(seed) {
        venc = VisualEncoder<S>(params, "venc", cfg.ladder, cfg.stem);
        aenc = AudioEncoder<S>(params, "aenc", cfg.ca);
        // stage j uses the reversed ladder: stage 0 = coarsest encoder level
        auto stage_c = [&](int j) { return cfg.ladder[size_t(3 - j)]; };
        audio_in = Conv2dLayer<S>(params, "audio_in", cfg.ca, stage_c(0), 1, 1);
        for (int j = 0; j < 4; ++j) {
            const std::string sj = "stage" + std::to_string(j);
            snrps[size_t(j)] = Snrp<S>(params, sj + ".snrp", stage_c(j), stage_c(j), cfg.cfs, cfg.sfs);
            damfs[size_t(j)] =
                Damf<S>(params, sj + ".damf", stage_c(j), cfg.stc, cfg.rm, cfg.branch, cfg.pairing);
            agg[size_t(j)] = Conv2dLayer<S>(params, sj + ".agg", stage_c(j), cfg.head, 1, 1);
            if (j < 3) {
                tconv[size_t(j)] = Conv2dLayer<S>(params, sj + ".tconv", stage_c(j), stage_c(j + 1), 3, 1);
                skipp[size_t(j)] = Conv2dLayer<S>(params, sj + ".skip", stage_c(j + 1), stage_c(j + 1), 1, 1);
                aproj[size_t(j)] = Conv2dLayer<S>(params, sj + ".aproj", stage_c(j), stage_c(j + 1), 1, 1);
            }
        }
        head_mlp = Conv2dLayer<S>(params, "head.mlp", cfg.head, cfg.head, 1, 1);
        head_fc = Conv2dLayer<S>(params, "head.fc", cfg.head, 1, 1, 1);
    }

    static Tensor<S> up2x(const Tensor<S>& x) {
        return upsample_bilinear(x, x.shape()[3] * 2, x.shape()[4] * 2);
    }

    // frames B×3×T×H×W, spectrograms B×T×96×64 -> logits B×1×T×H×W
    Tensor<S> operator()(const Tensor<S>& frames, const Tensor<S>& spec,
                         ConsistencyTaps<S>* taps = nullptr) const {
        std::vector<Tensor<S>> levels = venc(frames);  // fine -> coarse
        Tensor<S> fa_raw = aenc(spec);
        const int64_t Hin = frames.shape()[3], Win = frames.shape()[4];

        Tensor<S> fv = levels[3];
        Tensor<S> fa = audio_in(upsample_bilinear(fa_raw, fv.shape()[3], fv.shape()[4]));
        std::vector<Tensor<S>> contribs;  // per-stage F^j_a + fused, projected later
        std::vector<Tensor<S>> contribs_a;
        for (int j = 0; j < 4; ++j) {
            SnrpOutput<S> sn = snrps[size_t(j)](fa, fv);
            Tensor<S> f_a_stage = sn.f_a;
            Tensor<S> f_v_stage = cfg.snrp == SnrpMode::on ? sn.f_v : fv;

            Tensor<S> fused_a2v, fused_v2a;
            if (cfg.damf) {
                DamfOutput<S> dm = damfs[size_t(j)](f_v_stage, f_a_stage);
                fused_a2v = dm.f_a2v;
                fused_v2a = dm.f_v2a;
                if (taps && j == 3) {
                    taps->audio_before = f_a_stage;
                    taps->video_before = f_v_stage;
                    taps->audio_after = dm.attn_v2a.defined() ? dm.attn_v2a : f_a_stage;
                    taps->video_after = dm.attn_a2v.defined() ? dm.attn_a2v : f_v_stage;
                }
            } else {
                fused_a2v = f_a_stage;  // pass-through ("w/o DAMF")
                fused_v2a = f_v_stage;
                if (taps && j == 3) {
                    taps->audio_before = f_a_stage;
                    taps->video_before = f_v_stage;
                    taps->audio_after = f_a_stage;
                    taps->video_after = f_v_stage;
                }
            }
            Tensor<S> fused = add(fused_a2v, fused_v2a);
            if (cfg.snrp == SnrpMode::post) {
                // "After"-placement variant: the same selector weights gate
                // the fused features instead of the pre-fusion video ones.
                if (cfg.cfs) fused = snrps[size_t(j)].channel_selector(f_a_stage, fused).second;
                if (cfg.sfs) fused = snrps[size_t(j)].spatial_selector(f_a_stage, fused).second;
            }
            contribs.push_back(fused);
            contribs_a.push_back(f_a_stage);
            if (j < 3) {
                fv = add(tconv[size_t(j)](up2x(fused)), skipp[size_t(j)](levels[size_t(2 - j)]));
                fa = aproj[size_t(j)](up2x(f_a_stage));
            }
        }

        // output aggregation at the finest decoder resolution
        const int64_t Hf = contribs[3].shape()[3], Wf = contribs[3].shape()[4];
        Tensor<S> fus_out;
        for (int j = 0; j < 4; ++j) {
            Tensor<S> term = agg[size_t(j)](add(contribs_a[size_t(j)], contribs[size_t(j)]));
            term = upsample_bilinear(term, Hf, Wf);
            fus_out = j == 0 ? term : add(fus_out, term);
        }
        Tensor<S> logits = head_fc(relu(head_mlp(fus_out)));
        return upsample_bilinear(logits, Hin, Win);
    }
};

// ---------- training objective ----------

template <typename S>
struct LossParts {
    Tensor<S> total, bce, iou, dice;
};

// BCE + soft-IoU + Dice over the whole batch (global sums, smoothing 1.0).
template <typename S>
LossParts<S> segmentation_loss(const Tensor<S>& logits, const Tensor<S>& target, S eps = S(1)) {
    LossParts<S> parts;
    parts.bce = bce_with_logits(logits, target);
    Tensor<S> p = sigmoid(logits);
    Tensor<S> inter = sum_all(mul(p, target));
    Tensor<S> total = add(sum_all(p), sum_all(target));
    // IoU loss = 1 - (I + eps) / (P + T - I + eps)
    Tensor<S> uni = sub(total, inter);
    parts.iou = add_scalar(
        mul_scalar(div(add_scalar(inter, eps), add_scalar(uni, eps)), S(-1)), S(1));
    // Dice loss = 1 - (2I + eps) / (P + T + eps)
    parts.dice = add_scalar(
        mul_scalar(div(add_scalar(mul_scalar(inter, S(2)), eps), add_scalar(total, eps)), S(-1)),
        S(1));
    parts.total = add(add(parts.bce, parts.iou), parts.dice);
    return parts;
}

}  // namespace sdavs
