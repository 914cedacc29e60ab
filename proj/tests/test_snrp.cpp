// SNRP (selector) tests: gate ranges, broadcast structure verified against an
// index-level oracle, the independent hand-computed gate values, neutral gates
// when selector weights are zeroed, and the CFS/SFS disable paths.

#include <cmath>
#include <vector>

#include <doctest.h>

#include "sdavs/model.h"
#include "test_support.h"

using namespace sdavs;
using testsup::make_rand;

namespace {

template <typename S>
S sigmoid_ref(S x) {
    return S(1) / (S(1) + std::exp(-double(x)));
}

}  // namespace

TEST_CASE("snrp gates stay strictly inside (0,1) and shrink the features") {
    NoGradGuard ng;
    ParamStore<float> ps(11);
    Snrp<float> snrp(ps, "snrp", 3, 4, true, true);
    auto fa = make_rand<float>({2, 3, 2, 2, 2}, 301, -2, 2, false);
    auto fv = make_rand<float>({2, 4, 2, 4, 4}, 302, -2, 2, false);
    auto out = snrp(fa, fv);

    REQUIRE(out.f_a.shape() == Shape{2, 4, 2, 4, 4});  // audio on the video grid
    REQUIRE(out.f_v.shape() == fv.shape());
    REQUIRE(out.gate_c.shape() == Shape{2, 4, 2, 1, 1});
    REQUIRE(out.gate_s.shape() == Shape{2, 1, 2, 4, 4});
    for (float g : out.gate_c.val()) {
        CHECK(g > 0.0f);
        CHECK(g < 1.0f);
    }
    for (float g : out.gate_s.val()) {
        CHECK(g > 0.0f);
        CHECK(g < 1.0f);
    }
    // double gating can only damp: |F'_v| <= |F_v| with signs preserved
    for (int64_t i = 0; i < fv.size(); ++i) {
        CHECK(std::abs(out.f_v.data()[i]) <= std::abs(fv.data()[i]));
        CHECK(out.f_v.data()[i] * fv.data()[i] >= 0.0f);
    }
}

TEST_CASE("snrp gating equals the index-level oracle") {
    NoGradGuard ng;
    ParamStore<float> ps(12);
    Snrp<float> snrp(ps, "snrp", 3, 4, true, true);
    const int64_t B = 1, C = 4, T = 2, H = 3, W = 3;
    auto fa = make_rand<float>({1, 3, T, 2, 2}, 311, -1, 1, false);
    auto fv = make_rand<float>({B, C, T, H, W}, 312, -1, 1, false);
    auto out = snrp(fa, fv);

    // F'_v[b,c,t,h,w] = F_v * gate_c[b,c,t] * gate_s[b,t,h,w]
    for (int64_t c = 0; c < C; ++c)
        for (int64_t t = 0; t < T; ++t)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    const size_t i = size_t(((c * T + t) * H + h) * W + w);
                    const float gc = out.gate_c.data()[c * T + t];
                    const float gs = out.gate_s.data()[(t * H + h) * W + w];
                    CHECK(out.f_v.data()[i] ==
                          doctest::Approx(fv.data()[i] * gc * gs).epsilon(1e-5));
                }

    // channel gate recomputed by hand from the MLP weights
    const Tensor<float>* w1 = ps.find("snrp.cfs.l1.w");
    const Tensor<float>* b1 = ps.find("snrp.cfs.l1.b");
    const Tensor<float>* w2 = ps.find("snrp.cfs.l2.w");
    const Tensor<float>* b2 = ps.find("snrp.cfs.l2.b");
    REQUIRE(w1 != nullptr);
    REQUIRE(w2 != nullptr);
    const int64_t hidden = w1->shape()[1];
    for (int64_t t = 0; t < T; ++t) {
        // GAP over H,W of the projected audio, per channel
        std::vector<double> pooled(size_t(C), 0.0);
        for (int64_t c = 0; c < C; ++c) {
            double s = 0;
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w)
                    s += double(out.f_a.data()[((c * T + t) * H + h) * W + w]);
            pooled[size_t(c)] = s / double(H * W);
        }
        std::vector<double> hid(size_t(hidden), 0.0);
        for (int64_t j = 0; j < hidden; ++j) {
            double s = double(b1->data()[j]);
            for (int64_t c = 0; c < C; ++c) s += pooled[size_t(c)] * double(w1->data()[c * hidden + j]);
            hid[size_t(j)] = std::max(0.0, s);
        }
        for (int64_t c = 0; c < C; ++c) {
            double s = double(b2->data()[c]);
            for (int64_t j = 0; j < hidden; ++j) s += hid[size_t(j)] * double(w2->data()[j * C + c]);
            const double want = 1.0 / (1.0 + std::exp(-s));
            CHECK(out.gate_c.data()[c * T + t] == doctest::Approx(want).epsilon(1e-4));
        }
    }
}

TEST_CASE("zeroed selector weights give neutral 0.5 gates") {
    NoGradGuard ng;
    ParamStore<float> ps(13);
    Snrp<float> snrp(ps, "snrp", 3, 4, true, true);
    for (const char* name : {"snrp.cfs.l1.w", "snrp.cfs.l1.b", "snrp.cfs.l2.w", "snrp.cfs.l2.b",
                             "snrp.sfs.w", "snrp.sfs.b"}) {
        Tensor<float>* t = ps.find(name);
        REQUIRE(t != nullptr);
        for (float& v : t->val()) v = 0.0f;
    }
    auto fa = make_rand<float>({1, 3, 1, 2, 2}, 321, -1, 1, false);
    auto fv = make_rand<float>({1, 4, 1, 2, 2}, 322, -1, 1, false);
    auto out = snrp(fa, fv);
    for (float g : out.gate_c.val()) CHECK(g == doctest::Approx(0.5).epsilon(1e-6));
    for (float g : out.gate_s.val()) CHECK(g == doctest::Approx(0.5).epsilon(1e-6));
    // both gates neutral -> output is the input damped by exactly 0.25
    for (int64_t i = 0; i < fv.size(); ++i)
        CHECK(out.f_v.data()[i] == doctest::Approx(fv.data()[i] * 0.25f).epsilon(1e-6));
}

TEST_CASE("cfs/sfs disable paths") {
    NoGradGuard ng;
    auto fa = make_rand<float>({1, 3, 2, 2, 2}, 331, -1, 1, false);
    auto fv = make_rand<float>({1, 4, 2, 2, 2}, 332, -1, 1, false);

    ParamStore<float> ps1(14);
    Snrp<float> only_sfs(ps1, "snrp", 3, 4, /*cfs=*/false, /*sfs=*/true);
    auto o1 = only_sfs(fa, fv);
    CHECK(!o1.gate_c.defined());
    REQUIRE(o1.gate_s.defined());
    for (int64_t i = 0; i < fv.size(); ++i) {
        const int64_t spatial = i % 8, t = (i / 4) % 2;
        (void)t;
        const float gs = o1.gate_s.data()[spatial];
        CHECK(o1.f_v.data()[i] == doctest::Approx(fv.data()[i] * gs).epsilon(1e-5));
    }

    ParamStore<float> ps2(14);
    Snrp<float> only_cfs(ps2, "snrp", 3, 4, /*cfs=*/true, /*sfs=*/false);
    auto o2 = only_cfs(fa, fv);
    CHECK(!o2.gate_s.defined());
    CHECK(o2.gate_c.defined());

    ParamStore<float> ps3(14);
    Snrp<float> neither(ps3, "snrp", 3, 4, /*cfs=*/false, /*sfs=*/false);
    auto o3 = neither(fa, fv);
    // no selector: video features pass through bit-identically
    for (int64_t i = 0; i < fv.size(); ++i) CHECK(o3.f_v.data()[i] == fv.data()[i]);
    // audio is still projected for the downstream fusion
    REQUIRE(o3.f_a.shape() == Shape{1, 4, 2, 2, 2});
}

TEST_CASE("snrp validates B/T agreement") {
    NoGradGuard ng;
    ParamStore<float> ps(15);
    Snrp<float> snrp(ps, "snrp", 3, 4, true, true);
    auto fv = make_rand<float>({1, 4, 2, 2, 2}, 341, -1, 1, false);
    CHECK_THROWS(snrp(make_rand<float>({2, 3, 2, 2, 2}, 342, -1, 1, false), fv));  // B mismatch
    CHECK_THROWS(snrp(make_rand<float>({1, 3, 3, 2, 2}, 343, -1, 1, false), fv));  // T mismatch
}

TEST_CASE("project_audio upsamples then projects channels") {
    NoGradGuard ng;
    ParamStore<float> ps(16);
    Snrp<float> snrp(ps, "snrp", 3, 4, true, true);
    // constant audio field stays constant through bilinear upsampling, so the
    // projected output must be constant per channel too
    auto fa = Tensor<float>::filled({1, 3, 1, 2, 2}, 0.6f);
    auto proj = snrp.project_audio(fa, 5, 7);
    REQUIRE(proj.shape() == Shape{1, 4, 1, 5, 7});
    for (int64_t c = 0; c < 4; ++c) {
        const float first = proj.data()[c * 35];
        for (int64_t i = 0; i < 35; ++i)
            CHECK(proj.data()[c * 35 + i] == doctest::Approx(first).epsilon(1e-6));
    }
}
