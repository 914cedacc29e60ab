#include "sdavs/metrics.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sdavs::metrics {

namespace {

struct Counts {
    int64_t tp = 0, fp = 0, fn = 0;
};

Counts count(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt) {
    if (pred.size() != gt.size()) throw std::runtime_error("mask metrics: size mismatch");
    Counts c;
    for (size_t i = 0; i < pred.size(); ++i) {
        const uint8_t p = pred[i], g = gt[i];
        if (p > 1 || g > 1) throw std::runtime_error("mask metrics: entries must be 0/1");
        c.tp += (p & g);
        c.fp += (p & ~g & 1);
        c.fn += (~p & g & 1);
    }
    return c;
}

}  // namespace

double jaccard(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt) {
    const Counts c = count(pred, gt);
    const int64_t uni = c.tp + c.fp + c.fn;
    if (uni == 0) return 1.0;
    return double(c.tp) / double(uni);
}

double f_measure(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt, double beta_sq) {
    const Counts c = count(pred, gt);
    if (c.tp + c.fp + c.fn == 0) return 1.0;  // both masks empty
    const double p = c.tp + c.fp > 0 ? double(c.tp) / double(c.tp + c.fp) : 0.0;
    const double r = c.tp + c.fn > 0 ? double(c.tp) / double(c.tp + c.fn) : 0.0;
    if (p + r == 0.0) return 0.0;
    return (1.0 + beta_sq) * p * r / (beta_sq * p + r);
}

double j_and_f(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt) {
    return 0.5 * (jaccard(pred, gt) + f_measure(pred, gt));
}

double linear_cka(const std::vector<double>& x, int64_t n, int64_t dx, const std::vector<double>& y,
                  int64_t dy) {
    if (n < 2) throw std::runtime_error("linear_cka: need at least 2 samples");
    if (int64_t(x.size()) != n * dx || int64_t(y.size()) != n * dy)
        throw std::runtime_error("linear_cka: data size does not match n×d");
    std::vector<double> xc(x), yc(y);
    for (int64_t j = 0; j < dx; ++j) {
        double m = 0.0;
        for (int64_t i = 0; i < n; ++i) m += xc[size_t(i * dx + j)];
        m /= double(n);
        for (int64_t i = 0; i < n; ++i) xc[size_t(i * dx + j)] -= m;
    }
    for (int64_t j = 0; j < dy; ++j) {
        double m = 0.0;
        for (int64_t i = 0; i < n; ++i) m += yc[size_t(i * dy + j)];
        m /= double(n);
        for (int64_t i = 0; i < n; ++i) yc[size_t(i * dy + j)] -= m;
    }
    auto cross_fro2 = [n](const std::vector<double>& a, int64_t da, const std::vector<double>& b,
                          int64_t db) {
        // ||A^T B||_F^2 with A (n×da), B (n×db)
        double total = 0.0;
        for (int64_t i = 0; i < da; ++i) {
            for (int64_t j = 0; j < db; ++j) {
                double s = 0.0;
                for (int64_t r = 0; r < n; ++r) s += a[size_t(r * da + i)] * b[size_t(r * db + j)];
                total += s * s;
            }
        }
        return total;
    };
    const double num = cross_fro2(xc, dx, yc, dy);
    const double den = std::sqrt(cross_fro2(xc, dx, xc, dx)) * std::sqrt(cross_fro2(yc, dy, yc, dy));
    if (den == 0.0) return 0.0;
    return num / den;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::runtime_error("kl_divergence: size mismatch");
    double kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        kl += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
    }
    return std::max(kl, 0.0);
}

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::runtime_error("js_divergence: size mismatch");
    std::vector<double> m(p.size());
    for (size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
}

std::vector<double> softmax_distribution(const std::vector<float>& raw) {
    std::vector<double> out(raw.size());
    if (raw.empty()) return out;
    double mx = double(raw[0]);
    for (float v : raw) mx = std::max(mx, double(v));
    double sum = 0.0;
    for (size_t i = 0; i < raw.size(); ++i) {
        out[i] = std::exp(double(raw[i]) - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace sdavs::metrics
