#pragma once

#include <cstdint>
#include <vector>

namespace sdavs::metrics {

// Binary masks are flat 0/1 byte grids; pred and gt must have equal length.

// Intersection-over-union. Both masks empty -> 1.0.
double jaccard(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt);

// Weighted F-measure, (1+b2)PR / (b2 P + R) with beta^2 = 0.3 by default.
// Both masks empty -> 1.0; P + R = 0 -> 0.0.
double f_measure(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                 double beta_sq = 0.3);

// Mean of jaccard and f_measure.
double j_and_f(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt);

// Linear centered kernel alignment between X (n×dx) and Y (n×dy), rows =
// samples. Columns are centered internally. Result in [0, 1].
double linear_cka(const std::vector<double>& x, int64_t n, int64_t dx,
                  const std::vector<double>& y, int64_t dy);

// KL(P || Q) with Q clamped below by 1e-12; P, Q are probability vectors of
// equal length. KL(P, P) = 0.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Jensen-Shannon divergence (natural log): symmetric, in [0, ln 2].
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

// softmax over a raw feature vector; converts features to a distribution for
// the KL/JS consistency statistics.
std::vector<double> softmax_distribution(const std::vector<float>& raw);

}  // namespace sdavs::metrics
