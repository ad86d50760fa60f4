#pragma once

#include <cstddef>
#include <vector>

#include "l2c/tensor.hpp"

namespace l2c {

// Per-token distribution statistics; the four uncertainty features are
// (top1, margin, topk_mass, tail_entropy) in that column order.
struct TokenStats {
    double top1 = 0.0;
    double top2 = 0.0;
    double margin = 0.0;
    double topk_mass = 0.0;
    double tail_entropy = 0.0;
    double norm_entropy = 0.0;
    int k_u = 0;
};

// Corpus-level target statistics (mean entropy, mean confidence, 95th
// percentile confidence, 95th percentile entropy).
struct TargetStats {
    double mean_entropy = 0.0;
    double mean_conf = 0.0;
    double p95_conf = 0.0;
    double p95_entropy = 0.0;
};

// Temperature softmax of one row, written to `out` (max-subtracted for
// stability). Argmax is preserved; throws on non-finite input or T <= 0.
void softmax_row(const double* logits, size_t k, double temperature, double* out);

// p_hat = (1-eps) * p + eps/K, elementwise on one simplex row.
void label_smooth_row(const double* probs, size_t k, double epsilon, double* out);

// H_norm = -(1/ln K) * sum p ln p, with 0*ln 0 := 0; clamped into [0, 1].
double normalized_entropy(const double* probs, size_t k);

// K_u = clamp(round(exp(H_nat)), 8, max(8, min(64, K))) — rounded perplexity.
int adaptive_support_size(const double* probs, size_t k);

// All per-token statistics of one simplex row. Argmax ties break to the
// lowest index. Requires K >= 2. For K == 2 the tail has a single entry and
// its entropy is reported in nats (the 1/ln(K-1) normalizer is degenerate).
TokenStats token_stats(const double* probs, size_t k);

// Convenience row-pointer-free wrappers.
ProbGrid softmax_grid(const LogitGrid& logits, double temperature);
TokenStats token_stats_row(const ProbGrid& probs, size_t row);

// Aggregate means and nearest-rank 95th percentiles over every row of every
// grid. Percentile rule: ascending sort, 1-based index ceil(0.95 * n).
TargetStats corpus_stats(const std::vector<ProbGrid>& grids);

// Nearest-rank percentile helper (q in (0, 1]); sorts a copy ascending.
double percentile_nearest_rank(std::vector<double> values, double q);

}  // namespace l2c
