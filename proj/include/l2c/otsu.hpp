#pragma once

#include <cstddef>
#include <vector>

#include "l2c/tensor.hpp"

namespace l2c {

// Class weight w_c in the between-class variance: classic Otsu uses the count
// fraction |class|/K; the mass variant uses the class probability mass.
enum class OtsuWeight { count, mass };

struct OtsuReport {
    double threshold_prob = 0.0;        // p_(r), smallest head probability
    int threshold_rank = 0;             // r, number of head tokens
    double head_mass = 0.0;             // sum of the top r probabilities
    double between_class_variance = 0.0;
};

// Maximize w0*w1*(mu0-mu1)^2 over all descending-sorted splits r in [1, K-1];
// ties go to the smallest r. Requires K >= 2.
OtsuReport otsu_threshold(const double* probs, size_t k, OtsuWeight weight = OtsuWeight::count);

// Per-token reports plus the corpus means reported in the analysis table.
struct OtsuGridReport {
    std::vector<OtsuReport> per_token;
    double mean_threshold_prob = 0.0;
    double mean_threshold_rank = 0.0;
    double mean_head_mass = 0.0;
    double mean_between_class_variance = 0.0;
    // Probability-statistics block.
    double mean_top1 = 0.0;
    double mean_top2 = 0.0;
    double mean_norm_entropy = 0.0;
    double mean_tail_entropy = 0.0;
};

OtsuGridReport otsu_report_grid(const ProbGrid& grid, OtsuWeight weight = OtsuWeight::count);

// Rank-wise mean of the descending-sorted rows across all grids; first top_n
// entries (monotone non-increasing).
std::vector<double> rank_profile(const std::vector<ProbGrid>& grids, int top_n);

}  // namespace l2c
