#include "l2c/otsu.hpp"

#include <algorithm>
#include <functional>

#include "l2c/distribution.hpp"
#include "l2c/parallel.hpp"

namespace l2c {

OtsuReport otsu_threshold(const double* probs, size_t k, OtsuWeight weight) {
    if (k < 2) throw input_error("otsu_threshold: K must be >= 2");
    std::vector<double> sorted(probs, probs + k);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());

    double total = 0;
    for (double p : sorted) total += p;

    OtsuReport best;
    double head = 0;
    double kd = static_cast<double>(k);
    for (size_t r = 1; r <= k - 1; ++r) {
        head += sorted[r - 1];
        double tail = total - head;
        double mu0 = head / static_cast<double>(r);
        double mu1 = tail / static_cast<double>(k - r);
        double w0, w1;
        if (weight == OtsuWeight::count) {
            w0 = static_cast<double>(r) / kd;
            w1 = 1.0 - w0;
        } else {
            w0 = head;
            w1 = tail;
        }
        double d = mu0 - mu1;
        double var = w0 * w1 * d * d;
        if (r == 1 || var > best.between_class_variance) {
            best.between_class_variance = var;
            best.threshold_rank = static_cast<int>(r);
            best.threshold_prob = sorted[r - 1];
            best.head_mass = head;
        }
    }
    return best;
}

OtsuGridReport otsu_report_grid(const ProbGrid& grid, OtsuWeight weight) {
    if (grid.rows == 0) throw input_error("otsu_report_grid: empty grid");
    OtsuGridReport rep;
    rep.per_token.resize(grid.rows);
    std::vector<TokenStats> stats(grid.rows);
    parallel_for(grid.rows, [&](size_t r) {
        rep.per_token[r] = otsu_threshold(grid.row(r), grid.cols, weight);
        stats[r] = token_stats(grid.row(r), grid.cols);
    });
    double n = static_cast<double>(grid.rows);
    for (size_t r = 0; r < grid.rows; ++r) {
        rep.mean_threshold_prob += rep.per_token[r].threshold_prob / n;
        rep.mean_threshold_rank += rep.per_token[r].threshold_rank / n;
        rep.mean_head_mass += rep.per_token[r].head_mass / n;
        rep.mean_between_class_variance += rep.per_token[r].between_class_variance / n;
        rep.mean_top1 += stats[r].top1 / n;
        rep.mean_top2 += stats[r].top2 / n;
        rep.mean_norm_entropy += stats[r].norm_entropy / n;
        rep.mean_tail_entropy += stats[r].tail_entropy / n;
    }
    return rep;
}

std::vector<double> rank_profile(const std::vector<ProbGrid>& grids, int top_n) {
    size_t rows = 0;
    size_t k = 0;
    for (const auto& g : grids) {
        rows += g.rows;
        k = g.cols;
    }
    if (rows == 0) throw input_error("rank_profile: empty corpus");
    if (top_n < 1 || static_cast<size_t>(top_n) > k)
        throw input_error("rank_profile: top_n outside [1, K]");

    std::vector<double> acc(static_cast<size_t>(top_n), 0.0);
    std::vector<double> sorted(k);
    for (const auto& g : grids) {
        for (size_t r = 0; r < g.rows; ++r) {
            sorted.assign(g.row(r), g.row(r) + k);
            std::sort(sorted.begin(), sorted.end(), std::greater<double>());
            for (int i = 0; i < top_n; ++i) acc[i] += sorted[i];
        }
    }
    for (double& v : acc) v /= static_cast<double>(rows);
    return acc;
}

}  // namespace l2c
