#include "l2c/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace l2c {

void softmax_row(const double* logits, size_t k, double temperature, double* out) {
    if (temperature <= 0) throw input_error("softmax: temperature must be > 0");
    double mx = logits[0];
    for (size_t i = 0; i < k; ++i) {
        if (!std::isfinite(logits[i])) throw input_error("softmax: non-finite logit");
        mx = std::max(mx, logits[i]);
    }
    double sum = 0;
    for (size_t i = 0; i < k; ++i) {
        out[i] = std::exp((logits[i] - mx) / temperature);
        sum += out[i];
    }
    for (size_t i = 0; i < k; ++i) out[i] /= sum;
}

void label_smooth_row(const double* probs, size_t k, double epsilon, double* out) {
    if (epsilon < 0 || epsilon > 1) throw input_error("label_smooth: epsilon outside [0, 1]");
    double u = epsilon / static_cast<double>(k);
    for (size_t i = 0; i < k; ++i) out[i] = (1.0 - epsilon) * probs[i] + u;
}

double normalized_entropy(const double* probs, size_t k) {
    if (k < 2) throw input_error("normalized_entropy: K must be >= 2");
    double h = 0;
    for (size_t i = 0; i < k; ++i)
        if (probs[i] > 0) h -= probs[i] * std::log(probs[i]);
    double hn = h / std::log(static_cast<double>(k));
    return std::clamp(hn, 0.0, 1.0);
}

int adaptive_support_size(const double* probs, size_t k) {
    double h = 0;
    for (size_t i = 0; i < k; ++i)
        if (probs[i] > 0) h -= probs[i] * std::log(probs[i]);
    long long ku = std::llround(std::exp(h));
    long long hi = std::max<long long>(8, std::min<long long>(64, static_cast<long long>(k)));
    return static_cast<int>(std::clamp(ku, 8LL, hi));
}

TokenStats token_stats(const double* probs, size_t k) {
    if (k < 2) throw input_error("token_stats: K must be >= 2");
    TokenStats s;
    size_t arg = 0;
    double p1 = probs[0], p2 = -1.0;
    for (size_t i = 1; i < k; ++i) {
        if (probs[i] > p1) {
            p2 = p1;
            p1 = probs[i];
            arg = i;
        } else if (probs[i] > p2) {
            p2 = probs[i];
        }
    }
    s.top1 = p1;
    s.top2 = p2 < 0 ? 0.0 : p2;
    s.margin = s.top1 - s.top2;
    s.norm_entropy = normalized_entropy(probs, k);
    s.k_u = adaptive_support_size(probs, k);

    // Top-K_u mass: partial-sort a copy descending.
    std::vector<double> sorted(probs, probs + k);
    size_t take = std::min<size_t>(static_cast<size_t>(s.k_u), k);
    std::partial_sort(sorted.begin(), sorted.begin() + take, sorted.end(),
                      std::greater<double>());
    double mass = 0;
    for (size_t i = 0; i < take; ++i) mass += sorted[i];
    s.topk_mass = std::min(mass, 1.0);

    // Tail entropy over everything except the argmax, normalized by ln(K-1);
    // for K == 2 that normalizer is ln 1 = 0, so the raw nats are reported.
    double tail = 0;
    for (size_t i = 0; i < k; ++i)
        if (i != arg && probs[i] > 0) tail -= probs[i] * std::log(probs[i]);
    double denom = std::log(static_cast<double>(k - 1));
    s.tail_entropy = denom > 0 ? tail / denom : tail;
    return s;
}

ProbGrid softmax_grid(const LogitGrid& logits, double temperature) {
    ProbGrid p(logits.rows, logits.cols);
    for (size_t r = 0; r < logits.rows; ++r)
        softmax_row(logits.row(r), logits.cols, temperature, p.row(r));
    return p;
}

TokenStats token_stats_row(const ProbGrid& probs, size_t row) {
    return token_stats(probs.row(row), probs.cols);
}

double percentile_nearest_rank(std::vector<double> values, double q) {
    if (values.empty()) throw input_error("percentile: empty sample");
    std::sort(values.begin(), values.end());
    size_t n = values.size();
    size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(n)));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return values[rank - 1];
}

TargetStats corpus_stats(const std::vector<ProbGrid>& grids) {
    std::vector<double> entropies, confs;
    for (const auto& g : grids) {
        for (size_t r = 0; r < g.rows; ++r) {
            entropies.push_back(normalized_entropy(g.row(r), g.cols));
            double mx = g.at(r, 0);
            for (size_t c = 1; c < g.cols; ++c) mx = std::max(mx, g.at(r, c));
            confs.push_back(mx);
        }
    }
    if (entropies.empty()) throw input_error("corpus_stats: empty corpus");
    TargetStats t;
    double se = 0, sc = 0;
    for (double e : entropies) se += e;
    for (double c : confs) sc += c;
    t.mean_entropy = se / entropies.size();
    t.mean_conf = sc / confs.size();
    t.p95_conf = percentile_nearest_rank(confs, 0.95);
    t.p95_entropy = percentile_nearest_rank(entropies, 0.95);
    return t;
}

}  // namespace l2c
