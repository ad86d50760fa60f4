#include "l2c/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "l2c/parallel.hpp"

namespace l2c {

void CalibrationParams::validate() const {
    if (!(scale > 0)) throw input_error("calibration: scale a must be > 0");
    if (!(temperature > 0)) throw input_error("calibration: temperature alpha must be > 0");
    if (smoothing < 0 || smoothing > 1) throw input_error("calibration: smoothing outside [0, 1]");
    if (!std::isfinite(bias)) throw input_error("calibration: non-finite bias");
}

void apply_calibration_row(const double* logits, size_t k, const CalibrationParams& params,
                           double* out) {
    for (size_t i = 0; i < k; ++i) out[i] = params.scale * logits[i] + params.bias;
    softmax_row(out, k, params.temperature, out);
    label_smooth_row(out, k, params.smoothing, out);
}

ProbGrid apply_calibration(const LogitGrid& logits, const CalibrationParams& params) {
    params.validate();
    ProbGrid p(logits.rows, logits.cols);
    parallel_for(logits.rows, [&](size_t r) {
        apply_calibration_row(logits.row(r), logits.cols, params, p.row(r));
    });
    return p;
}

TargetStats calibrated_corpus_stats(const std::vector<LogitGrid>& corpus,
                                    const CalibrationParams& params) {
    params.validate();
    size_t total = 0;
    for (const auto& g : corpus) total += g.rows;
    if (total == 0) throw input_error("calibrated_corpus_stats: empty corpus");

    std::vector<double> entropies(total), confs(total);
    size_t base = 0;
    for (const auto& g : corpus) {
        parallel_for(g.rows, [&](size_t r) {
            std::vector<double> row(g.cols);
            apply_calibration_row(g.row(r), g.cols, params, row.data());
            entropies[base + r] = normalized_entropy(row.data(), g.cols);
            confs[base + r] = *std::max_element(row.begin(), row.end());
        });
        base += g.rows;
    }

    TargetStats t;
    double se = 0, sc = 0;
    for (double e : entropies) se += e;
    for (double c : confs) sc += c;
    t.mean_entropy = se / static_cast<double>(total);
    t.mean_conf = sc / static_cast<double>(total);
    t.p95_conf = percentile_nearest_rank(confs, 0.95);
    t.p95_entropy = percentile_nearest_rank(entropies, 0.95);
    return t;
}

double calibration_objective(const CalibrationParams& params,
                             const std::vector<LogitGrid>& corpus, const TargetStats& target,
                             const ObjectiveWeights& weights) {
    TargetStats s = calibrated_corpus_stats(corpus, params);
    double d1 = s.mean_entropy - target.mean_entropy;
    double d2 = s.mean_conf - target.mean_conf;
    double d3 = s.p95_conf - target.p95_conf;
    double d4 = s.p95_entropy - target.p95_entropy;
    return weights.w1 * d1 * d1 + weights.w2 * d2 * d2 + weights.w3 * d3 * d3 +
           weights.w4 * d4 * d4;
}

namespace {

double mean_entropy_at_scale(const std::vector<LogitGrid>& corpus, double a) {
    CalibrationParams p;
    p.scale = a;
    return calibrated_corpus_stats(corpus, p).mean_entropy;
}

}  // namespace

BisectResult bisect_scale(const std::vector<LogitGrid>& corpus, double target_entropy,
                          double a_lo, double a_hi, double tol) {
    if (a_lo > a_hi) throw input_error("bisect_scale: inverted range");
    if (!(tol > 0)) throw input_error("bisect_scale: tolerance must be > 0");

    BisectResult res;
    double e_lo = mean_entropy_at_scale(corpus, a_lo);
    double e_hi = mean_entropy_at_scale(corpus, a_hi);

    // Entropy decreases as a grows, so the achievable band is [e_hi, e_lo].
    constexpr double kExact = 1e-15;
    if (std::abs(e_lo - target_entropy) <= kExact) {
        res.scale = a_lo;
        res.bracketed = true;
        res.achieved_entropy = e_lo;
        return res;
    }
    if (std::abs(e_hi - target_entropy) <= kExact) {
        res.scale = a_hi;
        res.bracketed = true;
        res.achieved_entropy = e_hi;
        return res;
    }
    if (target_entropy > e_lo || target_entropy < e_hi) {
        res.bracketed = false;
        // Ties (degenerate corpora where entropy is flat in a) resolve to hi.
        bool lo_closer = std::abs(e_lo - target_entropy) < std::abs(e_hi - target_entropy);
        res.scale = lo_closer ? a_lo : a_hi;
        res.achieved_entropy = lo_closer ? e_lo : e_hi;
        return res;
    }

    res.bracketed = true;
    double lo = a_lo, hi = a_hi;
    double best_a = std::abs(e_lo - target_entropy) <= std::abs(e_hi - target_entropy) ? a_lo
                                                                                       : a_hi;
    double best_e = std::abs(e_lo - target_entropy) <= std::abs(e_hi - target_entropy) ? e_lo
                                                                                       : e_hi;
    // Keep halving past the entropy tolerance while iterations remain; the
    // extra precision costs little and the self-calibration check needs it.
    for (int it = 0; it < 60 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
        double mid = 0.5 * (lo + hi);
        double e_mid = mean_entropy_at_scale(corpus, mid);
        ++res.iterations;
        if (std::abs(e_mid - target_entropy) < std::abs(best_e - target_entropy)) {
            best_a = mid;
            best_e = e_mid;
        }
        if (std::abs(e_mid - target_entropy) <= kExact) break;
        if (e_mid >= target_entropy)
            lo = mid;
        else
            hi = mid;
    }
    res.scale = best_a;
    res.achieved_entropy = best_e;
    return res;
}

namespace {

std::vector<double> sweep_candidates(double lo, double hi, int points, double incumbent) {
    std::vector<double> c;
    c.reserve(static_cast<size_t>(points) + 1);
    if (points == 1) {
        c.push_back(lo);
    } else {
        for (int i = 0; i < points; ++i)
            c.push_back(lo + (hi - lo) * static_cast<double>(i) / (points - 1));
    }
    c.push_back(incumbent);
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

}  // namespace

SearchResult calibrate_search(const std::vector<LogitGrid>& corpus, const StatsConfig& config) {
    ObjectiveWeights w{config.weights[0], config.weights[1], config.weights[2],
                       config.weights[3]};
    auto eval = [&](const CalibrationParams& p) {
        return calibration_objective(p, corpus, config.target_stats, w);
    };

    SearchResult res;

    // Stage 1: bisect the scale toward the target mean entropy.
    BisectResult br = bisect_scale(corpus, config.target_stats.mean_entropy, config.a_range[0],
                                   config.a_range[1], config.entropy_tolerance);
    res.non_bracketed = !br.bracketed;
    res.bisect_entropy = br.achieved_entropy;
    CalibrationParams cur;
    cur.scale = br.scale;
    double cur_loss = eval(cur);
    res.trace.push_back({"bisect_scale", cur, cur_loss});

    // Stages 2-4: sweep one parameter at a time; the incumbent value is in
    // every candidate set, so the best loss never increases. Ascending
    // candidates + strict improvement give ties to the smaller value.
    struct Stage {
        const char* name;
        const double* range;
        int points;
        double CalibrationParams::* field;
    };
    const Stage stages[] = {
        {"sweep_alpha", config.alpha_range, config.alpha_points, &CalibrationParams::temperature},
        {"sweep_eps", config.eps_range, config.eps_points, &CalibrationParams::smoothing},
        {"sweep_b", config.b_range, config.b_points, &CalibrationParams::bias},
    };
    for (const Stage& st : stages) {
        std::vector<double> cands =
            sweep_candidates(st.range[0], st.range[1], st.points, cur.*(st.field));
        CalibrationParams best = cur;
        double best_loss = cur_loss;
        for (double v : cands) {
            if (v == cur.*(st.field)) continue;  // incumbent already scored
            CalibrationParams cand = cur;
            cand.*(st.field) = v;
            double loss = eval(cand);
            if (loss < best_loss || (loss == best_loss && v < best.*(st.field))) {
                best_loss = loss;
                best = cand;
            }
        }
        cur = best;
        cur_loss = best_loss;
        res.trace.push_back({st.name, cur, cur_loss});
    }

    res.params = cur;
    res.final_loss = cur_loss;
    return res;
}

}  // namespace l2c
