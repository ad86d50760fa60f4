#pragma once

#include <string>
#include <vector>

#include "l2c/distribution.hpp"
#include "l2c/tensor.hpp"
#include "l2c/tensor_io.hpp"

namespace l2c {

// theta = (a, b, alpha, eps): s~ = a*s + b, p = softmax(s~/alpha),
// p_hat = (1-eps)*p + eps/K.
struct CalibrationParams {
    double scale = 1.0;        // a
    double bias = 0.0;         // b
    double temperature = 1.0;  // alpha
    double smoothing = 0.0;    // eps

    void validate() const;
};

struct ObjectiveWeights {
    double w1 = 1.0, w2 = 0.25, w3 = 0.25, w4 = 0.35;
};

// Calibrate one logit row into `out` (length K).
void apply_calibration_row(const double* logits, size_t k, const CalibrationParams& params,
                           double* out);
ProbGrid apply_calibration(const LogitGrid& logits, const CalibrationParams& params);

// (mean entropy, mean confidence, p95 confidence, p95 entropy) of the
// calibrated corpus; rows are evaluated in parallel.
TargetStats calibrated_corpus_stats(const std::vector<LogitGrid>& corpus,
                                    const CalibrationParams& params);

// w1*(mH'-mH)^2 + w2*(mC'-mC)^2 + w3*(p95C'-p95C)^2 + w4*(p95H'-p95H)^2.
double calibration_objective(const CalibrationParams& params,
                             const std::vector<LogitGrid>& corpus, const TargetStats& target,
                             const ObjectiveWeights& weights);

struct BisectResult {
    double scale = 1.0;
    bool bracketed = false;
    int iterations = 0;
    double achieved_entropy = 0.0;
};

// Bisect the scale a over [lo, hi] with (b, alpha, eps) = (0, 1, 0) until the
// corpus mean normalized entropy is within tol of target_entropy (entropy
// decreases as a grows). Refines past tol while iterations remain so the
// returned scale is the best the bracket can resolve. If the target lies
// outside [H(hi), H(lo)], returns the closest endpoint with bracketed=false.
BisectResult bisect_scale(const std::vector<LogitGrid>& corpus, double target_entropy,
                          double a_lo, double a_hi, double tol);

struct StageTrace {
    std::string stage;
    CalibrationParams params;
    double loss = 0.0;
};

struct SearchResult {
    CalibrationParams params;
    double final_loss = 0.0;
    bool non_bracketed = false;
    double bisect_entropy = 0.0;  // mean entropy achieved by stage 1
    std::vector<StageTrace> trace;
};

// Coordinated gradient-free search: stage 1 bisects a; stages 2-4 grid-sweep
// alpha, eps, b in turn, each keeping the incumbent candidate so the
// objective is non-increasing across stages. Sweep ties break to the smaller
// parameter value.
SearchResult calibrate_search(const std::vector<LogitGrid>& corpus, const StatsConfig& config);

}  // namespace l2c
