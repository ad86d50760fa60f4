#include "l2c/lcdm.hpp"

#include <cmath>

#include "l2c/distribution.hpp"
#include "l2c/parallel.hpp"

namespace l2c {

CodeVectorGrid weighted_code_vectors(const ProbGrid& probs, const Codebook& codebook) {
    if (probs.cols != codebook.rows)
        throw input_error("weighted_code_vectors: probs K != codebook K");
    CodeVectorGrid v(probs.rows, codebook.cols, 0.0);
    parallel_for(probs.rows, [&](size_t i) {
        double* out = v.row(i);
        const double* p = probs.row(i);
        for (size_t k = 0; k < codebook.rows; ++k) {
            const double* e = codebook.row(k);
            double pk = p[k];
            for (size_t d = 0; d < codebook.cols; ++d) out[d] += pk * e[d];
        }
    });
    return v;
}

UncertaintyGrid uncertainty_grid(const ProbGrid& probs) {
    UncertaintyGrid u(probs.rows, 4);
    parallel_for(probs.rows, [&](size_t i) {
        TokenStats s = token_stats(probs.row(i), probs.cols);
        u.at(i, 0) = s.top1;
        u.at(i, 1) = s.margin;
        u.at(i, 2) = s.topk_mass;
        u.at(i, 3) = s.tail_entropy;
    });
    return u;
}

LogitGrid cosine_pseudo_logits(const FeatureGrid& features, const Codebook& codebook) {
    if (features.cols != codebook.cols)
        throw input_error("cosine_pseudo_logits: feature D != codebook D");
    std::vector<double> code_norms(codebook.rows);
    for (size_t k = 0; k < codebook.rows; ++k) {
        double s = 0;
        for (size_t d = 0; d < codebook.cols; ++d) s += codebook.at(k, d) * codebook.at(k, d);
        code_norms[k] = std::sqrt(s);
        if (code_norms[k] == 0) throw input_error("cosine_pseudo_logits: zero-norm code vector");
    }
    // Norm validation stays outside the parallel region (throws must not
    // escape worker threads).
    std::vector<double> feat_norms(features.rows);
    for (size_t i = 0; i < features.rows; ++i) {
        const double* f = features.row(i);
        double s = 0;
        for (size_t d = 0; d < features.cols; ++d) s += f[d] * f[d];
        feat_norms[i] = std::sqrt(s);
        if (feat_norms[i] == 0) throw input_error("cosine_pseudo_logits: zero-norm feature row");
    }
    LogitGrid out(features.rows, codebook.rows);
    parallel_for(features.rows, [&](size_t i) {
        const double* f = features.row(i);
        double fn = feat_norms[i];
        for (size_t k = 0; k < codebook.rows; ++k) {
            double dot = 0;
            for (size_t d = 0; d < features.cols; ++d) dot += f[d] * codebook.at(k, d);
            out.at(i, k) = dot / (fn * code_norms[k]);
        }
    });
    return out;
}

LcdmOutput lcdm_pipeline(const LogitGrid& logits, const Codebook& codebook,
                         const CalibrationParams& params) {
    ProbGrid calibrated = apply_calibration(logits, params);
    LcdmOutput out;
    out.code_vectors = weighted_code_vectors(calibrated, codebook);
    out.uncertainty = uncertainty_grid(calibrated);
    return out;
}

}  // namespace l2c
