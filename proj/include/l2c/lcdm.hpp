#pragma once

#include "l2c/calibration.hpp"
#include "l2c/tensor.hpp"

namespace l2c {

using Codebook = Mat;        // K x D code vectors E
using CodeVectorGrid = Mat;  // N x D expected embeddings V
using UncertaintyGrid = Mat; // N x 4 features U
using FeatureGrid = Mat;     // N x D encoder features F

// V = P * E; row i is the probability-weighted mean code vector.
CodeVectorGrid weighted_code_vectors(const ProbGrid& probs, const Codebook& codebook);

// Row i = (top1, margin, topk_mass, tail_entropy) of probs row i.
UncertaintyGrid uncertainty_grid(const ProbGrid& probs);

// s_{i,k} = <f_i, e_k> / (|f_i| |e_k|); throws on zero-norm rows.
LogitGrid cosine_pseudo_logits(const FeatureGrid& features, const Codebook& codebook);

// apply_calibration, then V and U from the same calibrated grid.
struct LcdmOutput {
    CodeVectorGrid code_vectors;
    UncertaintyGrid uncertainty;
};
LcdmOutput lcdm_pipeline(const LogitGrid& logits, const Codebook& codebook,
                         const CalibrationParams& params);

}  // namespace l2c
