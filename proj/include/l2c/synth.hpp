#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "l2c/tensor.hpp"
#include "l2c/toy_decoder.hpp"

namespace l2c {

enum class SynthKind { sharp, flat, cosine };

SynthKind synth_kind_from_string(const std::string& name);

// Seeded synthetic logit corpora:
//   sharp  — permuted power-law profile with one Gumbel-jittered dominant
//            entry; post-softmax mean top1 lands in [0.15, 0.35].
//   flat   — i.i.d. standard Gumbel noise at scale 0.05 (near-uniform
//            softmax, normalized entropy > 0.99 at large K).
//   cosine — values in [-1, 1] with a single peak near 1, the rest mild
//            clipped Gaussians (proxy cosine-similarity rows).
LogitGrid synth_corpus(SynthKind kind, size_t n, size_t k, uint64_t seed);

// Synthetic rendering task for the toy decoder: a K x D codebook, a fixed
// random D -> 2x2xD_z patch render map, and items whose 2x2 token quadrants
// share a code index. Ground-truth z renders each token's true code vector
// plus render_noise-scale Gaussian perturbation; V and U come from the
// per-token sharp distributions.
struct ToyDatasetConfig {
    size_t k = 32;
    size_t d = 4;
    size_t latent_h = 8;
    size_t latent_w = 8;
    size_t d_z = 2;
    size_t rows = 4;  // token grid
    size_t cols = 4;
    size_t train_items = 64;
    size_t test_items = 8;
    double render_noise = 0.05;
};

struct ToyDataset {
    Mat codebook;   // K x D
    Mat render_map; // D x 4*D_z
    std::vector<TrainItem> train;
    std::vector<TrainItem> test;
};

ToyDataset make_toy_dataset(const ToyDatasetConfig& config, uint64_t seed);

}  // namespace l2c
