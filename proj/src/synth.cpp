#include "l2c/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "l2c/distribution.hpp"
#include "l2c/lcdm.hpp"
#include "l2c/rng.hpp"

namespace l2c {

SynthKind synth_kind_from_string(const std::string& name) {
    if (name == "sharp") return SynthKind::sharp;
    if (name == "flat") return SynthKind::flat;
    if (name == "cosine") return SynthKind::cosine;
    throw input_error("synth: unknown kind '" + name + "'");
}

namespace {

constexpr double kEulerGamma = 0.57721566490153286;  // mean of a standard Gumbel

// One sharp row: a power-law profile -1.2*ln(rank) scattered over the
// indices by a seeded shuffle, with one dominant entry placed so that its
// softmax mass sits near 1/4 of the tail partition sum (Gumbel-jittered).
void sharp_row(double* out, size_t k, double tail_log_sum, Rng& rng) {
    std::vector<size_t> perm(k);
    std::iota(perm.begin(), perm.end(), size_t{0});
    for (size_t i = k - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.below(i + 1)]);
    for (size_t r = 0; r < k; ++r)
        out[perm[r]] = -1.2 * std::log(static_cast<double>(r + 1));
    size_t spike = rng.below(k);
    out[spike] = tail_log_sum - std::log(3.0) + 0.2 * (rng.gumbel() - kEulerGamma);
}

}  // namespace

LogitGrid synth_corpus(SynthKind kind, size_t n, size_t k, uint64_t seed) {
    if (n < 1 || k < 2) throw input_error("synth: need n >= 1 and k >= 2");
    Rng rng(seed);
    LogitGrid out(n, k);
    switch (kind) {
        case SynthKind::sharp: {
            double z = 0;
            for (size_t r = 1; r <= k; ++r) z += std::pow(static_cast<double>(r), -1.2);
            double tail_log_sum = std::log(z);
            for (size_t i = 0; i < n; ++i) sharp_row(out.row(i), k, tail_log_sum, rng);
            break;
        }
        case SynthKind::flat: {
            for (double& v : out.a) v = 0.05 * rng.gumbel();
            break;
        }
        case SynthKind::cosine: {
            for (size_t i = 0; i < n; ++i) {
                double* row = out.row(i);
                for (size_t j = 0; j < k; ++j)
                    row[j] = std::clamp(0.1 + 0.2 * rng.gaussian(), -1.0, 0.85);
                row[rng.below(k)] = 1.0 - 0.02 * rng.uniform();
            }
            break;
        }
    }
    return out;
}

ToyDataset make_toy_dataset(const ToyDatasetConfig& config, uint64_t seed) {
    if (config.latent_h != 2 * config.rows || config.latent_w != 2 * config.cols)
        throw input_error("toy dataset: latent must be exactly 2x the token grid");
    if (config.k < 2 || config.d < 1 || config.d_z < 1)
        throw input_error("toy dataset: bad dimensions");

    Rng rng(seed);
    ToyDataset ds;
    ds.codebook = Mat(config.k, config.d);
    for (double& v : ds.codebook.a) v = rng.gaussian();
    ds.render_map = Mat(config.d, 4 * config.d_z);
    for (double& v : ds.render_map.a) v = 0.6 * rng.gaussian();

    size_t n_tokens = config.rows * config.cols;
    auto make_item = [&]() {
        TrainItem item;
        // 2x2 quadrants of the token grid share one code index; spatial
        // coherence keeps the neighbor-averaged conditioning informative.
        size_t quad[4];
        for (auto& q : quad) q = rng.below(config.k);
        std::vector<size_t> codes(n_tokens);
        for (size_t r = 0; r < config.rows; ++r)
            for (size_t c = 0; c < config.cols; ++c) {
                size_t qr = r * 2 / config.rows, qc = c * 2 / config.cols;
                codes[r * config.cols + c] = quad[qr * 2 + qc];
            }

        ProbGrid probs(n_tokens, config.k);
        std::vector<double> logits(config.k);
        for (size_t i = 0; i < n_tokens; ++i) {
            for (size_t j = 0; j < config.k; ++j) logits[j] = 0.3 * rng.gumbel();
            logits[codes[i]] += 6.0;
            softmax_row(logits.data(), config.k, 1.0, probs.row(i));
        }
        item.V = weighted_code_vectors(probs, ds.codebook);
        item.U = uncertainty_grid(probs);

        item.z = LatentGrid(config.latent_h, config.latent_w, config.d_z);
        for (size_t r = 0; r < config.rows; ++r)
            for (size_t c = 0; c < config.cols; ++c) {
                const double* e = ds.codebook.row(codes[r * config.cols + c]);
                for (size_t cell = 0; cell < 4; ++cell)
                    for (size_t d = 0; d < config.d_z; ++d) {
                        double v = 0;
                        for (size_t p = 0; p < config.d; ++p)
                            v += e[p] * ds.render_map.at(p, cell * config.d_z + d);
                        size_t rr = 2 * r + cell / 2, cc = 2 * c + cell % 2;
                        item.z.at(rr, cc, d) = v;
                    }
            }
        for (double& v : item.z.v) v += config.render_noise * rng.gaussian();
        return item;
    };

    for (size_t i = 0; i < config.train_items; ++i) ds.train.push_back(make_item());
    for (size_t i = 0; i < config.test_items; ++i) ds.test.push_back(make_item());
    return ds;
}

}  // namespace l2c
