#pragma once

#include <functional>
#include <string>
#include <vector>

#include "l2c/rng.hpp"
#include "l2c/tensor.hpp"

namespace l2c {

// H x W x D_z latent; row-major (h, then w, then channel).
struct LatentGrid {
    size_t h = 0, w = 0, dz = 0;
    std::vector<double> v;

    LatentGrid() = default;
    LatentGrid(size_t h_, size_t w_, size_t dz_, double fill = 0.0)
        : h(h_), w(w_), dz(dz_), v(h_ * w_ * dz_, fill) {}

    double& at(size_t r, size_t c, size_t d) { return v[(r * w + c) * dz + d]; }
    double at(size_t r, size_t c, size_t d) const { return v[(r * w + c) * dz + d]; }
    size_t size() const { return v.size(); }
};

// Linear schedule: sigma_i = 1 - i/steps for i = 0..steps (1 down to 0).
struct NoiseSchedule {
    int steps = 1;
    double sigma(int i) const { return 1.0 - static_cast<double>(i) / steps; }
};

struct DenoiserDims {
    size_t d = 4;        // code vector dimension
    size_t d_h = 8;      // conditioning feature width
    size_t d_theta = 16; // denoiser body width
    size_t d_z = 2;      // latent channels
};

// Trainable weights. Biases live beside their matrices; global_mix and
// time_embed are bias-free. The same struct doubles as the gradient
// container (field-for-field).
struct DenoiserParams {
    Mat code_linear;  // D x D_h
    std::vector<double> b_code;
    Mat code_mix;     // D_h x D_h
    std::vector<double> b_mix;
    Mat proj_img;     // 4*D_z x D_theta
    std::vector<double> b_img;
    Mat proj_cond;    // (D_h + 4) x D_theta
    std::vector<double> b_cond;
    Mat body_w1;      // D_theta x D_theta
    std::vector<double> b1;
    Mat body_w2;      // D_theta x D_theta
    std::vector<double> b2;
    Mat global_mix;   // D_theta x D_theta
    Mat proj_out;     // D_theta x 4*D_z
    std::vector<double> b_out;
    Mat time_embed;   // 2 x D_theta (sin row, cos row)

    DenoiserDims dims() const;
};

// Visit every parameter field as a flat (name, data, count) view, in a fixed
// order shared by the optimizer, serialization and finite-difference checks.
void for_each_param(DenoiserParams& p,
                    const std::function<void(const char*, double*, size_t)>& fn);
void for_each_param(const DenoiserParams& p,
                    const std::function<void(const char*, const double*, size_t)>& fn);

DenoiserParams zero_like(const DenoiserParams& p);
DenoiserParams init_denoiser_params(const DenoiserDims& dims, Rng& rng);

// Flatten to / restore from a 1-d buffer (fixed field order above).
std::vector<double> flatten_params(const DenoiserParams& p);
DenoiserParams unflatten_params(const DenoiserDims& dims, const std::vector<double>& flat);

// z~ = (1 - sigma) * z + sigma * noise.
LatentGrid add_noise(const LatentGrid& z, double sigma, const LatentGrid& noise);

// 2x2 patch packing: token (r, c) row = [z(2r,2c), z(2r,2c+1), z(2r+1,2c),
// z(2r+1,2c+1)], each cell D_z-contiguous. unpack is its inverse.
Mat pack_patches(const LatentGrid& z);
LatentGrid unpack_patches(const Mat& tokens, size_t h, size_t w, size_t dz);

// Intermediate activations kept for the backward pass.
struct CondCache {
    Mat code_a;   // V * code_linear + b_code (source grid)
    Mat code_avg; // 4-neighbor average of code_a
    Mat code_hc;  // tanh(code_avg * code_mix + b_mix)
    std::vector<size_t> row_map, col_map; // nearest-neighbor source indices
};

struct ForwardCache {
    Mat x;    // packed patches
    Mat h_in; // proj_img + proj_cond + time embed
    Mat h1;
    Mat h2;
    std::vector<double> mean_h1;
    std::vector<double> g;
};

// H_code = tanh(mix(neighbor_avg(V * code_linear + b))) resampled (nearest
// neighbor) from the (src_rows x src_cols) token grid to (dst_rows x
// dst_cols); U is resampled bilinearly; rows are [H_code_row, U_row].
Mat build_conditioning(const Mat& V, const Mat& U, const DenoiserParams& params,
                       size_t src_rows, size_t src_cols, size_t dst_rows, size_t dst_cols,
                       CondCache* cache = nullptr);

// Token body: h1 = tanh(Hin W1 + b1); g = mean_tokens(h1) * global_mix;
// h2 = tanh((h1 + g) W2 + b2); v_hat = Unpack(h2 W_out + b_out).
// linear_mode replaces both tanh with identity (test oracle hook).
LatentGrid denoiser_forward(const LatentGrid& z_noisy, const Mat& C, double t,
                            const DenoiserParams& params, bool linear_mode = false,
                            ForwardCache* cache = nullptr);

// mean over all elements of w_t^2 * (v_hat - (noise - z))^2.
double v_pred_loss(const LatentGrid& v_hat, const LatentGrid& noise, const LatentGrid& z,
                   double w_t);

struct BackwardResult {
    double loss = 0.0;
    DenoiserParams grads;
};

// Analytic gradients of v_pred_loss with C held fixed; the conditioning
// encoder fields (code_linear/code_mix and biases) therefore get zero
// gradients here.
BackwardResult backward(const LatentGrid& z_noisy, const Mat& C, double t,
                        const DenoiserParams& params, const LatentGrid& noise,
                        const LatentGrid& z, double w_t, bool linear_mode = false);

// Training-path gradients: same loss, but differentiates through
// build_conditioning so the encoder fields learn too.
BackwardResult backward_through_conditioning(const LatentGrid& z_noisy, const Mat& V,
                                             const Mat& U, size_t src_rows, size_t src_cols,
                                             double t, const DenoiserParams& params,
                                             const LatentGrid& noise, const LatentGrid& z,
                                             double w_t);

struct TrainItem {
    LatentGrid z;
    Mat V; // rows x cols code vectors
    Mat U; // rows x cols uncertainty features
};

struct TrainConfig {
    int steps = 2000;
    double step_size = 0.05;
    double momentum = 0.9;
    int batch = 4;
    uint64_t seed = 0;
    DenoiserDims dims;
};

struct TrainResult {
    DenoiserParams params;
    std::vector<double> loss_trace; // one (batch-mean) loss per step
};

// Seeded v-prediction training loop: per batch element draw an item, t and
// Gaussian noise, add_noise with sigma = t, forward, loss (w_t = 1),
// backward through conditioning; update every parameter with the momentum
// average m = beta*m + (1-beta)*grad, p -= step_size*m.
TrainResult train(const std::vector<TrainItem>& dataset, size_t item_rows, size_t item_cols,
                  const TrainConfig& config);

using VelocityFn = std::function<LatentGrid(const LatentGrid& z, double sigma)>;

// Euler integration from a seeded Gaussian at sigma=1 down to sigma=0:
// z <- z - (sigma_i - sigma_{i+1}) * v(z, sigma_i).
LatentGrid sample_with(const VelocityFn& velocity, const NoiseSchedule& schedule, uint64_t seed,
                       size_t h, size_t w, size_t dz);

// Same, with the trained denoiser (velocity = denoiser_forward at t = sigma).
LatentGrid sample(const Mat& C, const NoiseSchedule& schedule, const DenoiserParams& params,
                  uint64_t seed, size_t h, size_t w, size_t dz);

}  // namespace l2c
