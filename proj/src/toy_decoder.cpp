#include "l2c/toy_decoder.hpp"

#include <cmath>
#include <stdexcept>

namespace l2c {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// out = X * W + b (b may be empty for no bias).
void affine(const Mat& X, const Mat& W, const std::vector<double>& b, Mat& out) {
    if (X.cols != W.rows) throw std::runtime_error("affine: inner dimension mismatch");
    out = Mat(X.rows, W.cols, 0.0);
    for (size_t i = 0; i < X.rows; ++i) {
        const double* x = X.row(i);
        double* o = out.row(i);
        for (size_t p = 0; p < X.cols; ++p) {
            double xv = x[p];
            const double* w = W.row(p);
            for (size_t q = 0; q < W.cols; ++q) o[q] += xv * w[q];
        }
        if (!b.empty())
            for (size_t q = 0; q < W.cols; ++q) o[q] += b[q];
    }
}

// A^T * B with A: N x P, B: N x Q -> P x Q.
Mat matmul_at_b(const Mat& A, const Mat& B) {
    Mat out(A.cols, B.cols, 0.0);
    for (size_t n = 0; n < A.rows; ++n) {
        const double* a = A.row(n);
        const double* b = B.row(n);
        for (size_t p = 0; p < A.cols; ++p) {
            double av = a[p];
            double* o = out.row(p);
            for (size_t q = 0; q < B.cols; ++q) o[q] += av * b[q];
        }
    }
    return out;
}

// D * W^T with D: N x Q, W: P x Q -> N x P.
Mat matmul_b_wt(const Mat& D, const Mat& W) {
    Mat out(D.rows, W.rows, 0.0);
    for (size_t n = 0; n < D.rows; ++n) {
        const double* d = D.row(n);
        double* o = out.row(n);
        for (size_t p = 0; p < W.rows; ++p) {
            const double* w = W.row(p);
            double s = 0;
            for (size_t q = 0; q < W.cols; ++q) s += d[q] * w[q];
            o[p] = s;
        }
    }
    return out;
}

std::vector<double> colsum(const Mat& M) {
    std::vector<double> s(M.cols, 0.0);
    for (size_t r = 0; r < M.rows; ++r) {
        const double* row = M.row(r);
        for (size_t c = 0; c < M.cols; ++c) s[c] += row[c];
    }
    return s;
}

void tanh_inplace(Mat& M) {
    for (double& v : M.a) v = std::tanh(v);
}

// Nearest-neighbor source index for each destination index along one axis.
std::vector<size_t> nn_axis_map(size_t src, size_t dst) {
    std::vector<size_t> m(dst);
    for (size_t i = 0; i < dst; ++i) {
        double x = (static_cast<double>(i) + 0.5) * static_cast<double>(src) /
                   static_cast<double>(dst);
        size_t idx = static_cast<size_t>(x);
        m[i] = idx >= src ? src - 1 : idx;
    }
    return m;
}

struct BilinAxis {
    size_t i0, i1;
    double w1;  // value = (1-w1)*src[i0] + w1*src[i1]
};

std::vector<BilinAxis> bilin_axis_map(size_t src, size_t dst) {
    std::vector<BilinAxis> m(dst);
    for (size_t i = 0; i < dst; ++i) {
        double x = (static_cast<double>(i) + 0.5) * static_cast<double>(src) /
                       static_cast<double>(dst) -
                   0.5;
        if (x < 0) x = 0;
        double maxx = static_cast<double>(src - 1);
        if (x > maxx) x = maxx;
        size_t i0 = static_cast<size_t>(x);
        if (i0 >= src - 1 && src > 1) i0 = src - 2;
        if (src == 1) i0 = 0;
        size_t i1 = std::min(i0 + 1, src - 1);
        m[i] = {i0, i1, x - static_cast<double>(i0)};
    }
    return m;
}

// Mean over self and the existing 4-neighbors of every grid cell.
Mat neighbor_average(const Mat& X, size_t rows, size_t cols) {
    Mat out(X.rows, X.cols, 0.0);
    for (size_t r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cols; ++c) {
            double* o = out.row(r * cols + c);
            size_t deg = 0;
            auto add = [&](size_t rr, size_t cc) {
                const double* s = X.row(rr * cols + cc);
                for (size_t f = 0; f < X.cols; ++f) o[f] += s[f];
                ++deg;
            };
            add(r, c);
            if (r > 0) add(r - 1, c);
            if (r + 1 < rows) add(r + 1, c);
            if (c > 0) add(r, c - 1);
            if (c + 1 < cols) add(r, c + 1);
            for (size_t f = 0; f < X.cols; ++f) o[f] /= static_cast<double>(deg);
        }
    }
    return out;
}

// Transpose of neighbor_average: dX[nbr] += dY[cell] / deg(cell).
Mat neighbor_average_transpose(const Mat& dY, size_t rows, size_t cols) {
    Mat out(dY.rows, dY.cols, 0.0);
    for (size_t r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cols; ++c) {
            const double* d = dY.row(r * cols + c);
            size_t deg = 1 + (r > 0) + (r + 1 < rows) + (c > 0) + (c + 1 < cols);
            double w = 1.0 / static_cast<double>(deg);
            auto add = [&](size_t rr, size_t cc) {
                double* o = out.row(rr * cols + cc);
                for (size_t f = 0; f < dY.cols; ++f) o[f] += w * d[f];
            };
            add(r, c);
            if (r > 0) add(r - 1, c);
            if (r + 1 < rows) add(r + 1, c);
            if (c > 0) add(r, c - 1);
            if (c + 1 < cols) add(r, c + 1);
        }
    }
    return out;
}

}  // namespace

DenoiserDims DenoiserParams::dims() const {
    DenoiserDims d;
    d.d = code_linear.rows;
    d.d_h = code_linear.cols;
    d.d_theta = body_w1.rows;
    d.d_z = proj_out.cols / 4;
    return d;
}

void for_each_param(DenoiserParams& p,
                    const std::function<void(const char*, double*, size_t)>& fn) {
    fn("code_linear", p.code_linear.a.data(), p.code_linear.a.size());
    fn("b_code", p.b_code.data(), p.b_code.size());
    fn("code_mix", p.code_mix.a.data(), p.code_mix.a.size());
    fn("b_mix", p.b_mix.data(), p.b_mix.size());
    fn("proj_img", p.proj_img.a.data(), p.proj_img.a.size());
    fn("b_img", p.b_img.data(), p.b_img.size());
    fn("proj_cond", p.proj_cond.a.data(), p.proj_cond.a.size());
    fn("b_cond", p.b_cond.data(), p.b_cond.size());
    fn("body_w1", p.body_w1.a.data(), p.body_w1.a.size());
    fn("b1", p.b1.data(), p.b1.size());
    fn("body_w2", p.body_w2.a.data(), p.body_w2.a.size());
    fn("b2", p.b2.data(), p.b2.size());
    fn("global_mix", p.global_mix.a.data(), p.global_mix.a.size());
    fn("proj_out", p.proj_out.a.data(), p.proj_out.a.size());
    fn("b_out", p.b_out.data(), p.b_out.size());
    fn("time_embed", p.time_embed.a.data(), p.time_embed.a.size());
}

void for_each_param(const DenoiserParams& p,
                    const std::function<void(const char*, const double*, size_t)>& fn) {
    for_each_param(const_cast<DenoiserParams&>(p),
                   [&](const char* name, double* data, size_t n) { fn(name, data, n); });
}

DenoiserParams zero_like(const DenoiserParams& p) {
    DenoiserParams z = p;
    for_each_param(z, [](const char*, double* data, size_t n) {
        for (size_t i = 0; i < n; ++i) data[i] = 0.0;
    });
    return z;
}

DenoiserParams init_denoiser_params(const DenoiserDims& dims, Rng& rng) {
    DenoiserParams p;
    size_t patch = 4 * dims.d_z;
    auto init_mat = [&](size_t r, size_t c) {
        Mat m(r, c);
        double s = 1.0 / std::sqrt(static_cast<double>(r));
        for (double& v : m.a) v = s * rng.gaussian();
        return m;
    };
    p.code_linear = init_mat(dims.d, dims.d_h);
    p.b_code.assign(dims.d_h, 0.0);
    p.code_mix = init_mat(dims.d_h, dims.d_h);
    p.b_mix.assign(dims.d_h, 0.0);
    p.proj_img = init_mat(patch, dims.d_theta);
    p.b_img.assign(dims.d_theta, 0.0);
    p.proj_cond = init_mat(dims.d_h + 4, dims.d_theta);
    p.b_cond.assign(dims.d_theta, 0.0);
    p.body_w1 = init_mat(dims.d_theta, dims.d_theta);
    p.b1.assign(dims.d_theta, 0.0);
    p.body_w2 = init_mat(dims.d_theta, dims.d_theta);
    p.b2.assign(dims.d_theta, 0.0);
    p.global_mix = init_mat(dims.d_theta, dims.d_theta);
    p.proj_out = init_mat(dims.d_theta, patch);
    p.b_out.assign(patch, 0.0);
    p.time_embed = Mat(2, dims.d_theta);
    for (double& v : p.time_embed.a) v = 0.5 * rng.gaussian();
    return p;
}

std::vector<double> flatten_params(const DenoiserParams& p) {
    std::vector<double> flat;
    for_each_param(p, [&](const char*, const double* data, size_t n) {
        flat.insert(flat.end(), data, data + n);
    });
    return flat;
}

DenoiserParams unflatten_params(const DenoiserDims& dims, const std::vector<double>& flat) {
    Rng dummy(0);
    DenoiserParams p = init_denoiser_params(dims, dummy);
    size_t off = 0;
    for_each_param(p, [&](const char*, double* data, size_t n) {
        if (off + n > flat.size()) throw input_error("unflatten_params: buffer too small");
        for (size_t i = 0; i < n; ++i) data[i] = flat[off + i];
        off += n;
    });
    if (off != flat.size()) throw input_error("unflatten_params: buffer size mismatch");
    return p;
}

LatentGrid add_noise(const LatentGrid& z, double sigma, const LatentGrid& noise) {
    if (z.h != noise.h || z.w != noise.w || z.dz != noise.dz)
        throw input_error("add_noise: shape mismatch");
    if (sigma < 0 || sigma > 1) throw input_error("add_noise: sigma outside [0, 1]");
    LatentGrid out(z.h, z.w, z.dz);
    for (size_t i = 0; i < z.v.size(); ++i) out.v[i] = (1.0 - sigma) * z.v[i] + sigma * noise.v[i];
    return out;
}

Mat pack_patches(const LatentGrid& z) {
    if (z.h % 2 != 0 || z.w % 2 != 0) throw input_error("pack_patches: H and W must be even");
    size_t tr = z.h / 2, tc = z.w / 2;
    Mat out(tr * tc, 4 * z.dz);
    for (size_t r = 0; r < tr; ++r) {
        for (size_t c = 0; c < tc; ++c) {
            double* o = out.row(r * tc + c);
            for (size_t d = 0; d < z.dz; ++d) {
                o[0 * z.dz + d] = z.at(2 * r, 2 * c, d);
                o[1 * z.dz + d] = z.at(2 * r, 2 * c + 1, d);
                o[2 * z.dz + d] = z.at(2 * r + 1, 2 * c, d);
                o[3 * z.dz + d] = z.at(2 * r + 1, 2 * c + 1, d);
            }
        }
    }
    return out;
}

LatentGrid unpack_patches(const Mat& tokens, size_t h, size_t w, size_t dz) {
    size_t tr = h / 2, tc = w / 2;
    if (tokens.rows != tr * tc || tokens.cols != 4 * dz)
        throw input_error("unpack_patches: token shape mismatch");
    LatentGrid z(h, w, dz);
    for (size_t r = 0; r < tr; ++r) {
        for (size_t c = 0; c < tc; ++c) {
            const double* o = tokens.row(r * tc + c);
            for (size_t d = 0; d < dz; ++d) {
                z.at(2 * r, 2 * c, d) = o[0 * dz + d];
                z.at(2 * r, 2 * c + 1, d) = o[1 * dz + d];
                z.at(2 * r + 1, 2 * c, d) = o[2 * dz + d];
                z.at(2 * r + 1, 2 * c + 1, d) = o[3 * dz + d];
            }
        }
    }
    return z;
}

Mat build_conditioning(const Mat& V, const Mat& U, const DenoiserParams& params,
                       size_t src_rows, size_t src_cols, size_t dst_rows, size_t dst_cols,
                       CondCache* cache) {
    if (V.rows != src_rows * src_cols || U.rows != V.rows || U.cols != 4)
        throw input_error("build_conditioning: V/U shape mismatch");
    size_t d_h = params.code_linear.cols;

    CondCache local;
    CondCache& cc = cache ? *cache : local;
    affine(V, params.code_linear, params.b_code, cc.code_a);
    cc.code_avg = neighbor_average(cc.code_a, src_rows, src_cols);
    affine(cc.code_avg, params.code_mix, params.b_mix, cc.code_hc);
    tanh_inplace(cc.code_hc);
    cc.row_map = nn_axis_map(src_rows, dst_rows);
    cc.col_map = nn_axis_map(src_cols, dst_cols);

    auto rb = bilin_axis_map(src_rows, dst_rows);
    auto cb = bilin_axis_map(src_cols, dst_cols);

    Mat C(dst_rows * dst_cols, d_h + 4);
    for (size_t r = 0; r < dst_rows; ++r) {
        for (size_t c = 0; c < dst_cols; ++c) {
            double* o = C.row(r * dst_cols + c);
            const double* hc = cc.code_hc.row(cc.row_map[r] * src_cols + cc.col_map[c]);
            for (size_t f = 0; f < d_h; ++f) o[f] = hc[f];
            const BilinAxis& br = rb[r];
            const BilinAxis& bc = cb[c];
            const double* u00 = U.row(br.i0 * src_cols + bc.i0);
            const double* u01 = U.row(br.i0 * src_cols + bc.i1);
            const double* u10 = U.row(br.i1 * src_cols + bc.i0);
            const double* u11 = U.row(br.i1 * src_cols + bc.i1);
            for (size_t f = 0; f < 4; ++f)
                o[d_h + f] = (1 - br.w1) * (1 - bc.w1) * u00[f] + (1 - br.w1) * bc.w1 * u01[f] +
                             br.w1 * (1 - bc.w1) * u10[f] + br.w1 * bc.w1 * u11[f];
        }
    }
    return C;
}

LatentGrid denoiser_forward(const LatentGrid& z_noisy, const Mat& C, double t,
                            const DenoiserParams& params, bool linear_mode,
                            ForwardCache* cache) {
    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;

    fc.x = pack_patches(z_noisy);
    if (fc.x.rows != C.rows) throw input_error("denoiser_forward: token count != C rows");
    size_t d_theta = params.body_w1.rows;

    Mat h_img, h_cond;
    affine(fc.x, params.proj_img, params.b_img, h_img);
    affine(C, params.proj_cond, params.b_cond, h_cond);
    double st = std::sin(kTwoPi * t), ct = std::cos(kTwoPi * t);
    fc.h_in = h_img;
    for (size_t r = 0; r < fc.h_in.rows; ++r) {
        double* o = fc.h_in.row(r);
        const double* hc = h_cond.row(r);
        for (size_t q = 0; q < d_theta; ++q)
            o[q] += hc[q] + st * params.time_embed.at(0, q) + ct * params.time_embed.at(1, q);
    }

    affine(fc.h_in, params.body_w1, params.b1, fc.h1);
    if (!linear_mode) tanh_inplace(fc.h1);

    fc.mean_h1.assign(d_theta, 0.0);
    for (size_t r = 0; r < fc.h1.rows; ++r)
        for (size_t q = 0; q < d_theta; ++q) fc.mean_h1[q] += fc.h1.at(r, q);
    for (double& v : fc.mean_h1) v /= static_cast<double>(fc.h1.rows);
    fc.g.assign(d_theta, 0.0);
    for (size_t p = 0; p < d_theta; ++p)
        for (size_t q = 0; q < d_theta; ++q) fc.g[q] += fc.mean_h1[p] * params.global_mix.at(p, q);

    Mat h1g = fc.h1;
    for (size_t r = 0; r < h1g.rows; ++r) {
        double* o = h1g.row(r);
        for (size_t q = 0; q < d_theta; ++q) o[q] += fc.g[q];
    }
    affine(h1g, params.body_w2, params.b2, fc.h2);
    if (!linear_mode) tanh_inplace(fc.h2);

    Mat y;
    affine(fc.h2, params.proj_out, params.b_out, y);
    return unpack_patches(y, z_noisy.h, z_noisy.w, z_noisy.dz);
}

double v_pred_loss(const LatentGrid& v_hat, const LatentGrid& noise, const LatentGrid& z,
                   double w_t) {
    if (v_hat.v.size() != noise.v.size() || v_hat.v.size() != z.v.size())
        throw input_error("v_pred_loss: shape mismatch");
    if (!(w_t > 0)) throw input_error("v_pred_loss: w_t must be > 0");
    double s = 0;
    for (size_t i = 0; i < v_hat.v.size(); ++i) {
        double r = v_hat.v[i] - (noise.v[i] - z.v[i]);
        s += r * r;
    }
    return w_t * w_t * s / static_cast<double>(v_hat.v.size());
}

namespace {

// Shared backward core over the denoiser body; fills every gradient that does
// not flow through build_conditioning and returns dL/dC.
Mat denoiser_backward_core(const LatentGrid& z_noisy, const Mat& C, double t,
                           const DenoiserParams& params, const LatentGrid& noise,
                           const LatentGrid& z, double w_t, bool linear_mode, double& loss_out,
                           DenoiserParams& g) {
    ForwardCache fc;
    LatentGrid v_hat = denoiser_forward(z_noisy, C, t, params, linear_mode, &fc);
    loss_out = v_pred_loss(v_hat, noise, z, w_t);

    size_t d_theta = params.body_w1.rows;
    size_t tokens = fc.h1.rows;
    double scale = 2.0 * w_t * w_t / static_cast<double>(v_hat.v.size());

    LatentGrid res(z_noisy.h, z_noisy.w, z_noisy.dz);
    for (size_t i = 0; i < res.v.size(); ++i)
        res.v[i] = scale * (v_hat.v[i] - (noise.v[i] - z.v[i]));
    Mat d_y = pack_patches(res);  // pack is the transpose of unpack

    g.proj_out = matmul_at_b(fc.h2, d_y);
    g.b_out = colsum(d_y);
    Mat d_h2 = matmul_b_wt(d_y, params.proj_out);
    if (!linear_mode)
        for (size_t i = 0; i < d_h2.a.size(); ++i)
            d_h2.a[i] *= 1.0 - fc.h2.a[i] * fc.h2.a[i];

    Mat h1g = fc.h1;
    for (size_t r = 0; r < tokens; ++r)
        for (size_t q = 0; q < d_theta; ++q) h1g.at(r, q) += fc.g[q];
    g.body_w2 = matmul_at_b(h1g, d_h2);
    g.b2 = colsum(d_h2);
    Mat d_sum = matmul_b_wt(d_h2, params.body_w2);  // gradient on (h1 + g)

    std::vector<double> d_g = colsum(d_sum);
    g.global_mix = Mat(d_theta, d_theta);
    for (size_t p = 0; p < d_theta; ++p)
        for (size_t q = 0; q < d_theta; ++q) g.global_mix.at(p, q) = fc.mean_h1[p] * d_g[q];
    std::vector<double> d_mean(d_theta, 0.0);
    for (size_t p = 0; p < d_theta; ++p)
        for (size_t q = 0; q < d_theta; ++q) d_mean[p] += params.global_mix.at(p, q) * d_g[q];

    Mat d_h1 = d_sum;
    for (size_t r = 0; r < tokens; ++r)
        for (size_t q = 0; q < d_theta; ++q)
            d_h1.at(r, q) += d_mean[q] / static_cast<double>(tokens);
    if (!linear_mode)
        for (size_t i = 0; i < d_h1.a.size(); ++i)
            d_h1.a[i] *= 1.0 - fc.h1.a[i] * fc.h1.a[i];

    g.body_w1 = matmul_at_b(fc.h_in, d_h1);
    g.b1 = colsum(d_h1);
    Mat d_hin = matmul_b_wt(d_h1, params.body_w1);

    g.proj_img = matmul_at_b(fc.x, d_hin);
    g.b_img = colsum(d_hin);
    g.proj_cond = matmul_at_b(C, d_hin);
    g.b_cond = colsum(d_hin);

    std::vector<double> d_e = colsum(d_hin);
    g.time_embed = Mat(2, d_theta);
    double st = std::sin(kTwoPi * t), ct = std::cos(kTwoPi * t);
    for (size_t q = 0; q < d_theta; ++q) {
        g.time_embed.at(0, q) = st * d_e[q];
        g.time_embed.at(1, q) = ct * d_e[q];
    }

    return matmul_b_wt(d_hin, params.proj_cond);  // dL/dC
}

}  // namespace

BackwardResult backward(const LatentGrid& z_noisy, const Mat& C, double t,
                        const DenoiserParams& params, const LatentGrid& noise,
                        const LatentGrid& z, double w_t, bool linear_mode) {
    BackwardResult out;
    out.grads = zero_like(params);
    denoiser_backward_core(z_noisy, C, t, params, noise, z, w_t, linear_mode, out.loss,
                           out.grads);
    // C is a fixed input here, so the conditioning-encoder fields keep their
    // zero gradients.
    return out;
}

BackwardResult backward_through_conditioning(const LatentGrid& z_noisy, const Mat& V,
                                             const Mat& U, size_t src_rows, size_t src_cols,
                                             double t, const DenoiserParams& params,
                                             const LatentGrid& noise, const LatentGrid& z,
                                             double w_t) {
    size_t dst_rows = z_noisy.h / 2, dst_cols = z_noisy.w / 2;
    CondCache cc;
    Mat C = build_conditioning(V, U, params, src_rows, src_cols, dst_rows, dst_cols, &cc);

    BackwardResult out;
    out.grads = zero_like(params);
    Mat d_c = denoiser_backward_core(z_noisy, C, t, params, noise, z, w_t, false, out.loss,
                                     out.grads);

    // Nearest-neighbor resample transposes to scatter-add onto the source grid.
    size_t d_h = params.code_linear.cols;
    Mat d_hc(src_rows * src_cols, d_h, 0.0);
    for (size_t r = 0; r < dst_rows; ++r)
        for (size_t c = 0; c < dst_cols; ++c) {
            const double* d = d_c.row(r * dst_cols + c);
            double* s = d_hc.row(cc.row_map[r] * src_cols + cc.col_map[c]);
            for (size_t f = 0; f < d_h; ++f) s[f] += d[f];
        }
    // (The bilinear U path carries no parameters, so its gradient stops here.)

    Mat d_q = d_hc;
    for (size_t i = 0; i < d_q.a.size(); ++i)
        d_q.a[i] *= 1.0 - cc.code_hc.a[i] * cc.code_hc.a[i];
    out.grads.code_mix = matmul_at_b(cc.code_avg, d_q);
    out.grads.b_mix = colsum(d_q);
    Mat d_avg = matmul_b_wt(d_q, params.code_mix);
    Mat d_a = neighbor_average_transpose(d_avg, src_rows, src_cols);
    out.grads.code_linear = matmul_at_b(V, d_a);
    out.grads.b_code = colsum(d_a);
    return out;
}

TrainResult train(const std::vector<TrainItem>& dataset, size_t item_rows, size_t item_cols,
                  const TrainConfig& config) {
    if (dataset.empty()) throw input_error("train: empty dataset");
    Rng rng(config.seed);
    TrainResult res;
    res.params = init_denoiser_params(config.dims, rng);
    DenoiserParams momentum = zero_like(res.params);
    double beta = config.momentum;
    res.loss_trace.reserve(static_cast<size_t>(config.steps));

    for (int step = 0; step < config.steps; ++step) {
        DenoiserParams grad_acc = zero_like(res.params);
        double loss_acc = 0;
        for (int b = 0; b < config.batch; ++b) {
            const TrainItem& item = dataset[rng.below(dataset.size())];
            double t = rng.uniform();
            LatentGrid noise(item.z.h, item.z.w, item.z.dz);
            for (double& v : noise.v) v = rng.gaussian();
            LatentGrid z_noisy = add_noise(item.z, t, noise);
            BackwardResult bw = backward_through_conditioning(
                z_noisy, item.V, item.U, item_rows, item_cols, t, res.params, noise, item.z, 1.0);
            loss_acc += bw.loss;
            std::vector<std::pair<double*, size_t>> acc_views, g_views;
            for_each_param(grad_acc, [&](const char*, double* d, size_t n) {
                acc_views.push_back({d, n});
            });
            for_each_param(bw.grads, [&](const char*, double* d, size_t n) {
                g_views.push_back({d, n});
            });
            for (size_t f = 0; f < acc_views.size(); ++f)
                for (size_t i = 0; i < acc_views[f].second; ++i)
                    acc_views[f].first[i] += g_views[f].first[i] / config.batch;
        }
        double loss = loss_acc / config.batch;
        if (!std::isfinite(loss))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
        res.loss_trace.push_back(loss);

        std::vector<std::pair<double*, size_t>> p_views, m_views, g_views;
        for_each_param(res.params, [&](const char*, double* d, size_t n) {
            p_views.push_back({d, n});
        });
        for_each_param(momentum, [&](const char*, double* d, size_t n) {
            m_views.push_back({d, n});
        });
        for_each_param(grad_acc, [&](const char*, double* d, size_t n) {
            g_views.push_back({d, n});
        });
        for (size_t f = 0; f < p_views.size(); ++f)
            for (size_t i = 0; i < p_views[f].second; ++i) {
                m_views[f].first[i] =
                    beta * m_views[f].first[i] + (1.0 - beta) * g_views[f].first[i];
                p_views[f].first[i] -= config.step_size * m_views[f].first[i];
            }
    }
    return res;
}

LatentGrid sample_with(const VelocityFn& velocity, const NoiseSchedule& schedule, uint64_t seed,
                       size_t h, size_t w, size_t dz) {
    if (schedule.steps < 1) throw input_error("sample: steps must be >= 1");
    Rng rng(seed);
    LatentGrid z(h, w, dz);
    for (double& v : z.v) v = rng.gaussian();
    for (int i = 0; i < schedule.steps; ++i) {
        double s0 = schedule.sigma(i), s1 = schedule.sigma(i + 1);
        LatentGrid v = velocity(z, s0);
        for (size_t j = 0; j < z.v.size(); ++j) z.v[j] -= (s0 - s1) * v.v[j];
    }
    return z;
}

LatentGrid sample(const Mat& C, const NoiseSchedule& schedule, const DenoiserParams& params,
                  uint64_t seed, size_t h, size_t w, size_t dz) {
    return sample_with(
        [&](const LatentGrid& z, double sigma) {
            return denoiser_forward(z, C, sigma, params, false, nullptr);
        },
        schedule, seed, h, w, dz);
}

}  // namespace l2c
