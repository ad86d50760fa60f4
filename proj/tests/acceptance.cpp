// Acceptance gate: prints one PASS/FAIL line per criterion C1-C8 and exits
// with the number of failures. argv[1] must be the path to the l2c binary.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "l2c/calibration.hpp"
#include "l2c/distribution.hpp"
#include "l2c/lcdm.hpp"
#include "l2c/otsu.hpp"
#include "l2c/rng.hpp"
#include "l2c/synth.hpp"
#include "l2c/tensor_io.hpp"
#include "l2c/toy_decoder.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_bin;

struct check_fail : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void req(bool cond, const std::string& msg) {
    if (!cond) throw check_fail(msg);
}

std::vector<double> random_simplex(l2c::Rng& rng, size_t k) {
    std::vector<double> p(k);
    double sum = 0;
    for (auto& v : p) {
        v = rng.uniform_pos();
        sum += v;
    }
    for (auto& v : p) v /= sum;
    return p;
}

// Exhaustive Otsu split search, written independently of the library: sort a
// copy descending, then for every split accumulate the head mass afresh.
l2c::OtsuReport naive_otsu(const double* probs, size_t k, l2c::OtsuWeight weight) {
    std::vector<double> s(probs, probs + k);
    std::sort(s.begin(), s.end(), std::greater<double>());
    double total = 0;
    for (double v : s) total += v;

    l2c::OtsuReport best;
    double best_var = -1;
    for (size_t r = 1; r <= k - 1; ++r) {
        double head = 0;
        for (size_t i = 0; i < r; ++i) head += s[i];
        double tail = total - head;
        double mu0 = head / static_cast<double>(r);
        double mu1 = tail / static_cast<double>(k - r);
        double w0, w1;
        if (weight == l2c::OtsuWeight::count) {
            w0 = static_cast<double>(r) / static_cast<double>(k);
            w1 = 1.0 - w0;
        } else {
            w0 = head;
            w1 = tail;
        }
        double d = mu0 - mu1;
        double var = w0 * w1 * d * d;
        if (r == 1 || var > best_var) {
            best_var = var;
            best.threshold_rank = static_cast<int>(r);
            best.threshold_prob = s[r - 1];
            best.head_mass = head;
            best.between_class_variance = var;
        }
    }
    return best;
}

int run_cli(const std::string& args) {
    std::string cmd = "\"" + g_bin + "\" " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    req(is.good(), "cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// C1: flat-softmax closed form at K=16384.
void c1() {
    const size_t k = 16384;
    std::vector<double> logits(k, 0.0), probs(k);
    logits[7] = 1.0;
    l2c::softmax_row(logits.data(), k, 1.0, probs.data());
    double want = std::exp(1.0) / (std::exp(1.0) + static_cast<double>(k - 1));
    l2c::TokenStats st = l2c::token_stats(probs.data(), k);
    req(std::abs(st.top1 - want) / want <= 1e-9, "top1 misses e/(e+16383)");
    req(st.norm_entropy > 0.99, "normalized entropy not > 0.99");
}

// C2: Otsu equals the exhaustive split search exactly.
void c2() {
    l2c::Rng rng(202);
    for (int i = 0; i < 500; ++i) {
        size_t k = 2 + (static_cast<size_t>(i) * 37) % 255;
        std::vector<double> p;
        if (i % 3 == 0) {
            p = random_simplex(rng, k);
        } else if (i % 3 == 1) {
            p.resize(k);
            double beta = 0.5 + rng.uniform(), sum = 0;
            for (size_t j = 0; j < k; ++j) {
                p[j] = std::pow(static_cast<double>(j + 1), -beta);
                sum += p[j];
            }
            for (auto& v : p) v /= sum;
            for (size_t j = k; j > 1; --j) std::swap(p[j - 1], p[rng.below(j)]);
        } else {
            p.assign(k, 0.01);
            p[rng.below(k)] = 1.0;
            double sum = 0;
            for (double v : p) sum += v;
            for (auto& v : p) v /= sum;
        }
        for (l2c::OtsuWeight w : {l2c::OtsuWeight::count, l2c::OtsuWeight::mass}) {
            l2c::OtsuReport got = l2c::otsu_threshold(p.data(), k, w);
            l2c::OtsuReport want = naive_otsu(p.data(), k, w);
            req(got.threshold_rank == want.threshold_rank, "rank mismatch");
            req(got.head_mass == want.head_mass, "head mass mismatch");
            req(got.threshold_prob == want.threshold_prob, "threshold prob mismatch");
            req(got.between_class_variance == want.between_class_variance,
                "variance mismatch");
        }
    }
}

// C3: sharp/flat threshold-rank separation and its repair by calibration.
void c3() {
    const size_t n = 200, k = 16384;
    l2c::LogitGrid sharp = l2c::synth_corpus(l2c::SynthKind::sharp, n, k, 11);
    l2c::LogitGrid flat = l2c::synth_corpus(l2c::SynthKind::flat, n, k, 12);

    l2c::ProbGrid sharp_p = l2c::softmax_grid(sharp, 1.0);
    l2c::OtsuGridReport sharp_rep = l2c::otsu_report_grid(sharp_p);
    req(sharp_rep.mean_threshold_rank <= 4.0,
        "sharp mean rank " + std::to_string(sharp_rep.mean_threshold_rank) + " > 4");

    l2c::OtsuGridReport flat_rep = l2c::otsu_report_grid(l2c::softmax_grid(flat, 1.0));
    req(flat_rep.mean_threshold_rank >= 1000.0,
        "flat mean rank " + std::to_string(flat_rep.mean_threshold_rank) + " < 1000");

    l2c::StatsConfig cfg;
    cfg.target_stats = l2c::corpus_stats({sharp_p});
    l2c::SearchResult res = l2c::calibrate_search({flat}, cfg);
    l2c::OtsuGridReport cal_rep = l2c::otsu_report_grid(l2c::apply_calibration(flat, res.params));
    req(cal_rep.mean_threshold_rank < 10.0,
        "calibrated mean rank " + std::to_string(cal_rep.mean_threshold_rank) + " >= 10");
}

// C4: self-calibration recovers the statistics of a known scale.
void c4() {
    l2c::LogitGrid cosine = l2c::synth_corpus(l2c::SynthKind::cosine, 40, 512, 902);
    std::vector<l2c::LogitGrid> corpus = {cosine};
    l2c::CalibrationParams truth;
    truth.scale = 25.0;
    l2c::StatsConfig cfg;
    cfg.target_stats = l2c::calibrated_corpus_stats(corpus, truth);

    l2c::SearchResult res = l2c::calibrate_search(corpus, cfg);
    req(!res.non_bracketed, "entropy target not bracketed");
    l2c::TargetStats got = l2c::calibrated_corpus_stats(corpus, res.params);
    req(std::abs(got.mean_entropy - cfg.target_stats.mean_entropy) <= 0.02,
        "recovered mean entropy off by more than 0.02");
    for (size_t i = 1; i < res.trace.size(); ++i)
        req(res.trace[i].loss <= res.trace[i - 1].loss, "stage objective increased");
}

// C5: LCDM against triple-loop and direct per-row oracles; sharp limit.
void c5() {
    l2c::Rng rng(505);
    for (int i = 0; i < 100; ++i) {
        size_t k = 2 + rng.below(63);   // [2, 64]
        size_t d = 1 + rng.below(16);   // [1, 16]
        size_t n = 1 + rng.below(5);
        l2c::ProbGrid P(n, k);
        for (size_t r = 0; r < n; ++r) {
            std::vector<double> row = random_simplex(rng, k);
            std::copy(row.begin(), row.end(), P.row(r));
        }
        l2c::Codebook E(k, d);
        for (auto& v : E.a) v = rng.gaussian();

        l2c::CodeVectorGrid V = l2c::weighted_code_vectors(P, E);
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < d; ++c) {
                double want = 0;
                for (size_t j = 0; j < k; ++j) want += P.at(r, j) * E.at(j, c);
                req(std::abs(V.at(r, c) - want) <= 1e-10, "V misses the triple loop");
            }

        l2c::UncertaintyGrid U = l2c::uncertainty_grid(P);
        for (size_t r = 0; r < n; ++r) {
            const double* p = P.row(r);
            std::vector<double> s(p, p + k);
            std::sort(s.begin(), s.end(), std::greater<double>());
            double h_nat = 0;
            for (size_t j = 0; j < k; ++j)
                if (p[j] > 0) h_nat -= p[j] * std::log(p[j]);
            int ku = static_cast<int>(std::lround(std::exp(h_nat)));
            int hi = static_cast<int>(std::max<size_t>(8, std::min<size_t>(64, k)));
            ku = std::clamp(ku, 8, hi);
            double mass = 0;
            for (int j = 0; j < std::min<int>(ku, static_cast<int>(k)); ++j) mass += s[j];
            size_t star = 0;
            for (size_t j = 1; j < k; ++j)
                if (p[j] > p[star]) star = j;
            double tail = 0;
            for (size_t j = 0; j < k; ++j)
                if (j != star && p[j] > 0) tail -= p[j] * std::log(p[j]);
            if (k > 2) tail /= std::log(static_cast<double>(k - 1));
            req(std::abs(U.at(r, 0) - s[0]) <= 1e-12, "U top1");
            req(std::abs(U.at(r, 1) - (s[0] - s[1])) <= 1e-12, "U margin");
            req(std::abs(U.at(r, 2) - mass) <= 1e-12, "U topk mass");
            req(std::abs(U.at(r, 3) - tail) <= 1e-12, "U tail entropy");
        }
    }

    // sharp limit: a = 200 collapses V onto the argmax code vector
    size_t k = 32, d = 8;
    l2c::Codebook E(k, d);
    for (auto& v : E.a) v = rng.gaussian();
    l2c::LogitGrid row(1, k);
    for (size_t j = 0; j < k; ++j) row.at(0, j) = -std::log(static_cast<double>(j + 2));
    row.at(0, 5) = 0.5;  // unambiguous argmax at index 5
    l2c::CalibrationParams sharp;
    sharp.scale = 200.0;
    l2c::LcdmOutput out = l2c::lcdm_pipeline(row, E, sharp);
    double dist = 0;
    for (size_t c = 0; c < d; ++c) {
        double diff = out.code_vectors.at(0, c) - E.at(5, c);
        dist += diff * diff;
    }
    req(std::sqrt(dist) < 1e-3, "sharp limit did not collapse onto e_k*");
}

// C6: gradient check, seeded training, conditioning advantage.
void c6() {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        l2c::DenoiserDims dims;
        dims.d_theta = 8;
        l2c::Rng rng(6000 + seed);
        l2c::DenoiserParams p = l2c::init_denoiser_params(dims, rng);
        l2c::Mat V(16, dims.d), U(16, 4);
        for (auto& v : V.a) v = rng.gaussian();
        for (auto& v : U.a) v = rng.gaussian();
        l2c::LatentGrid z(4, 4, dims.d_z), eps(4, 4, dims.d_z);
        for (auto& v : z.v) v = rng.gaussian();
        for (auto& v : eps.v) v = rng.gaussian();
        double t = rng.uniform();
        l2c::LatentGrid zn = l2c::add_noise(z, t, eps);

        l2c::BackwardResult res =
            l2c::backward_through_conditioning(zn, V, U, 4, 4, t, p, eps, z, 1.0);

        std::vector<std::pair<double*, size_t>> views;
        l2c::DenoiserParams pc = p;
        l2c::for_each_param(pc, [&](const char*, double* d, size_t n) {
            views.push_back({d, n});
        });
        std::vector<std::pair<const double*, size_t>> gviews;
        l2c::for_each_param(
            static_cast<const l2c::DenoiserParams&>(res.grads),
            [&](const char*, const double* d, size_t n) { gviews.push_back({d, n}); });

        auto loss_at = [&]() {
            l2c::Mat C = l2c::build_conditioning(V, U, pc, 4, 4, 2, 2);
            return l2c::v_pred_loss(l2c::denoiser_forward(zn, C, t, pc), eps, z, 1.0);
        };
        const double h = 1e-5;
        for (size_t f = 0; f < views.size(); ++f)
            for (size_t i = 0; i < views[f].second; ++i) {
                double keep = views[f].first[i];
                views[f].first[i] = keep + h;
                double up = loss_at();
                views[f].first[i] = keep - h;
                double dn = loss_at();
                views[f].first[i] = keep;
                double fd = (up - dn) / (2 * h);
                double g = gviews[f].first[i];
                double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
                req(rel < 1e-4, "gradient relative error " + std::to_string(rel));
            }
    }

    // seeded training on the rendering dataset
    l2c::ToyDatasetConfig dc;  // K=32, D=4, 8x8 latent, D_z=2
    l2c::ToyDataset ds = l2c::make_toy_dataset(dc, 1);
    l2c::TrainConfig tc;  // 2000 steps
    tc.seed = 1;
    l2c::TrainResult res = l2c::train(ds.train, dc.rows, dc.cols, tc);
    double first = 0, last = 0;
    for (int i = 0; i < 100; ++i) {
        first += res.loss_trace[i] / 100;
        last += res.loss_trace[res.loss_trace.size() - 100 + i] / 100;
    }
    req(last <= 0.5 * first, "smoothed loss fell by less than 50%");

    // held-out reconstruction: conditioned vs zero conditioning
    l2c::NoiseSchedule sched{20};
    size_t dst = dc.latent_h / 2;
    double mse_cond = 0, mse_zero = 0;
    for (size_t i = 0; i < ds.test.size(); ++i) {
        const l2c::TrainItem& it = ds.test[i];
        l2c::Mat C = l2c::build_conditioning(it.V, it.U, res.params, dc.rows, dc.cols, dst, dst);
        l2c::Mat C0(dst * dst, tc.dims.d_h + 4, 0.0);
        for (uint64_t s = 0; s < 20; ++s) {
            uint64_t seed = 9000 + 37 * s + i;
            l2c::LatentGrid a =
                l2c::sample(C, sched, res.params, seed, dc.latent_h, dc.latent_w, dc.d_z);
            l2c::LatentGrid b =
                l2c::sample(C0, sched, res.params, seed, dc.latent_h, dc.latent_w, dc.d_z);
            for (size_t j = 0; j < a.v.size(); ++j) {
                double da = a.v[j] - it.z.v[j], db = b.v[j] - it.z.v[j];
                mse_cond += da * da;
                mse_zero += db * db;
            }
        }
    }
    req(mse_cond <= 0.5 * mse_zero,
        "conditioned MSE ratio " + std::to_string(mse_cond / mse_zero) + " > 0.5");
}

// C7: oracle-velocity sampler endpoints.
void c7() {
    l2c::Rng rng(707);
    l2c::LatentGrid z0(4, 4, 2);
    for (auto& v : z0.v) v = rng.gaussian();
    auto stub = [&](const l2c::LatentGrid& z, double sigma) {
        l2c::LatentGrid v(z.h, z.w, z.dz);
        for (size_t i = 0; i < z.v.size(); ++i) v.v[i] = (z.v[i] - z0.v[i]) / sigma;
        return v;
    };
    l2c::LatentGrid one = l2c::sample_with(stub, l2c::NoiseSchedule{1}, 5, 4, 4, 2);
    for (size_t i = 0; i < one.v.size(); ++i)
        req(std::abs(one.v[i] - z0.v[i]) <= 1e-12, "one-step recovery misses z0");
    for (int steps : {5, 30}) {
        l2c::LatentGrid s = l2c::sample_with(stub, l2c::NoiseSchedule{steps}, 5, 4, 4, 2);
        for (size_t i = 0; i < s.v.size(); ++i)
            req(std::abs(s.v[i] - one.v[i]) <= 1e-9, "step-count variance above 1e-9");
    }
}

// C8: bit-identical round-trips and byte-identical CLI reruns.
void c8() {
    fs::path root = fs::temp_directory_path() / "l2c_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);
    auto at = [&](const std::string& n) { return (root / n).string(); };

    l2c::Rng rng(808);
    for (l2c::Dtype dt : {l2c::Dtype::f64, l2c::Dtype::f32}) {
        l2c::Tensor t;
        t.dims = {3, 5};
        t.dtype = dt;
        t.data.resize(15);
        for (auto& v : t.data) v = rng.gaussian();
        std::string p1 = at("rt1.t"), p2 = at("rt2.t");
        l2c::write_tensor(p1, t);
        l2c::write_tensor(p2, l2c::read_tensor(p1));
        req(slurp(p1) == slurp(p2), "tensor round-trip not bit-identical");
    }

    l2c::Mat cb(128, 4);
    for (auto& v : cb.a) v = rng.gaussian();
    l2c::write_tensor(at("cb.t"), l2c::mat_to_tensor(cb));
    std::ofstream(at("toy.json")) << R"({
        "seed": 5, "steps": 40,
        "dataset": {"k": 8, "d": 3, "latent_h": 4, "latent_w": 4, "d_z": 2,
                    "rows": 2, "cols": 2, "train_items": 4, "test_items": 2}
    })";

    std::vector<std::string> artifacts = {"sharp.t",  "flat.t",  "report.json", "profile.csv",
                                          "params.json", "v.t",  "u.t",         "toy_params.t",
                                          "trace.csv",   "sample.t"};
    std::vector<int> codes[2];
    for (int run = 0; run < 2; ++run) {
        fs::path dir = root / ("run" + std::to_string(run));
        fs::create_directories(dir);
        auto in = [&](const std::string& n) { return (dir / n).string(); };
        std::vector<int> rc;
        rc.push_back(run_cli("synth --kind sharp --n 30 --k 128 --seed 3 --out " + in("sharp.t")));
        rc.push_back(run_cli("synth --kind flat --n 20 --k 128 --seed 4 --out " + in("flat.t")));
        rc.push_back(run_cli("analyze --input " + in("sharp.t") + " --report " +
                             in("report.json") + " --profile " + in("profile.csv")));
        rc.push_back(run_cli("calibrate --corpus " + in("flat.t") + " --target " +
                             in("report.json") + " --out " + in("params.json")));
        rc.push_back(run_cli("map --logits " + in("flat.t") + " --codebook " + at("cb.t") +
                             " --params " + in("params.json") + " --out-v " + in("v.t") +
                             " --out-u " + in("u.t")));
        rc.push_back(run_cli("toy-train --config " + at("toy.json") + " --out-params " +
                             in("toy_params.t") + " --out-trace " + in("trace.csv")));
        rc.push_back(run_cli("toy-decode --config " + at("toy.json") + " --params " +
                             in("toy_params.t") + " --steps 5 --seed 9 --out " + in("sample.t")));
        codes[run] = rc;
        for (size_t i = 0; i < rc.size(); ++i)
            req(rc[i] == 0 || (i == 3 && rc[i] == 3),
                "command " + std::to_string(i) + " exited " + std::to_string(rc[i]));
    }
    req(codes[0] == codes[1], "exit codes differ between runs");
    for (const std::string& a : artifacts)
        req(slurp((root / "run0" / a).string()) == slurp((root / "run1" / a).string()),
            a + " differs between identical runs");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <path-to-l2c-binary>\n";
        return 64;
    }
    g_bin = argv[1];

    struct Criterion {
        const char* name;
        std::function<void()> fn;
        double budget_s;
    };
    const std::vector<Criterion> table = {
        {"C1", c1, 1.0},  {"C2", c2, 10.0}, {"C3", c3, 60.0},  {"C4", c4, 30.0},
        {"C5", c5, 5.0},  {"C6", c6, 300.0}, {"C7", c7, 1.0},  {"C8", c8, 10.0},
    };

    int failures = 0;
    for (const auto& c : table) {
        auto t0 = std::chrono::steady_clock::now();
        std::string reason;
        try {
            c.fn();
        } catch (const std::exception& e) {
            reason = e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (reason.empty() && secs > c.budget_s)
            reason = "over budget: " + std::to_string(secs) + "s > " +
                     std::to_string(c.budget_s) + "s";
        if (reason.empty()) {
            std::printf("%s PASS (%.2fs)\n", c.name, secs);
        } else {
            std::printf("%s FAIL (%.2fs): %s\n", c.name, secs, reason.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    return failures;
}
