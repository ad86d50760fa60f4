#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "l2c/distribution.hpp"
#include "l2c/otsu.hpp"
#include "l2c/rng.hpp"

namespace {

// brute-force split search; head re-summed from scratch for every split
l2c::OtsuReport naive_otsu(const std::vector<double>& probs, l2c::OtsuWeight weight) {
    std::vector<double> sorted = probs;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    size_t k = sorted.size();
    double total = 0;
    for (double p : sorted) total += p;

    l2c::OtsuReport best;
    bool have = false;
    for (size_t r = 1; r <= k - 1; ++r) {
        double head = 0;
        for (size_t j = 0; j < r; ++j) head += sorted[j];
        double tail = total - head;
        double mu0 = head / static_cast<double>(r);
        double mu1 = tail / static_cast<double>(k - r);
        double w0 = weight == l2c::OtsuWeight::count
                        ? static_cast<double>(r) / static_cast<double>(k)
                        : head;
        double w1 = weight == l2c::OtsuWeight::count ? 1.0 - w0 : tail;
        double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (!have || var > best.between_class_variance) {
            have = true;
            best.between_class_variance = var;
            best.threshold_rank = static_cast<int>(r);
            best.threshold_prob = sorted[r - 1];
            best.head_mass = head;
        }
    }
    return best;
}

std::vector<double> random_simplex(l2c::Rng& rng, size_t k) {
    std::vector<double> p(k);
    double s = 0;
    for (auto& v : p) {
        v = rng.uniform_pos();
        s += v;
    }
    for (auto& v : p) v /= s;
    return p;
}

std::vector<double> sharp_simplex(l2c::Rng& rng, size_t k, double scale) {
    std::vector<double> logits(k);
    for (size_t i = 0; i < k; ++i) logits[i] = -scale * std::log(static_cast<double>(i + 1));
    // random spike location keeps the family non-degenerate
    std::swap(logits[0], logits[rng.below(k)]);
    std::vector<double> p(k);
    l2c::softmax_row(logits.data(), k, 1.0, p.data());
    return p;
}

}  // namespace

TEST_CASE("two dominant equal probabilities split at rank two") {
    std::vector<double> row(16, 0.0);
    row[4] = 0.5;
    row[9] = 0.5;
    l2c::OtsuReport rep = l2c::otsu_threshold(row.data(), row.size(), l2c::OtsuWeight::count);
    CHECK(rep.threshold_rank == 2);
    CHECK(rep.head_mass == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(rep.threshold_prob == 0.5);
    // the mass variant must still agree with its own exhaustive oracle
    l2c::OtsuReport m = l2c::otsu_threshold(row.data(), row.size(), l2c::OtsuWeight::mass);
    l2c::OtsuReport want = naive_otsu(row, l2c::OtsuWeight::mass);
    CHECK(m.threshold_rank == want.threshold_rank);
    CHECK(m.head_mass == want.head_mass);
}

TEST_CASE("uniform rows tie-break to rank one") {
    size_t k = 32;
    std::vector<double> row(k, 1.0 / static_cast<double>(k));
    l2c::OtsuReport rep = l2c::otsu_threshold(row.data(), k, l2c::OtsuWeight::count);
    CHECK(rep.threshold_rank == 1);
    CHECK(rep.head_mass == doctest::Approx(1.0 / static_cast<double>(k)).epsilon(1e-12));
}

TEST_CASE("sharp two-token head over a flat tail splits after the head") {
    // p = (0.22, 0.10, flat remainder) over K=16384
    size_t k = 16384;
    std::vector<double> row(k, 0.68 / static_cast<double>(k - 2));
    row[0] = 0.22;
    row[1] = 0.10;
    l2c::OtsuReport rep = l2c::otsu_threshold(row.data(), k, l2c::OtsuWeight::count);
    CHECK(rep.threshold_rank == 2);
    CHECK(rep.head_mass == doctest::Approx(0.32).epsilon(1e-9));
    // both weightings put the threshold inside the two-token head
    l2c::OtsuReport m = l2c::otsu_threshold(row.data(), k, l2c::OtsuWeight::mass);
    CHECK(m.threshold_rank <= 2);
}

TEST_CASE("otsu requires at least two outcomes") {
    std::vector<double> row = {1.0};
    CHECK_THROWS_AS(l2c::otsu_threshold(row.data(), 1, l2c::OtsuWeight::count),
                    l2c::input_error);
}

TEST_CASE("exhaustive oracle equivalence over five hundred random rows") {
    l2c::Rng rng(21);
    for (int rep = 0; rep < 500; ++rep) {
        size_t k = 2 + rng.below(255);  // K <= 256
        std::vector<double> p;
        // mix flat, sharp and spiky families
        switch (rep % 3) {
            case 0: p = random_simplex(rng, k); break;
            case 1: p = sharp_simplex(rng, k, 1.5); break;
            default: {
                p.assign(k, 0.0);
                size_t spikes = 1 + rng.below(std::min<size_t>(k, 5));
                for (size_t s = 0; s < spikes; ++s) p[rng.below(k)] += 1.0 / spikes;
                double sum = std::accumulate(p.begin(), p.end(), 0.0);
                for (auto& v : p) v /= sum;
            }
        }
        for (auto w : {l2c::OtsuWeight::count, l2c::OtsuWeight::mass}) {
            l2c::OtsuReport got = l2c::otsu_threshold(p.data(), k, w);
            l2c::OtsuReport want = naive_otsu(p, w);
            CHECK(got.threshold_rank == want.threshold_rank);
            CHECK(got.head_mass == want.head_mass);
            CHECK(got.threshold_prob == want.threshold_prob);
            CHECK(got.between_class_variance == want.between_class_variance);
        }
    }
}

TEST_CASE("reports are permutation invariant") {
    l2c::Rng rng(22);
    std::vector<double> p = sharp_simplex(rng, 64, 1.2);
    l2c::OtsuReport base = l2c::otsu_threshold(p.data(), p.size(), l2c::OtsuWeight::count);
    for (int rep = 0; rep < 10; ++rep) {
        // Fisher-Yates with the seeded generator
        std::vector<double> q = p;
        for (size_t i = q.size() - 1; i > 0; --i) std::swap(q[i], q[rng.below(i + 1)]);
        l2c::OtsuReport perm = l2c::otsu_threshold(q.data(), q.size(), l2c::OtsuWeight::count);
        CHECK(perm.threshold_rank == base.threshold_rank);
        CHECK(perm.threshold_prob == base.threshold_prob);
        CHECK(perm.head_mass == base.head_mass);
        CHECK(perm.between_class_variance == base.between_class_variance);
    }
}

TEST_CASE("head invariants hold on random rows") {
    l2c::Rng rng(23);
    for (int rep = 0; rep < 100; ++rep) {
        size_t k = 2 + rng.below(100);
        std::vector<double> p = random_simplex(rng, k);
        l2c::OtsuReport r = l2c::otsu_threshold(p.data(), k, l2c::OtsuWeight::count);
        CHECK(r.threshold_rank >= 1);
        CHECK(r.threshold_rank <= static_cast<int>(k) - 1);
        std::vector<double> sorted = p;
        std::sort(sorted.begin(), sorted.end(), std::greater<double>());
        double head = 0;
        for (int j = 0; j < r.threshold_rank; ++j) head += sorted[j];
        CHECK(std::abs(r.head_mass - head) <= 1e-9);
        CHECK(r.threshold_prob == sorted[r.threshold_rank - 1]);
    }
}

TEST_CASE("sharpening the logits never raises the mean threshold rank") {
    l2c::Rng rng(24);
    size_t n = 40, k = 256;
    l2c::LogitGrid logits(n, k);
    for (size_t r = 0; r < n; ++r) {
        for (size_t c = 0; c < k; ++c)
            logits.at(r, c) = -1.0 * std::log(static_cast<double>(c + 1));
        for (size_t c = k - 1; c > 0; --c) {
            size_t j = rng.below(c + 1);
            std::swap(logits.at(r, c), logits.at(r, j));
        }
    }
    double prev = 1e300;
    for (double a : {1.0, 5.0, 10.0, 30.0}) {
        l2c::LogitGrid scaled = logits;
        for (auto& v : scaled.a) v *= a;
        l2c::OtsuGridReport rep =
            l2c::otsu_report_grid(l2c::softmax_grid(scaled, 1.0), l2c::OtsuWeight::count);
        CHECK(rep.mean_threshold_rank <= prev + 1e-12);
        prev = rep.mean_threshold_rank;
    }
}

TEST_CASE("grid report equals per-row recomputation") {
    l2c::Rng rng(25);
    size_t n = 10, k = 48;
    l2c::ProbGrid grid(n, k);
    for (size_t r = 0; r < n; ++r) {
        std::vector<double> p = random_simplex(rng, k);
        std::copy(p.begin(), p.end(), grid.row(r));
    }
    l2c::OtsuGridReport rep = l2c::otsu_report_grid(grid, l2c::OtsuWeight::count);
    REQUIRE(rep.per_token.size() == n);

    double mrank = 0, mprob = 0, mhead = 0, mtop1 = 0;
    for (size_t r = 0; r < n; ++r) {
        l2c::OtsuReport one = l2c::otsu_threshold(grid.row(r), k, l2c::OtsuWeight::count);
        CHECK(one.threshold_rank == rep.per_token[r].threshold_rank);
        mrank += one.threshold_rank / static_cast<double>(n);
        mprob += one.threshold_prob / static_cast<double>(n);
        mhead += one.head_mass / static_cast<double>(n);
        mtop1 += l2c::token_stats(grid.row(r), k).top1 / static_cast<double>(n);
    }
    CHECK(rep.mean_threshold_rank == doctest::Approx(mrank).epsilon(1e-12));
    CHECK(rep.mean_threshold_prob == doctest::Approx(mprob).epsilon(1e-12));
    CHECK(rep.mean_head_mass == doctest::Approx(mhead).epsilon(1e-12));
    CHECK(rep.mean_top1 == doctest::Approx(mtop1).epsilon(1e-12));
}

TEST_CASE("grid report of identical rows equals the single-row report") {
    std::vector<double> row = {0.55, 0.25, 0.15, 0.05};
    size_t n = 7;
    l2c::ProbGrid grid(n, row.size());
    for (size_t r = 0; r < n; ++r) std::copy(row.begin(), row.end(), grid.row(r));
    l2c::OtsuGridReport rep = l2c::otsu_report_grid(grid, l2c::OtsuWeight::mass);
    l2c::OtsuReport one = l2c::otsu_threshold(row.data(), row.size(), l2c::OtsuWeight::mass);
    CHECK(rep.mean_threshold_rank == doctest::Approx(one.threshold_rank).epsilon(1e-12));
    CHECK(rep.mean_head_mass == doctest::Approx(one.head_mass).epsilon(1e-12));
    CHECK(rep.mean_threshold_prob == doctest::Approx(one.threshold_prob).epsilon(1e-12));
}

TEST_CASE("one-hot rows give rank one and full head mass") {
    l2c::ProbGrid grid(3, 16, 0.0);
    grid.at(0, 2) = 1.0;
    grid.at(1, 9) = 1.0;
    grid.at(2, 15) = 1.0;
    l2c::OtsuGridReport rep = l2c::otsu_report_grid(grid, l2c::OtsuWeight::count);
    CHECK(rep.mean_threshold_rank == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(rep.mean_head_mass == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rank profile of a uniform row is constant") {
    size_t k = 20;
    l2c::ProbGrid grid(1, k, 1.0 / static_cast<double>(k));
    std::vector<double> prof = l2c::rank_profile({grid}, 5);
    REQUIRE(prof.size() == 5);
    for (double v : prof) CHECK(v == doctest::Approx(1.0 / static_cast<double>(k)).epsilon(1e-15));
}

TEST_CASE("rank profile sorts before averaging") {
    l2c::ProbGrid grid(2, 4, 0.0);
    grid.at(0, 0) = 1.0;  // [1,0,0,0]
    grid.at(1, 3) = 1.0;  // [0,0,0,1]
    std::vector<double> prof = l2c::rank_profile({grid}, 2);
    CHECK(prof[0] == 1.0);
    CHECK(prof[1] == 0.0);
}

TEST_CASE("rank profile matches a naive oracle and is monotone") {
    l2c::Rng rng(26);
    size_t n = 100, k = 64;
    l2c::ProbGrid grid(n, k);
    for (size_t r = 0; r < n; ++r) {
        std::vector<double> p = random_simplex(rng, k);
        std::copy(p.begin(), p.end(), grid.row(r));
    }
    int top_n = 30;
    std::vector<double> prof = l2c::rank_profile({grid}, top_n);

    std::vector<double> naive(k, 0.0);
    for (size_t r = 0; r < n; ++r) {
        std::vector<double> sorted(grid.row(r), grid.row(r) + k);
        std::sort(sorted.begin(), sorted.end(), std::greater<double>());
        double rowsum = std::accumulate(sorted.begin(), sorted.end(), 0.0);
        CHECK(std::abs(rowsum - 1.0) <= 1e-9);  // per-row mass before averaging
        for (size_t i = 0; i < k; ++i) naive[i] += sorted[i] / static_cast<double>(n);
    }
    for (int i = 0; i < top_n; ++i) CHECK(std::abs(prof[i] - naive[i]) <= 1e-12);
    for (int i = 1; i < top_n; ++i) CHECK(prof[i] <= prof[i - 1] + 1e-15);

    CHECK_THROWS_AS(l2c::rank_profile({grid}, 0), l2c::input_error);
    CHECK_THROWS_AS(l2c::rank_profile({grid}, static_cast<int>(k) + 1), l2c::input_error);
    CHECK_THROWS_AS(l2c::rank_profile({}, 5), l2c::input_error);
}
