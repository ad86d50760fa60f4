#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2c {

// Input/validation failures (bad files, bad shapes, bad flags) are reported as
// input_error so the CLI can map them to exit code 2; everything else is a
// plain runtime_error (exit code 1).
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

// Dense row-major tensor. Computation is always f64; `dtype` remembers the
// on-disk payload precision so write(read(path)) is byte-identical.
struct Tensor {
    std::vector<uint64_t> dims;
    std::vector<double> data;
    Dtype dtype = Dtype::f64;

    size_t size() const {
        size_t n = 1;
        for (uint64_t d : dims) n *= static_cast<size_t>(d);
        return dims.empty() ? 0 : n;
    }
};

// Row-major matrix of doubles; the common in-memory shape for logit grids,
// probability grids, codebooks, feature grids, V and U.
struct Mat {
    size_t rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& at(size_t r, size_t c) { return a[r * cols + c]; }
    double at(size_t r, size_t c) const { return a[r * cols + c]; }
    double* row(size_t r) { return a.data() + r * cols; }
    const double* row(size_t r) const { return a.data() + r * cols; }
};

using LogitGrid = Mat;  // N x K scores
using ProbGrid = Mat;   // N x K rows on the simplex

inline Mat tensor_to_mat(const Tensor& t) {
    if (t.dims.size() != 2)
        throw input_error("expected a 2-d tensor, got ndim=" + std::to_string(t.dims.size()));
    Mat m(static_cast<size_t>(t.dims[0]), static_cast<size_t>(t.dims[1]));
    m.a = t.data;
    return m;
}

inline Tensor mat_to_tensor(const Mat& m, Dtype dt = Dtype::f64) {
    Tensor t;
    t.dims = {m.rows, m.cols};
    t.data = m.a;
    t.dtype = dt;
    return t;
}

}  // namespace l2c
