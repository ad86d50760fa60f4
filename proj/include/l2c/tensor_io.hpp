#pragma once

#include <array>
#include <string>

#include "l2c/distribution.hpp"
#include "l2c/tensor.hpp"

namespace l2c {

/*
 * TensorFile binary layout (little-endian throughout):
 *
 *   offset  size          field
 *   0       8             magic "L2CTENS0"
 *   8       1             dtype: 0 = f32, 1 = f64
 *   9       4             ndim (u32), must be in [1, 4]
 *   13      8 * ndim      dims (u64 each), product > 0
 *   ...     elem * ndim?  payload: row-major scalars of `dtype`
 *
 * The payload size must equal product(dims) * sizeof(dtype) exactly; short
 * files are rejected as truncated, longer files as trailing garbage.
 */

inline constexpr std::array<char, 8> kTensorMagic = {'L', '2', 'C', 'T', 'E', 'N', 'S', '0'};

void write_tensor(const std::string& path, const Tensor& tensor);
Tensor read_tensor(const std::string& path);

// Calibration search configuration. Ranges are {lo, hi}.
struct StatsConfig {
    TargetStats target_stats;
    double weights[4] = {1.0, 0.25, 0.25, 0.35};
    double a_range[2] = {1.0, 60.0};
    double alpha_range[2] = {0.5, 2.0};
    double eps_range[2] = {0.0, 0.05};
    double b_range[2] = {-0.10, 0.10};
    double entropy_tolerance = 0.02;
    int alpha_points = 16;
    int eps_points = 11;
    int b_points = 21;
};

// Parse a JSON config document; missing fields keep the defaults above.
// Rejects negative weights, inverted ranges and non-positive tolerances.
StatsConfig read_stats_config(const std::string& path);
StatsConfig parse_stats_config(const std::string& json_text);

}  // namespace l2c
