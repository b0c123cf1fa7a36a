#pragma once

#include <cstdint>
#include <vector>

namespace pfp {

/// Per-item output Gaussians of a classifier head: mean and variance of
/// each logit, row-major [items, classes].
struct LogitDistribution {
    std::int64_t items = 0;
    std::int64_t classes = 0;
    std::vector<float> mean;
    std::vector<float> variance;
};

}  // namespace pfp
