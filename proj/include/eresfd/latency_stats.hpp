// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

namespace eresfd {

struct LatencyStats {
    double median_ms = 0.0;
    double mean_ms = 0.0;
    double p95_ms = 0.0;
    double stddev_ms = 0.0;
    int iters = 0;
};

/// Median / mean / nearest-rank p95 / population stddev of raw samples.
LatencyStats summarize(std::span<const double> samples_ms);

}  // namespace eresfd
