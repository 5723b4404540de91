#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace deqlab {

/// Welford accumulator. `merge` combines partial sums (Chan et al.), so seed
/// batches can be reduced in any grouping; callers that need bit-identical
/// output reduce in a fixed order.
class RunningStats {
public:
    void add(double x) noexcept;
    void merge(const RunningStats& other) noexcept;

    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept;  // unbiased
    double std_error() const noexcept;

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct Summary {
    std::size_t count = 0;
    double mean = 0.0;
    double std_error = 0.0;
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Linear-interpolation quantile (type 7) of an unsorted sample.
double quantile(std::vector<double> values, double q);

/// Full summary; an empty sample yields count 0 and NaN statistics.
Summary summarize(const std::vector<double>& values);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index runs
/// exactly once; the first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace deqlab
