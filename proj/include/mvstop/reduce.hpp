#pragma once

// Deterministic reductions. Results never depend on thread count: callers
// fill a buffer in index order (possibly in parallel) and reduce it here.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace mvstop {

/// Pairwise summation in index order; fixed association for a given length.
inline double pairwise_sum(std::span<const double> xs) {
    constexpr std::size_t kLeaf = 32;
    if (xs.size() <= kLeaf) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// Correctly rounded sum (Shewchuk partials with a round-half-even fixup).
/// The result is independent of summation order.
class ExactAccumulator {
public:
    void add(double x) {
        std::size_t i = 0;
        for (double y : partials_) {
            if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
            const double hi = x + y;
            const double lo = y - (hi - x);
            if (lo != 0.0) partials_[i++] = lo;
            x = hi;
        }
        partials_.resize(i);
        partials_.push_back(x);
    }

    double result() const {
        if (partials_.empty()) return 0.0;
        std::size_t n = partials_.size();
        double hi = partials_[--n];
        double lo = 0.0;
        while (n > 0) {
            const double x = hi;
            const double y = partials_[--n];
            hi = x + y;
            const double yr = hi - x;
            lo = y - yr;
            if (lo != 0.0) break;
        }
        if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
            const double y = lo * 2.0;
            const double x = hi + y;
            if (y == x - hi) hi = x;
        }
        return hi;
    }

private:
    std::vector<double> partials_;
};

inline double exact_sum(std::span<const double> xs) {
    ExactAccumulator acc;
    for (double x : xs) acc.add(x);
    return acc.result();
}

struct SampleMoments {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Mean and standard error of the mean, computed about the first sample so
/// that a constant sample yields that constant exactly with zero error.
inline SampleMoments sample_moments(std::span<const double> xs) {
    SampleMoments m;
    if (xs.empty()) return m;
    const double pivot = xs.front();
    const auto n = static_cast<double>(xs.size());
    std::vector<double> dev(xs.size());
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        dev[i] = xs[i] - pivot;
        sq[i] = dev[i] * dev[i];
    }
    const double mean_dev = pairwise_sum(dev) / n;
    m.mean = pivot + mean_dev;
    if (xs.size() > 1) {
        const double var = (pairwise_sum(sq) - n * mean_dev * mean_dev) / (n - 1.0);
        m.std_error = std::sqrt(std::max(var, 0.0) / n);
    }
    return m;
}

}  // namespace mvstop
