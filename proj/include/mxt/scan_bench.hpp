#pragma once

#include <cstdint>
#include <vector>

#include "mxt/ssm.hpp"

namespace mxt {

// Random scan inputs with valid ranges (delta > 0, a < 0).
template <class T>
struct ScanInputs {
    ssm::ScanProblem<T> problem;
    std::vector<T> x, delta, a, b, c, skip;

    ScanInputs(std::size_t batch, std::size_t length, std::size_t channels, std::size_t state,
               std::uint64_t seed, bool with_skip = false);
    ScanInputs(const ScanInputs&) = delete;
    ScanInputs& operator=(const ScanInputs&) = delete;
};

struct ScanBenchRow {
    std::size_t length = 0, state = 0, chunk = 0;
    double sequential_ms = 0, chunked_ms = 0;  // medians
    double max_abs_diff = 0;
};

double median(std::vector<double> values);

// Checks chunked against sequential output (max_abs_diff), then times both.
ScanBenchRow scan_bench_row(std::size_t length, std::size_t state, std::size_t chunk,
                            std::size_t repeats, std::uint64_t seed, std::size_t channels = 16);

// Median wall time of the sequential scan in milliseconds.
double time_sequential_scan(std::size_t length, std::size_t state, std::size_t channels,
                            std::size_t repeats, std::uint64_t seed);

}  // namespace mxt
