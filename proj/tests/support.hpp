#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mxt/gradcheck.hpp"
#include "mxt/rng.hpp"
#include "mxt/tensor.hpp"

namespace mxt::test {

template <class T = double>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<T> v(numel(s));
    for (auto& e : v) e = static_cast<T>(rng.uniform(lo, hi));
    return Tensor<T>(std::move(s), std::move(v));
}

template <class A, class B>
double max_abs_diff(const A& a, const B& b) {
    REQUIRE(a.size() == b.size());
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

inline bool bit_equal(const Tensor<double>& a, const Tensor<double>& b) {
    return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

// Gradient of loss w.r.t. every input agrees with central differences.
inline void expect_gradients(const char* name, const std::function<Tensor<double>()>& loss,
                             std::vector<std::pair<std::string, Tensor<double>>> inputs,
                             double tolerance = 1e-6) {
    GradcheckOptions opt;
    opt.samples_per_tensor = 64;
    const auto r = check_gradients(name, loss, std::move(inputs), opt);
    INFO(name << " worst tensor " << r.worst_tensor << " rel " << r.worst_rel_error);
    CHECK(r.entries_checked > 0);
    CHECK(r.worst_rel_error < tolerance);
}

}  // namespace mxt::test
