#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mxt/tensor.hpp"

namespace mxt {

struct GradcheckOptions {
    double step = 1e-5;
    double tolerance = 1e-5;
    std::size_t samples_per_tensor = 24;
    std::uint64_t seed = 0;
};

struct GradcheckResult {
    std::string name;
    double worst_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t entries_checked = 0;
    std::size_t entries_skipped = 0;  // finite-difference stencil straddles a kink
    bool passed = false;
};

// Compares reverse-mode gradients of a scalar loss against central
// differences on sampled entries of each input. Per tensor, the error is
// ||numeric - analytic|| / max(||numeric||, ||analytic||) over the sampled
// entries (zero when both norms vanish).
GradcheckResult check_gradients(const std::string& name, const std::function<Tensor<double>()>& loss,
                                std::vector<std::pair<std::string, Tensor<double>>> inputs,
                                const GradcheckOptions& options = {});

// Built-in suites: layer_norm, srsa, mamba, gdfn, cbfn, ssm, l1, style,
// perceptual, adversarial.
const std::vector<std::string>& gradcheck_suite_names();
// UsageError for an unknown name.
GradcheckResult run_gradcheck_suite(const std::string& name, const GradcheckOptions& options = {});

}  // namespace mxt
