#include "mxt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mxt/blocks.hpp"
#include "mxt/losses.hpp"
#include "mxt/nn_ops.hpp"
#include "mxt/ops.hpp"
#include "mxt/rng.hpp"
#include "mxt/ssm.hpp"

namespace mxt {

using D = double;

GradcheckResult check_gradients(const std::string& name, const std::function<Tensor<D>()>& loss,
                                std::vector<std::pair<std::string, Tensor<D>>> inputs,
                                const GradcheckOptions& options) {
    GradcheckResult result;
    result.name = name;
    for (auto& [n, t] : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    backward(loss());
    Rng rng = Rng::derive(options.seed, 0x6763ULL);
    const double h = options.step;
    for (auto& [tname, t] : inputs) {
        std::vector<std::size_t> idx(t.numel());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
        if (idx.size() > options.samples_per_tensor) idx.resize(options.samples_per_tensor);
        std::vector<D> analytic(t.numel(), D(0));
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        double num_sq = 0, ana_sq = 0, diff_sq = 0;
        for (auto i : idx) {
            auto v = t.mutable_values();
            const D orig = v[i];
            D plus, minus, center;
            {
                NoGradGuard guard;
                v[i] = orig + h;
                plus = loss().item();
                v[i] = orig - h;
                minus = loss().item();
                v[i] = orig;
                center = loss().item();
            }
            const double fwd = (plus - center) / h, bwd = (center - minus) / h;
            // One-sided slopes disagreeing by far more than curvature explains
            // means the stencil crosses a point where the loss is not smooth.
            if (std::abs(fwd - bwd) > 1e-3 * (std::abs(fwd) + std::abs(bwd)) + 1e-6) {
                ++result.entries_skipped;
                continue;
            }
            const double numeric = (plus - minus) / (2 * h);
            num_sq += numeric * numeric;
            ana_sq += analytic[i] * analytic[i];
            diff_sq += (numeric - analytic[i]) * (numeric - analytic[i]);
            ++result.entries_checked;
        }
        const double scale = std::sqrt(std::max(num_sq, ana_sq));
        const double rel = scale > 0 ? std::sqrt(diff_sq) / scale : 0.0;
        if (rel >= result.worst_rel_error) {
            result.worst_rel_error = rel;
            result.worst_tensor = tname;
        }
    }
    result.passed = result.entries_checked > 0 && result.worst_rel_error < options.tolerance;
    return result;
}

namespace {

Tensor<D> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<D> v(numel(s));
    for (auto& e : v) e = rng.uniform(lo, hi);
    return Tensor<D>(std::move(s), std::move(v));
}

template <class Block>
std::vector<std::pair<std::string, Tensor<D>>> params_of(Block& b, const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor<D>>> out;
    b.visit(prefix, [&](const std::string& n, Tensor<D>& p) { out.emplace_back(n, p); });
    return out;
}

// Widest width in these suites; every input is 4x4 spatially.
constexpr std::size_t kChannels = 8;

}  // namespace

const std::vector<std::string>& gradcheck_suite_names() {
    static const std::vector<std::string> names = {"layer_norm", "srsa", "mamba", "gdfn", "cbfn",
                                                   "ssm", "l1", "style", "perceptual", "adversarial"};
    return names;
}

GradcheckResult run_gradcheck_suite(const std::string& name, const GradcheckOptions& options) {
    Rng rng = Rng::derive(options.seed, std::hash<std::string>{}(name) & 0xffff);
    const Shape block_shape{2, kChannels, 4, 4};
    if (name == "layer_norm") {
        auto x = random_tensor(block_shape, rng);
        auto norm = LayerNorm<D>::init(kChannels);
        for (auto& v : norm.gamma.mutable_values()) v = rng.uniform(0.5, 1.5);
        for (auto& v : norm.beta.mutable_values()) v = rng.uniform(-0.5, 0.5);
        auto w = random_tensor(block_shape, rng);
        auto inputs = params_of(norm, "norm");
        inputs.emplace_back("x", x);
        return check_gradients(name, [&] { return sum(mul(norm.forward_channels(x), w)); }, inputs, options);
    }
    if (name == "srsa") {
        SrsaConfig cfg;
        cfg.channels = kChannels;
        cfg.heads = 2;
        cfg.pooled_spatial = 3;
        auto block = Srsa<D>::init(cfg, rng);
        auto x = random_tensor(block_shape, rng);
        auto w = random_tensor(block_shape, rng);
        auto inputs = params_of(block, "srsa");
        inputs.emplace_back("x", x);
        return check_gradients(name, [&] { return sum(mul(block.forward(x), w)); }, inputs, options);
    }
    if (name == "mamba") {
        MambaBlockConfig cfg;
        cfg.channels = kChannels;
        cfg.state_dim = 4;
        cfg.use_skip = true;
        auto block = MambaBlock<D>::init(cfg, rng);
        // Larger steps than the default initialization make the a-gradients
        // large enough to measure.
        for (auto& v : block.ssm.delta_bias.mutable_values()) v = rng.uniform(-1.0, 1.0);
        auto x = random_tensor(block_shape, rng);
        auto w = random_tensor(block_shape, rng);
        auto inputs = params_of(block, "mamba");
        inputs.emplace_back("x", x);
        return check_gradients(name, [&] { return sum(mul(block.forward(x), w)); }, inputs, options);
    }
    if (name == "gdfn" || name == "cbfn") {
        FfnConfig cfg;
        cfg.channels = kChannels;
        cfg.broadcast_context = name == "cbfn";
        auto block = Gdfn<D>::init(cfg, rng);
        for (auto* b : {&block.in_bias, &block.dw_bias, &block.out_bias})
            for (auto& v : b->mutable_values()) v = rng.uniform(-0.2, 0.2);
        auto x = random_tensor(block_shape, rng);
        auto w = random_tensor(block_shape, rng);
        auto inputs = params_of(block, name);
        inputs.emplace_back("x", x);
        return check_gradients(name, [&] { return sum(mul(block.forward(x), w)); }, inputs, options);
    }
    if (name == "ssm") {
        const std::size_t b = 2, l = 16, d = kChannels, n = 4;
        auto x = random_tensor({b, l, d}, rng);
        auto delta = random_tensor({b, l, d}, rng, 0.05, 1.0);
        auto a = random_tensor({d, n}, rng, -3.0, -0.2);
        auto bm = random_tensor({b, l, n}, rng);
        auto cm = random_tensor({b, l, n}, rng);
        auto skip = random_tensor({d}, rng);
        auto w = random_tensor({b, l, d}, rng);
        std::vector<std::pair<std::string, Tensor<D>>> inputs = {
            {"x", x}, {"delta", delta}, {"a", a}, {"b", bm}, {"c", cm}, {"skip", skip}};
        return check_gradients(
            name, [&] { return sum(mul(ssm::selective_scan(x, delta, a, bm, cm, skip), w)); }, inputs, options);
    }
    const Shape image_shape{2, 3, 4, 4};
    auto out = random_tensor(image_shape, rng, 0.0, 1.0);
    auto gt = random_tensor(image_shape, rng, 0.0, 1.0);
    if (name == "l1") {
        return check_gradients(name, [&] { return l1_loss(out, gt); }, {{"out", out}}, options);
    }
    if (name == "style" || name == "perceptual") {
        FeatureExtractor<D> fx;
        if (name == "style") {
            return check_gradients(name, [&] { return style_loss(out, gt, fx); }, {{"out", out}}, options);
        }
        return check_gradients(name, [&] { return perceptual_loss(out, gt, fx); }, {{"out", out}}, options);
    }
    if (name == "adversarial") {
        auto disc = PatchDiscriminator<D>::init(options.seed, 4);
        for (auto& bias : disc.biases)
            for (auto& v : bias.mutable_values()) v = rng.uniform(-0.1, 0.1);
        std::vector<std::pair<std::string, Tensor<D>>> dparams;
        disc.visit([&](const std::string& n, Tensor<D>& p) { dparams.emplace_back(n, p); });
        // The discriminator objective sees the fake image detached, so the
        // two objectives are checked separately.
        auto g_inputs = dparams;
        g_inputs.emplace_back("fake", out);
        auto g = check_gradients(
            name, [&] { return adversarial_losses(disc, out, gt).generator; }, g_inputs, options);
        auto d = check_gradients(
            name, [&] { return adversarial_losses(disc, out, gt).discriminator; }, dparams, options);
        if (d.worst_rel_error > g.worst_rel_error) {
            g.worst_rel_error = d.worst_rel_error;
            g.worst_tensor = d.worst_tensor + " (discriminator objective)";
        }
        g.entries_checked += d.entries_checked;
        g.entries_skipped += d.entries_skipped;
        g.passed = g.passed && d.passed;
        return g;
    }
    throw UsageError("unknown gradcheck block '" + name + "'");
}

}  // namespace mxt
