#include "mxt/losses.hpp"

#include <cmath>

#include "mxt/nn_ops.hpp"
#include "mxt/ops.hpp"
#include "mxt/rng.hpp"

namespace mxt {

void LossWeights::validate() const {
    if (!(l1 >= 0) || !(style >= 0) || !(perceptual >= 0) || !(adversarial >= 0)) {
        throw ContractError("loss weights must all be >= 0");
    }
}

template <class T>
Tensor<T> l1_loss(const Tensor<T>& out, const Tensor<T>& gt) {
    if (out.shape() != gt.shape()) {
        throw DimensionError("l1_loss shapes differ: " + to_string(out.shape()) + " vs " +
                             to_string(gt.shape()));
    }
    return mean(abs(sub(out, gt)));
}

template <class T>
Tensor<T> gram_matrix(const Tensor<T>& features) {
    if (features.rank() != 4) throw DimensionError("gram_matrix expects (B,C,H,W)");
    const std::size_t b = features.shape()[0], c = features.shape()[1];
    const std::size_t hw = features.shape()[2] * features.shape()[3];
    if (hw == 0) throw DimensionError("gram_matrix needs at least one pixel");
    auto flat = reshape(features, {b, c, hw});
    auto g = matmul(flat, transpose(flat, 1, 2));
    return affine(g, static_cast<T>(1.0 / static_cast<double>(c * hw)), T(0));
}

template <class T>
FeatureExtractor<T>::FeatureExtractor(std::uint64_t seed, std::vector<std::size_t> widths)
    : seed_(seed) {
    Rng rng = Rng::derive(seed, 0x66656174ULL);
    std::size_t in = 3;
    for (auto w : widths) {
        const double scale = std::sqrt(2.0 / static_cast<double>(in * 9));
        std::vector<T> v(w * in * 9);
        for (auto& e : v) e = static_cast<T>(scale * rng.normal());
        weights_.emplace_back(Shape{w, in, 3, 3}, std::move(v), false);
        in = w;
    }
}

template <class T>
std::vector<Tensor<T>> FeatureExtractor<T>::features(const Tensor<T>& image) const {
    std::vector<Tensor<T>> out;
    Tensor<T> x = image;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        x = leaky_relu(nn::conv2d(x, weights_[i], Tensor<T>(), i == 0 ? 1 : 2, 1), T(0.2));
        out.push_back(x);
    }
    return out;
}

template <class T>
Tensor<T> perceptual_loss(const Tensor<T>& out, const Tensor<T>& gt, const FeatureExtractor<T>& fx) {
    const auto fo = fx.features(out), fg = fx.features(gt);
    Tensor<T> total;
    for (std::size_t i = 0; i < fo.size(); ++i) {
        auto term = mean(abs(sub(fo[i], fg[i])));
        total = total.defined() ? add(total, term) : term;
    }
    return affine(total, static_cast<T>(1.0 / static_cast<double>(fo.size())), T(0));
}

template <class T>
Tensor<T> style_loss(const Tensor<T>& out, const Tensor<T>& gt, const FeatureExtractor<T>& fx) {
    const auto fo = fx.features(out), fg = fx.features(gt);
    Tensor<T> total;
    for (std::size_t i = 0; i < fo.size(); ++i) {
        auto term = mean(abs(sub(gram_matrix(fo[i]), gram_matrix(fg[i]))));
        total = total.defined() ? add(total, term) : term;
    }
    return affine(total, static_cast<T>(1.0 / static_cast<double>(fo.size())), T(0));
}

template <class T>
PatchDiscriminator<T> PatchDiscriminator<T>::init(std::uint64_t seed, std::size_t width) {
    Rng rng = Rng::derive(seed, 0x64697363ULL);
    PatchDiscriminator d;
    const std::size_t chans[4] = {3, width, 2 * width, 1};
    for (std::size_t i = 0; i < 3; ++i) {
        d.weights.push_back(init_uniform<T>({chans[i + 1], chans[i], 3, 3}, chans[i] * 9, rng));
        d.biases.push_back(Tensor<T>::zeros({chans[i + 1]}, true));
    }
    return d;
}

template <class T>
Tensor<T> PatchDiscriminator<T>::forward(const Tensor<T>& image) const {
    auto x = leaky_relu(nn::conv2d(image, weights[0], biases[0], 2, 1), T(0.2));
    x = leaky_relu(nn::conv2d(x, weights[1], biases[1], 2, 1), T(0.2));
    return nn::conv2d(x, weights[2], biases[2], 1, 1);
}

template <class T>
void PatchDiscriminator<T>::visit(const ParamVisitor<T>& fn) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
        fn("disc.conv" + std::to_string(i) + ".weight", weights[i]);
        fn("disc.conv" + std::to_string(i) + ".bias", biases[i]);
    }
}

template <class T>
AdversarialLosses<T> adversarial_losses(const PatchDiscriminator<T>& d, const Tensor<T>& fake,
                                        const Tensor<T>& real, GanLoss kind) {
    const auto real_logits = d.forward(real);
    const auto fake_detached = d.forward(fake.detach());
    const auto fake_logits = d.forward(fake);
    AdversarialLosses<T> out;
    if (kind == GanLoss::non_saturating) {
        out.discriminator = add(mean(softplus(neg(real_logits))), mean(softplus(fake_detached)));
        out.generator = mean(softplus(neg(fake_logits)));
    } else {
        out.discriminator = add(mean(relu(affine(real_logits, T(-1), T(1)))),
                                mean(relu(affine(fake_detached, T(1), T(1)))));
        out.generator = neg(mean(fake_logits));
    }
    return out;
}

template <class T>
std::vector<std::pair<std::string, double>> LossTerms<T>::breakdown(const LossWeights& w) const {
    std::vector<std::pair<std::string, double>> out;
    if (w.l1 > 0) out.emplace_back("l1", l1);
    if (w.style > 0) out.emplace_back("style", style);
    if (w.perceptual > 0) out.emplace_back("perceptual", perceptual);
    if (w.adversarial > 0) out.emplace_back("adversarial", adversarial);
    out.emplace_back("total", total.defined() ? static_cast<double>(total.item()) : 0.0);
    return out;
}

template <class T>
LossTerms<T> composite_loss(const Tensor<T>& out, const Tensor<T>& gt, const LossWeights& w,
                            const FeatureExtractor<T>* fx, const PatchDiscriminator<T>* disc,
                            GanLoss kind) {
    w.validate();
    if (out.shape() != gt.shape()) {
        throw DimensionError("composite_loss shapes differ: " + to_string(out.shape()) + " vs " +
                             to_string(gt.shape()));
    }
    if ((w.style > 0 || w.perceptual > 0) && !fx) {
        throw ContractError("style/perceptual terms need a feature extractor");
    }
    if (w.adversarial > 0 && !disc) throw ContractError("adversarial term needs a discriminator");

    LossTerms<T> terms;
    auto accumulate = [&](const Tensor<T>& term, double weight, double& slot) {
        slot = static_cast<double>(term.item());
        auto scaled = affine(term, static_cast<T>(weight), T(0));
        terms.total = terms.total.defined() ? add(terms.total, scaled) : scaled;
    };
    if (w.l1 > 0) accumulate(l1_loss(out, gt), w.l1, terms.l1);
    if (w.style > 0 || w.perceptual > 0) {
        const auto fo = fx->features(out);
        std::vector<Tensor<T>> fg;
        {
            NoGradGuard guard;
            fg = fx->features(gt.detach());
        }
        const T inv = static_cast<T>(1.0 / static_cast<double>(fo.size()));
        if (w.style > 0) {
            Tensor<T> s;
            for (std::size_t i = 0; i < fo.size(); ++i) {
                auto term = mean(abs(sub(gram_matrix(fo[i]), gram_matrix(fg[i]))));
                s = s.defined() ? add(s, term) : term;
            }
            accumulate(affine(s, inv, T(0)), w.style, terms.style);
        }
        if (w.perceptual > 0) {
            Tensor<T> p;
            for (std::size_t i = 0; i < fo.size(); ++i) {
                auto term = mean(abs(sub(fo[i], fg[i])));
                p = p.defined() ? add(p, term) : term;
            }
            accumulate(affine(p, inv, T(0)), w.perceptual, terms.perceptual);
        }
    }
    if (w.adversarial > 0) {
        const auto logits = disc->forward(out);
        auto g = kind == GanLoss::non_saturating ? mean(softplus(neg(logits))) : neg(mean(logits));
        accumulate(g, w.adversarial, terms.adversarial);
    }
    if (!terms.total.defined()) terms.total = Tensor<T>::scalar(T(0));
    return terms;
}

#define MXT_INSTANTIATE_LOSSES(T)                                                                 \
    template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> gram_matrix(const Tensor<T>&);                                             \
    template class FeatureExtractor<T>;                                                           \
    template Tensor<T> perceptual_loss(const Tensor<T>&, const Tensor<T>&, const FeatureExtractor<T>&); \
    template Tensor<T> style_loss(const Tensor<T>&, const Tensor<T>&, const FeatureExtractor<T>&);      \
    template struct PatchDiscriminator<T>;                                                        \
    template AdversarialLosses<T> adversarial_losses(const PatchDiscriminator<T>&, const Tensor<T>&, \
                                                     const Tensor<T>&, GanLoss);                   \
    template struct LossTerms<T>;                                                                 \
    template LossTerms<T> composite_loss(const Tensor<T>&, const Tensor<T>&, const LossWeights&,  \
                                         const FeatureExtractor<T>*, const PatchDiscriminator<T>*, \
                                         GanLoss);

MXT_INSTANTIATE_LOSSES(float)
MXT_INSTANTIATE_LOSSES(double)

}  // namespace mxt
