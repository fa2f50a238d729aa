#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mxt/blocks.hpp"
#include "mxt/tensor.hpp"

namespace mxt {

struct LossWeights {
    double l1 = 1.0;
    double style = 250.0;
    double perceptual = 0.1;
    double adversarial = 0.001;

    void validate() const;
};

template <class T>
Tensor<T> l1_loss(const Tensor<T>& out, const Tensor<T>& gt);

// (B,C,H,W) -> (B,C,C), normalized by C*H*W.
template <class T>
Tensor<T> gram_matrix(const Tensor<T>& features);

// Frozen random-weight conv pyramid standing in for a pretrained backbone.
// Stage k: 3x3 conv (stride 1 for the first stage, 2 afterwards) + leaky ReLU.
template <class T>
class FeatureExtractor {
public:
    static constexpr std::uint64_t kDefaultSeed = 20240513;

    explicit FeatureExtractor(std::uint64_t seed = kDefaultSeed,
                              std::vector<std::size_t> widths = {8, 16, 32, 64});

    std::vector<Tensor<T>> features(const Tensor<T>& image) const;
    std::uint64_t seed() const { return seed_; }
    const std::vector<Tensor<T>>& weights() const { return weights_; }

private:
    std::uint64_t seed_;
    std::vector<Tensor<T>> weights_;
};

template <class T>
Tensor<T> perceptual_loss(const Tensor<T>& out, const Tensor<T>& gt, const FeatureExtractor<T>& fx);
template <class T>
Tensor<T> style_loss(const Tensor<T>& out, const Tensor<T>& gt, const FeatureExtractor<T>& fx);

enum class GanLoss { non_saturating, hinge };

// Strided conv stack producing a grid of real/fake logits.
template <class T>
struct PatchDiscriminator {
    std::vector<Tensor<T>> weights, biases;

    static PatchDiscriminator init(std::uint64_t seed, std::size_t width = 16);
    Tensor<T> forward(const Tensor<T>& image) const;
    void visit(const ParamVisitor<T>& fn);
};

template <class T>
struct AdversarialLosses {
    Tensor<T> generator;
    Tensor<T> discriminator;
};

// The discriminator term sees the fake image detached from the generator graph.
template <class T>
AdversarialLosses<T> adversarial_losses(const PatchDiscriminator<T>& d, const Tensor<T>& fake,
                                        const Tensor<T>& real, GanLoss kind = GanLoss::non_saturating);

template <class T>
struct LossTerms {
    Tensor<T> total;
    double l1 = 0, style = 0, perceptual = 0, adversarial = 0;

    // "term=value" pairs for every evaluated term.
    std::vector<std::pair<std::string, double>> breakdown(const LossWeights& w) const;
};

// Generator objective; terms with zero weight are not evaluated. Needs an
// extractor when style or perceptual weight is positive and a discriminator
// when the adversarial weight is positive.
template <class T>
LossTerms<T> composite_loss(const Tensor<T>& out, const Tensor<T>& gt, const LossWeights& w,
                            const FeatureExtractor<T>* fx, const PatchDiscriminator<T>* disc,
                            GanLoss kind = GanLoss::non_saturating);

}  // namespace mxt
