#include <doctest.h>

#include "mxt/losses.hpp"
#include "mxt/ops.hpp"
#include "support.hpp"

using namespace mxt;
using TD = Tensor<double>;

namespace {

TD image(std::size_t b, std::uint64_t seed, std::size_t side = 8) {
    Rng rng(seed);
    return test::random_tensor({b, 3, side, side}, rng, 0, 1);
}

PatchDiscriminator<double> zero_discriminator() {
    auto d = PatchDiscriminator<double>::init(1);
    d.visit([](const std::string&, TD& p) {
        for (auto& v : p.mutable_values()) v = 0;
    });
    return d;
}

}  // namespace

TEST_CASE("l1 loss is the mean absolute difference") {
    const auto a = image(2, 1);
    CHECK(l1_loss(a, a).item() == 0.0);
    CHECK(l1_loss(affine(a, 1.0, 0.5), a).item() == doctest::Approx(0.5).epsilon(1e-14));
    CHECK_THROWS_AS(l1_loss(a, image(1, 2)), DimensionError);
}

TEST_CASE("l1 gradient is sign over count") {
    TD out({4}, {0.1, 0.9, 0.4, 0.6}, true);
    const TD gt({4}, {0.5, 0.5, 0.5, 0.5});
    backward(l1_loss(out, gt));
    const std::vector<double> want{-0.25, 0.25, -0.25, 0.25};
    CHECK(std::equal(want.begin(), want.end(), out.grad().begin()));
}

TEST_CASE("gram matrix matches a double loop and is symmetric PSD") {
    Rng rng(3);
    const auto f = test::random_tensor({1, 2, 2, 2}, rng);
    const auto g = gram_matrix(f);
    REQUIRE(g.shape() == Shape{1, 2, 2});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < 4; ++p) s += f.values()[i * 4 + p] * f.values()[j * 4 + p];
            CHECK(g.values()[i * 2 + j] == doctest::Approx(s / 8).epsilon(1e-14));
        }
    CHECK(g.values()[1] == g.values()[2]);
    const double det = g.values()[0] * g.values()[3] - g.values()[1] * g.values()[2];
    CHECK(g.values()[0] >= 0);
    CHECK(det >= -1e-15);
    const auto c = gram_matrix(TD::full({1, 1, 3, 5}, 0.7));
    CHECK(c.item() == doctest::Approx(0.49).epsilon(1e-14));
}

TEST_CASE("feature extractor is deterministic from its seed") {
    const FeatureExtractor<double> a(7), b(7), c(8);
    for (std::size_t i = 0; i < a.weights().size(); ++i) CHECK(test::bit_equal(a.weights()[i], b.weights()[i]));
    CHECK_FALSE(test::bit_equal(a.weights()[0], c.weights()[0]));
    const auto feats = a.features(image(1, 4, 32));
    REQUIRE(feats.size() == 4);
    CHECK(feats[0].shape() == Shape{1, 8, 32, 32});
    CHECK(feats[3].shape() == Shape{1, 64, 4, 4});
}

TEST_CASE("style and perceptual are zero on identical inputs, positive otherwise") {
    const FeatureExtractor<double> fx;
    const auto a = image(2, 5), b = image(2, 6);
    CHECK(style_loss(a, a, fx).item() == 0.0);
    CHECK(perceptual_loss(a, a, fx).item() == 0.0);
    CHECK(style_loss(a, b, fx).item() > 0.0);
    CHECK(perceptual_loss(a, b, fx).item() > 0.0);
}

TEST_CASE("style and perceptual ignore batch order") {
    const FeatureExtractor<double> fx;
    const auto a = image(3, 7), b = image(3, 8);
    auto swap_batch = [](const TD& t) {
        auto parts = split(t, {1, 1, 1}, 0);
        return concat(std::vector<TD>{parts[2], parts[0], parts[1]}, 0);
    };
    CHECK(style_loss(swap_batch(a), swap_batch(b), fx).item() ==
          doctest::Approx(style_loss(a, b, fx).item()).epsilon(1e-13));
    CHECK(perceptual_loss(swap_batch(a), swap_batch(b), fx).item() ==
          doctest::Approx(perceptual_loss(a, b, fx).item()).epsilon(1e-13));
}

TEST_CASE("extractor gradients reach the input but never its weights") {
    const FeatureExtractor<double> fx;
    auto a = image(1, 9);
    a.set_requires_grad(true);
    backward(perceptual_loss(a, image(1, 10), fx));
    CHECK(a.has_grad());
    for (const auto& w : fx.weights()) CHECK_FALSE(w.has_grad());
}

TEST_CASE("discriminator with zero logits gives ln 2 losses") {
    const auto d = zero_discriminator();
    const auto losses = adversarial_losses(d, image(2, 11, 32), image(2, 12, 32));
    CHECK(losses.generator.item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(losses.discriminator.item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));
    CHECK(d.forward(image(1, 13, 32)).shape() == Shape{1, 1, 8, 8});
}

TEST_CASE("hinge discriminator with zero logits gives 2 and generator 0") {
    const auto d = zero_discriminator();
    const auto losses = adversarial_losses(d, image(1, 14, 32), image(1, 15, 32), GanLoss::hinge);
    CHECK(losses.discriminator.item() == doctest::Approx(2.0));
    CHECK(losses.generator.item() == doctest::Approx(0.0));
}

TEST_CASE("generator loss falls as fake logits rise") {
    auto d = zero_discriminator();
    double prev = 1e9;
    for (double bias : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
        d.biases.back().mutable_values()[0] = bias;
        const double g = adversarial_losses(d, image(1, 16, 32), image(1, 17, 32)).generator.item();
        CHECK(g < prev);
        prev = g;
    }
}

TEST_CASE("discriminator loss does not reach the generator") {
    const auto d = PatchDiscriminator<double>::init(2);
    auto fake = image(1, 18, 32);
    fake.set_requires_grad(true);
    backward(adversarial_losses(d, fake, image(1, 19, 32)).discriminator);
    CHECK_FALSE(fake.has_grad());
    backward(adversarial_losses(d, fake, image(1, 19, 32)).generator);
    CHECK(fake.has_grad());
}

TEST_CASE("composite loss weights") {
    const FeatureExtractor<double> fx;
    const auto disc = PatchDiscriminator<double>::init(3);
    const auto a = image(1, 20, 32), b = image(1, 21, 32);
    const FeatureExtractor<double>* no_fx = nullptr;
    const PatchDiscriminator<double>* no_disc = nullptr;

    const auto only_l1 = composite_loss(a, b, LossWeights{1, 0, 0, 0}, no_fx, no_disc);
    CHECK(only_l1.total.item() == l1_loss(a, b).item());
    CHECK(only_l1.breakdown(LossWeights{1, 0, 0, 0}).size() == 2);

    const auto same = composite_loss(a, a, LossWeights{1, 250, 0.1, 0}, &fx, no_disc);
    CHECK(same.total.item() == 0.0);

    const LossWeights w1{1, 2, 3, 4}, w2{0.5, 7, 0.25, 2};
    const LossWeights sum_w{1.5, 9, 3.25, 6};
    const double t1 = composite_loss(a, b, w1, &fx, &disc).total.item();
    const double t2 = composite_loss(a, b, w2, &fx, &disc).total.item();
    const double ts = composite_loss(a, b, sum_w, &fx, &disc).total.item();
    CHECK(ts == doctest::Approx(t1 + t2).epsilon(1e-12));

    const LossWeights defaults;
    CHECK(defaults.l1 == 1.0);
    CHECK(defaults.style == 250.0);
    CHECK(defaults.perceptual == 0.1);
    CHECK(defaults.adversarial == 0.001);
    CHECK_THROWS_AS((LossWeights{1, -1, 0, 0}.validate()), ContractError);
    CHECK_THROWS_AS(composite_loss(a, b, LossWeights{1, 1, 0, 0}, no_fx, no_disc), ContractError);
}

TEST_CASE("every loss term is non-negative") {
    const FeatureExtractor<double> fx;
    const auto disc = PatchDiscriminator<double>::init(4);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto t = composite_loss(image(1, 30 + s, 32), image(1, 40 + s, 32), LossWeights{}, &fx, &disc);
        CHECK(t.l1 >= 0);
        CHECK(t.style >= 0);
        CHECK(t.perceptual >= 0);
        CHECK(t.adversarial >= 0);
    }
}
