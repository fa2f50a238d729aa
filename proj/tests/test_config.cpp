#include <doctest.h>

#include <cstdlib>

#include "mxt/config.hpp"
#include "support.hpp"

using namespace mxt;

TEST_CASE("defaults follow the training recipe") {
    const RunConfig cfg;
    CHECK(cfg.optim.lr == 1e-4);
    CHECK(cfg.optim.beta1 == 0.9);
    CHECK(cfg.optim.beta2 == 0.999);
    CHECK(cfg.optim.eps == 1e-8);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.model.base_channels == 16);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("key = value text with comments") {
    const auto kv = parse_key_values("# header\n\nmodel.base_channels = 8  # narrow\n optim.lr=0.002\n", "t");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0] == std::pair<std::string, std::string>{"model.base_channels", "8"});
    CHECK(kv[1] == std::pair<std::string, std::string>{"optim.lr", "0.002"});
    CHECK_THROWS_AS(parse_key_values("just words\n", "t"), ParseError);
}

TEST_CASE("applying text sets typed fields") {
    RunConfig cfg;
    apply_config_text(cfg,
                      "model.hm_counts = 1,2,3,4,3,2,1\nmodel.ffn = gdfn\nloss.alpha4 = 0\n"
                      "train.precision = double\nloss.gan = hinge\ndata.size = 3\n",
                      "t");
    CHECK(cfg.model.hm_counts == std::array<std::size_t, 7>{1, 2, 3, 4, 3, 2, 1});
    CHECK(cfg.model.ffn == FfnKind::gdfn);
    CHECK(cfg.loss.adversarial == 0.0);
    CHECK(cfg.precision == Precision::f64);
    CHECK(cfg.gan == GanLoss::hinge);
    CHECK(cfg.dataset_size == 3);
}

TEST_CASE("unknown keys and bad values are reported") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("model.wings", "2"), UsageError);
    CHECK_THROWS_AS(cfg.set("nothing", "2"), UsageError);
    CHECK_THROWS_AS(cfg.set("optim.lr", "fast"), ParseError);
    CHECK_THROWS_AS(cfg.set("train.batch_size", "-1"), ParseError);
    CHECK_THROWS_AS(cfg.set("model.enable_mamba", "maybe"), ParseError);
}

TEST_CASE("validation rejects bad optimizer settings") {
    RunConfig cfg;
    cfg.optim.lr = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg.optim.lr = 1e-3;
    cfg.optim.beta2 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg.optim.beta2 = 0.0;
    CHECK_NOTHROW(cfg.validate());
    cfg.image_size = 20;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("formatted config reads back to the same settings") {
    RunConfig a;
    a.model.base_channels = 12;
    a.model.qk_scale = QkScale::none;
    a.optim.lr = 3.5e-4;
    a.loss.style = 120;
    a.seed = 99;
    a.checkpoint = "runs/x.ckpt";
    RunConfig b;
    apply_config_text(b, format_config(a), "echo");
    CHECK(a.entries() == b.entries());
}

TEST_CASE("MXT_SEED overrides the seed") {
    RunConfig cfg;
    cfg.seed = 5;
    ::setenv("MXT_SEED", "1234", 1);
    apply_environment(cfg);
    CHECK(cfg.seed == 1234);
    ::setenv("MXT_SEED", "abc", 1);
    CHECK_THROWS_AS(apply_environment(cfg), ParseError);
    ::unsetenv("MXT_SEED");
    apply_environment(cfg);
    CHECK(cfg.seed == 1234);
}
