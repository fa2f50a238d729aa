#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mxt/losses.hpp"
#include "mxt/model.hpp"

namespace mxt {

struct OptimizerConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

enum class Precision { f32, f64 };

struct RunConfig {
    ModelConfig model;
    OptimizerConfig optim;
    LossWeights loss;
    GanLoss gan = GanLoss::non_saturating;
    bool loss_on_composite = false;
    std::size_t batch_size = 4;
    std::size_t iterations = 1000;
    std::uint64_t seed = 0;
    std::uint64_t extractor_seed = 20240513;
    Precision precision = Precision::f32;
    // Empty data_dir selects the synthetic dataset.
    std::string data_dir;
    std::size_t dataset_size = 8;
    std::size_t image_size = 32;
    std::string checkpoint = "mxt.ckpt";
    std::size_t checkpoint_every = 500;
    std::size_t log_every = 1;

    void validate() const;
    std::vector<std::pair<std::string, std::string>> entries() const;
    // Dotted key; UsageError for an unknown key, ParseError for a bad value.
    void set(const std::string& key, const std::string& value);
};

// "key = value" lines; '#' starts a comment; blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& origin);
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
// MXT_SEED, when set, overrides the seed.
void apply_environment(RunConfig& cfg);
std::string format_config(const RunConfig& cfg);

}  // namespace mxt
