#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mxt/checkpoint.hpp"
#include "mxt/config.hpp"
#include "mxt/data.hpp"
#include "mxt/losses.hpp"
#include "mxt/model.hpp"

namespace mxt {

// Adam without weight decay. Moments are kept per parameter name.
template <class T>
class Adam {
public:
    Adam() = default;
    explicit Adam(OptimizerConfig cfg) : cfg_(cfg) {}

    // One update of every parameter that received a gradient.
    void step(const std::vector<std::pair<std::string, Tensor<T>>>& params);
    std::uint64_t steps() const { return t_; }

    void save(CheckpointFile& file, const std::string& prefix) const;
    void load(const CheckpointFile& file, const std::string& prefix,
              const std::vector<std::pair<std::string, Tensor<T>>>& params);

private:
    OptimizerConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

struct StepReport {
    std::uint64_t step = 0;
    std::vector<std::pair<std::string, double>> terms;  // generator terms and total
    std::optional<double> discriminator;
};

template <class T>
class Trainer {
public:
    Trainer(const RunConfig& cfg, std::vector<ImageSample> data);

    StepReport step();
    std::uint64_t steps_done() const { return step_; }
    MxtModel<T>& model() { return model_; }
    const RunConfig& config() const { return cfg_; }
    bool has_discriminator() const { return disc_.has_value(); }
    const FeatureExtractor<T>& extractor() const { return extractor_; }

    CheckpointFile state() ;
    void save(const std::filesystem::path& path);
    // Restores weights, optimizer moments, discriminator and step counter.
    void restore(const CheckpointFile& file);

    // Mean |out - gt| over hole pixels of every sample, in inference mode.
    double masked_l1();

private:
    RunConfig cfg_;
    std::vector<ImageSample> data_;
    Batcher batcher_;
    MxtModel<T> model_;
    FeatureExtractor<T> extractor_;
    std::optional<PatchDiscriminator<T>> disc_;
    Adam<T> gen_opt_, disc_opt_;
    std::uint64_t step_ = 0;
};

// Training loop: logs "step=N term=NAME value=V" lines, writes periodic and
// final checkpoints. A non-finite loss throws NumericError naming the term;
// the last periodic checkpoint is left in place.
template <class T>
void run_training(Trainer<T>& trainer, std::ostream& log);

// Loads PPM images from a directory (sorted by name) and pairs each with a
// generated mask, cycling through the buckets.
std::vector<ImageSample> load_image_dir(const std::filesystem::path& dir, std::uint64_t seed);

std::vector<ImageSample> dataset_for(const RunConfig& cfg);

// Replaces settings in cfg with the values stored in a checkpoint and returns
// one notice per value that changed. Model keys are always adopted; with
// training_state, every stored key except the run length, checkpoint path and
// logging cadence is adopted as well.
std::vector<std::string> adopt_checkpoint_config(RunConfig& cfg, const CheckpointFile& file,
                                                 bool training_state);

}  // namespace mxt
