#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mxt/model.hpp"

namespace mxt {

// Binary layout (all integers little-endian):
//   "MXTCKPT\0"  u32 version  u32 scalar_bytes
//   u32 n_config  { u32 len, key bytes, u32 len, value bytes } * n_config
//   u32 n_tensors { u32 len, name bytes, u32 rank, u64 dims[rank], payload } * n_tensors
//   u64 FNV-1a of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
    std::string name;
    Shape shape;
    std::vector<std::uint8_t> payload;  // numel * scalar_bytes raw little-endian values
};

struct CheckpointFile {
    std::uint32_t scalar_bytes = 4;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<CheckpointTensor> tensors;

    const CheckpointTensor* find(const std::string& name) const;
    const std::string* config_value(const std::string& key) const;
};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n);

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file);
// CorruptionError on truncation or checksum mismatch, SchemaError on an
// unsupported version.
CheckpointFile decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Writes through a temporary file and renames, so an existing checkpoint is
// replaced only by a complete one.
void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

template <class T>
CheckpointTensor pack_tensor(const std::string& name, const Tensor<T>& t);
// Copies the payload into dst; SchemaError when shape or scalar width differ.
template <class T>
void unpack_tensor(const CheckpointTensor& src, std::uint32_t scalar_bytes, Tensor<T>& dst);

// Model config stored under "model.*"; unknown model keys are a SchemaError.
ModelConfig model_config_from(const CheckpointFile& file);

template <class T>
CheckpointFile model_checkpoint(MxtModel<T>& model);

// Tensors named with one of the ignored prefixes (training state) are skipped;
// any other name the model does not own is a SchemaError, as is a missing one.
template <class T>
MxtModel<T> load_model(const CheckpointFile& file,
                       const std::vector<std::string>& ignored_prefixes = {"state.", "disc."});

}  // namespace mxt
