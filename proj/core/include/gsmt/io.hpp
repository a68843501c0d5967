#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gsmt/model.hpp"
#include "gsmt/tensor.hpp"

// Binary formats, all little-endian:
//   GFV1  magic, u32 T, u32 N, u32 d, T*N*d f32 (frame, patch, channel)
//   GQV1  magic, u32 M, u32 d, M*d f32
//   GAV1  magic, u32 |A|, u32 d, |A|*d f32
//   GCK1  magic, u32 sections, u64 step, section table, f64 payload
//         table entry: u32 name_len, name, u32 rank, u32 dims[rank],
//                      u64 offset (from payload start, in values), u64 count
// Label files hold one decimal integer per line.
namespace gsmt {

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

struct FeatureVolume {
  std::size_t frames = 0;
  std::size_t patches = 0;
  Tensor data;  // [T*N x d]
};

FeatureVolume parse_features(std::span<const std::uint8_t> bytes);
// Values are stored as binary32.
Bytes encode_features(const Tensor& data, std::size_t frames, std::size_t patches);
FeatureVolume load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const Tensor& data, std::size_t frames, std::size_t patches);

// GQV1 / GAV1 matrices, selected by magic.
Tensor parse_matrix(std::span<const std::uint8_t> bytes, const char (&magic)[5]);
Bytes encode_matrix(const Tensor& m, const char (&magic)[5]);
Tensor load_question(const std::filesystem::path& path);
void save_question(const std::filesystem::path& path, const Tensor& words);
Tensor load_answers(const std::filesystem::path& path);
void save_answers(const std::filesystem::path& path, const Tensor& answers);

std::vector<std::size_t> parse_labels(const std::string& text);
std::vector<std::size_t> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const std::vector<std::size_t>& labels);

struct Checkpoint {
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> sections;

  const Tensor* find(const std::string& name) const;
};

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);
Bytes encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

// Model parameters plus the answer adapter, by name.
Checkpoint checkpoint_of(const GsmtModel& model, std::uint64_t step);
// Builds the architecture from `config` and fills it from the checkpoint;
// every parameter must be present with a matching shape.
GsmtModel model_from_checkpoint(const GsmtConfig& config, const Checkpoint& checkpoint);

// Directory layout: labels.txt, answers.gav, and sample_NNNNN.{gfv,gqv} per
// sample. Every sample shares the answer set.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);

}  // namespace gsmt
