#pragma once

// Named-tensor container (safetensors layout: u64 little-endian header length,
// JSON header, raw little-endian data) plus JSON sidecars carrying a SHA-256
// of the container. Datasets store F32 "H_real"/"H_imag" shaped [N, P, N_BS];
// checkpoints store F64 parameters under their registered names.

#include "csigpt/channelsim.hpp"
#include "csigpt/params.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csigpt::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class DType { F32, F64 };

struct Tensor {
  DType dtype = DType::F64;
  std::vector<std::int64_t> shape;
  std::vector<double> data;  // row-major; F32 tensors are rounded on write
};

using TensorMap = std::map<std::string, Tensor>;
using Metadata = std::map<std::string, std::string>;

void write_tensors(const fs::path& path, const TensorMap& tensors, const Metadata& metadata = {});
// Throws IntegrityError on truncation, trailing bytes or a malformed header.
TensorMap read_tensors(const fs::path& path, Metadata* metadata = nullptr);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

// "<path>.json"
fs::path sidecar_path(const fs::path& path);

void write_text(const fs::path& path, std::string_view text);
std::string read_text(const fs::path& path);
json read_json(const fs::path& path);

struct DatasetMeta {
  std::string label;  // "mixed" when samples carry different labels
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string split;
};

struct LoadedDataset {
  std::vector<channelsim::ChannelSample> samples;
  DatasetMeta meta;
  bool has_sidecar = false;
};

// Writes the container and its sidecar. Per-sample labels are kept in the
// sidecar when they differ from meta.label.
void save_dataset(std::span<const channelsim::ChannelSample> samples, const fs::path& path,
                  const DatasetMeta& meta);
// Without a sidecar the samples load with label "external". With one, the
// container hash must match.
LoadedDataset load_dataset(const fs::path& path);
// Recomputes the container hash and compares it with the sidecar.
void verify_sidecar(const fs::path& path);

void save_checkpoint(const ParamSet& params, const fs::path& path, const json& manifest);
// Copies every stored tensor into `params` (names and shapes must match
// exactly) and returns the manifest.
json load_checkpoint(ParamSet& params, const fs::path& path);
json read_manifest(const fs::path& path);

}  // namespace csigpt::io
