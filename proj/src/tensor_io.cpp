#include "csigpt/tensor_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace csigpt::io {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace {

std::size_t dtype_size(DType t) { return t == DType::F32 ? 4 : 8; }
const char* dtype_name(DType t) { return t == DType::F32 ? "F32" : "F64"; }

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) {
    if (s < 0) throw ShapeError("negative tensor dimension");
    n *= static_cast<std::size_t>(s);
  }
  return n;
}

std::string to_hex(const unsigned char* p, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (unsigned i = 0; i < n; ++i) {
    out[2 * i] = digits[p[i] >> 4];
    out[2 * i + 1] = digits[p[i] & 15];
  }
  return out;
}

}  // namespace

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw IntegrityError(path.string() + ": malformed JSON: " + e.what());
  }
}

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  p += ".json";
  return p;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  return to_hex(md, len);
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

void write_tensors(const fs::path& path, const TensorMap& tensors, const Metadata& metadata) {
  json header = json::object();
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (name == "__metadata__") throw std::invalid_argument("reserved tensor name");
    if (element_count(t.shape) != t.data.size()) {
      throw ShapeError("tensor '" + name + "': data size does not match shape");
    }
    const std::size_t bytes = t.data.size() * dtype_size(t.dtype);
    header[name] = {{"dtype", dtype_name(t.dtype)}, {"shape", t.shape},
                    {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::string head = header.dump();
  while ((head.size() + 8) % 8 != 0) head.push_back(' ');

  std::string blob(8 + head.size() + offset, '\0');
  const std::uint64_t n = head.size();
  std::memcpy(blob.data(), &n, 8);
  std::memcpy(blob.data() + 8, head.data(), head.size());
  char* dst = blob.data() + 8 + head.size();
  for (const auto& [name, t] : tensors) {
    if (t.dtype == DType::F32) {
      for (double v : t.data) {
        const float f = static_cast<float>(v);
        std::memcpy(dst, &f, 4);
        dst += 4;
      }
    } else {
      std::memcpy(dst, t.data.data(), t.data.size() * 8);
      dst += t.data.size() * 8;
    }
  }
  write_text(path, blob);
}

TensorMap read_tensors(const fs::path& path, Metadata* metadata) {
  const std::string blob = read_text(path);
  const std::string where = path.string() + ": ";
  if (blob.size() < 8) throw IntegrityError(where + "file too short for a header");
  std::uint64_t n = 0;
  std::memcpy(&n, blob.data(), 8);
  if (n > blob.size() - 8) throw IntegrityError(where + "header extends past end of file");
  json header;
  try {
    header = json::parse(blob.begin() + 8, blob.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  } catch (const json::parse_error&) {
    throw IntegrityError(where + "malformed header");
  }
  if (!header.is_object()) throw IntegrityError(where + "header is not an object");
  const std::size_t data_size = blob.size() - 8 - n;
  const char* base = blob.data() + 8 + n;
  std::size_t covered = 0;
  TensorMap out;
  try {
    for (const auto& [name, entry] : header.items()) {
      if (name == "__metadata__") {
        if (metadata) *metadata = entry.get<Metadata>();
        continue;
      }
      Tensor t;
      const std::string dt = entry.at("dtype").get<std::string>();
      if (dt == "F32") {
        t.dtype = DType::F32;
      } else if (dt == "F64") {
        t.dtype = DType::F64;
      } else {
        throw IntegrityError(where + "unsupported dtype " + dt + " for '" + name + "'");
      }
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offs = entry.at("data_offsets").get<std::vector<std::size_t>>();
      if (offs.size() != 2 || offs[0] > offs[1] || offs[1] > data_size) {
        throw IntegrityError(where + "tensor '" + name + "' lies outside the data section");
      }
      const std::size_t count = element_count(t.shape);
      if (offs[1] - offs[0] != count * dtype_size(t.dtype)) {
        throw IntegrityError(where + "tensor '" + name + "' byte range does not match its shape");
      }
      covered = std::max(covered, offs[1]);
      t.data.resize(count);
      const char* src = base + offs[0];
      if (t.dtype == DType::F32) {
        for (std::size_t i = 0; i < count; ++i) {
          float f;
          std::memcpy(&f, src + 4 * i, 4);
          t.data[i] = f;
        }
      } else {
        std::memcpy(t.data.data(), src, count * 8);
      }
      out.emplace(name, std::move(t));
    }
  } catch (const json::exception& e) {
    throw IntegrityError(where + "bad header entry: " + e.what());
  }
  if (covered != data_size) throw IntegrityError(where + "data section size mismatch");
  return out;
}

namespace {

json checked_sidecar(const fs::path& path) {
  const json side = read_json(sidecar_path(path));
  const std::string expect = side.value("sha256", "");
  const std::string actual = sha256_file(path);
  if (expect != actual) {
    throw IntegrityError(path.string() + ": hash mismatch (sidecar " + expect + ", file " + actual + ")");
  }
  return side;
}

}  // namespace

void verify_sidecar(const fs::path& path) { checked_sidecar(path); }

void save_dataset(std::span<const channelsim::ChannelSample> samples, const fs::path& path,
                  const DatasetMeta& meta) {
  if (samples.empty()) throw std::invalid_argument("save_dataset: no samples");
  const auto p = samples.front().h.rows();
  const auto n = samples.front().h.cols();
  const auto count = static_cast<std::int64_t>(samples.size());
  Tensor re{DType::F32, {count, p, n}, {}}, im{DType::F32, {count, p, n}, {}};
  re.data.reserve(samples.size() * static_cast<std::size_t>(p * n));
  im.data.reserve(re.data.capacity());
  bool uniform = true;
  for (const auto& s : samples) {
    if (s.h.rows() != p || s.h.cols() != n) throw ShapeError("save_dataset: samples differ in shape");
    uniform = uniform && s.scenario_label == meta.label;
    for (Eigen::Index r = 0; r < p; ++r) {
      for (Eigen::Index c = 0; c < n; ++c) {
        re.data.push_back(s.h(r, c).real());
        im.data.push_back(s.h(r, c).imag());
      }
    }
  }
  write_tensors(path, {{"H_real", std::move(re)}, {"H_imag", std::move(im)}},
                {{"format", "csigpt-dataset"}});
  json side = {{"kind", "dataset"},
               {"label", meta.label},
               {"seed", meta.seed},
               {"config_hash", meta.config_hash},
               {"split", meta.split},
               {"count", samples.size()},
               {"shape", {count, p, n}},
               {"sha256", sha256_file(path)}};
  if (!uniform) {
    std::vector<std::string> labels;
    for (const auto& s : samples) labels.push_back(s.scenario_label);
    side["sample_labels"] = labels;
  }
  write_text(sidecar_path(path), side.dump(2) + "\n");
}

LoadedDataset load_dataset(const fs::path& path) {
  LoadedDataset out;
  json side;
  if (fs::exists(sidecar_path(path))) {
    side = checked_sidecar(path);
    out.has_sidecar = true;
  }
  TensorMap t = read_tensors(path);
  auto re = t.find("H_real");
  auto im = t.find("H_imag");
  if (re == t.end() || im == t.end()) throw IntegrityError(path.string() + ": missing H_real/H_imag");
  if (re->second.shape.size() != 3 || re->second.shape != im->second.shape) {
    throw IntegrityError(path.string() + ": H_real/H_imag must share a rank-3 shape");
  }
  const auto count = re->second.shape[0], p = re->second.shape[1], n = re->second.shape[2];
  std::vector<std::string> labels;
  try {
    if (out.has_sidecar) {
      out.meta.label = side.at("label").get<std::string>();
      out.meta.seed = side.at("seed").get<std::uint64_t>();
      out.meta.config_hash = side.at("config_hash").get<std::string>();
      out.meta.split = side.at("split").get<std::string>();
      if (side.contains("sample_labels")) labels = side["sample_labels"].get<std::vector<std::string>>();
      if (side.value("count", count) != count) throw IntegrityError(path.string() + ": sidecar count mismatch");
    } else {
      out.meta.label = "external";
    }
  } catch (const json::exception& e) {
    throw IntegrityError(path.string() + ": bad sidecar: " + e.what());
  }
  if (!labels.empty() && static_cast<std::int64_t>(labels.size()) != count) {
    throw IntegrityError(path.string() + ": sample_labels length mismatch");
  }
  out.samples.resize(static_cast<std::size_t>(count));
  std::size_t k = 0;
  for (std::int64_t i = 0; i < count; ++i) {
    auto& s = out.samples[static_cast<std::size_t>(i)];
    s.h.resize(p, n);
    for (Eigen::Index r = 0; r < p; ++r) {
      for (Eigen::Index c = 0; c < n; ++c, ++k) s.h(r, c) = {re->second.data[k], im->second.data[k]};
    }
    s.scenario_label = labels.empty() ? out.meta.label : labels[static_cast<std::size_t>(i)];
  }
  return out;
}

void save_checkpoint(const ParamSet& params, const fs::path& path, const json& manifest) {
  TensorMap t;
  for (const auto& p : params.items()) {
    Tensor x{DType::F64, {p.value.rows(), p.value.cols()}, {}};
    x.data.resize(static_cast<std::size_t>(p.value.size()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        x.data[static_cast<std::size_t>(r * p.value.cols() + c)] = p.value(r, c);
      }
    }
    t.emplace(p.name, std::move(x));
  }
  write_tensors(path, t, {{"format", "csigpt-checkpoint"}});
  json side = {{"kind", "checkpoint"}, {"sha256", sha256_file(path)}, {"manifest", manifest}};
  write_text(sidecar_path(path), side.dump(2) + "\n");
}

json read_manifest(const fs::path& path) {
  const json side = checked_sidecar(path);
  if (side.value("kind", "") != "checkpoint") throw IntegrityError(path.string() + ": not a checkpoint");
  return side.value("manifest", json::object());
}

json load_checkpoint(ParamSet& params, const fs::path& path) {
  json manifest = read_manifest(path);
  const TensorMap t = read_tensors(path);
  if (t.size() != params.items().size()) {
    throw IntegrityError(path.string() + ": checkpoint has " + std::to_string(t.size()) +
                         " tensors, model has " + std::to_string(params.items().size()));
  }
  for (auto& p : params.items()) {
    auto it = t.find(p.name);
    if (it == t.end()) throw IntegrityError(path.string() + ": missing tensor '" + p.name + "'");
    const Tensor& x = it->second;
    if (x.shape.size() != 2 || x.shape[0] != p.value.rows() || x.shape[1] != p.value.cols()) {
      throw ShapeError(path.string() + ": shape mismatch for '" + p.name + "'");
    }
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        p.value(r, c) = x.data[static_cast<std::size_t>(r * p.value.cols() + c)];
      }
    }
  }
  return manifest;
}

}  // namespace csigpt::io
