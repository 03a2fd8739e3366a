// Copyright 2026 The ATFuse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "atfuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "atfuse/error.hpp"

namespace atfuse {

namespace {

constexpr char kMagic[] = "ATFUSE1";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

struct Blob {
  Shape shape;
  std::span<double> values;
};

// Every tensor-like entry of the model in serialization order.
std::vector<std::pair<std::string, Blob>> collect_blobs(AtfuseModel& model) {
  std::vector<std::pair<std::string, Blob>> blobs;
  for (auto& p : model.parameters()) {
    blobs.push_back({p.name, {p.value.shape(), p.value.mutable_data()}});
  }
  for (auto& [name, buf] : model.buffers()) {
    blobs.push_back({name, {{buf->size()}, std::span<double>(*buf)}});
  }
  return blobs;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("truncated checkpoint");
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

std::string serialize(AtfuseModel& model) {
  std::string out(kMagic, kMagicLen);
  const std::string cfg = format_settings(model.config().to_settings());
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  const auto blobs = collect_blobs(model);
  put_u32(out, static_cast<std::uint32_t>(blobs.size()));
  for (const auto& [name, blob] : blobs) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(blob.shape.size()));
    for (auto d : blob.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : blob.values) put_f32(out, v);
  }
  return out;
}

}  // namespace

std::filesystem::path config_sidecar_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".cfg");
  return p;
}

void save_checkpoint(AtfuseModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize(model);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + path.string());
  }
  write_settings(model.config().to_settings(), config_sidecar_path(path));
}

AtfuseModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r{std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>())};
  std::string magic;
  try {
    magic = r.str(kMagicLen);
  } catch (const CheckpointError&) {
    throw CheckpointError("bad checkpoint magic");
  }
  if (magic != kMagic) throw CheckpointError("bad checkpoint magic");
  const std::uint32_t cfg_len = r.u32();
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_settings(parse_settings(r.str(cfg_len)));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  }
  AtfuseModel model(cfg);
  auto expected = collect_blobs(model);
  std::map<std::string, Blob*> by_name;
  for (auto& [name, blob] : expected) by_name[name] = &blob;

  const std::uint32_t count = r.u32();
  std::map<std::string, bool> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("blob '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError("shape inconsistency: blob '" + name + "' is not part of the " +
                            variant_name(cfg.variant) + " model described by the config");
    }
    if (seen[name]) throw CheckpointError("duplicate blob '" + name + "'");
    seen[name] = true;
    Blob& target = *it->second;
    if (shape != target.shape) {
      throw CheckpointError("shape inconsistency: blob '" + name + "' is " + shape_str(shape) +
                            " but the config implies " + shape_str(target.shape));
    }
    for (auto& v : target.values) v = r.f32();
  }
  for (const auto& [name, blob] : expected) {
    if (!seen[name]) throw CheckpointError("checkpoint is missing blob '" + name + "'");
  }
  if (!r.done()) throw CheckpointError("trailing bytes after last blob");
  return model;
}

std::uint64_t parameter_checksum(AtfuseModel& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, blob] : collect_blobs(model)) {
    for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
    for (double v : blob.values) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) h = (h ^ ((bits >> (8 * i)) & 0xff)) * 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace atfuse
