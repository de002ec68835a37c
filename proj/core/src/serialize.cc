// core/src/serialize.cc

// Copyright 2026  The pacrnn authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "pacrnn/serialize.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pacrnn/error.h"

namespace pacrnn {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'C', 'M', 'D', 'L', '1', '\n'};

static_assert(std::endian::native == std::endian::little,
              "model file I/O assumes a little-endian host");

void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void save_tensor_bundle(const std::string& path, const std::string& kind,
                        const std::string& config_json,
                        const std::vector<ParamRef>& tensors) {
  nlohmann::json manifest;
  manifest["kind"] = kind;
  manifest["config"] =
      config_json.empty() ? nlohmann::json::object()
                          : nlohmann::json::parse(config_json);
  nlohmann::json tensor_list = nlohmann::json::array();
  for (const ParamRef& ref : tensors) {
    nlohmann::json entry;
    entry["name"] = ref.name;
    entry["shape"] = ref.tensor->shape();
    tensor_list.push_back(entry);
  }
  manifest["tensors"] = tensor_list;
  const std::string manifest_bytes = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u64(os, manifest_bytes.size());
  os.write(manifest_bytes.data(), std::streamsize(manifest_bytes.size()));
  for (const ParamRef& ref : tensors) {
    os.write(reinterpret_cast<const char*>(ref.tensor->data()),
             std::streamsize(ref.tensor->size() * sizeof(double)));
  }
  if (!os) throw IoError("write failed: " + path);
}

LoadedBundle load_tensor_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("bad magic at byte 0 in " + path);
  }
  const uint64_t manifest_len = read_u64(is);
  if (!is) throw FormatError("truncated manifest length at byte 8 in " + path);
  std::string manifest_bytes(manifest_len, '\0');
  is.read(manifest_bytes.data(), std::streamsize(manifest_len));
  if (!is) throw FormatError("truncated manifest at byte 16 in " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest is not valid JSON in " + path + ": " +
                      e.what());
  }

  LoadedBundle bundle;
  bundle.kind = manifest.value("kind", "");
  bundle.config_json = manifest.contains("config")
                           ? manifest["config"].dump()
                           : std::string("{}");
  uint64_t offset = 16 + manifest_len;
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    std::vector<size_t> shape = entry.at("shape").get<std::vector<size_t>>();
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            std::streamsize(t.size() * sizeof(double)));
    if (!is) {
      throw FormatError("truncated payload for tensor '" + name +
                        "' at byte " + std::to_string(offset) + " in " + path);
    }
    offset += t.size() * sizeof(double);
    bundle.tensors.emplace_back(name, std::move(t));
  }
  // Trailing bytes mean the manifest and payload disagree.
  is.peek();
  if (!is.eof()) {
    throw FormatError("trailing bytes after payload at byte " +
                      std::to_string(offset) + " in " + path);
  }
  return bundle;
}

void fill_params_from_bundle(const LoadedBundle& bundle,
                             const std::vector<ParamRef>& dest) {
  if (bundle.tensors.size() != dest.size()) {
    throw FormatError("bundle holds " + std::to_string(bundle.tensors.size()) +
                      " tensors, model expects " + std::to_string(dest.size()));
  }
  for (size_t i = 0; i < dest.size(); ++i) {
    const auto& [name, tensor] = bundle.tensors[i];
    if (name != dest[i].name) {
      throw FormatError("tensor " + std::to_string(i) + " is named '" + name +
                        "', expected '" + dest[i].name + "'");
    }
    if (!tensor.same_shape(*dest[i].tensor)) {
      throw FormatError("tensor '" + name + "' has shape " +
                        tensor.shape_string() + ", expected " +
                        dest[i].tensor->shape_string());
    }
    *dest[i].tensor = tensor;
  }
}

uint64_t file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  uint64_t h = 0xCBF29CE484222325ULL;
  char buf[4096];
  while (is) {
    is.read(buf, sizeof(buf));
    const std::streamsize got = is.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

std::string hash_string(uint64_t hash) {
  std::ostringstream os;
  os << std::hex << hash;
  return os.str();
}

}  // namespace pacrnn
