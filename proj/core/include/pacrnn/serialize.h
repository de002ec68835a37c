// core/include/pacrnn/serialize.h

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

#ifndef PACRNN_SERIALIZE_H_
#define PACRNN_SERIALIZE_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pacrnn/layers.h"
#include "pacrnn/tensor.h"

namespace pacrnn {

// Model files hold a JSON manifest followed by raw little-endian float64
// payload, one block per tensor in manifest order. See docs/formats.md for
// the exact byte layout.
//
//   bytes 0..7   magic "PACMDL1\n"
//   bytes 8..15  u64 LE manifest length M
//   bytes 16..   manifest JSON: {"kind":..., "config":..., "tensors":[...]}
//   then         concatenated float64 LE tensor data in declaration order

// kind names the model family ("pacrnn", "multihead", "lid"); config_json is
// an arbitrary JSON object echoing the builder's configuration.
void save_tensor_bundle(const std::string& path, const std::string& kind,
                        const std::string& config_json,
                        const std::vector<ParamRef>& tensors);

struct LoadedBundle {
  std::string kind;
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

LoadedBundle load_tensor_bundle(const std::string& path);

// Copies bundle tensors into the destination refs; name, order and shape
// must all match. Throws FormatError otherwise.
void fill_params_from_bundle(const LoadedBundle& bundle,
                             const std::vector<ParamRef>& dest);

// FNV-1a 64-bit hash of a file's bytes; used in provenance records.
uint64_t file_hash(const std::string& path);

std::string hash_string(uint64_t hash);

}  // namespace pacrnn

#endif  // PACRNN_SERIALIZE_H_
