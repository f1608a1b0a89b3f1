// Copyright 2026 The ksdn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "ksdn/nn/model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ksdn::nn {

struct NamedArray {
    std::string name;
    std::vector<Index> shape;
    Eigen::ArrayXf data;
};

/// Contents of a KSDN file: "KSDN", u32 version, u32-prefixed JSON config,
/// then (u16 name length, name, u8 ndim, u32 dims, f32 data) blocks to EOF.
/// Every integer and float is little-endian.
struct WeightFile {
    ModelConfig config;
    std::vector<NamedArray> arrays;
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::string encode_weight_file(const WeightFile& file);
WeightFile decode_weight_file(const std::string& bytes, const std::string& origin = "<memory>");

void write_weight_file(const std::filesystem::path& path, const WeightFile& file);
WeightFile read_weight_file(const std::filesystem::path& path);

void save_weights(const Model<float>& model, const std::filesystem::path& path);

/// Loads and checks every layer against the embedded config.
Model<float> load_weights(const std::filesystem::path& path);

/// Builds a model from decoded arrays; throws ValidationError naming the
/// first missing, unknown or misshapen layer.
Model<float> model_from_arrays(const ModelConfig& config, const std::vector<NamedArray>& arrays);

}  // namespace ksdn::nn
