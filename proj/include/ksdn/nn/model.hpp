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

#include "ksdn/errors.hpp"
#include "ksdn/nn/layers.hpp"
#include "ksdn/rng.hpp"
#include "ksdn/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ksdn::nn {

/// Separable-conv U-Net: dense stem, 4 encoder and 4 decoder stages with
/// additive skips, dense output conv producing a residual.
struct ModelConfig {
    int input_channels = 4;
    /// Stem width followed by the four encoder stage widths.
    std::array<int, 5> stage_widths{20, 40, 80, 160, 320};
    /// Separable convs per encoder stage; the last one has stride 2.
    int convs_per_encoder_stage = 2;
    int convs_per_decoder_stage = 1;
    int encoder_kernel = 5;
    int decoder_kernel = 3;
    int dense_kernel = 3;
    std::string activation = "relu";

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// The widths used by tests and desk-scale experiments.
ModelConfig tiny_config(std::array<int, 5> widths = {4, 4, 8, 8, 8});

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct ParamSpec {
    std::string name;
    std::vector<Index> shape;
    Index fan_in = 1;

    Index size() const {
        Index n = 1;
        for (Index d : shape) n *= d;
        return n;
    }
};

/// Every parameter of the architecture in execution order.
std::vector<ParamSpec> param_specs(const ModelConfig& config);

/// Multiply-accumulates for one forward pass over `megapixels` of Bayer input
/// (10^6 mosaic pixels = 2.5 * 10^5 packed positions). Bias adds, activations
/// and the residual add are not counted.
double count_macs(const ModelConfig& config, double megapixels = 1.0);

/// MACs of a single dense k x k conv evaluated at `positions` output sites.
inline double dense_conv_macs(Index cin, Index cout, Index kernel, double positions) {
    return static_cast<double>(cin * cout * kernel * kernel) * positions;
}

template <typename Scalar>
struct Parameter {
    std::string name;
    std::vector<Index> shape;
    ArrayX<Scalar> value;

    /// Row-major view as rows x (everything else).
    Eigen::Map<const Matrix<Scalar>> as_matrix() const {
        return {value.data(), shape[0], value.size() / shape[0]};
    }
    Eigen::Map<const Vector<Scalar>> as_vector() const { return {value.data(), value.size()}; }
};

template <typename Scalar>
class Model {
public:
    Model() = default;

    /// All weights zero: forward() is then the identity.
    explicit Model(ModelConfig config) : config_(std::move(config)) {
        config_.validate();
        for (const auto& spec : param_specs(config_)) {
            index_[spec.name] = params_.size();
            params_.push_back({spec.name, spec.shape, ArrayX<Scalar>::Zero(spec.size())});
        }
    }

    /// Fan-in-scaled uniform init: U(-b, b), b = sqrt(6 / fan_in); biases
    /// zero; the output conv is scaled by 0.1 so training starts near identity.
    static Model initialized(const ModelConfig& config, std::uint64_t seed) {
        Model m(config);
        const auto specs = param_specs(config);
        for (std::size_t i = 0; i < specs.size(); ++i) {
            auto& p = m.params_[i];
            if (p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".b") == 0) continue;
            double bound = std::sqrt(6.0 / static_cast<double>(specs[i].fan_in));
            if (p.name.rfind("out.", 0) == 0) bound *= 0.1;
            Stream rng(seed, static_cast<std::uint32_t>(i), 0, StreamPurpose::init);
            for (Index j = 0; j < p.value.size(); ++j) {
                p.value[j] = static_cast<Scalar>(rng.uniform(-bound, bound));
            }
        }
        return m;
    }

    const ModelConfig& config() const { return config_; }
    std::vector<Parameter<Scalar>>& params() { return params_; }
    const std::vector<Parameter<Scalar>>& params() const { return params_; }

    Parameter<Scalar>& param(const std::string& name) { return params_.at(lookup(name)); }
    const Parameter<Scalar>& param(const std::string& name) const { return params_.at(lookup(name)); }
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t index_of(const std::string& name) const { return lookup(name); }

    Index parameter_count() const {
        Index n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    template <typename Other>
    Model<Other> cast() const {
        Model<Other> out(config_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            out.params()[i].value = params_[i].value.template cast<Other>();
        }
        return out;
    }

private:
    std::size_t lookup(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) throw ValidationError("model has no parameter '" + name + "'");
        return it->second;
    }

    ModelConfig config_;
    std::vector<Parameter<Scalar>> params_;
    std::map<std::string, std::size_t> index_;
};

/// Per-parameter gradients, aligned with Model::params().
template <typename Scalar>
using Gradients = std::vector<ArrayX<Scalar>>;

template <typename Scalar>
Gradients<Scalar> zero_gradients(const Model<Scalar>& m) {
    Gradients<Scalar> g;
    for (const auto& p : m.params()) g.push_back(ArrayX<Scalar>::Zero(p.value.size()));
    return g;
}

}  // namespace ksdn::nn
