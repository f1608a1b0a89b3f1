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

#include "ksdn/dataset_synth.hpp"
#include "ksdn/nn/model.hpp"
#include "ksdn/nn/network.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace ksdn {

struct TrainConfig {
    double max_lr = 1e-3;
    double base_lr = 1e-4;        // triangle trough at iteration 0
    double final_base_lr = 1e-5;  // trough from decay_until on
    std::int64_t cycle_step = 50;   // half-cycle, iterations
    std::int64_t decay_until = 4000;
    std::int64_t total = 8000;
    /// Also shrink the peak, by the same factor as the trough.
    bool decay_max_lr = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::int64_t log_every = 1;
    std::int64_t checkpoint_every = 0;  // 0: final checkpoint only

    /// Schedule lengths as multiples of the clean-image count.
    static TrainConfig for_clean_count(std::int64_t images);
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Triangular wave between base(iter) and the peak, trough at iteration 0.
double cyclic_lr(std::int64_t iteration, const TrainConfig& config);

template <typename Scalar>
struct LossAndGrad {
    double loss = 0.0;
    Tensor<Scalar> grad;
};

/// Mean absolute error and its subgradient (zero where pred == target).
template <typename Scalar>
LossAndGrad<Scalar> l1_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target) {
    if (!pred.same_shape(target)) {
        throw ShapeError("l1_loss: " + pred.shape_string() + " vs " + target.shape_string());
    }
    const auto n = static_cast<double>(pred.size());
    const auto diff = (pred.flat().template cast<double>() - target.flat().template cast<double>()).eval();
    LossAndGrad<Scalar> out{diff.abs().sum() / n, Tensor<Scalar>::zeros_like(pred)};
    out.grad.flat() = (diff.sign() / n).template cast<Scalar>();
    return out;
}

template <typename Scalar>
struct AdamState {
    std::int64_t step = 0;
    nn::Gradients<Scalar> m;
    nn::Gradients<Scalar> v;

    static AdamState zeros(const nn::Model<Scalar>& model) {
        return {0, nn::zero_gradients(model), nn::zero_gradients(model)};
    }
};

/// One bias-corrected Adam update in place.
template <typename Scalar>
void adam_step(nn::Model<Scalar>& model, const nn::Gradients<Scalar>& grads, AdamState<Scalar>& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8) {
    auto& params = model.params();
    if (grads.size() != params.size()) throw ShapeError("adam_step: gradient count mismatch");
    if (state.m.empty()) state = AdamState<Scalar>::zeros(model);
    ++state.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto g = grads[i].template cast<double>();
        auto m = (beta1 * state.m[i].template cast<double>() + (1.0 - beta1) * g).eval();
        auto v = (beta2 * state.v[i].template cast<double>() + (1.0 - beta2) * g.square()).eval();
        const auto update = (lr * (m / c1) / ((v / c2).sqrt() + epsilon)).eval();
        params[i].value = (params[i].value.template cast<double>() - update).template cast<Scalar>();
        state.m[i] = m.template cast<Scalar>();
        state.v[i] = v.template cast<Scalar>();
    }
}

struct LossRecord {
    std::int64_t iteration = 0;
    double lr = 0.0;
    double loss = 0.0;
};

std::string loss_csv(const std::vector<LossRecord>& log);

/// Mean loss of the first / last `window` records.
double smoothed_head(const std::vector<LossRecord>& log, std::size_t window);
double smoothed_tail(const std::vector<LossRecord>& log, std::size_t window);

/// Supplies the training pair for an iteration; must be deterministic.
using PairSource = std::function<TrainingPair(std::int64_t iteration)>;

/// Cycles through `pool` in per-epoch shuffled order derived from `seed`.
PairSource shuffled_pool(std::vector<TrainingPair> pool, std::uint64_t seed);

struct TrainOutputs {
    std::filesystem::path dir;  // empty: write nothing
    std::string stem = "model";
};

struct TrainResult {
    nn::Model<float> model;
    AdamState<float> adam;
    std::vector<LossRecord> log;
};

/// Batch-1 L1/Adam loop. Writes the loss CSV and checkpoints when `out.dir` is
/// set. A non-finite loss writes "<stem>.diagnostic.ksdn" and throws NumericError.
TrainResult train(nn::Model<float> model, const PairSource& source, const TrainConfig& config,
                  const TrainOutputs& out = {});

/// Checkpoint: weights, Adam moments ("<layer>.m" / ".v") and a JSON sidecar.
void save_checkpoint(const std::filesystem::path& weights_path, const nn::Model<float>& model,
                     const AdamState<float>& adam, const TrainConfig& config, std::int64_t iteration);

}  // namespace ksdn
