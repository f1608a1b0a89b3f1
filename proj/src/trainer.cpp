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

#include "ksdn/trainer.hpp"

#include "ksdn/nn/weights_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ksdn {

TrainConfig TrainConfig::for_clean_count(std::int64_t images) {
    if (images < 1) throw ValidationError("clean-image count must be >= 1");
    TrainConfig c;
    c.cycle_step = 50 * images;
    c.decay_until = 4000 * images;
    c.total = 8000 * images;
    return c;
}

void TrainConfig::validate() const {
    if (!(final_base_lr > 0.0) || !(base_lr >= final_base_lr) || !(max_lr > base_lr)) {
        throw ValidationError("learning rates must satisfy max_lr > base_lr >= final_base_lr > 0");
    }
    if (cycle_step < 1 || decay_until < 0 || total < 1) {
        throw ValidationError("cycle_step and total must be positive, decay_until non-negative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw ValidationError("Adam needs betas in [0, 1) and epsilon > 0");
    }
    if (log_every < 1 || checkpoint_every < 0) throw ValidationError("log_every >= 1, checkpoint_every >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"max_lr", c.max_lr},           {"base_lr", c.base_lr},
         {"final_base_lr", c.final_base_lr}, {"cycle_step", c.cycle_step},
         {"decay_until", c.decay_until}, {"total", c.total},
         {"decay_max_lr", c.decay_max_lr}, {"beta1", c.beta1},
         {"beta2", c.beta2},             {"epsilon", c.epsilon},
         {"seed", c.seed},               {"log_every", c.log_every},
         {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.max_lr = j.value("max_lr", d.max_lr);
    c.base_lr = j.value("base_lr", d.base_lr);
    c.final_base_lr = j.value("final_base_lr", d.final_base_lr);
    c.cycle_step = j.value("cycle_step", d.cycle_step);
    c.decay_until = j.value("decay_until", d.decay_until);
    c.total = j.value("total", d.total);
    c.decay_max_lr = j.value("decay_max_lr", d.decay_max_lr);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.epsilon = j.value("epsilon", d.epsilon);
    c.seed = j.value("seed", d.seed);
    c.log_every = j.value("log_every", d.log_every);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

double cyclic_lr(std::int64_t iteration, const TrainConfig& c) {
    if (iteration < 0) throw RangeError("cyclic_lr: iteration must be >= 0");
    const double t = c.decay_until > 0
                         ? std::min(1.0, static_cast<double>(iteration) / static_cast<double>(c.decay_until))
                         : 1.0;
    const double base = c.base_lr + (c.final_base_lr - c.base_lr) * t;
    const double peak = c.decay_max_lr ? c.max_lr * base / c.base_lr : c.max_lr;
    const std::int64_t period = 2 * c.cycle_step;
    const double phase = static_cast<double>(iteration % period) / static_cast<double>(c.cycle_step);
    const double tri = 1.0 - std::abs(phase - 1.0);
    return base + (peak - base) * tri;
}

std::string loss_csv(const std::vector<LossRecord>& log) {
    std::ostringstream out;
    out.precision(9);
    out << "iteration,lr,loss\n";
    for (const auto& r : log) out << r.iteration << ',' << r.lr << ',' << r.loss << '\n';
    return out.str();
}

double smoothed_head(const std::vector<LossRecord>& log, std::size_t window) {
    const std::size_t n = std::min(window, log.size());
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += log[i].loss;
    return s / static_cast<double>(n);
}

double smoothed_tail(const std::vector<LossRecord>& log, std::size_t window) {
    const std::size_t n = std::min(window, log.size());
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = log.size() - n; i < log.size(); ++i) s += log[i].loss;
    return s / static_cast<double>(n);
}

PairSource shuffled_pool(std::vector<TrainingPair> pool, std::uint64_t seed) {
    if (pool.empty()) throw ValidationError("training pool is empty");
    auto shared = std::make_shared<const std::vector<TrainingPair>>(std::move(pool));
    return [shared, seed](std::int64_t iteration) -> TrainingPair {
        const auto n = static_cast<std::int64_t>(shared->size());
        const auto epoch = static_cast<std::uint32_t>(iteration / n);
        std::vector<std::size_t> order(shared->size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Stream rng(seed, epoch, 0, StreamPurpose::shuffle);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
        return (*shared)[order[static_cast<std::size_t>(iteration % n)]];
    };
}

void save_checkpoint(const std::filesystem::path& weights_path, const nn::Model<float>& model,
                     const AdamState<float>& adam, const TrainConfig& config, std::int64_t iteration) {
    nn::save_weights(model, weights_path);
    std::filesystem::path moments = weights_path;
    moments.replace_extension(".adam.ksdn");
    nn::WeightFile file{model.config(), {}};
    for (std::size_t i = 0; i < model.params().size() && i < adam.m.size(); ++i) {
        const auto& p = model.params()[i];
        file.arrays.push_back({p.name + ".m", p.shape, adam.m[i]});
        file.arrays.push_back({p.name + ".v", p.shape, adam.v[i]});
    }
    nn::write_weight_file(moments, file);

    std::filesystem::path sidecar = weights_path;
    sidecar.replace_extension(".state.json");
    const nlohmann::json state = {{"iteration", iteration},
                                  {"adam_step", adam.step},
                                  {"lr", cyclic_lr(std::max<std::int64_t>(iteration, 0), config)},
                                  {"weights", weights_path.filename().string()},
                                  {"moments", moments.filename().string()},
                                  {"train_config", config}};
    std::ofstream out(sidecar);
    if (!out) throw IoError("cannot write " + sidecar.string());
    out << state.dump(2) << '\n';
}

TrainResult train(nn::Model<float> model, const PairSource& source, const TrainConfig& config,
                  const TrainOutputs& out) {
    config.validate();
    TrainResult res{std::move(model), {}, {}};
    res.adam = AdamState<float>::zeros(res.model);
    const bool writing = !out.dir.empty();
    if (writing) std::filesystem::create_directories(out.dir);

    auto write_log = [&] {
        if (!writing) return;
        std::ofstream csv(out.dir / (out.stem + ".loss.csv"));
        csv << loss_csv(res.log);
    };

    nn::ForwardCache<float> cache;
    for (std::int64_t it = 0; it < config.total; ++it) {
        const TrainingPair pair = source(it);
        const auto pred = nn::forward_cached(res.model, pair.input, cache);
        const auto l1 = l1_loss(pred, pair.target);
        const double lr = cyclic_lr(it, config);
        if (!std::isfinite(l1.loss)) {
            if (writing) {
                save_checkpoint(out.dir / (out.stem + ".diagnostic.ksdn"), res.model, res.adam, config, it);
                write_log();
            }
            throw NumericError("non-finite loss at iteration " + std::to_string(it) +
                               (writing ? "; diagnostic checkpoint written to " + out.dir.string() : ""));
        }
        if (it % config.log_every == 0 || it + 1 == config.total) res.log.push_back({it, lr, l1.loss});

        const auto back = nn::backward(res.model, cache, l1.grad);
        adam_step(res.model, back.grads, res.adam, lr, config.beta1, config.beta2, config.epsilon);

        if (writing && config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0 &&
            it + 1 != config.total) {
            save_checkpoint(out.dir / (out.stem + ".iter" + std::to_string(it + 1) + ".ksdn"), res.model, res.adam,
                            config, it + 1);
        }
    }
    if (writing) {
        save_checkpoint(out.dir / (out.stem + ".ksdn"), res.model, res.adam, config, config.total);
        write_log();
    }
    return res;
}

}  // namespace ksdn
