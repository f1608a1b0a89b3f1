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
#include "ksdn/noise_model.hpp"
#include "ksdn/raw_image.hpp"
#include "ksdn/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ksdn {

/// How training pairs handle ISO.
///   ksigma:     random ISO, both tensors mapped through the k-Sigma transform
///   iso_aug:    random ISO, luminance domain
///   single_iso: fixed ISO, luminance domain
struct SynthMode {
    enum class Kind { ksigma, iso_aug, single_iso };
    Kind kind = Kind::ksigma;
    double iso = 0.0;  // single_iso only

    static SynthMode ksigma() { return {Kind::ksigma, 0.0}; }
    static SynthMode iso_aug() { return {Kind::iso_aug, 0.0}; }
    static SynthMode single_iso(double iso);

    /// Accepts "ksigma", "iso-aug" / "iso_aug", "single-iso:<n>" / "single_iso:<n>".
    static SynthMode parse(const std::string& text);
    std::string to_string() const;

    bool transforms() const { return kind == Kind::ksigma; }
    friend bool operator==(const SynthMode&, const SynthMode&) = default;
};

struct TrainingPair {
    PackedTensor input;
    PackedTensor target;
    NoiseParams params;
    double iso = 0.0;
};

/// Identifies every random draw of one pair.
struct PairKey {
    std::uint64_t seed = 0;
    std::uint32_t pair_id = 0;
};

/// Log-uniform over `range`, or the fixed ISO in single_iso mode.
double draw_iso(const SynthMode& mode, const IsoRange& range, Stream& rng);

/// Synthesizes a noisy observation of `clean` and returns (input, target)
/// in the mode's domain with the noise parameters that produced it.
TrainingPair make_pair(const PackedTensor& clean, const IsoCurves& curves, const SynthMode& mode,
                       const IsoRange& iso_range, PairKey key);

/// Same, with the noise parameters given directly (bypasses the ISO curves).
TrainingPair make_pair_with_params(const PackedTensor& clean, const NoiseParams& params, const SynthMode& mode,
                                   PairKey key, double iso = 0.0);

/// Immerkaer's fast noise estimate, averaged over the four packed channels.
double estimate_noise_sigma(const PlaneF& normalized_mosaic);

struct PipelineConfig {
    Index patch_size = 1024;  // Bayer pixels; 512 packed
    bool augment = true;
    AugmentRanges ranges{};
    SynthMode mode = SynthMode::ksigma();
    IsoRange iso_range{};
    std::uint64_t seed = 0;
    /// Sources whose estimated noise sigma exceeds this are dropped; <= 0 disables.
    double max_source_sigma = 0.0;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

struct CleanSource {
    std::string name;
    PlaneF mosaic;  // normalized
    BayerPattern pattern = BayerPattern::rggb;
};

/// Deterministic, random-access stream of training pairs. Pair i depends only
/// on (seed, i, sources, config), so any subset can be built in any order.
class PairPipeline {
public:
    PairPipeline(std::vector<CleanSource> sources, IsoCurves curves, PipelineConfig config);

    static PairPipeline from_files(const std::vector<std::string>& clean_files, const IsoCurves& curves,
                                   const PipelineConfig& config);

    /// Augmented, packed clean patch for pair `index` before noise synthesis.
    PackedTensor clean_patch(std::uint64_t index) const;
    TrainingPair pair(std::uint64_t index) const;

    const std::vector<CleanSource>& sources() const { return sources_; }
    const std::vector<std::string>& rejected() const { return rejected_; }
    const PipelineConfig& config() const { return config_; }
    const IsoCurves& curves() const { return curves_; }

private:
    std::vector<CleanSource> sources_;
    std::vector<std::string> rejected_;
    IsoCurves curves_;
    PipelineConfig config_;
};

struct DatasetManifest {
    std::vector<std::string> clean_files;
    PipelineConfig pipeline;
    IsoCurves curves;
    std::uint64_t pair_count = 0;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

/// Piecewise-smooth test scene (gradients, discs, bars, fine texture) as a
/// normalized mosaic in [0.02, 0.9].
PlaneF synthetic_scene(Index rows, Index cols, std::uint64_t seed);

struct TileOptions {
    Index tile = 256;    // packed pixels
    Index overlap = 32;  // packed pixels
    /// Extra image context forwarded around each tile and cropped away.
    Index context = 96;  // packed pixels; covers the U-Net receptive radius (79)
};

/// Runs the model on an arbitrary-size packed tensor, reflect-padding to a
/// multiple of 16 and cropping back.
PackedTensor forward_padded(const nn::Model<float>& model, const PackedTensor& x);

/// Overlapping tiles blended with linear ramps across each overlap. Each tile
/// is forwarded inside a 16-divisible window of the padded image that extends
/// up to `context` pixels past it, so tile edges see real neighbours.
PackedTensor forward_tiled(const nn::Model<float>& model, const PackedTensor& x, const TileOptions& opts = {});

/// Full inference: normalize, pack, transform, tiled forward, inverse, unpack,
/// de-normalize. `params_override` replaces the curve lookup when set.
RawImage denoise_image(const RawImage& raw, const nn::Model<float>& model, const IsoCurves& curves,
                       const SynthMode& mode, const TileOptions& tiles = {},
                       const NoiseParams* params_override = nullptr);

/// The normalized-domain core of denoise_image, before de-normalization.
PackedTensor denoise_packed(const PackedTensor& noisy, const nn::Model<float>& model, const NoiseParams& params,
                            const SynthMode& mode, const TileOptions& tiles = {});

}  // namespace ksdn
