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

#include "ksdn/noise_model.hpp"
#include "ksdn/plane.hpp"
#include "ksdn/raw_image.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>

#include <string>
#include <vector>

namespace ksdn {

/// N aligned frames of one static scene at one ISO, in normalized luminance.
struct BurstStack {
    std::vector<PlaneF> frames;
    double iso = 100.0;
    CaptureMeta meta{};

    /// N >= 2 and all frames the same shape. Throws ShapeError otherwise.
    void validate() const;
};

/// Loads every *.pgm in `dir` (sorted by name) as one burst. Throws
/// CalibrationDataError naming the directory when it holds fewer than 2
/// frames or mixes ISOs.
BurstStack load_burst_dir(const std::string& dir);

struct MeanVariancePoint {
    double level = 0.0;     // mean of the per-pixel means that fell in the bin
    double variance = 0.0;  // average unbiased temporal variance of those pixels
    std::size_t count = 0;
};

struct BracketOptions {
    double bin_width = 1.0 / 256.0;
    std::size_t min_count = 200;
    double saturation_guard = 0.9;
    double dark_guard = 0.005;
};

/// Per-pixel arithmetic mean across frames.
PlaneD pixel_mean(const BurstStack& stack);

/// Brackets pixels by their temporal mean and pools their temporal variance.
/// Bins under `min_count` pixels or outside [dark_guard, saturation_guard] are
/// dropped; throws CalibrationDataError when nothing survives.
std::vector<MeanVariancePoint> bracket_variance(const BurstStack& stack, const PlaneD& mean_image,
                                                const BracketOptions& opts = {});

struct FitReport {
    double r2 = 0.0;
    std::vector<double> residuals;
    std::size_t n_points = 0;
    bool sigma2_clamped = false;
};

struct NoiseFit {
    NoiseParams params;
    FitReport report;
};

/// Count-weighted least squares of variance on level: slope -> k, intercept -> sigma2.
/// Needs >= 3 points spanning a level ratio of at least 4.
NoiseFit fit_noise_params(const std::vector<MeanVariancePoint>& points);

struct GainSample {
    double gain = 1.0;
    NoiseParams params;
};

struct IsoCurveFit {
    IsoCurves curves;
    double r2_k = 0.0;
    double r2_sigma2 = 0.0;
    bool clamped = false;
};

/// k = alpha * g + k_intercept and sigma2 = sigma_d2 * g^2 + sigma_r2 by
/// least squares on relative residuals (weights 1/y^2). Needs >= 3 distinct gains.
IsoCurveFit fit_iso_curves(const std::vector<GainSample>& samples, double iso_divisor = 100.0,
                           IsoRange valid = {});

/// One ISO's worth of calibration output.
struct IsoCalibration {
    double iso = 0.0;
    double gain = 0.0;
    NoiseFit fit;
    std::vector<MeanVariancePoint> points;
};

/// pixel_mean -> bracket_variance -> fit_noise_params for one burst.
IsoCalibration calibrate_burst(const BurstStack& stack, double iso_divisor = 100.0,
                               const BracketOptions& opts = {});

struct CalibrationReport {
    std::vector<IsoCalibration> per_iso;
    std::optional<IsoCurveFit> curves;
};

nlohmann::json to_json(const CalibrationReport& report);
/// iso,level,variance,count rows for every ISO.
std::string points_csv(const CalibrationReport& report);

/// Simulated grayscale chart: `levels.size()` square patches of side
/// `patch_side`, laid out on a near-square grid.
PlaneD grayscale_chart(const std::vector<double>& levels, Index patch_side);

/// Evenly spaced chart levels in [lo, hi].
std::vector<double> chart_levels(std::size_t n, double lo, double hi);

/// Burst of `frames` noisy captures of `clean`, frame i drawn from patch id i.
BurstStack simulate_burst(const PlaneD& clean, const NoiseParams& params, std::size_t frames,
                          std::uint64_t seed, double iso);

}  // namespace ksdn
