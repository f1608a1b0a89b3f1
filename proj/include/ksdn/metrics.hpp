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

#include "ksdn/isp.hpp"
#include "ksdn/plane.hpp"
#include "ksdn/raw_image.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cmath>
#include <limits>
#include <vector>

namespace ksdn {

/// PSNR in dB. Identical inputs give +infinity, which `is_identical()` reports
/// and the JSON writer emits as the string "inf".
struct Psnr {
    double db = 0.0;

    bool is_identical() const { return std::isinf(db) && db > 0.0; }
    static Psnr identical() { return {std::numeric_limits<double>::infinity()}; }
};

inline Psnr psnr_from_mse(double mse, double peak) {
    if (mse == 0.0) return Psnr::identical();
    return {10.0 * std::log10(peak * peak / mse)};
}

/// 10 log10(peak^2 / MSE) over all elements.
template <typename DerivedA, typename DerivedB>
Psnr psnr(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b, double peak) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("psnr: shape mismatch");
    const double mse =
        (a.derived().template cast<double>() - b.derived().template cast<double>()).square().mean();
    return psnr_from_mse(mse, peak);
}

/// PSNR over every RGB byte of two 8-bit images (peak 255).
Psnr psnr(const Image8& a, const Image8& b);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over all valid (fully inside) Gaussian windows.
double ssim(const PlaneD& a, const PlaneD& b, double peak, const SsimOptions& opts = {});

/// SSIM on Rec.601 luma of two 8-bit RGB images (peak 255).
double ssim(const Image8& a, const Image8& b, const SsimOptions& opts = {});

/// Rec.601 luma of an 8-bit RGB image, unrounded.
PlaneD luma601(const Image8& img);

struct Rect {
    Index x = 0;
    Index y = 0;
    Index w = 0;
    Index h = 0;
};

Image8 crop(const Image8& img, const Rect& r);

struct RoiScore {
    Rect rect;
    Psnr psnr;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<RoiScore> rois;
    Psnr mean_psnr;
    double mean_ssim = 0.0;
};

/// Scores two already-rendered sRGB images per ROI (whole image when `rois` is empty).
EvalReport evaluate_rendered(const Image8& result, const Image8& reference, const std::vector<Rect>& rois);

/// Renders both raws through render_srgb with `meta` and scores them per ROI.
EvalReport evaluate(const RawImage& result, const RawImage& reference, const CaptureMeta& meta,
                    const std::vector<Rect>& rois, const RenderOptions& opts = {});

nlohmann::json to_json(const EvalReport& report);

}  // namespace ksdn
