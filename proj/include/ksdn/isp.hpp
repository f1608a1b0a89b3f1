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

#include "ksdn/plane.hpp"
#include "ksdn/raw_image.hpp"
#include "ksdn/tensor.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ksdn {

// Evaluation-only post-processing: white balance, demosaic, color correction,
// gamma. Stages work in double and each maps [0,1] into [0,1].

struct RgbImage {
    enum class Stage { linear, gamma };

    std::array<PlaneD, 3> channels;
    Stage stage = Stage::linear;

    Index rows() const { return channels[0].rows(); }
    Index cols() const { return channels[0].cols(); }
};

/// Interleaved 8-bit RGB, row-major.
struct Image8 {
    Index rows = 0;
    Index cols = 0;
    std::vector<std::uint8_t> rgb;

    std::uint8_t at(Index r, Index c, int ch) const {
        return rgb[static_cast<std::size_t>((r * cols + c) * 3 + ch)];
    }
    friend bool operator==(const Image8&, const Image8&) = default;
};

enum class DemosaicMethod { ppg, bilinear };

DemosaicMethod parse_demosaic_method(const std::string& s);

/// Multiplies each site by the gain of its color and clamps to [0,1].
PlaneD white_balance(const PlaneD& mosaic, BayerPattern pattern, const std::array<double, 3>& gains);

/// Patterned pixel grouping: gradient-directed green at R/B sites, then R/B from
/// green-guided color differences. The outer 2 pixels use the bilinear fallback.
RgbImage demosaic_ppg(const PlaneD& mosaic, BayerPattern pattern);

/// Same-color average over the 3x3 neighborhood.
RgbImage demosaic_bilinear(const PlaneD& mosaic, BayerPattern pattern);

RgbImage demosaic(const PlaneD& mosaic, BayerPattern pattern, DemosaicMethod method);

/// Per-pixel 3x3 matrix multiply, clamped to [0,1]. Gray pixels map to
/// themselves exactly whenever the matrix rows sum to exactly 1.
RgbImage color_correct(const RgbImage& rgb, const Eigen::Matrix3d& ccm);

/// x -> x^(1/gamma) after clamping to [0,1].
RgbImage gamma_encode(const RgbImage& rgb, double gamma = 2.2);

/// Round-half-away-from-zero to 8 bits.
Image8 quantize8(const RgbImage& rgb);

struct RenderOptions {
    DemosaicMethod demosaic = DemosaicMethod::ppg;
    double gamma = 2.2;
};

/// normalize (clamped to [0,1]) -> white_balance -> demosaic -> color_correct
/// -> gamma_encode -> quantize8.
Image8 render_srgb(const RawImage& raw, const RenderOptions& opts = {});
Image8 render_srgb(const PlaneF& normalized_mosaic, const CaptureMeta& meta,
                   const RenderOptions& opts = {});
Image8 render_srgb(const PackedTensor& packed, const CaptureMeta& meta,
                   const RenderOptions& opts = {});

std::vector<std::uint8_t> encode_png(const Image8& image);
void write_png(const Image8& image, const std::string& path);

}  // namespace ksdn
