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
#include "ksdn/plane.hpp"
#include "ksdn/rng.hpp"
#include "ksdn/tensor.hpp"

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <array>
#include <string>

namespace ksdn {

enum class BayerPattern { rggb, bggr, grbg, gbrg };

std::string to_string(BayerPattern p);
BayerPattern parse_bayer_pattern(const std::string& s);

enum class CfaColor { red = 0, green = 1, blue = 2 };

/// Color sampled at mosaic site (row, col).
CfaColor cfa_color(BayerPattern p, Index row, Index col);

/// (row, col) offsets inside a 2x2 tile of the R, Gr, Gb and B samples.
/// Gr is the green on the red row.
std::array<std::array<Index, 2>, 4> packed_offsets(BayerPattern p);

struct CaptureMeta {
    BayerPattern bayer_pattern = BayerPattern::rggb;
    int black_level = 0;
    int white_level = 65535;
    double iso = 100.0;
    std::array<double, 3> wb_gains{1.0, 1.0, 1.0};
    Eigen::Matrix3d ccm = Eigen::Matrix3d::Identity();

    /// Throws ValidationError on black >= white, non-positive WB gains or CCM
    /// rows that do not sum to 1 within 0.01.
    void validate() const;

    friend bool operator==(const CaptureMeta&, const CaptureMeta&) = default;
};

void to_json(nlohmann::json& j, const CaptureMeta& m);
void from_json(const nlohmann::json& j, CaptureMeta& m);

struct RawImage {
    PlaneU16 data;
    CaptureMeta meta;

    Index rows() const { return data.rows(); }
    Index cols() const { return data.cols(); }

    /// Even dimensions, values <= white_level, valid metadata.
    void validate() const;
};

/// "<dir>/<stem>.json" for "<dir>/<stem>.pgm".
std::string sidecar_path(const std::string& pgm_path);

/// 16-bit binary PGM (big-endian samples) plus a JSON sidecar holding CaptureMeta.
RawImage load_raw(const std::string& path);
void save_raw(const RawImage& image, const std::string& path);

/// (DN - black) / (white - black). Values below zero are preserved.
PlaneF normalize(const RawImage& image);

/// Inverse of normalize: round-half-away-from-zero to DN, clamped to [0, white_level].
PlaneU16 denormalize(const PlaneF& mosaic, const CaptureMeta& meta);

/// 2x2 tiles to four half-resolution channels ordered R, Gr, Gb, B.
PackedTensor pack_rggb(const PlaneF& mosaic, BayerPattern pattern);
PlaneF unpack_rggb(const PackedTensor& packed, BayerPattern pattern);

/// Flips a mosaic and re-crops so the Bayer phase is unchanged: on every
/// flipped axis the leading and trailing row/column are dropped, so the output
/// shrinks by 2 along that axis.
template <typename Scalar>
Plane<Scalar> bayer_augment(const Plane<Scalar>& mosaic, bool h_flip, bool v_flip) {
    if (mosaic.rows() % 2 != 0 || mosaic.cols() % 2 != 0 || mosaic.rows() < 4 ||
        mosaic.cols() < 4) {
        throw ShapeError("bayer_augment: mosaic must be even-sized and at least 4x4");
    }
    Plane<Scalar> out = mosaic;
    if (h_flip) {
        Plane<Scalar> flipped = out.rowwise().reverse();
        out = flipped.block(0, 1, flipped.rows(), flipped.cols() - 2);
    }
    if (v_flip) {
        Plane<Scalar> flipped = out.colwise().reverse();
        out = flipped.block(1, 0, flipped.rows() - 2, flipped.cols());
    }
    return out;
}

struct Flips {
    bool h = false;
    bool v = false;
};

inline Flips random_flips(Stream& rng) { return {rng.coin(), rng.coin()}; }

struct CropOrigin {
    Index row = 0;
    Index col = 0;
};

/// Even-aligned origin for a size x size crop. Throws ShapeError when the crop
/// does not fit or `size` is odd.
CropOrigin random_crop_origin(Index rows, Index cols, Index size, Stream& rng);

template <typename Scalar>
Plane<Scalar> random_crop(const Plane<Scalar>& mosaic, Index size, Stream& rng) {
    const CropOrigin o = random_crop_origin(mosaic.rows(), mosaic.cols(), size, rng);
    return mosaic.block(o.row, o.col, size, size);
}

struct AugmentRanges {
    std::array<double, 2> brightness{0.5, 1.5};
    std::array<double, 2> contrast{0.8, 1.2};
};

/// x -> contrast * (gain * x - m) + m with m the mean after gain; clamped to >= 0.
template <typename Derived>
typename Derived::PlainObject adjust_brightness_contrast(const Eigen::ArrayBase<Derived>& patch,
                                                         double brightness_gain,
                                                         double contrast_factor) {
    using Scalar = typename Derived::Scalar;
    const auto gained = (patch.derived().template cast<double>() * brightness_gain).eval();
    const double mean = gained.mean();
    return (contrast_factor * (gained - mean) + mean).max(0.0).template cast<Scalar>();
}

}  // namespace ksdn
