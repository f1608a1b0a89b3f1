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

#include "ksdn/hash.hpp"
#include "ksdn/isp.hpp"

#include <doctest.h>
#include <zlib.h>

#include <cmath>
#include <string>

using namespace ksdn;

namespace {

const std::string kData = KSDN_TEST_DATA;

// Gray scene sampled through the CFA: every site carries the scene value.
PlaneD column_profile(Index rows, Index cols, std::uint64_t seed) {
    Stream rng(seed, 0, 0, StreamPurpose::test);
    PlaneD m(rows, cols);
    for (Index c = 0; c < cols; ++c) m.col(c).setConstant(rng.uniform(0.05, 0.95));
    return m;
}

bool interior(Index r, Index c, Index rows, Index cols, Index margin) {
    return r >= margin && c >= margin && r < rows - margin && c < cols - margin;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           b[at + 3];
}

// Walks the chunks, checks every CRC and inflates IDAT back to scanlines.
std::vector<std::uint8_t> decode_png_pixels(const std::vector<std::uint8_t>& png, Index rows, Index cols) {
    REQUIRE(png.size() > 8);
    std::size_t at = 8;
    std::vector<std::uint8_t> idat;
    bool ended = false;
    while (at + 12 <= png.size()) {
        const std::uint32_t len = be32(png, at);
        const std::string type(png.begin() + static_cast<long>(at + 4), png.begin() + static_cast<long>(at + 8));
        const auto crc = crc32(crc32(0L, Z_NULL, 0), png.data() + at + 4, len + 4);
        CHECK(crc == be32(png, at + 8 + len));
        if (type == "IHDR") {
            CHECK(be32(png, at + 8) == static_cast<std::uint32_t>(cols));
            CHECK(be32(png, at + 12) == static_cast<std::uint32_t>(rows));
        }
        if (type == "IDAT") idat.insert(idat.end(), png.begin() + static_cast<long>(at + 8),
                                        png.begin() + static_cast<long>(at + 8 + len));
        if (type == "IEND") ended = true;
        at += 12 + len;
    }
    CHECK(ended);
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(rows * (cols * 3 + 1)));
    uLongf raw_len = raw.size();
    REQUIRE(uncompress(raw.data(), &raw_len, idat.data(), idat.size()) == Z_OK);
    REQUIRE(raw_len == raw.size());
    std::vector<std::uint8_t> pixels;
    for (Index r = 0; r < rows; ++r) {
        const auto* line = raw.data() + r * (cols * 3 + 1);
        CHECK(line[0] == 0);
        pixels.insert(pixels.end(), line + 1, line + 1 + cols * 3);
    }
    return pixels;
}

}  // namespace

TEST_CASE("white balance") {
    PlaneD m(2, 2);
    m << 0.3, 0.4, 0.5, 0.6;
    CHECK((white_balance(m, BayerPattern::rggb, {1, 1, 1}) == m).all());
    const PlaneD w = white_balance(m, BayerPattern::rggb, {2, 1, 1});
    CHECK(w(0, 0) == 0.6);
    CHECK(w(0, 1) == 0.4);
    CHECK(w(1, 0) == 0.5);
    CHECK(w(1, 1) == 0.6);
    const PlaneD b = white_balance(m, BayerPattern::bggr, {1, 1, 2});
    CHECK(b(0, 0) == 0.6);
    CHECK(b(1, 1) == 0.6);
    PlaneD bright = PlaneD::Constant(2, 2, 0.6);
    CHECK(white_balance(bright, BayerPattern::rggb, {2, 1, 1})(0, 0) == 1.0);
}

TEST_CASE("demosaic of a uniform field is uniform everywhere") {
    for (auto p : {BayerPattern::rggb, BayerPattern::bggr, BayerPattern::grbg, BayerPattern::gbrg}) {
        for (auto method : {DemosaicMethod::ppg, DemosaicMethod::bilinear}) {
            const RgbImage rgb = demosaic(PlaneD::Constant(12, 16, 0.3137), p, method);
            for (const auto& ch : rgb.channels) CHECK((ch == 0.3137).all());
        }
    }
}

TEST_CASE("PPG reproduces a linear ramp away from the border") {
    for (auto p : {BayerPattern::rggb, BayerPattern::gbrg}) {
        PlaneD ramp(16, 24);
        for (Index c = 0; c < 24; ++c) ramp.col(c).setConstant(0.1 + 0.03 * static_cast<double>(c));
        const RgbImage rgb = demosaic_ppg(ramp, p);
        for (Index r = 0; r < 16; ++r)
            for (Index c = 0; c < 24; ++c) {
                if (!interior(r, c, 16, 24, 2)) continue;
                for (const auto& ch : rgb.channels) CHECK(std::abs(ch(r, c) - ramp(r, c)) < 1e-6);
            }
        const RgbImage vertical = demosaic_ppg(PlaneD(ramp.block(0, 0, 16, 16).transpose()), p);
        for (Index r = 2; r < 14; ++r)
            for (Index c = 2; c < 14; ++c)
                for (const auto& ch : vertical.channels) CHECK(std::abs(ch(r, c) - ramp(c, r)) < 1e-6);
    }
}

TEST_CASE("a gray step edge produces no false color") {
    PlaneD step(16, 20);
    step.leftCols(9).setConstant(0.2);
    step.rightCols(11).setConstant(0.7);
    const RgbImage rgb = demosaic_ppg(step, BayerPattern::rggb);
    for (Index r = 2; r < 14; ++r) {
        for (Index c = 2; c < 18; ++c) {
            if (std::abs(static_cast<double>(c) - 8.5) < 2.0) continue;
            CHECK(rgb.channels[0](r, c) == rgb.channels[1](r, c));
            CHECK(rgb.channels[2](r, c) == rgb.channels[1](r, c));
        }
    }
}

TEST_CASE("achromatic scenes render with R = G = B away from the border") {
    CaptureMeta meta;
    meta.ccm << 1.72, -0.52, -0.20, -0.28, 1.58, -0.30, 0.04, -0.62, 1.58;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const PlaneD cols = column_profile(20, 28, seed);
        for (const PlaneD& scene : {cols, PlaneD(column_profile(28, 20, seed + 10).transpose())}) {
            for (auto p : {BayerPattern::rggb, BayerPattern::grbg}) {
                meta.bayer_pattern = p;
                const Image8 img = render_srgb(PlaneF(scene.cast<float>()), meta);
                for (Index r = 2; r < img.rows - 2; ++r)
                    for (Index c = 2; c < img.cols - 2; ++c) {
                        CHECK(img.at(r, c, 0) == img.at(r, c, 1));
                        CHECK(img.at(r, c, 2) == img.at(r, c, 1));
                    }
            }
        }
    }
}

TEST_CASE("uniform field renders to round(255 c^(1/2.2)) everywhere") {
    CaptureMeta meta;
    meta.ccm << 1.5, -0.25, -0.25, -0.25, 1.5, -0.25, 0.0, -0.5, 1.5;
    for (double c : {0.0, 0.01, 0.18, 0.5, 0.77, 1.0}) {
        const Image8 img = render_srgb(PlaneF(PlaneF::Constant(8, 10, static_cast<float>(c))), meta);
        const double v = std::pow(static_cast<double>(static_cast<float>(c)), 1.0 / 2.2) * 255.0;
        const auto expected = static_cast<std::uint8_t>(std::floor(v + 0.5));
        for (auto px : img.rgb) CHECK(px == expected);
    }
}

TEST_CASE("color correction, gamma and quantization") {
    RgbImage px;
    px.channels = {PlaneD::Constant(1, 1, 0.2), PlaneD::Constant(1, 1, 0.4), PlaneD::Constant(1, 1, 0.9)};
    Eigen::Matrix3d ccm = Eigen::Matrix3d::Identity();
    const RgbImage same = color_correct(px, ccm);
    for (std::size_t i = 0; i < 3; ++i) CHECK(same.channels[i](0, 0) == doctest::Approx(px.channels[i](0, 0)));
    ccm.row(0) << 0.5, 0.5, 0.0;
    CHECK(color_correct(px, ccm).channels[0](0, 0) == doctest::Approx(0.3));
    ccm << 1.6, -0.4, -0.2, -0.3, 1.5, -0.2, 0.1, -0.6, 1.5;
    RgbImage gray;
    gray.channels = {PlaneD::Constant(1, 1, 0.37), PlaneD::Constant(1, 1, 0.37), PlaneD::Constant(1, 1, 0.37)};
    for (const auto& ch : color_correct(gray, ccm).channels) CHECK(ch(0, 0) == 0.37);

    RgbImage ramp;
    for (auto& ch : ramp.channels) {
        ch.resize(1, 5);
        ch << 0.0, 0.25, 0.5, 0.75, 1.0;
    }
    const RgbImage g = gamma_encode(ramp);
    CHECK(g.stage == RgbImage::Stage::gamma);
    CHECK(g.channels[0](0, 0) == 0.0);
    CHECK(g.channels[0](0, 4) == 1.0);
    CHECK(g.channels[0](0, 2) == doctest::Approx(0.7297).epsilon(1e-4));
    for (Index i = 0; i < 4; ++i) CHECK(g.channels[0](0, i) < g.channels[0](0, i + 1));
    CHECK_THROWS_AS(gamma_encode(g), ValidationError);
    CHECK_THROWS_AS(color_correct(g, ccm), ValidationError);
    CHECK_THROWS_AS(gamma_encode(ramp, 0.0), ValidationError);

    RgbImage q;
    q.channels = {PlaneD::Constant(1, 1, 0.5), PlaneD::Constant(1, 1, 2.0), PlaneD::Constant(1, 1, -0.1)};
    const Image8 img = quantize8(q);
    CHECK(img.at(0, 0, 0) == 128);  // 127.5 rounds away from zero
    CHECK(img.at(0, 0, 1) == 255);
    CHECK(img.at(0, 0, 2) == 0);

    CHECK(parse_demosaic_method("bilinear") == DemosaicMethod::bilinear);
    CHECK_THROWS_AS(parse_demosaic_method("ahd"), ValidationError);
    CHECK_THROWS_AS(demosaic_ppg(PlaneD::Zero(5, 4), BayerPattern::rggb), ShapeError);
}

TEST_CASE("every stage maps [0,1] into [0,1]") {
    Stream rng(8, 0, 0, StreamPurpose::test);
    PlaneD m(24, 32);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
    Eigen::Matrix3d ccm;
    ccm << 2.0, -0.7, -0.3, -0.5, 1.9, -0.4, 0.2, -1.0, 1.8;
    const auto in01 = [](const PlaneD& p) { return p.minCoeff() >= 0.0 && p.maxCoeff() <= 1.0; };
    CHECK(in01(white_balance(m, BayerPattern::rggb, {2.5, 1.0, 1.8})));
    for (auto method : {DemosaicMethod::ppg, DemosaicMethod::bilinear}) {
        const RgbImage rgb = demosaic(m, BayerPattern::rggb, method);
        for (const auto& ch : rgb.channels) CHECK(in01(ch));
        for (const auto& ch : color_correct(rgb, ccm).channels) CHECK(in01(ch));
        for (const auto& ch : gamma_encode(rgb).channels) CHECK(in01(ch));
    }
}

TEST_CASE("fixture raws render to golden PNG bytes") {
    struct Golden {
        const char* file;
        DemosaicMethod method;
        const char* sha256;
    };
    const Golden goldens[] = {
        {"scene_rggb", DemosaicMethod::ppg, "49e7e19472a6a8d986ef3a07b4dbeac1ca4e0d930b0dfe10ddb4f63cc1a8edb5"},
        {"chart_bggr", DemosaicMethod::ppg, "282f5e927155d7926097fc509ea344dc58f68e77822cbe3c7ea6d0fce1c30b05"},
        {"edges_gbrg", DemosaicMethod::ppg, "70f576e9dfb69fd18fd5013e791bb1d68c613039a330a687bf6386aae1eb0888"},
        {"edges_gbrg", DemosaicMethod::bilinear, "bc65f4f4c663e141a86bb317d5f4b7fffb7434310857fd3584cafd15aad8bc7a"},
    };
    for (const auto& g : goldens) {
        CAPTURE(std::string(g.file));
        const RawImage raw = load_raw(kData + "/isp/" + g.file + ".pgm");
        RenderOptions opts;
        opts.demosaic = g.method;
        const Image8 img = render_srgb(raw, opts);
        const auto png = encode_png(img);
        CHECK(sha256_hex(png) == g.sha256);
        CHECK(decode_png_pixels(png, img.rows, img.cols) == img.rgb);
        CHECK(encode_png(render_srgb(raw, opts)) == png);
    }
}

TEST_CASE("PNG container") {
    Image8 img{3, 30000, {}};  // each scanline is longer than one stored deflate block
    img.rgb.resize(static_cast<std::size_t>(img.rows * img.cols * 3));
    for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>(i * 7 + i / 5);
    const auto png = encode_png(img);
    CHECK(png[0] == 0x89);
    CHECK(std::string(png.begin() + 1, png.begin() + 4) == "PNG");
    CHECK(decode_png_pixels(png, img.rows, img.cols) == img.rgb);
}
