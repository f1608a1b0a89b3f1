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

#include "ksdn/isp.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ksdn {

namespace {

constexpr int kBorder = 2;

// Reflect-101 keeps the Bayer parity of an out-of-range index.
inline Index reflect(Index i, Index n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return std::clamp<Index>(i, 0, n - 1);
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

struct Mosaic {
    const PlaneD& m;
    BayerPattern pattern;

    double at(Index r, Index c) const { return m(reflect(r, m.rows()), reflect(c, m.cols())); }
    int color(Index r, Index c) const { return static_cast<int>(cfa_color(pattern, r, c)); }
};

// Same-color 3x3 average at (r, c), clipped to the image. The mean is anchored
// on the first sample so equal samples reproduce that value exactly.
double neighborhood_mean(const Mosaic& mo, Index r, Index c, int color) {
    double anchor = 0.0;
    double dev = 0.0;
    int n = 0;
    for (Index dr = -1; dr <= 1; ++dr) {
        for (Index dc = -1; dc <= 1; ++dc) {
            const Index rr = r + dr;
            const Index cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= mo.m.rows() || cc >= mo.m.cols()) continue;
            if (mo.color(rr, cc) != color) continue;
            const double v = mo.m(rr, cc);
            if (n == 0) anchor = v; else dev += v - anchor;
            ++n;
        }
    }
    return n == 0 ? 0.0 : anchor + dev / n;
}

void bilinear_at(const Mosaic& mo, RgbImage& out, Index r, Index c) {
    const int native = mo.color(r, c);
    for (int ch = 0; ch < 3; ++ch) {
        out.channels[static_cast<std::size_t>(ch)](r, c) =
            ch == native ? mo.m(r, c) : neighborhood_mean(mo, r, c, ch);
    }
}

RgbImage blank_rgb(Index rows, Index cols) {
    RgbImage out;
    for (auto& ch : out.channels) ch = PlaneD::Zero(rows, cols);
    out.stage = RgbImage::Stage::linear;
    return out;
}

void check_mosaic(const PlaneD& mosaic) {
    if (mosaic.rows() < 2 || mosaic.cols() < 2 || mosaic.rows() % 2 || mosaic.cols() % 2) {
        throw ShapeError("demosaic: mosaic must have even dimensions >= 2");
    }
}

}  // namespace

DemosaicMethod parse_demosaic_method(const std::string& s) {
    if (s == "ppg") return DemosaicMethod::ppg;
    if (s == "bilinear") return DemosaicMethod::bilinear;
    throw ValidationError("unknown demosaic method '" + s + "' (expected ppg or bilinear)");
}

PlaneD white_balance(const PlaneD& mosaic, BayerPattern pattern, const std::array<double, 3>& gains) {
    PlaneD out(mosaic.rows(), mosaic.cols());
    for (Index r = 0; r < mosaic.rows(); ++r) {
        for (Index c = 0; c < mosaic.cols(); ++c) {
            const auto color = static_cast<std::size_t>(cfa_color(pattern, r, c));
            out(r, c) = clamp01(mosaic(r, c) * gains[color]);
        }
    }
    return out;
}

RgbImage demosaic_bilinear(const PlaneD& mosaic, BayerPattern pattern) {
    check_mosaic(mosaic);
    const Mosaic mo{mosaic, pattern};
    RgbImage out = blank_rgb(mosaic.rows(), mosaic.cols());
    for (Index r = 0; r < mosaic.rows(); ++r)
        for (Index c = 0; c < mosaic.cols(); ++c) bilinear_at(mo, out, r, c);
    return out;
}

RgbImage demosaic_ppg(const PlaneD& mosaic, BayerPattern pattern) {
    check_mosaic(mosaic);
    const Mosaic mo{mosaic, pattern};
    const Index rows = mosaic.rows();
    const Index cols = mosaic.cols();
    RgbImage out = blank_rgb(rows, cols);
    PlaneD& red = out.channels[0];
    PlaneD& green = out.channels[1];
    PlaneD& blue = out.channels[2];

    // Green at every site. Taps reach 3 pixels and are reflected, so the green
    // guide is complete up to the image edge.
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            if (mo.color(r, c) == 1) {
                green(r, c) = mosaic(r, c);
                continue;
            }
            double guess[2];
            double diff[2];
            for (int dir = 0; dir < 2; ++dir) {
                const Index dr = dir == 0 ? 0 : 1;
                const Index dc = dir == 0 ? 1 : 0;
                const auto g = [&](Index s) { return mo.at(r + s * dr, c + s * dc); };
                const double c0 = mosaic(r, c);
                guess[dir] = (g(-1) + g(1)) / 2.0 + (2.0 * c0 - g(-2) - g(2)) / 4.0;
                diff[dir] = (std::abs(g(-2) - c0) + std::abs(g(2) - c0) + std::abs(g(-1) - g(1))) * 3.0 +
                            (std::abs(g(3) - g(1)) + std::abs(g(-3) - g(-1))) * 2.0;
            }
            const int dir = diff[0] > diff[1] ? 1 : 0;
            const Index dr = dir == 0 ? 0 : 1;
            const Index dc = dir == 0 ? 1 : 0;
            const double ga = mo.at(r - dr, c - dc);
            const double gb = mo.at(r + dr, c + dc);
            green(r, c) = std::clamp(guess[dir], std::min(ga, gb), std::max(ga, gb));
        }
    }

    const auto green_at = [&](Index r, Index c) { return green(reflect(r, rows), reflect(c, cols)); };
    const auto plane_of = [&](int color) -> PlaneD& { return color == 0 ? red : blue; };

    // Red and blue at green sites from horizontal / vertical color differences.
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            const int native = mo.color(r, c);
            if (native != 1) {
                plane_of(native)(r, c) = mosaic(r, c);
                continue;
            }
            const double g0 = green(r, c);
            for (int dir = 0; dir < 2; ++dir) {
                const Index dr = dir == 0 ? 0 : 1;
                const Index dc = dir == 0 ? 1 : 0;
                const int color = mo.color(r + dr, c + dc);
                const double d = (mo.at(r - dr, c - dc) - green_at(r - dr, c - dc)) +
                                 (mo.at(r + dr, c + dc) - green_at(r + dr, c + dc));
                plane_of(color)(r, c) = clamp01(g0 + d / 2.0);
            }
        }
    }

    // Blue at red sites and red at blue sites along the better diagonal.
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            const int native = mo.color(r, c);
            if (native == 1) continue;
            const int target = 2 - native;
            const double g0 = green(r, c);
            double diff[2];
            double delta[2];
            for (int diag = 0; diag < 2; ++diag) {
                const Index dc = diag == 0 ? 1 : -1;
                const double xa = mo.at(r - 1, c - dc);
                const double xb = mo.at(r + 1, c + dc);
                const double ga = green_at(r - 1, c - dc);
                const double gb = green_at(r + 1, c + dc);
                diff[diag] = std::abs(xa - xb) + std::abs(ga - g0) + std::abs(gb - g0);
                delta[diag] = (xa - ga) + (xb - gb);
            }
            double value;
            if (diff[0] != diff[1]) {
                value = g0 + delta[diff[0] > diff[1] ? 1 : 0] / 2.0;
            } else {
                value = g0 + (delta[0] + delta[1]) / 4.0;
            }
            plane_of(target)(r, c) = clamp01(value);
        }
    }

    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            if (r < kBorder || c < kBorder || r >= rows - kBorder || c >= cols - kBorder) {
                bilinear_at(mo, out, r, c);
            }
        }
    }
    return out;
}

RgbImage demosaic(const PlaneD& mosaic, BayerPattern pattern, DemosaicMethod method) {
    return method == DemosaicMethod::ppg ? demosaic_ppg(mosaic, pattern)
                                         : demosaic_bilinear(mosaic, pattern);
}

RgbImage color_correct(const RgbImage& rgb, const Eigen::Matrix3d& ccm) {
    if (rgb.stage != RgbImage::Stage::linear) {
        throw ValidationError("color_correct expects a linear-stage image");
    }
    // Decimal matrices such as (1.72, -0.52, -0.20) miss 1 by an ulp or so.
    const Eigen::Vector3d row_sum =
        ccm.rowwise().sum().unaryExpr([](double s) { return std::abs(s - 1.0) < 1e-9 ? 1.0 : s; });
    RgbImage out = blank_rgb(rgb.rows(), rgb.cols());
    // sum_j m_ij x_j rewritten as s_i * g + sum_j m_ij (x_j - g): gray input
    // then leaves the differences exactly zero.
    const PlaneD& g = rgb.channels[1];
    const PlaneD dr = rgb.channels[0] - g;
    const PlaneD db = rgb.channels[2] - g;
    for (int i = 0; i < 3; ++i) {
        out.channels[static_cast<std::size_t>(i)] =
            (row_sum[i] * g + ccm(i, 0) * dr + ccm(i, 2) * db).max(0.0).min(1.0);
    }
    return out;
}

RgbImage gamma_encode(const RgbImage& rgb, double gamma) {
    if (rgb.stage != RgbImage::Stage::linear) {
        throw ValidationError("gamma_encode expects a linear-stage image");
    }
    if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
    RgbImage out;
    const double inv = 1.0 / gamma;
    for (std::size_t i = 0; i < 3; ++i) {
        out.channels[i] = rgb.channels[i].max(0.0).min(1.0).pow(inv);
    }
    out.stage = RgbImage::Stage::gamma;
    return out;
}

Image8 quantize8(const RgbImage& rgb) {
    Image8 img;
    img.rows = rgb.rows();
    img.cols = rgb.cols();
    img.rgb.resize(static_cast<std::size_t>(img.rows * img.cols * 3));
    for (Index r = 0; r < img.rows; ++r) {
        for (Index c = 0; c < img.cols; ++c) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double v = clamp01(rgb.channels[ch](r, c)) * 255.0;
                img.rgb[static_cast<std::size_t>((r * img.cols + c) * 3) + ch] =
                    static_cast<std::uint8_t>(std::floor(v + 0.5));
            }
        }
    }
    return img;
}

Image8 render_srgb(const PlaneF& normalized_mosaic, const CaptureMeta& meta, const RenderOptions& opts) {
    meta.validate();
    const PlaneD linear = normalized_mosaic.cast<double>().max(0.0).min(1.0);
    const PlaneD balanced = white_balance(linear, meta.bayer_pattern, meta.wb_gains);
    const RgbImage rgb = demosaic(balanced, meta.bayer_pattern, opts.demosaic);
    return quantize8(gamma_encode(color_correct(rgb, meta.ccm), opts.gamma));
}

Image8 render_srgb(const RawImage& raw, const RenderOptions& opts) {
    raw.validate();
    return render_srgb(normalize(raw), raw.meta, opts);
}

Image8 render_srgb(const PackedTensor& packed, const CaptureMeta& meta, const RenderOptions& opts) {
    return render_srgb(unpack_rggb(packed, meta.bayer_pattern), meta, opts);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& image) {
    std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(image.cols));
    put_u32(ihdr, static_cast<std::uint32_t>(image.rows));
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit truecolor, no interlace
    put_chunk(png, "IHDR", ihdr);

    const std::size_t stride = static_cast<std::size_t>(image.cols) * 3;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * static_cast<std::size_t>(image.rows));
    for (Index r = 0; r < image.rows; ++r) {
        raw.push_back(0);  // filter: none
        const auto* row = image.rgb.data() + static_cast<std::size_t>(r) * stride;
        raw.insert(raw.end(), row, row + stride);
    }
    // Stored (uncompressed) deflate blocks: the bytes depend only on the
    // pixels, not on the zlib build.
    std::vector<std::uint8_t> idat = {0x78, 0x01};
    constexpr std::size_t kMaxBlock = 65535;
    std::size_t pos = 0;
    do {
        const std::size_t len = std::min(kMaxBlock, raw.size() - pos);
        const bool last = pos + len == raw.size();
        idat.push_back(last ? 1 : 0);
        idat.push_back(static_cast<std::uint8_t>(len & 0xFF));
        idat.push_back(static_cast<std::uint8_t>(len >> 8));
        idat.push_back(static_cast<std::uint8_t>(~len & 0xFF));
        idat.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xFF));
        idat.insert(idat.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
                    raw.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    } while (pos < raw.size());
    put_u32(idat, static_cast<std::uint32_t>(adler32(adler32(0L, Z_NULL, 0), raw.data(),
                                                      static_cast<uInt>(raw.size()))));
    put_chunk(png, "IDAT", idat);
    put_chunk(png, "IEND", {});
    return png;
}

void write_png(const Image8& image, const std::string& path) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write PNG: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ksdn
