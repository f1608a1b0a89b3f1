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

#include "ksdn/raw_image.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <vector>

namespace ksdn {

std::string to_string(BayerPattern p) {
    switch (p) {
        case BayerPattern::rggb: return "RGGB";
        case BayerPattern::bggr: return "BGGR";
        case BayerPattern::grbg: return "GRBG";
        case BayerPattern::gbrg: return "GBRG";
    }
    return "?";
}

BayerPattern parse_bayer_pattern(const std::string& s) {
    std::string u;
    for (char ch : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    if (u == "RGGB") return BayerPattern::rggb;
    if (u == "BGGR") return BayerPattern::bggr;
    if (u == "GRBG") return BayerPattern::grbg;
    if (u == "GBRG") return BayerPattern::gbrg;
    throw ValidationError("unknown Bayer pattern '" + s + "'");
}

std::array<std::array<Index, 2>, 4> packed_offsets(BayerPattern p) {
    switch (p) {
        case BayerPattern::rggb: return {{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};
        case BayerPattern::bggr: return {{{1, 1}, {1, 0}, {0, 1}, {0, 0}}};
        case BayerPattern::grbg: return {{{0, 1}, {0, 0}, {1, 1}, {1, 0}}};
        case BayerPattern::gbrg: return {{{1, 0}, {1, 1}, {0, 0}, {0, 1}}};
    }
    throw ValidationError("unknown Bayer pattern");
}

CfaColor cfa_color(BayerPattern p, Index row, Index col) {
    const auto offs = packed_offsets(p);
    const Index r = row & 1;
    const Index c = col & 1;
    if (offs[0][0] == r && offs[0][1] == c) return CfaColor::red;
    if (offs[3][0] == r && offs[3][1] == c) return CfaColor::blue;
    return CfaColor::green;
}

void CaptureMeta::validate() const {
    if (black_level < 0 || white_level > 65535 || black_level >= white_level) {
        throw ValidationError("CaptureMeta: need 0 <= black_level < white_level <= 65535 (black=" +
                              std::to_string(black_level) +
                              ", white=" + std::to_string(white_level) + ")");
    }
    for (double g : wb_gains) {
        if (!(g > 0.0) || !std::isfinite(g)) {
            throw ValidationError("CaptureMeta: white-balance gains must be positive");
        }
    }
    if (!ccm.allFinite()) throw ValidationError("CaptureMeta: CCM must be finite");
    for (int r = 0; r < 3; ++r) {
        const double sum = ccm.row(r).sum();
        if (std::abs(sum - 1.0) > 0.01) {
            throw ValidationError("CaptureMeta: CCM row " + std::to_string(r) + " sums to " +
                                  std::to_string(sum) + ", expected 1 within 0.01");
        }
    }
    if (!(iso > 0.0) || !std::isfinite(iso)) throw ValidationError("CaptureMeta: ISO must be > 0");
}

void to_json(nlohmann::json& j, const CaptureMeta& m) {
    std::vector<double> ccm;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) ccm.push_back(m.ccm(r, c));
    j = nlohmann::json{{"bayer_pattern", to_string(m.bayer_pattern)},
                       {"black_level", m.black_level},
                       {"white_level", m.white_level},
                       {"iso", m.iso},
                       {"wb_gains", m.wb_gains},
                       {"ccm", ccm}};
}

void from_json(const nlohmann::json& j, CaptureMeta& m) {
    try {
        m.bayer_pattern = parse_bayer_pattern(j.at("bayer_pattern").get<std::string>());
        m.black_level = j.at("black_level").get<int>();
        m.white_level = j.at("white_level").get<int>();
        m.iso = j.at("iso").get<double>();
        const auto gains = j.at("wb_gains").get<std::vector<double>>();
        const auto ccm = j.at("ccm").get<std::vector<double>>();
        if (gains.size() != 3) throw FormatError("CaptureMeta: wb_gains needs 3 values");
        if (ccm.size() != 9) throw FormatError("CaptureMeta: ccm needs 9 row-major values");
        std::copy(gains.begin(), gains.end(), m.wb_gains.begin());
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m.ccm(r, c) = ccm[static_cast<std::size_t>(r * 3 + c)];
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("CaptureMeta JSON: ") + e.what());
    }
    m.validate();
}

void RawImage::validate() const {
    meta.validate();
    if (data.rows() % 2 != 0 || data.cols() % 2 != 0 || data.size() == 0) {
        throw ShapeError("RawImage: dimensions must be even and non-zero, got " +
                         std::to_string(data.rows()) + "x" + std::to_string(data.cols()));
    }
    if (data.maxCoeff() > meta.white_level) {
        throw ValidationError("RawImage: sample value " + std::to_string(data.maxCoeff()) +
                              " exceeds white_level " + std::to_string(meta.white_level));
    }
}

std::string sidecar_path(const std::string& pgm_path) {
    std::filesystem::path p(pgm_path);
    p.replace_extension(".json");
    return p.string();
}

namespace {

// Next PGM header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

long pgm_number(std::istream& in, const std::string& path) {
    const std::string tok = pgm_token(in);
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        throw FormatError("malformed PGM header in " + path);
    }
    return std::stol(tok);
}

}  // namespace

RawImage load_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open raw file: " + path);
    if (pgm_token(in) != "P5") throw FormatError("not a binary PGM (P5): " + path);
    const long width = pgm_number(in, path);
    const long height = pgm_number(in, path);
    const long maxval = pgm_number(in, path);
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
        throw FormatError("invalid PGM dimensions or maxval in " + path);
    }
    if (height % 2 != 0 || width % 2 != 0) {
        throw ShapeError("raw mosaic must have even dimensions, got " + std::to_string(height) +
                         "x" + std::to_string(width) + " in " + path);
    }
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<std::size_t>(width * height) * bytes_per);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
        throw FormatError("truncated PGM payload in " + path);
    }

    RawImage img;
    img.data.resize(height, width);
    std::uint16_t* dst = img.data.data();
    for (std::size_t i = 0; i < static_cast<std::size_t>(width * height); ++i) {
        dst[i] = bytes_per == 2 ? static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1])
                                : buf[i];
    }

    const std::string meta_path = sidecar_path(path);
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw ValidationError("missing metadata sidecar " + meta_path);
    nlohmann::json j;
    try {
        meta_in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed metadata sidecar " + meta_path + ": " + e.what());
    }
    img.meta = j.get<CaptureMeta>();
    img.validate();
    return img;
}

void save_raw(const RawImage& image, const std::string& path) {
    image.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write raw file: " + path);
    out << "P5\n" << image.cols() << ' ' << image.rows() << "\n65535\n";
    std::vector<unsigned char> buf(static_cast<std::size_t>(image.data.size()) * 2);
    const std::uint16_t* src = image.data.data();
    for (std::size_t i = 0; i < static_cast<std::size_t>(image.data.size()); ++i) {
        buf[2 * i] = static_cast<unsigned char>(src[i] >> 8);
        buf[2 * i + 1] = static_cast<unsigned char>(src[i] & 0xFF);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing " + path);

    std::ofstream meta_out(sidecar_path(path));
    if (!meta_out) throw IoError("cannot write metadata sidecar for " + path);
    meta_out << nlohmann::json(image.meta).dump(2) << '\n';
}

PlaneF normalize(const RawImage& image) {
    const double black = image.meta.black_level;
    const double range = image.meta.white_level - black;
    return ((image.data.cast<double>() - black) / range).cast<float>();
}

PlaneU16 denormalize(const PlaneF& mosaic, const CaptureMeta& meta) {
    const double black = meta.black_level;
    const double range = meta.white_level - black;
    PlaneU16 out(mosaic.rows(), mosaic.cols());
    for (Index i = 0; i < mosaic.size(); ++i) {
        const double dn = std::round(static_cast<double>(mosaic.data()[i]) * range + black);
        out.data()[i] = static_cast<std::uint16_t>(std::clamp(dn, 0.0, double(meta.white_level)));
    }
    return out;
}

PackedTensor pack_rggb(const PlaneF& mosaic, BayerPattern pattern) {
    if (mosaic.rows() % 2 != 0 || mosaic.cols() % 2 != 0 || mosaic.size() == 0) {
        throw ShapeError("pack_rggb: mosaic must have even, non-zero dimensions");
    }
    const auto offs = packed_offsets(pattern);
    const Index h = mosaic.rows() / 2;
    const Index w = mosaic.cols() / 2;
    PackedTensor out(1, 4, h, w);
    for (Index ch = 0; ch < 4; ++ch) {
        out.plane(0, ch) = Eigen::Map<const PlaneF, 0, Eigen::Stride<Eigen::Dynamic, 2>>(
            mosaic.data() + offs[ch][0] * mosaic.cols() + offs[ch][1], h, w,
            Eigen::Stride<Eigen::Dynamic, 2>(2 * mosaic.cols(), 2));
    }
    return out;
}

PlaneF unpack_rggb(const PackedTensor& packed, BayerPattern pattern) {
    if (packed.n() != 1 || packed.c() != 4) {
        throw ShapeError("unpack_rggb: expected a 1x4xHxW tensor, got " + packed.shape_string());
    }
    const auto offs = packed_offsets(pattern);
    PlaneF mosaic(packed.h() * 2, packed.w() * 2);
    for (Index ch = 0; ch < 4; ++ch) {
        Eigen::Map<PlaneF, 0, Eigen::Stride<Eigen::Dynamic, 2>>(
            mosaic.data() + offs[ch][0] * mosaic.cols() + offs[ch][1], packed.h(), packed.w(),
            Eigen::Stride<Eigen::Dynamic, 2>(2 * mosaic.cols(), 2)) = packed.plane(0, ch);
    }
    return mosaic;
}

CropOrigin random_crop_origin(Index rows, Index cols, Index size, Stream& rng) {
    if (size <= 0 || size % 2 != 0) throw ShapeError("random_crop: size must be positive and even");
    if (size > rows || size > cols) {
        throw ShapeError("random_crop: size " + std::to_string(size) + " exceeds mosaic " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
    const auto row_slots = static_cast<std::uint64_t>((rows - size) / 2 + 1);
    const auto col_slots = static_cast<std::uint64_t>((cols - size) / 2 + 1);
    CropOrigin o;
    o.row = 2 * static_cast<Index>(rng.uniform_int(row_slots));
    o.col = 2 * static_cast<Index>(rng.uniform_int(col_slots));
    return o;
}

}  // namespace ksdn
