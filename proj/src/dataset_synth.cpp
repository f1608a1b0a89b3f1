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

#include "ksdn/dataset_synth.hpp"

#include "ksdn/nn/network.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ksdn {

SynthMode SynthMode::single_iso(double iso) {
    if (!(iso > 0.0) || !std::isfinite(iso)) {
        throw ValidationError("single_iso mode needs a positive ISO, got " + std::to_string(iso));
    }
    return {Kind::single_iso, iso};
}

SynthMode SynthMode::parse(const std::string& text) {
    if (text == "ksigma" || text == "k-sigma") return ksigma();
    if (text == "iso-aug" || text == "iso_aug") return iso_aug();
    for (const std::string prefix : {"single-iso:", "single_iso:"}) {
        if (text.rfind(prefix, 0) == 0) {
            const std::string num = text.substr(prefix.size());
            std::size_t used = 0;
            double iso = 0.0;
            try {
                iso = std::stod(num, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != num.size()) {
                throw ValidationError("mode '" + text + "': expected single-iso:<number>");
            }
            return single_iso(iso);
        }
    }
    throw ValidationError("unknown mode '" + text + "' (expected ksigma, iso-aug or single-iso:<n>)");
}

std::string SynthMode::to_string() const {
    switch (kind) {
        case Kind::ksigma: return "ksigma";
        case Kind::iso_aug: return "iso-aug";
        case Kind::single_iso: {
            nlohmann::json j = iso;
            return "single-iso:" + j.dump();
        }
    }
    return "ksigma";
}

double draw_iso(const SynthMode& mode, const IsoRange& range, Stream& rng) {
    if (mode.kind == SynthMode::Kind::single_iso) return mode.iso;
    if (!(range.lo > 0.0) || range.hi < range.lo) {
        throw ValidationError("iso range must satisfy 0 < lo <= hi");
    }
    if (range.lo == range.hi) return range.lo;
    return std::exp(rng.uniform(std::log(range.lo), std::log(range.hi)));
}

TrainingPair make_pair_with_params(const PackedTensor& clean, const NoiseParams& params, const SynthMode& mode,
                                   PairKey key, double iso) {
    TrainingPair pair;
    pair.params = params;
    pair.iso = iso;
    pair.target = clean;
    pair.input = PackedTensor::zeros_like(clean);
    pair.input.flat() = sample_noisy(clean.flat(), params, NoiseKey{key.seed, key.pair_id});
    if (mode.transforms()) {
        pair.input.flat() = ksigma_forward(pair.input.flat(), params).eval();
        pair.target.flat() = ksigma_forward(pair.target.flat(), params).eval();
    }
    return pair;
}

TrainingPair make_pair(const PackedTensor& clean, const IsoCurves& curves, const SynthMode& mode,
                       const IsoRange& iso_range, PairKey key) {
    Stream rng(key.seed, key.pair_id, 0, StreamPurpose::iso);
    const double iso = draw_iso(mode, iso_range, rng);
    return make_pair_with_params(clean, params_at_iso(curves, iso), mode, key, iso);
}

double estimate_noise_sigma(const PlaneF& mosaic) {
    const PackedTensor packed = pack_rggb(mosaic, BayerPattern::rggb);
    const Index h = packed.h();
    const Index w = packed.w();
    if (h < 3 || w < 3) throw ShapeError("estimate_noise_sigma: mosaic must be at least 6x6");
    double total = 0.0;
    for (Index ch = 0; ch < 4; ++ch) {
        const PlaneD p = packed.plane(0, ch).cast<double>();
        auto at = [&](Index dr, Index dc) { return p.block(1 + dr, 1 + dc, h - 2, w - 2); };
        const PlaneD lap = at(-1, -1) - 2 * at(-1, 0) + at(-1, 1) - 2 * at(0, -1) + 4 * at(0, 0) -
                           2 * at(0, 1) + at(1, -1) - 2 * at(1, 0) + at(1, 1);
        total += std::sqrt(std::numbers::pi / 2.0) * lap.abs().sum() / (6.0 * double(h - 2) * double(w - 2));
    }
    return total / 4.0;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const PipelineConfig& c) {
    j = {{"patch_size", c.patch_size},
         {"augment", c.augment},
         {"brightness", c.ranges.brightness},
         {"contrast", c.ranges.contrast},
         {"mode", c.mode.to_string()},
         {"iso_range", {c.iso_range.lo, c.iso_range.hi}},
         {"seed", c.seed},
         {"max_source_sigma", c.max_source_sigma}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
    PipelineConfig d;
    c.patch_size = j.value("patch_size", d.patch_size);
    c.augment = j.value("augment", d.augment);
    c.ranges.brightness = j.value("brightness", d.ranges.brightness);
    c.ranges.contrast = j.value("contrast", d.ranges.contrast);
    c.mode = SynthMode::parse(j.value("mode", d.mode.to_string()));
    const auto range = j.value("iso_range", std::array<double, 2>{d.iso_range.lo, d.iso_range.hi});
    c.iso_range = {range[0], range[1]};
    c.seed = j.value("seed", d.seed);
    c.max_source_sigma = j.value("max_source_sigma", d.max_source_sigma);
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = {{"clean_files", m.clean_files}, {"pipeline", m.pipeline}, {"curves", m.curves}, {"pair_count", m.pair_count}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
    m.clean_files = j.at("clean_files").get<std::vector<std::string>>();
    m.pipeline = j.at("pipeline").get<PipelineConfig>();
    m.curves = j.at("curves").get<IsoCurves>();
    m.pair_count = j.value("pair_count", std::uint64_t{0});
}

PairPipeline::PairPipeline(std::vector<CleanSource> sources, IsoCurves curves, PipelineConfig config)
    : curves_(curves), config_(config) {
    curves_.validate();
    const Index p = config_.patch_size;
    if (p < 32 || p % 32 != 0) {
        throw ValidationError("patch_size must be a positive multiple of 32 Bayer pixels, got " + std::to_string(p));
    }
    if (config_.mode.kind == SynthMode::Kind::single_iso) {
        params_at_iso(curves_, config_.mode.iso);
    } else if (!curves_.valid_iso.contains(config_.iso_range.lo) || !curves_.valid_iso.contains(config_.iso_range.hi)) {
        throw RangeError("iso range lies outside the curves' valid range");
    }
    for (auto& s : sources) {
        if (s.mosaic.rows() < p || s.mosaic.cols() < p) {
            rejected_.push_back(s.name + ": smaller than the " + std::to_string(p) + " px patch");
        } else if (config_.max_source_sigma > 0.0 && estimate_noise_sigma(s.mosaic) > config_.max_source_sigma) {
            rejected_.push_back(s.name + ": estimated noise above the screen threshold");
        } else {
            sources_.push_back(std::move(s));
        }
    }
    if (sources_.empty()) {
        std::string why;
        for (const auto& r : rejected_) why += "\n  " + r;
        throw ValidationError("no usable clean sources" + (why.empty() ? std::string(" (none given)") : ":" + why));
    }
}

PairPipeline PairPipeline::from_files(const std::vector<std::string>& clean_files, const IsoCurves& curves,
                                      const PipelineConfig& config) {
    std::vector<CleanSource> sources;
    for (const auto& f : clean_files) {
        const RawImage raw = load_raw(f);
        sources.push_back({f, normalize(raw), raw.meta.bayer_pattern});
    }
    return PairPipeline(std::move(sources), curves, config);
}

PackedTensor PairPipeline::clean_patch(std::uint64_t index) const {
    const auto id = static_cast<std::uint32_t>(index);
    const std::uint64_t seed = config_.seed ^ ((index >> 32) * 0x9E3779B97F4A7C15ull);
    Stream pick(seed, id, 0, StreamPurpose::source);
    const CleanSource& src = sources_[pick.uniform_int(sources_.size())];

    // Crop two extra pixels per axis where possible so flips can re-align the CFA.
    const Index p = config_.patch_size;
    const Index er = src.mosaic.rows() >= p + 2 ? p + 2 : p;
    const Index ec = src.mosaic.cols() >= p + 2 ? p + 2 : p;
    Stream crop(seed, id, 0, StreamPurpose::crop);
    const Index r0 = 2 * static_cast<Index>(crop.uniform_int(static_cast<std::uint64_t>((src.mosaic.rows() - er) / 2 + 1)));
    const Index c0 = 2 * static_cast<Index>(crop.uniform_int(static_cast<std::uint64_t>((src.mosaic.cols() - ec) / 2 + 1)));
    PlaneF patch = src.mosaic.block(r0, c0, er, ec);

    Stream aug(seed, id, 0, StreamPurpose::augment);
    Flips flips = random_flips(aug);
    if (!config_.augment) flips = {};
    flips.h = flips.h && ec == p + 2;
    flips.v = flips.v && er == p + 2;
    patch = bayer_augment(patch, flips.h, flips.v);
    patch = patch.block(0, 0, p, p).eval();

    PackedTensor packed = pack_rggb(patch, src.pattern);
    if (config_.augment) {
        const double gain = aug.uniform(config_.ranges.brightness[0], config_.ranges.brightness[1]);
        const double contrast = aug.uniform(config_.ranges.contrast[0], config_.ranges.contrast[1]);
        packed.flat() = adjust_brightness_contrast(packed.flat(), gain, contrast);
    }
    return packed;
}

TrainingPair PairPipeline::pair(std::uint64_t index) const {
    const std::uint64_t seed = config_.seed ^ ((index >> 32) * 0x9E3779B97F4A7C15ull);
    return make_pair(clean_patch(index), curves_, config_.mode, config_.iso_range,
                     PairKey{seed, static_cast<std::uint32_t>(index)});
}

// ---------------------------------------------------------------------------

PlaneF synthetic_scene(Index rows, Index cols, std::uint64_t seed) {
    if (rows < 2 || cols < 2 || rows % 2 != 0 || cols % 2 != 0) {
        throw ShapeError("synthetic_scene: dimensions must be even and >= 2");
    }
    Stream rng(seed, 0, 0, StreamPurpose::source);
    const double h = static_cast<double>(rows);
    const double w = static_cast<double>(cols);

    std::array<std::array<double, 3>, 3> grad{};
    for (auto& g : grad) g = {rng.uniform(0.1, 0.5), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};

    struct Disc { double cy, cx, r; std::array<double, 3> rgb; };
    struct Bar { double y0, x0, y1, x1; std::array<double, 3> rgb; };
    std::vector<Disc> discs(6);
    for (auto& d : discs) {
        d = {rng.uniform(0, h), rng.uniform(0, w), rng.uniform(0.05, 0.25) * std::min(h, w),
             {rng.uniform(0.05, 0.85), rng.uniform(0.05, 0.85), rng.uniform(0.05, 0.85)}};
    }
    std::vector<Bar> bars(4);
    for (auto& b : bars) {
        const double y = rng.uniform(0, h), x = rng.uniform(0, w);
        b = {y, x, y + rng.uniform(0.05, 0.4) * h, x + rng.uniform(0.05, 0.4) * w,
             {rng.uniform(0.05, 0.85), rng.uniform(0.05, 0.85), rng.uniform(0.05, 0.85)}};
    }
    const double freq = rng.uniform(0.05, 0.2);
    const double ty = rng.uniform(0, h / 2), tx = rng.uniform(0, w / 2);

    PlaneF out(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            const auto ch = static_cast<std::size_t>(cfa_color(BayerPattern::rggb, r, c));
            const double y = r / h, x = c / w;
            double v = grad[ch][0] + grad[ch][1] * y + grad[ch][2] * x;
            for (const auto& d : discs) {
                if ((r - d.cy) * (r - d.cy) + (c - d.cx) * (c - d.cx) < d.r * d.r) v = d.rgb[ch];
            }
            for (const auto& b : bars) {
                if (r >= b.y0 && r < b.y1 && c >= b.x0 && c < b.x1) v = 0.5 * (v + b.rgb[ch]);
            }
            if (r >= ty && r < ty + h / 4 && c >= tx && c < tx + w / 4) {
                v *= 0.75 + 0.25 * std::sin(freq * c) * std::cos(freq * 0.7 * r);
            }
            out(r, c) = static_cast<float>(std::clamp(v, 0.02, 0.9));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

Index reflect(Index i, Index n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
}

Index round_up16(Index v) { return (v + 15) / 16 * 16; }

PackedTensor pad_reflect(const PackedTensor& x, Index h, Index w) {
    PackedTensor out(x.n(), x.c(), h, w);
    for (Index n = 0; n < x.n(); ++n) {
        for (Index c = 0; c < x.c(); ++c) {
            for (Index r = 0; r < h; ++r) {
                const Index sr = reflect(r, x.h());
                for (Index q = 0; q < w; ++q) out(n, c, r, q) = x(n, c, sr, reflect(q, x.w()));
            }
        }
    }
    return out;
}

PackedTensor crop_tensor(const PackedTensor& x, Index r0, Index c0, Index h, Index w) {
    PackedTensor out(x.n(), x.c(), h, w);
    for (Index n = 0; n < x.n(); ++n) {
        for (Index c = 0; c < x.c(); ++c) out.plane(n, c) = x.plane(n, c).block(r0, c0, h, w);
    }
    return out;
}

std::vector<Index> tile_starts(Index dim, Index tile, Index overlap) {
    if (dim <= tile) return {0};
    std::vector<Index> starts;
    for (Index s = 0; s + tile < dim; s += tile - overlap) starts.push_back(s);
    starts.push_back(dim - tile);
    return starts;
}

Eigen::ArrayXd ramp(Index start, Index size, Index dim, Index overlap) {
    Eigen::ArrayXd w = Eigen::ArrayXd::Ones(size);
    const double span = static_cast<double>(overlap + 1);
    for (Index i = 0; i < size; ++i) {
        if (start > 0) w[i] = std::min(w[i], (i + 1) / span);
        if (start + size < dim) w[i] = std::min(w[i], (size - i) / span);
    }
    return w;
}

}  // namespace

PackedTensor forward_padded(const nn::Model<float>& model, const PackedTensor& x) {
    const Index h = round_up16(x.h());
    const Index w = round_up16(x.w());
    if (h == x.h() && w == x.w()) return nn::forward(model, x);
    return crop_tensor(nn::forward(model, pad_reflect(x, h, w)), 0, 0, x.h(), x.w());
}

PackedTensor forward_tiled(const nn::Model<float>& model, const PackedTensor& x, const TileOptions& opts) {
    if (opts.tile < 16 || opts.overlap < 0 || opts.overlap >= opts.tile || opts.context < 0) {
        throw ValidationError("tiling needs tile >= 16, 0 <= overlap < tile and context >= 0");
    }
    if (x.h() <= opts.tile && x.w() <= opts.tile) return forward_padded(model, x);

    const PackedTensor padded = pad_reflect(x, round_up16(x.h()), round_up16(x.w()));
    // 16-aligned window covering [start - context, start + size + context) within [0, dim),
    // so the network's downsampling grid matches the whole-image pass.
    auto window = [&](Index start, Index size, Index dim) {
        const Index lo = std::max<Index>(start - opts.context, 0) / 16 * 16;
        const Index hi = std::min(round_up16(start + size + opts.context), dim);
        return std::pair{lo, hi - lo};
    };

    const auto rows = tile_starts(x.h(), opts.tile, opts.overlap);
    const auto cols = tile_starts(x.w(), opts.tile, opts.overlap);
    Tensor<double> acc(x.n(), x.c(), x.h(), x.w());
    PlaneD weight = PlaneD::Zero(x.h(), x.w());
    for (Index r0 : rows) {
        const Index th = std::min(opts.tile, x.h());
        const Eigen::ArrayXd wr = ramp(r0, th, x.h(), opts.overlap);
        const auto [wr0, wh] = window(r0, th, padded.h());
        for (Index c0 : cols) {
            const Index tw = std::min(opts.tile, x.w());
            const Eigen::ArrayXd wc = ramp(c0, tw, x.w(), opts.overlap);
            const auto [wc0, ww] = window(c0, tw, padded.w());
            const PlaneD wt = (wr.matrix() * wc.matrix().transpose()).array();
            const PackedTensor y = nn::forward(model, crop_tensor(padded, wr0, wc0, wh, ww));
            for (Index n = 0; n < x.n(); ++n) {
                for (Index c = 0; c < x.c(); ++c) {
                    acc.plane(n, c).block(r0, c0, th, tw) +=
                        wt * y.plane(n, c).block(r0 - wr0, c0 - wc0, th, tw).cast<double>();
                }
            }
            weight.block(r0, c0, th, tw) += wt;
        }
    }
    PackedTensor out = PackedTensor::zeros_like(x);
    for (Index n = 0; n < x.n(); ++n) {
        for (Index c = 0; c < x.c(); ++c) out.plane(n, c) = (acc.plane(n, c) / weight).cast<float>();
    }
    return out;
}

PackedTensor denoise_packed(const PackedTensor& noisy, const nn::Model<float>& model, const NoiseParams& params,
                            const SynthMode& mode, const TileOptions& tiles) {
    if (!mode.transforms()) return forward_tiled(model, noisy, tiles);
    PackedTensor x = noisy;
    x.flat() = ksigma_forward(noisy.flat(), params).eval();
    PackedTensor y = forward_tiled(model, x, tiles);
    y.flat() = ksigma_inverse(y.flat(), params).eval();
    return y;
}

RawImage denoise_image(const RawImage& raw, const nn::Model<float>& model, const IsoCurves& curves,
                       const SynthMode& mode, const TileOptions& tiles, const NoiseParams* params_override) {
    raw.validate();
    const NoiseParams params = params_override ? *params_override : params_at_iso(curves, raw.meta.iso);
    const PackedTensor packed = pack_rggb(normalize(raw), raw.meta.bayer_pattern);
    const PackedTensor out = denoise_packed(packed, model, params, mode, tiles);
    return RawImage{denormalize(unpack_rggb(out, raw.meta.bayer_pattern), raw.meta), raw.meta};
}

}  // namespace ksdn
