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

#include "ksdn/trainer.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace ksdn;

namespace {

PackedTensor constant_packed(Index h, Index w, float v) {
    PackedTensor t(1, 4, h, w);
    t.flat().setConstant(v);
    return t;
}

bool same_tensor(const PackedTensor& a, const PackedTensor& b) {
    return a.same_shape(b) && (a.flat() == b.flat()).all();
}

std::vector<CleanSource> scene_sources(int n, Index size) {
    std::vector<CleanSource> out;
    for (int i = 0; i < n; ++i) out.push_back({"scene" + std::to_string(i), synthetic_scene(size, size, 300 + i)});
    return out;
}

PipelineConfig small_pipeline() {
    PipelineConfig c;
    c.patch_size = 64;
    c.iso_range = {800, 6400};
    c.seed = 17;
    return c;
}

RawImage noisy_raw(Index rows, Index cols, double iso, std::uint64_t seed) {
    CaptureMeta meta;
    meta.iso = iso;
    meta.black_level = 64;
    meta.white_level = 1023;
    const PlaneF scene = synthetic_scene(rows, cols, seed);
    const NoiseParams p = params_at_iso(reference_curves(), iso);
    PlaneF noisy(rows, cols);
    noisy.reshaped() = sample_noisy(scene.reshaped(), p, NoiseKey{seed, 0});
    return {denormalize(noisy, meta), meta};
}

nn::Model<float> trained_tiny() {
    std::vector<TrainingPair> pool;
    for (int i = 0; i < 8; ++i) {
        const PackedTensor clean = pack_rggb(synthetic_scene(64, 64, 700 + i), BayerPattern::rggb);
        pool.push_back(make_pair(clean, reference_curves(), SynthMode::ksigma(), {800, 6400},
                                 {3, static_cast<std::uint32_t>(i)}));
    }
    TrainConfig c;
    c.total = 150;
    c.cycle_step = 25;
    c.decay_until = 150;
    c.max_lr = 1e-2;
    c.base_lr = 1e-3;
    c.final_base_lr = 1e-4;
    return train(nn::Model<float>::initialized(nn::tiny_config(), 2), shuffled_pool(pool, 1), c).model;
}

}  // namespace

TEST_CASE("SynthMode parsing") {
    CHECK(SynthMode::parse("ksigma") == SynthMode::ksigma());
    CHECK(SynthMode::parse("iso_aug") == SynthMode::iso_aug());
    CHECK(SynthMode::parse("single-iso:3200") == SynthMode::single_iso(3200));
    CHECK(SynthMode::parse("single_iso:1e3").iso == 1000.0);
    for (const auto& m : {SynthMode::ksigma(), SynthMode::iso_aug(), SynthMode::single_iso(1600)})
        CHECK(SynthMode::parse(m.to_string()) == m);
    CHECK_THROWS_AS(SynthMode::parse("single-iso:"), ValidationError);
    CHECK_THROWS_AS(SynthMode::parse("single-iso:12x"), ValidationError);
    CHECK_THROWS_AS(SynthMode::parse("single-iso:-5"), ValidationError);
    CHECK_THROWS_AS(SynthMode::parse("anscombe"), ValidationError);
}

TEST_CASE("draw_iso is log-uniform within the range") {
    Stream rng(1, 0, 0, StreamPurpose::iso);
    const IsoRange range{800, 6400};
    int below_geo_mean = 0, below_uniform_mid = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double iso = draw_iso(SynthMode::ksigma(), range, rng);
        CHECK(range.contains(iso));
        below_geo_mean += iso < std::sqrt(800.0 * 6400.0);
        below_uniform_mid += iso < 3600.0;
    }
    CHECK(below_geo_mean == doctest::Approx(n / 2).epsilon(0.03));
    // log-uniform puts ln(4.5)/ln(8) of the mass below the arithmetic midpoint
    CHECK(below_uniform_mid == doctest::Approx(n * std::log(4.5) / std::log(8.0)).epsilon(0.03));
    CHECK(draw_iso(SynthMode::single_iso(1234), range, rng) == 1234);
    CHECK(draw_iso(SynthMode::iso_aug(), {500, 500}, rng) == 500);
    CHECK_THROWS_AS(draw_iso(SynthMode::ksigma(), {0, 10}, rng), ValidationError);
}

TEST_CASE("make_pair examples") {
    const PackedTensor clean = pack_rggb(synthetic_scene(32, 32, 5), BayerPattern::rggb);

    // k = 1 and no read noise: the transform is the identity and the input is
    // a Poisson draw around the clean value.
    const PackedTensor bright = constant_packed(16, 16, 40.0f);
    const auto p = make_pair_with_params(bright, NoiseParams::make(1.0, 0.0), SynthMode::ksigma(), {4, 0}, 1600);
    CHECK(p.iso == 1600);
    CHECK(same_tensor(p.target, bright));
    CHECK((p.input.flat() == p.input.flat().round()).all());
    CHECK(p.input.flat().mean() == doctest::Approx(40.0).epsilon(0.03));

    const auto curves = reference_curves();
    const auto a = make_pair(clean, curves, SynthMode::single_iso(3200), {800, 6400}, {1, 0});
    const auto b = make_pair(clean, curves, SynthMode::single_iso(3200), {800, 6400}, {2, 9});
    CHECK(a.params == b.params);
    CHECK(a.iso == 3200);
    CHECK(same_tensor(a.target, clean));
    CHECK_FALSE(same_tensor(a.input, b.input));

    const auto k = make_pair(clean, curves, SynthMode::ksigma(), {800, 6400}, {1, 0});
    CHECK(k.iso >= 800);
    CHECK(k.iso <= 6400);
    CHECK(k.params == params_at_iso(curves, k.iso));
    PackedTensor expect = clean;
    expect.flat() = ksigma_forward(clean.flat(), k.params).eval();
    CHECK(same_tensor(k.target, expect));
    CHECK(same_tensor(k.input, make_pair(clean, curves, SynthMode::ksigma(), {800, 6400}, {1, 0}).input));

    // iso_aug draws the same ISO and noise as ksigma but stays in luminance.
    const auto lum = make_pair(clean, curves, SynthMode::iso_aug(), {800, 6400}, {1, 0});
    CHECK(lum.iso == k.iso);
    CHECK(same_tensor(lum.target, clean));
    PackedTensor lum_fwd = lum.input;
    lum_fwd.flat() = ksigma_forward(lum.input.flat(), k.params).eval();
    CHECK((lum_fwd.flat() - k.input.flat()).abs().maxCoeff() == 0.0f);

    CHECK_THROWS_AS(make_pair(clean, curves, SynthMode::single_iso(25600), {800, 6400}, {1, 0}), RangeError);
}

TEST_CASE("k-Sigma pairs have ISO-independent residual statistics") {
    const auto curves = reference_curves();
    for (double level : {20.0, 30.0, 60.0}) {
        for (double iso : {800.0, 1600.0, 3200.0, 6400.0}) {
            CAPTURE(level);
            CAPTURE(iso);
            const NoiseParams p = params_at_iso(curves, iso);
            const double x = p.k * (level - p.offset());
            if (x > 1.0) continue;
            const auto pair = make_pair_with_params(constant_packed(64, 64, static_cast<float>(x)), p,
                                                    SynthMode::ksigma(), {11, static_cast<std::uint32_t>(iso)}, iso);
            CHECK(pair.target.flat()(0) == doctest::Approx(level).epsilon(1e-5));
            const Eigen::ArrayXd r = (pair.input.flat() - pair.target.flat()).cast<double>();
            const double mean = r.mean();
            const double var = (r - mean).square().sum() / static_cast<double>(r.size() - 1);
            CHECK(std::abs(mean) < 0.05 * std::sqrt(level));
            CHECK(var == doctest::Approx(level).epsilon(0.05));
        }
    }
}

TEST_CASE("noise screen estimate") {
    Stream rng(2, 0, 0, StreamPurpose::test);
    PlaneF flat(128, 128);
    for (Index i = 0; i < flat.size(); ++i) flat.data()[i] = static_cast<float>(0.4 + 0.02 * rng.normal());
    CHECK(estimate_noise_sigma(flat) == doctest::Approx(0.02).epsilon(0.05));
    CHECK(estimate_noise_sigma(PlaneF(PlaneF::Constant(64, 64, 0.3f))) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK_THROWS_AS(estimate_noise_sigma(PlaneF(PlaneF::Zero(4, 8))), ShapeError);
}

TEST_CASE("pair pipeline") {
    const auto curves = reference_curves();
    const PairPipeline pipe(scene_sources(3, 96), curves, small_pipeline());
    const auto first = pipe.pair(0);
    CHECK(first.input.shape_string() == "(1,4,32,32)");
    CHECK(same_tensor(first.input, PairPipeline(scene_sources(3, 96), curves, small_pipeline()).pair(0).input));
    // random access: pair 5 does not depend on whether 0..4 were built
    const PairPipeline other(scene_sources(3, 96), curves, small_pipeline());
    CHECK(same_tensor(other.pair(5).target, pipe.pair(5).target));
    CHECK_FALSE(same_tensor(pipe.pair(1).target, pipe.pair(2).target));
    auto reseeded = small_pipeline();
    reseeded.seed = 18;
    CHECK_FALSE(same_tensor(PairPipeline(scene_sources(3, 96), curves, reseeded).pair(0).input, first.input));

    for (std::uint64_t i = 0; i < 20; ++i) {
        const auto c = pipe.clean_patch(i);
        CHECK(c.flat().minCoeff() >= 0.0f);
        CHECK(c.flat().allFinite());
    }

    auto big = small_pipeline();
    big.patch_size = 128;
    CHECK_THROWS_AS(PairPipeline(scene_sources(2, 96), curves, big), ValidationError);
    auto odd = small_pipeline();
    odd.patch_size = 48;
    CHECK_THROWS_AS(PairPipeline(scene_sources(2, 96), curves, odd), ValidationError);
    auto wide = small_pipeline();
    wide.iso_range = {50, 6400};
    CHECK_THROWS_AS(PairPipeline(scene_sources(2, 96), curves, wide), RangeError);
    CHECK_THROWS_AS(PairPipeline({}, curves, small_pipeline()), ValidationError);
    CHECK_THROWS_AS(PairPipeline::from_files({"/nonexistent/clean.pgm"}, curves, small_pipeline()), IoError);

    auto screened = small_pipeline();
    screened.max_source_sigma = 0.01;
    auto sources = scene_sources(2, 96);
    Stream rng(3, 0, 0, StreamPurpose::test);
    for (Index i = 0; i < sources[1].mosaic.size(); ++i) sources[1].mosaic.data()[i] += static_cast<float>(0.05 * rng.normal());
    const PairPipeline kept(sources, curves, screened);
    CHECK(kept.sources().size() == 1);
    REQUIRE(kept.rejected().size() == 1);
    CHECK(kept.rejected()[0].rfind("scene1", 0) == 0);
}

TEST_CASE("dark sources show the transform offset") {
    auto cfg = small_pipeline();
    cfg.augment = false;
    const PairPipeline pipe({{"dark", PlaneF::Zero(64, 64)}}, reference_curves(), cfg);
    for (std::uint64_t i = 0; i < 4; ++i) {
        const auto p = pipe.pair(i);
        CHECK((p.target.flat() - static_cast<float>(p.params.offset())).abs().maxCoeff() <= 1e-6f * p.params.offset());
        CHECK(p.params.offset() > 0.0);
    }
}

TEST_CASE("pipeline and manifest JSON") {
    PipelineConfig c = small_pipeline();
    c.mode = SynthMode::single_iso(1600);
    c.max_source_sigma = 0.03;
    c.ranges.brightness = {0.8, 1.2};
    const nlohmann::json j = c;
    CHECK(nlohmann::json(j.get<PipelineConfig>()) == j);
    CHECK(j.at("mode") == "single-iso:1600.0");

    DatasetManifest m{{"a.pgm", "b.pgm"}, c, reference_curves(), 12};
    const nlohmann::json mj = m;
    const auto back = mj.get<DatasetManifest>();
    CHECK(back.clean_files == m.clean_files);
    CHECK(back.curves == m.curves);
    CHECK(back.pair_count == 12);
    CHECK(nlohmann::json(back.pipeline) == j);
}

TEST_CASE("synthetic scenes") {
    const PlaneF s = synthetic_scene(64, 48, 1);
    CHECK(s.rows() == 64);
    CHECK(s.cols() == 48);
    CHECK(s.minCoeff() >= 0.02f);
    CHECK(s.maxCoeff() <= 0.9f);
    CHECK((s == synthetic_scene(64, 48, 1)).all());
    CHECK_FALSE((s == synthetic_scene(64, 48, 2)).all());
    CHECK_THROWS_AS(synthetic_scene(63, 48, 1), ShapeError);
}

TEST_CASE("identity model leaves images unchanged") {
    const nn::Model<float> zero(nn::tiny_config());
    const RawImage raw = noisy_raw(80, 96, 3200, 4);
    for (const auto& mode : {SynthMode::ksigma(), SynthMode::iso_aug()}) {
        const RawImage out = denoise_image(raw, zero, reference_curves(), mode, {16, 4});
        CHECK((out.data == raw.data).all());
        CHECK(out.meta == raw.meta);
    }
    RawImage high = raw;
    high.meta.iso = 12800;
    CHECK_THROWS_AS(denoise_image(high, zero, reference_curves(), SynthMode::ksigma()), RangeError);
    CHECK_THROWS_AS(denoise_image(high, zero, reference_curves(), SynthMode::iso_aug()), RangeError);
    const NoiseParams p = params_at_iso(reference_curves(), 6400);
    CHECK_NOTHROW(denoise_image(high, zero, reference_curves(), SynthMode::ksigma(), {}, &p));
    CHECK_THROWS_AS(forward_tiled(zero, constant_packed(32, 32, 0.1f), {8, 2}), ValidationError);
    CHECK_THROWS_AS(forward_tiled(zero, constant_packed(32, 32, 0.1f), {16, 16}), ValidationError);
}

TEST_CASE("the default tile context covers the receptive field") {
    for (const auto& cfg : {nn::ModelConfig{}, nn::tiny_config()}) {
        auto m = nn::Model<float>::initialized(cfg, 1);
        for (auto& p : m.params())
            if (p.name.ends_with(".b")) p.value.setConstant(0.1f);
        const Index n = 288, mid = 144;
        const PackedTensor x = constant_packed(n, n, 0.5f);
        PackedTensor bumped = x;
        bumped(0, 0, mid, mid) += 1.0f;
        const auto y = nn::forward(m, x), yb = nn::forward(m, bumped);
        Index radius = 0;
        for (Index c = 0; c < 4; ++c)
            for (Index r = 0; r < n; ++r)
                for (Index q = 0; q < n; ++q)
                    if (y(0, c, r, q) != yb(0, c, r, q)) radius = std::max({radius, std::abs(r - mid), std::abs(q - mid)});
        CHECK(radius > 32);
        CHECK(radius <= TileOptions{}.context);
    }
}

TEST_CASE("tiled inference agrees with a whole-image forward") {
    const PackedTensor x = pack_rggb(synthetic_scene(520, 648, 9), BayerPattern::rggb);  // 260x324 packed
    const nn::Model<float> zero(nn::tiny_config());
    CHECK((forward_tiled(zero, x, {32, 8, 0}).flat() - x.flat()).abs().maxCoeff() <= 1e-5f);
    CHECK((forward_tiled(zero, x, {40, 8}).flat() - x.flat()).abs().maxCoeff() <= 1e-5f);

    // Normalized units, on the kind of input the model was trained for.
    const auto model = trained_tiny();
    const NoiseParams p = params_at_iso(reference_curves(), 3200);
    PackedTensor noisy = x;
    noisy.flat() = sample_noisy(x.flat(), p, NoiseKey{8, 0});
    const PackedTensor whole = denoise_packed(noisy, model, p, SynthMode::ksigma(), {512, 32});
    for (const TileOptions opts : {TileOptions{64, 32}, TileOptions{100, 32}, TileOptions{256, 32}}) {
        CAPTURE(opts.tile);
        const PackedTensor tiled = denoise_packed(noisy, model, p, SynthMode::ksigma(), opts);
        CHECK((tiled.flat() - whole.flat()).abs().maxCoeff() <= 2e-3f);
        CHECK((tiled.flat() - whole.flat()).abs().maxCoeff() <= 1e-6f);
    }
    // Without context the zero padding at tile edges is visible.
    const PackedTensor bare = denoise_packed(noisy, model, p, SynthMode::ksigma(), {64, 32, 0});
    CHECK((bare.flat() - whole.flat()).abs().maxCoeff() > 2e-3f);

    // an input smaller than one tile takes the padded path directly
    const PackedTensor small = pack_rggb(synthetic_scene(40, 56, 9), BayerPattern::rggb);
    CHECK(same_tensor(forward_tiled(model, small), forward_padded(model, small)));
    CHECK(forward_padded(model, small).shape_string() == "(1,4,20,28)");
    CHECK_THROWS_AS(forward_tiled(model, x, {64, 32, -1}), ValidationError);
}

TEST_CASE("ksigma denoising depends on the params, not the ISO label") {
    const auto model = trained_tiny();
    RawImage raw = noisy_raw(64, 64, 1600, 6);
    const NoiseParams p = params_at_iso(reference_curves(), 1600);
    const RawImage a = denoise_image(raw, model, reference_curves(), SynthMode::ksigma(), {}, &p);
    raw.meta.iso = 400;
    const RawImage b = denoise_image(raw, model, reference_curves(), SynthMode::ksigma(), {}, &p);
    CHECK((a.data == b.data).all());
    const RawImage c = denoise_image(raw, model, reference_curves(), SynthMode::ksigma());
    CHECK_FALSE((a.data == c.data).all());
}
