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

#include "ksdn/calibration.hpp"
#include "ksdn/dataset_synth.hpp"
#include "ksdn/hash.hpp"
#include "ksdn/isp.hpp"
#include "ksdn/metrics.hpp"
#include "ksdn/nn/weights_io.hpp"
#include "ksdn/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ksdn;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitData = 2;
constexpr int kExitUsage = 64;

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

// Everything a run needs to be replayed: argv, seed, effective config and the
// hashes of what it read and wrote.
struct Run {
    std::vector<std::string> argv;
    std::string command;
    std::uint64_t seed = 0;
    int threads = 1;
    json file_config = json::object();
    json config = json::object();
    std::map<std::string, std::string> inputs;
    std::vector<fs::path> outputs;

    json section() const {
        return file_config.contains(command) ? file_config.at(command) : json::object();
    }
    void input(const std::string& path) { inputs[path] = sha256_file(path); }
    void output(const fs::path& path) { outputs.push_back(path); }

    void write_manifest(const fs::path& path) const {
        json outs = json::object();
        for (const auto& o : outputs) {
            if (fs::is_regular_file(o)) outs[o.string()] = sha256_file(o.string());
        }
        const json m = {{"tool", "ksdn"},
                        {"command", command},
                        {"argv", argv},
                        {"seed", seed},
                        {"threads", threads},
                        {"config", config},
                        {"config_hash", sha256_hex(config.dump())},
                        {"inputs", inputs},
                        {"outputs", outs}};
        write_text(path, m.dump(2) + "\n");
    }
};

template <typename T>
void from_section(const json& sec, const char* key, const CLI::Option* opt, T& value) {
    if (opt->count() == 0 && sec.contains(key)) value = sec.at(key).get<T>();
}

IsoCurves curves_or_reference(const std::string& path, Run& run) {
    if (path.empty() || path == "reference") return reference_curves();
    run.input(path);
    return load_curves(path);
}

nn::ModelConfig model_config_from(const std::vector<int>& widths, const json& sec) {
    nn::ModelConfig cfg = sec.contains("model") ? sec.at("model").get<nn::ModelConfig>() : nn::ModelConfig{};
    if (!widths.empty()) {
        if (widths.size() != 5) throw ValidationError("--widths needs 5 values (stem + 4 stages)");
        std::copy(widths.begin(), widths.end(), cfg.stage_widths.begin());
    }
    cfg.validate();
    return cfg;
}

std::vector<std::string> pgm_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

Rect parse_roi(const std::string& s) {
    Rect r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(s);
    if (!(in >> r.x >> c1 >> r.y >> c2 >> r.w >> c3 >> r.h) || c1 != ',' || c2 != ',' || c3 != ',' || !in.eof()) {
        throw ValidationError("ROI '" + s + "' must be x,y,w,h");
    }
    return r;
}

void print_summary(const CalibrationReport& report) {
    for (const auto& c : report.per_iso) {
        std::printf("ISO %g: k=%.6g sigma2=%.6g R2=%.5f (%zu levels)%s\n", c.iso, c.fit.params.k,
                    c.fit.params.sigma2, c.fit.report.r2, c.points.size(),
                    c.fit.report.sigma2_clamped ? " [sigma2 clamped to 0]" : "");
    }
    if (report.curves) {
        const auto& f = *report.curves;
        std::printf("curves: alpha=%.6g k_intercept=%.6g sigma_d2=%.6g sigma_r2=%.6g R2(k)=%.5f R2(sigma2)=%.5f\n",
                    f.curves.alpha, f.curves.k_intercept, f.curves.sigma_d2, f.curves.sigma_r2, f.r2_k,
                    f.r2_sigma2);
    }
}

int run_command(std::vector<std::string> args);

// ---------------------------------------------------------------------------

int dispatch(std::vector<std::string> args) {
    Run run;
    run.argv = args;

    CLI::App app{"Raw-domain denoising with k-Sigma transformed training"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--seed", run.seed, "Seed for every random draw")->capture_default_str();
    app.add_option("--config", config_path, "JSON file with per-subcommand defaults")->check(CLI::ExistingFile);
    app.add_option("--threads", run.threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Fit noise parameters from burst directories, one per ISO");
    std::vector<std::string> cal_dirs;
    std::string cal_out;
    BracketOptions bracket;
    double iso_divisor = 100.0;
    std::vector<double> valid_iso{100.0, 6400.0};
    cal->add_option("dirs", cal_dirs, "Burst directories")->required();
    cal->add_option("-o,--out", cal_out, "Output directory")->required();
    auto* o_bin = cal->add_option("--bin-width", bracket.bin_width, "Level bin width")->capture_default_str();
    auto* o_min = cal->add_option("--min-count", bracket.min_count, "Minimum pixels per bin")->capture_default_str();
    cal->add_option("--iso-divisor", iso_divisor, "gain = iso / divisor")->capture_default_str();
    cal->add_option("--valid-iso", valid_iso, "Valid ISO range of the fitted curves")->expected(2);

    // simulate-burst
    auto* sim = app.add_subcommand("simulate-burst", "Write a simulated grayscale-chart burst");
    std::string sim_out, sim_curves;
    double sim_iso = 1600.0;
    std::size_t sim_frames = 64, sim_levels = 16;
    Index sim_patch = 64;
    std::vector<double> sim_range{0.05, 0.85};
    int black = 4096, white = 65535;
    sim->add_option("-o,--out", sim_out, "Output directory")->required();
    sim->add_option("--curves", sim_curves, "ISO curves JSON (default: built-in reference sensor)");
    sim->add_option("--iso", sim_iso, "ISO")->capture_default_str();
    sim->add_option("--frames", sim_frames, "Frames")->capture_default_str();
    sim->add_option("--levels", sim_levels, "Chart patches")->capture_default_str();
    sim->add_option("--patch", sim_patch, "Patch side in pixels")->capture_default_str();
    sim->add_option("--level-range", sim_range, "Lowest and highest chart level")->expected(2);
    sim->add_option("--black", black, "Black level (DN)")->capture_default_str();
    sim->add_option("--white", white, "White level (DN)")->capture_default_str();

    // scenes
    auto* scn = app.add_subcommand("scenes", "Write synthetic clean raw scenes");
    std::string scn_out;
    int scn_count = 8;
    Index scn_size = 256;
    scn->add_option("-o,--out", scn_out, "Output directory")->required();
    scn->add_option("--count", scn_count, "Number of scenes")->capture_default_str();
    scn->add_option("--size", scn_size, "Side in Bayer pixels (even)")->capture_default_str();

    // synth
    auto* syn = app.add_subcommand("synth", "Describe (and optionally materialize) a training pair stream");
    std::vector<std::string> syn_clean;
    std::string syn_clean_dir, syn_curves, syn_out, syn_mode = "ksigma", syn_materialize;
    std::vector<double> syn_iso{800.0, 6400.0};
    Index syn_patch = 1024;
    bool syn_no_aug = false;
    double syn_screen = 0.0;
    std::uint64_t syn_count = 0, syn_mat_count = 0;
    syn->add_option("--clean", syn_clean, "Clean raw files");
    syn->add_option("--clean-dir", syn_clean_dir, "Directory of clean raw files")->check(CLI::ExistingDirectory);
    syn->add_option("--curves", syn_curves, "ISO curves or calibration report JSON")->required();
    auto* o_mode = syn->add_option("--mode", syn_mode, "ksigma | iso-aug | single-iso:<n>")->capture_default_str();
    auto* o_iso = syn->add_option("--iso-range", syn_iso, "ISO range for random draws")->expected(2);
    auto* o_patch = syn->add_option("--patch", syn_patch, "Patch side in Bayer pixels")->capture_default_str();
    syn->add_flag("--no-augment", syn_no_aug, "Disable flips and brightness/contrast");
    syn->add_option("--screen-sigma", syn_screen, "Drop sources with estimated noise above this");
    syn->add_option("--count", syn_count, "Number of pairs (0: unbounded)");
    syn->add_option("--materialize", syn_materialize, "Write pairs as PGM into this directory");
    syn->add_option("--materialize-count", syn_mat_count, "Pairs to write (default: --count)");
    syn->add_option("-o,--out", syn_out, "Dataset manifest JSON")->required();

    // train
    auto* trn = app.add_subcommand("train", "Train a denoiser on a dataset manifest");
    std::string trn_dataset, trn_out, trn_init;
    std::vector<int> trn_widths;
    std::int64_t trn_pairs = 0;
    TrainConfig tc;
    trn->add_option("--dataset", trn_dataset, "Dataset manifest from 'synth'")->required()->check(CLI::ExistingFile);
    trn->add_option("-o,--out", trn_out, "Output directory")->required();
    trn->add_option("--widths", trn_widths, "Stem and 4 stage widths")->expected(5);
    trn->add_option("--init", trn_init, "Start from these weights")->check(CLI::ExistingFile);
    auto* o_pairs = trn->add_option("--pairs", trn_pairs, "Cycle over this many pairs (0: fresh pair per iteration)");
    auto* o_total = trn->add_option("--iterations", tc.total, "Total iterations")->capture_default_str();
    auto* o_max = trn->add_option("--max-lr", tc.max_lr)->capture_default_str();
    auto* o_base = trn->add_option("--base-lr", tc.base_lr)->capture_default_str();
    auto* o_final = trn->add_option("--final-base-lr", tc.final_base_lr)->capture_default_str();
    auto* o_cycle = trn->add_option("--cycle-step", tc.cycle_step, "Half-cycle length")->capture_default_str();
    auto* o_decay = trn->add_option("--decay-until", tc.decay_until)->capture_default_str();
    auto* o_both = trn->add_flag("--decay-max-lr", tc.decay_max_lr, "Decay the peak together with the trough");
    auto* o_ckpt = trn->add_option("--checkpoint-every", tc.checkpoint_every)->capture_default_str();
    auto* o_log = trn->add_option("--log-every", tc.log_every)->capture_default_str();

    // denoise
    auto* den = app.add_subcommand("denoise", "Denoise a raw file");
    std::string den_in, den_model, den_curves, den_out, den_mode = "ksigma";
    TileOptions tiles;
    den->add_option("input", den_in, "Noisy raw (PGM + JSON sidecar)")->required()->check(CLI::ExistingFile);
    den->add_option("--model", den_model, "Weights")->required()->check(CLI::ExistingFile);
    den->add_option("--curves", den_curves, "ISO curves JSON (default: built-in reference sensor)");
    den->add_option("--mode", den_mode, "Mode the model was trained in")->capture_default_str();
    den->add_option("--tile", tiles.tile, "Tile side, packed pixels")->capture_default_str();
    den->add_option("--overlap", tiles.overlap, "Tile overlap, packed pixels")->capture_default_str();
    den->add_option("--context", tiles.context, "Image context forwarded around each tile, packed pixels")
        ->capture_default_str();
    den->add_option("-o,--out", den_out, "Output PGM")->required();

    // eval
    auto* evl = app.add_subcommand("eval", "PSNR / SSIM of a result against a reference after rendering");
    std::string ev_result, ev_ref, ev_meta, ev_out, ev_demosaic = "ppg";
    std::vector<std::string> ev_rois;
    evl->add_option("--result", ev_result)->required()->check(CLI::ExistingFile);
    evl->add_option("--reference", ev_ref)->required()->check(CLI::ExistingFile);
    evl->add_option("--meta", ev_meta, "Capture metadata JSON (default: the reference's sidecar)");
    evl->add_option("--roi", ev_rois, "x,y,w,h in rendered pixels; repeatable");
    evl->add_option("--demosaic", ev_demosaic)->capture_default_str();
    evl->add_option("-o,--out", ev_out, "Report JSON");

    // init
    auto* ini = app.add_subcommand("init", "Write freshly initialized (or all-zero) weights");
    std::string ini_out;
    std::vector<int> ini_widths;
    bool ini_zero = false;
    ini->add_option("-o,--out", ini_out)->required();
    ini->add_option("--widths", ini_widths)->expected(5);
    ini->add_flag("--zero", ini_zero, "All weights zero: the model is the identity");

    // render
    auto* ren = app.add_subcommand("render", "Render a raw file to an sRGB PNG");
    std::string ren_in, ren_out, ren_demosaic = "ppg";
    ren->add_option("input", ren_in)->required()->check(CLI::ExistingFile);
    ren->add_option("-o,--out", ren_out)->required();
    ren->add_option("--demosaic", ren_demosaic)->capture_default_str();

    // macs
    auto* mac = app.add_subcommand("macs", "Multiply-accumulates per megapixel of Bayer input");
    std::vector<int> mac_widths;
    double mac_mp = 1.0;
    mac->add_option("--widths", mac_widths)->expected(5);
    mac->add_option("--megapixels", mac_mp)->capture_default_str();

    // replay
    auto* rep = app.add_subcommand("replay", "Re-run a manifest and compare its outputs");
    std::string rep_manifest;
    rep->add_option("manifest", rep_manifest)->required()->check(CLI::ExistingFile);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (!config_path.empty()) {
        run.file_config = read_json(config_path);
        run.input(config_path);
    }
    Eigen::setNbThreads(run.threads);

    if (*cal) {
        run.command = "calibrate";
        const json sec = run.section();
        from_section(sec, "bin_width", o_bin, bracket.bin_width);
        from_section(sec, "min_count", o_min, bracket.min_count);
        CalibrationReport report;
        for (const auto& dir : cal_dirs) {
            const BurstStack stack = load_burst_dir(dir);
            for (const auto& f : pgm_files(dir)) run.input(f);
            report.per_iso.push_back(calibrate_burst(stack, iso_divisor, bracket));
        }
        std::sort(report.per_iso.begin(), report.per_iso.end(),
                  [](const auto& a, const auto& b) { return a.iso < b.iso; });
        if (report.per_iso.size() >= 3) {
            std::vector<GainSample> samples;
            for (const auto& c : report.per_iso) samples.push_back({c.gain, c.fit.params});
            report.curves = fit_iso_curves(samples, iso_divisor, {valid_iso[0], valid_iso[1]});
        } else {
            std::cerr << "warning: " << report.per_iso.size()
                      << " ISO setting(s) supplied; at least 3 are needed for the ISO curves, which are omitted\n";
        }
        const fs::path out(cal_out);
        write_text(out / "calibration.json", to_json(report).dump(2) + "\n");
        write_text(out / "points.csv", points_csv(report));
        run.output(out / "calibration.json");
        run.output(out / "points.csv");
        run.config = {{"bin_width", bracket.bin_width}, {"min_count", bracket.min_count},
                      {"iso_divisor", iso_divisor}, {"valid_iso", valid_iso}};
        run.write_manifest(out / "manifest.json");
        print_summary(report);
        return kExitOk;
    }

    if (*sim) {
        run.command = "simulate-burst";
        const IsoCurves curves = curves_or_reference(sim_curves, run);
        const NoiseParams params = params_at_iso(curves, sim_iso);
        const PlaneD chart = grayscale_chart(chart_levels(sim_levels, sim_range[0], sim_range[1]), sim_patch);
        const BurstStack burst = simulate_burst(chart, params, sim_frames, run.seed, sim_iso);
        CaptureMeta meta;
        meta.black_level = black;
        meta.white_level = white;
        meta.iso = sim_iso;
        meta.validate();
        fs::create_directories(sim_out);
        for (std::size_t i = 0; i < burst.frames.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%03zu.pgm", i);
            const fs::path path = fs::path(sim_out) / name;
            save_raw(RawImage{denormalize(burst.frames[i], meta), meta}, path.string());
            run.output(path);
        }
        run.config = {{"iso", sim_iso}, {"frames", sim_frames}, {"levels", sim_levels}, {"patch", sim_patch},
                      {"level_range", sim_range}, {"black", black}, {"white", white}, {"params", params}};
        run.write_manifest(fs::path(sim_out) / "manifest.json");
        std::printf("wrote %zu frames (k=%.6g sigma2=%.6g) to %s\n", burst.frames.size(), params.k, params.sigma2,
                    sim_out.c_str());
        return kExitOk;
    }

    if (*scn) {
        run.command = "scenes";
        CaptureMeta meta;
        meta.black_level = black;
        meta.white_level = white;
        fs::create_directories(scn_out);
        for (int i = 0; i < scn_count; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "scene_%03d.pgm", i);
            const fs::path path = fs::path(scn_out) / name;
            const PlaneF scene = synthetic_scene(scn_size, scn_size, run.seed + static_cast<std::uint64_t>(i));
            save_raw(RawImage{denormalize(scene, meta), meta}, path.string());
            run.output(path);
        }
        run.config = {{"count", scn_count}, {"size", scn_size}};
        run.write_manifest(fs::path(scn_out) / "manifest.json");
        std::printf("wrote %d scenes to %s\n", scn_count, scn_out.c_str());
        return kExitOk;
    }

    if (*syn) {
        run.command = "synth";
        const json sec = run.section();
        from_section(sec, "mode", o_mode, syn_mode);
        from_section(sec, "iso_range", o_iso, syn_iso);
        from_section(sec, "patch_size", o_patch, syn_patch);
        std::vector<std::string> files = syn_clean;
        if (!syn_clean_dir.empty()) {
            const auto more = pgm_files(syn_clean_dir);
            files.insert(files.end(), more.begin(), more.end());
        }
        if (files.empty()) throw ValidationError("synth: give clean sources with --clean or --clean-dir");
        for (const auto& f : files) run.input(f);
        run.input(syn_curves);

        DatasetManifest manifest;
        manifest.clean_files = files;
        manifest.curves = load_curves(syn_curves);
        manifest.pipeline.patch_size = syn_patch;
        manifest.pipeline.augment = !syn_no_aug;
        manifest.pipeline.mode = SynthMode::parse(syn_mode);
        manifest.pipeline.iso_range = {syn_iso[0], syn_iso[1]};
        manifest.pipeline.seed = run.seed;
        manifest.pipeline.max_source_sigma = syn_screen;
        manifest.pair_count = syn_count;
        const PairPipeline pipeline = PairPipeline::from_files(files, manifest.curves, manifest.pipeline);
        for (const auto& r : pipeline.rejected()) std::cerr << "warning: skipped " << r << "\n";

        write_text(syn_out, json(manifest).dump(2) + "\n");
        run.output(syn_out);

        const std::uint64_t n_mat = syn_mat_count ? syn_mat_count : syn_count;
        if (!syn_materialize.empty()) {
            if (n_mat == 0) throw ValidationError("--materialize needs --count or --materialize-count");
            json pairs = json::array();
            for (std::uint64_t i = 0; i < n_mat; ++i) {
                const TrainingPair p = pipeline.pair(i);
                PackedTensor noisy = p.input;
                PackedTensor clean = p.target;
                if (manifest.pipeline.mode.transforms()) {
                    noisy.flat() = ksigma_inverse(noisy.flat(), p.params).eval();
                    clean.flat() = ksigma_inverse(clean.flat(), p.params).eval();
                }
                CaptureMeta meta;
                meta.black_level = black;
                meta.white_level = white;
                meta.iso = p.iso;
                char stem[32];
                std::snprintf(stem, sizeof stem, "pair_%05llu", static_cast<unsigned long long>(i));
                const fs::path base = fs::path(syn_materialize) / stem;
                fs::create_directories(syn_materialize);
                save_raw(RawImage{denormalize(unpack_rggb(noisy, meta.bayer_pattern), meta), meta},
                         base.string() + ".noisy.pgm");
                save_raw(RawImage{denormalize(unpack_rggb(clean, meta.bayer_pattern), meta), meta},
                         base.string() + ".clean.pgm");
                run.output(base.string() + ".noisy.pgm");
                run.output(base.string() + ".clean.pgm");
                pairs.push_back({{"index", i}, {"iso", p.iso}, {"params", p.params}});
            }
            write_text(fs::path(syn_materialize) / "pairs.json", pairs.dump(2) + "\n");
            run.output(fs::path(syn_materialize) / "pairs.json");
        }
        run.config = json(manifest.pipeline);
        run.write_manifest(fs::path(syn_out).replace_extension(".manifest.json"));
        std::printf("dataset: %zu source(s), mode %s, patch %lld, written to %s\n", pipeline.sources().size(),
                    manifest.pipeline.mode.to_string().c_str(), static_cast<long long>(syn_patch), syn_out.c_str());
        return kExitOk;
    }

    if (*trn) {
        run.command = "train";
        const json sec = run.section();
        if (sec.contains("train")) {
            const TrainConfig file_tc = sec.at("train").get<TrainConfig>();
            const std::vector<std::pair<const CLI::Option*, std::function<void()>>> fields = {
                {o_total, [&] { tc.total = file_tc.total; }},
                {o_max, [&] { tc.max_lr = file_tc.max_lr; }},
                {o_base, [&] { tc.base_lr = file_tc.base_lr; }},
                {o_final, [&] { tc.final_base_lr = file_tc.final_base_lr; }},
                {o_cycle, [&] { tc.cycle_step = file_tc.cycle_step; }},
                {o_decay, [&] { tc.decay_until = file_tc.decay_until; }},
                {o_both, [&] { tc.decay_max_lr = file_tc.decay_max_lr; }},
                {o_ckpt, [&] { tc.checkpoint_every = file_tc.checkpoint_every; }},
                {o_log, [&] { tc.log_every = file_tc.log_every; }}};
            for (const auto& [opt, apply] : fields) {
                if (opt->count() == 0) apply();
            }
        }
        from_section(sec, "pairs", o_pairs, trn_pairs);
        tc.seed = run.seed;
        if (o_decay->count() == 0 && !sec.contains("train")) tc.decay_until = tc.total / 2;
        tc.validate();

        run.input(trn_dataset);
        const DatasetManifest manifest = read_json(trn_dataset).get<DatasetManifest>();
        for (const auto& f : manifest.clean_files) run.input(f);
        const PairPipeline pipeline = PairPipeline::from_files(manifest.clean_files, manifest.curves, manifest.pipeline);

        nn::Model<float> model;
        if (!trn_init.empty()) {
            run.input(trn_init);
            model = nn::load_weights(trn_init);
        } else {
            model = nn::Model<float>::initialized(model_config_from(trn_widths, sec), run.seed);
        }

        PairSource source;
        if (trn_pairs > 0) {
            std::vector<TrainingPair> pool;
            for (std::int64_t i = 0; i < trn_pairs; ++i) pool.push_back(pipeline.pair(static_cast<std::uint64_t>(i)));
            source = shuffled_pool(std::move(pool), run.seed);
        } else {
            source = [&pipeline](std::int64_t it) { return pipeline.pair(static_cast<std::uint64_t>(it)); };
        }
        const TrainResult res = train(std::move(model), source, tc, {trn_out, "model"});
        for (const char* name : {"model.ksdn", "model.adam.ksdn", "model.state.json", "model.loss.csv"}) {
            run.output(fs::path(trn_out) / name);
        }
        run.config = {{"train", tc}, {"model", res.model.config()}, {"pairs", trn_pairs}};
        run.write_manifest(fs::path(trn_out) / "manifest.json");
        std::printf("trained %lld iterations: smoothed L1 %.5g -> %.5g; weights in %s\n",
                    static_cast<long long>(tc.total), smoothed_head(res.log, 50), smoothed_tail(res.log, 50),
                    (fs::path(trn_out) / "model.ksdn").c_str());
        return kExitOk;
    }

    if (*den) {
        run.command = "denoise";
        run.input(den_in);
        run.input(den_model);
        const IsoCurves curves = curves_or_reference(den_curves, run);
        const RawImage raw = load_raw(den_in);
        const nn::Model<float> model = nn::load_weights(den_model);
        const SynthMode mode = SynthMode::parse(den_mode);
        const RawImage out = denoise_image(raw, model, curves, mode, tiles);
        save_raw(out, den_out);
        run.output(den_out);
        run.config = {{"mode", mode.to_string()}, {"tile", tiles.tile}, {"overlap", tiles.overlap}, {"context", tiles.context}};
        run.write_manifest(fs::path(den_out).replace_extension(".manifest.json"));
        std::printf("denoised %s -> %s\n", den_in.c_str(), den_out.c_str());
        return kExitOk;
    }

    if (*evl) {
        run.command = "eval";
        run.input(ev_result);
        run.input(ev_ref);
        const RawImage result = load_raw(ev_result);
        const RawImage reference = load_raw(ev_ref);
        CaptureMeta meta = reference.meta;
        if (!ev_meta.empty()) {
            run.input(ev_meta);
            meta = read_json(ev_meta).get<CaptureMeta>();
        }
        std::vector<Rect> rois;
        for (const auto& r : ev_rois) rois.push_back(parse_roi(r));
        RenderOptions opts;
        opts.demosaic = parse_demosaic_method(ev_demosaic);
        const EvalReport report = evaluate(result, reference, meta, rois, opts);
        const json j = to_json(report);
        if (!ev_out.empty()) {
            write_text(ev_out, j.dump(2) + "\n");
            run.output(ev_out);
            run.config = {{"rois", ev_rois}, {"demosaic", ev_demosaic}};
            run.write_manifest(fs::path(ev_out).replace_extension(".manifest.json"));
        }
        std::printf("mean PSNR %s dB, mean SSIM %.6f\n", j.at("mean_psnr").dump().c_str(), report.mean_ssim);
        return kExitOk;
    }

    if (*ini) {
        run.command = "init";
        const nn::ModelConfig cfg = model_config_from(ini_widths, run.section());
        const nn::Model<float> model = ini_zero ? nn::Model<float>(cfg) : nn::Model<float>::initialized(cfg, run.seed);
        if (fs::path(ini_out).has_parent_path()) fs::create_directories(fs::path(ini_out).parent_path());
        nn::save_weights(model, ini_out);
        run.output(ini_out);
        run.config = {{"model", cfg}, {"zero", ini_zero}};
        run.write_manifest(fs::path(ini_out).replace_extension(".manifest.json"));
        std::printf("%s model with %lld parameters -> %s\n", ini_zero ? "zero" : "initialized",
                    static_cast<long long>(model.parameter_count()), ini_out.c_str());
        return kExitOk;
    }

    if (*ren) {
        run.command = "render";
        run.input(ren_in);
        RenderOptions opts;
        opts.demosaic = parse_demosaic_method(ren_demosaic);
        write_png(render_srgb(load_raw(ren_in), opts), ren_out);
        run.output(ren_out);
        run.config = {{"demosaic", ren_demosaic}};
        run.write_manifest(fs::path(ren_out).replace_extension(".manifest.json"));
        return kExitOk;
    }

    if (*mac) {
        const nn::ModelConfig cfg = model_config_from(mac_widths, run.file_config.value("macs", json::object()));
        const double macs = nn::count_macs(cfg, mac_mp);
        std::printf("%.6g MACs for %g MP of Bayer input (%.3f G/MP)\n", macs, mac_mp, macs / mac_mp / 1e9);
        return kExitOk;
    }

    if (*rep) {
        const json m = read_json(rep_manifest);
        for (const auto& [path, hash] : m.at("inputs").items()) {
            if (!fs::exists(path) || sha256_file(path) != hash.get<std::string>()) {
                std::cerr << "input changed since the manifest was written: " << path << "\n";
                return kExitError;
            }
        }
        const int code = run_command(m.at("argv").get<std::vector<std::string>>());
        if (code != kExitOk) return code;
        int mismatches = 0;
        for (const auto& [path, hash] : m.at("outputs").items()) {
            const bool same = fs::exists(path) && sha256_file(path) == hash.get<std::string>();
            if (!same) {
                ++mismatches;
                std::cerr << "output differs: " << path << "\n";
            }
        }
        std::printf("replay: %zu output(s) compared, %d differ\n", m.at("outputs").size(), mismatches);
        return mismatches == 0 ? kExitOk : kExitError;
    }
    return kExitUsage;
}

int run_command(std::vector<std::string> args) {
    try {
        return dispatch(std::move(args));
    } catch (const CalibrationDataError& e) {
        std::cerr << "calibration data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ksdn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}

}  // namespace

int main(int argc, char** argv) {
    return run_command(std::vector<std::string>(argv + 1, argv + argc));
}
