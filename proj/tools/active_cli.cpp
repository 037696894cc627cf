// Command-line surface: synthesis, training, detection, evaluation,
// tracking, motility, fusion-graph dumps, and a throughput benchmark.
// Every subcommand except bench is deterministic given (config, seed).
// Exit codes: 0 success, 2 bad input, 3 numerical failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "active/ccfpn.hpp"
#include "active/errors.hpp"
#include "active/eval.hpp"
#include "active/head.hpp"
#include "active/io.hpp"
#include "active/model.hpp"
#include "active/tracker.hpp"
#include "active/train.hpp"

namespace {

using namespace active;
using ojson = nlohmann::ordered_json;

struct GlobalArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out;  // per-subcommand default when empty
};

RunConfig effective_config(const GlobalArgs& g) {
    RunConfig rc = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
    if (g.seed) rc.seed = *g.seed;
    rc.validate();
    return rc;
}

std::string out_dir(const GlobalArgs& g, const std::string& fallback) {
    const std::string dir = g.out.empty() ? fallback : g.out;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError("cannot create " + dir + ": " + ec.message());
    return dir;
}

// Frames and per-frame ground truth for the configured video directory.
std::vector<Sample> video_samples(const VideoData& video) {
    std::vector<Sample> samples;
    for (size_t f = 0; f < video.frames.size(); ++f)
        samples.push_back({image_to_tensor(video.frames[f]), {}});
    for (const GtObs& g : video.annotations) {
        if (g.image >= static_cast<int>(samples.size()))
            throw InputError("annotation references frame " + std::to_string(g.image) +
                             " beyond the video");
        samples[static_cast<size_t>(g.image)].gts.push_back({g.box, g.class_id});
    }
    return samples;
}

VideoData load_video_checked(const RunConfig& rc) {
    VideoData video = load_video_dir(rc.data.dir);
    if (video.image_size != rc.data.image_size)
        throw InputError(rc.data.dir + ": frame size " + std::to_string(video.image_size) +
                         " does not match the configured image_size " +
                         std::to_string(rc.data.image_size));
    return video;
}

std::vector<AnchorWh> training_anchors(const RunConfig& rc,
                                       const std::vector<GtObs>& annotations) {
    std::vector<AnchorWh> whs;
    for (const GtObs& g : annotations) whs.emplace_back(g.box.w, g.box.h);
    Rng rng(derive_seed(rc.seed, "anchors"));
    return kmeans_anchors(whs, 9, rc.data.image_size, rng);
}

int run_synth(const GlobalArgs& g) {
    const RunConfig rc = effective_config(g);
    const std::string dir = out_dir(g, rc.data.dir);
    const SynthResult result = synth_generate(rc.synth_spec());
    write_synth_dir(dir, result, rc.synth_spec());
    std::cout << "wrote " << result.frames.size() << " frames to " << dir << "\n";
    return 0;
}

int run_train(const GlobalArgs& g) {
    const RunConfig rc = effective_config(g);
    const std::string dir = out_dir(g, "out");
    const VideoData video = load_video_checked(rc);
    if (video.frames.empty()) throw InputError(rc.data.dir + ": no frames to train on");
    const std::vector<Sample> samples = video_samples(video);

    Model model(rc.model_config(), training_anchors(rc, video.annotations));
    const TrainResult result =
        train(model, samples, rc.train_config(), [&](int phase) {
            save_checkpoint(dir + "/checkpoint_phase" + std::to_string(phase) + ".actv",
                            model.params());
        });
    save_checkpoint(dir + "/checkpoint.actv", model.params());
    write_text_file(dir + "/loss_log.csv", loss_log_csv(result.log));
    std::cout << "trained " << result.log.size() << " epochs; wrote " << dir
              << "/checkpoint.actv\n";
    return 0;
}

// Detections for every frame of a video, pooled with frame indices.
std::vector<ScoredDet> detect_video(const Model& model, const VideoData& video,
                                    const HeadConfig& head) {
    std::vector<ScoredDet> all;
    Rng rng(0);  // inference: drop-connect inactive
    for (size_t f = 0; f < video.frames.size(); ++f) {
        NoGradGuard guard;
        const auto raw = model.forward(image_to_tensor(video.frames[f]), false, rng);
        for (const Detection& d :
             model.detect(raw, 0, head.conf_thresh, head.diou_thresh))
            all.push_back({d.box, d.class_id, d.confidence, static_cast<int>(f)});
    }
    return all;
}

int run_detect(const GlobalArgs& g, const std::string& checkpoint) {
    const RunConfig rc = effective_config(g);
    const std::string dir = out_dir(g, "out");
    const VideoData video = load_video_checked(rc);

    Model model(rc.model_config(), fallback_anchors(rc.data.image_size));
    load_checkpoint(checkpoint.empty() ? dir + "/checkpoint.actv" : checkpoint,
                    model.params());
    model.refresh_anchors();
    const std::vector<ScoredDet> dets = detect_video(model, video, rc.head);
    write_text_file(dir + "/detections.jsonl", detections_jsonl(dets));
    std::cout << "wrote " << dets.size() << " detections to " << dir
              << "/detections.jsonl\n";
    return 0;
}

int run_eval(const GlobalArgs& g, const std::string& dets_path,
             const std::string& ann_path) {
    const RunConfig rc = effective_config(g);
    const std::string dir = out_dir(g, "out");
    const std::string dp = dets_path.empty() ? dir + "/detections.jsonl" : dets_path;
    const std::string ap =
        ann_path.empty() ? rc.data.dir + "/annotations.jsonl" : ann_path;
    const std::vector<ScoredDet> dets =
        parse_detections(read_text_file(dp), rc.data.image_size);
    const std::vector<GtObs> gts = parse_annotations(read_text_file(ap), rc.data.image_size);

    const EvalReport report = ap50_report(dets, gts, rc.num_classes);
    write_text_file(dir + "/eval.json", eval_report_json(report));
    write_text_file(dir + "/eval.csv", eval_report_csv(report));
    std::cout << eval_report_csv(report);
    return 0;
}

int run_track(const GlobalArgs& g, const std::string& dets_path) {
    const RunConfig rc = effective_config(g);
    const std::string dir = out_dir(g, "out");
    const std::string dp = dets_path.empty() ? dir + "/detections.jsonl" : dets_path;
    const std::vector<ScoredDet> dets =
        parse_detections(read_text_file(dp), rc.data.image_size);

    int n_frames = 0;
    for (const ScoredDet& d : dets) n_frames = std::max(n_frames, d.image + 1);
    std::vector<std::vector<Detection>> frames(static_cast<size_t>(n_frames));
    for (const ScoredDet& d : dets)
        frames[static_cast<size_t>(d.image)].push_back({d.box, d.conf, {}, d.class_id});

    const std::vector<Track> tracks =
        build_tracks(frames, rc.track.gate_px, rc.track.max_gap, rc.track.min_len);
    write_text_file(dir + "/tracks.jsonl", tracks_jsonl(tracks));
    std::cout << "wrote " << tracks.size() << " tracks to " << dir << "/tracks.jsonl\n";
    return 0;
}

ojson values_json(const MotilityValues& v) {
    ojson j;
    j["vsl"] = v.vsl;
    j["vcl"] = v.vcl;
    j["vap"] = v.vap;
    return j;
}

int run_motility(const GlobalArgs& g, const std::string& tracks_path,
                 const std::string& reference_path) {
    const RunConfig rc = effective_config(g);
    const std::string dir = out_dir(g, "out");
    const std::string tp = tracks_path.empty() ? dir + "/tracks.jsonl" : tracks_path;
    const std::vector<Track> tracks = parse_tracks_jsonl(read_text_file(tp));

    const MotilityReport report =
        motility_report(tracks, rc.track.fps, rc.track.um_per_px, rc.track.smooth_w);
    ojson j;
    ojson rows = ojson::array();
    for (const TrackMotility& t : report.tracks) {
        ojson r;
        r["track_id"] = t.track_id;
        r["class_id"] = t.class_id;
        r["vsl"] = t.values.vsl;
        r["vcl"] = t.values.vcl;
        r["vap"] = t.values.vap;
        rows.push_back(std::move(r));
    }
    j["tracks"] = std::move(rows);
    j["means"] = report.means ? values_json(*report.means) : ojson(nullptr);
    j["skipped_short"] = report.skipped_short;
    if (!reference_path.empty()) {
        const std::vector<Track> ref_tracks =
            parse_tracks_jsonl(read_text_file(reference_path));
        const MotilityReport ref = motility_report(ref_tracks, rc.track.fps,
                                                   rc.track.um_per_px, rc.track.smooth_w);
        const ErrorRates rates = error_rates(report, ref);
        ojson e;
        e["vsl"] = rates.vsl ? ojson(*rates.vsl) : ojson(nullptr);
        e["vcl"] = rates.vcl ? ojson(*rates.vcl) : ojson(nullptr);
        e["vap"] = rates.vap ? ojson(*rates.vap) : ojson(nullptr);
        j["error_rates"] = std::move(e);
    }
    write_text_file(dir + "/motility.csv", motility_csv(report));
    write_text_file(dir + "/motility.json", j.dump(2) + "\n");
    std::cout << motility_csv(report);
    return 0;
}

int run_graph(const GlobalArgs& g, int variant, bool literal, bool literal_given) {
    const RunConfig rc = effective_config(g);
    const int v = variant > 0 ? variant : rc.ccfpn.variant;
    const bool lit = literal_given ? literal : rc.ccfpn.eq3_literal;
    std::cout << ccfpn_graph_dump(build_fusion_graph(v, lit));
    return 0;
}

int run_bench(const GlobalArgs& g, const std::string& checkpoint, int n_images) {
    const RunConfig rc = effective_config(g);
    if (n_images < 1) throw InputError("bench needs at least one image");

    Model model(rc.model_config(), fallback_anchors(rc.data.image_size));
    if (!checkpoint.empty()) {
        load_checkpoint(checkpoint, model.params());
        model.refresh_anchors();
    }
    // Noise frames: timing only, content irrelevant.
    Rng rng(derive_seed(rc.seed, "bench"));
    std::vector<Tensor> images;
    for (int i = 0; i < n_images; ++i) {
        GrayImage img;
        img.width = rc.data.image_size;
        img.height = rc.data.image_size;
        img.pixels.resize(static_cast<size_t>(img.width) * img.height);
        for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(256));
        images.push_back(image_to_tensor(img));
    }

    std::vector<double> seconds;
    Rng fwd_rng(0);
    for (int run = 0; run < 3; ++run) {
        const auto t0 = std::chrono::steady_clock::now();
        size_t total = 0;
        for (const Tensor& img : images) {
            NoGradGuard guard;
            const auto raw = model.forward(img, false, fwd_rng);
            total += model.detect(raw, 0, rc.head.conf_thresh, rc.head.diou_thresh).size();
        }
        const auto t1 = std::chrono::steady_clock::now();
        seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
        (void)total;
    }
    std::sort(seconds.begin(), seconds.end());
    const double fps = n_images / seconds[1];  // median of 3
    std::printf("fps %.2f images %d runs 3 config %s\n", fps, n_images,
                config_hash(rc).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ACTIVE sperm and impurity detection pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalArgs g;
    uint64_t seed_arg = 0;
    auto* seed_opt = app.add_option("--seed", seed_arg, "override the config seed");
    app.add_option("--config", g.config_path, "JSON run configuration");
    app.add_option("--out", g.out, "output directory (synth defaults to data.dir)");
    app.set_version_flag("--config-reference", []() { return config_reference(); },
                         "print every config key with its default and exit");

    auto* synth = app.add_subcommand("synth", "generate a synthetic video");
    auto* train_cmd = app.add_subcommand("train", "train on the configured video");
    auto* detect = app.add_subcommand("detect", "run detection over a video");
    std::string checkpoint;
    detect->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/checkpoint.actv)");
    auto* eval_cmd = app.add_subcommand("eval", "score detections against annotations");
    std::string dets_path, ann_path;
    eval_cmd->add_option("--dets", dets_path, "detections file (default <out>/detections.jsonl)");
    eval_cmd->add_option("--ann", ann_path, "annotations file (default <data.dir>/annotations.jsonl)");
    auto* track_cmd = app.add_subcommand("track", "chain detections into tracks");
    std::string track_dets;
    track_cmd->add_option("--dets", track_dets, "detections file (default <out>/detections.jsonl)");
    auto* motility_cmd = app.add_subcommand("motility", "velocity analytics per track");
    std::string tracks_path, reference_path;
    motility_cmd->add_option("--tracks", tracks_path, "tracks file (default <out>/tracks.jsonl)");
    motility_cmd->add_option("--reference", reference_path,
                             "reference tracks for error rates");
    auto* graph_cmd = app.add_subcommand("graph", "print a fusion graph");
    int variant = 0;
    bool literal = false;
    graph_cmd->add_option("--variant", variant, "fusion variant 1..4 (default from config)")
        ->check(CLI::Range(1, 4));
    auto* literal_opt =
        graph_cmd->add_flag("--eq3-literal", literal, "use the literal pre-chain operand");
    auto* bench = app.add_subcommand("bench", "frames-per-second of the detect pipeline");
    std::string bench_checkpoint;
    int n_images = 16;
    bench->add_option("--checkpoint", bench_checkpoint, "checkpoint to load (optional)");
    bench->add_option("--images", n_images, "images per timed run");

    // Global flags may appear after the subcommand name.
    for (CLI::App* sc : {synth, train_cmd, detect, eval_cmd, track_cmd, motility_cmd,
                         graph_cmd, bench})
        sc->fallthrough();

    try {
        app.parse(argc, argv);
        if (seed_opt->count()) g.seed = seed_arg;
        if (synth->parsed()) return run_synth(g);
        if (train_cmd->parsed()) return run_train(g);
        if (detect->parsed()) return run_detect(g, checkpoint);
        if (eval_cmd->parsed()) return run_eval(g, dets_path, ann_path);
        if (track_cmd->parsed()) return run_track(g, track_dets);
        if (motility_cmd->parsed()) return run_motility(g, tracks_path, reference_path);
        if (graph_cmd->parsed())
            return run_graph(g, variant, literal, literal_opt->count() > 0);
        if (bench->parsed()) return run_bench(g, bench_checkpoint, n_images);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
