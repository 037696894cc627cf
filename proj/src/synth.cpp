#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "active/errors.hpp"
#include "active/io.hpp"

namespace active {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Per-object state over all frames. Trajectories are a pure function of
// (seed, object index); the draw order below is the format contract the
// transcription oracle recomputes.
struct SpermState {
    double a = 0.0, b = 0.0;  // ellipse semi-axes, b = 0.4 a
    std::vector<double> x, y, heading;
};

struct ImpurityState {
    double r = 0.0, phase = 0.0;
    double x = 0.0, y = 0.0;
};

// Reflect v into [lo, hi]; a single bounce suffices because validate()
// caps the step below the interval width.
double reflect(double v, double lo, double hi, bool& bounced) {
    bounced = false;
    if (v < lo) {
        bounced = true;
        return 2.0 * lo - v;
    }
    if (v > hi) {
        bounced = true;
        return 2.0 * hi - v;
    }
    return v;
}

// Draw order per sperm: length, speed, heading, x, y, then per frame one
// normal for the heading step.
SpermState make_sperm(const SynthSpec& spec, int index) {
    Rng rng(derive_seed(spec.seed, "sperm." + std::to_string(index)));
    SpermState s;
    const double len = rng.uniform(spec.sperm_len_lo, spec.sperm_len_hi);
    s.a = len / 2.0;
    s.b = 0.4 * s.a;
    const double speed = rng.uniform(spec.speed_lo, spec.speed_hi);
    double heading = rng.uniform(0.0, 2.0 * kPi);
    const double lo = s.a, hi = spec.image_size - s.a;
    double x = rng.uniform(lo, hi);
    double y = rng.uniform(lo, hi);
    s.x.push_back(x);
    s.y.push_back(y);
    s.heading.push_back(heading);
    for (int t = 1; t < spec.n_frames; ++t) {
        heading += spec.heading_noise * rng.normal();
        x += speed * std::cos(heading);
        y += speed * std::sin(heading);
        bool bx = false, by = false;
        x = reflect(x, lo, hi, bx);
        if (bx) heading = kPi - heading;
        y = reflect(y, lo, hi, by);
        if (by) heading = -heading;
        s.x.push_back(x);
        s.y.push_back(y);
        s.heading.push_back(heading);
    }
    return s;
}

// Draw order per impurity: diameter, x, y, lobe phase. Static thereafter.
ImpurityState make_impurity(const SynthSpec& spec, int index) {
    Rng rng(derive_seed(spec.seed, "impurity." + std::to_string(index)));
    ImpurityState s;
    s.r = rng.uniform(spec.impurity_diam_lo, spec.impurity_diam_hi) / 2.0;
    s.x = rng.uniform(s.r, spec.image_size - s.r);
    s.y = rng.uniform(s.r, spec.image_size - s.r);
    s.phase = rng.uniform(0.0, 2.0 * kPi);
    return s;
}

Box sperm_box(const SpermState& s, int t) {
    const double c = std::cos(s.heading[static_cast<size_t>(t)]);
    const double sn = std::sin(s.heading[static_cast<size_t>(t)]);
    const double hx = std::sqrt(s.a * s.a * c * c + s.b * s.b * sn * sn);
    const double hy = std::sqrt(s.a * s.a * sn * sn + s.b * s.b * c * c);
    return {s.x[static_cast<size_t>(t)], s.y[static_cast<size_t>(t)], 2.0 * hx, 2.0 * hy};
}

// Intensity max-composited over background noise: dim three-lobed impurity
// blobs below bright ellipses, sampled at pixel centers.
GrayImage render_frame(const SynthSpec& spec, const std::vector<SpermState>& sperm,
                       const std::vector<ImpurityState>& impurities, int t) {
    const int size = spec.image_size;
    std::vector<double> v(static_cast<size_t>(size) * size);
    Rng noise(derive_seed(spec.seed, "noise." + std::to_string(t)));
    for (double& p : v) p = spec.noise_level * noise.uniform();

    auto for_aabb = [&](double cx, double cy, double hx, double hy, auto&& shade) {
        const int px0 = std::max(0, static_cast<int>(std::floor(cx - hx)));
        const int px1 = std::min(size - 1, static_cast<int>(std::ceil(cx + hx)));
        const int py0 = std::max(0, static_cast<int>(std::floor(cy - hy)));
        const int py1 = std::min(size - 1, static_cast<int>(std::ceil(cy + hy)));
        for (int py = py0; py <= py1; ++py)
            for (int px = px0; px <= px1; ++px) {
                const double val = shade(px + 0.5 - cx, py + 0.5 - cy);
                if (val > 0.0) {
                    double& cell = v[static_cast<size_t>(py) * size + px];
                    cell = std::max(cell, val);
                }
            }
    };

    for (const ImpurityState& im : impurities)
        for_aabb(im.x, im.y, im.r, im.r, [&](double dx, double dy) {
            const double d = std::hypot(dx, dy);
            const double re = im.r * (0.75 + 0.25 * std::sin(3.0 * std::atan2(dy, dx) + im.phase));
            if (d >= re) return 0.0;
            const double f = d / re;
            return 0.50 * (1.0 - f * f);
        });
    for (const SpermState& sp : sperm) {
        const Box b = sperm_box(sp, t);
        const double c = std::cos(sp.heading[static_cast<size_t>(t)]);
        const double sn = std::sin(sp.heading[static_cast<size_t>(t)]);
        for_aabb(b.cx, b.cy, b.w / 2.0, b.h / 2.0, [&](double dx, double dy) {
            const double u = dx * c + dy * sn;
            const double w = -dx * sn + dy * c;
            const double m = (u / sp.a) * (u / sp.a) + (w / sp.b) * (w / sp.b);
            if (m > 1.0) return 0.0;
            return 0.55 + 0.45 * (1.0 - m);
        });
    }

    GrayImage img;
    img.width = size;
    img.height = size;
    img.pixels.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        const double clamped = std::min(1.0, std::max(0.0, v[i]));
        img.pixels[i] = static_cast<uint8_t>(std::lround(clamped * 255.0));
    }
    return img;
}

}  // namespace

void SynthSpec::validate() const {
    if (n_frames < 1) throw InputError("n_frames must be positive");
    if (n_sperm < 0 || n_impurity < 0) throw InputError("object counts must be non-negative");
    if (image_size < 16) throw InputError("image_size must be at least 16");
    if (!(sperm_len_lo > 0.0) || sperm_len_hi < sperm_len_lo)
        throw InputError("sperm length range must be positive and ordered");
    if (!(impurity_diam_lo > 0.0) || impurity_diam_hi < impurity_diam_lo)
        throw InputError("impurity diameter range must be positive and ordered");
    if (heading_noise < 0.0) throw InputError("heading_noise must be non-negative");
    if (speed_lo < 0.0 || speed_hi < speed_lo)
        throw InputError("speed range must be non-negative and ordered");
    if (noise_level < 0.0 || noise_level > 1.0)
        throw InputError("noise_level must be in [0,1]");
    // Moving objects need room: one reflection per axis per step.
    if (n_sperm > 0 && sperm_len_hi + speed_hi >= image_size)
        throw InputError("sperm too large or fast for the image");
    if (n_impurity > 0 && impurity_diam_hi >= image_size)
        throw InputError("impurity larger than the image");
}

SynthResult synth_generate(const SynthSpec& spec) {
    spec.validate();
    std::vector<SpermState> sperm;
    for (int i = 0; i < spec.n_sperm; ++i) sperm.push_back(make_sperm(spec, i));
    std::vector<ImpurityState> impurities;
    for (int i = 0; i < spec.n_impurity; ++i) impurities.push_back(make_impurity(spec, i));

    SynthResult out;
    for (int i = 0; i < spec.n_sperm; ++i) {
        SynthObject o;
        o.class_id = 0;
        for (int t = 0; t < spec.n_frames; ++t)
            o.boxes.push_back(sperm_box(sperm[static_cast<size_t>(i)], t));
        out.objects.push_back(std::move(o));
    }
    for (int i = 0; i < spec.n_impurity; ++i) {
        const ImpurityState& im = impurities[static_cast<size_t>(i)];
        SynthObject o;
        o.class_id = 1;
        o.boxes.assign(static_cast<size_t>(spec.n_frames),
                       Box{im.x, im.y, 2.0 * im.r, 2.0 * im.r});
        out.objects.push_back(std::move(o));
    }

    for (int t = 0; t < spec.n_frames; ++t) {
        out.frames.push_back(render_frame(spec, sperm, impurities, t));
        for (const SynthObject& o : out.objects)
            out.annotations.push_back({o.boxes[static_cast<size_t>(t)], o.class_id, t});
    }
    for (size_t i = 0; i < out.objects.size(); ++i) {
        Track tr;
        tr.id = static_cast<int>(i);
        tr.class_id = out.objects[i].class_id;
        for (int t = 0; t < spec.n_frames; ++t)
            tr.points.push_back({t, out.objects[i].boxes[static_cast<size_t>(t)].cx,
                                 out.objects[i].boxes[static_cast<size_t>(t)].cy});
        out.gt_tracks.push_back(std::move(tr));
    }
    return out;
}

namespace {

std::string frame_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04d.pgm", t);
    return buf;
}

}  // namespace

void write_synth_dir(const std::string& dir, const SynthResult& result,
                     const SynthSpec& spec) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create " + dir + ": " + ec.message());

    nlohmann::ordered_json manifest;
    manifest["image_size"] = spec.image_size;
    manifest["n_frames"] = static_cast<int>(result.frames.size());
    manifest["classes"] = {"sperm", "impurity"};
    nlohmann::ordered_json names = nlohmann::ordered_json::array();
    for (size_t t = 0; t < result.frames.size(); ++t) {
        const std::string name = frame_name(static_cast<int>(t));
        write_pgm(dir + "/" + name, result.frames[t]);
        names.push_back(name);
    }
    manifest["frames"] = std::move(names);
    manifest["annotations"] = "annotations.jsonl";
    manifest["tracks"] = "tracks.jsonl";
    write_text_file(dir + "/annotations.jsonl", annotations_jsonl(result.annotations));
    write_text_file(dir + "/tracks.jsonl", tracks_jsonl(result.gt_tracks));
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

VideoData load_video_dir(const std::string& dir) {
    nlohmann::ordered_json manifest;
    const std::string mpath = dir + "/manifest.json";
    try {
        manifest = nlohmann::ordered_json::parse(read_text_file(mpath));
    } catch (const nlohmann::ordered_json::parse_error& e) {
        throw InputError(mpath + ": not valid JSON: " + e.what());
    }
    if (!manifest.is_object() || !manifest.contains("image_size") ||
        !manifest["image_size"].is_number_integer() || !manifest.contains("frames") ||
        !manifest["frames"].is_array())
        throw InputError(mpath + ": missing image_size or frames");

    VideoData video;
    video.image_size = manifest["image_size"].get<int>();
    if (video.image_size <= 0) throw InputError(mpath + ": bad image_size");
    for (const auto& name : manifest["frames"]) {
        if (!name.is_string()) throw InputError(mpath + ": frame names must be strings");
        GrayImage img = read_pgm(dir + "/" + name.get<std::string>());
        if (img.width != video.image_size || img.height != video.image_size)
            throw InputError(dir + "/" + name.get<std::string>() +
                             ": frame extent disagrees with the manifest");
        video.frames.push_back(std::move(img));
    }
    std::string ann = "annotations.jsonl";
    if (manifest.contains("annotations")) {
        if (!manifest["annotations"].is_string())
            throw InputError(mpath + ": annotations must be a path");
        ann = manifest["annotations"].get<std::string>();
    }
    const std::string apath = dir + "/" + ann;
    if (std::filesystem::exists(apath)) {
        try {
            video.annotations = parse_annotations(read_text_file(apath), video.image_size);
        } catch (const InputError& e) {
            throw InputError(apath + ": " + e.what());
        }
    }
    return video;
}

}  // namespace active
