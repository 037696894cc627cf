#include "active/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "active/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint and PGM writers assume a little-endian host");

namespace active {

namespace {

using ojson = nlohmann::ordered_json;

[[noreturn]] void fail_line(size_t line_no, const std::string& what) {
    throw InputError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << text;
    if (!out) throw InputError("short write to " + path);
}

void write_pgm(const std::string& path, const GrayImage& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<size_t>(img.width) * img.height)
        throw InputError("image extents do not match the pixel buffer");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw InputError("short write to " + path);
}

GrayImage read_pgm(const std::string& path) {
    const std::string raw = read_text_file(path);
    size_t pos = 0;
    // Header tokens separated by whitespace; '#' starts a comment to EOL.
    auto next_token = [&]() -> std::string {
        for (;;) {
            while (pos < raw.size() && std::isspace(static_cast<unsigned char>(raw[pos])))
                ++pos;
            if (pos < raw.size() && raw[pos] == '#') {
                while (pos < raw.size() && raw[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const size_t start = pos;
        while (pos < raw.size() && !std::isspace(static_cast<unsigned char>(raw[pos])))
            ++pos;
        if (start == pos) throw InputError(path + ": truncated PGM header");
        return raw.substr(start, pos - start);
    };
    auto int_token = [&](const char* what) {
        const std::string t = next_token();
        size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(t, &used);
        } catch (const std::exception&) {
            throw InputError(path + ": bad PGM " + what);
        }
        if (used != t.size() || v <= 0) throw InputError(path + ": bad PGM " + what);
        return v;
    };

    if (next_token() != "P5") throw InputError(path + ": not a binary PGM");
    GrayImage img;
    img.width = int_token("width");
    img.height = int_token("height");
    if (int_token("maxval") != 255) throw InputError(path + ": PGM maxval must be 255");
    if (pos >= raw.size() || !std::isspace(static_cast<unsigned char>(raw[pos])))
        throw InputError(path + ": truncated PGM header");
    ++pos;  // single whitespace byte before the raster

    const size_t count = static_cast<size_t>(img.width) * img.height;
    if (raw.size() - pos < count) throw InputError(path + ": truncated PGM raster");
    if (raw.size() - pos > count) throw InputError(path + ": trailing bytes after raster");
    img.pixels.assign(raw.begin() + static_cast<long>(pos), raw.end());
    return img;
}

Tensor image_to_tensor(const GrayImage& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<size_t>(img.width) * img.height)
        throw InputError("image extents do not match the pixel buffer");
    Tensor t = Tensor::zeros({1, 3, img.height, img.width});
    double* d = t.data();
    const long long plane = static_cast<long long>(img.height) * img.width;
    for (long long i = 0; i < plane; ++i) {
        const double v = img.pixels[static_cast<size_t>(i)] / 255.0;
        d[i] = v;
        d[plane + i] = v;
        d[2 * plane + i] = v;
    }
    return t;
}

namespace {

ojson box_fields(const Box& b, int image, int class_id) {
    ojson j;
    j["image"] = image;
    j["class_id"] = class_id;
    j["cx"] = b.cx;
    j["cy"] = b.cy;
    j["w"] = b.w;
    j["h"] = b.h;
    return j;
}

// Pulls one typed field, consuming it so leftovers can be rejected.
double take_number(ojson& j, const char* key, size_t line_no) {
    auto it = j.find(key);
    if (it == j.end()) fail_line(line_no, std::string("missing \"") + key + "\"");
    if (!it->is_number()) fail_line(line_no, std::string("\"") + key + "\" must be a number");
    const double v = it->get<double>();
    j.erase(it);
    return v;
}

int take_int(ojson& j, const char* key, size_t line_no) {
    auto it = j.find(key);
    if (it == j.end()) fail_line(line_no, std::string("missing \"") + key + "\"");
    if (!it->is_number_integer())
        fail_line(line_no, std::string("\"") + key + "\" must be an integer");
    const int v = it->get<int>();
    j.erase(it);
    return v;
}

// Shared line loop for annotations and detections.
template <typename Row>
std::vector<Row> parse_lines(const std::string& text, int image_size,
                             Row (*one)(ojson&, size_t, int)) {
    if (image_size <= 0) throw InputError("image_size must be positive");
    std::vector<Row> rows;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const ojson::parse_error&) {
            fail_line(line_no, "not valid JSON");
        }
        if (!j.is_object()) fail_line(line_no, "not a JSON object");
        rows.push_back(one(j, line_no, image_size));
        if (!j.empty())
            fail_line(line_no, "unknown key \"" + j.begin().key() + "\"");
    }
    return rows;
}

Box take_box(ojson& j, size_t line_no, int image_size) {
    Box b;
    b.cx = take_number(j, "cx", line_no);
    b.cy = take_number(j, "cy", line_no);
    b.w = take_number(j, "w", line_no);
    b.h = take_number(j, "h", line_no);
    if (!(b.w > 0.0) || !(b.h > 0.0)) fail_line(line_no, "degenerate box");
    if (b.x1() < 0.0 || b.y1() < 0.0 || b.x2() > image_size || b.y2() > image_size)
        fail_line(line_no, "box outside the image");
    return b;
}

GtObs one_annotation(ojson& j, size_t line_no, int image_size) {
    GtObs g;
    g.image = take_int(j, "image", line_no);
    if (g.image < 0) fail_line(line_no, "\"image\" must be non-negative");
    g.class_id = take_int(j, "class_id", line_no);
    if (g.class_id < 0) fail_line(line_no, "\"class_id\" must be non-negative");
    g.box = take_box(j, line_no, image_size);
    return g;
}

ScoredDet one_detection(ojson& j, size_t line_no, int image_size) {
    ScoredDet d;
    d.image = take_int(j, "image", line_no);
    if (d.image < 0) fail_line(line_no, "\"image\" must be non-negative");
    d.class_id = take_int(j, "class_id", line_no);
    if (d.class_id < 0) fail_line(line_no, "\"class_id\" must be non-negative");
    d.box = take_box(j, line_no, image_size);
    d.conf = take_number(j, "conf", line_no);
    if (!(d.conf >= 0.0) || !(d.conf <= 1.0)) fail_line(line_no, "\"conf\" must be in [0,1]");
    return d;
}

}  // namespace

std::string annotations_jsonl(const std::vector<GtObs>& gts) {
    std::ostringstream os;
    for (const GtObs& g : gts) os << box_fields(g.box, g.image, g.class_id).dump() << '\n';
    return os.str();
}

std::vector<GtObs> parse_annotations(const std::string& text, int image_size) {
    return parse_lines<GtObs>(text, image_size, one_annotation);
}

std::string detections_jsonl(const std::vector<ScoredDet>& dets) {
    std::ostringstream os;
    for (const ScoredDet& d : dets) {
        ojson j = box_fields(d.box, d.image, d.class_id);
        j["conf"] = d.conf;
        os << j.dump() << '\n';
    }
    return os.str();
}

std::vector<ScoredDet> parse_detections(const std::string& text, int image_size) {
    return parse_lines<ScoredDet>(text, image_size, one_detection);
}

std::vector<Track> parse_tracks_jsonl(const std::string& text) {
    std::vector<Track> tracks;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const ojson::parse_error&) {
            fail_line(line_no, "not valid JSON");
        }
        if (!j.is_object()) fail_line(line_no, "not a JSON object");
        Track t;
        t.id = take_int(j, "track_id", line_no);
        if (t.id < 0) fail_line(line_no, "\"track_id\" must be non-negative");
        t.class_id = take_int(j, "class_id", line_no);
        if (t.class_id < 0) fail_line(line_no, "\"class_id\" must be non-negative");
        auto it = j.find("points");
        if (it == j.end()) fail_line(line_no, "missing \"points\"");
        if (!it->is_array() || it->empty())
            fail_line(line_no, "\"points\" must be a non-empty array");
        for (const auto& p : *it) {
            if (!p.is_array() || p.size() != 3 || !p[0].is_number_integer() ||
                !p[1].is_number() || !p[2].is_number())
                fail_line(line_no, "each point must be [frame, cx, cy]");
            TrackPoint tp{p[0].get<int>(), p[1].get<double>(), p[2].get<double>()};
            if (!t.points.empty() && tp.frame <= t.points.back().frame)
                fail_line(line_no, "frames must be strictly increasing");
            t.points.push_back(tp);
        }
        j.erase(it);
        if (!j.empty()) fail_line(line_no, "unknown key \"" + j.begin().key() + "\"");
        tracks.push_back(std::move(t));
    }
    return tracks;
}

namespace {

void put_u32(std::string& out, uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    const Shape& s = t.shape();
    put_u32(out, static_cast<uint32_t>(s.n));
    put_u32(out, static_cast<uint32_t>(s.c));
    put_u32(out, static_cast<uint32_t>(s.h));
    put_u32(out, static_cast<uint32_t>(s.w));
    const double* d = t.data();
    for (long long i = 0; i < t.numel(); ++i) {
        const float f = static_cast<float>(d[i]);
        char b[4];
        std::memcpy(b, &f, 4);
        out.append(b, 4);
    }
}

struct Cursor {
    const std::string& raw;
    const std::string& path;
    size_t pos = 0;

    void need(size_t n) const {
        if (raw.size() - pos < n) throw InputError(path + ": truncated checkpoint");
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, raw.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = raw.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& pm) {
    std::string out;
    out += "ACTV";
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(pm.params.size() + pm.buffers.size()));
    for (const auto& [name, t] : pm.params) put_tensor(out, name, t);
    for (const auto& [name, t] : pm.buffers) put_tensor(out, name, t);
    write_text_file(path, out);
}

void load_checkpoint(const std::string& path, ParamMap& pm) {
    const std::string raw = read_text_file(path);
    Cursor c{raw, path};
    if (c.bytes(4) != "ACTV") throw InputError(path + ": not a checkpoint (bad magic)");
    const uint32_t version = c.u32();
    if (version != kCheckpointVersion)
        throw InputError(path + ": unsupported checkpoint version " +
                         std::to_string(version));
    const uint32_t count = c.u32();
    const size_t expected = pm.params.size() + pm.buffers.size();
    if (count != expected)
        throw InputError(path + ": checkpoint has " + std::to_string(count) +
                         " tensors, model has " + std::to_string(expected));
    for (uint32_t e = 0; e < count; ++e) {
        const uint32_t name_len = c.u32();
        const std::string name = c.bytes(name_len);
        auto it = pm.params.find(name);
        Tensor* dst = it != pm.params.end() ? &it->second : nullptr;
        if (!dst) {
            auto bit = pm.buffers.find(name);
            if (bit != pm.buffers.end()) dst = &bit->second;
        }
        if (!dst) throw InputError(path + ": unknown tensor \"" + name + "\"");
        Shape s{static_cast<int>(c.u32()), static_cast<int>(c.u32()),
                static_cast<int>(c.u32()), static_cast<int>(c.u32())};
        const Shape& want = dst->shape();
        if (s.n != want.n || s.c != want.c || s.h != want.h || s.w != want.w)
            throw ShapeError(path + ": shape mismatch for \"" + name + "\"");
        double* d = dst->data();
        for (long long i = 0; i < dst->numel(); ++i) {
            float f;
            std::memcpy(&f, c.bytes(4).data(), 4);
            d[i] = static_cast<double>(f);
        }
    }
    if (c.pos != raw.size()) throw InputError(path + ": trailing bytes");
}

namespace {

// Typed field extraction for config documents; consumed keys are erased so
// anything left over is an unknown key.
[[noreturn]] void fail_key(const std::string& path, const std::string& what) {
    throw InputError("config key \"" + path + "\" " + what);
}

ojson take_section(ojson& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) return ojson::object();
    if (!it->is_object()) fail_key(key, "must be an object");
    ojson s = std::move(*it);
    j.erase(it);
    return s;
}

void finish(const ojson& j, const std::string& path) {
    if (!j.empty())
        throw InputError("unknown config key \"" +
                         (path.empty() ? "" : path + ".") + j.begin().key() + "\"");
}

void get_field(ojson& j, const std::string& path, const char* key, int& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer()) fail_key(path + "." + key, "must be an integer");
    out = it->get<int>();
    j.erase(it);
}

void get_field(ojson& j, const std::string& path, const char* key, double& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number()) fail_key(path + "." + key, "must be a number");
    out = it->get<double>();
    j.erase(it);
}

void get_field(ojson& j, const std::string& path, const char* key, bool& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_boolean()) fail_key(path + "." + key, "must be a boolean");
    out = it->get<bool>();
    j.erase(it);
}

void get_field(ojson& j, const std::string& path, const char* key, std::string& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_string()) fail_key(path + "." + key, "must be a string");
    out = it->get<std::string>();
    j.erase(it);
}

void get_field(ojson& j, const std::string& path, const char* key, uint64_t& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    const bool neg = it->is_number_integer() && !it->is_number_unsigned() &&
                     it->get<int64_t>() < 0;
    if (!it->is_number_integer() || neg)
        fail_key(path.empty() ? key : path + "." + key, "must be a non-negative integer");
    out = it->get<uint64_t>();
    j.erase(it);
}

void get_field(ojson& j, const std::string& path, const char* key,
               std::array<int, 3>& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_array() || it->size() != 3)
        fail_key(path + "." + key, "must be an array of 3 integers");
    for (int i = 0; i < 3; ++i) {
        if (!(*it)[i].is_number_integer())
            fail_key(path + "." + key, "must be an array of 3 integers");
        out[static_cast<size_t>(i)] = (*it)[i].get<int>();
    }
    j.erase(it);
}

void read_phase(ojson& j, const std::string& path, PhaseConfig& p) {
    get_field(j, path, "epochs", p.epochs);
    get_field(j, path, "batch", p.batch);
    get_field(j, path, "lr", p.lr);
    get_field(j, path, "freeze_backbone", p.freeze_backbone);
    finish(j, path);
}

ojson phase_json(const PhaseConfig& p) {
    ojson j;
    j["epochs"] = p.epochs;
    j["batch"] = p.batch;
    j["lr"] = p.lr;
    j["freeze_backbone"] = p.freeze_backbone;
    return j;
}

ojson config_json(const RunConfig& rc) {
    ojson j;
    ojson& m = j["model"];
    ojson& db = m["dbfen"];
    db["stem_channels"] = rc.dbfen.stem_channels;
    db["blocks_per_stage_branch1"] = rc.dbfen.blocks_per_stage_branch1;
    db["blocks_per_stage_branch2"] = rc.dbfen.blocks_per_stage_branch2;
    db["expansion_ratio"] = rc.dbfen.expansion_ratio;
    db["drop_prob"] = rc.dbfen.drop_prob;
    db["se_reduction"] = rc.dbfen.se_reduction;
    ojson& cc = m["ccfpn"];
    cc["variant"] = rc.ccfpn.variant;
    cc["pyramid_width"] = rc.ccfpn.pyramid_width;
    cc["eq3_literal"] = rc.ccfpn.eq3_literal;
    m["num_classes"] = rc.num_classes;
    m["conf_thresh"] = rc.head.conf_thresh;
    m["diou_thresh"] = rc.head.diou_thresh;
    ojson& tr = j["train"];
    tr["phase1"] = phase_json(rc.train.phase1);
    tr["phase2"] = phase_json(rc.train.phase2);
    ojson& ad = tr["adam"];
    ad["beta1"] = rc.train.adam.beta1;
    ad["beta2"] = rc.train.adam.beta2;
    ad["eps"] = rc.train.adam.eps;
    tr["ignore_thresh"] = rc.train.ignore_thresh;
    ojson& da = j["data"];
    da["dir"] = rc.data.dir;
    da["image_size"] = rc.data.image_size;
    ojson& tk = j["track"];
    tk["gate_px"] = rc.track.gate_px;
    tk["max_gap"] = rc.track.max_gap;
    tk["min_len"] = rc.track.min_len;
    tk["fps"] = rc.track.fps;
    tk["um_per_px"] = rc.track.um_per_px;
    tk["smooth_w"] = rc.track.smooth_w;
    ojson& sy = j["synth"];
    sy["n_frames"] = rc.synth.n_frames;
    sy["n_sperm"] = rc.synth.n_sperm;
    sy["n_impurity"] = rc.synth.n_impurity;
    sy["sperm_len_lo"] = rc.synth.sperm_len_lo;
    sy["sperm_len_hi"] = rc.synth.sperm_len_hi;
    sy["impurity_diam_lo"] = rc.synth.impurity_diam_lo;
    sy["impurity_diam_hi"] = rc.synth.impurity_diam_hi;
    sy["heading_noise"] = rc.synth.heading_noise;
    sy["speed_lo"] = rc.synth.speed_lo;
    sy["speed_hi"] = rc.synth.speed_hi;
    sy["noise_level"] = rc.synth.noise_level;
    j["seed"] = rc.seed;
    return j;
}

// (key, description) for the generated reference page; checked against the
// emitted JSON so new fields cannot go undocumented.
const std::pair<const char*, const char*> kConfigDocs[] = {
    {"model.dbfen.stem_channels", "backbone stem width; stage widths are 4x, 8x, 16x this"},
    {"model.dbfen.blocks_per_stage_branch1", "residual units per stage in branch 1"},
    {"model.dbfen.blocks_per_stage_branch2", "bottleneck blocks per stage in branch 2"},
    {"model.dbfen.expansion_ratio", "bottleneck expansion ratio (1 skips the expand conv)"},
    {"model.dbfen.drop_prob", "drop-connect probability during training"},
    {"model.dbfen.se_reduction", "squeeze-excitation reduction factor"},
    {"model.ccfpn.variant", "fusion topology, 1 to 4"},
    {"model.ccfpn.pyramid_width", "channel width of all fused pyramid levels"},
    {"model.ccfpn.eq3_literal", "variant 3/4 pre-chain: keep the printed operand and upsample it"},
    {"model.num_classes", "number of object classes"},
    {"model.conf_thresh", "detection confidence cutoff applied in suppression"},
    {"model.diou_thresh", "distance-IoU threshold for suppression"},
    {"train.phase1.epochs", "epochs in the frozen-backbone phase"},
    {"train.phase1.batch", "batch size in phase 1"},
    {"train.phase1.lr", "learning rate in phase 1"},
    {"train.phase1.freeze_backbone", "freeze every backbone parameter during phase 1"},
    {"train.phase2.epochs", "epochs in the fine-tune phase"},
    {"train.phase2.batch", "batch size in phase 2"},
    {"train.phase2.lr", "learning rate in phase 2"},
    {"train.phase2.freeze_backbone", "freeze the backbone during phase 2"},
    {"train.adam.beta1", "Adam first-moment decay"},
    {"train.adam.beta2", "Adam second-moment decay"},
    {"train.adam.eps", "Adam denominator epsilon"},
    {"train.ignore_thresh", "prior-vs-gt IoU above which an unassigned anchor is ignored"},
    {"data.dir", "video directory read by train, detect, and eval"},
    {"data.image_size", "frame extent in pixels; must be a positive multiple of 32"},
    {"track.gate_px", "maximum center distance for frame-to-frame matching"},
    {"track.max_gap", "missed frames a track survives before it is closed"},
    {"track.min_len", "minimum detections for a track to be kept"},
    {"track.fps", "video frame rate; required by motility, no usable default"},
    {"track.um_per_px", "microns per pixel; required by motility, no usable default"},
    {"track.smooth_w", "odd moving-average window for the average-path velocity"},
    {"synth.n_frames", "frames per generated video"},
    {"synth.n_sperm", "moving bright objects per video"},
    {"synth.n_impurity", "static dim objects per video"},
    {"synth.sperm_len_lo", "minimum sperm body length, px"},
    {"synth.sperm_len_hi", "maximum sperm body length, px"},
    {"synth.impurity_diam_lo", "minimum impurity diameter, px"},
    {"synth.impurity_diam_hi", "maximum impurity diameter, px"},
    {"synth.heading_noise", "per-step heading change stddev, radians"},
    {"synth.speed_lo", "minimum speed, px per frame"},
    {"synth.speed_hi", "maximum speed, px per frame"},
    {"synth.noise_level", "background noise amplitude, fraction of white"},
    {"seed", "master seed for weight init, training shuffles, and synthesis"},
};

void flatten(const ojson& j, const std::string& path,
             std::vector<std::pair<std::string, std::string>>& out) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items())
            flatten(v, path.empty() ? k : path + "." + k, out);
        return;
    }
    out.emplace_back(path, j.dump());
}

}  // namespace

ModelConfig RunConfig::model_config() const {
    return ModelConfig{dbfen, ccfpn, data.image_size, num_classes, seed};
}

TrainConfig RunConfig::train_config() const {
    TrainConfig tc = train;
    tc.seed = seed;
    return tc;
}

SynthSpec RunConfig::synth_spec() const {
    SynthSpec s = synth;
    s.image_size = data.image_size;
    s.seed = seed;
    return s;
}

void RunConfig::validate() const {
    model_config().validate();
    train_config().validate();
    synth_spec().validate();
    if (!(head.conf_thresh >= 0.0) || !(head.conf_thresh <= 1.0))
        throw InputError("conf_thresh must be in [0,1]");
    if (!(head.diou_thresh >= 0.0) || !(head.diou_thresh <= 1.0))
        throw InputError("diou_thresh must be in [0,1]");
    if (data.dir.empty()) throw InputError("data.dir must be set");
    if (track.gate_px < 0.0) throw InputError("gate_px must be non-negative");
    if (track.max_gap < 0) throw InputError("max_gap must be non-negative");
    if (track.min_len < 1) throw InputError("min_len must be positive");
    if (track.fps < 0.0 || track.um_per_px < 0.0)
        throw InputError("fps and um_per_px must not be negative");
    if (track.smooth_w < 1 || track.smooth_w % 2 == 0)
        throw InputError("smooth_w must be odd");
}

std::string config_to_json(const RunConfig& rc) { return config_json(rc).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const ojson::parse_error& e) {
        throw InputError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw InputError("config root must be a JSON object");

    RunConfig rc;
    ojson m = take_section(j, "model");
    ojson db = take_section(m, "dbfen");
    get_field(db, "model.dbfen", "stem_channels", rc.dbfen.stem_channels);
    get_field(db, "model.dbfen", "blocks_per_stage_branch1", rc.dbfen.blocks_per_stage_branch1);
    get_field(db, "model.dbfen", "blocks_per_stage_branch2", rc.dbfen.blocks_per_stage_branch2);
    get_field(db, "model.dbfen", "expansion_ratio", rc.dbfen.expansion_ratio);
    get_field(db, "model.dbfen", "drop_prob", rc.dbfen.drop_prob);
    get_field(db, "model.dbfen", "se_reduction", rc.dbfen.se_reduction);
    finish(db, "model.dbfen");
    ojson cc = take_section(m, "ccfpn");
    get_field(cc, "model.ccfpn", "variant", rc.ccfpn.variant);
    get_field(cc, "model.ccfpn", "pyramid_width", rc.ccfpn.pyramid_width);
    get_field(cc, "model.ccfpn", "eq3_literal", rc.ccfpn.eq3_literal);
    finish(cc, "model.ccfpn");
    get_field(m, "model", "num_classes", rc.num_classes);
    get_field(m, "model", "conf_thresh", rc.head.conf_thresh);
    get_field(m, "model", "diou_thresh", rc.head.diou_thresh);
    finish(m, "model");

    ojson tr = take_section(j, "train");
    ojson p1 = take_section(tr, "phase1");
    read_phase(p1, "train.phase1", rc.train.phase1);
    ojson p2 = take_section(tr, "phase2");
    read_phase(p2, "train.phase2", rc.train.phase2);
    ojson ad = take_section(tr, "adam");
    get_field(ad, "train.adam", "beta1", rc.train.adam.beta1);
    get_field(ad, "train.adam", "beta2", rc.train.adam.beta2);
    get_field(ad, "train.adam", "eps", rc.train.adam.eps);
    finish(ad, "train.adam");
    get_field(tr, "train", "ignore_thresh", rc.train.ignore_thresh);
    finish(tr, "train");

    ojson da = take_section(j, "data");
    get_field(da, "data", "dir", rc.data.dir);
    get_field(da, "data", "image_size", rc.data.image_size);
    finish(da, "data");

    ojson tk = take_section(j, "track");
    get_field(tk, "track", "gate_px", rc.track.gate_px);
    get_field(tk, "track", "max_gap", rc.track.max_gap);
    get_field(tk, "track", "min_len", rc.track.min_len);
    get_field(tk, "track", "fps", rc.track.fps);
    get_field(tk, "track", "um_per_px", rc.track.um_per_px);
    get_field(tk, "track", "smooth_w", rc.track.smooth_w);
    finish(tk, "track");

    ojson sy = take_section(j, "synth");
    get_field(sy, "synth", "n_frames", rc.synth.n_frames);
    get_field(sy, "synth", "n_sperm", rc.synth.n_sperm);
    get_field(sy, "synth", "n_impurity", rc.synth.n_impurity);
    get_field(sy, "synth", "sperm_len_lo", rc.synth.sperm_len_lo);
    get_field(sy, "synth", "sperm_len_hi", rc.synth.sperm_len_hi);
    get_field(sy, "synth", "impurity_diam_lo", rc.synth.impurity_diam_lo);
    get_field(sy, "synth", "impurity_diam_hi", rc.synth.impurity_diam_hi);
    get_field(sy, "synth", "heading_noise", rc.synth.heading_noise);
    get_field(sy, "synth", "speed_lo", rc.synth.speed_lo);
    get_field(sy, "synth", "speed_hi", rc.synth.speed_hi);
    get_field(sy, "synth", "noise_level", rc.synth.noise_level);
    finish(sy, "synth");

    get_field(j, "", "seed", rc.seed);
    finish(j, "");
    return rc;
}

RunConfig load_config(const std::string& path) {
    try {
        return config_from_json(read_text_file(path));
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::string config_hash(const RunConfig& rc) {
    const uint64_t h = fnv1a(config_to_json(rc));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_reference() {
    std::vector<std::pair<std::string, std::string>> leaves;
    flatten(config_json(RunConfig{}), "", leaves);
    std::ostringstream os;
    os << "# Configuration reference\n\n"
       << "Every key accepted by --config, with its default. Omitted keys keep\n"
       << "their defaults; unknown keys are rejected.\n\n"
       << "| key | default | meaning |\n|---|---|---|\n";
    for (const auto& [key, value] : leaves) {
        const char* doc = nullptr;
        for (const auto& [k, d] : kConfigDocs)
            if (key == k) doc = d;
        if (!doc) throw InternalError("undocumented config key " + key);
        os << "| " << key << " | " << value << " | " << doc << " |\n";
    }
    return os.str();
}

}  // namespace active
