#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "active/eval.hpp"
#include "active/model.hpp"
#include "active/params.hpp"
#include "active/tracker.hpp"
#include "active/train.hpp"

namespace active {

// 8-bit grayscale frame, row-major.
struct GrayImage {
    int width = 0, height = 0;
    std::vector<uint8_t> pixels;
};

// Binary PGM (P5, maxval 255). The reader accepts exactly what the writer
// emits plus '#' comment lines in the header.
void write_pgm(const std::string& path, const GrayImage& img);
GrayImage read_pgm(const std::string& path);

// One frame replicated to 3 channels in [0,1]: 1 x 3 x S x S.
Tensor image_to_tensor(const GrayImage& img);

// Annotation lines: {"image":..,"class_id":..,"cx":..,"cy":..,"w":..,"h":..}.
// Detection lines carry a trailing "conf". Parsers reject malformed lines
// and boxes outside [0, image_size] with the 1-based line number.
std::string annotations_jsonl(const std::vector<GtObs>& gts);
std::vector<GtObs> parse_annotations(const std::string& text, int image_size);
std::string detections_jsonl(const std::vector<ScoredDet>& dets);
std::vector<ScoredDet> parse_detections(const std::string& text, int image_size);

// Reads track lines as written by tracks_jsonl: {"track_id":..,
// "class_id":..,"points":[[frame,cx,cy],..]} with strictly increasing
// frames. Malformed lines are rejected with the 1-based line number.
std::vector<Track> parse_tracks_jsonl(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Checkpoint: little-endian, magic "ACTV", format version u32, entry count
// u32, then per named tensor: name length u32, name bytes, 4 u32 extents
// (n,c,h,w), raw float32 values. Params are written name-sorted, then
// buffers name-sorted. Loading requires the exact name set and shapes of
// the receiving map; values pass through float32 both ways, so
// save -> load -> save is byte-identical.
inline constexpr uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::string& path, const ParamMap& pm);
void load_checkpoint(const std::string& path, ParamMap& pm);

// Synthetic video: bright elongated sperm blobs moving with heading-noise
// random walks (wall reflections keep boxes inside), dim irregular static
// impurity blobs, uniform background noise. Class ids: 0 sperm, 1 impurity.
struct SynthSpec {
    int n_frames = 40;
    int n_sperm = 6;
    int n_impurity = 3;
    int image_size = 416;
    double sperm_len_lo = 14.0, sperm_len_hi = 26.0;      // body length, px
    double impurity_diam_lo = 8.0, impurity_diam_hi = 18.0;
    double heading_noise = 0.3;  // stddev of per-step heading change, rad
    double speed_lo = 2.0, speed_hi = 6.0;  // px per frame
    double noise_level = 0.08;   // background amplitude, fraction of white
    uint64_t seed = 1;

    void validate() const;  // rejects infeasible geometry
};

struct SynthObject {
    int class_id = 0;
    std::vector<Box> boxes;  // one per frame
};

struct SynthResult {
    std::vector<GrayImage> frames;
    std::vector<SynthObject> objects;   // sperm first, then impurities
    std::vector<GtObs> annotations;     // frame-major, object order within
    std::vector<Track> gt_tracks;       // one per object, every frame
};

SynthResult synth_generate(const SynthSpec& spec);

// Writes frame_NNNN.pgm files, annotations.jsonl, tracks.jsonl, and
// manifest.json into dir (created if needed).
void write_synth_dir(const std::string& dir, const SynthResult& result,
                     const SynthSpec& spec);

// A video directory as written by write_synth_dir: frames listed by the
// manifest plus the annotation path.
struct VideoData {
    int image_size = 0;
    std::vector<GrayImage> frames;
    std::vector<GtObs> annotations;
};
VideoData load_video_dir(const std::string& dir);

// Head decode thresholds, grouped with the model in the run configuration.
struct HeadConfig {
    double conf_thresh = 0.25;
    double diou_thresh = 0.45;
};

struct DataConfig {
    std::string dir = "data";
    int image_size = 416;
};

struct TrackConfig {
    double gate_px = 30.0;
    int max_gap = 2;
    int min_len = 5;
    double fps = 0.0;        // required by motility; no usable default
    double um_per_px = 0.0;  // required by motility; no usable default
    int smooth_w = 5;
};

// Everything a run needs, serializable to one JSON document. The top-level
// seed drives weight init, training shuffles, and synthesis; the data
// image size is the single source of truth for frame extents.
struct RunConfig {
    DbfenConfig dbfen;
    CcfpnConfig ccfpn;
    int num_classes = 2;
    HeadConfig head;
    TrainConfig train;  // its seed field is overwritten from `seed`
    DataConfig data;
    TrackConfig track;
    SynthSpec synth;    // its image_size and seed are overwritten likewise
    uint64_t seed = 1;

    void validate() const;
    ModelConfig model_config() const;
    TrainConfig train_config() const;
    SynthSpec synth_spec() const;
};

// JSON round trip: to_json emits every field; from_json starts from
// defaults, accepts partial documents, and rejects unknown keys with their
// dotted path.
std::string config_to_json(const RunConfig& rc);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

// FNV-1a over the canonical JSON form, as 16 hex digits; stamps bench
// output so measurements are traceable to a configuration.
std::string config_hash(const RunConfig& rc);

// One generated page documenting every config key and its default.
std::string config_reference();

}  // namespace active
