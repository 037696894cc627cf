#pragma once

#include <functional>
#include <map>
#include <vector>

#include "active/loss.hpp"
#include "active/model.hpp"

namespace active {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Each call to step consumes the gradients
// accumulated on every trainable param; moments are keyed by param name so
// a param frozen for a while resumes from its old state.
class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    void step(ParamMap& pm, double lr);

  private:
    AdamConfig cfg_;
    long long t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

struct PhaseConfig {
    int epochs = 0;
    int batch = 1;
    double lr = 0.0;
    bool freeze_backbone = false;
};

struct TrainConfig {
    PhaseConfig phase1{50, 4, 1e-3, true};
    PhaseConfig phase2{100, 2, 1e-4, false};
    AdamConfig adam{};
    uint64_t seed = 1;
    double ignore_thresh = 0.5;

    void validate() const;
};

struct Sample {
    Tensor image;  // 1 x 3 x S x S
    std::vector<GtBox> gts;
};

struct EpochRow {
    int epoch = 0;  // 1-based, continuous across phases
    int phase = 0;
    double loc = 0.0, conf = 0.0, cls = 0.0, total = 0.0;
};

struct TrainResult {
    std::vector<EpochRow> log;
};

// Two-phase schedule: phase 1 freezes every "dbfen." param, phase 2 trains
// everything. Batches are drawn in a seeded shuffle per epoch; logged
// values are per-batch means. on_phase_end, when set, runs after each
// phase (checkpointing hook).
TrainResult train(Model& model, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                  const std::function<void(int phase)>& on_phase_end = {});

// Loss log serialization: header + one row per epoch.
std::string loss_log_csv(const std::vector<EpochRow>& rows);

}  // namespace active
