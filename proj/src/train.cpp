#include "active/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "active/errors.hpp"
#include "active/ops.hpp"

namespace active {

void Adam::step(ParamMap& pm, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : pm.params) {
        if (!p.requires_grad()) continue;
        const std::vector<double>& g = p.impl()->grad;
        if (g.empty()) continue;
        std::vector<double>& m = m_[name];
        std::vector<double>& v = v_[name];
        if (m.empty()) {
            m.assign(g.size(), 0.0);
            v.assign(g.size(), 0.0);
        }
        double* w = p.data();
        for (size_t i = 0; i < g.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void TrainConfig::validate() const {
    for (const PhaseConfig* p : {&phase1, &phase2}) {
        if (p->epochs < 1) throw InputError("phase epochs must be positive");
        if (p->batch < 1) throw InputError("batch size must be positive");
        if (p->lr < 0.0 || !std::isfinite(p->lr))
            throw InputError("learning rate must be finite and non-negative");
    }
    if (ignore_thresh < 0.0 || ignore_thresh > 1.0)
        throw InputError("ignore threshold must be in [0, 1]");
}

namespace {

Tensor stack_images(const std::vector<Sample>& dataset, const std::vector<int>& idx) {
    const Shape& s0 = dataset[idx[0]].image.shape();
    Tensor batch = Tensor::zeros({static_cast<int>(idx.size()), s0.c, s0.h, s0.w});
    const long long per = s0.numel();
    for (size_t b = 0; b < idx.size(); ++b) {
        const Tensor& img = dataset[idx[b]].image;
        if (img.shape() != s0)
            throw ShapeError("all images in a batch must share a shape, got " +
                             img.shape().str() + " vs " + s0.str());
        std::copy(img.data(), img.data() + per, batch.data() + per * b);
    }
    return batch;
}

void set_backbone_trainable(ParamMap& pm, bool trainable) {
    for (auto& [name, p] : pm.params)
        if (name.rfind("dbfen.", 0) == 0) p.set_requires_grad(trainable);
}

}  // namespace

TrainResult train(Model& model, const std::vector<Sample>& dataset, const TrainConfig& cfg,
                  const std::function<void(int phase)>& on_phase_end) {
    cfg.validate();
    if (dataset.empty()) throw InputError("training dataset is empty");
    for (const Sample& s : dataset)
        if (!s.image.defined() || s.image.shape().n != 1)
            throw InputError("each training sample must hold one image");

    ParamMap& pm = model.params();
    Adam adam(cfg.adam);
    TrainResult result;
    int epoch_no = 0;

    const PhaseConfig* phases[2] = {&cfg.phase1, &cfg.phase2};
    for (int phase = 1; phase <= 2; ++phase) {
        const PhaseConfig& pc = *phases[phase - 1];
        set_backbone_trainable(pm, !pc.freeze_backbone);

        for (int e = 0; e < pc.epochs; ++e) {
            ++epoch_no;
            std::vector<int> order(dataset.size());
            std::iota(order.begin(), order.end(), 0);
            Rng shuffle_rng(derive_seed(cfg.seed, "shuffle." + std::to_string(epoch_no)));
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
            Rng drop_rng(derive_seed(cfg.seed, "drop." + std::to_string(epoch_no)));

            EpochRow row;
            row.epoch = epoch_no;
            row.phase = phase;
            int batches = 0;
            for (size_t start = 0; start < order.size(); start += pc.batch) {
                std::vector<int> idx(order.begin() + start,
                                     order.begin() + std::min(order.size(),
                                                              start + pc.batch));
                if (idx.empty()) continue;
                Tensor images = stack_images(dataset, idx);
                std::vector<TargetAssignment> targets;
                targets.reserve(idx.size());
                for (int i : idx)
                    targets.push_back(assign_targets(dataset[i].gts, model.anchors(),
                                                     model.config().image_size,
                                                     cfg.ignore_thresh));
                std::array<Tensor, kNumScales> raw = model.forward(images, true, drop_rng);
                LossParts loss = detection_loss(raw, targets, model.anchors(),
                                                model.config().image_size,
                                                model.config().num_classes);
                for (auto& [name, p] : pm.params) p.zero_grad();
                backward(loss.total);
                adam.step(pm, pc.lr);
                row.loc += loss.loc.item();
                row.conf += loss.conf.item();
                row.cls += loss.cls.item();
                row.total += loss.total.item();
                ++batches;
            }
            row.loc /= batches;
            row.conf /= batches;
            row.cls /= batches;
            row.total /= batches;
            result.log.push_back(row);
        }
        if (on_phase_end) on_phase_end(phase);
    }
    set_backbone_trainable(pm, true);
    return result;
}

std::string loss_log_csv(const std::vector<EpochRow>& rows) {
    std::ostringstream os;
    os << "epoch,phase,loc_loss,conf_loss,cls_loss,total\n";
    os.precision(17);
    for (const EpochRow& r : rows)
        os << r.epoch << ',' << r.phase << ',' << r.loc << ',' << r.conf << ',' << r.cls
           << ',' << r.total << '\n';
    return os.str();
}

}  // namespace active
