#include "svct/nn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "svct/error.hpp"
#include "svct/metrics.hpp"
#include "svct/random.hpp"

namespace svct::nn {

namespace {

struct Crop {
    std::size_t image = 0;
    std::size_t row = 0, col = 0;
    bool flip_h = false, flip_v = false;
};

void copy_patch(const Image& src, const Crop& c, std::size_t patch, double* dst) {
    for (std::size_t y = 0; y < patch; ++y) {
        const std::size_t sy = c.flip_v ? patch - 1 - y : y;
        for (std::size_t x = 0; x < patch; ++x) {
            const std::size_t sx = c.flip_h ? patch - 1 - x : x;
            dst[y * patch + x] = src(c.row + sy, c.col + sx);
        }
    }
}

bool weights_finite(Network& net) {
    for (const Param& p : net.parameters()) {
        for (double v : p.value) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

}  // namespace

void TrainConfig::validate(const NetSpec& spec) const {
    require(epochs >= 1, ErrorKind::config, "epochs must be at least 1");
    require(lr_end > 0.0 && lr_start >= lr_end, ErrorKind::config,
            "learning rates must satisfy lr_start >= lr_end > 0");
    require(weight_decay >= 0.0, ErrorKind::config, "weight_decay must be non-negative");
    require(batch >= 1, ErrorKind::config, "batch must be at least 1");
    require(patches_per_image >= 1, ErrorKind::config, "patches_per_image must be at least 1");
    require(patch >= 1 && patch % spec.size_multiple() == 0, ErrorKind::config,
            "patch size must be a positive multiple of " + std::to_string(spec.size_multiple()));
}

double TrainConfig::learning_rate(std::size_t epoch) const {
    if (epochs == 1 || epoch == 0) return lr_start;
    if (epoch + 1 == epochs) return lr_end;
    const double frac = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return lr_start * std::pow(lr_end / lr_start, frac);
}

double validation_psnr(Network& net, const ValidationSet& val) {
    if (val.inputs.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < val.inputs.size(); ++i) {
        sum += psnr(infer(net, val.inputs[i]), val.references[i], val.peak);
    }
    return sum / static_cast<double>(val.inputs.size());
}

std::vector<EpochRecord> train(Network& net, const TrainingSet& data, const ValidationSet& val,
                               const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate(net.spec());
    require(!data.inputs.empty() && data.inputs.size() == data.labels.size(),
            ErrorKind::sample_size, "training set needs matching, non-empty inputs and labels");
    require(val.inputs.size() == val.references.size(), ErrorKind::shape_mismatch,
            "validation inputs and references differ in count");
    for (std::size_t i = 0; i < data.inputs.size(); ++i) {
        require(data.inputs[i].size() >= cfg.patch &&
                    data.labels[i].size() == data.inputs[i].size(),
                ErrorKind::shape_mismatch, "training image smaller than the patch size");
    }

    double scale = 1.0;
    if (cfg.normalize_targets) {
        double sum = 0.0, count = 0.0;
        for (const Image& y : data.labels) {
            for (double v : y.values()) sum += v * v;
            count += static_cast<double>(y.pixel_count());
        }
        if (sum > 0.0) scale = 1.0 / std::sqrt(sum / count);
    }
    net.set_target_scale(scale);

    const std::size_t p = cfg.patch;
    std::vector<EpochRecord> history;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(mix_seed(cfg.seed, epoch));
        std::vector<Crop> crops;
        for (std::size_t rep = 0; rep < cfg.patches_per_image; ++rep) {
            for (std::size_t i = 0; i < data.inputs.size(); ++i) {
                const std::size_t span = data.inputs[i].size() - p + 1;
                Crop c;
                c.image = i;
                c.row = rng.below(span);
                c.col = rng.below(span);
                if (cfg.flips) {
                    c.flip_h = rng.below(2) == 1;
                    c.flip_v = rng.below(2) == 1;
                }
                crops.push_back(c);
            }
        }
        for (std::size_t i = crops.size(); i > 1; --i) {
            std::swap(crops[i - 1], crops[rng.below(i)]);
        }

        const double lr = cfg.learning_rate(epoch);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < crops.size(); start += cfg.batch) {
            const std::size_t count = std::min(cfg.batch, crops.size() - start);
            Tensor4 x(count, 1, p, p);
            Tensor4 y(count, 1, p, p);
            for (std::size_t b = 0; b < count; ++b) {
                const Crop& c = crops[start + b];
                copy_patch(data.inputs[c.image], c, p, x.plane(b, 0));
                copy_patch(data.labels[c.image], c, p, y.plane(b, 0));
            }
            for (double& v : y.values()) v *= scale;
            LossResult r;
            try {
                r = forward_backward(net, x, y, cfg.weight_decay);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::diverged) throw DivergedError(epoch, e.what());
                throw;
            }
            // Data term in label units.
            loss_sum += (r.data_term / (scale * scale) + r.decay_term) * static_cast<double>(count);
            for (Param& param : net.parameters()) {
                for (std::size_t i = 0; i < param.value.size(); ++i) {
                    param.value[i] -= lr * param.grad[i];
                }
            }
        }
        if (!weights_finite(net)) throw DivergedError(epoch, "non-finite network weights");

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(crops.size());
        rec.val_psnr = validation_psnr(net, val);
        history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return history;
}

}  // namespace svct::nn
