#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "svct/image.hpp"
#include "svct/nn/network.hpp"

namespace svct::nn {

struct TrainConfig {
    std::size_t epochs = 30;
    double lr_start = 1e-1;
    double lr_end = 1e-3;
    double weight_decay = 1e-4;
    std::size_t patch = 64;
    std::size_t batch = 4;
    // Random crops drawn from each training pair per epoch.
    std::size_t patches_per_image = 1;
    bool flips = true;
    // Scale labels to unit RMS over the training set.
    bool normalize_targets = true;
    std::uint64_t seed = 1;

    void validate(const NetSpec& spec) const;
    // lr_start * (lr_end / lr_start)^(k / (epochs - 1)); lr_start when epochs == 1.
    double learning_rate(std::size_t epoch) const;
};

// Inputs are sparse-view FBP images, labels follow the network mode: the
// streak residual or the reference image.
struct TrainingSet {
    std::vector<Image> inputs;
    std::vector<Image> labels;
};

// Validation PSNR compares infer(net, input) with the reference using a fixed peak.
struct ValidationSet {
    std::vector<Image> inputs;
    std::vector<Image> references;
    double peak = 1.0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_psnr = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Plain minibatch SGD. Throws DivergedError carrying the epoch index when the
// loss or the weights stop being finite.
std::vector<EpochRecord> train(Network& net, const TrainingSet& data, const ValidationSet& val,
                               const TrainConfig& cfg, const EpochCallback& on_epoch = {});

double validation_psnr(Network& net, const ValidationSet& val);

}  // namespace svct::nn
