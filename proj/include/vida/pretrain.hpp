#pragma once

#include <cstddef>
#include <vector>

#include "vida/nn.hpp"
#include "vida/rng.hpp"
#include "vida/stream.hpp"

namespace vida {

struct PretrainConfig {
    std::vector<std::size_t> hidden{64, 64};
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double lr = 1e-3;
};

struct PretrainResult {
    MlpModel model;
    std::vector<double> epoch_loss;
    double train_error = 0.0;
};

// Supervised source training with hard-label cross-entropy and Adam.
// Throws TrainingError if the loss stops being finite.
PretrainResult pretrain_source(MlpModel model, const LabeledBatch& data, const PretrainConfig& cfg, Rng& rng);

double evaluate_error(const MlpModel& model, const LabeledBatch& data);

}  // namespace vida
