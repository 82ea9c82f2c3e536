#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qpsk/channel.hpp"
#include "qpsk/framing.hpp"
#include "qpsk/tx.hpp"

namespace qpsk {

struct MlpConfig {
    std::vector<int> layer_sizes{8, 100, 50, 20, 6};
    std::uint64_t seed = 1;

    void validate() const;
    // layer_sizes[0] = 2*frame_len, layer_sizes[last] = 2*(frame_len-1)
    void validate_against(const FrameConfig& frame) const;
};

// Weights are row-major [out x in]; hidden activations ReLU, output Sigmoid.
struct MlpModel {
    MlpConfig config;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    std::size_t num_layers() const { return weights.size(); }
};

// One aligned frame flattened for the network: Re/Im of each synchronized
// symbol in frame order as inputs, the true data bits as labels.
struct DatasetRecord {
    std::vector<double> inputs;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> conventional_bits;
};

struct FrameDataset {
    std::vector<DatasetRecord> records;
    FrameConfig frame;
    AlignmentResult alignment;
    ChannelConfig channel;
    std::string split = "train";  // "train" | "test"
};

DatasetRecord record_from_frame(const FrameRecord& frame);
FrameDataset dataset_from_frames(const AlignedFrames& aligned, const FrameConfig& frame,
                                 const ChannelConfig& channel, const std::string& split);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 64;
    int max_epochs = 200;
    int early_stop_patience = 10;
    double validation_fraction = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
};

MlpModel init_model(const MlpConfig& cfg);

// Bit probabilities in (0,1).
std::vector<double> forward(const MlpModel& model, const std::vector<double>& inputs);

struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

// Mean binary cross-entropy over all bits in the batch, with backprop grads.
std::pair<double, Gradients> loss_and_gradients(const MlpModel& model,
                                                const std::vector<DatasetRecord>& batch);

std::pair<MlpModel, TrainHistory> train(const FrameDataset& dataset, const MlpConfig& mcfg,
                                        const TrainConfig& tcfg);

BitStream detect(const MlpModel& model, const FrameDataset& frames);
BitStream detect(const MlpModel& model, const std::vector<std::vector<double>>& frame_inputs);

double evaluate_ber(const BitStream& pred, const BitStream& truth);

}  // namespace qpsk
