#include "qpsk/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace qpsk {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// BCE from the logit, stable for large |z|: softplus(z) - t*z
double bce_from_logit(double z, double t) {
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - t * z;
}

// Forward pass keeping pre-activations; returns the output-layer logits.
std::vector<double> forward_cached(const MlpModel& model, const std::vector<double>& inputs,
                                   std::vector<std::vector<double>>& activations) {
    const auto& sizes = model.config.layer_sizes;
    activations.clear();
    activations.push_back(inputs);
    std::vector<double> cur = inputs;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        const int nin = sizes[l];
        const int nout = sizes[l + 1];
        std::vector<double> next(nout);
        for (int o = 0; o < nout; ++o) {
            double z = model.biases[l][o];
            const double* wrow = &model.weights[l][static_cast<std::size_t>(o) * nin];
            for (int i = 0; i < nin; ++i) z += wrow[i] * cur[i];
            next[o] = z;
        }
        if (l + 1 < model.num_layers()) {
            for (double& v : next) v = std::max(0.0, v);  // ReLU
            activations.push_back(next);
        }
        cur = std::move(next);
    }
    return cur;  // logits
}

double dataset_loss_acc(const MlpModel& model, const std::vector<DatasetRecord>& records,
                        const std::vector<std::size_t>& idx, double& accuracy) {
    std::vector<std::vector<double>> scratch;
    double loss = 0.0;
    std::size_t bits = 0;
    std::size_t correct = 0;
    for (std::size_t i : idx) {
        const auto& r = records[i];
        const std::vector<double> logits = forward_cached(model, r.inputs, scratch);
        for (std::size_t b = 0; b < logits.size(); ++b) {
            loss += bce_from_logit(logits[b], r.labels[b]);
            if ((logits[b] > 0.0 ? 1 : 0) == r.labels[b]) ++correct;
            ++bits;
        }
    }
    accuracy = bits ? static_cast<double>(correct) / bits : 0.0;
    return bits ? loss / bits : 0.0;
}

}  // namespace

void MlpConfig::validate() const {
    if (layer_sizes.size() < 3) throw std::invalid_argument("MlpConfig: need at least one hidden layer");
    for (int s : layer_sizes) {
        if (s < 1) throw std::invalid_argument("MlpConfig: layer sizes must be positive");
    }
}

void MlpConfig::validate_against(const FrameConfig& frame) const {
    validate();
    if (layer_sizes.front() != 2 * frame.frame_len_symbols) {
        throw std::invalid_argument("MlpConfig: input size must be 2*frame_len_symbols");
    }
    if (layer_sizes.back() != frame.data_bits_per_frame()) {
        throw std::invalid_argument("MlpConfig: output size must be 2*(frame_len_symbols-1)");
    }
}

void TrainConfig::validate() const {
    if (!(validation_fraction > 0.0 && validation_fraction < 0.5)) {
        throw std::invalid_argument("TrainConfig: validation_fraction must be in (0,0.5)");
    }
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1 || max_epochs < 1) throw std::invalid_argument("TrainConfig: batch_size and max_epochs must be >= 1");
}

MlpModel init_model(const MlpConfig& cfg) {
    cfg.validate();
    MlpModel model;
    model.config = cfg;
    std::mt19937_64 rng(cfg.seed);
    const auto& sizes = cfg.layer_sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int nin = sizes[l];
        const int nout = sizes[l + 1];
        std::vector<double> w(static_cast<std::size_t>(nout) * nin);
        if (l + 2 < sizes.size()) {
            // He init for the ReLU layers
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / nin));
            for (double& v : w) v = dist(rng);
        } else {
            std::uniform_real_distribution<double> dist(-0.05, 0.05);
            for (double& v : w) v = dist(rng);
        }
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(nout, 0.0);
    }
    return model;
}

std::vector<double> forward(const MlpModel& model, const std::vector<double>& inputs) {
    if (inputs.size() != static_cast<std::size_t>(model.config.layer_sizes.front())) {
        throw std::invalid_argument("forward: input length mismatch");
    }
    std::vector<std::vector<double>> scratch;
    std::vector<double> logits = forward_cached(model, inputs, scratch);
    for (double& z : logits) z = sigmoid(z);
    return logits;
}

std::pair<double, Gradients> loss_and_gradients(const MlpModel& model,
                                                const std::vector<DatasetRecord>& batch) {
    if (batch.empty()) throw std::invalid_argument("loss_and_gradients: empty batch");
    const auto& sizes = model.config.layer_sizes;
    Gradients grads;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        grads.weights.emplace_back(model.weights[l].size(), 0.0);
        grads.biases.emplace_back(model.biases[l].size(), 0.0);
    }

    const std::size_t total_bits = batch.size() * sizes.back();
    double loss = 0.0;
    std::vector<std::vector<double>> acts;
    for (const DatasetRecord& rec : batch) {
        if (rec.inputs.size() != static_cast<std::size_t>(sizes.front()) ||
            rec.labels.size() != static_cast<std::size_t>(sizes.back())) {
            throw std::invalid_argument("loss_and_gradients: record shape mismatch");
        }
        const std::vector<double> logits = forward_cached(model, rec.inputs, acts);

        // Output delta: dL/dz = (sigma(z) - t) / total_bits
        std::vector<double> delta(sizes.back());
        for (std::size_t b = 0; b < delta.size(); ++b) {
            loss += bce_from_logit(logits[b], rec.labels[b]);
            delta[b] = (sigmoid(logits[b]) - rec.labels[b]) / total_bits;
        }

        for (std::size_t l = model.num_layers(); l-- > 0;) {
            const int nin = sizes[l];
            const int nout = sizes[l + 1];
            const std::vector<double>& in_act = acts[l];
            for (int o = 0; o < nout; ++o) {
                grads.biases[l][o] += delta[o];
                double* grow = &grads.weights[l][static_cast<std::size_t>(o) * nin];
                for (int i = 0; i < nin; ++i) grow[i] += delta[o] * in_act[i];
            }
            if (l == 0) break;
            std::vector<double> prev(nin, 0.0);
            for (int o = 0; o < nout; ++o) {
                const double* wrow = &model.weights[l][static_cast<std::size_t>(o) * nin];
                for (int i = 0; i < nin; ++i) prev[i] += wrow[i] * delta[o];
            }
            // ReLU gate on the hidden activation
            for (int i = 0; i < nin; ++i) {
                if (in_act[i] <= 0.0) prev[i] = 0.0;
            }
            delta = std::move(prev);
        }
    }
    return {loss / total_bits, std::move(grads)};
}

std::pair<MlpModel, TrainHistory> train(const FrameDataset& dataset, const MlpConfig& mcfg,
                                        const TrainConfig& tcfg) {
    tcfg.validate();
    mcfg.validate();
    if (dataset.records.empty()) throw std::invalid_argument("train: empty dataset");
    if (dataset.records.size() < 1000) {
        std::cerr << "train: warning: only " << dataset.records.size()
                  << " records; >= 1000 recommended\n";
    }

    MlpModel model = init_model(mcfg);
    std::mt19937_64 rng(tcfg.seed);

    std::vector<std::size_t> idx(dataset.records.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_val =
        std::max<std::size_t>(1, static_cast<std::size_t>(idx.size() * tcfg.validation_fraction));
    std::vector<std::size_t> val_idx(idx.end() - n_val, idx.end());
    std::vector<std::size_t> train_idx(idx.begin(), idx.end() - n_val);
    if (train_idx.empty()) throw std::invalid_argument("train: no training records after split");

    // Adam state
    Gradients m, v;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        m.weights.emplace_back(model.weights[l].size(), 0.0);
        m.biases.emplace_back(model.biases[l].size(), 0.0);
        v.weights.emplace_back(model.weights[l].size(), 0.0);
        v.biases.emplace_back(model.biases[l].size(), 0.0);
    }
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;

    TrainHistory history;
    MlpModel best_model = model;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    int since_best = 0;

    std::vector<DatasetRecord> batch;
    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(tcfg.batch_size)) {
            const std::size_t end =
                std::min(train_idx.size(), start + static_cast<std::size_t>(tcfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(dataset.records[train_idx[i]]);

            auto [loss, grads] = loss_and_gradients(model, batch);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + " batch " +
                                         std::to_string(start / tcfg.batch_size));
            }
            ++step;
            const double corr = tcfg.learning_rate *
                                std::sqrt(1.0 - std::pow(beta2, step)) /
                                (1.0 - std::pow(beta1, step));
            for (std::size_t l = 0; l < model.num_layers(); ++l) {
                for (std::size_t i = 0; i < model.weights[l].size(); ++i) {
                    m.weights[l][i] = beta1 * m.weights[l][i] + (1 - beta1) * grads.weights[l][i];
                    v.weights[l][i] = beta2 * v.weights[l][i] +
                                      (1 - beta2) * grads.weights[l][i] * grads.weights[l][i];
                    model.weights[l][i] -= corr * m.weights[l][i] / (std::sqrt(v.weights[l][i]) + eps);
                }
                for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
                    m.biases[l][i] = beta1 * m.biases[l][i] + (1 - beta1) * grads.biases[l][i];
                    v.biases[l][i] = beta2 * v.biases[l][i] +
                                     (1 - beta2) * grads.biases[l][i] * grads.biases[l][i];
                    model.biases[l][i] -= corr * m.biases[l][i] / (std::sqrt(v.biases[l][i]) + eps);
                }
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = dataset_loss_acc(model, dataset.records, train_idx, stats.train_accuracy);
        stats.val_loss = dataset_loss_acc(model, dataset.records, val_idx, stats.val_accuracy);
        history.epochs.push_back(stats);

        if (stats.val_loss < best_val) {
            best_val = stats.val_loss;
            best_model = model;
            best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= tcfg.early_stop_patience) {
            break;
        }
    }
    history.best_epoch = best_epoch;
    return {std::move(best_model), std::move(history)};
}

DatasetRecord record_from_frame(const FrameRecord& frame) {
    DatasetRecord rec;
    rec.inputs.reserve(frame.symbols.size() * 2);
    for (const cplx& s : frame.symbols) {
        rec.inputs.push_back(s.real());
        rec.inputs.push_back(s.imag());
    }
    rec.labels = frame.label_bits;
    rec.conventional_bits = frame.conv_bits;
    return rec;
}

FrameDataset dataset_from_frames(const AlignedFrames& aligned, const FrameConfig& frame,
                                 const ChannelConfig& channel, const std::string& split) {
    FrameDataset ds;
    ds.frame = frame;
    ds.alignment = aligned.alignment;
    ds.channel = channel;
    ds.split = split;
    ds.records.reserve(aligned.frames.size());
    for (const FrameRecord& f : aligned.frames) ds.records.push_back(record_from_frame(f));
    return ds;
}

BitStream detect(const MlpModel& model, const FrameDataset& frames) {
    std::vector<std::vector<double>> inputs;
    inputs.reserve(frames.records.size());
    for (const auto& r : frames.records) inputs.push_back(r.inputs);
    return detect(model, inputs);
}

BitStream detect(const MlpModel& model, const std::vector<std::vector<double>>& frame_inputs) {
    BitStream out;
    out.bits.reserve(frame_inputs.size() * model.config.layer_sizes.back());
    for (const auto& in : frame_inputs) {
        const std::vector<double> probs = forward(model, in);
        for (double p : probs) out.bits.push_back(p > 0.5 ? 1 : 0);
    }
    return out;
}

double evaluate_ber(const BitStream& pred, const BitStream& truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("evaluate_ber: length mismatch");
    if (pred.size() == 0) throw std::invalid_argument("evaluate_ber: empty streams");
    std::size_t errors = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred.bits[i] != truth.bits[i]) ++errors;
    }
    return static_cast<double>(errors) / pred.size();
}

}  // namespace qpsk
