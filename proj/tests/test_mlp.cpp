#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "qpsk/mlp.hpp"
#include "qpsk/tx.hpp"

using namespace qpsk;

namespace {

// Independent straight-line reference of the forward pass.
std::vector<double> forward_reference(const MlpModel& model, const std::vector<double>& in) {
    std::vector<double> cur = in;
    const auto& sizes = model.config.layer_sizes;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        std::vector<double> next(sizes[l + 1], 0.0);
        for (int o = 0; o < sizes[l + 1]; ++o) {
            double z = model.biases[l][o];
            for (int i = 0; i < sizes[l]; ++i) {
                z += model.weights[l][static_cast<std::size_t>(o) * sizes[l] + i] * cur[i];
            }
            if (l + 1 < model.num_layers()) {
                next[o] = z > 0.0 ? z : 0.0;
            } else {
                next[o] = 1.0 / (1.0 + std::exp(-z));
            }
        }
        cur = std::move(next);
    }
    return cur;
}

// Clean dataset straight from the TX definition: perfect symbols, true labels.
FrameDataset clean_dataset(std::size_t n_frames, std::uint64_t seed) {
    FrameConfig frame;
    BitStream bits = generate_bits(n_frames * frame.data_bits_per_frame(), seed);
    SymbolStream framed = insert_pilots(map_qpsk(bits), frame);
    FrameDataset ds;
    ds.frame = frame;
    const int L = frame.frame_len_symbols;
    for (std::size_t f = 0; f < n_frames; ++f) {
        DatasetRecord rec;
        for (int s = 0; s < L; ++s) {
            rec.inputs.push_back(framed.symbols[f * L + s].real());
            rec.inputs.push_back(framed.symbols[f * L + s].imag());
        }
        const std::size_t bpf = frame.data_bits_per_frame();
        rec.labels.assign(bits.bits.begin() + f * bpf, bits.bits.begin() + (f + 1) * bpf);
        rec.conventional_bits = rec.labels;
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("init_model produces the default shapes deterministically") {
    MlpConfig cfg;
    MlpModel a = init_model(cfg);
    REQUIRE(a.num_layers() == 4);
    CHECK(a.weights[0].size() == 100 * 8);
    CHECK(a.weights[1].size() == 50 * 100);
    CHECK(a.weights[2].size() == 20 * 50);
    CHECK(a.weights[3].size() == 6 * 20);
    CHECK(a.biases[0].size() == 100);
    CHECK(a.biases[3].size() == 6);
    for (const auto& b : a.biases) {
        for (double v : b) CHECK(v == 0.0);
    }

    MlpModel b = init_model(cfg);
    CHECK(a.weights == b.weights);
    cfg.seed = 2;
    CHECK(init_model(cfg).weights != a.weights);
}

TEST_CASE("init_model uses He-scaled hidden weights") {
    MlpConfig cfg;
    cfg.layer_sizes = {64, 128, 96, 6};
    MlpModel m = init_model(cfg);
    for (std::size_t l = 0; l + 1 < m.num_layers(); ++l) {
        const int fan_in = cfg.layer_sizes[l];
        double var = 0.0;
        for (double w : m.weights[l]) var += w * w;
        var /= m.weights[l].size();
        const double expected = 2.0 / fan_in;
        CHECK(var > 0.7 * expected);
        CHECK(var < 1.3 * expected);
    }
}

TEST_CASE("config validation against the frame geometry") {
    FrameConfig frame;
    MlpConfig good;
    CHECK_NOTHROW(good.validate_against(frame));
    MlpConfig bad_in;
    bad_in.layer_sizes = {10, 16, 6};
    CHECK_THROWS_AS(bad_in.validate_against(frame), std::invalid_argument);
    MlpConfig bad_out;
    bad_out.layer_sizes = {8, 16, 8};
    CHECK_THROWS_AS(bad_out.validate_against(frame), std::invalid_argument);
    MlpConfig no_hidden;
    no_hidden.layer_sizes = {8, 6};
    CHECK_THROWS_AS(no_hidden.validate(), std::invalid_argument);
}

TEST_CASE("forward of the zero model is exactly one half") {
    MlpConfig cfg;
    cfg.layer_sizes = {8, 10, 6};
    MlpModel m = init_model(cfg);
    for (auto& w : m.weights) std::fill(w.begin(), w.end(), 0.0);
    std::vector<double> out = forward(m, std::vector<double>(8, 0.37));
    REQUIRE(out.size() == 6);
    for (double p : out) CHECK(p == doctest::Approx(0.5));
}

TEST_CASE("forward is monotone along a positive path") {
    MlpConfig cfg;
    cfg.layer_sizes = {2, 2, 1};
    MlpModel m = init_model(cfg);
    std::fill(m.weights[0].begin(), m.weights[0].end(), 0.0);
    std::fill(m.weights[1].begin(), m.weights[1].end(), 0.0);
    m.weights[0][0] = 1.0;  // unit path input 0 -> hidden 0 -> output
    m.weights[1][0] = 1.0;
    double prev = 0.0;
    for (double x : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const double p = forward(m, {x, -1.0})[0];
        CHECK(p >= prev);
        prev = p;
    }
    CHECK(prev > 0.9);
}

TEST_CASE("forward matches an independent reference") {
    MlpConfig cfg;
    cfg.layer_sizes = {8, 100, 50, 20, 6};
    cfg.seed = 5;
    MlpModel m = init_model(cfg);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> in(8);
        for (double& x : in) x = u(rng);
        const std::vector<double> got = forward(m, in);
        const std::vector<double> ref = forward_reference(m, in);
        REQUIRE(got.size() == ref.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::abs(got[i] - ref[i]) < 1e-9);
            CHECK(got[i] > 0.0);
            CHECK(got[i] < 1.0);
        }
    }
    CHECK_THROWS_AS(forward(m, std::vector<double>(7, 0.0)), std::invalid_argument);
}

TEST_CASE("zero model loss is ln 2 per bit") {
    MlpConfig cfg;
    cfg.layer_sizes = {8, 10, 6};
    MlpModel m = init_model(cfg);
    for (auto& w : m.weights) std::fill(w.begin(), w.end(), 0.0);
    FrameDataset ds = clean_dataset(16, 3);
    auto [loss, grads] = loss_and_gradients(m, ds.records);
    CHECK(std::abs(loss - std::numbers::ln2) < 1e-6);
}

TEST_CASE("confident correct outputs give near-zero loss") {
    MlpModel m;
    m.config.layer_sizes = {2, 2, 2};
    m.weights = {std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)};
    m.biases = {std::vector<double>(2, 0.0), {40.0, -40.0}};
    DatasetRecord rec;
    rec.inputs = {0.0, 0.0};
    rec.labels = {1, 0};
    auto [loss, grads] = loss_and_gradients(m, {rec});
    CHECK(loss <= 1e-6);
}

TEST_CASE("backprop matches central finite differences") {
    MlpConfig cfg;
    cfg.layer_sizes = {8, 10, 6};
    cfg.seed = 11;
    MlpModel m = init_model(cfg);
    FrameDataset ds = clean_dataset(4, 13);

    auto [loss, grads] = loss_and_gradients(m, ds.records);
    const double eps = 1e-5;
    auto check_param = [&](double& param, double grad) {
        const double saved = param;
        param = saved + eps;
        const double lp = loss_and_gradients(m, ds.records).first;
        param = saved - eps;
        const double lm = loss_and_gradients(m, ds.records).first;
        param = saved;
        const double fd = (lp - lm) / (2.0 * eps);
        const double rel = std::abs(grad - fd) / std::max(1e-4, std::abs(grad) + std::abs(fd));
        CHECK(rel < 1e-4);
    };
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        for (std::size_t i = 0; i < m.weights[l].size(); ++i) {
            check_param(m.weights[l][i], grads.weights[l][i]);
        }
        for (std::size_t i = 0; i < m.biases[l].size(); ++i) {
            check_param(m.biases[l][i], grads.biases[l][i]);
        }
    }
}

TEST_CASE("training separates the noiseless clusters") {
    FrameDataset ds = clean_dataset(5000, 17);
    MlpConfig mcfg;
    TrainConfig tcfg;
    tcfg.max_epochs = 50;
    auto [model, history] = train(ds, mcfg, tcfg);
    REQUIRE(!history.epochs.empty());
    double best_acc = 0.0;
    for (const EpochStats& e : history.epochs) best_acc = std::max(best_acc, e.val_accuracy);
    CHECK(best_acc >= 0.999);

    BitStream pred = detect(model, ds);
    BitStream truth;
    for (const auto& r : ds.records) {
        truth.bits.insert(truth.bits.end(), r.labels.begin(), r.labels.end());
    }
    CHECK(evaluate_ber(pred, truth) <= 1e-3);
}

TEST_CASE("shuffled labels cannot be learned") {
    FrameDataset ds = clean_dataset(4000, 19);
    std::mt19937_64 rng(23);
    std::vector<std::vector<std::uint8_t>> labels;
    for (const auto& r : ds.records) labels.push_back(r.labels);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < ds.records.size(); ++i) ds.records[i].labels = labels[i];

    MlpConfig mcfg;
    TrainConfig tcfg;
    tcfg.max_epochs = 20;
    auto [model, history] = train(ds, mcfg, tcfg);
    CHECK(std::abs(history.epochs[history.best_epoch].val_accuracy - 0.5) < 0.05);
}

TEST_CASE("training is deterministic") {
    FrameDataset ds = clean_dataset(1500, 29);
    MlpConfig mcfg;
    TrainConfig tcfg;
    tcfg.max_epochs = 3;
    auto [a, ha] = train(ds, mcfg, tcfg);
    auto [b, hb] = train(ds, mcfg, tcfg);
    CHECK(a.weights == b.weights);
    CHECK(a.biases == b.biases);
    REQUIRE(ha.epochs.size() == hb.epochs.size());
    for (std::size_t i = 0; i < ha.epochs.size(); ++i) {
        CHECK(ha.epochs[i].val_loss == hb.epochs[i].val_loss);
    }
}

TEST_CASE("train rejects bad input") {
    FrameDataset empty;
    CHECK_THROWS_AS(train(empty, MlpConfig{}, TrainConfig{}), std::invalid_argument);
    TrainConfig bad;
    bad.validation_fraction = 0.7;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("detect thresholds probabilities at one half") {
    MlpModel m;
    m.config.layer_sizes = {6, 6};
    m.weights = {std::vector<double>(36, 0.0)};
    m.biases = {{logit(0.9), logit(0.2), logit(0.7), logit(0.49), logit(0.51), logit(0.999)}};
    BitStream bits = detect(m, std::vector<std::vector<double>>{std::vector<double>(6, 0.0)});
    CHECK(bits.bits == std::vector<std::uint8_t>{1, 0, 1, 0, 1, 1});

    BitStream again = detect(m, std::vector<std::vector<double>>{std::vector<double>(6, 0.0)});
    CHECK(bits == again);
}

TEST_CASE("record_from_frame flattens re/im in frame order") {
    FrameRecord f;
    f.symbols = {cplx{0.1, 0.2}, cplx{-0.3, 0.4}};
    f.label_bits = {1, 0};
    f.conv_bits = {1, 1};
    DatasetRecord rec = record_from_frame(f);
    CHECK(rec.inputs == std::vector<double>{0.1, 0.2, -0.3, 0.4});
    CHECK(rec.labels == std::vector<std::uint8_t>{1, 0});
    CHECK(rec.conventional_bits == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("evaluate_ber arithmetic") {
    BitStream a = generate_bits(100000, 31);
    CHECK(evaluate_ber(a, a) == 0.0);

    BitStream flipped = a;
    for (auto& b : flipped.bits) b ^= 1;
    CHECK(evaluate_ber(a, flipped) == 1.0);

    BitStream few = a;
    for (int i = 0; i < 37; ++i) few.bits[i * 2001] ^= 1;
    CHECK(evaluate_ber(a, few) == doctest::Approx(3.7e-4));

    BitStream shorter = generate_bits(99, 1);
    CHECK_THROWS_AS(evaluate_ber(a, shorter), std::invalid_argument);
}
