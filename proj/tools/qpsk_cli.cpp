#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "qpsk/experiment.hpp"
#include "qpsk/io.hpp"

namespace fs = std::filesystem;
using namespace qpsk;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAlignment = 3;
constexpr int kExitIo = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool dry_run = false;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config JSON");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "root seed override")->each([&](const std::string&) {
        opts.seed_set = true;
    });
    cmd->add_flag("--dry-run", opts.dry_run, "print the resolved config and exit");
    cmd->add_flag("--verbose", opts.verbose, "chatty progress output");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg;
    if (!opts.config_path.empty()) cfg = load_config(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    cfg.validate();
    return cfg;
}

// Resolved config printed, nothing written.
bool handle_dry_run(const CommonOpts& opts, const ExperimentConfig& cfg) {
    if (!opts.dry_run) return false;
    std::cout << nlohmann::json(cfg).dump(2) << '\n';
    return true;
}

fs::path out_file(const CommonOpts& opts, const std::string& name) {
    fs::create_directories(opts.out_dir);
    return fs::path(opts.out_dir) / name;
}

void log(const CommonOpts& opts, const std::string& msg) {
    if (opts.verbose) std::cerr << msg << '\n';
}

int cmd_pipeline(const CommonOpts& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    if (handle_dry_run(opts, cfg)) return kExitOk;
    log(opts, "pipeline: " + std::to_string(cfg.test_frames) + " frames");
    PipelineResult result;
    try {
        result = run_pipeline(cfg, cfg.channel, cfg.test_frames, cfg.seed);
    } catch (const std::runtime_error& e) {
        std::cerr << "pipeline failed after " << cfg.retransmit_limit
                  << " attempts: " << e.what() << '\n';
        return kExitAlignment;
    }
    FrameDataset ds = dataset_from_frames(result.aligned, cfg.frame, cfg.channel, "test");
    write_dataset(out_file(opts, "dataset.ds"), ds);
    nlohmann::json report{{"alignment", result.aligned.alignment},
                          {"frames", result.aligned.frames.size()},
                          {"attempts", result.attempts},
                          {"seed_used", result.seed_used},
                          {"config_hash", config_hash(cfg)}};
    std::ofstream(out_file(opts, "alignment.json")) << report.dump(2) << '\n';
    log(opts, "aligned " + std::to_string(result.aligned.frames.size()) + " frames");
    return kExitOk;
}

int cmd_dataset(const CommonOpts& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    if (handle_dry_run(opts, cfg)) return kExitOk;
    try {
        // disjoint by construction: train and test are independent transmissions
        FrameDataset train_ds =
            make_dataset(cfg, cfg.channel, cfg.train_frames, splitmix64(cfg.seed + 1), "train");
        FrameDataset test_ds =
            make_dataset(cfg, cfg.channel, cfg.test_frames, splitmix64(cfg.seed + 2), "test");
        write_dataset(out_file(opts, "train.ds"), train_ds);
        write_dataset(out_file(opts, "test.ds"), test_ds);
        log(opts, "train " + std::to_string(train_ds.records.size()) + " / test " +
                      std::to_string(test_ds.records.size()) + " frames");
    } catch (const std::runtime_error& e) {
        std::cerr << "dataset generation failed: " << e.what() << '\n';
        return kExitAlignment;
    }
    return kExitOk;
}

int cmd_train(const CommonOpts& opts, const std::string& dataset_path) {
    ExperimentConfig cfg = resolve_config(opts);
    if (handle_dry_run(opts, cfg)) return kExitOk;
    FrameDataset ds = read_dataset(dataset_path);
    auto [model, history] = train(ds, cfg.mlp, cfg.train);
    write_model(out_file(opts, "model.json"), model);
    std::ofstream hist(out_file(opts, "history.csv"));
    hist << "epoch,train_loss,val_loss,train_accuracy,val_accuracy\n";
    hist.precision(17);
    for (const EpochStats& e : history.epochs) {
        hist << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.train_accuracy
             << ',' << e.val_accuracy << '\n';
    }
    log(opts, "best epoch " + std::to_string(history.best_epoch));
    return kExitOk;
}

int cmd_ber_sweep(const CommonOpts& opts, const std::string& model_path) {
    ExperimentConfig cfg = resolve_config(opts);
    if (handle_dry_run(opts, cfg)) return kExitOk;
    MlpModel model = read_model(model_path);
    BerReport report = run_ber_sweep(cfg, model);
    write_report(out_file(opts, "ber.csv"), out_file(opts, "ber.json"), report);
    for (const BerPoint& p : report.points) {
        std::printf("snr %5.1f dB  conventional %.3e  dnn %.3e%s\n", p.snr_db,
                    p.conventional_ber, p.dnn_ber, p.dropped ? "  [dropped]" : "");
    }
    return kExitOk;
}

int cmd_spectrum(const CommonOpts& opts, const std::string& input_path) {
    ExperimentConfig cfg = resolve_config(opts);
    if (handle_dry_run(opts, cfg)) return kExitOk;
    IqBuffer signal;
    if (!input_path.empty()) {
        signal = read_iq(input_path);
    } else {
        const FirFilter rrc = cfg.modem.rrc(cfg.frame.samples_per_symbol);
        signal = transmit_frames(4096, cfg.seed, cfg.frame, rrc, cfg.modem.sample_rate_hz).signal;
    }
    if (signal.size() < 4096) {
        std::cerr << "spectrum: input too short (" << signal.size() << " samples)\n";
        return kExitIo;
    }
    const SpectrumEstimate pre = estimate_spectrum(signal, 4096, 0.5);
    const SpectrumEstimate post = estimate_spectrum(filter(signal, cfg.modem.lpf()), 4096, 0.5);
    write_spectrum_csv(out_file(opts, "spectrum.csv"), pre, post);
    return kExitOk;
}

int cmd_constellation(const CommonOpts& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    if (handle_dry_run(opts, cfg)) return kExitOk;
    PipelineResult result;
    try {
        result = run_pipeline(cfg, cfg.channel, cfg.test_frames, cfg.seed);
    } catch (const std::runtime_error& e) {
        std::cerr << "constellation: pipeline failed: " << e.what() << '\n';
        return kExitAlignment;
    }
    write_constellation_csv(out_file(opts, "constellation.csv"), result.aligned, cfg.frame);
    return kExitOk;
}

int cmd_iq(const CommonOpts& opts, const std::string& input_path, const std::string& output_path,
           const std::string& out_format, double scale) {
    if (opts.dry_run) return kExitOk;
    IqBuffer buf = read_iq(input_path);
    if (output_path.empty()) {
        std::printf("%zu samples @ %.0f Hz, mean power %.2f dB\n", buf.size(),
                    buf.sample_rate_hz, mean_power_db(buf));
        return kExitOk;
    }
    write_iq(output_path, buf, iq_format_from_string(out_format), scale);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"software qpsk modem with a dnn frame detector"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string dataset_path, model_path, input_path, output_path, out_format = "cf32";
    double scale = 1.0 / 127.0;

    add_common(app.add_subcommand("pipeline", "tx -> channel -> rx -> frame recovery"), opts);
    add_common(app.add_subcommand("dataset", "emit train/test dataset files"), opts);
    auto* train_cmd = app.add_subcommand("train", "train the dnn detector");
    add_common(train_cmd, opts);
    train_cmd->add_option("--dataset", dataset_path, "training dataset file")->required();
    auto* sweep_cmd = app.add_subcommand("ber-sweep", "ber vs snr, conventional and dnn");
    add_common(sweep_cmd, opts);
    sweep_cmd->add_option("--model", model_path, "trained model file")->required();
    auto* spectrum_cmd = app.add_subcommand("spectrum", "spectrum csv, pre and post lpf");
    add_common(spectrum_cmd, opts);
    spectrum_cmd->add_option("--input", input_path, "iq capture (default: synthesized tx)");
    add_common(app.add_subcommand("constellation", "aligned symbol cloud csv"), opts);
    auto* iq_cmd = app.add_subcommand("iq", "convert or inspect iq files");
    add_common(iq_cmd, opts);
    iq_cmd->add_option("--input", input_path, "iq file with sidecar")->required();
    iq_cmd->add_option("--output", output_path, "converted output (omit to inspect)");
    iq_cmd->add_option("--format", out_format, "output format: cf32|cs8");
    iq_cmd->add_option("--scale", scale, "cs8 quantization step");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("pipeline")) return cmd_pipeline(opts);
        if (app.got_subcommand("dataset")) return cmd_dataset(opts);
        if (app.got_subcommand("train")) return cmd_train(opts, dataset_path);
        if (app.got_subcommand("ber-sweep")) return cmd_ber_sweep(opts, model_path);
        if (app.got_subcommand("spectrum")) return cmd_spectrum(opts, input_path);
        if (app.got_subcommand("constellation")) return cmd_constellation(opts);
        if (app.got_subcommand("iq")) return cmd_iq(opts, input_path, output_path, out_format, scale);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitOk;
}
