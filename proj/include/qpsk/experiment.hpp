#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "qpsk/channel.hpp"
#include "qpsk/framing.hpp"
#include "qpsk/io.hpp"
#include "qpsk/mlp.hpp"
#include "qpsk/sync.hpp"
#include "qpsk/tx.hpp"

namespace qpsk {

// Pulse shaping and front-end filtering; carrier_hz is metadata only, all
// processing stays at complex baseband.
struct ModemConfig {
    double sample_rate_hz = 2e6;
    double carrier_hz = 1.033e9;
    double rrc_excess_bw = 0.35;
    int rrc_num_taps = 89;
    double lpf_cutoff_hz = 300e3;
    double lpf_transition_hz = 100e3;
    double lpf_stopband_atten_db = 60.0;

    FirFilter rrc(int samples_per_symbol) const;
    FirFilter lpf() const;
    void validate() const;
};

struct ExperimentConfig {
    FrameConfig frame;
    ModemConfig modem;
    ChannelConfig channel;  // base impairments; per-point snr/seed overwritten in sweeps
    SnrModel snr_model;
    SyncConfig sync;
    RecoveryConfig recovery;
    MlpConfig mlp;
    TrainConfig train;
    // Sweep axis: g_r points map through SNR = 4 dB + G_R; direct snr points
    // map back to the gain axis by the same relation.
    std::vector<double> sweep_snr_db{6, 9, 12, 15, 18, 21};
    std::vector<double> sweep_g_r_db;  // non-empty overrides sweep_snr_db
    std::size_t bits_per_point = 100000;
    std::size_t train_frames = 50000;
    std::size_t test_frames = 10000;
    int retransmit_limit = 5;
    std::uint64_t seed = 1;

    void validate() const;
};

void to_json(nlohmann::json& j, const ModemConfig& v);
void from_json(const nlohmann::json& j, ModemConfig& v);
void to_json(nlohmann::json& j, const ExperimentConfig& v);
void from_json(const nlohmann::json& j, ExperimentConfig& v);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// FNV-1a over the canonical JSON dump, as a 16-hex-digit string.
std::string config_hash(const ExperimentConfig& cfg);

// Seed splitting rule: point i of root seed s uses
// splitmix64(s + (i+1) * 0x9e3779b97f4a7c15).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t point_seed(std::uint64_t root_seed, std::size_t index);

struct PipelineResult {
    TxOutput tx;
    ReceiverOutput rx;
    AlignedFrames aligned;
    int attempts = 1;
    std::uint64_t seed_used = 0;
};

// TX -> channel -> RX -> frame recovery; on alignment failure the whole
// transmission is regenerated with a fresh seed, up to retransmit_limit
// attempts, then the last failure is rethrown.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const ChannelConfig& channel,
                            std::size_t n_frames, std::uint64_t seed);

FrameDataset make_dataset(const ExperimentConfig& cfg, const ChannelConfig& channel,
                          std::size_t n_frames, std::uint64_t seed, const std::string& split);

struct BerPoint {
    double snr_db = 0.0;
    double g_r_db = 0.0;
    std::size_t bits_evaluated = 0;
    double conventional_ber = 0.0;
    double dnn_ber = 0.0;
    std::size_t frames = 0;
    int attempts = 0;
    std::uint64_t seed = 0;
    bool dropped = false;  // alignment failed after all retries
};

struct BerReport {
    std::vector<BerPoint> points;
    std::string hash;
    std::uint64_t root_seed = 0;
    std::string tool_version;
    nlohmann::json config;  // resolved config, sufficient to rerun
};

void to_json(nlohmann::json& j, const BerPoint& v);
void from_json(const nlohmann::json& j, BerPoint& v);
void to_json(nlohmann::json& j, const BerReport& v);
void from_json(const nlohmann::json& j, BerReport& v);

// Both detectors score the same aligned frames of fresh per-point test data;
// points run concurrently, output order follows the sweep grid.
BerReport run_ber_sweep(const ExperimentConfig& cfg, const MlpModel& model);

void write_report(const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path, const BerReport& report);
BerReport read_report(const std::filesystem::path& json_path);

}  // namespace qpsk
