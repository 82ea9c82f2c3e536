#include "qpsk/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <future>
#include <stdexcept>

namespace qpsk {

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "qpsk-modem 1.0.0";

std::uint64_t fnv1a_str(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

double ber_between(const std::vector<DatasetRecord>& records, bool dnn_side,
                   const BitStream& dnn_bits) {
    std::size_t errors = 0, total = 0, at = 0;
    for (const DatasetRecord& rec : records) {
        for (std::size_t b = 0; b < rec.labels.size(); ++b, ++at) {
            const std::uint8_t got = dnn_side ? dnn_bits.bits[at] : rec.conventional_bits[b];
            errors += got != rec.labels[b];
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(total);
}

BerPoint run_point(const ExperimentConfig& cfg, const MlpModel& model, double snr_db,
                   double g_r_db, std::uint64_t seed) {
    BerPoint pt;
    pt.snr_db = snr_db;
    pt.g_r_db = g_r_db;
    pt.seed = seed;

    const std::size_t bpf = cfg.frame.data_bits_per_frame();
    const std::size_t eval_frames = cfg.bits_per_point / bpf;
    const std::size_t gen_frames =
        eval_frames + static_cast<std::size_t>(cfg.recovery.truncate_window_frames) + 300;

    ChannelConfig ch = cfg.channel;
    ch.snr_db = snr_db;
    ch.seed = splitmix64(seed ^ 0x517cc1b727220a95ull);

    FrameDataset ds;
    try {
        ds = make_dataset(cfg, ch, gen_frames, seed, "test");
    } catch (const std::runtime_error&) {
        pt.dropped = true;
        pt.attempts = cfg.retransmit_limit;
        return pt;
    }
    pt.attempts = 1;
    if (ds.records.size() > eval_frames) ds.records.resize(eval_frames);
    pt.frames = ds.records.size();
    pt.bits_evaluated = pt.frames * bpf;

    const BitStream dnn_bits = detect(model, ds);
    pt.dnn_ber = ber_between(ds.records, true, dnn_bits);
    pt.conventional_ber = ber_between(ds.records, false, dnn_bits);
    return pt;
}

}  // namespace

FirFilter ModemConfig::rrc(int samples_per_symbol) const {
    return design_rrc(samples_per_symbol, rrc_excess_bw, rrc_num_taps);
}

FirFilter ModemConfig::lpf() const {
    return design_lowpass(sample_rate_hz, lpf_cutoff_hz, lpf_transition_hz,
                          lpf_stopband_atten_db);
}

void ModemConfig::validate() const {
    if (sample_rate_hz <= 0.0) throw std::invalid_argument("modem: sample_rate_hz must be > 0");
    if (rrc_num_taps < 3 || rrc_num_taps % 2 == 0) {
        throw std::invalid_argument("modem: rrc_num_taps must be odd and >= 3");
    }
    if (lpf_cutoff_hz <= 0.0 || lpf_cutoff_hz + lpf_transition_hz >= sample_rate_hz / 2.0) {
        throw std::invalid_argument("modem: lpf band must fit below Nyquist");
    }
}

void ExperimentConfig::validate() const {
    frame.validate();
    modem.validate();
    channel.validate();
    sync.validate();
    mlp.validate_against(frame);
    train.validate();
    if (bits_per_point < 10000) {
        throw std::invalid_argument("config: bits_per_point must be >= 10000");
    }
    if (retransmit_limit < 1) throw std::invalid_argument("config: retransmit_limit must be >= 1");
    if (train_frames == 0 || test_frames == 0) {
        throw std::invalid_argument("config: dataset sizes must be positive");
    }
}

void to_json(nlohmann::json& j, const ModemConfig& v) {
    j = json{{"sample_rate_hz", v.sample_rate_hz},
             {"carrier_hz", v.carrier_hz},
             {"rrc_excess_bw", v.rrc_excess_bw},
             {"rrc_num_taps", v.rrc_num_taps},
             {"lpf_cutoff_hz", v.lpf_cutoff_hz},
             {"lpf_transition_hz", v.lpf_transition_hz},
             {"lpf_stopband_atten_db", v.lpf_stopband_atten_db}};
}

void from_json(const nlohmann::json& j, ModemConfig& v) {
    v.sample_rate_hz = j.value("sample_rate_hz", v.sample_rate_hz);
    v.carrier_hz = j.value("carrier_hz", v.carrier_hz);
    v.rrc_excess_bw = j.value("rrc_excess_bw", v.rrc_excess_bw);
    v.rrc_num_taps = j.value("rrc_num_taps", v.rrc_num_taps);
    v.lpf_cutoff_hz = j.value("lpf_cutoff_hz", v.lpf_cutoff_hz);
    v.lpf_transition_hz = j.value("lpf_transition_hz", v.lpf_transition_hz);
    v.lpf_stopband_atten_db = j.value("lpf_stopband_atten_db", v.lpf_stopband_atten_db);
}

void to_json(nlohmann::json& j, const ExperimentConfig& v) {
    j = json{{"frame", v.frame},
             {"modem", v.modem},
             {"channel", v.channel},
             {"snr_model", v.snr_model},
             {"sync", v.sync},
             {"recovery", v.recovery},
             {"mlp", v.mlp},
             {"train", v.train},
             {"sweep_snr_db", v.sweep_snr_db},
             {"sweep_g_r_db", v.sweep_g_r_db},
             {"bits_per_point", v.bits_per_point},
             {"train_frames", v.train_frames},
             {"test_frames", v.test_frames},
             {"retransmit_limit", v.retransmit_limit},
             {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& v) {
    if (j.contains("frame")) j.at("frame").get_to(v.frame);
    if (j.contains("modem")) j.at("modem").get_to(v.modem);
    if (j.contains("channel")) j.at("channel").get_to(v.channel);
    if (j.contains("snr_model")) j.at("snr_model").get_to(v.snr_model);
    if (j.contains("sync")) j.at("sync").get_to(v.sync);
    if (j.contains("recovery")) j.at("recovery").get_to(v.recovery);
    if (j.contains("mlp")) j.at("mlp").get_to(v.mlp);
    if (j.contains("train")) j.at("train").get_to(v.train);
    v.sweep_snr_db = j.value("sweep_snr_db", v.sweep_snr_db);
    v.sweep_g_r_db = j.value("sweep_g_r_db", v.sweep_g_r_db);
    v.bits_per_point = j.value("bits_per_point", v.bits_per_point);
    v.train_frames = j.value("train_frames", v.train_frames);
    v.test_frames = j.value("test_frames", v.test_frames);
    v.retransmit_limit = j.value("retransmit_limit", v.retransmit_limit);
    v.seed = j.value("seed", v.seed);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path.string() + ": " + e.what());
    }
    ExperimentConfig cfg = j.get<ExperimentConfig>();
    cfg.validate();
    return cfg;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path.string());
    f << json(cfg).dump(2) << '\n';
}

std::string config_hash(const ExperimentConfig& cfg) {
    return hex16(fnv1a_str(json(cfg).dump()));
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t point_seed(std::uint64_t root_seed, std::size_t index) {
    return splitmix64(root_seed + (index + 1) * 0x9e3779b97f4a7c15ull);
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, const ChannelConfig& channel,
                            std::size_t n_frames, std::uint64_t seed) {
    const FirFilter rrc = cfg.modem.rrc(cfg.frame.samples_per_symbol);
    const FirFilter lpf = cfg.modem.lpf();

    std::uint64_t s = seed;
    for (int attempt = 1;; ++attempt) {
        PipelineResult result;
        result.seed_used = s;
        result.attempts = attempt;
        result.tx = transmit_frames(n_frames, s, cfg.frame, rrc, cfg.modem.sample_rate_hz);

        ChannelConfig ch = channel;
        if (attempt > 1) ch.seed = splitmix64(ch.seed + attempt);
        const IqBuffer rx_signal = apply_channel(result.tx.signal, ch);

        result.rx = run_receiver(rx_signal, lpf, rrc, cfg.sync, cfg.frame.samples_per_symbol);
        try {
            result.aligned = align(result.tx.data_bits, result.rx.synced, result.rx.bits,
                                   cfg.frame, cfg.recovery);
            return result;
        } catch (const std::runtime_error&) {
            if (attempt >= cfg.retransmit_limit) throw;
            s = splitmix64(s);
        }
    }
}

FrameDataset make_dataset(const ExperimentConfig& cfg, const ChannelConfig& channel,
                          std::size_t n_frames, std::uint64_t seed, const std::string& split) {
    const PipelineResult result = run_pipeline(cfg, channel, n_frames, seed);
    return dataset_from_frames(result.aligned, cfg.frame, channel, split);
}

BerReport run_ber_sweep(const ExperimentConfig& cfg, const MlpModel& model) {
    cfg.validate();
    model.config.validate_against(cfg.frame);

    // Eq. 2 with the model's fixed terms: SNR = (P_R + G_R) - N.
    const double fixed_db = cfg.snr_model.p_r_db - cfg.snr_model.n_floor_db;
    std::vector<std::pair<double, double>> grid;  // (snr_db, g_r_db)
    if (!cfg.sweep_g_r_db.empty()) {
        for (double g : cfg.sweep_g_r_db) {
            SnrModel m = cfg.snr_model;
            m.g_r_db = g;
            grid.emplace_back(snr_from_gain(m), g);
        }
    } else {
        for (double snr : cfg.sweep_snr_db) grid.emplace_back(snr, snr - fixed_db);
    }
    if (grid.empty()) throw std::invalid_argument("run_ber_sweep: empty sweep grid");

    std::vector<std::future<BerPoint>> futures;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        futures.push_back(std::async(std::launch::async, run_point, std::cref(cfg),
                                     std::cref(model), grid[i].first, grid[i].second,
                                     point_seed(cfg.seed, i)));
    }

    BerReport report;
    report.hash = config_hash(cfg);
    report.root_seed = cfg.seed;
    report.tool_version = kToolVersion;
    report.config = json(cfg);
    for (auto& f : futures) report.points.push_back(f.get());
    return report;
}

void to_json(nlohmann::json& j, const BerPoint& v) {
    j = json{{"snr_db", v.snr_db},
             {"g_r_db", v.g_r_db},
             {"bits_evaluated", v.bits_evaluated},
             {"conventional_ber", v.conventional_ber},
             {"dnn_ber", v.dnn_ber},
             {"frames", v.frames},
             {"attempts", v.attempts},
             {"seed", v.seed},
             {"dropped", v.dropped}};
}

void from_json(const nlohmann::json& j, BerPoint& v) {
    v.snr_db = j.at("snr_db").get<double>();
    v.g_r_db = j.at("g_r_db").get<double>();
    v.bits_evaluated = j.at("bits_evaluated").get<std::size_t>();
    v.conventional_ber = j.at("conventional_ber").get<double>();
    v.dnn_ber = j.at("dnn_ber").get<double>();
    v.frames = j.at("frames").get<std::size_t>();
    v.attempts = j.at("attempts").get<int>();
    v.seed = j.at("seed").get<std::uint64_t>();
    v.dropped = j.at("dropped").get<bool>();
}

void to_json(nlohmann::json& j, const BerReport& v) {
    j = json{{"points", v.points},
             {"config_hash", v.hash},
             {"root_seed", v.root_seed},
             {"tool_version", v.tool_version},
             {"config", v.config}};
}

void from_json(const nlohmann::json& j, BerReport& v) {
    v.points = j.at("points").get<std::vector<BerPoint>>();
    v.hash = j.at("config_hash").get<std::string>();
    v.root_seed = j.at("root_seed").get<std::uint64_t>();
    v.tool_version = j.at("tool_version").get<std::string>();
    v.config = j.at("config");
}

void write_report(const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path, const BerReport& report) {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open " + csv_path.string());
    csv << "snr_db,g_r_db,bits_evaluated,conventional_ber,dnn_ber,frames,attempts,seed,dropped\n";
    csv.precision(17);
    for (const BerPoint& p : report.points) {
        csv << p.snr_db << ',' << p.g_r_db << ',' << p.bits_evaluated << ','
            << p.conventional_ber << ',' << p.dnn_ber << ',' << p.frames << ','
            << p.attempts << ',' << p.seed << ',' << (p.dropped ? 1 : 0) << '\n';
    }

    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("cannot open " + json_path.string());
    js << json(report).dump(2) << '\n';
}

BerReport read_report(const std::filesystem::path& json_path) {
    std::ifstream f(json_path);
    if (!f) throw std::runtime_error("cannot open " + json_path.string());
    return json::parse(f).get<BerReport>();
}

}  // namespace qpsk
