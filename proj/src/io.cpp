#include "qpsk/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace qpsk {

namespace {

using nlohmann::json;

constexpr char kDatasetMagic[8] = {'Q', 'P', 'S', 'K', 'D', 'S', 'v', '1'};

std::vector<char> read_all(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_all(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

void put_f32(std::string& out, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

double get_f32(const char* p) {
    const std::uint32_t bits = get_u32(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t model_checksum(const MlpModel& model) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int s : model.config.layer_sizes) h = fnv1a(h, &s, sizeof(s));
    auto mix = [&](const std::vector<std::vector<double>>& layers) {
        for (const auto& layer : layers) {
            for (double v : layer) {
                const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
                h = fnv1a(h, &bits, sizeof(bits));
            }
        }
    };
    mix(model.weights);
    mix(model.biases);
    return h;
}

json snr_to_json(double snr_db) {
    if (std::isinf(snr_db)) return "inf";
    return snr_db;
}

double snr_from_json(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw std::runtime_error("bad snr_db value: " + j.dump());
    }
    return j.get<double>();
}

}  // namespace

IqFormat iq_format_from_string(const std::string& tag) {
    if (tag == "cf32") return IqFormat::cf32;
    if (tag == "cs8") return IqFormat::cs8;
    throw std::invalid_argument("unknown iq format: " + tag);
}

std::string to_string(IqFormat fmt) {
    return fmt == IqFormat::cf32 ? "cf32" : "cs8";
}

void write_iq(const std::filesystem::path& path, const IqBuffer& signal, IqFormat fmt,
              double scale) {
    std::string out;
    if (fmt == IqFormat::cf32) {
        out.reserve(signal.size() * 8);
        for (cplx s : signal.samples) {
            put_f32(out, s.real());
            put_f32(out, s.imag());
        }
    } else {
        if (!(scale > 0.0)) throw std::invalid_argument("write_iq: scale must be positive");
        out.reserve(signal.size() * 2);
        auto quantize = [&](double v) {
            const double q = std::round(v / scale);
            return static_cast<char>(std::clamp(q, -128.0, 127.0));
        };
        for (cplx s : signal.samples) {
            out.push_back(quantize(s.real()));
            out.push_back(quantize(s.imag()));
        }
    }
    write_all(path, out);

    json sidecar{{"format", to_string(fmt)},
                 {"sample_rate_hz", signal.sample_rate_hz},
                 {"scale", scale}};
    write_all(path.string() + ".json", sidecar.dump(2) + "\n");
}

IqBuffer read_iq(const std::filesystem::path& path, IqFormat fmt, double sample_rate_hz,
                 double scale) {
    const std::vector<char> bytes = read_all(path);
    IqBuffer out;
    out.sample_rate_hz = sample_rate_hz;
    if (fmt == IqFormat::cf32) {
        if (bytes.size() % 8 != 0) {
            throw std::runtime_error("read_iq: truncated cf32 file " + path.string());
        }
        out.samples.reserve(bytes.size() / 8);
        for (std::size_t i = 0; i < bytes.size(); i += 8) {
            out.samples.emplace_back(get_f32(bytes.data() + i), get_f32(bytes.data() + i + 4));
        }
    } else {
        if (bytes.size() % 2 != 0) {
            throw std::runtime_error("read_iq: truncated cs8 file " + path.string());
        }
        out.samples.reserve(bytes.size() / 2);
        for (std::size_t i = 0; i < bytes.size(); i += 2) {
            const auto re = static_cast<double>(static_cast<signed char>(bytes[i]));
            const auto im = static_cast<double>(static_cast<signed char>(bytes[i + 1]));
            out.samples.emplace_back(re * scale, im * scale);
        }
    }
    return out;
}

IqBuffer read_iq(const std::filesystem::path& path) {
    const json sidecar = json::parse(read_all(path.string() + ".json"));
    const IqFormat fmt = iq_format_from_string(sidecar.at("format").get<std::string>());
    return read_iq(path, fmt, sidecar.at("sample_rate_hz").get<double>(),
                   sidecar.value("scale", 1.0 / 127.0));
}

void write_dataset(const std::filesystem::path& path, const FrameDataset& dataset) {
    const std::size_t inputs_per_record =
        dataset.records.empty() ? 2u * dataset.frame.frame_len_symbols : dataset.records[0].inputs.size();
    const std::size_t bits_per_record =
        dataset.records.empty() ? dataset.frame.data_bits_per_frame() : dataset.records[0].labels.size();
    if (bits_per_record > 8) {
        throw std::invalid_argument("write_dataset: more than 8 bits per record");
    }
    json header{{"frame", dataset.frame},
                {"alignment", dataset.alignment},
                {"channel", dataset.channel},
                {"split", dataset.split},
                {"record_count", dataset.records.size()},
                {"inputs_per_record", inputs_per_record},
                {"bits_per_record", bits_per_record}};
    const std::string hdr = header.dump();

    std::string out;
    out.append(kDatasetMagic, sizeof(kDatasetMagic));
    put_u32(out, static_cast<std::uint32_t>(hdr.size()));
    out += hdr;
    auto pack = [](const std::vector<std::uint8_t>& bits) {
        unsigned byte = 0;
        for (std::size_t i = 0; i < bits.size(); ++i) byte |= (bits[i] & 1u) << i;
        return static_cast<char>(byte);
    };
    for (const DatasetRecord& rec : dataset.records) {
        if (rec.inputs.size() != inputs_per_record || rec.labels.size() != bits_per_record ||
            rec.conventional_bits.size() != bits_per_record) {
            throw std::invalid_argument("write_dataset: inconsistent record shapes");
        }
        for (double v : rec.inputs) put_f32(out, v);
        out.push_back(pack(rec.labels));
        out.push_back(pack(rec.conventional_bits));
    }
    write_all(path, out);
}

FrameDataset read_dataset(const std::filesystem::path& path) {
    const std::vector<char> bytes = read_all(path);
    if (bytes.size() < sizeof(kDatasetMagic) + 4 ||
        std::memcmp(bytes.data(), kDatasetMagic, sizeof(kDatasetMagic)) != 0) {
        throw std::runtime_error("read_dataset: bad magic in " + path.string());
    }
    const std::uint32_t hdr_len = get_u32(bytes.data() + sizeof(kDatasetMagic));
    std::size_t pos = sizeof(kDatasetMagic) + 4;
    if (bytes.size() < pos + hdr_len) {
        throw std::runtime_error("read_dataset: truncated header in " + path.string());
    }
    const json header = json::parse(bytes.begin() + pos, bytes.begin() + pos + hdr_len);
    pos += hdr_len;

    FrameDataset ds;
    ds.frame = header.at("frame").get<FrameConfig>();
    ds.alignment = header.at("alignment").get<AlignmentResult>();
    ds.channel = header.at("channel").get<ChannelConfig>();
    ds.split = header.at("split").get<std::string>();
    const auto count = header.at("record_count").get<std::size_t>();
    const auto n_in = header.at("inputs_per_record").get<std::size_t>();
    const auto n_bits = header.at("bits_per_record").get<std::size_t>();

    const std::size_t record_bytes = n_in * 4 + 2;
    if (bytes.size() != pos + count * record_bytes) {
        throw std::runtime_error("read_dataset: truncated records in " + path.string());
    }
    auto unpack = [n_bits](char byte) {
        std::vector<std::uint8_t> bits(n_bits);
        for (std::size_t i = 0; i < n_bits; ++i) {
            bits[i] = (static_cast<unsigned char>(byte) >> i) & 1u;
        }
        return bits;
    };
    ds.records.reserve(count);
    for (std::size_t r = 0; r < count; ++r) {
        DatasetRecord rec;
        rec.inputs.reserve(n_in);
        for (std::size_t i = 0; i < n_in; ++i) {
            rec.inputs.push_back(get_f32(bytes.data() + pos + i * 4));
        }
        rec.labels = unpack(bytes[pos + n_in * 4]);
        rec.conventional_bits = unpack(bytes[pos + n_in * 4 + 1]);
        pos += record_bytes;
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

void write_model(const std::filesystem::path& path, const MlpModel& model) {
    char checksum[17];
    std::snprintf(checksum, sizeof(checksum), "%016llx",
                  static_cast<unsigned long long>(model_checksum(model)));
    json j{{"format", "qpsk-mlp"},
           {"version", 1},
           {"layer_sizes", model.config.layer_sizes},
           {"seed", model.config.seed},
           {"weights", model.weights},
           {"biases", model.biases},
           {"checksum", checksum}};
    write_all(path, j.dump() + "\n");
}

MlpModel read_model(const std::filesystem::path& path) {
    const json j = json::parse(read_all(path));
    if (j.value("format", "") != "qpsk-mlp") {
        throw std::runtime_error("read_model: not a model file: " + path.string());
    }
    MlpModel model;
    model.config.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    model.config.seed = j.at("seed").get<std::uint64_t>();
    model.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    model.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    model.config.validate();
    if (model.weights.size() + 1 != model.config.layer_sizes.size() ||
        model.biases.size() != model.weights.size()) {
        throw std::runtime_error("read_model: shape mismatch in " + path.string());
    }
    char checksum[17];
    std::snprintf(checksum, sizeof(checksum), "%016llx",
                  static_cast<unsigned long long>(model_checksum(model)));
    if (j.at("checksum").get<std::string>() != checksum) {
        throw std::runtime_error("read_model: checksum mismatch in " + path.string());
    }
    return model;
}

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumEstimate& spectrum) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    f << "freq_hz,power_db\n";
    for (std::size_t i = 0; i < spectrum.freqs_hz.size(); ++i) {
        f << spectrum.freqs_hz[i] << ',' << spectrum.power_db[i] << '\n';
    }
}

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumEstimate& pre,
                        const SpectrumEstimate& post) {
    if (pre.freqs_hz.size() != post.freqs_hz.size()) {
        throw std::invalid_argument("write_spectrum_csv: grids differ");
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    f << "freq_hz,pre_db,post_db\n";
    for (std::size_t i = 0; i < pre.freqs_hz.size(); ++i) {
        f << pre.freqs_hz[i] << ',' << pre.power_db[i] << ',' << post.power_db[i] << '\n';
    }
}

void write_constellation_csv(const std::filesystem::path& path, const AlignedFrames& aligned,
                             const FrameConfig& frame) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    f << "i,q,slot_type\n";
    for (const FrameRecord& rec : aligned.frames) {
        for (std::size_t s = 0; s < rec.symbols.size(); ++s) {
            const bool pilot = static_cast<int>(s) == frame.pilot_position;
            f << rec.symbols[s].real() << ',' << rec.symbols[s].imag() << ','
              << (pilot ? "pilot" : "data") << '\n';
        }
    }
}

void to_json(nlohmann::json& j, const FrameConfig& v) {
    j = json{{"frame_len_symbols", v.frame_len_symbols},
             {"pilot_symbol_index", v.pilot_symbol_index},
             {"pilot_position", v.pilot_position},
             {"samples_per_symbol", v.samples_per_symbol}};
}

void from_json(const nlohmann::json& j, FrameConfig& v) {
    v.frame_len_symbols = j.value("frame_len_symbols", v.frame_len_symbols);
    v.pilot_symbol_index = j.value("pilot_symbol_index", v.pilot_symbol_index);
    v.pilot_position = j.value("pilot_position", v.pilot_position);
    v.samples_per_symbol = j.value("samples_per_symbol", v.samples_per_symbol);
}

void to_json(nlohmann::json& j, const ChannelConfig& v) {
    j = json{{"snr_db", snr_to_json(v.snr_db)},
             {"cfo_hz", v.cfo_hz},
             {"phase_rad", v.phase_rad},
             {"timing_offset_samples", v.timing_offset_samples},
             {"delay_samples", v.delay_samples},
             {"lockin_prefix_samples", v.lockin_prefix_samples},
             {"seed", v.seed},
             {"max_delay_samples", v.max_delay_samples}};
}

void from_json(const nlohmann::json& j, ChannelConfig& v) {
    if (j.contains("snr_db")) v.snr_db = snr_from_json(j.at("snr_db"));
    v.cfo_hz = j.value("cfo_hz", v.cfo_hz);
    v.phase_rad = j.value("phase_rad", v.phase_rad);
    v.timing_offset_samples = j.value("timing_offset_samples", v.timing_offset_samples);
    v.delay_samples = j.value("delay_samples", v.delay_samples);
    v.lockin_prefix_samples = j.value("lockin_prefix_samples", v.lockin_prefix_samples);
    v.seed = j.value("seed", v.seed);
    v.max_delay_samples = j.value("max_delay_samples", v.max_delay_samples);
}

void to_json(nlohmann::json& j, const SnrModel& v) {
    j = json{{"p_r_db", v.p_r_db}, {"g_r_db", v.g_r_db}, {"n_floor_db", v.n_floor_db}};
}

void from_json(const nlohmann::json& j, SnrModel& v) {
    v.p_r_db = j.value("p_r_db", v.p_r_db);
    v.g_r_db = j.value("g_r_db", v.g_r_db);
    v.n_floor_db = j.value("n_floor_db", v.n_floor_db);
}

void to_json(nlohmann::json& j, const SyncConfig& v) {
    j = json{{"pfb_num_branches", v.pfb_num_branches},
             {"pfb_loop_bw", v.pfb_loop_bw},
             {"cma_num_taps", v.cma_num_taps},
             {"cma_step", v.cma_step},
             {"cma_modulus", v.cma_modulus},
             {"costas_loop_bw", v.costas_loop_bw},
             {"costas_order", v.costas_order}};
}

void from_json(const nlohmann::json& j, SyncConfig& v) {
    v.pfb_num_branches = j.value("pfb_num_branches", v.pfb_num_branches);
    v.pfb_loop_bw = j.value("pfb_loop_bw", v.pfb_loop_bw);
    v.cma_num_taps = j.value("cma_num_taps", v.cma_num_taps);
    v.cma_step = j.value("cma_step", v.cma_step);
    v.cma_modulus = j.value("cma_modulus", v.cma_modulus);
    v.costas_loop_bw = j.value("costas_loop_bw", v.costas_loop_bw);
    v.costas_order = j.value("costas_order", v.costas_order);
}

void to_json(nlohmann::json& j, const RecoveryConfig& v) {
    j = json{{"pilot_match_threshold", v.pilot_match_threshold},
             {"delay_match_threshold", v.delay_match_threshold},
             {"truncate_window_frames", v.truncate_window_frames},
             {"max_delay_bits", v.max_delay_bits},
             {"delay_window_bits", v.delay_window_bits},
             {"fast_delay_scan", v.fast_delay_scan}};
}

void from_json(const nlohmann::json& j, RecoveryConfig& v) {
    v.pilot_match_threshold = j.value("pilot_match_threshold", v.pilot_match_threshold);
    v.delay_match_threshold = j.value("delay_match_threshold", v.delay_match_threshold);
    v.truncate_window_frames = j.value("truncate_window_frames", v.truncate_window_frames);
    v.max_delay_bits = j.value("max_delay_bits", v.max_delay_bits);
    v.delay_window_bits = j.value("delay_window_bits", v.delay_window_bits);
    v.fast_delay_scan = j.value("fast_delay_scan", v.fast_delay_scan);
}

void to_json(nlohmann::json& j, const MlpConfig& v) {
    j = json{{"layer_sizes", v.layer_sizes}, {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, MlpConfig& v) {
    v.layer_sizes = j.value("layer_sizes", v.layer_sizes);
    v.seed = j.value("seed", v.seed);
}

void to_json(nlohmann::json& j, const TrainConfig& v) {
    j = json{{"learning_rate", v.learning_rate},
             {"batch_size", v.batch_size},
             {"max_epochs", v.max_epochs},
             {"early_stop_patience", v.early_stop_patience},
             {"validation_fraction", v.validation_fraction},
             {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& v) {
    v.learning_rate = j.value("learning_rate", v.learning_rate);
    v.batch_size = j.value("batch_size", v.batch_size);
    v.max_epochs = j.value("max_epochs", v.max_epochs);
    v.early_stop_patience = j.value("early_stop_patience", v.early_stop_patience);
    v.validation_fraction = j.value("validation_fraction", v.validation_fraction);
    v.seed = j.value("seed", v.seed);
}

void to_json(nlohmann::json& j, const AlignmentResult& v) {
    j = json{{"delay_bits", v.delay_bits},
             {"rotation_k", v.rotation_k},
             {"truncated_bits", v.truncated_bits},
             {"match_fraction", v.match_fraction},
             {"pilot_positions", v.pilot_positions}};
}

void from_json(const nlohmann::json& j, AlignmentResult& v) {
    v.delay_bits = j.value("delay_bits", v.delay_bits);
    v.rotation_k = j.value("rotation_k", v.rotation_k);
    v.truncated_bits = j.value("truncated_bits", v.truncated_bits);
    v.match_fraction = j.value("match_fraction", v.match_fraction);
    v.pilot_positions = j.value("pilot_positions", v.pilot_positions);
}

}  // namespace qpsk
