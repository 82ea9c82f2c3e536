#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "qpsk/channel.hpp"
#include "qpsk/dsp.hpp"
#include "qpsk/framing.hpp"
#include "qpsk/mlp.hpp"
#include "qpsk/sync.hpp"
#include "qpsk/tx.hpp"

namespace qpsk {

// Interleaved I/Q sample files, the common SDR capture layouts.
enum class IqFormat {
    cf32,  // little-endian float32 pairs
    cs8,   // int8 pairs, value = raw * scale
};

IqFormat iq_format_from_string(const std::string& tag);
std::string to_string(IqFormat fmt);

// Writes the samples plus a "<path>.json" sidecar holding format, sample
// rate, and scale so read_iq(path) can reconstruct the buffer on its own.
void write_iq(const std::filesystem::path& path, const IqBuffer& signal, IqFormat fmt,
              double scale = 1.0 / 127.0);
IqBuffer read_iq(const std::filesystem::path& path, IqFormat fmt, double sample_rate_hz,
                 double scale = 1.0 / 127.0);
IqBuffer read_iq(const std::filesystem::path& path);  // parameters from the sidecar

// Dataset container, byte-exact layout (all integers little-endian):
//   bytes 0..7   magic "QPSKDSv1"
//   u32          header JSON length H
//   H bytes      JSON: frame, alignment, channel, split, record_count,
//                inputs_per_record, bits_per_record
//   records      inputs_per_record x float32, then one byte of packed label
//                bits and one byte of packed conventional bits (LSB = first
//                bit of the frame)
void write_dataset(const std::filesystem::path& path, const FrameDataset& dataset);
FrameDataset read_dataset(const std::filesystem::path& path);

// Model as JSON with layer sizes, seed, row-major weights, and an FNV-1a
// checksum over the parameter bits; read_model verifies the checksum.
void write_model(const std::filesystem::path& path, const MlpModel& model);
MlpModel read_model(const std::filesystem::path& path);

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumEstimate& spectrum);
void write_spectrum_csv(const std::filesystem::path& path, const SpectrumEstimate& pre,
                        const SpectrumEstimate& post);

// (I, Q, slot_type) rows for constellation plots, slot_type in {pilot,data}.
void write_constellation_csv(const std::filesystem::path& path, const AlignedFrames& aligned,
                             const FrameConfig& frame);

// JSON bindings for the config surface; every field has a defaulted read.
void to_json(nlohmann::json& j, const FrameConfig& v);
void from_json(const nlohmann::json& j, FrameConfig& v);
void to_json(nlohmann::json& j, const ChannelConfig& v);
void from_json(const nlohmann::json& j, ChannelConfig& v);
void to_json(nlohmann::json& j, const SnrModel& v);
void from_json(const nlohmann::json& j, SnrModel& v);
void to_json(nlohmann::json& j, const SyncConfig& v);
void from_json(const nlohmann::json& j, SyncConfig& v);
void to_json(nlohmann::json& j, const RecoveryConfig& v);
void from_json(const nlohmann::json& j, RecoveryConfig& v);
void to_json(nlohmann::json& j, const MlpConfig& v);
void from_json(const nlohmann::json& j, MlpConfig& v);
void to_json(nlohmann::json& j, const TrainConfig& v);
void from_json(const nlohmann::json& j, TrainConfig& v);
void to_json(nlohmann::json& j, const AlignmentResult& v);
void from_json(const nlohmann::json& j, AlignmentResult& v);

}  // namespace qpsk
