#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qpsk/sync.hpp"
#include "qpsk/tx.hpp"

namespace qpsk {

// Thresholds and search bounds for the data-domain recovery algorithm.
struct RecoveryConfig {
    double pilot_match_threshold = 0.9;
    double delay_match_threshold = 0.95;
    int truncate_window_frames = 50;
    std::size_t max_delay_bits = 200000;  // in data bits
    std::size_t delay_window_bits = 3000;
    bool fast_delay_scan = false;  // 64-bit block compare; must equal the scan
};

// k * 90 degree constellation rotation expressed as a permutation on decoded
// bit pairs. bitpair_map[observed pair] = transmitted pair.
struct RotationRemap {
    int k = 0;
    std::array<int, 4> bitpair_map{0, 1, 2, 3};
};

RotationRemap make_rotation_remap(int k);
RotationRemap compose(const RotationRemap& first, const RotationRemap& second);

// Bit pair a pilot decodes to when the constellation is rotated by k*90 deg.
int rotated_pilot_pair(const FrameConfig& cfg, int k);

// Canonicalize symbols observed under rotation k back to the TX orientation.
cplx derotate(cplx symbol, int k);

struct AlignmentResult {
    std::size_t delay_bits = 0;  // data bits, quantized to the frame grid
    int rotation_k = 0;
    std::size_t truncated_bits = 0;
    double match_fraction = 0.0;
    std::vector<std::size_t> pilot_positions;  // bit positions of pilot slots
};

struct PilotSearch {
    std::size_t offset_symbols = 0;  // pilot slot offset within the frame
    double match_fraction = 0.0;
    std::vector<std::size_t> pilot_positions;
};

// Best frame offset for the pilot label under the given rotation, or nullopt
// when no offset reaches the match threshold.
std::optional<PilotSearch> pilot_search(const BitStream& decoded, const FrameConfig& cfg,
                                        const RotationRemap& rotation,
                                        const RecoveryConfig& rec = {});

// Tries all four rotations; the unique best one wins. Throws when no rotation
// clears the threshold or two are within 0.05 of each other.
std::pair<RotationRemap, PilotSearch> resolve_phase_ambiguity(const BitStream& decoded,
                                                              const FrameConfig& cfg,
                                                              const RecoveryConfig& rec = {});

// tx and rx are data-bit streams (pilots excluded), rx already remapped and
// trimmed to a frame boundary. Scans delays on the frame grid.
AlignmentResult find_delay(const BitStream& tx_bits, const BitStream& rx_bits,
                           const FrameConfig& cfg, std::size_t max_delay_bits,
                           std::size_t window_bits, const RecoveryConfig& rec = {});

struct TruncateResult {
    SyncedSymbols symbols;
    BitStream decoded;
    std::size_t truncated_frames = 0;
};

// Drops the leading region where no rotation/offset reaches the pilot match
// threshold within a sliding window. Throws when the whole stream is garbage.
TruncateResult truncate_lockin(const SyncedSymbols& symbols, const BitStream& decoded,
                               const FrameConfig& cfg, const RecoveryConfig& rec = {});

struct FrameRecord {
    std::vector<cplx> symbols;             // frame_len symbols, canonical rotation
    std::vector<std::uint8_t> label_bits;  // true data bits
    std::vector<std::uint8_t> conv_bits;   // conventional decoder's data bits
};

struct AlignedFrames {
    AlignmentResult alignment;
    std::vector<FrameRecord> frames;
};

// Fig-2-style pipeline: truncate -> resolve rotation -> find delay -> emit
// aligned frames. Throws std::runtime_error on unrecoverable streams; the
// caller treats that as "repeat the transmission".
AlignedFrames align(const BitStream& tx_bits, const SyncedSymbols& rx_symbols,
                    const BitStream& rx_bits, const FrameConfig& cfg,
                    const RecoveryConfig& rec = {});

}  // namespace qpsk
