#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "qpsk/dsp.hpp"

namespace qpsk {

// Frame layout: one pilot slot plus frame_len_symbols-1 data slots.
struct FrameConfig {
    int frame_len_symbols = 4;
    int pilot_symbol_index = 0;  // constellation point used as pilot
    int pilot_position = 0;      // slot index within the frame
    int samples_per_symbol = 8;

    int data_symbols_per_frame() const { return frame_len_symbols - 1; }
    int data_bits_per_frame() const { return 2 * (frame_len_symbols - 1); }
    void validate() const;
};

struct BitStream {
    std::vector<std::uint8_t> bits;  // values 0 or 1

    std::size_t size() const { return bits.size(); }
    bool operator==(const BitStream&) const = default;
};

struct SymbolStream {
    std::vector<cplx> symbols;  // points of the Gray-coded unit-energy QPSK set
};

// Gray QPSK constellation. Index is the bit pair (b1 b0) read MSB-first:
// 00 -> (+1+j)/sqrt2, 01 -> (-1+j)/sqrt2, 11 -> (-1-j)/sqrt2, 10 -> (+1-j)/sqrt2.
const std::array<cplx, 4>& qpsk_constellation();

// Index of the nearest constellation point (the decoded bit pair).
int nearest_qpsk_index(cplx sample);

BitStream generate_bits(std::size_t n, std::uint64_t seed);

SymbolStream map_qpsk(const BitStream& bits);
BitStream demap_qpsk(const SymbolStream& symbols);

SymbolStream insert_pilots(const SymbolStream& data, const FrameConfig& cfg);
SymbolStream strip_pilots(const SymbolStream& framed, const FrameConfig& cfg);

// Zero-stuff by samples_per_symbol then RRC filter. Output length is
// symbol count * sps plus a tail flush of (rrc taps - 1) samples.
IqBuffer pulse_shape(const SymbolStream& symbols, const FirFilter& rrc, const FrameConfig& cfg,
                     double sample_rate_hz);

struct TxOutput {
    BitStream data_bits;  // pilots excluded
    IqBuffer signal;
};

TxOutput transmit_frames(std::size_t n_frames, std::uint64_t seed, const FrameConfig& cfg,
                         const FirFilter& rrc, double sample_rate_hz);

}  // namespace qpsk
