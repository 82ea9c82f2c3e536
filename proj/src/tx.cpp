#include "qpsk/tx.hpp"

#include <random>
#include <stdexcept>

namespace qpsk {

void FrameConfig::validate() const {
    if (frame_len_symbols < 2) throw std::invalid_argument("FrameConfig: frame_len_symbols must be >= 2");
    if (pilot_symbol_index < 0 || pilot_symbol_index > 3) throw std::invalid_argument("FrameConfig: pilot_symbol_index must be in [0,3]");
    if (pilot_position < 0 || pilot_position >= frame_len_symbols) throw std::invalid_argument("FrameConfig: pilot_position out of range");
    if (samples_per_symbol < 2) throw std::invalid_argument("FrameConfig: samples_per_symbol must be >= 2");
}

const std::array<cplx, 4>& qpsk_constellation() {
    // Indexed by the bit pair (b1<<1)|b0: b0 flips the real sign, b1 the
    // imaginary sign. Adjacent (90 degree) points differ in one bit.
    static const double a = 1.0 / std::numbers::sqrt2;
    static const std::array<cplx, 4> points = {
        cplx{+a, +a},  // 00
        cplx{-a, +a},  // 01
        cplx{+a, -a},  // 10
        cplx{-a, -a},  // 11
    };
    return points;
}

int nearest_qpsk_index(cplx sample) {
    int idx = 0;
    if (sample.real() < 0.0) idx |= 1;
    if (sample.imag() < 0.0) idx |= 2;
    return idx;
}

BitStream generate_bits(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    BitStream out;
    out.bits.resize(n);
    std::uint64_t word = 0;
    int avail = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (avail == 0) {
            word = rng();
            avail = 64;
        }
        out.bits[i] = static_cast<std::uint8_t>(word & 1u);
        word >>= 1;
        --avail;
    }
    return out;
}

SymbolStream map_qpsk(const BitStream& bits) {
    if (bits.size() % 2 != 0) throw std::invalid_argument("map_qpsk: odd bit count");
    const auto& points = qpsk_constellation();
    SymbolStream out;
    out.symbols.reserve(bits.size() / 2);
    for (std::size_t i = 0; i < bits.size(); i += 2) {
        const int b1 = bits.bits[i];
        const int b0 = bits.bits[i + 1];
        out.symbols.push_back(points[(b1 << 1) | b0]);
    }
    return out;
}

BitStream demap_qpsk(const SymbolStream& symbols) {
    BitStream out;
    out.bits.reserve(symbols.symbols.size() * 2);
    for (const cplx& s : symbols.symbols) {
        const int pair = nearest_qpsk_index(s);
        out.bits.push_back(static_cast<std::uint8_t>((pair >> 1) & 1));
        out.bits.push_back(static_cast<std::uint8_t>(pair & 1));
    }
    return out;
}

SymbolStream insert_pilots(const SymbolStream& data, const FrameConfig& cfg) {
    cfg.validate();
    const std::size_t per_frame = static_cast<std::size_t>(cfg.data_symbols_per_frame());
    if (data.symbols.size() % per_frame != 0) {
        throw std::invalid_argument("insert_pilots: data length not divisible by data symbols per frame");
    }
    const cplx pilot = qpsk_constellation()[cfg.pilot_symbol_index];

    SymbolStream out;
    const std::size_t n_frames = data.symbols.size() / per_frame;
    out.symbols.reserve(n_frames * cfg.frame_len_symbols);
    std::size_t di = 0;
    for (std::size_t f = 0; f < n_frames; ++f) {
        for (int slot = 0; slot < cfg.frame_len_symbols; ++slot) {
            if (slot == cfg.pilot_position) {
                out.symbols.push_back(pilot);
            } else {
                out.symbols.push_back(data.symbols[di++]);
            }
        }
    }
    return out;
}

SymbolStream strip_pilots(const SymbolStream& framed, const FrameConfig& cfg) {
    cfg.validate();
    if (framed.symbols.size() % cfg.frame_len_symbols != 0) {
        throw std::invalid_argument("strip_pilots: length not divisible by frame length");
    }
    SymbolStream out;
    out.symbols.reserve(framed.symbols.size() / cfg.frame_len_symbols *
                        cfg.data_symbols_per_frame());
    for (std::size_t i = 0; i < framed.symbols.size(); ++i) {
        if (static_cast<int>(i % cfg.frame_len_symbols) != cfg.pilot_position) {
            out.symbols.push_back(framed.symbols[i]);
        }
    }
    return out;
}

IqBuffer pulse_shape(const SymbolStream& symbols, const FirFilter& rrc, const FrameConfig& cfg,
                     double sample_rate_hz) {
    cfg.validate();
    const int sps = cfg.samples_per_symbol;
    if (static_cast<int>(rrc.num_taps()) < sps + 1) {
        throw std::invalid_argument("pulse_shape: rrc too short for samples_per_symbol");
    }
    IqBuffer up;
    up.sample_rate_hz = sample_rate_hz;
    // Tail pad so the last symbol's full pulse is flushed through the filter.
    up.samples.assign(symbols.symbols.size() * sps + rrc.num_taps() - 1, cplx{0.0, 0.0});
    for (std::size_t i = 0; i < symbols.symbols.size(); ++i) {
        up.samples[i * sps] = symbols.symbols[i];
    }
    return filter(up, rrc);
}

TxOutput transmit_frames(std::size_t n_frames, std::uint64_t seed, const FrameConfig& cfg,
                         const FirFilter& rrc, double sample_rate_hz) {
    if (n_frames < 1) throw std::invalid_argument("transmit_frames: n_frames must be >= 1");
    cfg.validate();
    TxOutput out;
    out.data_bits = generate_bits(n_frames * cfg.data_bits_per_frame(), seed);
    SymbolStream data = map_qpsk(out.data_bits);
    SymbolStream framed = insert_pilots(data, cfg);
    out.signal = pulse_shape(framed, rrc, cfg, sample_rate_hz);
    return out;
}

}  // namespace qpsk
