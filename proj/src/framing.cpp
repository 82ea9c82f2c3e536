#include "qpsk/framing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace qpsk {

namespace {

cplx rotate90(cplx s, int k) {
    switch (((k % 4) + 4) % 4) {
        case 1: return cplx{-s.imag(), s.real()};
        case 2: return cplx{-s.real(), -s.imag()};
        case 3: return cplx{s.imag(), -s.real()};
        default: return s;
    }
}

int pair_at(const BitStream& bits, std::size_t symbol_idx) {
    return (bits.bits[2 * symbol_idx] << 1) | bits.bits[2 * symbol_idx + 1];
}

// Best pilot offset for one rotation hypothesis, no thresholding.
PilotSearch pilot_scan(const BitStream& decoded, const FrameConfig& cfg, int k) {
    const int L = cfg.frame_len_symbols;
    const std::size_t n_sym = decoded.size() / 2;
    const int expect = rotated_pilot_pair(cfg, k);

    PilotSearch best;
    best.match_fraction = -1.0;
    for (int o = 0; o < L; ++o) {
        std::size_t frames = 0;
        std::size_t matches = 0;
        for (std::size_t p = o; p < n_sym; p += L) {
            ++frames;
            if (pair_at(decoded, p) == expect) ++matches;
        }
        if (frames == 0) continue;
        const double frac = static_cast<double>(matches) / frames;
        if (frac > best.match_fraction) {
            best.match_fraction = frac;
            best.offset_symbols = o;
        }
    }
    for (std::size_t p = best.offset_symbols; p < n_sym; p += L) {
        if (pair_at(decoded, p) == rotated_pilot_pair(cfg, k)) {
            best.pilot_positions.push_back(2 * p);
        }
    }
    return best;
}

std::uint64_t packed_word_at(const std::vector<std::uint64_t>& packed, std::size_t bitpos) {
    const std::size_t word = bitpos / 64;
    const std::size_t off = bitpos % 64;
    std::uint64_t w = word < packed.size() ? packed[word] >> off : 0;
    if (off != 0 && word + 1 < packed.size()) {
        w |= packed[word + 1] << (64 - off);
    }
    return w;
}

std::vector<std::uint64_t> pack_bits(const BitStream& bits) {
    std::vector<std::uint64_t> out((bits.size() + 63) / 64, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits.bits[i]) out[i / 64] |= 1ull << (i % 64);
    }
    return out;
}

}  // namespace

RotationRemap make_rotation_remap(int k) {
    RotationRemap r;
    r.k = ((k % 4) + 4) % 4;
    const auto& points = qpsk_constellation();
    for (int p = 0; p < 4; ++p) {
        // An observed point is the transmitted one rotated by +k*90 deg.
        r.bitpair_map[p] = nearest_qpsk_index(rotate90(points[p], -r.k));
    }
    return r;
}

RotationRemap compose(const RotationRemap& first, const RotationRemap& second) {
    return make_rotation_remap(first.k + second.k);
}

int rotated_pilot_pair(const FrameConfig& cfg, int k) {
    return nearest_qpsk_index(rotate90(qpsk_constellation()[cfg.pilot_symbol_index], k));
}

cplx derotate(cplx symbol, int k) { return rotate90(symbol, -k); }

std::optional<PilotSearch> pilot_search(const BitStream& decoded, const FrameConfig& cfg,
                                        const RotationRemap& rotation,
                                        const RecoveryConfig& rec) {
    cfg.validate();
    if (decoded.size() < static_cast<std::size_t>(3 * 2 * cfg.frame_len_symbols)) {
        throw std::invalid_argument("pilot_search: need at least 3 frames of bits");
    }
    PilotSearch best = pilot_scan(decoded, cfg, rotation.k);
    if (best.match_fraction < rec.pilot_match_threshold) return std::nullopt;
    return best;
}

std::pair<RotationRemap, PilotSearch> resolve_phase_ambiguity(const BitStream& decoded,
                                                              const FrameConfig& cfg,
                                                              const RecoveryConfig& rec) {
    cfg.validate();
    if (decoded.size() < static_cast<std::size_t>(3 * 2 * cfg.frame_len_symbols)) {
        throw std::invalid_argument("resolve_phase_ambiguity: need at least 3 frames of bits");
    }
    std::array<PilotSearch, 4> results;
    for (int k = 0; k < 4; ++k) results[k] = pilot_scan(decoded, cfg, k);

    int best_k = 0;
    for (int k = 1; k < 4; ++k) {
        if (results[k].match_fraction > results[best_k].match_fraction) best_k = k;
    }
    if (results[best_k].match_fraction < rec.pilot_match_threshold) {
        throw std::runtime_error("resolve_phase_ambiguity: no rotation reaches pilot threshold (best " +
                                 std::to_string(results[best_k].match_fraction) + ")");
    }
    for (int k = 0; k < 4; ++k) {
        if (k != best_k &&
            results[best_k].match_fraction - results[k].match_fraction < 0.05) {
            throw std::runtime_error("resolve_phase_ambiguity: ambiguous rotation (k=" +
                                     std::to_string(best_k) + " vs k=" + std::to_string(k) + ")");
        }
    }
    return {make_rotation_remap(best_k), results[best_k]};
}

namespace {

struct DelayScan {
    std::size_t delay = 0;
    double score = -1.0;
};

DelayScan scan_delay(const BitStream& tx_bits, const BitStream& rx_bits, std::size_t bpf,
                     std::size_t max_delay_bits, std::size_t window, bool fast) {

    std::vector<std::uint64_t> tx_packed;
    std::vector<std::uint64_t> rx_packed;
    if (fast) {
        tx_packed = pack_bits(tx_bits);
        rx_packed = pack_bits(rx_bits);
    }

    DelayScan best;
    for (std::size_t d = 0; d + window <= tx_bits.size() && d <= max_delay_bits; d += bpf) {
        std::size_t matches = 0;
        if (fast) {
            std::size_t done = 0;
            while (done < window) {
                const std::size_t chunk = std::min<std::size_t>(64, window - done);
                std::uint64_t t = packed_word_at(tx_packed, d + done);
                std::uint64_t r = packed_word_at(rx_packed, done);
                std::uint64_t diff = t ^ r;
                if (chunk < 64) diff &= (1ull << chunk) - 1;
                matches += chunk - std::popcount(diff);
                done += chunk;
            }
        } else {
            for (std::size_t i = 0; i < window; ++i) {
                if (tx_bits.bits[d + i] == rx_bits.bits[i]) ++matches;
            }
        }
        const double score = static_cast<double>(matches) / window;
        if (score > best.score) {
            best.score = score;
            best.delay = d;
        }
    }
    return best;
}

}  // namespace

AlignmentResult find_delay(const BitStream& tx_bits, const BitStream& rx_bits,
                           const FrameConfig& cfg, std::size_t max_delay_bits,
                           std::size_t window_bits, const RecoveryConfig& rec) {
    cfg.validate();
    const std::size_t bpf = static_cast<std::size_t>(cfg.data_bits_per_frame());
    const std::size_t window = std::min({window_bits, rx_bits.size(), tx_bits.size()});
    if (window < 4 * bpf) {
        throw std::invalid_argument("find_delay: comparison window too small");
    }

    const DelayScan best =
        scan_delay(tx_bits, rx_bits, bpf, max_delay_bits, window, rec.fast_delay_scan);
    if (best.score < rec.delay_match_threshold) {
        throw std::runtime_error("find_delay: no delay reaches threshold (best score " +
                                 std::to_string(best.score) + " at delay " +
                                 std::to_string(best.delay) + ")");
    }
    AlignmentResult out;
    out.delay_bits = best.delay;
    out.match_fraction = best.score;
    return out;
}

TruncateResult truncate_lockin(const SyncedSymbols& symbols, const BitStream& decoded,
                               const FrameConfig& cfg, const RecoveryConfig& rec) {
    cfg.validate();
    const int L = cfg.frame_len_symbols;
    const std::size_t n_sym = decoded.size() / 2;
    const std::size_t total_frames = n_sym / L;
    if (total_frames < 3) throw std::invalid_argument("truncate_lockin: stream too short");

    const std::size_t window =
        std::min<std::size_t>(static_cast<std::size_t>(rec.truncate_window_frames), total_frames);

    // Per-frame pilot-hit indicators for each (rotation, offset) hypothesis,
    // as prefix sums so any window is O(1).
    std::array<std::vector<std::size_t>, 16> prefix;
    for (int k = 0; k < 4; ++k) {
        const int expect = rotated_pilot_pair(cfg, k);
        for (int o = 0; o < L && o < 4; ++o) {
            auto& ps = prefix[k * 4 + o];
            ps.assign(total_frames + 1, 0);
            for (std::size_t f = 0; f < total_frames; ++f) {
                const std::size_t p = f * L + o;
                ps[f + 1] = ps[f] + (p < n_sym && pair_at(decoded, p) == expect ? 1 : 0);
            }
        }
    }
    // Offsets beyond 4 only occur for frame lengths > 4; scan those directly.
    auto window_frac = [&](std::size_t start) {
        double best = 0.0;
        for (int k = 0; k < 4; ++k) {
            for (int o = 0; o < L; ++o) {
                double frac;
                if (o < 4) {
                    const auto& ps = prefix[k * 4 + o];
                    frac = static_cast<double>(ps[start + window] - ps[start]) / window;
                } else {
                    const int expect = rotated_pilot_pair(cfg, k);
                    std::size_t m = 0;
                    for (std::size_t f = start; f < start + window; ++f) {
                        if (pair_at(decoded, f * L + o) == expect) ++m;
                    }
                    frac = static_cast<double>(m) / window;
                }
                best = std::max(best, frac);
            }
        }
        return best;
    };

    std::size_t cut = total_frames;
    for (std::size_t s = 0; s + window <= total_frames; ++s) {
        if (window_frac(s) >= rec.pilot_match_threshold) {
            cut = s;
            break;
        }
    }
    if (cut == total_frames) {
        throw std::runtime_error("truncate_lockin: entire stream below pilot threshold");
    }

    TruncateResult out;
    out.truncated_frames = cut;
    const std::size_t drop_sym = cut * L;
    out.symbols.symbols.assign(symbols.symbols.begin() + drop_sym, symbols.symbols.end());
    if (symbols.timing_error.size() >= drop_sym) {
        out.symbols.timing_error.assign(symbols.timing_error.begin() + drop_sym,
                                        symbols.timing_error.end());
    }
    if (symbols.phase_error.size() >= drop_sym) {
        out.symbols.phase_error.assign(symbols.phase_error.begin() + drop_sym,
                                       symbols.phase_error.end());
    }
    out.decoded.bits.assign(decoded.bits.begin() + 2 * drop_sym, decoded.bits.end());
    return out;
}

AlignedFrames align(const BitStream& tx_bits, const SyncedSymbols& rx_symbols,
                    const BitStream& rx_bits, const FrameConfig& cfg,
                    const RecoveryConfig& rec) {
    cfg.validate();
    const int L = cfg.frame_len_symbols;
    const std::size_t bpf = static_cast<std::size_t>(cfg.data_bits_per_frame());

    TruncateResult tr = truncate_lockin(rx_symbols, rx_bits, cfg, rec);
    auto [remap, ps] = resolve_phase_ambiguity(tr.decoded, cfg, rec);

    // Trim so that each frame's pilot lands on cfg.pilot_position.
    const std::size_t trim =
        (ps.offset_symbols + L - static_cast<std::size_t>(cfg.pilot_position)) % L;
    SyncedSymbols synced;
    synced.symbols.assign(tr.symbols.symbols.begin() + trim, tr.symbols.symbols.end());
    BitStream decoded;
    decoded.bits.assign(tr.decoded.bits.begin() + 2 * trim, tr.decoded.bits.end());

    const std::size_t n_frames = (decoded.size() / 2) / L;
    if (n_frames < 3) throw std::runtime_error("align: too few frames after truncation");

    // Remapped conventional data bits, pilots excluded.
    BitStream rx_data;
    rx_data.bits.reserve(n_frames * bpf);
    for (std::size_t f = 0; f < n_frames; ++f) {
        for (int slot = 0; slot < L; ++slot) {
            if (slot == cfg.pilot_position) continue;
            const int pair = remap.bitpair_map[pair_at(decoded, f * L + slot)];
            rx_data.bits.push_back(static_cast<std::uint8_t>((pair >> 1) & 1));
            rx_data.bits.push_back(static_cast<std::uint8_t>(pair & 1));
        }
    }

    // The residual shift between the streams can have either sign: positive
    // when the channel delay outruns the truncation (tx must be delayed) and
    // negative when the receive chain's own group delay leaves pre-signal
    // frames at the head (rx frames must be dropped).
    const std::size_t window = std::min({rec.delay_window_bits, rx_data.size(), tx_bits.size()});
    if (window < 4 * bpf) throw std::runtime_error("align: too few bits for delay search");
    const DelayScan pos =
        scan_delay(tx_bits, rx_data, bpf, rec.max_delay_bits, window, rec.fast_delay_scan);
    const DelayScan neg = scan_delay(rx_data, tx_bits, bpf,
                                     static_cast<std::size_t>(rec.truncate_window_frames) * bpf,
                                     window, rec.fast_delay_scan);
    const double best_score = std::max(pos.score, neg.score);
    if (best_score < rec.delay_match_threshold) {
        throw std::runtime_error("align: no delay reaches threshold (best score " +
                                 std::to_string(best_score) + ")");
    }
    const std::size_t drop_frames = pos.score >= neg.score ? 0 : neg.delay / bpf;
    const std::size_t delay_frames = pos.score >= neg.score ? pos.delay / bpf : 0;

    AlignedFrames out;
    out.alignment.delay_bits = delay_frames * bpf;
    out.alignment.match_fraction = best_score;
    out.alignment.rotation_k = remap.k;
    out.alignment.truncated_bits = 2 * ((tr.truncated_frames + drop_frames) * L + trim);
    for (std::size_t f = drop_frames; f < n_frames; ++f) {
        out.alignment.pilot_positions.push_back(
            2 * ((f - drop_frames) * L + static_cast<std::size_t>(cfg.pilot_position)));
    }

    const std::size_t tx_frames = tx_bits.size() / bpf;
    out.frames.reserve(n_frames - drop_frames);
    for (std::size_t f = drop_frames; f < n_frames; ++f) {
        const std::size_t txf = delay_frames + f - drop_frames;
        if (txf >= tx_frames) break;
        FrameRecord rec_out;
        rec_out.symbols.reserve(L);
        for (int slot = 0; slot < L; ++slot) {
            rec_out.symbols.push_back(derotate(synced.symbols[f * L + slot], remap.k));
        }
        rec_out.label_bits.assign(tx_bits.bits.begin() + txf * bpf,
                                  tx_bits.bits.begin() + (txf + 1) * bpf);
        rec_out.conv_bits.assign(rx_data.bits.begin() + f * bpf,
                                 rx_data.bits.begin() + (f + 1) * bpf);
        out.frames.push_back(std::move(rec_out));
    }
    return out;
}

}  // namespace qpsk
