#include <cmath>
#include <random>

#include "doctest.h"
#include "qpsk/framing.hpp"
#include "qpsk/tx.hpp"

using namespace qpsk;

namespace {

// Decoded bitstream of a pilot-framed symbol stream rotated by k*90 degrees.
BitStream decode_rotated(const SymbolStream& framed, int k) {
    SymbolStream rotated;
    rotated.symbols.reserve(framed.symbols.size());
    for (const cplx& s : framed.symbols) rotated.symbols.push_back(derotate(s, -k));
    return demap_qpsk(rotated);
}

SymbolStream framed_stream(std::size_t n_frames, std::uint64_t seed, const FrameConfig& cfg) {
    BitStream bits = generate_bits(n_frames * cfg.data_bits_per_frame(), seed);
    return insert_pilots(map_qpsk(bits), cfg);
}

BitStream flip_bits(const BitStream& in, double p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    BitStream out = in;
    for (auto& b : out.bits) {
        if (u(rng) < p) b ^= 1;
    }
    return out;
}

SyncedSymbols as_synced(const SymbolStream& s) {
    SyncedSymbols out;
    out.symbols = s.symbols;
    out.timing_error.assign(s.symbols.size(), 0.0);
    out.phase_error.assign(s.symbols.size(), 0.0);
    return out;
}

}  // namespace

TEST_CASE("rotation remap group property") {
    CHECK(make_rotation_remap(0).bitpair_map == std::array<int, 4>{0, 1, 2, 3});
    for (int k1 = 0; k1 < 4; ++k1) {
        for (int k2 = 0; k2 < 4; ++k2) {
            const RotationRemap c = compose(make_rotation_remap(k1), make_rotation_remap(k2));
            const RotationRemap direct = make_rotation_remap((k1 + k2) % 4);
            CHECK(c.k == direct.k);
            CHECK(c.bitpair_map == direct.bitpair_map);
        }
    }
    // remap undoes the rotation: labels of rotated points map back
    const auto& pts = qpsk_constellation();
    for (int k = 0; k < 4; ++k) {
        const RotationRemap r = make_rotation_remap(k);
        for (int p = 0; p < 4; ++p) {
            const int observed = nearest_qpsk_index(derotate(pts[p], -k));
            CHECK(r.bitpair_map[observed] == p);
        }
    }
}

TEST_CASE("derotate inverts a 90-degree rotation exactly") {
    const cplx s{0.3, -0.8};
    for (int k = 0; k < 4; ++k) {
        const cplx rotated = derotate(s, -k);
        const cplx back = derotate(rotated, k);
        CHECK(back.real() == s.real());
        CHECK(back.imag() == s.imag());
    }
}

TEST_CASE("pilot_search finds the clean pilot grid") {
    FrameConfig cfg;
    SymbolStream framed = framed_stream(200, 3, cfg);
    BitStream decoded = demap_qpsk(framed);
    auto res = pilot_search(decoded, cfg, make_rotation_remap(0));
    REQUIRE(res.has_value());
    CHECK(res->offset_symbols == 0);
    CHECK(res->match_fraction == doctest::Approx(1.0));
    CHECK(res->pilot_positions.size() == 200);
    CHECK(res->pilot_positions[0] == 0);
    CHECK(res->pilot_positions[1] == 2 * cfg.frame_len_symbols);
}

TEST_CASE("pilot_search needs the matching rotation remap") {
    FrameConfig cfg;
    SymbolStream framed = framed_stream(200, 5, cfg);
    BitStream decoded = decode_rotated(framed, 1);
    // searching for the unrotated pilot label fails on a rotated stream
    CHECK(!pilot_search(decoded, cfg, make_rotation_remap(0)).has_value());
    auto res = pilot_search(decoded, cfg, make_rotation_remap(1));
    REQUIRE(res.has_value());
    CHECK(res->match_fraction == doctest::Approx(1.0));
}

TEST_CASE("pilot_search survives scattered bit flips") {
    FrameConfig cfg;
    SymbolStream framed = framed_stream(2000, 7, cfg);
    BitStream decoded = flip_bits(demap_qpsk(framed), 0.05, 1);
    auto res = pilot_search(decoded, cfg, make_rotation_remap(0));
    REQUIRE(res.has_value());
    CHECK(res->offset_symbols == 0);
    CHECK(res->match_fraction >= 0.9);
}

TEST_CASE("pilot_search rejects short input") {
    FrameConfig cfg;
    BitStream two_frames = generate_bits(16, 1);
    CHECK_THROWS_AS(pilot_search(two_frames, cfg, make_rotation_remap(0)),
                    std::invalid_argument);
}

TEST_CASE("resolve_phase_ambiguity identifies each rotation") {
    FrameConfig cfg;
    for (int k = 0; k < 4; ++k) {
        SymbolStream framed = framed_stream(300, 13 + k, cfg);
        BitStream decoded = decode_rotated(framed, k);
        auto [remap, ps] = resolve_phase_ambiguity(decoded, cfg);
        CHECK(remap.k == k);
        CHECK(ps.match_fraction == doctest::Approx(1.0));
    }
}

TEST_CASE("resolve_phase_ambiguity rejects random bits") {
    FrameConfig cfg;
    BitStream random = generate_bits(4000, 17);
    CHECK_THROWS_AS(resolve_phase_ambiguity(random, cfg), std::runtime_error);
}

TEST_CASE("find_delay recovers an exact frame shift") {
    FrameConfig cfg;
    const std::size_t bpf = cfg.data_bits_per_frame();
    BitStream tx = generate_bits(2000 * bpf, 19);
    BitStream rx;
    rx.bits.assign(tx.bits.begin() + 37 * bpf, tx.bits.end());
    AlignmentResult res = find_delay(tx, rx, cfg, 100000, 3000);
    CHECK(res.delay_bits == 37 * bpf);
    CHECK(res.match_fraction == doctest::Approx(1.0));
}

TEST_CASE("find_delay locates a large delay through bit flips") {
    FrameConfig cfg;
    const std::size_t bpf = cfg.data_bits_per_frame();
    const std::size_t shift = 100002;  // on the frame grid
    BitStream tx = generate_bits(20000 * bpf, 23);
    BitStream rx;
    rx.bits.assign(tx.bits.begin() + shift, tx.bits.end());
    rx = flip_bits(rx, 0.02, 29);
    AlignmentResult res = find_delay(tx, rx, cfg, 200000, 3000);
    CHECK(res.delay_bits == shift);
    CHECK(res.match_fraction >= 0.95);

    RecoveryConfig fast;
    fast.fast_delay_scan = true;
    AlignmentResult res_fast = find_delay(tx, rx, cfg, 200000, 3000, fast);
    CHECK(res_fast.delay_bits == res.delay_bits);
    CHECK(res_fast.match_fraction == res.match_fraction);
}

TEST_CASE("find_delay fast mode equals the reference scan") {
    FrameConfig cfg;
    const std::size_t bpf = cfg.data_bits_per_frame();
    BitStream tx = generate_bits(5000 * bpf, 31);
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t shift = bpf * (rng() % 4000);
        BitStream rx;
        rx.bits.assign(tx.bits.begin() + shift, tx.bits.end());
        rx = flip_bits(rx, 0.03, rng());
        RecoveryConfig slow;
        RecoveryConfig fast;
        fast.fast_delay_scan = true;
        AlignmentResult a = find_delay(tx, rx, cfg, 30000, 3000, slow);
        AlignmentResult b = find_delay(tx, rx, cfg, 30000, 3000, fast);
        CHECK(a.delay_bits == shift);
        CHECK(a.delay_bits == b.delay_bits);
        CHECK(a.match_fraction == b.match_fraction);
    }
}

TEST_CASE("find_delay rejects unrelated streams") {
    FrameConfig cfg;
    BitStream tx = generate_bits(60000, 41);
    BitStream rx = generate_bits(30000, 43);
    CHECK_THROWS_WITH_AS(find_delay(tx, rx, cfg, 50000, 3000),
                         doctest::Contains("no delay reaches threshold"), std::runtime_error);
}

TEST_CASE("truncate_lockin drops a garbage prefix") {
    FrameConfig cfg;
    const int L = cfg.frame_len_symbols;
    SymbolStream clean = framed_stream(1000, 47, cfg);
    // 200 frames of random symbols before lock
    SymbolStream garbage = map_qpsk(generate_bits(2 * 200 * L, 53));
    SymbolStream whole;
    whole.symbols = garbage.symbols;
    whole.symbols.insert(whole.symbols.end(), clean.symbols.begin(), clean.symbols.end());
    BitStream decoded = demap_qpsk(whole);

    TruncateResult tr = truncate_lockin(as_synced(whole), decoded, cfg);
    CHECK(tr.truncated_frames >= 150);
    CHECK(tr.truncated_frames <= 250);
    CHECK(tr.symbols.symbols.size() == tr.decoded.size() / 2);

    auto res = pilot_search(tr.decoded, cfg, make_rotation_remap(0));
    REQUIRE(res.has_value());
    CHECK(res->match_fraction >= 0.98);
}

TEST_CASE("truncate_lockin keeps a clean stream whole") {
    FrameConfig cfg;
    SymbolStream clean = framed_stream(300, 59, cfg);
    TruncateResult tr = truncate_lockin(as_synced(clean), demap_qpsk(clean), cfg);
    CHECK(tr.truncated_frames == 0);
    CHECK(tr.decoded.size() == 2 * clean.symbols.size());
}

TEST_CASE("truncate_lockin rejects a fully random stream") {
    FrameConfig cfg;
    SymbolStream noise = map_qpsk(generate_bits(8000, 61));
    CHECK_THROWS_AS(truncate_lockin(as_synced(noise), demap_qpsk(noise), cfg),
                    std::runtime_error);
}

TEST_CASE("align is the identity on aligned streams") {
    FrameConfig cfg;
    const std::size_t bpf = cfg.data_bits_per_frame();
    BitStream tx = generate_bits(500 * bpf, 67);
    SymbolStream framed = insert_pilots(map_qpsk(tx), cfg);
    AlignedFrames out = align(tx, as_synced(framed), demap_qpsk(framed), cfg);
    CHECK(out.alignment.delay_bits == 0);
    CHECK(out.alignment.rotation_k == 0);
    CHECK(out.alignment.truncated_bits == 0);
    CHECK(out.alignment.match_fraction == doctest::Approx(1.0));
    REQUIRE(out.frames.size() == 500);
    for (std::size_t f = 0; f < out.frames.size(); ++f) {
        CHECK(out.frames[f].label_bits == out.frames[f].conv_bits);
        for (int i = 0; i < cfg.data_bits_per_frame(); ++i) {
            CHECK(out.frames[f].label_bits[i] == tx.bits[f * bpf + i]);
        }
    }
}

TEST_CASE("align recovers every injected delay and rotation") {
    FrameConfig cfg;
    const int L = cfg.frame_len_symbols;
    const std::size_t bpf = cfg.data_bits_per_frame();
    const std::size_t n_frames = 4000;
    BitStream tx = generate_bits(n_frames * bpf, 71);
    SymbolStream framed = insert_pilots(map_qpsk(tx), cfg);

    std::mt19937_64 rng(73);
    for (int k = 0; k < 4; ++k) {
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t delay_frames = rng() % 3000;
            SymbolStream rx;
            for (std::size_t i = delay_frames * L; i < framed.symbols.size(); ++i) {
                rx.symbols.push_back(derotate(framed.symbols[i], -k));
            }
            AlignedFrames out = align(tx, as_synced(rx), demap_qpsk(rx), cfg);
            CHECK(out.alignment.rotation_k == k);
            CHECK(out.alignment.delay_bits == delay_frames * bpf);
            CHECK(out.alignment.truncated_bits == 0);
            REQUIRE(!out.frames.empty());
            CHECK(out.frames[0].label_bits == out.frames[0].conv_bits);
            // symbols come back in canonical orientation
            CHECK(std::abs(out.frames[0].symbols[0] -
                           qpsk_constellation()[cfg.pilot_symbol_index]) < 1e-12);
        }
    }
}

TEST_CASE("align absorbs a receiver-side lead into truncation") {
    FrameConfig cfg;
    const int L = cfg.frame_len_symbols;
    const std::size_t bpf = cfg.data_bits_per_frame();
    BitStream tx = generate_bits(600 * bpf, 79);
    SymbolStream framed = insert_pilots(map_qpsk(tx), cfg);
    // rx contains 8 frames of valid-looking frames that precede tx's content
    SymbolStream lead = framed_stream(8, 83, cfg);
    SymbolStream rx;
    rx.symbols = lead.symbols;
    rx.symbols.insert(rx.symbols.end(), framed.symbols.begin(), framed.symbols.end());
    AlignedFrames out = align(tx, as_synced(rx), demap_qpsk(rx), cfg);
    CHECK(out.alignment.delay_bits == 0);
    CHECK(out.alignment.truncated_bits == 2 * 8 * L);
    REQUIRE(out.frames.size() == 600);
    for (std::size_t f = 0; f < out.frames.size(); f += 97) {
        CHECK(out.frames[f].label_bits == out.frames[f].conv_bits);
    }
}

TEST_CASE("align excludes pilot bits structurally") {
    FrameConfig cfg;
    const std::size_t bpf = cfg.data_bits_per_frame();
    BitStream tx = generate_bits(300 * bpf, 89);
    SymbolStream framed = insert_pilots(map_qpsk(tx), cfg);
    AlignedFrames out = align(tx, as_synced(framed), demap_qpsk(framed), cfg);
    for (const FrameRecord& f : out.frames) {
        CHECK(f.symbols.size() == static_cast<std::size_t>(cfg.frame_len_symbols));
        CHECK(f.label_bits.size() == bpf);
        CHECK(f.conv_bits.size() == bpf);
    }
    // every pilot position points at a pilot slot, spaced one frame apart
    const auto& pos = out.alignment.pilot_positions;
    REQUIRE(!pos.empty());
    for (std::size_t i = 1; i < pos.size(); ++i) {
        CHECK(pos[i] - pos[i - 1] == 2 * static_cast<std::size_t>(cfg.frame_len_symbols));
    }
}

TEST_CASE("align reports unrecoverable streams") {
    FrameConfig cfg;
    BitStream tx = generate_bits(600 * cfg.data_bits_per_frame(), 97);
    SymbolStream noise = map_qpsk(generate_bits(8000, 101));
    CHECK_THROWS_AS(align(tx, as_synced(noise), demap_qpsk(noise), cfg), std::runtime_error);
}
