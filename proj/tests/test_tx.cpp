#include <cmath>
#include <map>
#include <numbers>

#include "doctest.h"
#include "qpsk/tx.hpp"

using namespace qpsk;

namespace {
const double kA = 1.0 / std::numbers::sqrt2;
}

TEST_CASE("generate_bits determinism and balance") {
    CHECK(generate_bits(0, 123).size() == 0);
    BitStream a = generate_bits(100000, 42);
    BitStream b = generate_bits(100000, 42);
    CHECK(a == b);
    CHECK(generate_bits(1000, 43).bits != a.bits);

    BitStream big = generate_bits(1000000, 7);
    std::size_t ones = 0;
    for (auto bit : big.bits) {
        CHECK(bit <= 1);
        ones += bit;
    }
    const double frac = static_cast<double>(ones) / big.size();
    CHECK(frac > 0.49);
    CHECK(frac < 0.51);
}

TEST_CASE("gray qpsk mapping") {
    SymbolStream s = map_qpsk(BitStream{{0, 0}});
    CHECK(s.symbols[0].real() == doctest::Approx(0.7071).epsilon(1e-3));
    CHECK(s.symbols[0].imag() == doctest::Approx(0.7071).epsilon(1e-3));
    s = map_qpsk(BitStream{{1, 1}});
    CHECK(s.symbols[0].real() == doctest::Approx(-0.7071).epsilon(1e-3));
    CHECK(s.symbols[0].imag() == doctest::Approx(-0.7071).epsilon(1e-3));
    s = map_qpsk(BitStream{{0, 1}});
    CHECK(s.symbols[0].real() == doctest::Approx(-kA));
    CHECK(s.symbols[0].imag() == doctest::Approx(kA));
    s = map_qpsk(BitStream{{1, 0}});
    CHECK(s.symbols[0].real() == doctest::Approx(kA));
    CHECK(s.symbols[0].imag() == doctest::Approx(-kA));

    CHECK_THROWS_AS(map_qpsk(BitStream{{1}}), std::invalid_argument);

    BitStream bits = generate_bits(8, 17);
    CHECK(demap_qpsk(map_qpsk(bits)) == bits);
}

TEST_CASE("mapping is a bijection with the Gray property") {
    std::map<std::pair<double, double>, int> seen;
    const auto& pts = qpsk_constellation();
    for (int p = 0; p < 4; ++p) {
        seen[{pts[p].real(), pts[p].imag()}] = p;
        CHECK(std::abs(std::abs(pts[p]) - 1.0) < 1e-12);
    }
    CHECK(seen.size() == 4);
    // 90-degree neighbors differ in exactly one bit
    for (int p = 0; p < 4; ++p) {
        const cplx rotated{-pts[p].imag(), pts[p].real()};
        const int q = nearest_qpsk_index(rotated);
        const int hamming = ((p ^ q) & 1) + (((p ^ q) >> 1) & 1);
        CHECK(hamming == 1);
    }
}

TEST_CASE("pilot insertion and stripping") {
    FrameConfig cfg;  // frame 4, pilot 00 at slot 0
    BitStream bits = generate_bits(6, 5);
    SymbolStream data = map_qpsk(bits);
    SymbolStream framed = insert_pilots(data, cfg);
    REQUIRE(framed.symbols.size() == 4);
    CHECK(framed.symbols[0] == qpsk_constellation()[0]);
    for (int i = 0; i < 3; ++i) CHECK(framed.symbols[i + 1] == data.symbols[i]);

    BitStream bits6 = generate_bits(12, 6);
    SymbolStream data6 = map_qpsk(bits6);
    SymbolStream framed6 = insert_pilots(data6, cfg);
    REQUIRE(framed6.symbols.size() == 8);
    CHECK(framed6.symbols[0] == qpsk_constellation()[0]);
    CHECK(framed6.symbols[4] == qpsk_constellation()[0]);
    CHECK(framed6.symbols[5] == data6.symbols[3]);

    SymbolStream stripped = strip_pilots(framed6, cfg);
    REQUIRE(stripped.symbols.size() == data6.symbols.size());
    for (std::size_t i = 0; i < stripped.symbols.size(); ++i) {
        CHECK(stripped.symbols[i] == data6.symbols[i]);
    }

    SymbolStream bad = map_qpsk(generate_bits(8, 7));
    CHECK_THROWS_AS(insert_pilots(bad, cfg), std::invalid_argument);
}

TEST_CASE("pilot position is configurable") {
    FrameConfig cfg;
    cfg.pilot_position = 2;
    cfg.pilot_symbol_index = 3;
    SymbolStream data = map_qpsk(generate_bits(6, 8));
    SymbolStream framed = insert_pilots(data, cfg);
    CHECK(framed.symbols[2] == qpsk_constellation()[3]);
    SymbolStream back = strip_pilots(framed, cfg);
    for (std::size_t i = 0; i < 3; ++i) CHECK(back.symbols[i] == data.symbols[i]);
}

TEST_CASE("pulse shaping an isolated symbol reproduces the taps") {
    FrameConfig cfg;
    FirFilter rrc = design_rrc(cfg.samples_per_symbol, 0.35, 89);
    SymbolStream one;
    one.symbols.push_back(qpsk_constellation()[2]);
    IqBuffer shaped = pulse_shape(one, rrc, cfg, 2e6);
    REQUIRE(shaped.size() == 8 + 88);
    for (std::size_t i = 0; i < shaped.size(); ++i) {
        CHECK(std::abs(shaped.samples[i] - qpsk_constellation()[2] * rrc.taps[i]) < 1e-12);
    }
}

TEST_CASE("matched-filter loopback recovers symbols") {
    FrameConfig cfg;
    FirFilter rrc = design_rrc(cfg.samples_per_symbol, 0.35, 89);
    SymbolStream syms = map_qpsk(generate_bits(512, 11));
    IqBuffer shaped = pulse_shape(syms, rrc, cfg, 2e6);
    IqBuffer matched = filter(shaped, rrc);
    const std::size_t delay = 88;  // two group delays of 44
    double rms = 0.0;
    for (std::size_t i = 0; i < syms.symbols.size(); ++i) {
        const cplx got = matched.samples[delay + i * 8];
        rms += std::norm(got - syms.symbols[i]);
    }
    rms = std::sqrt(rms / syms.symbols.size());
    CHECK(rms < 0.02);
}

TEST_CASE("shaped spectrum drops off beyond the rrc edge") {
    FrameConfig cfg;
    const double fs = 2e6;
    const double beta = 0.35;
    FirFilter rrc = design_rrc(cfg.samples_per_symbol, beta, 89);
    TxOutput tx = transmit_frames(2000, 3, cfg, rrc, fs);
    SpectrumEstimate est = estimate_spectrum(tx.signal, 4096, 0.5);

    const double symbol_rate = fs / cfg.samples_per_symbol;
    const double edge = (1.0 + beta) * symbol_rate / 2.0;
    double inband = 0.0;
    std::size_t n_in = 0;
    double out_max = -1e9;
    for (std::size_t i = 0; i < est.freqs_hz.size(); ++i) {
        const double fr = std::abs(est.freqs_hz[i]);
        if (fr < 0.8 * symbol_rate / 2.0) {
            inband += est.power_db[i];
            ++n_in;
        } else if (fr > 1.5 * edge) {
            out_max = std::max(out_max, est.power_db[i]);
        }
    }
    inband /= n_in;
    CHECK(inband - out_max >= 30.0);
}

TEST_CASE("transmit_frames arithmetic and determinism") {
    FrameConfig cfg;
    FirFilter rrc = design_rrc(cfg.samples_per_symbol, 0.35, 89);
    TxOutput tx = transmit_frames(1, 9, cfg, rrc, 2e6);
    CHECK(tx.data_bits.size() == 6);
    CHECK(tx.signal.size() == 4 * 8 + 88);  // 4 symbols at 8 sps plus tail

    TxOutput a = transmit_frames(1000, 12, cfg, rrc, 2e6);
    TxOutput b = transmit_frames(1000, 12, cfg, rrc, 2e6);
    CHECK(a.data_bits == b.data_bits);
    CHECK(a.signal.samples == b.signal.samples);
    CHECK(a.data_bits.size() == 1000 * 6);
}

TEST_CASE("pilot point frequency approaches 7/16") {
    FrameConfig cfg;
    SymbolStream data = map_qpsk(generate_bits(60000, 13));
    SymbolStream framed = insert_pilots(data, cfg);
    std::size_t hits = 0;
    for (const cplx& s : framed.symbols) {
        if (std::abs(s - qpsk_constellation()[0]) < 1e-12) ++hits;
    }
    const double frac = static_cast<double>(hits) / framed.symbols.size();
    // 1/4 pilots plus 1/4 of the 3/4 data slots
    CHECK(std::abs(frac - 7.0 / 16.0) < 0.02);
}

TEST_CASE("average transmit power matches symbol energy over sps") {
    FrameConfig cfg;
    FirFilter rrc = design_rrc(cfg.samples_per_symbol, 0.35, 89);
    TxOutput tx = transmit_frames(2000, 21, cfg, rrc, 2e6);
    double p = 0.0;
    for (const cplx& s : tx.signal.samples) p += std::norm(s);
    p /= tx.signal.size();
    const double expected = 1.0 / cfg.samples_per_symbol;
    CHECK(p > 0.9 * expected);
    CHECK(p < 1.1 * expected);
}
