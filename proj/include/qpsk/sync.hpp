#pragma once

#include <cstdint>
#include <vector>

#include "qpsk/dsp.hpp"
#include "qpsk/tx.hpp"

namespace qpsk {

struct SyncConfig {
    int pfb_num_branches = 32;
    double pfb_loop_bw = 2.0 * 3.14159265358979323846 / 2000.0;
    int cma_num_taps = 11;
    double cma_step = 1e-3;
    double cma_modulus = 1.0;
    double costas_loop_bw = 2.0 * 3.14159265358979323846 / 100.0;
    int costas_order = 4;

    void validate() const;
};

// One complex sample per recovered symbol, with per-symbol loop diagnostics.
struct SyncedSymbols {
    std::vector<cplx> symbols;
    std::vector<double> timing_error;  // pfb loop error per symbol
    std::vector<double> phase_error;   // unwrapped Costas NCO phase per symbol
};

// Timing recovery: a bank of phase-shifted matched filters plus their
// derivative filters; Re{y*conj(dy)} drives a 2nd-order PI loop that picks
// the branch and advances the input pointer. One output per sps inputs.
class PolyphaseClockSync {
  public:
    PolyphaseClockSync(const FirFilter& matched_rrc, int sps, int num_branches, double loop_bw);

    // Streaming: repeated calls on chunks equal one call on the concatenation.
    void process(const std::vector<cplx>& in, std::vector<cplx>& out_symbols,
                 std::vector<double>& out_error);

    int taps_per_branch() const { return taps_per_branch_; }

  private:
    void acquire_initial_timing();

    int sps_;
    int nfilts_;
    int taps_per_branch_;
    double gd_delta_ = 0.0;
    std::size_t acq_samples_ = 1024;
    bool acquired_ = false;
    std::vector<std::vector<double>> branches_;
    std::vector<std::vector<double>> dbranches_;
    double alpha_ = 0.0;
    double beta_ = 0.0;
    double k_;          // branch phase, wraps in [0, nfilts)
    double rate_ = 0.0; // loop integrator
    double max_dev_;
    std::vector<cplx> buf_;
    std::size_t idx_ = 0;
};

// Blind FIR equalizer adapted per sample with e = y*(|y|^2 - R^2).
class CmaEqualizer {
  public:
    CmaEqualizer(int num_taps, double step, double modulus);

    void process(const std::vector<cplx>& in, std::vector<cplx>& out);

    const std::vector<cplx>& weights() const { return weights_; }

  private:
    std::vector<cplx> weights_;
    std::vector<cplx> history_;
    double step_;
    double modulus_;
    std::size_t samples_seen_ = 0;
};

// 4th-order Costas loop. Locks modulo 90 degrees; the ambiguity is resolved
// downstream by frame recovery.
class CostasLoop {
  public:
    CostasLoop(double loop_bw, int order = 4);

    void process(const std::vector<cplx>& in, std::vector<cplx>& out,
                 std::vector<double>& out_phase);

    double frequency() const { return freq_; }  // rad/sample

  private:
    double alpha_;
    double beta_;
    double phase_ = 0.0;          // wrapped NCO phase
    double unwrapped_phase_ = 0.0;
    double freq_ = 0.0;
};

IqBuffer polyphase_clock_sync(const IqBuffer& signal, const FirFilter& matched_rrc,
                              const SyncConfig& cfg, int sps);
IqBuffer cma_equalize(const IqBuffer& symbols, const SyncConfig& cfg);
SyncedSymbols costas_loop(const IqBuffer& symbols, const SyncConfig& cfg);
BitStream hard_decode(const SyncedSymbols& symbols);

struct ReceiverOutput {
    SyncedSymbols synced;
    BitStream bits;
};

// LPF -> polyphase clock sync -> CMA -> Costas -> hard decision.
ReceiverOutput run_receiver(const IqBuffer& signal, const FirFilter& lpf,
                            const FirFilter& matched_rrc, const SyncConfig& cfg, int sps);

}  // namespace qpsk
