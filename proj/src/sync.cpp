#include "qpsk/sync.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qpsk {

namespace {

constexpr double kDamping = std::numbers::sqrt2 / 2.0;

// Standard 2nd-order loop gains for the given noise bandwidth.
void loop_gains(double loop_bw, double& alpha, double& beta) {
    const double denom = 1.0 + 2.0 * kDamping * loop_bw + loop_bw * loop_bw;
    alpha = 4.0 * kDamping * loop_bw / denom;
    beta = 4.0 * loop_bw * loop_bw / denom;
}

double clip1(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace

void SyncConfig::validate() const {
    if (pfb_num_branches < 8) throw std::invalid_argument("SyncConfig: pfb_num_branches must be >= 8");
    if (!(pfb_loop_bw > 0.0 && pfb_loop_bw < 0.5)) throw std::invalid_argument("SyncConfig: pfb_loop_bw out of (0,0.5)");
    if (cma_num_taps < 1 || cma_num_taps % 2 == 0) throw std::invalid_argument("SyncConfig: cma_num_taps must be odd >= 1");
    if (cma_step <= 0.0) throw std::invalid_argument("SyncConfig: cma_step must be > 0");
    if (cma_modulus <= 0.0) throw std::invalid_argument("SyncConfig: cma_modulus must be > 0");
    if (!(costas_loop_bw > 0.0 && costas_loop_bw < 0.5)) throw std::invalid_argument("SyncConfig: costas_loop_bw out of (0,0.5)");
    if (costas_order != 4) throw std::invalid_argument("SyncConfig: costas_order must be 4");
}

PolyphaseClockSync::PolyphaseClockSync(const FirFilter& matched_rrc, int sps, int num_branches,
                                       double loop_bw)
    : sps_(sps), nfilts_(num_branches) {
    if (sps < 2) throw std::invalid_argument("PolyphaseClockSync: sps must be >= 2");
    if (num_branches < 8) throw std::invalid_argument("PolyphaseClockSync: need >= 8 branches");

    if (matched_rrc.description != "rrc" || matched_rrc.rrc_excess_bw <= 0.0) {
        throw std::invalid_argument("PolyphaseClockSync: matched filter must come from design_rrc");
    }

    // Rebuild the matched filter as a single prototype oversampled by the
    // number of branches; branch i is the filter at fractional offset
    // i/nfilts of a sample.
    const int proto_sps = sps * nfilts_;
    const int span_symbols =
        std::max(4, static_cast<int>(matched_rrc.num_taps() - 1) / sps);
    const int proto_len = span_symbols * proto_sps + 1;
    FirFilter proto = design_rrc(proto_sps, matched_rrc.rrc_excess_bw, proto_len);

    taps_per_branch_ = (proto_len + nfilts_ - 1) / nfilts_;
    std::vector<double> padded(static_cast<std::size_t>(taps_per_branch_) * nfilts_, 0.0);
    std::copy(proto.taps.begin(), proto.taps.end(), padded.begin());

    std::vector<double> dpadded(padded.size(), 0.0);
    for (std::size_t i = 1; i + 1 < padded.size(); ++i) {
        dpadded[i] = (padded[i + 1] - padded[i - 1]) / 2.0;
    }

    // Scale so each branch is ~unit energy at the symbol-sample rate.
    const double scale = std::sqrt(static_cast<double>(nfilts_));
    branches_.assign(nfilts_, std::vector<double>(taps_per_branch_, 0.0));
    dbranches_.assign(nfilts_, std::vector<double>(taps_per_branch_, 0.0));
    for (int i = 0; i < nfilts_; ++i) {
        for (int j = 0; j < taps_per_branch_; ++j) {
            branches_[i][j] = padded[static_cast<std::size_t>(j) * nfilts_ + i] * scale;
            dbranches_[i][j] = dpadded[static_cast<std::size_t>(j) * nfilts_ + i] * scale * nfilts_;
        }
    }

    // The loop gain formula assumes a unit-gain error detector, but the
    // Re{y*conj(dy)} detector on a Nyquist composite pulse has a very shallow
    // S-curve. Normalize by its slope (error per branch of timing offset),
    // computed from the branch/derivative composites with the TX pulse, so the
    // closed loop actually runs at the requested bandwidth and damping.
    auto composite = [&](const std::vector<double>& a) {
        std::vector<double> c(a.size() + matched_rrc.taps.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (std::size_t j = 0; j < matched_rrc.taps.size(); ++j) {
                c[i + j] += a[i] * matched_rrc.taps[j];
            }
        }
        return c;
    };
    double err_min = 0.0;
    double err_max = 0.0;
    for (int i = 0; i < nfilts_; ++i) {
        const std::vector<double> comp = composite(branches_[i]);
        const std::vector<double> dcomp = composite(dbranches_[i]);
        double best_power = -1.0;
        int best_n0 = 0;
        for (int n0 = 0; n0 < sps_; ++n0) {
            double p = 0.0;
            for (std::size_t m = n0; m < comp.size(); m += sps_) p += comp[m] * comp[m];
            if (p > best_power) {
                best_power = p;
                best_n0 = n0;
            }
        }
        double e = 0.0;
        for (std::size_t m = best_n0; m < comp.size(); m += sps_) e += comp[m] * dcomp[m];
        err_min = std::min(err_min, e);
        err_max = std::max(err_max, e);
    }
    const double ted_gain = (err_max - err_min) / nfilts_;
    if (!(ted_gain > 1e-12)) {
        throw std::invalid_argument("PolyphaseClockSync: degenerate timing error detector");
    }

    loop_gains(loop_bw, alpha_, beta_);
    alpha_ /= ted_gain;
    beta_ /= ted_gain;
    k_ = nfilts_ / 2.0;
    max_dev_ = 1.5;
    idx_ = 1;  // headroom for a single backward branch wrap
    buf_.assign(1, cplx{0.0, 0.0});

    // Difference of the branch and matched-filter group delays; relates the
    // squaring-estimator timing to the loop's sampling index.
    gd_delta_ = (matched_rrc.num_taps() - 1) / 2.0 - (taps_per_branch_ - 1) / 2.0;
    acq_samples_ = std::max<std::size_t>(1024, static_cast<std::size_t>(taps_per_branch_) + 2);
}

// Feedforward acquisition: the squared envelope of a linearly modulated signal
// carries a spectral line at the symbol rate whose phase is the symbol timing
// (Oerder-Meyr). Seeding the loop with it removes the pull-in transient, so a
// clean stream decodes correctly from the very first frame.
void PolyphaseClockSync::acquire_initial_timing() {
    cplx acc{0.0, 0.0};
    for (std::size_t n = 0; n < acq_samples_; ++n) {
        acc += std::norm(buf_[n]) *
               std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(n) / sps_);
    }
    const double tau = -std::arg(acc) / (2.0 * std::numbers::pi) * sps_;
    double t0 = std::fmod(tau - sps_ / 2.0 + gd_delta_, static_cast<double>(sps_));
    if (t0 < 0.0) t0 += sps_;
    const int whole = static_cast<int>(t0);
    k_ = (t0 - whole) * nfilts_;
    idx_ = 1 + static_cast<std::size_t>((whole + sps_ - 1) % sps_);
}

void PolyphaseClockSync::process(const std::vector<cplx>& in, std::vector<cplx>& out_symbols,
                                 std::vector<double>& out_error) {
    buf_.insert(buf_.end(), in.begin(), in.end());
    const std::size_t span = static_cast<std::size_t>(taps_per_branch_);

    if (!acquired_) {
        if (buf_.size() < acq_samples_) return;
        acquire_initial_timing();
        acquired_ = true;
    }

    while (idx_ + span + 1 <= buf_.size()) {
        while (k_ >= nfilts_) {
            k_ -= nfilts_;
            ++idx_;
        }
        while (k_ < 0.0) {
            k_ += nfilts_;
            --idx_;
        }
        if (idx_ + span + 1 > buf_.size()) break;

        const int fi = std::clamp(static_cast<int>(k_), 0, nfilts_ - 1);
        cplx y{0.0, 0.0};
        cplx dy{0.0, 0.0};
        const std::size_t base = idx_ + span - 1;
        for (int j = 0; j < taps_per_branch_; ++j) {
            const cplx x = buf_[base - j];
            y += branches_[fi][j] * x;
            dy += dbranches_[fi][j] * x;
        }
        const double err = clip1(y.real() * dy.real() + y.imag() * dy.imag());

        out_symbols.push_back(y);
        out_error.push_back(err);

        rate_ = std::clamp(rate_ + beta_ * err, -max_dev_, max_dev_);
        k_ += rate_ + alpha_ * err;
        idx_ += sps_;
    }

    // Keep only what later symbols can still reach.
    if (idx_ > span + 4) {
        const std::size_t drop = idx_ - (span + 4);
        buf_.erase(buf_.begin(), buf_.begin() + drop);
        idx_ -= drop;
    }
}

CmaEqualizer::CmaEqualizer(int num_taps, double step, double modulus)
    : step_(step), modulus_(modulus) {
    if (num_taps < 1 || num_taps % 2 == 0) throw std::invalid_argument("CmaEqualizer: num_taps must be odd >= 1");
    weights_.assign(num_taps, cplx{0.0, 0.0});
    weights_[num_taps / 2] = cplx{1.0, 0.0};  // center spike
    history_.assign(num_taps, cplx{0.0, 0.0});
}

void CmaEqualizer::process(const std::vector<cplx>& in, std::vector<cplx>& out) {
    const std::size_t ntaps = weights_.size();
    const double r2 = modulus_ * modulus_;
    for (const cplx& x : in) {
        // history_[0] is the newest sample
        for (std::size_t j = ntaps - 1; j > 0; --j) history_[j] = history_[j - 1];
        history_[0] = x;

        cplx y{0.0, 0.0};
        for (std::size_t j = 0; j < ntaps; ++j) y += weights_[j] * history_[j];

        ++samples_seen_;
        if (std::abs(y) > 10.0 * modulus_) {
            throw std::runtime_error("CmaEqualizer: diverged at sample " +
                                     std::to_string(samples_seen_ - 1));
        }
        out.push_back(y);

        const cplx e = y * (std::norm(y) - r2);
        for (std::size_t j = 0; j < ntaps; ++j) {
            weights_[j] -= step_ * e * std::conj(history_[j]);
        }
    }
}

CostasLoop::CostasLoop(double loop_bw, int order) {
    if (order != 4) throw std::invalid_argument("CostasLoop: only order 4 supported");
    loop_gains(loop_bw, alpha_, beta_);
}

void CostasLoop::process(const std::vector<cplx>& in, std::vector<cplx>& out,
                         std::vector<double>& out_phase) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (const cplx& x : in) {
        const cplx y = x * std::polar(1.0, -phase_);
        out.push_back(y);
        out_phase.push_back(unwrapped_phase_);

        const double err = clip1((y.real() > 0.0 ? 1.0 : -1.0) * y.imag() -
                                 (y.imag() > 0.0 ? 1.0 : -1.0) * y.real());
        freq_ += beta_ * err;
        freq_ = std::clamp(freq_, -1.0, 1.0);
        const double step = freq_ + alpha_ * err;
        phase_ += step;
        unwrapped_phase_ += step;
        while (phase_ > two_pi) phase_ -= two_pi;
        while (phase_ < -two_pi) phase_ += two_pi;
    }
}

IqBuffer polyphase_clock_sync(const IqBuffer& signal, const FirFilter& matched_rrc,
                              const SyncConfig& cfg, int sps) {
    cfg.validate();
    PolyphaseClockSync pfb(matched_rrc, sps, cfg.pfb_num_branches, cfg.pfb_loop_bw);
    if (signal.size() < static_cast<std::size_t>(pfb.taps_per_branch())) {
        throw std::invalid_argument("polyphase_clock_sync: input shorter than one filter span");
    }
    IqBuffer out;
    out.sample_rate_hz = signal.sample_rate_hz / sps;
    std::vector<double> err;
    pfb.process(signal.samples, out.samples, err);
    return out;
}

IqBuffer cma_equalize(const IqBuffer& symbols, const SyncConfig& cfg) {
    cfg.validate();
    CmaEqualizer eq(cfg.cma_num_taps, cfg.cma_step, cfg.cma_modulus);
    IqBuffer out;
    out.sample_rate_hz = symbols.sample_rate_hz;
    eq.process(symbols.samples, out.samples);
    return out;
}

SyncedSymbols costas_loop(const IqBuffer& symbols, const SyncConfig& cfg) {
    cfg.validate();
    CostasLoop loop(cfg.costas_loop_bw, cfg.costas_order);
    SyncedSymbols out;
    loop.process(symbols.samples, out.symbols, out.phase_error);
    out.timing_error.assign(out.symbols.size(), 0.0);
    return out;
}

BitStream hard_decode(const SyncedSymbols& symbols) {
    SymbolStream s;
    s.symbols = symbols.symbols;
    return demap_qpsk(s);
}

ReceiverOutput run_receiver(const IqBuffer& signal, const FirFilter& lpf,
                            const FirFilter& matched_rrc, const SyncConfig& cfg, int sps) {
    cfg.validate();
    IqBuffer filtered = filter(signal, lpf);

    PolyphaseClockSync pfb(matched_rrc, sps, cfg.pfb_num_branches, cfg.pfb_loop_bw);
    if (filtered.size() < static_cast<std::size_t>(pfb.taps_per_branch())) {
        throw std::invalid_argument("run_receiver: input shorter than one filter span");
    }
    std::vector<cplx> timed;
    std::vector<double> timing_err;
    pfb.process(filtered.samples, timed, timing_err);

    CmaEqualizer eq(cfg.cma_num_taps, cfg.cma_step, cfg.cma_modulus);
    std::vector<cplx> equalized;
    eq.process(timed, equalized);

    CostasLoop costas(cfg.costas_loop_bw, cfg.costas_order);
    ReceiverOutput out;
    costas.process(equalized, out.synced.symbols, out.synced.phase_error);
    out.synced.timing_error = std::move(timing_err);

    out.bits = hard_decode(out.synced);
    return out;
}

}  // namespace qpsk
