#pragma once

#include <complex>
#include <string>
#include <vector>

namespace qpsk {

using cplx = std::complex<double>;

// Complex baseband sample stream. The signal at every pipeline stage.
struct IqBuffer {
    std::vector<cplx> samples;
    double sample_rate_hz = 0.0;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

struct FirFilter {
    std::vector<double> taps;
    std::string description;  // "rrc" | "lowpass" | "custom"
    // Design parameters, populated by design_rrc so downstream blocks (the
    // polyphase clock sync) can re-derive the pulse at other rates.
    double rrc_excess_bw = 0.0;
    int rrc_sps = 0;

    std::size_t num_taps() const { return taps.size(); }
    // Group delay in samples, (N-1)/2.
    double group_delay() const { return (static_cast<double>(taps.size()) - 1.0) / 2.0; }
};

struct SpectrumEstimate {
    std::vector<double> freqs_hz;
    std::vector<double> power_db;  // dB relative to a full-scale tone
    double rbw_hz = 0.0;
};

// Root raised cosine taps at samples_per_symbol per symbol, normalized to
// unit energy. num_taps must be odd so the peak sits on a tap.
FirFilter design_rrc(int samples_per_symbol, double excess_bw, int num_taps);

// Kaiser-windowed sinc lowpass. The response is ~0 dB below
// cutoff - transition and <= -stopband_atten_db beyond cutoff + transition.
FirFilter design_lowpass(double sample_rate_hz, double cutoff_hz, double transition_hz,
                         double stopband_atten_db,
                         std::size_t max_taps = 32769);

// Linear convolution, output same length as input. Group delay of
// (num_taps-1)/2 samples is NOT compensated; that is the caller's job.
IqBuffer filter(const IqBuffer& signal, const FirFilter& f);

// Welch-averaged periodogram, Hann window, two-sided, centered on 0 Hz.
SpectrumEstimate estimate_spectrum(const IqBuffer& signal, std::size_t segment_len,
                                   double overlap_fraction);

// 10*log10(mean |x|^2)
double mean_power_db(const IqBuffer& signal);

// In-place radix-2 FFT, n must be a power of two. Exposed for reuse in tests.
void fft_inplace(std::vector<cplx>& data);

}  // namespace qpsk
