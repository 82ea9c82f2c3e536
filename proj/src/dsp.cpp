#include "qpsk/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace qpsk {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSpectrumFloorDb = -300.0;

// Closed-form RRC impulse response, t in symbol periods, unit symbol rate.
double rrc_impulse(double t, double beta) {
    const double eps = 1e-9;
    if (std::abs(t) < eps) {
        return 1.0 + beta * (4.0 / kPi - 1.0);
    }
    const double singular = 1.0 / (4.0 * beta);
    if (std::abs(std::abs(t) - singular) < eps) {
        const double a = (1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta));
        const double b = (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta));
        return beta / std::numbers::sqrt2 * (a + b);
    }
    const double num = std::sin(kPi * t * (1.0 - beta)) +
                       4.0 * beta * t * std::cos(kPi * t * (1.0 + beta));
    const double den = kPi * t * (1.0 - 16.0 * beta * beta * t * t);
    return num / den;
}

double bessel_i0(double x) {
    // Power series; converges fast for the beta range Kaiser uses.
    double sum = 1.0;
    double term = 1.0;
    const double half_x = x / 2.0;
    for (int k = 1; k < 64; ++k) {
        term *= (half_x / k) * (half_x / k);
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return sum;
}

}  // namespace

FirFilter design_rrc(int samples_per_symbol, double excess_bw, int num_taps) {
    if (samples_per_symbol < 2) throw std::invalid_argument("design_rrc: samples_per_symbol must be >= 2");
    if (!(excess_bw > 0.0 && excess_bw <= 1.0)) throw std::invalid_argument("design_rrc: excess_bw must be in (0,1]");
    if (num_taps % 2 == 0) throw std::invalid_argument("design_rrc: num_taps must be odd");
    if (num_taps < samples_per_symbol + 1) throw std::invalid_argument("design_rrc: num_taps too small");

    FirFilter f;
    f.description = "rrc";
    f.rrc_excess_bw = excess_bw;
    f.rrc_sps = samples_per_symbol;
    f.taps.resize(num_taps);
    const int mid = num_taps / 2;
    for (int i = 0; i < num_taps; ++i) {
        const double t = static_cast<double>(i - mid) / samples_per_symbol;
        f.taps[i] = rrc_impulse(t, excess_bw);
    }
    const double energy = std::inner_product(f.taps.begin(), f.taps.end(), f.taps.begin(), 0.0);
    const double scale = 1.0 / std::sqrt(energy);
    for (double& tap : f.taps) tap *= scale;
    return f;
}

FirFilter design_lowpass(double sample_rate_hz, double cutoff_hz, double transition_hz,
                         double stopband_atten_db, std::size_t max_taps) {
    if (!(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0)) {
        throw std::invalid_argument("design_lowpass: cutoff must be in (0, sample_rate/2)");
    }
    if (transition_hz <= 0.0) throw std::invalid_argument("design_lowpass: transition_hz must be > 0");

    const double atten = stopband_atten_db;
    double beta = 0.0;
    if (atten > 50.0) {
        beta = 0.1102 * (atten - 8.7);
    } else if (atten >= 21.0) {
        beta = 0.5842 * std::pow(atten - 21.0, 0.4) + 0.07886 * (atten - 21.0);
    }
    const double delta_w = 2.0 * kPi * transition_hz / sample_rate_hz;
    std::size_t n = static_cast<std::size_t>(std::ceil((atten - 7.95) / (2.285 * delta_w))) + 1;
    if (n % 2 == 0) ++n;
    if (n > max_taps) {
        throw std::invalid_argument("design_lowpass: required " + std::to_string(n) +
                                    " taps exceeds cap of " + std::to_string(max_taps));
    }

    FirFilter f;
    f.description = "lowpass";
    f.taps.resize(n);
    const double fc = cutoff_hz / sample_rate_hz;  // cycles/sample
    const int mid = static_cast<int>(n) / 2;
    for (int i = 0; i < static_cast<int>(n); ++i) {
        const int m = i - mid;
        const double sinc = (m == 0) ? 2.0 * fc : std::sin(2.0 * kPi * fc * m) / (kPi * m);
        const double r = static_cast<double>(m) / mid;
        const double w = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / bessel_i0(beta);
        f.taps[i] = sinc * w;
    }
    const double dc = std::accumulate(f.taps.begin(), f.taps.end(), 0.0);
    for (double& tap : f.taps) tap /= dc;
    return f;
}

IqBuffer filter(const IqBuffer& signal, const FirFilter& f) {
    if (signal.empty()) throw std::invalid_argument("filter: empty signal");
    if (f.taps.empty()) throw std::invalid_argument("filter: empty filter");

    IqBuffer out;
    out.sample_rate_hz = signal.sample_rate_hz;
    const std::size_t n = signal.size();
    const std::size_t m = f.taps.size();
    out.samples.assign(n, cplx{0.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) {
        cplx acc{0.0, 0.0};
        const std::size_t kmax = std::min(m, i + 1);
        for (std::size_t k = 0; k < kmax; ++k) {
            acc += f.taps[k] * signal.samples[i - k];
        }
        out.samples[i] = acc;
    }
    return out;
}

void fft_inplace(std::vector<cplx>& data) {
    const std::size_t n = data.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");

    // Bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const cplx wlen{std::cos(ang), std::sin(ang)};
        for (std::size_t i = 0; i < n; i += len) {
            cplx w{1.0, 0.0};
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = data[i + k];
                const cplx v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

SpectrumEstimate estimate_spectrum(const IqBuffer& signal, std::size_t segment_len,
                                   double overlap_fraction) {
    if (segment_len == 0 || (segment_len & (segment_len - 1)) != 0) {
        throw std::invalid_argument("estimate_spectrum: segment_len must be a power of two");
    }
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
        throw std::invalid_argument("estimate_spectrum: overlap_fraction must be in [0,1)");
    }
    if (signal.size() < segment_len) {
        throw std::invalid_argument("estimate_spectrum: signal shorter than one segment");
    }

    std::vector<double> window(segment_len);
    double window_sum = 0.0;
    for (std::size_t i = 0; i < segment_len; ++i) {
        window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / (segment_len - 1)));
        window_sum += window[i];
    }
    // Coherent-gain normalization: a full-scale tone reads ~0 dB at its bin.
    const double norm = 1.0 / (window_sum * window_sum);

    const std::size_t hop = std::max<std::size_t>(
        1, static_cast<std::size_t>(segment_len * (1.0 - overlap_fraction)));
    std::vector<double> psd(segment_len, 0.0);
    std::vector<cplx> seg(segment_len);
    std::size_t nseg = 0;
    for (std::size_t start = 0; start + segment_len <= signal.size(); start += hop) {
        for (std::size_t i = 0; i < segment_len; ++i) {
            seg[i] = signal.samples[start + i] * window[i];
        }
        fft_inplace(seg);
        for (std::size_t i = 0; i < segment_len; ++i) {
            psd[i] += std::norm(seg[i]) * norm;
        }
        ++nseg;
    }

    SpectrumEstimate est;
    est.rbw_hz = signal.sample_rate_hz / static_cast<double>(segment_len);
    est.freqs_hz.resize(segment_len);
    est.power_db.resize(segment_len);
    const std::size_t half = segment_len / 2;
    for (std::size_t i = 0; i < segment_len; ++i) {
        // fftshift: output bin i maps to FFT bin (i + half) mod N
        const std::size_t src = (i + half) % segment_len;
        est.freqs_hz[i] = (static_cast<double>(i) - static_cast<double>(half)) * est.rbw_hz;
        const double p = psd[src] / nseg;
        est.power_db[i] = p > 0.0 ? std::max(kSpectrumFloorDb, 10.0 * std::log10(p))
                                  : kSpectrumFloorDb;
    }
    return est;
}

double mean_power_db(const IqBuffer& signal) {
    if (signal.empty()) throw std::invalid_argument("mean_power_db: empty signal");
    double acc = 0.0;
    for (const cplx& s : signal.samples) acc += std::norm(s);
    return 10.0 * std::log10(acc / signal.size());
}

}  // namespace qpsk
