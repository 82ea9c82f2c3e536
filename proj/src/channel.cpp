#include "qpsk/channel.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace qpsk {

void ChannelConfig::validate() const {
    if (delay_samples > max_delay_samples) {
        throw std::invalid_argument("ChannelConfig: delay_samples exceeds cap of " +
                                    std::to_string(max_delay_samples));
    }
    if (!(timing_offset_samples >= 0.0 && timing_offset_samples < 1.0)) {
        throw std::invalid_argument("ChannelConfig: timing_offset_samples must be in [0,1)");
    }
    if (std::isnan(snr_db)) throw std::invalid_argument("ChannelConfig: snr_db is NaN");
}

double snr_from_gain(const SnrModel& model) {
    return model.p_r_db + model.g_r_db - model.n_floor_db;
}

IqBuffer apply_channel(const IqBuffer& signal, const ChannelConfig& cfg) {
    if (signal.empty()) throw std::invalid_argument("apply_channel: empty signal");
    cfg.validate();

    const double fs = signal.sample_rate_hz;
    const std::size_t n_in = signal.size();

    // Fractional timing shift by linear interpolation.
    const double tau = cfg.timing_offset_samples;
    std::vector<cplx> shifted;
    if (tau == 0.0) {
        shifted = signal.samples;
    } else {
        shifted.resize(n_in - 1);
        for (std::size_t i = 0; i + 1 < n_in; ++i) {
            shifted[i] = (1.0 - tau) * signal.samples[i] + tau * signal.samples[i + 1];
        }
    }

    // Carrier offset and static phase.
    const double w = 2.0 * std::numbers::pi * cfg.cfo_hz / fs;
    for (std::size_t i = 0; i < shifted.size(); ++i) {
        shifted[i] *= std::polar(1.0, w * static_cast<double>(i) + cfg.phase_rad);
    }

    double sig_power = 0.0;
    for (const cplx& s : shifted) sig_power += std::norm(s);
    sig_power /= shifted.size();

    IqBuffer out;
    out.sample_rate_hz = fs;
    out.samples.reserve(cfg.lockin_prefix_samples + cfg.delay_samples + shifted.size());

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Garbage prefix at signal-level power, emulating pre-lock output.
    const double prefix_sigma = std::sqrt(sig_power / 2.0);
    for (std::size_t i = 0; i < cfg.lockin_prefix_samples; ++i) {
        out.samples.emplace_back(prefix_sigma * gauss(rng), prefix_sigma * gauss(rng));
    }
    out.samples.insert(out.samples.end(), cfg.delay_samples, cplx{0.0, 0.0});
    out.samples.insert(out.samples.end(), shifted.begin(), shifted.end());

    // AWGN over everything after the prefix, calibrated to the signal power.
    if (std::isfinite(cfg.snr_db)) {
        const double noise_power = sig_power * std::pow(10.0, -cfg.snr_db / 10.0);
        const double sigma = std::sqrt(noise_power / 2.0);
        for (std::size_t i = cfg.lockin_prefix_samples; i < out.samples.size(); ++i) {
            out.samples[i] += cplx{sigma * gauss(rng), sigma * gauss(rng)};
        }
    }
    return out;
}

GenieReference genie_reference(const ChannelConfig& cfg) {
    return GenieReference{
        .delay_samples = cfg.delay_samples,
        .lockin_prefix_samples = cfg.lockin_prefix_samples,
        .cfo_hz = cfg.cfo_hz,
        .phase_rad = cfg.phase_rad,
        .timing_offset_samples = cfg.timing_offset_samples,
        .seed = cfg.seed,
    };
}

}  // namespace qpsk
