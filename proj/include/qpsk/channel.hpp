#pragma once

#include <cstdint>
#include <limits>

#include "qpsk/dsp.hpp"

namespace qpsk {

// Parametric impairment model standing in for the RF link:
// gain/SNR, AWGN, carrier frequency offset, static phase, fractional
// timing offset, and a large integer delay with a pre-lock noise prefix.
struct ChannelConfig {
    double snr_db = std::numeric_limits<double>::infinity();  // infinity = noise off
    double cfo_hz = 0.0;
    double phase_rad = 0.0;
    double timing_offset_samples = 0.0;  // fractional, in [0,1)
    std::size_t delay_samples = 0;
    std::size_t lockin_prefix_samples = 0;
    std::uint64_t seed = 0;
    std::size_t max_delay_samples = 600000;  // 0.3 s at 2 MHz

    void validate() const;
};

// SNR = P_R + G_R - N, all in dB.
struct SnrModel {
    double p_r_db = -64.0;    // received power with no receiver gain
    double g_r_db = 0.0;      // receiver gain
    double n_floor_db = -68.0;
};

double snr_from_gain(const SnrModel& model);

IqBuffer apply_channel(const IqBuffer& signal, const ChannelConfig& cfg);

// Ground truth for test oracles; never consumed by the receiver path.
struct GenieReference {
    std::size_t delay_samples = 0;
    std::size_t lockin_prefix_samples = 0;
    double cfo_hz = 0.0;
    double phase_rad = 0.0;
    double timing_offset_samples = 0.0;
    std::uint64_t seed = 0;

    bool operator==(const GenieReference&) const = default;
};

GenieReference genie_reference(const ChannelConfig& cfg);

}  // namespace qpsk
