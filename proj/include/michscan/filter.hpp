#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "michscan/error.hpp"
#include "michscan/trace.hpp"

namespace michscan {

/// One second-order section, denominator normalized to a0 = 1.
struct Biquad {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

/// Band-pass filter definition: design parameters plus the realized
/// second-order sections. Only the design parameters are persisted;
/// coefficients are re-derived on load.
struct FilterSpec {
    double center_hz = 0.0;
    double bandwidth_fraction = 0.0;
    int order = 0;
    double sample_rate_hz = 0.0;
    std::vector<Biquad> sections;
    std::size_t settling_length = 0; // samples until |h| < 1e-8 * peak |h|
};

namespace detail {

inline void run_cascade(const std::vector<Biquad>& sections, std::vector<double>& x) {
    for (const Biquad& s : sections) {
        double z1 = 0.0, z2 = 0.0;
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

inline std::complex<double> cascade_response(const std::vector<Biquad>& sections, double omega) {
    const std::complex<double> z1 = std::polar(1.0, -omega);
    const std::complex<double> z2 = z1 * z1;
    std::complex<double> h(1.0, 0.0);
    for (const Biquad& s : sections)
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    return h;
}

inline std::size_t measure_settling(const std::vector<Biquad>& sections) {
    double r_max = 0.0;
    for (const Biquad& s : sections) {
        // |roots| of z^2 + a1 z + a2: product of magnitudes is |a2|.
        r_max = std::max(r_max, std::sqrt(std::abs(s.a2)));
    }
    std::size_t horizon = 1u << 22;
    if (r_max > 0.0 && r_max < 1.0) {
        const double est = std::log(1e-10) / std::log(r_max);
        if (est < double(horizon))
            horizon = std::size_t(est) + 64;
    }

    std::vector<double> h(horizon, 0.0);
    h[0] = 1.0;
    run_cascade(sections, h);

    double peak = 0.0;
    for (double v : h)
        peak = std::max(peak, std::abs(v));
    const double floor = 1e-8 * peak;
    std::size_t last = 0;
    for (std::size_t i = 0; i < h.size(); ++i)
        if (std::abs(h[i]) >= floor)
            last = i;
    return last + 1;
}

} // namespace detail

/// Designs a digital Butterworth band-pass with -3 dB points at
/// center*(1 -/+ bandwidth_fraction): analog prototype, low-pass to band-pass
/// transform, bilinear transform with band-edge prewarping, second-order
/// sections. Gain is normalized to exactly 1 at center_hz (single pass).
inline FilterSpec design_bandpass(double center_hz, double bandwidth_fraction, int order,
                                  double sample_rate_hz) {
    if (!(center_hz > 0.0) || !(bandwidth_fraction > 0.0) || !(sample_rate_hz > 0.0))
        throw InvalidArgument("filter parameters must be positive");
    if (order < 1)
        throw InvalidArgument("filter order must be >= 1");
    const double f_lo = center_hz * (1.0 - bandwidth_fraction);
    const double f_hi = center_hz * (1.0 + bandwidth_fraction);
    const double nyquist = sample_rate_hz / 2.0;
    if (!(f_lo > 0.0) || !(f_hi < nyquist))
        throw InvalidArgument("passband must lie strictly inside (0, Nyquist)");

    constexpr double pi = 3.141592653589793238462643383279502884;
    const double w1 = std::tan(pi * f_lo / sample_rate_hz);
    const double w2 = std::tan(pi * f_hi / sample_rate_hz);
    const double bw = w2 - w1;
    const double w0sq = w1 * w2;

    using cplx = std::complex<double>;
    const auto bilinear = [](cplx s) { return (1.0 + s) / (1.0 - s); };
    const auto bp_poles = [&](cplx lp_pole) {
        const cplx pb = lp_pole * bw;
        const cplx d = std::sqrt(pb * pb - 4.0 * w0sq);
        return std::pair<cplx, cplx>{(pb + d) / 2.0, (pb - d) / 2.0};
    };
    const auto section_from = [](cplx za, cplx zb) {
        Biquad s;
        s.b0 = 1.0;
        s.b1 = 0.0;
        s.b2 = -1.0;
        s.a1 = -(za + zb).real();
        s.a2 = (za * zb).real();
        return s;
    };

    std::vector<Biquad> sections;
    for (int k = 0; k < order; ++k) {
        const double angle = pi * double(2 * k + order + 1) / double(2 * order);
        const cplx p(std::cos(angle), std::sin(angle));
        if (p.imag() > 1e-12) {
            const auto [s1, s2] = bp_poles(p);
            const cplx za = bilinear(s1);
            const cplx zb = bilinear(s2);
            sections.push_back(section_from(za, std::conj(za)));
            sections.push_back(section_from(zb, std::conj(zb)));
        } else if (std::abs(p.imag()) <= 1e-12) {
            const auto [s1, s2] = bp_poles(p);
            sections.push_back(section_from(bilinear(s1), bilinear(s2)));
        }
        // Lower-half poles are covered by their conjugates above.
    }

    for (const Biquad& s : sections) {
        // Stable iff both roots of z^2 + a1 z + a2 are inside the unit circle.
        if (!(std::abs(s.a2) < 1.0) || !(std::abs(s.a1) < 1.0 + s.a2))
            throw Error("band-pass realization is unstable");
    }

    const double omega_c = 2.0 * pi * center_hz / sample_rate_hz;
    const double raw_gain = std::abs(detail::cascade_response(sections, omega_c));
    if (!(raw_gain > 0.0) || !std::isfinite(raw_gain))
        throw Error("band-pass realization is numerically singular");
    const double per_section = std::pow(1.0 / raw_gain, 1.0 / double(sections.size()));
    for (Biquad& s : sections) {
        s.b0 *= per_section;
        s.b2 *= per_section;
    }

    FilterSpec spec;
    spec.center_hz = center_hz;
    spec.bandwidth_fraction = bandwidth_fraction;
    spec.order = order;
    spec.sample_rate_hz = sample_rate_hz;
    spec.sections = std::move(sections);
    spec.settling_length = detail::measure_settling(spec.sections);
    return spec;
}

/// Single-pass magnitude response at frequency f (Hz).
inline double magnitude_response(const FilterSpec& filter, double f_hz) {
    constexpr double pi = 3.141592653589793238462643383279502884;
    return std::abs(detail::cascade_response(filter.sections, 2.0 * pi * f_hz / filter.sample_rate_hz));
}

/// Forward-backward filter application: squared magnitude response, zero
/// phase. Edges are reflect-padded by min(3 * settling_length, length - 1)
/// and trimmed, so output length equals input length. Markers and metadata
/// are preserved.
inline Trace apply_zero_phase(const FilterSpec& filter, const Trace& trace) {
    validate(trace);
    if (filter.sections.empty())
        throw InvalidArgument("filter has no realized sections");
    if (std::abs(trace.sample_rate_hz - filter.sample_rate_hz) >
        1e-9 * std::max(trace.sample_rate_hz, filter.sample_rate_hz))
        throw InvalidArgument("trace sample rate does not match filter design rate");

    const std::size_t n = trace.samples.size();
    const std::size_t min_len = 3 * (2 * filter.sections.size() + 1);
    if (n < min_len)
        throw InvalidArgument("trace too short for zero-phase edge handling");

    const std::size_t pad = std::min<std::size_t>(3 * filter.settling_length, n - 1);
    std::vector<double> work(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i)
        work[i] = trace.samples[pad - i];
    for (std::size_t i = 0; i < n; ++i)
        work[pad + i] = trace.samples[i];
    for (std::size_t i = 0; i < pad; ++i)
        work[pad + n + i] = trace.samples[n - 2 - i];

    detail::run_cascade(filter.sections, work);
    std::reverse(work.begin(), work.end());
    detail::run_cascade(filter.sections, work);
    std::reverse(work.begin(), work.end());

    Trace out = trace;
    out.samples.assign(work.begin() + std::ptrdiff_t(pad), work.begin() + std::ptrdiff_t(pad + n));
    return out;
}

} // namespace michscan
