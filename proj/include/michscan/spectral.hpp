#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "michscan/error.hpp"
#include "michscan/parallel.hpp"
#include "michscan/trace.hpp"

namespace michscan {

namespace detail {

/// In-place iterative radix-2 FFT. sign = -1 forward, +1 inverse (unscaled).
inline void fft_pow2(std::vector<std::complex<double>>& data, int sign) {
    const std::size_t n = data.size();
    if (n < 2)
        return;

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(data[i], data[j]);
    }

    constexpr double pi = 3.141592653589793238462643383279502884;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = double(sign) * 2.0 * pi / double(len);
        const std::complex<double> wstep(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = data[i + k];
                const auto v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
                w *= wstep;
            }
        }
    }
}

/// Arbitrary-length DFT via Bluestein's chirp-z algorithm. The plan is
/// reusable across traces of the same length.
class DftPlan {
  public:
    explicit DftPlan(std::size_t n) : n_(n) {
        m_ = 1;
        while (m_ < 2 * n_ - 1)
            m_ <<= 1;

        constexpr double pi = 3.141592653589793238462643383279502884;
        chirp_.resize(n_);
        for (std::size_t k = 0; k < n_; ++k) {
            // k^2 mod 2n keeps the trig argument small for long traces.
            const std::uint64_t k2 = (std::uint64_t(k) * k) % (2 * n_);
            const double angle = pi * double(k2) / double(n_);
            chirp_[k] = std::complex<double>(std::cos(angle), -std::sin(angle));
        }

        kernel_fft_.assign(m_, {0.0, 0.0});
        kernel_fft_[0] = std::conj(chirp_[0]);
        for (std::size_t k = 1; k < n_; ++k) {
            kernel_fft_[k] = std::conj(chirp_[k]);
            kernel_fft_[m_ - k] = std::conj(chirp_[k]);
        }
        fft_pow2(kernel_fft_, -1);
    }

    std::size_t length() const { return n_; }

    /// Forward DFT of a real sequence of length n.
    std::vector<std::complex<double>> forward(const std::vector<double>& x) const {
        if (x.size() != n_)
            throw InvalidArgument("DftPlan length mismatch");
        std::vector<std::complex<double>> work(m_, {0.0, 0.0});
        for (std::size_t k = 0; k < n_; ++k)
            work[k] = x[k] * chirp_[k];
        fft_pow2(work, -1);
        for (std::size_t k = 0; k < m_; ++k)
            work[k] *= kernel_fft_[k];
        fft_pow2(work, +1);
        const double scale = 1.0 / double(m_);
        std::vector<std::complex<double>> out(n_);
        for (std::size_t k = 0; k < n_; ++k)
            out[k] = work[k] * scale * chirp_[k];
        return out;
    }

  private:
    std::size_t n_;
    std::size_t m_ = 1;
    std::vector<std::complex<double>> chirp_;
    std::vector<std::complex<double>> kernel_fft_;
};

} // namespace detail

/// One-sided magnitude spectrum. Magnitudes are scaled by 1/n, so the DC bin
/// equals |mean| of the signal.
struct Spectrum {
    std::vector<double> magnitudes;
    double bin_hz = 0.0;
    double sample_rate_hz = 0.0;
    std::size_t transform_length = 0;
};

/// Per-bin arithmetic mean of the single-trace magnitude spectra.
inline Spectrum mean_magnitude_spectrum(const TraceSet& set) {
    validate(set);
    const std::size_t n = set.common_length();
    const std::size_t bins = n / 2 + 1;
    const detail::DftPlan plan(n);

    std::vector<std::vector<double>> per_trace(set.size());
    parallel_for(set.size(), [&](std::size_t t) {
        const auto coeffs = plan.forward(set.traces[t].samples);
        std::vector<double> mags(bins);
        for (std::size_t k = 0; k < bins; ++k)
            mags[k] = std::abs(coeffs[k]) / double(n);
        per_trace[t] = std::move(mags);
    });

    Spectrum spec;
    spec.sample_rate_hz = set.sample_rate_hz();
    spec.transform_length = n;
    spec.bin_hz = spec.sample_rate_hz / double(n);
    spec.magnitudes.assign(bins, 0.0);
    for (const auto& mags : per_trace)
        for (std::size_t k = 0; k < bins; ++k)
            spec.magnitudes[k] += mags[k];
    const double inv = 1.0 / double(set.size());
    for (double& m : spec.magnitudes)
        m *= inv;
    return spec;
}

/// Center frequency of the strongest bin above dc_exclusion_hz. The DC peak
/// is the global maximum for the signals in scope, so this realizes the
/// "second-highest peak" selection. A flat candidate region is an error, not
/// a guess.
inline double detect_target_frequency(const Spectrum& spec, double dc_exclusion_hz) {
    if (spec.magnitudes.empty())
        throw InvalidArgument("empty spectrum");
    if (!(dc_exclusion_hz > 0.0))
        throw InvalidArgument("dc_exclusion_hz must be positive");

    const std::size_t first = std::size_t(std::floor(dc_exclusion_hz / spec.bin_hz)) + 1;
    if (first >= spec.magnitudes.size())
        throw InvalidArgument("dc exclusion removes every spectrum bin");

    std::size_t best = first;
    double lo = spec.magnitudes[first];
    for (std::size_t k = first; k < spec.magnitudes.size(); ++k) {
        if (spec.magnitudes[k] > spec.magnitudes[best])
            best = k;
        lo = std::min(lo, spec.magnitudes[k]);
    }

    const double global_max = *std::max_element(spec.magnitudes.begin(), spec.magnitudes.end());
    if (spec.magnitudes[best] - lo <= 1e-9 * global_max)
        throw DegenerateInput("spectrum has no distinct peak above the DC exclusion band");

    return double(best) * spec.bin_hz;
}

} // namespace michscan
