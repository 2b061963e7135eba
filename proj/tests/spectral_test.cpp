#include "michscan/spectral.hpp"
#include "michscan/rng.hpp"

#include "oracles.hpp"

#include "gtest/gtest.h"

using namespace michscan;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Trace tone_trace(std::size_t n, double fs, double f, double amplitude, double dc = 0.0) {
    Trace t;
    t.sample_rate_hz = fs;
    t.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        t.samples[i] = dc + amplitude * std::sin(kTwoPi * f * double(i) / fs);
    return t;
}

} // namespace

TEST(Spectrum, ConstantTraceHasOnlyDc) {
    Trace t;
    t.sample_rate_hz = 1000.0;
    t.samples.assign(64, 2.5);
    const Spectrum spec = mean_magnitude_spectrum(TraceSet{{t}});
    ASSERT_EQ(spec.magnitudes.size(), 33u);
    EXPECT_NEAR(spec.magnitudes[0], 2.5, 1e-12);
    for (std::size_t k = 1; k < spec.magnitudes.size(); ++k)
        EXPECT_LE(spec.magnitudes[k], 1e-9 * 2.5);
    EXPECT_DOUBLE_EQ(spec.bin_hz, 1000.0 / 64.0);
}

TEST(Spectrum, BinAlignedSinusoidPeaksAtItsBin) {
    const std::size_t n = 128;
    const double fs = 1000.0;
    const double f = 7.0 * fs / double(n);
    const Trace t = tone_trace(n, fs, f, 1.0);
    const Spectrum spec = mean_magnitude_spectrum(TraceSet{{t}});
    std::size_t best = 1;
    for (std::size_t k = 1; k < spec.magnitudes.size(); ++k)
        if (spec.magnitudes[k] > spec.magnitudes[best])
            best = k;
    EXPECT_EQ(best, 7u);
    EXPECT_NEAR(spec.magnitudes[7], 0.5, 1e-9); // amplitude/2 under 1/n scaling
}

TEST(Spectrum, DcBinEqualsMeanOfSignal) {
    Rng rng(5);
    Trace t;
    t.sample_rate_hz = 500.0;
    double sum = 0.0;
    for (int i = 0; i < 101; ++i) { // odd length exercises the Bluestein path
        t.samples.push_back(rng.uniform(0.0, 2.0));
        sum += t.samples.back();
    }
    const Spectrum spec = mean_magnitude_spectrum(TraceSet{{t}});
    EXPECT_NEAR(spec.magnitudes[0], sum / 101.0, 1e-12);
}

TEST(Spectrum, MatchesDirectDftOnArbitraryLengths) {
    Rng rng(17);
    for (std::size_t n : {37u, 256u, 1000u}) {
        Trace t;
        t.sample_rate_hz = 2e6;
        for (std::size_t i = 0; i < n; ++i)
            t.samples.push_back(rng.uniform(-1.0, 1.0));
        const Spectrum spec = mean_magnitude_spectrum(TraceSet{{t}});
        const std::vector<double> expected = oracle::direct_dft_magnitudes(t.samples);
        ASSERT_EQ(spec.magnitudes.size(), expected.size());
        for (std::size_t k = 0; k < expected.size(); ++k)
            EXPECT_NEAR(spec.magnitudes[k], expected[k], 1e-9);
    }
}

TEST(DetectTarget, FindsCarrierNextToDc) {
    const std::size_t n = 4000;
    const double fs = 2e6;
    const Trace t = tone_trace(n, fs, 225e3, 0.02, 0.35);
    const Spectrum spec = mean_magnitude_spectrum(TraceSet{{t}});
    const double f = detect_target_frequency(spec, 1000.0);
    EXPECT_NEAR(f, 225e3, spec.bin_hz);
}

TEST(DetectTarget, ConstantTraceIsAnError) {
    Trace t;
    t.sample_rate_hz = 1000.0;
    t.samples.assign(256, 1.0);
    const Spectrum spec = mean_magnitude_spectrum(TraceSet{{t}});
    EXPECT_THROW(detect_target_frequency(spec, 10.0), DegenerateInput);
}

TEST(DetectTarget, TwoTonesPickTheStronger) {
    const std::size_t n = 2000;
    const double fs = 2e6;
    Trace t = tone_trace(n, fs, 100e3, 1.0);
    const Trace weak = tone_trace(n, fs, 300e3, 0.5);
    for (std::size_t i = 0; i < n; ++i)
        t.samples[i] += weak.samples[i];

    const Spectrum spec = mean_magnitude_spectrum(TraceSet{{t}});
    EXPECT_NEAR(detect_target_frequency(spec, 1000.0), 100e3, spec.bin_hz);

    // Cross-check the argmax against the direct DFT.
    const std::vector<double> direct = oracle::direct_dft_magnitudes(t.samples);
    std::size_t best = 2;
    for (std::size_t k = 2; k < direct.size(); ++k)
        if (direct[k] > direct[best])
            best = k;
    EXPECT_EQ(double(best) * spec.bin_hz, 100e3);
}

TEST(DetectTarget, InvariantUnderPositiveScaling) {
    Rng rng(23);
    TraceSet set;
    for (int i = 0; i < 4; ++i) {
        Trace t = tone_trace(1500, 2e6, 180e3, 0.05, 0.3);
        for (double& v : t.samples)
            v += 0.01 * rng.gaussian();
        set.traces.push_back(std::move(t));
    }
    const double base = detect_target_frequency(mean_magnitude_spectrum(set), 1000.0);
    for (Trace& t : set.traces)
        for (double& v : t.samples)
            v *= 37.5;
    const double scaled = detect_target_frequency(mean_magnitude_spectrum(set), 1000.0);
    EXPECT_EQ(base, scaled);
}

TEST(DetectTarget, ExclusionBeyondSpectrumIsAnError) {
    const Trace t = tone_trace(256, 1000.0, 100.0, 1.0);
    const Spectrum spec = mean_magnitude_spectrum(TraceSet{{t}});
    EXPECT_THROW(detect_target_frequency(spec, 600.0), InvalidArgument);
}
