#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "michscan/error.hpp"

namespace michscan {

/// Labelled half-open sample range [start, end) inside a trace, used to
/// delimit per-layer activity.
struct Marker {
    std::string label;
    std::size_t start = 0;
    std::size_t end = 0;

    friend bool operator==(const Marker&, const Marker&) = default;
};

/// A uniformly sampled voltage-drop waveform plus provenance metadata.
/// Immutable by convention: operations return new traces.
struct Trace {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;
    std::vector<Marker> markers;
    std::map<std::string, std::string> meta;

    friend bool operator==(const Trace&, const Trace&) = default;
};

inline void validate(const Trace& trace) {
    if (trace.samples.empty())
        throw InvalidArgument("trace has no samples");
    if (!(trace.sample_rate_hz > 0.0))
        throw InvalidArgument("trace sample rate must be positive");
    for (double v : trace.samples)
        if (!std::isfinite(v))
            throw InvalidArgument("trace contains a non-finite sample");
    for (const Marker& m : trace.markers) {
        if (m.start >= m.end || m.end > trace.samples.size())
            throw InvalidArgument("marker '" + m.label + "' out of range");
    }
}

/// A set of traces captured under one condition. All members share the same
/// length and sample rate.
struct TraceSet {
    std::vector<Trace> traces;

    std::size_t size() const { return traces.size(); }
    std::size_t common_length() const { return traces.empty() ? 0 : traces.front().samples.size(); }
    double sample_rate_hz() const { return traces.empty() ? 0.0 : traces.front().sample_rate_hz; }

    friend bool operator==(const TraceSet&, const TraceSet&) = default;
};

inline void validate(const TraceSet& set) {
    if (set.traces.empty())
        throw InvalidArgument("trace set is empty");
    const std::size_t len = set.common_length();
    const double rate = set.sample_rate_hz();
    for (const Trace& t : set.traces) {
        validate(t);
        if (t.samples.size() != len)
            throw InvalidArgument("trace set members have differing lengths");
        if (t.sample_rate_hz != rate)
            throw InvalidArgument("trace set members have differing sample rates");
    }
}

/// Per-sample arithmetic mean over the set. Markers and metadata are
/// dropped; length and sample rate are preserved.
inline Trace average_traces(const TraceSet& set) {
    validate(set);
    const std::size_t len = set.common_length();
    Trace out;
    out.sample_rate_hz = set.sample_rate_hz();
    out.samples.assign(len, 0.0);
    for (const Trace& t : set.traces)
        for (std::size_t i = 0; i < len; ++i)
            out.samples[i] += t.samples[i];
    const double inv = 1.0 / double(set.size());
    for (double& v : out.samples)
        v *= inv;
    return out;
}

/// Maps each sample to the nearest of 2^adc_bits uniformly spaced levels
/// spanning [0, full_scale_volts], ties rounding half-up, then back to volts.
inline Trace quantize(const Trace& trace, int adc_bits, double full_scale_volts) {
    validate(trace);
    if (adc_bits < 1 || adc_bits > 24)
        throw InvalidArgument("adc_bits must be in [1, 24]");
    if (!(full_scale_volts > 0.0))
        throw InvalidArgument("full scale must be positive");

    const double levels = double((1u << adc_bits) - 1u);
    Trace out = trace;
    for (double& v : out.samples) {
        if (v < 0.0 || v > full_scale_volts)
            throw InvalidArgument("sample outside [0, full_scale]");
        const double code = std::floor(v / full_scale_volts * levels + 0.5);
        v = code * full_scale_volts / levels;
    }
    return out;
}

/// Returns the sub-trace [start, end) of the marker with the given label.
/// Sample rate and metadata are inherited; markers are not.
inline Trace extract_segment(const Trace& trace, const std::string& label) {
    validate(trace);
    for (const Marker& m : trace.markers) {
        if (m.label == label) {
            Trace out;
            out.samples.assign(trace.samples.begin() + std::ptrdiff_t(m.start),
                               trace.samples.begin() + std::ptrdiff_t(m.end));
            out.sample_rate_hz = trace.sample_rate_hz;
            out.meta = trace.meta;
            return out;
        }
    }
    throw InvalidArgument("no marker labelled '" + label + "'");
}

} // namespace michscan
