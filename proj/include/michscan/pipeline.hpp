#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "michscan/error.hpp"
#include "michscan/filter.hpp"
#include "michscan/parallel.hpp"
#include "michscan/powersim.hpp"
#include "michscan/rng.hpp"
#include "michscan/spectral.hpp"
#include "michscan/stats.hpp"
#include "michscan/trace.hpp"

namespace michscan {

struct PredeployConfig {
    std::size_t n_traces = 500;
    double dc_exclusion_hz = 1000.0;
    double bandwidth_fraction = 0.01;
    int filter_order = 4;
    std::uint64_t template_selection_seed = 0;
    std::optional<std::string> layer_label; // unset: final marker if present, else whole trace

    friend bool operator==(const PredeployConfig&, const PredeployConfig&) = default;
};

/// Persisted filter design parameters; coefficients are re-derived on load
/// so bundles stay implementation-portable.
struct FilterDesign {
    double center_hz = 0.0;
    double bandwidth_fraction = 0.0;
    int order = 0;
    double sample_rate_hz = 0.0;

    friend bool operator==(const FilterDesign&, const FilterDesign&) = default;
};

/// Pre-deployment artifact: the golden template, the filter that produced
/// it, and the benign similarity sample it will be compared against.
struct TemplateBundle {
    int format_version = 1;
    std::string device_id;
    std::string test_input_id;
    std::string created_at;
    double target_frequency_hz = 0.0;
    FilterDesign filter;
    Trace golden_template; // filtered segment: samples + sample rate only
    SimilaritySample similarity_sample;
    PredeployConfig predeploy_config; // with the resolved layer label

    friend bool operator==(const TemplateBundle&, const TemplateBundle&) = default;
};

struct RuntimeConfig {
    std::size_t n_ra = 5;
    double p_threshold = 1e-5;
    std::optional<std::string> layer_label; // unset: the bundle's layer

    friend bool operator==(const RuntimeConfig&, const RuntimeConfig&) = default;
};

struct Verdict {
    double p_value = 1.0;
    double threshold = 1e-5;
    bool violation_detected = false;
    UTestResult test_result;
    SimilaritySample test_similarities;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::optional<std::string> resolve_layer_label(const TraceSet& set,
                                                      const std::optional<std::string>& requested) {
    if (requested)
        return requested;
    const auto& markers = set.traces.front().markers;
    if (!markers.empty())
        return markers.back().label; // default to the final layer
    return std::nullopt;
}

inline Trace segment_of(const Trace& trace, const std::optional<std::string>& label) {
    return label ? extract_segment(trace, *label) : trace;
}

inline std::string meta_or(const Trace& trace, const std::string& key, const std::string& fallback) {
    const auto it = trace.meta.find(key);
    return it == trace.meta.end() ? fallback : it->second;
}

} // namespace detail

/// Pre-deployment stage: detect the target frequency from the mean spectrum
/// of the benign capture set, design the band-pass filter around it, pick a
/// seeded random trace as the golden template, and correlate the remaining
/// N-1 filtered traces with it to form the similarity sample.
inline TemplateBundle predeploy(const TraceSet& benign_traces, const PredeployConfig& config) {
    validate(benign_traces);
    if (config.n_traces < 6)
        throw InvalidArgument("predeploy requires n_traces >= 6 (a template plus >= 5 similarity values)");
    if (benign_traces.size() != config.n_traces)
        throw InvalidArgument("trace set size does not match configured n_traces");

    const auto label = detail::resolve_layer_label(benign_traces, config.layer_label);

    TraceSet segments;
    segments.traces.resize(benign_traces.size());
    parallel_for(benign_traces.size(), [&](std::size_t i) {
        segments.traces[i] = detail::segment_of(benign_traces.traces[i], label);
    });

    const Spectrum spectrum = mean_magnitude_spectrum(segments);
    const double exclusion = std::max(config.dc_exclusion_hz, 2.0 * spectrum.bin_hz);
    const double target_hz = detect_target_frequency(spectrum, exclusion);

    const FilterSpec filter = design_bandpass(target_hz, config.bandwidth_fraction,
                                              config.filter_order, segments.sample_rate_hz());

    std::uint64_t seed_state = config.template_selection_seed;
    const std::size_t template_index = std::size_t(splitmix64(seed_state) % benign_traces.size());

    const Trace filtered_template = apply_zero_phase(filter, segments.traces[template_index]);

    TemplateBundle bundle;
    bundle.golden_template.samples = filtered_template.samples;
    bundle.golden_template.sample_rate_hz = filtered_template.sample_rate_hz;
    bundle.target_frequency_hz = target_hz;
    bundle.filter = FilterDesign{target_hz, config.bandwidth_fraction, config.filter_order,
                                 segments.sample_rate_hz()};
    bundle.predeploy_config = config;
    bundle.predeploy_config.layer_label = label;

    const Trace& origin = benign_traces.traces.front();
    bundle.device_id = detail::meta_or(origin, "device_id", "");
    bundle.test_input_id = detail::meta_or(origin, "input_id", "");
    bundle.created_at = detail::meta_or(origin, "created_at", "1970-01-01T00:00:00Z");

    // Similarity order follows input trace order, template excluded.
    std::vector<double> sims(benign_traces.size(), 0.0);
    parallel_for(benign_traces.size(), [&](std::size_t i) {
        if (i == template_index)
            return;
        const Trace filtered = apply_zero_phase(filter, segments.traces[i]);
        sims[i] = pearson(filtered.samples, bundle.golden_template.samples);
    });
    bundle.similarity_sample.source = SampleSource::pre_deployment;
    bundle.similarity_sample.values.reserve(benign_traces.size() - 1);
    for (std::size_t i = 0; i < sims.size(); ++i)
        if (i != template_index)
            bundle.similarity_sample.values.push_back(sims[i]);

    return bundle;
}

/// Runtime stage: filter the test traces with the bundle's re-derived
/// filter, correlate against the golden template, and test the resulting
/// similarities against the benign similarity sample.
inline Verdict runtime_check(const TemplateBundle& bundle, const TraceSet& test_traces,
                             const RuntimeConfig& config) {
    validate(test_traces);
    if (config.n_ra < 1)
        throw InvalidArgument("n_ra must be >= 1");
    if (test_traces.size() != config.n_ra)
        throw InvalidArgument("test trace count does not match configured n_ra");
    if (std::abs(test_traces.sample_rate_hz() - bundle.filter.sample_rate_hz) >
        1e-9 * std::max(test_traces.sample_rate_hz(), bundle.filter.sample_rate_hz))
        throw InvalidArgument("test traces and bundle have different sample rates");
    if (bundle.similarity_sample.values.size() < 5)
        throw InvalidArgument("bundle similarity sample is too small");

    const auto label =
        config.layer_label ? config.layer_label : bundle.predeploy_config.layer_label;

    const FilterSpec filter =
        design_bandpass(bundle.filter.center_hz, bundle.filter.bandwidth_fraction,
                        bundle.filter.order, bundle.filter.sample_rate_hz);

    std::vector<double> sims(test_traces.size(), 0.0);
    parallel_for(test_traces.size(), [&](std::size_t i) {
        const Trace segment = detail::segment_of(test_traces.traces[i], label);
        if (segment.samples.size() != bundle.golden_template.samples.size())
            throw InvalidArgument("test segment length does not match the golden template");
        const Trace filtered = apply_zero_phase(filter, segment);
        sims[i] = pearson(filtered.samples, bundle.golden_template.samples);
    });

    Verdict verdict;
    verdict.test_similarities.values = std::move(sims);
    verdict.test_similarities.source = SampleSource::runtime;
    verdict.test_result = mann_whitney(verdict.test_similarities.values,
                                       bundle.similarity_sample.values, Alternative::two_sided,
                                       Method::automatic);
    verdict.p_value = verdict.test_result.p_value;
    verdict.threshold = config.p_threshold;
    verdict.violation_detected = verdict.p_value < config.p_threshold;
    if (verdict.test_result.small_sample_warning)
        verdict.warnings.push_back("n_ra < 5: below the Mann-Whitney validity minimum");
    return verdict;
}

struct SeverityCell {
    std::string layer;
    Severity severity;
    double p_value = 1.0;
    bool violation_detected = false;
};

/// Layer-by-layer verdicts for each violation severity. Bundles must be
/// per-layer (label recorded at predeploy time) and are processed in network
/// layer order; severities are evaluated in fixed ladder order.
inline std::vector<SeverityCell> severity_sweep(
    const std::vector<TemplateBundle>& bundle_per_layer,
    const std::vector<std::pair<Severity, TraceSet>>& attacked_trace_sets,
    const RuntimeConfig& config) {
    std::vector<SeverityCell> rows;
    for (const TemplateBundle& bundle : bundle_per_layer) {
        if (!bundle.predeploy_config.layer_label)
            throw InvalidArgument("severity sweep requires per-layer bundles");
        for (const auto& [severity, traces] : attacked_trace_sets) {
            RuntimeConfig layer_config = config;
            layer_config.layer_label.reset(); // the bundle's own layer governs
            const Verdict verdict = runtime_check(bundle, traces, layer_config);
            rows.push_back(SeverityCell{*bundle.predeploy_config.layer_label, severity,
                                        verdict.p_value, verdict.violation_detected});
        }
    }
    return rows;
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void append_json_string(std::string& out, std::string_view s) {
    out += '"';
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default:
            if (static_cast<unsigned char>(c) < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof buf, "\\u%04x", c);
                out += buf;
            } else {
                out += c;
            }
        }
    }
    out += '"';
}

inline void append_double_array(std::string& out, const std::vector<double>& values) {
    out += '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i)
            out += ',';
        out += fmt_double(values[i]);
    }
    out += ']';
}

} // namespace detail

/// Serializes a bundle as UTF-8 JSON. Sample arrays are written with 17
/// significant digits so 64-bit floats round-trip exactly.
inline std::string serialize_bundle(const TemplateBundle& bundle) {
    std::string out;
    out.reserve(64 + 20 * (bundle.golden_template.samples.size() +
                           bundle.similarity_sample.values.size()));
    out += "{\n";
    out += "  \"format_version\": " + std::to_string(bundle.format_version) + ",\n";
    out += "  \"device_id\": ";
    detail::append_json_string(out, bundle.device_id);
    out += ",\n  \"test_input_id\": ";
    detail::append_json_string(out, bundle.test_input_id);
    out += ",\n  \"created_at\": ";
    detail::append_json_string(out, bundle.created_at);
    out += ",\n  \"target_frequency_hz\": " + detail::fmt_double(bundle.target_frequency_hz);
    out += ",\n  \"filter\": {\"center_hz\": " + detail::fmt_double(bundle.filter.center_hz) +
           ", \"bandwidth_fraction\": " + detail::fmt_double(bundle.filter.bandwidth_fraction) +
           ", \"order\": " + std::to_string(bundle.filter.order) +
           ", \"sample_rate_hz\": " + detail::fmt_double(bundle.filter.sample_rate_hz) + "}";
    out += ",\n  \"golden_template\": {\"sample_rate_hz\": " +
           detail::fmt_double(bundle.golden_template.sample_rate_hz) + ", \"samples\": ";
    detail::append_double_array(out, bundle.golden_template.samples);
    out += "}";
    out += ",\n  \"similarity_sample\": ";
    detail::append_double_array(out, bundle.similarity_sample.values);
    const auto& cfg = bundle.predeploy_config;
    out += ",\n  \"predeploy_config\": {\"n_traces\": " + std::to_string(cfg.n_traces) +
           ", \"dc_exclusion_hz\": " + detail::fmt_double(cfg.dc_exclusion_hz) +
           ", \"bandwidth_fraction\": " + detail::fmt_double(cfg.bandwidth_fraction) +
           ", \"filter_order\": " + std::to_string(cfg.filter_order) +
           ", \"template_selection_seed\": " + std::to_string(cfg.template_selection_seed) +
           ", \"layer_label\": ";
    if (cfg.layer_label)
        detail::append_json_string(out, *cfg.layer_label);
    else
        out += "null";
    out += "}\n}\n";
    return out;
}

inline TemplateBundle parse_bundle(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad bundle JSON: ") + e.what());
    }

    static const char* kTopLevel[] = {"format_version",      "device_id",
                                      "test_input_id",       "created_at",
                                      "target_frequency_hz", "filter",
                                      "golden_template",     "similarity_sample",
                                      "predeploy_config"};
    for (const char* key : kTopLevel)
        if (!j.contains(key))
            throw FormatError(std::string("bundle missing field '") + key + "'");
    for (const auto& [key, _] : j.items())
        if (std::find_if(std::begin(kTopLevel), std::end(kTopLevel),
                         [&](const char* k) { return key == k; }) == std::end(kTopLevel))
            throw FormatError("bundle has unexpected field '" + key + "'");

    TemplateBundle b;
    try {
        b.format_version = j.at("format_version").get<int>();
        b.device_id = j.at("device_id").get<std::string>();
        b.test_input_id = j.at("test_input_id").get<std::string>();
        b.created_at = j.at("created_at").get<std::string>();
        b.target_frequency_hz = j.at("target_frequency_hz").get<double>();
        const auto& f = j.at("filter");
        b.filter = FilterDesign{f.at("center_hz").get<double>(),
                                f.at("bandwidth_fraction").get<double>(), f.at("order").get<int>(),
                                f.at("sample_rate_hz").get<double>()};
        const auto& g = j.at("golden_template");
        b.golden_template.sample_rate_hz = g.at("sample_rate_hz").get<double>();
        b.golden_template.samples = g.at("samples").get<std::vector<double>>();
        b.similarity_sample.values = j.at("similarity_sample").get<std::vector<double>>();
        b.similarity_sample.source = SampleSource::pre_deployment;
        const auto& c = j.at("predeploy_config");
        b.predeploy_config.n_traces = c.at("n_traces").get<std::size_t>();
        b.predeploy_config.dc_exclusion_hz = c.at("dc_exclusion_hz").get<double>();
        b.predeploy_config.bandwidth_fraction = c.at("bandwidth_fraction").get<double>();
        b.predeploy_config.filter_order = c.at("filter_order").get<int>();
        b.predeploy_config.template_selection_seed =
            c.at("template_selection_seed").get<std::uint64_t>();
        if (!c.at("layer_label").is_null())
            b.predeploy_config.layer_label = c.at("layer_label").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad bundle contents: ") + e.what());
    }
    if (b.format_version != 1)
        throw FormatError("unsupported bundle format_version " +
                          std::to_string(b.format_version));
    return b;
}

inline void save_bundle(const std::filesystem::path& path, const TemplateBundle& bundle) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw FormatError("cannot open '" + path.string() + "' for writing");
    const std::string text = serialize_bundle(bundle);
    os.write(text.data(), std::streamsize(text.size()));
    if (!os)
        throw FormatError("write failure on '" + path.string() + "'");
}

inline TemplateBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw FormatError("cannot open '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_bundle(text);
}

} // namespace michscan
