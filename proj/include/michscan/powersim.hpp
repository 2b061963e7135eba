#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "michscan/digest.hpp"
#include "michscan/error.hpp"
#include "michscan/parallel.hpp"
#include "michscan/rng.hpp"
#include "michscan/trace.hpp"

namespace michscan {

enum class Activation { relu, none };

struct Layer {
    std::string label;
    std::size_t rows = 0; // outputs
    std::size_t cols = 0; // inputs
    std::vector<std::int8_t> weights; // row-major, rows * cols
    Activation activation = Activation::none;

    friend bool operator==(const Layer&, const Layer&) = default;

    std::int8_t weight(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
};

/// Fixed-point feed-forward surrogate standing in for a deployed TinyML
/// model. Only the multiply-accumulate stream matters to the power model.
struct SurrogateNet {
    std::vector<Layer> layers;
    std::size_t input_width = 0;

    friend bool operator==(const SurrogateNet&, const SurrogateNet&) = default;
};

inline void validate(const SurrogateNet& net) {
    if (net.layers.empty())
        throw InvalidArgument("surrogate net has no layers");
    if (net.input_width == 0)
        throw InvalidArgument("surrogate net input width must be positive");
    std::size_t expected = net.input_width;
    for (const Layer& l : net.layers) {
        if (l.rows == 0 || l.cols == 0)
            throw InvalidArgument("layer '" + l.label + "' has empty dimensions");
        if (l.cols != expected)
            throw InvalidArgument("layer '" + l.label + "' input width does not compose");
        if (l.weights.size() != l.rows * l.cols)
            throw InvalidArgument("layer '" + l.label + "' weight count mismatch");
        expected = l.rows;
    }
}

/// Bench model: shunt-voltage capture chain with a systematic clock carrier,
/// white measurement noise, slow device-state drift, and an ADC.
/// Defaults are desk-scale and calibrated so that raw single traces do not
/// separate benign from modified models while band-passed traces do.
struct DeviceModel {
    double sample_rate_hz = 2e6;
    double clock_hz = 225e3;
    double dc_volts = 0.45;
    double hw_gain_volts_per_bit = 0.022;
    double noise_sigma_volts = 0.00025;
    double drift_sigma_volts = 0.02;
    double drift_min_hz = 1e3;
    double drift_max_hz = 5e4;
    int drift_tones = 32;
    int adc_bits = 10;
    double adc_full_scale_volts = 1.0;
};

inline void validate(const DeviceModel& device) {
    if (!(device.sample_rate_hz > 0.0) || !(device.clock_hz > 0.0))
        throw InvalidArgument("device rates must be positive");
    if (!(device.clock_hz < device.sample_rate_hz / 2.0))
        throw InvalidArgument("carrier above Nyquist: clock_hz must be < sample_rate_hz / 2");
    if (device.dc_volts <= 0.0 || device.adc_full_scale_volts <= 0.0)
        throw InvalidArgument("dc and full-scale voltages must be positive");
    if (device.hw_gain_volts_per_bit <= 0.0)
        throw InvalidArgument("hw gain must be positive");
    if (device.noise_sigma_volts < 0.0 || device.drift_sigma_volts < 0.0)
        throw InvalidArgument("noise levels must be non-negative");
    if (device.drift_sigma_volts > 0.0 &&
        (device.drift_tones < 1 || !(device.drift_min_hz > 0.0) ||
         !(device.drift_max_hz >= device.drift_min_hz)))
        throw InvalidArgument("drift tone configuration invalid");
    if (device.adc_bits < 1 || device.adc_bits > 24)
        throw InvalidArgument("adc_bits must be in [1, 24]");
}

namespace detail {

inline int hamming_weight(std::uint8_t byte) { return std::popcount(unsigned(byte)); }

/// Requantization shift keeps post-accumulation activations in int8 range.
inline int requant_shift(std::size_t fan_in) {
    int bits = 0;
    while ((std::size_t{1} << bits) < fan_in)
        ++bits;
    return bits + 4;
}

struct LayerSpan {
    std::string label;
    std::size_t begin_period = 0;
    std::size_t end_period = 0;
};

struct MacStream {
    std::vector<int> hw_sums; // one per multiply-accumulate
    std::vector<LayerSpan> spans;
    std::vector<int> outputs;
};

/// One layer forward pass. When hw_sums is given, records per-MAC leakage:
/// Hamming weight of the weight byte plus Hamming weight of the running
/// accumulator's low byte.
inline std::vector<int> forward_layer(const Layer& layer, const std::vector<int>& x,
                                      std::vector<int>* hw_sums = nullptr) {
    const int shift = requant_shift(layer.cols);
    std::vector<int> out(layer.rows, 0);
    for (std::size_t j = 0; j < layer.rows; ++j) {
        std::int64_t acc = 0;
        for (std::size_t k = 0; k < layer.cols; ++k) {
            const std::int8_t w = layer.weight(j, k);
            acc += std::int64_t(w) * x[k];
            if (hw_sums)
                hw_sums->push_back(hamming_weight(std::uint8_t(w)) +
                                   hamming_weight(std::uint8_t(acc & 0xff)));
        }
        if (layer.activation == Activation::relu)
            acc = std::max<std::int64_t>(acc, 0);
        out[j] = int(std::clamp<std::int64_t>(acc >> shift, -128, 127));
    }
    return out;
}

inline MacStream run_inference(const SurrogateNet& net, const std::vector<int>& input) {
    validate(net);
    if (input.size() != net.input_width)
        throw InvalidArgument("input width does not match the net");
    for (int v : input)
        if (v < -128 || v > 127)
            throw InvalidArgument("input values must fit int8");

    MacStream stream;
    std::vector<int> x = input;
    std::size_t period = 0;
    for (const Layer& layer : net.layers) {
        const std::size_t begin = period;
        x = forward_layer(layer, x, &stream.hw_sums);
        period = stream.hw_sums.size();
        stream.spans.push_back({layer.label, begin, period});
    }
    stream.outputs = std::move(x);
    return stream;
}

inline std::string device_digest(const DeviceModel& d) {
    std::ostringstream os;
    os.precision(17);
    os << d.sample_rate_hz << '|' << d.clock_hz << '|' << d.dc_volts << '|'
       << d.hw_gain_volts_per_bit << '|' << d.noise_sigma_volts << '|' << d.drift_sigma_volts
       << '|' << d.drift_min_hz << '|' << d.drift_max_hz << '|' << d.drift_tones << '|'
       << d.adc_bits << '|' << d.adc_full_scale_volts;
    return fnv1a_hex(os.str());
}

inline std::string net_digest(const SurrogateNet& net) {
    std::string bytes;
    for (const Layer& l : net.layers) {
        bytes += l.label;
        bytes.push_back(char(l.activation == Activation::relu ? 1 : 0));
        for (std::int8_t w : l.weights)
            bytes.push_back(char(w));
    }
    return fnv1a_hex(bytes);
}

inline std::string input_digest(const std::vector<int>& input) {
    std::string bytes;
    for (int v : input)
        bytes.push_back(char(std::int8_t(v)));
    return fnv1a_hex(bytes);
}

} // namespace detail

/// Simulates one inference capture. Each multiply-accumulate contributes one
/// full period of the clock carrier, amplitude-modulated by its Hamming
/// weight sum; DC offset, slow drift tones, and white noise are added, the
/// waveform saturates at the ADC rails, and the result is quantized.
inline Trace simulate_inference_trace(const DeviceModel& device, const SurrogateNet& net,
                                      const std::vector<int>& input, std::uint64_t noise_seed) {
    validate(device);
    const detail::MacStream stream = detail::run_inference(net, input);

    const double fs = device.sample_rate_hz;
    const double clk = device.clock_hz;
    const std::size_t total_periods = stream.hw_sums.size();
    const std::size_t n = std::size_t(std::ceil(double(total_periods) * fs / clk));

    Rng white(derive_seed(noise_seed, 0x57c1));
    Rng drift_rng(derive_seed(noise_seed, 0xd21f));

    // Drift: a handful of sub-band tones standing in for slow device-state
    // variation (temperature, peripherals). Strictly below the carrier band.
    const int tones = device.drift_sigma_volts > 0.0 ? device.drift_tones : 0;
    const auto tone_count = std::size_t(tones);
    std::vector<std::complex<double>> phasor(tone_count);
    std::vector<std::complex<double>> step(tone_count);
    constexpr double two_pi = 6.283185307179586476925286766559;
    const double tone_amp = tones > 0 ? device.drift_sigma_volts * std::sqrt(2.0 / double(tones)) : 0.0;
    for (int j = 0; j < tones; ++j) {
        const double f = drift_rng.uniform(device.drift_min_hz, device.drift_max_hz);
        const double phase = drift_rng.uniform(0.0, two_pi);
        phasor[std::size_t(j)] = std::polar(1.0, phase);
        step[std::size_t(j)] = std::polar(1.0, two_pi * f / fs);
    }

    const double omega = two_pi * clk / fs;
    Trace raw;
    raw.sample_rate_hz = fs;
    raw.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t p = std::min<std::size_t>(std::size_t(double(i) * clk / fs), total_periods - 1);
        double v = device.dc_volts +
                   device.hw_gain_volts_per_bit * double(stream.hw_sums[p]) * std::sin(omega * double(i));
        for (int j = 0; j < tones; ++j) {
            v += tone_amp * phasor[std::size_t(j)].imag();
            phasor[std::size_t(j)] *= step[std::size_t(j)];
        }
        if (device.noise_sigma_volts > 0.0)
            v += device.noise_sigma_volts * white.gaussian();
        raw.samples[i] = std::clamp(v, 0.0, device.adc_full_scale_volts); // ADC saturation
    }

    for (const auto& span : stream.spans) {
        const auto start = std::size_t(std::ceil(double(span.begin_period) * fs / clk));
        const auto end = std::min(n, std::size_t(std::ceil(double(span.end_period) * fs / clk)));
        raw.markers.push_back(Marker{span.label, start, end});
    }
    raw.meta["device_id"] = "sim-" + detail::device_digest(device);
    raw.meta["model_id"] = detail::net_digest(net);
    raw.meta["input_id"] = detail::input_digest(input);
    raw.meta["noise_seed"] = std::to_string(noise_seed);

    return quantize(raw, device.adc_bits, device.adc_full_scale_volts);
}

enum class AttackKind { trojan_retrain, poison_final_layer, bit_flip };

enum class BitPolicy { uniform_bits, low_bits, high_bits };

struct BitFlipPosition {
    std::size_t row = 0;
    std::size_t col = 0;
    int bit = 0;

    friend bool operator==(const BitFlipPosition&, const BitFlipPosition&) = default;
};

struct AttackSpec {
    AttackKind kind = AttackKind::bit_flip;
    std::string target_layer;
    std::uint64_t seed = 0; // trojan_retrain reads this as the reseed id
    int bit_count = 4;
    BitPolicy bit_policy = BitPolicy::uniform_bits;
    std::vector<BitFlipPosition> positions; // optional explicit flip list
    int poison_scale = 16;
};

inline std::string attack_kind_name(AttackKind kind) {
    switch (kind) {
    case AttackKind::trojan_retrain: return "trojan_retrain";
    case AttackKind::poison_final_layer: return "poison_final_layer";
    case AttackKind::bit_flip: return "bit_flip";
    }
    return "unknown";
}

namespace detail {

inline std::size_t find_layer(const SurrogateNet& net, const std::string& label) {
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i].label == label)
            return i;
    throw InvalidArgument("no layer labelled '" + label + "'");
}

inline void redraw_layer(Layer& layer, Rng& rng) {
    for (std::int8_t& w : layer.weights)
        w = std::int8_t(rng.uniform_int(-127, 127));
}

/// count distinct weight cells, chosen without replacement.
inline std::vector<std::size_t> sample_distinct_cells(std::size_t total, std::size_t count, Rng& rng) {
    std::vector<std::size_t> cells(total);
    for (std::size_t i = 0; i < total; ++i)
        cells[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + std::size_t(rng.uniform_int(0, std::int64_t(total - i - 1)));
        std::swap(cells[i], cells[j]);
    }
    cells.resize(count);
    return cells;
}

} // namespace detail

/// Applies an integrity violation to a copy of the net. Layers not named by
/// the attack stay bit-identical.
inline SurrogateNet apply_attack(const SurrogateNet& net, const AttackSpec& spec) {
    validate(net);
    SurrogateNet out = net;

    switch (spec.kind) {
    case AttackKind::trojan_retrain: {
        // Full retrain: every layer redrawn from the seeded weight distribution.
        for (std::size_t i = 0; i < out.layers.size(); ++i) {
            Rng rng(derive_seed(spec.seed, 0x7401, i));
            detail::redraw_layer(out.layers[i], rng);
        }
        return out;
    }
    case AttackKind::poison_final_layer: {
        if (!spec.target_layer.empty() && spec.target_layer != out.layers.back().label)
            throw InvalidArgument("poison_final_layer only perturbs the final layer");
        if (spec.poison_scale <= 0)
            throw InvalidArgument("poison scale must be positive");
        Layer& final_layer = out.layers.back();
        Rng rng(derive_seed(spec.seed, 0x9015));
        for (std::int8_t& w : final_layer.weights) {
            const int shifted = int(w) + int(rng.uniform_int(-spec.poison_scale, spec.poison_scale));
            w = std::int8_t(std::clamp(shifted, -128, 127));
        }
        return out;
    }
    case AttackKind::bit_flip: {
        const std::size_t li = detail::find_layer(out, spec.target_layer);
        Layer& layer = out.layers[li];

        std::vector<BitFlipPosition> flips = spec.positions;
        if (!flips.empty()) {
            for (const auto& f : flips) {
                if (f.row >= layer.rows || f.col >= layer.cols)
                    throw InvalidArgument("bit flip position outside layer");
                if (f.bit < 0 || f.bit > 7)
                    throw InvalidArgument("bit flip position outside 8-bit width");
            }
            auto key = [](const BitFlipPosition& f) {
                return std::tuple(f.row, f.col, f.bit);
            };
            for (std::size_t i = 0; i < flips.size(); ++i)
                for (std::size_t j = i + 1; j < flips.size(); ++j)
                    if (key(flips[i]) == key(flips[j]))
                        throw InvalidArgument("duplicate bit positions requested");
        } else {
            if (spec.bit_count < 1)
                throw InvalidArgument("bit flip count must be >= 1");
            const auto count = std::size_t(spec.bit_count);
            if (count > layer.weights.size())
                throw InvalidArgument("more bit flips requested than layer weights");
            Rng rng(derive_seed(spec.seed, 0xb1f1));
            // One bit per distinct weight byte.
            for (std::size_t cell : detail::sample_distinct_cells(layer.weights.size(), count, rng)) {
                int lo = 0, hi = 7;
                if (spec.bit_policy == BitPolicy::low_bits)
                    hi = 3;
                else if (spec.bit_policy == BitPolicy::high_bits)
                    lo = 4;
                flips.push_back(BitFlipPosition{cell / layer.cols, cell % layer.cols,
                                                int(rng.uniform_int(lo, hi))});
            }
        }

        for (const auto& f : flips) {
            std::int8_t& w = layer.weights[f.row * layer.cols + f.col];
            w = std::int8_t(std::uint8_t(w) ^ std::uint8_t(1u << f.bit));
        }
        return out;
    }
    }
    throw InvalidArgument("unknown attack kind");
}

/// Severity ladder used by the layer-wise propagation experiments.
enum class Severity { single_layer, single_parameter, single_bit };

inline std::string severity_name(Severity s) {
    switch (s) {
    case Severity::single_layer: return "single_layer";
    case Severity::single_parameter: return "single_parameter";
    case Severity::single_bit: return "single_bit";
    }
    return "unknown";
}

/// Generates one violation instance of the given severity in the named
/// layer. When screen_input is supplied, candidate positions are re-drawn
/// (seeded, deterministic) until the modified layer's output for that input
/// differs from the benign one — modelling attacks that select bits by
/// impact; a change multiplying a dead activation has zero gradient and
/// would never be chosen.
inline SurrogateNet apply_severity(const SurrogateNet& net, const std::string& layer_label,
                                   Severity severity, std::uint64_t seed,
                                   const std::vector<int>* screen_input = nullptr) {
    validate(net);
    const std::size_t li = detail::find_layer(net, layer_label);

    std::vector<int> layer_input;
    std::vector<int> benign_output;
    std::vector<int> benign_hw;
    if (screen_input) {
        layer_input = *screen_input;
        for (std::size_t i = 0; i < li; ++i)
            layer_input = detail::forward_layer(net.layers[i], layer_input);
        benign_output = detail::forward_layer(net.layers[li], layer_input, &benign_hw);
    }
    const auto effective = [&](const Layer& candidate) {
        if (!screen_input)
            return true;
        std::vector<int> hw;
        if (detail::forward_layer(candidate, layer_input, &hw) == benign_output)
            return false;
        // Require a multi-period leakage footprint, as weight reuse in the
        // convolution layers this surrogate stands in for would produce
        // (one conv weight participates in a whole feature map of MACs).
        int touched = 0;
        for (std::size_t i = 0; i < hw.size(); ++i)
            touched += hw[i] != benign_hw[i];
        return touched >= int(net.layers[li].cols / 4);
    };

    SurrogateNet out = net;
    Layer& layer = out.layers[li];

    switch (severity) {
    case Severity::single_layer: {
        Rng rng(derive_seed(seed, 0x5e01));
        for (int attempt = 0; attempt < 1000; ++attempt) {
            layer = net.layers[li];
            detail::redraw_layer(layer, rng);
            if (effective(layer))
                return out;
        }
        break;
    }
    case Severity::single_parameter: {
        Rng rng(derive_seed(seed, 0x5e02));
        for (int attempt = 0; attempt < 100000; ++attempt) {
            layer = net.layers[li];
            const auto cell = std::size_t(rng.uniform_int(0, std::int64_t(layer.weights.size() - 1)));
            std::int8_t fresh = layer.weights[cell];
            while (fresh == layer.weights[cell])
                fresh = std::int8_t(rng.uniform_int(-127, 127));
            layer.weights[cell] = fresh;
            if (effective(layer))
                return out;
        }
        break;
    }
    case Severity::single_bit: {
        Rng rng(derive_seed(seed, 0x5e03));
        for (int attempt = 0; attempt < 100000; ++attempt) {
            layer = net.layers[li];
            const auto cell = std::size_t(rng.uniform_int(0, std::int64_t(layer.weights.size() - 1)));
            const int bit = int(rng.uniform_int(0, 7));
            layer.weights[cell] =
                std::int8_t(std::uint8_t(layer.weights[cell]) ^ std::uint8_t(1u << bit));
            if (effective(layer))
                return out;
        }
        break;
    }
    default:
        throw InvalidArgument("unknown severity");
    }
    throw Error("no behaviour-changing position found for severity instance");
}

/// Seeded random layer / net / input constructors for experiments.
inline Layer make_random_layer(std::string label, std::size_t rows, std::size_t cols,
                               Activation activation, std::uint64_t seed) {
    Layer layer;
    layer.label = std::move(label);
    layer.rows = rows;
    layer.cols = cols;
    layer.activation = activation;
    layer.weights.resize(rows * cols);
    Rng rng(derive_seed(seed, 0x11ea));
    for (std::int8_t& w : layer.weights)
        w = std::int8_t(rng.uniform_int(-127, 127));
    return layer;
}

/// Default surrogate: two dense layers (16x16 ReLU, 16x10) — a stand-in for
/// a small image-classification model's MAC stream.
inline SurrogateNet make_default_net(std::uint64_t seed = 1) {
    SurrogateNet net;
    net.input_width = 16;
    net.layers.push_back(make_random_layer("fc1", 16, 16, Activation::relu, derive_seed(seed, 1)));
    net.layers.push_back(make_random_layer("fc2", 10, 16, Activation::none, derive_seed(seed, 2)));
    validate(net);
    return net;
}

inline std::vector<int> make_random_input(std::size_t width, std::uint64_t seed) {
    std::vector<int> input(width);
    Rng rng(derive_seed(seed, 0x1234));
    for (int& v : input)
        v = int(rng.uniform_int(-128, 127));
    return input;
}

struct DatasetCounts {
    std::size_t predeploy = 500;
    std::size_t runtime = 5;
};

struct ConditionTraces {
    std::string condition;
    TraceSet traces;
};

struct Dataset {
    TraceSet predeploy;
    std::vector<ConditionTraces> runtime;
};

/// Simulates the full experimental corpus: N benign pre-deployment traces
/// plus per-condition runtime sets (benign first, then one per attack), all
/// for the single fixed test input. Per-trace noise seeds derive from
/// (master_seed, condition, index), so parallel and serial generation agree.
inline Dataset generate_dataset(const DeviceModel& device, const SurrogateNet& benign,
                                const std::vector<AttackSpec>& attacks,
                                const std::vector<int>& test_input, const DatasetCounts& counts,
                                std::uint64_t master_seed) {
    if (counts.predeploy < 1 || counts.runtime < 1)
        throw InvalidArgument("dataset counts must be >= 1");

    Dataset out;

    out.predeploy.traces.resize(counts.predeploy);
    parallel_for(counts.predeploy, [&](std::size_t i) {
        out.predeploy.traces[i] =
            simulate_inference_trace(device, benign, test_input, derive_seed(master_seed, 0, i));
    });

    std::vector<std::pair<std::string, SurrogateNet>> conditions;
    conditions.emplace_back("benign", benign);
    for (const AttackSpec& attack : attacks) {
        std::string name = attack_kind_name(attack.kind);
        int suffix = 2;
        for (const auto& [existing, _] : conditions)
            if (existing == name)
                name = attack_kind_name(attack.kind) + "_" + std::to_string(suffix++);
        conditions.emplace_back(std::move(name), apply_attack(benign, attack));
    }

    for (std::size_t c = 0; c < conditions.size(); ++c) {
        ConditionTraces ct;
        ct.condition = conditions[c].first;
        ct.traces.traces.resize(counts.runtime);
        parallel_for(counts.runtime, [&](std::size_t j) {
            ct.traces.traces[j] = simulate_inference_trace(device, conditions[c].second, test_input,
                                                           derive_seed(master_seed, 1 + c, j));
        });
        out.runtime.push_back(std::move(ct));
    }
    return out;
}

} // namespace michscan
