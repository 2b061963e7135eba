#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "michscan/error.hpp"
#include "michscan/pipeline.hpp"
#include "michscan/powersim.hpp"

// JSON configuration mirroring the simulator and pipeline types, used by the
// CLI's `simulate` and `sweep` subcommands.

namespace michscan {

struct SimConfig {
    DeviceModel device;
    SurrogateNet net;
    std::vector<int> test_input;
    std::vector<AttackSpec> attacks;
    DatasetCounts counts;
};

struct SweepConfig {
    SimConfig sim;
    PredeployConfig predeploy;
    double p_threshold = 1e-5;
    std::vector<std::size_t> n_ra{5};
    std::size_t trials = 100;
    std::vector<std::string> layers; // empty: only the default (final) layer
};

namespace cfg {

inline double number_or(const nlohmann::json& j, const char* key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

inline DeviceModel parse_device(const nlohmann::json& j) {
    DeviceModel d;
    d.sample_rate_hz = number_or(j, "sample_rate_hz", d.sample_rate_hz);
    d.clock_hz = number_or(j, "clock_hz", d.clock_hz);
    d.dc_volts = number_or(j, "dc_volts", d.dc_volts);
    d.hw_gain_volts_per_bit = number_or(j, "hw_gain_volts_per_bit", d.hw_gain_volts_per_bit);
    d.noise_sigma_volts = number_or(j, "noise_sigma_volts", d.noise_sigma_volts);
    d.drift_sigma_volts = number_or(j, "drift_sigma_volts", d.drift_sigma_volts);
    d.drift_min_hz = number_or(j, "drift_min_hz", d.drift_min_hz);
    d.drift_max_hz = number_or(j, "drift_max_hz", d.drift_max_hz);
    if (j.contains("drift_tones"))
        d.drift_tones = j.at("drift_tones").get<int>();
    if (j.contains("adc_bits"))
        d.adc_bits = j.at("adc_bits").get<int>();
    d.adc_full_scale_volts = number_or(j, "adc_full_scale_volts", d.adc_full_scale_volts);
    return d;
}

inline nlohmann::json device_to_json(const DeviceModel& d) {
    return {{"sample_rate_hz", d.sample_rate_hz},
            {"clock_hz", d.clock_hz},
            {"dc_volts", d.dc_volts},
            {"hw_gain_volts_per_bit", d.hw_gain_volts_per_bit},
            {"noise_sigma_volts", d.noise_sigma_volts},
            {"drift_sigma_volts", d.drift_sigma_volts},
            {"drift_min_hz", d.drift_min_hz},
            {"drift_max_hz", d.drift_max_hz},
            {"drift_tones", d.drift_tones},
            {"adc_bits", d.adc_bits},
            {"adc_full_scale_volts", d.adc_full_scale_volts}};
}

inline Activation parse_activation(const std::string& name) {
    if (name == "relu")
        return Activation::relu;
    if (name == "none")
        return Activation::none;
    throw InvalidArgument("unknown activation '" + name + "' (expected relu|none)");
}

inline SurrogateNet parse_net(const nlohmann::json& j) {
    SurrogateNet net;
    net.input_width = j.at("input_width").get<std::size_t>();
    for (const auto& lj : j.at("layers")) {
        const auto label = lj.at("label").get<std::string>();
        const auto rows = lj.at("rows").get<std::size_t>();
        const auto cols = lj.at("cols").get<std::size_t>();
        const auto activation =
            parse_activation(lj.contains("activation") ? lj.at("activation").get<std::string>()
                                                       : "none");
        if (lj.contains("weights")) {
            Layer layer;
            layer.label = label;
            layer.rows = rows;
            layer.cols = cols;
            layer.activation = activation;
            const auto& w = lj.at("weights");
            if (w.size() != rows)
                throw InvalidArgument("layer '" + label + "': weight row count mismatch");
            for (const auto& row : w) {
                if (row.size() != cols)
                    throw InvalidArgument("layer '" + label + "': weight column count mismatch");
                for (const auto& v : row) {
                    const int value = v.get<int>();
                    if (value < -128 || value > 127)
                        throw InvalidArgument("layer '" + label + "': weight outside int8 range");
                    layer.weights.push_back(std::int8_t(value));
                }
            }
            net.layers.push_back(std::move(layer));
        } else if (lj.contains("weights_seed")) {
            net.layers.push_back(make_random_layer(label, rows, cols, activation,
                                                   lj.at("weights_seed").get<std::uint64_t>()));
        } else {
            throw InvalidArgument("layer '" + label + "' needs weights or weights_seed");
        }
    }
    validate(net);
    return net;
}

inline nlohmann::json net_to_json(const SurrogateNet& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& l : net.layers) {
        nlohmann::json weights = nlohmann::json::array();
        for (std::size_t r = 0; r < l.rows; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < l.cols; ++c)
                row.push_back(int(l.weight(r, c)));
            weights.push_back(std::move(row));
        }
        layers.push_back({{"label", l.label},
                          {"rows", l.rows},
                          {"cols", l.cols},
                          {"activation", l.activation == Activation::relu ? "relu" : "none"},
                          {"weights", std::move(weights)}});
    }
    return {{"input_width", net.input_width}, {"layers", std::move(layers)}};
}

inline AttackKind parse_attack_kind(const std::string& name) {
    if (name == "trojan_retrain")
        return AttackKind::trojan_retrain;
    if (name == "poison_final_layer")
        return AttackKind::poison_final_layer;
    if (name == "bit_flip")
        return AttackKind::bit_flip;
    throw InvalidArgument("unknown attack kind '" + name + "'");
}

inline BitPolicy parse_bit_policy(const std::string& name) {
    if (name == "uniform")
        return BitPolicy::uniform_bits;
    if (name == "low")
        return BitPolicy::low_bits;
    if (name == "high")
        return BitPolicy::high_bits;
    throw InvalidArgument("unknown bit policy '" + name + "' (expected uniform|low|high)");
}

inline AttackSpec parse_attack(const nlohmann::json& j) {
    AttackSpec spec;
    spec.kind = parse_attack_kind(j.at("kind").get<std::string>());
    if (j.contains("target_layer"))
        spec.target_layer = j.at("target_layer").get<std::string>();
    if (j.contains("seed"))
        spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("bit_count"))
        spec.bit_count = j.at("bit_count").get<int>();
    if (j.contains("bit_policy"))
        spec.bit_policy = parse_bit_policy(j.at("bit_policy").get<std::string>());
    if (j.contains("positions"))
        for (const auto& p : j.at("positions"))
            spec.positions.push_back(BitFlipPosition{p.at(0).get<std::size_t>(),
                                                     p.at(1).get<std::size_t>(),
                                                     p.at(2).get<int>()});
    if (j.contains("poison_scale"))
        spec.poison_scale = j.at("poison_scale").get<int>();
    return spec;
}

inline nlohmann::json attack_to_json(const AttackSpec& spec) {
    nlohmann::json j{{"kind", attack_kind_name(spec.kind)},
                     {"target_layer", spec.target_layer},
                     {"seed", spec.seed},
                     {"bit_count", spec.bit_count},
                     {"poison_scale", spec.poison_scale}};
    switch (spec.bit_policy) {
    case BitPolicy::uniform_bits: j["bit_policy"] = "uniform"; break;
    case BitPolicy::low_bits: j["bit_policy"] = "low"; break;
    case BitPolicy::high_bits: j["bit_policy"] = "high"; break;
    }
    if (!spec.positions.empty()) {
        nlohmann::json positions = nlohmann::json::array();
        for (const auto& p : spec.positions)
            positions.push_back({p.row, p.col, p.bit});
        j["positions"] = std::move(positions);
    }
    return j;
}

inline std::vector<int> parse_test_input(const nlohmann::json& j, std::size_t width) {
    if (j.is_array()) {
        std::vector<int> input;
        for (const auto& v : j)
            input.push_back(v.get<int>());
        if (input.size() != width)
            throw InvalidArgument("test_input length does not match net input width");
        return input;
    }
    if (j.is_object() && j.contains("seed"))
        return make_random_input(width, j.at("seed").get<std::uint64_t>());
    throw InvalidArgument("test_input must be an array or {\"seed\": n}");
}

inline SimConfig parse_sim_config(const nlohmann::json& j) {
    SimConfig cfg;
    cfg.device = j.contains("device") ? parse_device(j.at("device")) : DeviceModel{};
    validate(cfg.device);
    cfg.net = j.contains("net") ? parse_net(j.at("net")) : make_default_net(1);
    cfg.test_input = j.contains("test_input") ? parse_test_input(j.at("test_input"), cfg.net.input_width)
                                              : make_random_input(cfg.net.input_width, 2);
    if (j.contains("attacks"))
        for (const auto& a : j.at("attacks"))
            cfg.attacks.push_back(parse_attack(a));
    if (j.contains("counts")) {
        const auto& c = j.at("counts");
        if (c.contains("predeploy"))
            cfg.counts.predeploy = c.at("predeploy").get<std::size_t>();
        if (c.contains("runtime"))
            cfg.counts.runtime = c.at("runtime").get<std::size_t>();
    }
    return cfg;
}

inline nlohmann::json sim_config_to_json(const SimConfig& cfg) {
    nlohmann::json attacks = nlohmann::json::array();
    for (const AttackSpec& a : cfg.attacks)
        attacks.push_back(attack_to_json(a));
    return {{"device", device_to_json(cfg.device)},
            {"net", net_to_json(cfg.net)},
            {"test_input", cfg.test_input},
            {"attacks", std::move(attacks)},
            {"counts", {{"predeploy", cfg.counts.predeploy}, {"runtime", cfg.counts.runtime}}}};
}

inline SweepConfig parse_sweep_config(const nlohmann::json& j) {
    SweepConfig cfg;
    cfg.sim = parse_sim_config(j);
    if (j.contains("predeploy")) {
        const auto& p = j.at("predeploy");
        if (p.contains("n_traces"))
            cfg.predeploy.n_traces = p.at("n_traces").get<std::size_t>();
        cfg.predeploy.dc_exclusion_hz =
            number_or(p, "dc_exclusion_hz", cfg.predeploy.dc_exclusion_hz);
        cfg.predeploy.bandwidth_fraction =
            number_or(p, "bandwidth_fraction", cfg.predeploy.bandwidth_fraction);
        if (p.contains("filter_order"))
            cfg.predeploy.filter_order = p.at("filter_order").get<int>();
        if (p.contains("template_selection_seed"))
            cfg.predeploy.template_selection_seed =
                p.at("template_selection_seed").get<std::uint64_t>();
        if (p.contains("layer_label") && !p.at("layer_label").is_null())
            cfg.predeploy.layer_label = p.at("layer_label").get<std::string>();
    }
    cfg.predeploy.n_traces = cfg.sim.counts.predeploy;
    cfg.p_threshold = number_or(j, "p_threshold", cfg.p_threshold);
    if (j.contains("n_ra")) {
        cfg.n_ra.clear();
        for (const auto& v : j.at("n_ra"))
            cfg.n_ra.push_back(v.get<std::size_t>());
    }
    if (j.contains("trials"))
        cfg.trials = j.at("trials").get<std::size_t>();
    if (j.contains("layers"))
        for (const auto& v : j.at("layers"))
            cfg.layers.push_back(v.get<std::string>());
    return cfg;
}

inline nlohmann::json sweep_config_to_json(const SweepConfig& cfg) {
    nlohmann::json j = sim_config_to_json(cfg.sim);
    j["predeploy"] = {{"n_traces", cfg.predeploy.n_traces},
                      {"dc_exclusion_hz", cfg.predeploy.dc_exclusion_hz},
                      {"bandwidth_fraction", cfg.predeploy.bandwidth_fraction},
                      {"filter_order", cfg.predeploy.filter_order},
                      {"template_selection_seed", cfg.predeploy.template_selection_seed},
                      {"layer_label", cfg.predeploy.layer_label ? nlohmann::json(*cfg.predeploy.layer_label)
                                                                : nlohmann::json(nullptr)}};
    j["p_threshold"] = cfg.p_threshold;
    j["n_ra"] = cfg.n_ra;
    j["trials"] = cfg.trials;
    j["layers"] = cfg.layers;
    return j;
}

} // namespace cfg

} // namespace michscan
