#include "pat/model.hpp"

#include <json.hpp>

namespace pat {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

int require_int(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("config: missing key '") + key + "'");
    const json& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(std::string("config: '") + key + "' must be an integer");
    return v.get<int>();
}

bool require_bool(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("config: missing key '") + key + "'");
    const json& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(std::string("config: '") + key + "' must be a boolean");
    return v.get<bool>();
}

std::array<int, 4> require_int4(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("config: missing key '") + key + "'");
    const json& v = j.at(key);
    if (!v.is_array() || v.size() != 4) throw ConfigError(std::string("config: '") + key + "' must hold 4 entries");
    std::array<int, 4> out{};
    for (int i = 0; i < 4; ++i) {
        if (!v[i].is_number_integer()) throw ConfigError(std::string("config: '") + key + "' must hold integers");
        out[std::size_t(i)] = v[i].get<int>();
    }
    return out;
}

}  // namespace

void validate_config(const ModelConfig& cfg) {
    if (cfg.in_channels < 1) throw ConfigError("config: in_channels must be positive");
    if (cfg.embed_dim < 1) throw ConfigError("config: embed_dim must be positive");
    if (cfg.mlp_ratio < 1) throw ConfigError("config: mlp_ratio must be positive");
    if (cfg.num_classes < 2) throw ConfigError("config: num_classes must be at least 2");
    if (cfg.side < 32 || cfg.side % 32 != 0) throw ConfigError("config: side must be a positive multiple of 32");
    for (int s = 0; s < 4; ++s) {
        if (cfg.depths[std::size_t(s)] < 1)
            throw ConfigError("config: depths must be positive, stage " + std::to_string(s + 1));
        const int h = cfg.heads[std::size_t(s)];
        if (h < 1) throw ConfigError("config: heads must be positive, stage " + std::to_string(s + 1));
        if (cfg.stage_channels(s) % h != 0)
            throw ConfigError("config: heads must divide channels, stage " + std::to_string(s + 1) + " has " +
                              std::to_string(cfg.stage_channels(s)) + " channels for " + std::to_string(h) + " heads");
    }
    if (cfg.stage_side(1) < 6)
        throw ConfigError("config: side " + std::to_string(cfg.side) + " leaves stage 2 grid " +
                          std::to_string(cfg.stage_side(1)) + ", too small for octagon pattern");
}

ModelConfig parse_model_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    static const char* known[] = {"in_channels", "embed_dim",    "depths",     "heads",  "mlp_ratio", "bias_modes",
                                  "bias_sharing", "block_bias", "winnow", "num_classes", "side"};
    for (const auto& [key, unused] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("config: unknown key '" + key + "'");
    }
    ModelConfig cfg;
    cfg.in_channels = require_int(j, "in_channels");
    cfg.embed_dim = require_int(j, "embed_dim");
    cfg.depths = require_int4(j, "depths");
    cfg.heads = require_int4(j, "heads");
    cfg.mlp_ratio = require_int(j, "mlp_ratio");
    {
        if (!j.contains("bias_modes")) throw ConfigError("config: missing key 'bias_modes'");
        const json& v = j.at("bias_modes");
        if (!v.is_array() || v.size() != 4) throw ConfigError("config: 'bias_modes' must hold 4 entries");
        for (int i = 0; i < 4; ++i) {
            if (!v[i].is_string()) throw ConfigError("config: 'bias_modes' must hold strings");
            try {
                cfg.bias_modes[std::size_t(i)] = bias_mode_from(v[i].get<std::string>());
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("config: ") + e.what());
            }
        }
    }
    {
        if (!j.contains("bias_sharing")) throw ConfigError("config: missing key 'bias_sharing'");
        const json& v = j.at("bias_sharing");
        if (!v.is_string()) throw ConfigError("config: 'bias_sharing' must be a string");
        const std::string s = v.get<std::string>();
        if (s == "none") {
            cfg.bias_sharing.reset();
        } else {
            try {
                cfg.bias_sharing = bias_sharing_from(s);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("config: ") + e.what());
            }
        }
    }
    cfg.block_bias = require_bool(j, "block_bias");
    cfg.winnow = require_bool(j, "winnow");
    cfg.num_classes = require_int(j, "num_classes");
    cfg.side = require_int(j, "side");
    validate_config(cfg);
    return cfg;
}

std::string serialize_model_config(const ModelConfig& cfg) {
    ordered_json j;
    j["in_channels"] = cfg.in_channels;
    j["embed_dim"] = cfg.embed_dim;
    j["depths"] = cfg.depths;
    j["heads"] = cfg.heads;
    j["mlp_ratio"] = cfg.mlp_ratio;
    ordered_json modes = ordered_json::array();
    for (BiasMode m : cfg.bias_modes) modes.push_back(bias_mode_name(m));
    j["bias_modes"] = std::move(modes);
    j["bias_sharing"] = cfg.bias_sharing ? bias_sharing_name(*cfg.bias_sharing) : "none";
    j["block_bias"] = cfg.block_bias;
    j["winnow"] = cfg.winnow;
    j["num_classes"] = cfg.num_classes;
    j["side"] = cfg.side;
    return j.dump(2) + "\n";
}

std::vector<StagePlanEntry> build_stage_plan(const ModelConfig& cfg) {
    validate_config(cfg);
    std::vector<StagePlanEntry> out;
    out.reserve(4);
    for (int s = 0; s < 4; ++s) {
        StagePlanEntry e;
        e.height = e.width = cfg.stage_side(s);
        e.channels = cfg.stage_channels(s);
        e.heads = cfg.heads[std::size_t(s)];
        e.depth = cfg.depths[std::size_t(s)];
        e.is_pattern = s < 2;
        e.layout = e.is_pattern ? plan_octagon_pattern(e.height, e.width, Cell{0, 0})
                                : plan_square_pattern(e.height, e.width, std::max(e.height, e.width), 0);
        e.plan = make_attention_plan(e.layout, cfg.bias_modes[std::size_t(s)]);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<ParamSpec> enumerate_params(const ModelConfig& cfg, const std::vector<StagePlanEntry>& stages) {
    using Group = ParamSpec::Group;
    using Init = ParamSpec::Init;
    std::vector<ParamSpec> out;
    auto add = [&out](std::string name, std::vector<std::size_t> shape, Group g, Init i) {
        out.push_back(ParamSpec{std::move(name), std::move(shape), g, i});
    };

    const std::size_t C0 = std::size_t(cfg.embed_dim);
    const std::size_t feat = std::size_t(16) * std::size_t(cfg.in_channels);
    add("embed.proj.weight", {feat, C0}, Group::weights, Init::trunc_normal);
    add("embed.proj.bias", {std::size_t(1), C0}, Group::weights, Init::zeros);
    add("embed.norm.gain", {std::size_t(1), C0}, Group::weights, Init::ones);
    add("embed.norm.shift", {std::size_t(1), C0}, Group::weights, Init::zeros);

    for (std::size_t s = 0; s < stages.size(); ++s) {
        const StagePlanEntry& st = stages[s];
        const std::size_t C = std::size_t(st.channels);
        const std::size_t M = C * std::size_t(cfg.mlp_ratio);
        const std::size_t slots = cfg.bias_sharing == BiasSharing::common ? 1 : std::size_t(st.heads);
        for (int b = 0; b < st.depth; ++b) {
            const std::string pre = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b) + ".";
            add(pre + "norm1.gain", {std::size_t(1), C}, Group::weights, Init::ones);
            add(pre + "norm1.shift", {std::size_t(1), C}, Group::weights, Init::zeros);
            add(pre + "attn.w_q", {C, C}, Group::weights, Init::trunc_normal);
            add(pre + "attn.w_k", {C, C}, Group::weights, Init::trunc_normal);
            add(pre + "attn.w_v", {C, C}, Group::weights, Init::trunc_normal);
            add(pre + "attn.w_o", {C, C}, Group::weights, Init::trunc_normal);
            if (cfg.bias_sharing) {
                for (const ShapeClassPlan& cls : st.plan.classes)
                    for (std::size_t j = 0; j < slots; ++j)
                        add(pre + "attn.bias." + cls.shape.shape_id + ".slot" + std::to_string(j),
                            {cls.bias_param_count, std::size_t(1)}, Group::kernel_bias, Init::zeros);
            }
            if (cfg.block_bias)
                add(pre + "attn.block_bias", {st.plan.instances.size(), std::size_t(1)}, Group::block_bias,
                    Init::zeros);
            add(pre + "norm2.gain", {std::size_t(1), C}, Group::weights, Init::ones);
            add(pre + "norm2.shift", {std::size_t(1), C}, Group::weights, Init::zeros);
            add(pre + "mlp.fc1.weight", {C, M}, Group::weights, Init::trunc_normal);
            add(pre + "mlp.fc1.bias", {std::size_t(1), M}, Group::weights, Init::zeros);
            add(pre + "mlp.fc2.weight", {M, C}, Group::weights, Init::trunc_normal);
            add(pre + "mlp.fc2.bias", {std::size_t(1), C}, Group::weights, Init::zeros);
        }
        if (s + 1 < stages.size()) {
            const std::string pre = "merge" + std::to_string(s + 1) + ".";
            add(pre + "norm.gain", {std::size_t(1), 4 * C}, Group::weights, Init::ones);
            add(pre + "norm.shift", {std::size_t(1), 4 * C}, Group::weights, Init::zeros);
            add(pre + "reduce.weight", {4 * C, 2 * C}, Group::weights, Init::trunc_normal);
        }
    }

    const std::size_t C4 = std::size_t(stages.back().channels);
    add("head.norm.gain", {std::size_t(1), C4}, Group::weights, Init::ones);
    add("head.norm.shift", {std::size_t(1), C4}, Group::weights, Init::zeros);
    add("head.fc.weight", {C4, std::size_t(cfg.num_classes)}, Group::weights, Init::trunc_normal);
    add("head.fc.bias", {std::size_t(1), std::size_t(cfg.num_classes)}, Group::weights, Init::zeros);
    return out;
}

ParamCount count_params(const ModelConfig& cfg) {
    ParamCount n;
    for (const ParamSpec& s : enumerate_params(cfg, build_stage_plan(cfg))) {
        const std::uint64_t c = s.count();
        n.total += c;
        switch (s.group) {
            case ParamSpec::Group::weights: n.weights += c; break;
            case ParamSpec::Group::kernel_bias: n.kernel_bias += c; break;
            case ParamSpec::Group::block_bias: n.block_bias += c; break;
        }
    }
    return n;
}

std::string param_group_of(const std::string& name) {
    if (name.find("attn.w_q") != std::string::npos) return "attn.w_q";
    if (name.find("attn.w_k") != std::string::npos) return "attn.w_k";
    if (name.find("attn.w_v") != std::string::npos) return "attn.w_v";
    if (name.find("attn.w_o") != std::string::npos) return "attn.w_o";
    if (name.find("attn.bias.") != std::string::npos) return "attn.bias";
    if (name.find("attn.block_bias") != std::string::npos) return "attn.block_bias";
    if (name.find("mlp.") != std::string::npos) return "mlp";
    if (name.find("norm") != std::string::npos) return "norm";
    if (name.rfind("embed.", 0) == 0) return "embed";
    if (name.rfind("head.", 0) == 0) return "head";
    if (name.rfind("merge", 0) == 0) return "merge";
    throw std::logic_error("param_group_of: unclassified name " + name);
}

const std::vector<std::string>& all_param_groups() {
    static const std::vector<std::string> groups = {"embed",     "norm", "attn.w_q",  "attn.w_k",
                                                    "attn.w_v",  "attn.w_o", "attn.bias", "attn.block_bias",
                                                    "mlp",       "merge", "head"};
    return groups;
}

}  // namespace pat
