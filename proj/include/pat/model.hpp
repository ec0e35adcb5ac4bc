#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pat/attention.hpp"
#include "pat/graph.hpp"
#include "pat/pattern.hpp"
#include "pat/rng.hpp"
#include "pat/tensor.hpp"

namespace pat {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    int in_channels = 3;
    int embed_dim = 96;
    std::array<int, 4> depths{2, 2, 6, 2};
    std::array<int, 4> heads{3, 6, 12, 24};
    int mlp_ratio = 4;
    std::array<BiasMode, 4> bias_modes{BiasMode::absolute, BiasMode::absolute, BiasMode::absolute,
                                       BiasMode::absolute};
    std::optional<BiasSharing> bias_sharing;  // nullopt = no kernel bias
    bool block_bias = false;
    bool winnow = true;
    int num_classes = 1000;
    int side = 224;

    int stage_channels(int stage) const { return embed_dim << stage; }
    int stage_side(int stage) const { return side >> (2 + stage); }
    bool operator==(const ModelConfig&) const = default;
};

// Throws ConfigError on structural problems (side not a multiple of 32,
// heads not dividing stage channels, grids too small for the octagon...).
void validate_config(const ModelConfig& cfg);

ModelConfig parse_model_config(const std::string& text);
std::string serialize_model_config(const ModelConfig& cfg);

struct StagePlanEntry {
    int height = 0;
    int width = 0;
    int channels = 0;
    int heads = 0;
    int depth = 0;
    bool is_pattern = false;  // stages 1-2 pattern kernels, 3-4 one full window
    PatternLayout layout;
    AttentionPlan plan;
};

std::vector<StagePlanEntry> build_stage_plan(const ModelConfig& cfg);

struct ParamSpec {
    enum class Group { weights, kernel_bias, block_bias };
    enum class Init { trunc_normal, zeros, ones };
    std::string name;
    std::vector<std::size_t> shape;
    Group group = Group::weights;
    Init init = Init::trunc_normal;
    std::size_t count() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
};

// The single enumeration both count_params and the live model allocate from;
// order equals forward-pass consumption order.
std::vector<ParamSpec> enumerate_params(const ModelConfig& cfg, const std::vector<StagePlanEntry>& stages);

struct ParamCount {
    std::uint64_t total = 0;
    std::uint64_t weights = 0;
    std::uint64_t kernel_bias = 0;
    std::uint64_t block_bias = 0;
};

ParamCount count_params(const ModelConfig& cfg);

// Coarse bucket for gradient audits: attn.w_q ... merge. Every parameter
// falls in exactly one bucket.
std::string param_group_of(const std::string& name);
const std::vector<std::string>& all_param_groups();

template <typename Real>
class ParamStore {
public:
    void add(std::string name, Tensor<Real> t) {
        if (map_.count(name)) throw std::logic_error("ParamStore: duplicate name " + name);
        names_.push_back(name);
        map_.emplace(std::move(name), std::move(t));
    }
    Tensor<Real>& at(const std::string& name) {
        auto it = map_.find(name);
        if (it == map_.end()) throw std::logic_error("ParamStore: unknown name " + name);
        return it->second;
    }
    const Tensor<Real>& at(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw std::logic_error("ParamStore: unknown name " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return map_.count(name) != 0; }
    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::map<std::string, Tensor<Real>> map_;
};

// [N, 16*in_channels] patch features from a [in_channels * side * side]
// image, patches row-major, feature order (dy*4+dx)*in_channels+ch.
template <typename Real>
Tensor<Real> tokens_from_image(const Tensor<Real>& image, int side, int in_channels) {
    if (side % 4 != 0) throw std::invalid_argument("tokens_from_image: side must be a multiple of 4");
    const std::size_t expect = std::size_t(in_channels) * std::size_t(side) * std::size_t(side);
    if (image.size() != expect) throw std::invalid_argument("tokens_from_image: image size mismatch");
    const int grid = side / 4;
    const std::size_t feat = std::size_t(16) * std::size_t(in_channels);
    Tensor<Real> out = Tensor<Real>::zeros({std::size_t(grid) * std::size_t(grid), feat});
    auto o = out.mutable_view();
    auto img = image.view();
    for (int pr = 0; pr < grid; ++pr) {
        for (int pc = 0; pc < grid; ++pc) {
            Real* row = o.data() + (std::size_t(pr) * grid + pc) * feat;
            for (int dy = 0; dy < 4; ++dy)
                for (int dx = 0; dx < 4; ++dx)
                    for (int ch = 0; ch < in_channels; ++ch)
                        row[(dy * 4 + dx) * in_channels + ch] =
                            img[(std::size_t(ch) * side + std::size_t(pr * 4 + dy)) * side + std::size_t(pc * 4 + dx)];
        }
    }
    return out;
}

template <typename Real>
class Model {
public:
    explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
        validate_config(cfg_);
        stages_ = build_stage_plan(cfg_);
        specs_ = enumerate_params(cfg_, stages_);
        for (const ParamSpec& s : specs_) store_.add(s.name, Tensor<Real>::zeros(s.shape));
    }

    const ModelConfig& config() const { return cfg_; }
    const std::vector<StagePlanEntry>& stages() const { return stages_; }
    const std::vector<ParamSpec>& specs() const { return specs_; }
    ParamStore<Real>& params() { return store_; }
    const ParamStore<Real>& params() const { return store_; }

    // Seeded per tensor by name hash, so values do not depend on
    // enumeration order.
    void init_params(std::uint64_t seed) {
        for (const ParamSpec& s : specs_) {
            Tensor<Real>& t = store_.at(s.name);
            switch (s.init) {
                case ParamSpec::Init::zeros:
                    break;
                case ParamSpec::Init::ones: {
                    for (Real& v : t.mutable_view()) v = Real(1);
                    break;
                }
                case ParamSpec::Init::trunc_normal: {
                    Rng rng(hash_combine(seed, fnv1a64(s.name.data(), s.name.size())));
                    for (Real& v : t.mutable_view()) v = Real(rng.trunc_normal(0.02));
                    break;
                }
            }
        }
    }

    // Test hook: zeroing residual-branch output layers makes every block an
    // identity map.
    void zero_residual_branches() {
        for (const ParamSpec& s : specs_) {
            if (s.name.ends_with("attn.w_o") || s.name.ends_with("mlp.fc2.weight")) {
                Tensor<Real>& t = store_.at(s.name);
                for (Real& v : t.mutable_view()) v = Real(0);
            }
        }
    }

    void set_param(const std::string& name, const Tensor<Real>& t) {
        Tensor<Real>& dst = store_.at(name);
        if (!dst.same_shape(t))
            throw std::invalid_argument("set_param: shape mismatch for " + name + ": " + dst.shape_str() + " vs " +
                                        t.shape_str());
        dst = t;
    }

    struct BuiltForward {
        std::vector<std::pair<std::string, typename Graph<Real>::NodeId>> params;  // store order
        typename Graph<Real>::NodeId logits = 0;
    };

    BuiltForward build_forward(Graph<Real>& g, const Tensor<Real>& image) const {
        BuiltForward bf;
        std::map<std::string, typename Graph<Real>::NodeId> ids;
        for (const std::string& name : store_.names()) {
            const auto id = g.param(store_.at(name));
            ids.emplace(name, id);
            bf.params.emplace_back(name, id);
        }
        auto P = [&](const std::string& name) {
            auto it = ids.find(name);
            if (it == ids.end()) throw std::logic_error("build_forward: missing param " + name);
            return it->second;
        };

        auto x = g.constant(tokens_from_image<Real>(image, cfg_.side, cfg_.in_channels));
        x = g.add_row_vector(g.matmul(x, P("embed.proj.weight")), P("embed.proj.bias"));
        x = g.layer_norm(x, P("embed.norm.gain"), P("embed.norm.shift"));

        for (std::size_t s = 0; s < stages_.size(); ++s) {
            const StagePlanEntry& st = stages_[s];
            for (int b = 0; b < st.depth; ++b) {
                const std::string pre = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b) + ".";
                auto h = g.layer_norm(x, P(pre + "norm1.gain"), P(pre + "norm1.shift"));

                AttentionNodes<Real> an;
                an.heads = std::size_t(st.heads);
                an.w_q = P(pre + "attn.w_q");
                an.w_k = P(pre + "attn.w_k");
                an.w_v = P(pre + "attn.w_v");
                an.w_o = P(pre + "attn.w_o");
                an.use_bias = cfg_.bias_sharing.has_value();
                an.sharing = cfg_.bias_sharing.value_or(BiasSharing::per_head);
                an.use_block_bias = cfg_.block_bias;
                if (an.use_bias) {
                    const std::size_t slots = an.sharing == BiasSharing::per_head ? std::size_t(st.heads) : 1;
                    for (const ShapeClassPlan& cls : st.plan.classes) {
                        std::vector<typename Graph<Real>::NodeId> slot_ids;
                        for (std::size_t j = 0; j < slots; ++j)
                            slot_ids.push_back(P(pre + "attn.bias." + cls.shape.shape_id + ".slot" + std::to_string(j)));
                        an.bias.push_back(std::move(slot_ids));
                    }
                }
                if (an.use_block_bias) an.block_bias = P(pre + "attn.block_bias");

                x = g.add(x, pattern_attention(g, h, st.plan, an, cfg_.winnow));

                auto h2 = g.layer_norm(x, P(pre + "norm2.gain"), P(pre + "norm2.shift"));
                auto m = g.add_row_vector(g.matmul(h2, P(pre + "mlp.fc1.weight")), P(pre + "mlp.fc1.bias"));
                m = g.gelu(m);
                m = g.add_row_vector(g.matmul(m, P(pre + "mlp.fc2.weight")), P(pre + "mlp.fc2.bias"));
                x = g.add(x, m);
            }
            if (s + 1 < stages_.size()) {
                const std::string pre = "merge" + std::to_string(s + 1) + ".";
                const int H = st.height, W = st.width;
                std::vector<std::uint32_t> tl, tr, bl, br;
                for (int i = 0; i < H / 2; ++i) {
                    for (int j = 0; j < W / 2; ++j) {
                        tl.push_back(std::uint32_t((2 * i) * W + 2 * j));
                        tr.push_back(std::uint32_t((2 * i) * W + 2 * j + 1));
                        bl.push_back(std::uint32_t((2 * i + 1) * W + 2 * j));
                        br.push_back(std::uint32_t((2 * i + 1) * W + 2 * j + 1));
                    }
                }
                auto cat = g.concat_cols({g.gather_rows(x, tl), g.gather_rows(x, tr), g.gather_rows(x, bl),
                                          g.gather_rows(x, br)});
                cat = g.layer_norm(cat, P(pre + "norm.gain"), P(pre + "norm.shift"));
                x = g.matmul(cat, P(pre + "reduce.weight"));
            }
        }

        x = g.layer_norm(x, P("head.norm.gain"), P("head.norm.shift"));
        x = g.mean_rows(x);
        bf.logits = g.add_row_vector(g.matmul(x, P("head.fc.weight")), P("head.fc.bias"));
        return bf;
    }

    // Logits without tape bookkeeping (still exact): convenience for tests.
    Tensor<Real> forward(const Tensor<Real>& image) const {
        Graph<Real> g;
        return g.value(build_forward(g, image).logits);
    }

private:
    ModelConfig cfg_;
    std::vector<StagePlanEntry> stages_;
    std::vector<ParamSpec> specs_;
    ParamStore<Real> store_;
};

}  // namespace pat
