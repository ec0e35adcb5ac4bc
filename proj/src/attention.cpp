#include "pat/attention.hpp"

#include <algorithm>
#include <map>

namespace pat {

static_assert(Graph<float>::kNoEntry == kNoBias);
static_assert(Graph<double>::kNoEntry == kNoBias);

const char* bias_mode_name(BiasMode mode) {
    switch (mode) {
        case BiasMode::absolute: return "absolute";
        case BiasMode::vector: return "vector";
        case BiasMode::manhattan: return "manhattan";
        case BiasMode::sqeuclid: return "sqeuclid";
    }
    return "unknown";
}

BiasMode bias_mode_from(const std::string& name) {
    if (name == "absolute") return BiasMode::absolute;
    if (name == "vector") return BiasMode::vector;
    if (name == "manhattan") return BiasMode::manhattan;
    if (name == "sqeuclid") return BiasMode::sqeuclid;
    throw std::invalid_argument("unknown bias mode '" + name + "'");
}

const char* bias_sharing_name(BiasSharing sharing) {
    return sharing == BiasSharing::per_head ? "per_head" : "common";
}

BiasSharing bias_sharing_from(const std::string& name) {
    if (name == "per_head") return BiasSharing::per_head;
    if (name == "common") return BiasSharing::common;
    throw std::invalid_argument("unknown bias sharing '" + name + "'");
}

namespace {

// theta index per (u, s) pair under one parameterization mode
void fill_bias_index(ShapeClassPlan& cls, BiasMode mode) {
    const std::size_t S = cls.sensor_size, U = cls.core_size;
    switch (mode) {
        case BiasMode::absolute: {
            cls.bias_param_count = U * S;
            cls.bias_index.resize(U * S);
            for (std::size_t e = 0; e < U * S; ++e) cls.bias_index[e] = std::uint32_t(e);
            break;
        }
        case BiasMode::vector: {
            const DisplacementTable table = displacements(cls.shape);
            cls.bias_param_count = table.distinct.size();
            cls.bias_index = table.pair_index;
            break;
        }
        case BiasMode::manhattan:
        case BiasMode::sqeuclid: {
            const auto& core = cls.shape.core.cells();
            const auto& sensor = cls.shape.sensor.cells();
            std::vector<int> keys;
            keys.reserve(U * S);
            for (const Cell& u : core) {
                for (const Cell& s : sensor) {
                    const int dr = u.row - s.row, dc = u.col - s.col;
                    keys.push_back(mode == BiasMode::manhattan ? std::abs(dr) + std::abs(dc) : dr * dr + dc * dc);
                }
            }
            std::vector<int> distinct = keys;
            std::sort(distinct.begin(), distinct.end());
            distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
            cls.bias_param_count = distinct.size();
            cls.bias_index.resize(keys.size());
            for (std::size_t e = 0; e < keys.size(); ++e) {
                const auto it = std::lower_bound(distinct.begin(), distinct.end(), keys[e]);
                cls.bias_index[e] = std::uint32_t(it - distinct.begin());
            }
            break;
        }
    }
    cls.full_bias_index.assign(S * S, kNoBias);
    for (std::size_t u = 0; u < U; ++u)
        for (std::size_t s = 0; s < S; ++s)
            cls.full_bias_index[std::size_t(cls.core_pos[u]) * S + s] = cls.bias_index[u * S + s];
}

std::vector<std::uint32_t> token_ids(const CellSet& cells, int width) {
    std::vector<std::uint32_t> out;
    out.reserve(cells.size());
    for (std::size_t idx : cell_row_indices(cells, width)) out.push_back(std::uint32_t(idx));
    return out;
}

}  // namespace

AttentionPlan make_attention_plan(const PatternLayout& layout, BiasMode mode) {
    AttentionPlan plan;
    plan.height = layout.height;
    plan.width = layout.width;
    plan.mode = mode;
    plan.tokens = layout.tokens();

    std::map<std::string, std::uint32_t> slot_of;
    for (const auto& [id, shape] : layout.shapes) {
        slot_of.emplace(id, std::uint32_t(plan.classes.size()));
        ShapeClassPlan cls;
        cls.shape = shape;
        cls.sensor_size = shape.sensor_size();
        cls.core_size = shape.core_size();
        const auto& sensor = shape.sensor.cells();
        cls.core_pos.reserve(cls.core_size);
        for (const Cell& u : shape.core.cells()) {
            const auto it = std::lower_bound(sensor.begin(), sensor.end(), u);
            cls.core_pos.push_back(std::uint32_t(it - sensor.begin()));
        }
        fill_bias_index(cls, mode);
        plan.classes.push_back(std::move(cls));
    }

    plan.instances.reserve(layout.instances.size());
    for (const KernelInstance& inst : layout.instances) {
        InstancePlan ip;
        ip.shape_slot = slot_of.at(inst.shape_id);
        ip.sensor_tokens = token_ids(inst.sensor_cells, layout.width);
        ip.core_tokens = token_ids(inst.core_cells, layout.width);
        plan.instances.push_back(std::move(ip));
    }
    return plan;
}

FlopReport flop_count(const PatternLayout& layout, std::size_t channels, std::size_t heads) {
    if (heads == 0 || channels == 0 || channels % heads != 0)
        throw std::invalid_argument("flop_count: heads must divide channels");
    const std::uint64_t C = channels;

    std::map<std::string, ClassFlops> by_id;
    for (const KernelInstance& inst : layout.instances) {
        const KernelShape& shape = layout.shapes.at(inst.shape_id);
        ClassFlops& cf = by_id[inst.shape_id];
        if (cf.instances == 0) {
            cf.shape_id = inst.shape_id;
            cf.sensor_size = shape.sensor_size();
            cf.core_size = shape.core_size();
        }
        ++cf.instances;
    }

    FlopReport report;
    for (auto& [id, cf] : by_id) {
        const std::uint64_t S = cf.sensor_size, U = cf.core_size, n = cf.instances;
        cf.winnow.p_stage = n * U * S * C;
        cf.winnow.av_stage = n * U * S * C;
        cf.full.p_stage = n * S * S * C;
        cf.full.av_stage = n * S * S * C;
        cf.winnow.proj = cf.full.proj = n * (3 * S * C * C + U * C * C);
        report.winnow.p_stage += cf.winnow.p_stage;
        report.winnow.av_stage += cf.winnow.av_stage;
        report.winnow.proj += cf.winnow.proj;
        report.full.p_stage += cf.full.p_stage;
        report.full.av_stage += cf.full.av_stage;
        report.full.proj += cf.full.proj;
        report.by_class.push_back(cf);
    }
    return report;
}

Tensor<double> qkva_oracle(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v) {
    if (q.rank() != 2 || !q.same_shape(k) || !q.same_shape(v))
        throw std::invalid_argument("qkva_oracle: three equal [h, w] tensors required");
    const std::size_t h = q.shape()[0], w = q.shape()[1];
    Tensor<double> out = Tensor<double>::zeros({h, w});
    auto o = out.mutable_view();
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0;
            for (std::size_t j = 0; j < w; ++j)
                for (std::size_t i = 0; i < h; ++i) acc += q(r, j) * k(i, j) * v(i, c);
            o[r * w + c] = acc;
        }
    }
    return out;
}

}  // namespace pat
