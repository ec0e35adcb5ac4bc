#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pat/geometry.hpp"
#include "pat/graph.hpp"
#include "pat/pattern.hpp"
#include "pat/rng.hpp"
#include "pat/tensor.hpp"

namespace pat {

enum class BiasMode { absolute, vector, manhattan, sqeuclid };
enum class BiasSharing { per_head, common };

const char* bias_mode_name(BiasMode mode);
BiasMode bias_mode_from(const std::string& name);
const char* bias_sharing_name(BiasSharing sharing);
BiasSharing bias_sharing_from(const std::string& name);

// Marks (row, col) pairs of a full attention map that carry no bias
// parameter (rows outside the update core). Matches Graph::kNoEntry.
inline constexpr std::uint32_t kNoBias = 0xffffffffu;

// One shape class resolved for attention: core positions inside the sensor
// ordering plus bias parameter indexing for a fixed mode.
struct ShapeClassPlan {
    KernelShape shape;
    std::size_t sensor_size = 0;
    std::size_t core_size = 0;
    std::vector<std::uint32_t> core_pos;         // core cell positions in sensor order
    std::size_t bias_param_count = 0;            // theta entries per slot
    std::vector<std::uint32_t> bias_index;       // U*S -> theta index
    std::vector<std::uint32_t> full_bias_index;  // S*S; non-update rows = kNoBias
};

struct InstancePlan {
    std::uint32_t shape_slot = 0;
    std::vector<std::uint32_t> sensor_tokens;
    std::vector<std::uint32_t> core_tokens;
};

struct AttentionPlan {
    int height = 0;
    int width = 0;
    BiasMode mode = BiasMode::absolute;
    std::size_t tokens = 0;
    std::vector<ShapeClassPlan> classes;  // shape_id order
    std::vector<InstancePlan> instances;  // layout instance order
};

AttentionPlan make_attention_plan(const PatternLayout& layout, BiasMode mode);

// Exact multiply-add counts per the cost model: per instance and head the
// score stage costs (U or S)*S*d, the value stage the same, projections
// 3*S*C^2 + U*C^2 per instance.
struct FlopCounts {
    std::uint64_t p_stage = 0;
    std::uint64_t av_stage = 0;
    std::uint64_t proj = 0;
    std::uint64_t total() const { return p_stage + av_stage + proj; }
};

struct ClassFlops {
    std::string shape_id;
    std::size_t instances = 0;
    std::size_t sensor_size = 0;
    std::size_t core_size = 0;
    FlopCounts winnow;
    FlopCounts full;
};

struct FlopReport {
    FlopCounts winnow;
    FlopCounts full;
    std::vector<ClassFlops> by_class;
};

FlopReport flop_count(const PatternLayout& layout, std::size_t channels, std::size_t heads);

// Literal four-loop evaluation of A[r,c] = sum_j sum_i Q[r,j] K[i,j] V[i,c]
// (no softmax, no scaling); the reference the fast matrix path is checked
// against.
Tensor<double> qkva_oracle(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v);

template <typename Real>
struct AttentionWeights {
    std::size_t heads = 1;
    Tensor<Real> w_q, w_k, w_v, w_o;  // [C, C]
    bool use_bias = false;
    BiasSharing sharing = BiasSharing::per_head;
    bool use_block_bias = false;
    std::vector<std::vector<Tensor<Real>>> bias;  // [class][slot], each [theta, 1]
    Tensor<Real> block_bias;                      // [instances, 1]

    std::size_t slots() const { return sharing == BiasSharing::per_head ? heads : 1; }
};

template <typename Real>
AttentionWeights<Real> random_attention_weights(const AttentionPlan& plan, std::size_t channels, std::size_t heads,
                                                bool use_bias, BiasSharing sharing, bool use_block_bias, Rng& rng) {
    AttentionWeights<Real> w;
    w.heads = heads;
    w.use_bias = use_bias;
    w.sharing = sharing;
    w.use_block_bias = use_block_bias;
    auto rand = [&rng](std::size_t r, std::size_t c, double sd) {
        Tensor<Real> t = Tensor<Real>::zeros({r, c});
        for (Real& x : t.mutable_view()) x = Real(rng.normal(0.0, sd));
        return t;
    };
    w.w_q = rand(channels, channels, 0.1);
    w.w_k = rand(channels, channels, 0.1);
    w.w_v = rand(channels, channels, 0.1);
    w.w_o = rand(channels, channels, 0.1);
    if (use_bias) {
        for (const ShapeClassPlan& cls : plan.classes) {
            std::vector<Tensor<Real>> slots;
            for (std::size_t s = 0; s < w.slots(); ++s) slots.push_back(rand(cls.bias_param_count, 1, 0.2));
            w.bias.push_back(std::move(slots));
        }
    }
    if (use_block_bias) w.block_bias = rand(plan.instances.size(), 1, 0.2);
    return w;
}

// Materializes the bias matrix one head sees for one shape class: U x S in
// pattern layers, N x N when core = sensor.
template <typename Real>
Tensor<Real> bias_matrix(const AttentionPlan& plan, const AttentionWeights<Real>& w, std::size_t class_slot,
                         std::size_t head) {
    if (!w.use_bias) throw std::invalid_argument("bias_matrix: bias disabled");
    if (class_slot >= plan.classes.size()) throw std::out_of_range("bias_matrix: shape class out of range");
    if (head >= w.heads) throw std::out_of_range("bias_matrix: head out of range");
    const ShapeClassPlan& cls = plan.classes[class_slot];
    const Tensor<Real>& theta = w.bias.at(class_slot).at(w.sharing == BiasSharing::per_head ? head : 0);
    Tensor<Real> out = Tensor<Real>::zeros({cls.core_size, cls.sensor_size});
    auto o = out.mutable_view();
    auto t = theta.view();
    for (std::size_t e = 0; e < o.size(); ++e) o[e] = t[cls.bias_index[e]];
    return out;
}

template <typename Real>
struct AttentionNodes {
    std::size_t heads = 1;
    typename Graph<Real>::NodeId w_q = 0, w_k = 0, w_v = 0, w_o = 0;
    bool use_bias = false;
    BiasSharing sharing = BiasSharing::per_head;
    bool use_block_bias = false;
    std::vector<std::vector<typename Graph<Real>::NodeId>> bias;
    typename Graph<Real>::NodeId block_bias = 0;
};

template <typename Real>
AttentionNodes<Real> register_attention(Graph<Real>& g, const AttentionWeights<Real>& w) {
    AttentionNodes<Real> n;
    n.heads = w.heads;
    n.use_bias = w.use_bias;
    n.sharing = w.sharing;
    n.use_block_bias = w.use_block_bias;
    n.w_q = g.param(w.w_q);
    n.w_k = g.param(w.w_k);
    n.w_v = g.param(w.w_v);
    n.w_o = g.param(w.w_o);
    for (const auto& slots : w.bias) {
        std::vector<typename Graph<Real>::NodeId> ids;
        for (const Tensor<Real>& t : slots) ids.push_back(g.param(t));
        n.bias.push_back(std::move(ids));
    }
    if (w.use_block_bias) n.block_bias = g.param(w.block_bias);
    return n;
}

// Pattern multi-head attention over a planned layout. With winnow on, only
// update rows of Q and P are computed; with it off the full S x S map is
// formed and non-update rows are dropped before the scatter. Canonical
// attention is the same graph over a one-instance full-window layout.
template <typename Real>
typename Graph<Real>::NodeId pattern_attention(Graph<Real>& g, typename Graph<Real>::NodeId x,
                                               const AttentionPlan& plan, const AttentionNodes<Real>& w,
                                               bool winnow) {
    using NodeId = typename Graph<Real>::NodeId;
    const std::size_t C = g.value(w.w_q).shape()[0];
    if (g.value(x).rank() != 2 || g.value(x).shape()[0] != plan.tokens || g.value(x).shape()[1] != C)
        throw std::invalid_argument("pattern_attention: input must be [tokens, C]");
    if (w.heads == 0 || C % w.heads != 0)
        throw std::invalid_argument("pattern_attention: heads must divide channels");
    if (w.use_bias && w.bias.size() != plan.classes.size())
        throw std::invalid_argument("pattern_attention: one bias table per shape class required");
    if (w.use_block_bias && g.value(w.block_bias).shape()[0] != plan.instances.size())
        throw std::invalid_argument("pattern_attention: one block bias per instance required");
    const std::size_t d = C / w.heads;
    const Real inv_sqrt_d = Real(1) / std::sqrt(Real(d));

    std::vector<std::pair<NodeId, std::vector<std::uint32_t>>> parts;
    parts.reserve(plan.instances.size());
    for (std::size_t ii = 0; ii < plan.instances.size(); ++ii) {
        const InstancePlan& inst = plan.instances[ii];
        const ShapeClassPlan& cls = plan.classes.at(inst.shape_slot);
        const std::size_t S = cls.sensor_size, U = cls.core_size;

        const NodeId xs = g.gather_rows(x, inst.sensor_tokens);
        const NodeId k = g.matmul(xs, w.w_k);
        const NodeId v = g.matmul(xs, w.w_v);
        const NodeId q = winnow ? g.matmul(g.gather_rows(x, inst.core_tokens), w.w_q) : g.matmul(xs, w.w_q);
        const std::size_t qrows = winnow ? U : S;

        NodeId beta = 0;
        if (w.use_block_bias) beta = g.gather_rows(w.block_bias, {std::uint32_t(ii)});

        std::vector<NodeId> head_outs;
        head_outs.reserve(w.heads);
        for (std::size_t h = 0; h < w.heads; ++h) {
            const NodeId qh = g.slice_cols(q, h * d, (h + 1) * d);
            const NodeId kh = g.slice_cols(k, h * d, (h + 1) * d);
            const NodeId vh = g.slice_cols(v, h * d, (h + 1) * d);
            NodeId p = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_d);
            if (w.use_bias) {
                const NodeId theta = w.bias[inst.shape_slot][w.sharing == BiasSharing::per_head ? h : 0];
                const NodeId b = winnow ? g.table_lookup(theta, cls.bias_index, U, S)
                                        : g.table_lookup(theta, cls.full_bias_index, S, S);
                p = g.add(p, b);
            }
            if (w.use_block_bias) p = g.add_scalar(p, beta);
            head_outs.push_back(g.matmul(g.softmax_rows(p), vh));
        }
        NodeId merged = w.heads == 1 ? head_outs[0] : g.concat_cols(head_outs);
        NodeId proj = g.matmul(merged, w.w_o);
        if (!winnow && qrows != U) proj = g.gather_rows(proj, cls.core_pos);
        parts.emplace_back(proj, inst.core_tokens);
    }
    return g.assemble_rows(plan.tokens, parts);
}

// Tape-free forward for benchmarking; instances may run on worker threads
// (core writes are disjoint, so the result is identical for any count).
template <typename Real>
Tensor<Real> pattern_attention_eval(const Tensor<Real>& x, const AttentionPlan& plan,
                                    const AttentionWeights<Real>& w, bool winnow, int threads = 1) {
    const std::size_t N = plan.tokens;
    const std::size_t C = w.w_q.shape()[0];
    if (x.rank() != 2 || x.shape()[0] != N || x.shape()[1] != C)
        throw std::invalid_argument("pattern_attention_eval: input must be [tokens, C]");
    if (w.heads == 0 || C % w.heads != 0)
        throw std::invalid_argument("pattern_attention_eval: heads must divide channels");
    const std::size_t heads = w.heads, d = C / heads;
    const Real inv_sqrt_d = Real(1) / std::sqrt(Real(d));

    // bias tables resolved once per (class, slot)
    std::vector<std::vector<std::vector<Real>>> tables;
    if (w.use_bias) {
        if (w.bias.size() != plan.classes.size())
            throw std::invalid_argument("pattern_attention_eval: one bias table per shape class required");
        tables.resize(plan.classes.size());
        for (std::size_t c = 0; c < plan.classes.size(); ++c) {
            const ShapeClassPlan& cls = plan.classes[c];
            const auto& index = winnow ? cls.bias_index : cls.full_bias_index;
            tables[c].resize(w.slots());
            for (std::size_t s = 0; s < w.slots(); ++s) {
                auto theta = w.bias[c][s].view();
                std::vector<Real>& t = tables[c][s];
                t.resize(index.size());
                for (std::size_t e = 0; e < index.size(); ++e)
                    t[e] = index[e] == kNoBias ? Real(0) : theta[index[e]];
            }
        }
    }
    if (w.use_block_bias && w.block_bias.shape()[0] != plan.instances.size())
        throw std::invalid_argument("pattern_attention_eval: one block bias per instance required");

    Tensor<Real> out = Tensor<Real>::zeros({N, C});
    const std::span<Real> o = out.mutable_view();
    const auto xv = x.view();
    const auto wq = w.w_q.view(), wk = w.w_k.view(), wv = w.w_v.view(), wo = w.w_o.view();

    auto run = [&](std::size_t begin, std::size_t end) {
        std::vector<Real> xs, q, k, v, p, merged;
        for (std::size_t ii = begin; ii < end; ++ii) {
            const InstancePlan& inst = plan.instances[ii];
            const ShapeClassPlan& cls = plan.classes[inst.shape_slot];
            const std::size_t S = cls.sensor_size, U = cls.core_size;
            const std::size_t qrows = winnow ? U : S;
            const Real beta = w.use_block_bias ? w.block_bias.view()[ii] : Real(0);

            xs.assign(S * C, Real(0));
            for (std::size_t s = 0; s < S; ++s)
                std::copy_n(xv.data() + std::size_t(inst.sensor_tokens[s]) * C, C, xs.data() + s * C);
            k.assign(S * C, Real(0));
            matmul_nn<Real>(xs, wk, k, S, C, C);
            v.assign(S * C, Real(0));
            matmul_nn<Real>(xs, wv, v, S, C, C);
            q.assign(qrows * C, Real(0));
            if (winnow) {
                std::vector<Real> xu(U * C);
                for (std::size_t u = 0; u < U; ++u)
                    std::copy_n(xs.data() + std::size_t(cls.core_pos[u]) * C, C, xu.data() + u * C);
                matmul_nn<Real>(std::span<const Real>(xu), wq, q, U, C, C);
            } else {
                matmul_nn<Real>(xs, wq, q, S, C, C);
            }

            merged.assign(qrows * C, Real(0));
            p.assign(qrows * S, Real(0));
            for (std::size_t h = 0; h < heads; ++h) {
                const Real* bias =
                    w.use_bias ? tables[inst.shape_slot][w.sharing == BiasSharing::per_head ? h : 0].data() : nullptr;
                const std::size_t hoff = h * d;
                for (std::size_t r = 0; r < qrows; ++r) {
                    const Real* qr = q.data() + r * C + hoff;
                    for (std::size_t s = 0; s < S; ++s) {
                        const Real* ks = k.data() + s * C + hoff;
                        Real acc = 0;
                        for (std::size_t t = 0; t < d; ++t) acc += qr[t] * ks[t];
                        p[r * S + s] = acc * inv_sqrt_d + (bias ? bias[r * S + s] : Real(0)) + beta;
                    }
                }
                softmax_rows_inplace<Real>(p, qrows, S);
                for (std::size_t r = 0; r < qrows; ++r) {
                    Real* mr = merged.data() + r * C + hoff;
                    for (std::size_t s = 0; s < S; ++s) {
                        const Real a = p[r * S + s];
                        const Real* vs = v.data() + s * C + hoff;
                        for (std::size_t t = 0; t < d; ++t) mr[t] += a * vs[t];
                    }
                }
            }

            for (std::size_t u = 0; u < U; ++u) {
                const Real* mrow = merged.data() + std::size_t(winnow ? u : cls.core_pos[u]) * C;
                Real* dst = o.data() + std::size_t(inst.core_tokens[u]) * C;
                for (std::size_t t = 0; t < C; ++t) {
                    const Real mv = mrow[t];
                    const Real* wrow = wo.data() + t * C;
                    for (std::size_t j = 0; j < C; ++j) dst[j] += mv * wrow[j];
                }
            }
        }
    };

    const std::size_t n_inst = plan.instances.size();
    if (threads <= 1 || n_inst <= 1) {
        run(0, n_inst);
    } else {
        const std::size_t workers = std::min<std::size_t>(std::size_t(threads), n_inst);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t) {
            const std::size_t begin = n_inst * t / workers, end = n_inst * (t + 1) / workers;
            pool.emplace_back(run, begin, end);
        }
        for (std::thread& t : pool) t.join();
    }
    return out;
}

// Row-major CSV with %.9e cells.
template <typename Real>
std::string csv_matrix(const Tensor<Real>& m) {
    if (m.rank() != 2) throw std::invalid_argument("csv_matrix: rank-2 tensor required");
    std::string out;
    char buf[40];
    const std::size_t rows = m.shape()[0], cols = m.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.9e", double(m(r, c)));
            out += buf;
            if (c + 1 < cols) out += ',';
        }
        out += '\n';
    }
    return out;
}

}  // namespace pat
