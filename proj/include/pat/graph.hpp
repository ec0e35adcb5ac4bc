#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pat/tensor.hpp"

namespace pat {

// Reverse-mode tape over eagerly evaluated ops. Values are computed at
// op-creation time in construction order, which makes the tape topological
// by construction; backward() walks it once in reverse. Graphs are built
// fresh per forward pass.
template <typename Real>
class Graph {
public:
    using NodeId = std::uint32_t;

    // table_lookup entries mapping to this sentinel read as 0 and route no
    // gradient (used for bias rows that are never parameterized).
    static constexpr std::uint32_t kNoEntry = 0xffffffffu;

    NodeId constant(Tensor<Real> v) { return push_leaf(std::move(v), false); }
    NodeId param(Tensor<Real> v) { return push_leaf(std::move(v), true); }

    const Tensor<Real>& value(NodeId id) const { return nodes_.at(id).value; }
    const Tensor<Real>& grad(NodeId id) const { return nodes_.at(id).grad; }
    bool needs_grad(NodeId id) const { return nodes_.at(id).needs_grad; }
    std::size_t node_count() const { return nodes_.size(); }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor<Real>& av = val2(a, "matmul");
        const Tensor<Real>& bv = val2(b, "matmul");
        const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
        if (bv.shape()[0] != k)
            throw std::invalid_argument("matmul: inner dims " + av.shape_str() + " x " + bv.shape_str());
        Tensor<Real> out = Tensor<Real>::zeros({m, n});
        matmul_nn<Real>(av.view(), bv.view(), out.mutable_view(), m, k, n);
        return push_op(Op::matmul, std::move(out), {a, b});
    }

    NodeId transpose(NodeId a) {
        const Tensor<Real>& av = val2(a, "transpose");
        const std::size_t m = av.shape()[0], n = av.shape()[1];
        Tensor<Real> out = Tensor<Real>::zeros({n, m});
        auto o = out.mutable_view();
        auto x = av.view();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) o[j * m + i] = x[i * n + j];
        return push_op(Op::transpose, std::move(out), {a});
    }

    NodeId add(NodeId a, NodeId b) {
        const Tensor<Real>& av = value(a);
        const Tensor<Real>& bv = value(b);
        if (!av.same_shape(bv))
            throw std::invalid_argument("add: shape " + av.shape_str() + " vs " + bv.shape_str());
        Tensor<Real> out = av;
        auto o = out.mutable_view();
        auto y = bv.view();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
        return push_op(Op::add, std::move(out), {a, b});
    }

    NodeId scale(NodeId a, Real c) {
        Tensor<Real> out = value(a);
        auto o = out.mutable_view();
        for (Real& v : o) v *= c;
        NodeId id = push_op(Op::scale, std::move(out), {a});
        nodes_[id].c = c;
        return id;
    }

    NodeId add_row_vector(NodeId a, NodeId v) {
        const Tensor<Real>& av = val2(a, "add_row_vector");
        const Tensor<Real>& vv = value(v);
        const std::size_t m = av.shape()[0], n = av.shape()[1];
        if (vv.size() != n)
            throw std::invalid_argument("add_row_vector: " + av.shape_str() + " vs " + vv.shape_str());
        Tensor<Real> out = av;
        auto o = out.mutable_view();
        auto y = vv.view();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) o[i * n + j] += y[j];
        return push_op(Op::add_row_vector, std::move(out), {a, v});
    }

    NodeId add_scalar(NodeId a, NodeId s) {
        const Tensor<Real>& sv = value(s);
        if (sv.size() != 1) throw std::invalid_argument("add_scalar: addend must hold one value");
        Tensor<Real> out = value(a);
        auto o = out.mutable_view();
        const Real c = sv[0];
        for (Real& v : o) v += c;
        return push_op(Op::add_scalar, std::move(out), {a, s});
    }

    NodeId softmax_rows(NodeId a) {
        const Tensor<Real>& av = val2(a, "softmax_rows");
        for (Real v : av.view())
            if (std::isnan(v)) throw std::domain_error("softmax_rows: NaN input");
        Tensor<Real> out = av;
        softmax_rows_inplace<Real>(out.mutable_view(), av.shape()[0], av.shape()[1]);
        return push_op(Op::softmax_rows, std::move(out), {a});
    }

    NodeId layer_norm(NodeId x, NodeId gain, NodeId shift, Real eps = Real(1e-5)) {
        const Tensor<Real>& xv = val2(x, "layer_norm");
        const std::size_t m = xv.shape()[0], n = xv.shape()[1];
        const Tensor<Real>& gv = value(gain);
        const Tensor<Real>& sv = value(shift);
        if (gv.size() != n || sv.size() != n)
            throw std::invalid_argument("layer_norm: gain/shift must have " + std::to_string(n) + " entries");
        Tensor<Real> out = Tensor<Real>::zeros({m, n});
        auto o = out.mutable_view();
        auto xs = xv.view();
        auto gs = gv.view();
        auto ss = sv.view();
        std::vector<Real> saved(m * n + m);
        for (std::size_t i = 0; i < m; ++i) {
            const Real* row = xs.data() + i * n;
            Real mean = 0;
            for (std::size_t j = 0; j < n; ++j) mean += row[j];
            mean /= Real(n);
            Real var = 0;
            for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
            var /= Real(n);
            const Real inv = Real(1) / std::sqrt(var + eps);
            saved[m * n + i] = inv;
            for (std::size_t j = 0; j < n; ++j) {
                const Real xh = (row[j] - mean) * inv;
                saved[i * n + j] = xh;
                o[i * n + j] = xh * gs[j] + ss[j];
            }
        }
        NodeId id = push_op(Op::layer_norm, std::move(out), {x, gain, shift});
        nodes_[id].saved = std::move(saved);
        nodes_[id].c = eps;
        return id;
    }

    NodeId gelu(NodeId a) {
        Tensor<Real> out = value(a);
        auto o = out.mutable_view();
        for (Real& v : o) v = gelu_scalar(v);
        return push_op(Op::gelu, std::move(out), {a});
    }

    NodeId gather_rows(NodeId a, std::vector<std::uint32_t> idx) {
        const Tensor<Real>& av = val2(a, "gather_rows");
        if (idx.empty()) throw std::invalid_argument("gather_rows: empty index list");
        const std::size_t m = av.shape()[0], n = av.shape()[1];
        for (std::uint32_t r : idx)
            if (r >= m) throw std::out_of_range("gather_rows: index " + std::to_string(r) + " of " + std::to_string(m));
        Tensor<Real> out = Tensor<Real>::zeros({idx.size(), n});
        auto o = out.mutable_view();
        auto x = av.view();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) o[i * n + j] = x[std::size_t(idx[i]) * n + j];
        NodeId id = push_op(Op::gather_rows, std::move(out), {a});
        nodes_[id].map = std::move(idx);
        return id;
    }

    // Builds an [n_rows, n] tensor from parts whose target rows must cover
    // every output row exactly once.
    NodeId assemble_rows(std::size_t n_rows,
                         const std::vector<std::pair<NodeId, std::vector<std::uint32_t>>>& parts) {
        if (parts.empty()) throw std::invalid_argument("assemble_rows: no parts");
        const std::size_t n = val2(parts.front().first, "assemble_rows").shape()[1];
        Tensor<Real> out = Tensor<Real>::zeros({n_rows, n});
        auto o = out.mutable_view();
        std::vector<std::uint8_t> written(n_rows, 0);
        std::vector<NodeId> in;
        std::vector<std::uint32_t> map;
        for (const auto& [pid, idx] : parts) {
            const Tensor<Real>& pv = val2(pid, "assemble_rows");
            if (pv.shape()[1] != n) throw std::invalid_argument("assemble_rows: column mismatch");
            if (pv.shape()[0] != idx.size()) throw std::invalid_argument("assemble_rows: index count != rows");
            auto x = pv.view();
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const std::uint32_t r = idx[i];
                if (r >= n_rows) throw std::out_of_range("assemble_rows: row " + std::to_string(r) + " out of range");
                if (written[r]) throw std::invalid_argument("assemble_rows: row " + std::to_string(r) + " written twice");
                written[r] = 1;
                for (std::size_t j = 0; j < n; ++j) o[std::size_t(r) * n + j] = x[i * n + j];
            }
            in.push_back(pid);
            map.insert(map.end(), idx.begin(), idx.end());
        }
        for (std::size_t r = 0; r < n_rows; ++r)
            if (!written[r]) throw std::invalid_argument("assemble_rows: row " + std::to_string(r) + " never written");
        NodeId id = push_op(Op::assemble_rows, std::move(out), std::move(in));
        nodes_[id].map = std::move(map);
        return id;
    }

    NodeId slice_cols(NodeId a, std::size_t c0, std::size_t c1) {
        const Tensor<Real>& av = val2(a, "slice_cols");
        const std::size_t m = av.shape()[0], n = av.shape()[1];
        if (c0 >= c1 || c1 > n) throw std::invalid_argument("slice_cols: bad range");
        Tensor<Real> out = Tensor<Real>::zeros({m, c1 - c0});
        auto o = out.mutable_view();
        auto x = av.view();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = c0; j < c1; ++j) o[i * (c1 - c0) + (j - c0)] = x[i * n + j];
        NodeId id = push_op(Op::slice_cols, std::move(out), {a});
        nodes_[id].iargs = {std::int64_t(c0), std::int64_t(c1)};
        return id;
    }

    NodeId concat_cols(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
        const std::size_t m = val2(parts.front(), "concat_cols").shape()[0];
        std::size_t n = 0;
        std::vector<std::int64_t> offsets;
        for (NodeId p : parts) {
            const Tensor<Real>& pv = val2(p, "concat_cols");
            if (pv.shape()[0] != m) throw std::invalid_argument("concat_cols: row mismatch");
            offsets.push_back(std::int64_t(n));
            n += pv.shape()[1];
        }
        Tensor<Real> out = Tensor<Real>::zeros({m, n});
        auto o = out.mutable_view();
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const Tensor<Real>& pv = value(parts[p]);
            const std::size_t pn = pv.shape()[1], off = std::size_t(offsets[p]);
            auto x = pv.view();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < pn; ++j) o[i * n + off + j] = x[i * pn + j];
        }
        NodeId id = push_op(Op::concat_cols, std::move(out), parts);
        nodes_[id].iargs = std::move(offsets);
        return id;
    }

    // out[i,j] = theta[map[i*cols+j]], kNoEntry entries read as 0. Tied
    // entries accumulate their gradients onto the shared parameter.
    NodeId table_lookup(NodeId theta, std::vector<std::uint32_t> map, std::size_t rows, std::size_t cols) {
        const Tensor<Real>& tv = value(theta);
        if (map.size() != rows * cols) throw std::invalid_argument("table_lookup: map size != rows*cols");
        for (std::uint32_t e : map)
            if (e != kNoEntry && e >= tv.size())
                throw std::out_of_range("table_lookup: entry " + std::to_string(e) + " of " + std::to_string(tv.size()));
        Tensor<Real> out = Tensor<Real>::zeros({rows, cols});
        auto o = out.mutable_view();
        auto t = tv.view();
        for (std::size_t e = 0; e < map.size(); ++e) o[e] = map[e] == kNoEntry ? Real(0) : t[map[e]];
        NodeId id = push_op(Op::table_lookup, std::move(out), {theta});
        nodes_[id].map = std::move(map);
        return id;
    }

    NodeId mean_rows(NodeId a) {
        const Tensor<Real>& av = val2(a, "mean_rows");
        const std::size_t m = av.shape()[0], n = av.shape()[1];
        Tensor<Real> out = Tensor<Real>::zeros({1, n});
        auto o = out.mutable_view();
        auto x = av.view();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) o[j] += x[i * n + j];
        for (std::size_t j = 0; j < n; ++j) o[j] /= Real(m);
        return push_op(Op::mean_rows, std::move(out), {a});
    }

    // Mean over rows of -log softmax(logits)[label].
    NodeId cross_entropy(NodeId logits, std::vector<std::uint32_t> labels) {
        const Tensor<Real>& lv = val2(logits, "cross_entropy");
        const std::size_t m = lv.shape()[0], k = lv.shape()[1];
        if (labels.size() != m) throw std::invalid_argument("cross_entropy: one label per row required");
        for (std::uint32_t c : labels)
            if (c >= k) throw std::out_of_range("cross_entropy: label " + std::to_string(c) + " of " + std::to_string(k));
        Tensor<Real> probs = lv;
        softmax_rows_inplace<Real>(probs.mutable_view(), m, k);
        auto p = probs.view();
        Real loss = 0;
        for (std::size_t i = 0; i < m; ++i) loss -= std::log(p[i * k + labels[i]]);
        loss /= Real(m);
        NodeId id = push_op(Op::cross_entropy, Tensor<Real>::from({1, 1}, {loss}), {logits});
        nodes_[id].saved.assign(p.begin(), p.end());
        nodes_[id].map = std::move(labels);
        return id;
    }

    void backward(NodeId loss) {
        Node& top = nodes_.at(loss);
        if (top.value.size() != 1) throw std::invalid_argument("backward: loss must hold one value");
        for (Node& n : nodes_) n.grad = Tensor<Real>();
        top.grad = Tensor<Real>::from(top.value.shape(), {Real(1)});
        for (std::uint32_t id = std::uint32_t(nodes_.size()); id-- > 0;) {
            Node& node = nodes_[id];
            if (node.op == Op::leaf || !node.needs_grad || node.grad.empty()) continue;
            backprop(node);
        }
    }

private:
    enum class Op : std::uint8_t {
        leaf,
        matmul,
        transpose,
        add,
        scale,
        add_row_vector,
        add_scalar,
        softmax_rows,
        layer_norm,
        gelu,
        gather_rows,
        assemble_rows,
        slice_cols,
        concat_cols,
        table_lookup,
        mean_rows,
        cross_entropy,
    };

    struct Node {
        Op op = Op::leaf;
        bool needs_grad = false;
        Tensor<Real> value;
        Tensor<Real> grad;
        std::vector<NodeId> in;
        std::vector<std::int64_t> iargs;
        std::vector<std::uint32_t> map;
        std::vector<Real> saved;
        Real c = Real(0);
    };

    NodeId push_leaf(Tensor<Real> v, bool needs_grad) {
        if (v.empty()) throw std::invalid_argument("graph leaf: empty tensor");
        Node n;
        n.value = std::move(v);
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return NodeId(nodes_.size() - 1);
    }

    NodeId push_op(Op op, Tensor<Real> v, std::vector<NodeId> in) {
        Node n;
        n.op = op;
        n.value = std::move(v);
        n.in = std::move(in);
        for (NodeId i : n.in) n.needs_grad = n.needs_grad || nodes_.at(i).needs_grad;
        nodes_.push_back(std::move(n));
        return NodeId(nodes_.size() - 1);
    }

    const Tensor<Real>& val2(NodeId id, const char* op) const {
        const Tensor<Real>& v = nodes_.at(id).value;
        if (v.rank() != 2) throw std::invalid_argument(std::string(op) + ": rank-2 tensor required, got " + v.shape_str());
        return v;
    }

    bool wants(NodeId id) const { return nodes_[id].needs_grad; }

    std::span<Real> grad_view(NodeId id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = Tensor<Real>::zeros(n.value.shape());
        return n.grad.mutable_view();
    }

    void backprop(Node& node) {
        const auto g = node.grad.view();
        switch (node.op) {
            case Op::matmul: {
                const Tensor<Real>& a = nodes_[node.in[0]].value;
                const Tensor<Real>& b = nodes_[node.in[1]].value;
                const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
                if (wants(node.in[0])) matmul_nt<Real>(g, b.view(), grad_view(node.in[0]), m, n, k);
                if (wants(node.in[1])) matmul_tn<Real>(a.view(), g, grad_view(node.in[1]), k, m, n);
                break;
            }
            case Op::transpose: {
                if (!wants(node.in[0])) break;
                auto da = grad_view(node.in[0]);
                const std::size_t n = node.value.shape()[0], m = node.value.shape()[1];
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t i = 0; i < m; ++i) da[i * n + j] += g[j * m + i];
                break;
            }
            case Op::add: {
                for (int s = 0; s < 2; ++s) {
                    if (!wants(node.in[s])) continue;
                    auto d = grad_view(node.in[s]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                }
                break;
            }
            case Op::scale: {
                if (!wants(node.in[0])) break;
                auto da = grad_view(node.in[0]);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += node.c * g[i];
                break;
            }
            case Op::add_row_vector: {
                const std::size_t m = node.value.shape()[0], n = node.value.shape()[1];
                if (wants(node.in[0])) {
                    auto da = grad_view(node.in[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                }
                if (wants(node.in[1])) {
                    auto dv = grad_view(node.in[1]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) dv[j] += g[i * n + j];
                }
                break;
            }
            case Op::add_scalar: {
                if (wants(node.in[0])) {
                    auto da = grad_view(node.in[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                }
                if (wants(node.in[1])) {
                    Real sum = 0;
                    for (Real v : g) sum += v;
                    grad_view(node.in[1])[0] += sum;
                }
                break;
            }
            case Op::softmax_rows: {
                if (!wants(node.in[0])) break;
                auto da = grad_view(node.in[0]);
                const auto y = node.value.view();
                const std::size_t m = node.value.shape()[0], n = node.value.shape()[1];
                for (std::size_t i = 0; i < m; ++i) {
                    Real dot = 0;
                    for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
                    for (std::size_t j = 0; j < n; ++j)
                        da[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                }
                break;
            }
            case Op::layer_norm: {
                const std::size_t m = node.value.shape()[0], n = node.value.shape()[1];
                const Real* xhat = node.saved.data();
                const Real* inv = node.saved.data() + m * n;
                const auto gain = nodes_[node.in[1]].value.view();
                if (wants(node.in[1])) {
                    auto dg = grad_view(node.in[1]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) dg[j] += g[i * n + j] * xhat[i * n + j];
                }
                if (wants(node.in[2])) {
                    auto ds = grad_view(node.in[2]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) ds[j] += g[i * n + j];
                }
                if (wants(node.in[0])) {
                    auto dx = grad_view(node.in[0]);
                    for (std::size_t i = 0; i < m; ++i) {
                        Real s1 = 0, s2 = 0;
                        for (std::size_t j = 0; j < n; ++j) {
                            const Real dxh = g[i * n + j] * gain[j];
                            s1 += dxh;
                            s2 += dxh * xhat[i * n + j];
                        }
                        s1 /= Real(n);
                        s2 /= Real(n);
                        for (std::size_t j = 0; j < n; ++j) {
                            const Real dxh = g[i * n + j] * gain[j];
                            dx[i * n + j] += inv[i] * (dxh - s1 - xhat[i * n + j] * s2);
                        }
                    }
                }
                break;
            }
            case Op::gelu: {
                if (!wants(node.in[0])) break;
                auto da = grad_view(node.in[0]);
                const auto x = nodes_[node.in[0]].value.view();
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * gelu_grad_scalar(x[i]);
                break;
            }
            case Op::gather_rows: {
                if (!wants(node.in[0])) break;
                auto da = grad_view(node.in[0]);
                const std::size_t n = node.value.shape()[1];
                for (std::size_t i = 0; i < node.map.size(); ++i)
                    for (std::size_t j = 0; j < n; ++j) da[std::size_t(node.map[i]) * n + j] += g[i * n + j];
                break;
            }
            case Op::assemble_rows: {
                const std::size_t n = node.value.shape()[1];
                std::size_t off = 0;
                for (NodeId pid : node.in) {
                    const std::size_t rows = nodes_[pid].value.shape()[0];
                    if (wants(pid)) {
                        auto dp = grad_view(pid);
                        for (std::size_t i = 0; i < rows; ++i) {
                            const std::size_t r = node.map[off + i];
                            for (std::size_t j = 0; j < n; ++j) dp[i * n + j] += g[r * n + j];
                        }
                    }
                    off += rows;
                }
                break;
            }
            case Op::slice_cols: {
                if (!wants(node.in[0])) break;
                auto da = grad_view(node.in[0]);
                const std::size_t m = node.value.shape()[0], w = node.value.shape()[1];
                const std::size_t n = nodes_[node.in[0]].value.shape()[1];
                const std::size_t c0 = std::size_t(node.iargs[0]);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < w; ++j) da[i * n + c0 + j] += g[i * w + j];
                break;
            }
            case Op::concat_cols: {
                const std::size_t m = node.value.shape()[0], n = node.value.shape()[1];
                for (std::size_t p = 0; p < node.in.size(); ++p) {
                    if (!wants(node.in[p])) continue;
                    auto dp = grad_view(node.in[p]);
                    const std::size_t pn = nodes_[node.in[p]].value.shape()[1];
                    const std::size_t off = std::size_t(node.iargs[p]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < pn; ++j) dp[i * pn + j] += g[i * n + off + j];
                }
                break;
            }
            case Op::table_lookup: {
                if (!wants(node.in[0])) break;
                auto dt = grad_view(node.in[0]);
                for (std::size_t e = 0; e < node.map.size(); ++e)
                    if (node.map[e] != kNoEntry) dt[node.map[e]] += g[e];
                break;
            }
            case Op::mean_rows: {
                if (!wants(node.in[0])) break;
                auto da = grad_view(node.in[0]);
                const std::size_t m = nodes_[node.in[0]].value.shape()[0];
                const std::size_t n = node.value.shape()[1];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j] / Real(m);
                break;
            }
            case Op::cross_entropy: {
                if (!wants(node.in[0])) break;
                auto dl = grad_view(node.in[0]);
                const std::size_t m = nodes_[node.in[0]].value.shape()[0];
                const std::size_t k = nodes_[node.in[0]].value.shape()[1];
                const Real gs = g[0];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        const Real onehot = node.map[i] == j ? Real(1) : Real(0);
                        dl[i * k + j] += gs * (node.saved[i * k + j] - onehot) / Real(m);
                    }
                break;
            }
            case Op::leaf:
                break;
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace pat
