#include "pat/training.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <thread>

#include "pat/graph.hpp"
#include "pat/io.hpp"

namespace pat {

SynthDataset::SynthDataset(std::uint64_t seed, int num_classes, int side, double noise_sigma, int in_channels)
    : seed_(seed), k_(num_classes), side_(side), in_channels_(in_channels), sigma_(noise_sigma) {
    if (num_classes < 2) throw std::invalid_argument("SynthDataset: at least two classes required");
    if (side < 1) throw std::invalid_argument("SynthDataset: side must be positive");
    if (in_channels < 1) throw std::invalid_argument("SynthDataset: in_channels must be positive");
    if (noise_sigma < 0) throw std::invalid_argument("SynthDataset: noise sigma must be non-negative");
    const std::size_t n = std::size_t(in_channels) * std::size_t(side) * std::size_t(side);
    templates_.resize(std::size_t(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        Rng rng(hash_combine(hash_combine(seed, 0x54454d50ull), std::uint64_t(c)));
        std::vector<double>& t = templates_[std::size_t(c)];
        t.resize(n);
        for (double& v : t) v = rng.uniform(-1.0, 1.0);
    }
}

double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t schedule_steps) {
    if (schedule_steps == 0) return base_lr;
    const double x = std::min(1.0, double(step) / double(schedule_steps));
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

TrainResult train_model(Model<float>& model, AdamW<float>& opt, const SynthDataset& data,
                        const TrainOptions& options) {
    if (opt.names() != model.params().names())
        throw TrainError("train: optimizer is not attached to this model's parameters");
    if (data.side() != model.config().side || data.in_channels() != model.config().in_channels)
        throw TrainError("train: dataset geometry does not match config");
    if (data.num_classes() != model.config().num_classes)
        throw TrainError("train: dataset classes do not match config");
    if (options.batch == 0) throw TrainError("train: batch must be positive");

    const std::size_t total = opt.flat_size();
    const std::size_t batch = options.batch;
    constexpr std::size_t kChunk = 4;  // reduction granularity, fixed so thread count cannot matter
    const std::size_t n_chunks = (batch + kChunk - 1) / kChunk;

    TrainResult result;
    std::vector<float> flat(total);
    std::vector<std::vector<float>> chunk_grads(n_chunks);
    std::vector<double> chunk_loss(n_chunks);
    std::vector<std::size_t> chunk_correct(n_chunks);
    const float inv_batch = 1.0f / float(batch);

    for (std::uint64_t t = opt.steps_taken(); t < options.steps; ++t) {
        auto run_chunk = [&](std::size_t ci) {
            std::vector<float>& buf = chunk_grads[ci];
            buf.assign(total, 0.0f);
            double loss_sum = 0;
            std::size_t correct = 0;
            const std::size_t b1 = std::min(batch, (ci + 1) * kChunk);
            for (std::size_t b = ci * kChunk; b < b1; ++b) {
                const std::uint64_t index = t * batch + b;
                Graph<float> g;
                const auto bf = model.build_forward(g, data.image<float>(index));
                const std::uint32_t label = data.label(index);
                const auto loss = g.cross_entropy(bf.logits, {label});
                loss_sum += double(g.value(loss).view()[0]);
                const auto lg = g.value(bf.logits).view();
                std::size_t am = 0;
                for (std::size_t j = 1; j < lg.size(); ++j)
                    if (lg[j] > lg[am]) am = j;
                correct += std::size_t(am == label);
                g.backward(loss);
                for (std::size_t pi = 0; pi < bf.params.size(); ++pi) {
                    const Tensor<float>& gr = g.grad(bf.params[pi].second);
                    if (gr.empty()) continue;
                    const auto gv = gr.view();
                    float* dst = buf.data() + opt.offsets()[pi];
                    for (std::size_t i = 0; i < gv.size(); ++i) dst[i] += gv[i] * inv_batch;
                }
            }
            chunk_loss[ci] = loss_sum;
            chunk_correct[ci] = correct;
        };

        const std::size_t workers = std::max<std::size_t>(
            1, std::min<std::size_t>(options.threads > 0 ? std::size_t(options.threads) : 1, n_chunks));
        if (workers <= 1) {
            for (std::size_t ci = 0; ci < n_chunks; ++ci) run_chunk(ci);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(workers);
            for (std::size_t w = 0; w < workers; ++w)
                pool.emplace_back([&, w] {
                    for (std::size_t ci = w; ci < n_chunks; ci += workers) run_chunk(ci);
                });
            for (std::thread& th : pool) th.join();
        }

        std::fill(flat.begin(), flat.end(), 0.0f);
        double loss = 0;
        std::size_t correct = 0;
        for (std::size_t ci = 0; ci < n_chunks; ++ci) {
            const std::vector<float>& buf = chunk_grads[ci];
            for (std::size_t i = 0; i < total; ++i) flat[i] += buf[i];
            loss += chunk_loss[ci];
            correct += chunk_correct[ci];
        }
        loss /= double(batch);
        if (!std::isfinite(loss)) throw TrainError("non-finite loss at step " + std::to_string(t));

        const double lr_t = cosine_lr(opt.lr, t, options.schedule_steps);
        opt.apply(model.params(), flat, lr_t);
        result.series.push_back(StepMetrics{t, loss, double(correct) / double(batch), lr_t});
    }

    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        result.checkpoint_path = options.out_dir + "/checkpoint.pat";
        save_checkpoint(result.checkpoint_path, make_checkpoint(model, opt));
        std::string csv = "step,loss,accuracy,lr\n";
        char buf[128];
        for (const StepMetrics& m : result.series) {
            std::snprintf(buf, sizeof buf, "%llu,%.9e,%.9e,%.9e\n", (unsigned long long)m.step, m.loss, m.accuracy,
                          m.lr);
            csv += buf;
        }
        result.metrics_path = options.out_dir + "/metrics.csv";
        write_file(result.metrics_path, csv);
    }
    return result;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

struct Cursor {
    const unsigned char* p;
    std::size_t n;
    std::size_t off = 0;

    void need(std::size_t k) const {
        if (off + k > n) throw CheckpointError("truncated checkpoint");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[off + std::size_t(i)]) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[off + std::size_t(i)]) << (8 * i);
        off += 8;
        return v;
    }
    std::string bytes(std::size_t k) {
        need(k);
        std::string s(reinterpret_cast<const char*>(p + off), k);
        off += k;
        return s;
    }
};

void put_tensors(std::string& out, const std::vector<std::pair<std::string, Tensor<float>>>& ts) {
    put_u64(out, ts.size());
    for (const auto& [name, t] : ts) {
        put_u32(out, std::uint32_t(name.size()));
        out += name;
        put_u32(out, std::uint32_t(t.rank()));
        for (std::size_t d : t.shape()) put_u64(out, d);
        for (float v : t.view()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
}

std::vector<std::pair<std::string, Tensor<float>>> read_tensors(Cursor& c) {
    const std::uint64_t count = c.u64();
    if (count > (1u << 20)) throw CheckpointError("checkpoint tensor count implausible");
    std::vector<std::pair<std::string, Tensor<float>>> out;
    out.reserve(std::size_t(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = c.u32();
        if (name_len > 4096) throw CheckpointError("checkpoint tensor name implausible");
        std::string name = c.bytes(name_len);
        const std::uint32_t rank = c.u32();
        if (rank == 0 || rank > 8) throw CheckpointError("checkpoint tensor rank implausible");
        std::vector<std::size_t> shape;
        std::size_t total = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::uint64_t d = c.u64();
            if (d == 0 || d > (1ull << 32)) throw CheckpointError("checkpoint tensor dim implausible");
            shape.push_back(std::size_t(d));
            total *= std::size_t(d);
        }
        c.need(total * 4);
        std::vector<float> values(total);
        for (std::size_t e = 0; e < total; ++e) values[e] = std::bit_cast<float>(c.u32());
        out.emplace_back(std::move(name), Tensor<float>::from(std::move(shape), std::move(values)));
    }
    return out;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
    std::string out = "PATC";
    put_u32(out, 1);
    put_u32(out, std::uint32_t(c.config_json.size()));
    out += c.config_json;
    put_u64(out, c.step);
    put_tensors(out, c.tensors);
    put_tensors(out, c.opt_tensors);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(out.data()), uInt(out.size()));
    put_u32(out, std::uint32_t(crc));
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 12) throw CheckpointError("truncated checkpoint");
    if (bytes.compare(0, 4, "PATC") != 0) throw CheckpointError("bad checkpoint magic");
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), uInt(bytes.size() - 4));
    Cursor tail{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), bytes.size() - 4};
    if (std::uint32_t(crc) != tail.u32()) throw CheckpointError("checkpoint CRC mismatch");

    Cursor c{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size() - 4, 4};
    const std::uint32_t version = c.u32();
    if (version != 1) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint out;
    const std::uint32_t cfg_len = c.u32();
    out.config_json = c.bytes(cfg_len);
    out.step = c.u64();
    try {
        out.tensors = read_tensors(c);
        out.opt_tensors = read_tensors(c);
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint tensor decode: ") + e.what());
    }
    if (c.off != c.n) throw CheckpointError("checkpoint has trailing bytes");
    return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) { write_file(path, encode_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

Checkpoint make_checkpoint(const Model<float>& model, AdamW<float>& opt) {
    Checkpoint c;
    c.config_json = serialize_model_config(model.config());
    c.step = opt.steps_taken();
    for (const std::string& name : model.params().names()) c.tensors.emplace_back(name, model.params().at(name));
    const auto& names = opt.names();
    for (std::size_t i = 0; i < names.size(); ++i) c.opt_tensors.emplace_back("m." + names[i], opt.first_moments()[i]);
    for (std::size_t i = 0; i < names.size(); ++i)
        c.opt_tensors.emplace_back("v." + names[i], opt.second_moments()[i]);
    return c;
}

void restore_checkpoint(const Checkpoint& c, Model<float>& model, AdamW<float>& opt) {
    ModelConfig cfg;
    try {
        cfg = parse_model_config(c.config_json);
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config: ") + e.what());
    }
    if (!(cfg == model.config())) throw CheckpointError("checkpoint config does not match model");
    if (c.tensors.size() != model.params().size()) throw CheckpointError("checkpoint parameter count mismatch");
    for (const auto& [name, t] : c.tensors) {
        if (!model.params().contains(name)) throw CheckpointError("checkpoint tensor not in model: " + name);
        try {
            model.set_param(name, t);
        } catch (const std::invalid_argument& e) {
            throw CheckpointError(e.what());
        }
    }
    opt.attach(model.params());
    std::map<std::string, Tensor<float>> om(c.opt_tensors.begin(), c.opt_tensors.end());
    if (om.size() != 2 * opt.names().size()) throw CheckpointError("checkpoint optimizer state count mismatch");
    for (std::size_t i = 0; i < opt.names().size(); ++i) {
        const std::string& name = opt.names()[i];
        const auto mi = om.find("m." + name);
        const auto vi = om.find("v." + name);
        if (mi == om.end() || vi == om.end())
            throw CheckpointError("checkpoint optimizer state missing for " + name);
        if (!mi->second.same_shape(model.params().at(name)) || !vi->second.same_shape(model.params().at(name)))
            throw CheckpointError("checkpoint optimizer state shape mismatch for " + name);
        opt.first_moments()[i] = mi->second;
        opt.second_moments()[i] = vi->second;
    }
    opt.set_steps_taken(c.step);
}

std::string GradcheckReport::to_string() const {
    std::string out;
    char buf[160];
    for (const GradcheckGroup& g : groups) {
        if (g.skipped) {
            std::snprintf(buf, sizeof buf, "group %-16s skipped\n", g.group.c_str());
        } else {
            std::snprintf(buf, sizeof buf, "group %-16s checked %4zu  max rel err %.3e\n", g.group.c_str(), g.checked,
                          g.max_rel);
        }
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "max rel err %.3e  tol %.1e  %s\n", max_rel, tol, pass ? "PASS" : "FAIL");
    out += buf;
    return out;
}

GradcheckReport gradcheck_model(const ModelConfig& cfg, std::uint64_t seed, double tol, std::size_t min_coords) {
    Model<double> model(cfg);
    model.init_params(hash_combine(seed, 0x01));
    // push every tensor off its init so zero biases and tied values are generic
    for (const ParamSpec& s : model.specs()) {
        Rng rng(hash_combine(hash_combine(seed, 0x02), fnv1a64(s.name.data(), s.name.size())));
        for (double& v : model.params().at(s.name).mutable_view()) v += rng.normal(0.0, 0.02);
    }
    Rng drng(hash_combine(seed, 0x03));
    const std::size_t pixels =
        std::size_t(cfg.in_channels) * std::size_t(cfg.side) * std::size_t(cfg.side);
    Tensor<double> image = Tensor<double>::zeros({pixels});
    for (double& v : image.mutable_view()) v = drng.normal();
    const std::uint32_t label = std::uint32_t(drng.uniform_index(std::size_t(cfg.num_classes)));

    auto eval_loss = [&model, &image, label]() {
        Graph<double> g;
        const auto bf = model.build_forward(g, image);
        return g.value(g.cross_entropy(bf.logits, {label})).view()[0];
    };

    std::map<std::string, Tensor<double>> bp;
    {
        Graph<double> g;
        const auto bf = model.build_forward(g, image);
        g.backward(g.cross_entropy(bf.logits, {label}));
        for (const auto& [name, id] : bf.params) bp[name] = g.grad(id);
    }

    std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> members;
    for (const ParamSpec& s : model.specs()) members[param_group_of(s.name)].emplace_back(s.name, s.count());

    GradcheckReport rep;
    rep.tol = tol;
    std::size_t present = 0;
    for (const std::string& gname : all_param_groups()) present += std::size_t(members.count(gname));
    const std::size_t per_group = std::max<std::size_t>(1, (min_coords + present - 1) / present);
    const double h = 1e-3;
    const double floor = 1.0;

    for (const std::string& gname : all_param_groups()) {
        GradcheckGroup grp;
        grp.group = gname;
        const auto it = members.find(gname);
        if (it == members.end()) {
            grp.skipped = true;
            rep.groups.push_back(grp);
            continue;
        }
        std::size_t total = 0;
        for (const auto& [name, count] : it->second) total += count;
        std::vector<std::pair<std::string, std::size_t>> picks;  // (param name, flat offset)
        if (total <= per_group) {
            for (const auto& [name, count] : it->second)
                for (std::size_t e = 0; e < count; ++e) picks.emplace_back(name, e);
        } else {
            Rng rng(hash_combine(hash_combine(seed, 0x04), fnv1a64(gname.data(), gname.size())));
            for (std::size_t k = 0; k < per_group; ++k) {
                std::size_t e = rng.uniform_index(total);
                for (const auto& [name, count] : it->second) {
                    if (e < count) {
                        picks.emplace_back(name, e);
                        break;
                    }
                    e -= count;
                }
            }
        }
        for (const auto& [name, off] : picks) {
            auto pv = model.params().at(name).mutable_view();
            const double orig = pv[off];
            pv[off] = orig + h;
            const double fp = eval_loss();
            pv[off] = orig - h;
            const double fm = eval_loss();
            pv[off] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const Tensor<double>& gt = bp.at(name);
            const double bpv = gt.empty() ? 0.0 : gt.view()[off];
            const double rel = std::abs(fd - bpv) / std::max({std::abs(fd), std::abs(bpv), floor});
            grp.max_rel = std::max(grp.max_rel, rel);
            ++grp.checked;
        }
        rep.max_rel = std::max(rep.max_rel, grp.max_rel);
        rep.groups.push_back(grp);
    }
    rep.pass = rep.max_rel <= tol;
    return rep;
}

}  // namespace pat
