#include "pat/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include "pat/attention.hpp"
#include "pat/io.hpp"
#include "pat/model.hpp"
#include "pat/pattern.hpp"
#include "pat/training.hpp"

namespace pat {
namespace {

using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

void emit(const ordered_json& doc) { std::cout << doc.dump(2) << "\n"; }

template <typename F>
int guarded(F&& body) {
    try {
        return body();
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    }
}

bool parse_phase(const std::string& text, Cell& out) {
    int r = 0, c = 0;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%d,%d%c", &r, &c, &extra) != 2) return false;
    out = Cell{r, c};
    return true;
}

// Largest sensor first; within the plan's shape_id ordering that picks the
// unclipped class when one exists.
std::size_t dominant_class(const AttentionPlan& plan) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < plan.classes.size(); ++i)
        if (plan.classes[i].sensor_size > plan.classes[best].sensor_size) best = i;
    return best;
}

struct GenOpts {
    int height = 0, width = 0;
    std::string kernel = "octagon";
    int core_side = 0;
    int sensor_radius = 1;
    std::string phase = "0,0";
    std::string out;
    bool json = false;
};

int cmd_pattern_gen(const GenOpts& o, bool core_side_given) {
    Cell phase{0, 0};
    if (!parse_phase(o.phase, phase)) {
        std::cerr << "error: --phase expects 'r,c'\n";
        return kExitUsage;
    }
    if (o.kernel == "square" && !core_side_given) {
        std::cerr << "error: --core-side is required with --kernel square\n";
        return kExitUsage;
    }
    return guarded([&] {
        const PatternLayout layout = o.kernel == "octagon"
                                         ? plan_octagon_pattern(o.height, o.width, phase)
                                         : plan_square_pattern(o.height, o.width, o.core_side, o.sensor_radius);
        write_file(o.out, serialize_layout(layout));
        if (o.json) {
            ordered_json doc;
            doc["out"] = o.out;
            doc["height"] = layout.height;
            doc["width"] = layout.width;
            doc["kernel"] = o.kernel;
            doc["phase"] = {layout.phase.row, layout.phase.col};
            doc["instances"] = layout.instances.size();
            doc["shape_classes"] = layout.shapes.size();
            emit(doc);
        } else {
            std::cout << "wrote " << o.out << ": " << layout.height << "x" << layout.width << " " << o.kernel << ", "
                      << layout.instances.size() << " instances, " << layout.shapes.size() << " shape classes\n";
        }
        return kExitOk;
    });
}

int cmd_pattern_validate(const std::string& in, bool json) {
    return guarded([&] {
        const std::string text = read_file(in);
        PatternLayout layout;
        try {
            layout = parse_layout(text);
        } catch (const LayoutError& e) {
            if (json) {
                ordered_json doc;
                doc["ok"] = false;
                doc["error"] = e.what();
                emit(doc);
            } else {
                std::cerr << e.what() << "\n";
            }
            return kExitCheckFailed;
        }
        if (json) {
            ordered_json doc;
            doc["ok"] = true;
            doc["height"] = layout.height;
            doc["width"] = layout.width;
            doc["instances"] = layout.instances.size();
            doc["shape_classes"] = layout.shapes.size();
            emit(doc);
        } else {
            std::cout << "OK: " << layout.height << "x" << layout.width << ", " << layout.instances.size()
                      << " instances, cores cover every cell exactly once\n";
        }
        return kExitOk;
    });
}

int cmd_pattern_render(const std::string& in, int cell_px, const std::string& out, bool json) {
    return guarded([&] {
        const PatternLayout layout = parse_layout(read_file(in));
        write_file(out, render_layout(layout, cell_px));
        const int pw = layout.width * cell_px, ph = layout.height * cell_px;
        if (json) {
            ordered_json doc;
            doc["out"] = out;
            doc["px_width"] = pw;
            doc["px_height"] = ph;
            doc["cell_px"] = cell_px;
            emit(doc);
        } else {
            std::cout << "wrote " << out << " (" << pw << "x" << ph << " px)\n";
        }
        return kExitOk;
    });
}

int cmd_oracle_qkva(int h, int w, int trials, std::uint64_t seed, bool json) {
    return guarded([&] {
        Rng rng(seed);
        double max_rel = 0;
        for (int trial = 0; trial < trials; ++trial) {
            auto draw = [&rng, h, w] {
                Tensor<double> t = Tensor<double>::zeros({std::size_t(h), std::size_t(w)});
                for (double& v : t.mutable_view()) v = rng.normal();
                return t;
            };
            const Tensor<double> q = draw(), k = draw(), v = draw();
            const std::size_t n = std::size_t(h), d = std::size_t(w);
            Tensor<double> p = Tensor<double>::zeros({n, n});
            matmul_nt<double>(q.view(), k.view(), p.mutable_view(), n, d, n);
            Tensor<double> fast = Tensor<double>::zeros({n, d});
            matmul_nn<double>(p.view(), v.view(), fast.mutable_view(), n, n, d);
            const Tensor<double> slow = qkva_oracle(q, k, v);
            const auto fv = fast.view(), sv = slow.view();
            for (std::size_t i = 0; i < fv.size(); ++i) {
                const double rel =
                    std::abs(fv[i] - sv[i]) / std::max({1.0, std::abs(fv[i]), std::abs(sv[i])});
                max_rel = std::max(max_rel, rel);
            }
        }
        const double tol = 1e-12;
        const bool pass = max_rel <= tol;
        if (json) {
            ordered_json doc;
            doc["h"] = h;
            doc["w"] = w;
            doc["trials"] = trials;
            doc["max_rel_err"] = max_rel;
            doc["tol"] = tol;
            doc["pass"] = pass;
            emit(doc);
        } else {
            std::printf("qkva oracle: %d trials at %dx%d, max rel err %.3e (tol %.0e): %s\n", trials, h, w, max_rel,
                        tol, pass ? "OK" : "FAIL");
        }
        return pass ? kExitOk : kExitCheckFailed;
    });
}

int cmd_gradcheck(const std::string& config_path, double tol, std::uint64_t seed, bool json) {
    return guarded([&] {
        const ModelConfig cfg = parse_model_config(read_file(config_path));
        const GradcheckReport rep = gradcheck_model(cfg, seed, tol);
        if (json) {
            ordered_json doc;
            doc["pass"] = rep.pass;
            doc["tol"] = rep.tol;
            doc["max_rel_err"] = rep.max_rel;
            ordered_json groups = ordered_json::array();
            for (const GradcheckGroup& g : rep.groups) {
                ordered_json e;
                e["group"] = g.group;
                e["skipped"] = g.skipped;
                if (!g.skipped) {
                    e["checked"] = g.checked;
                    e["max_rel_err"] = g.max_rel;
                }
                groups.push_back(std::move(e));
            }
            doc["groups"] = std::move(groups);
            emit(doc);
        } else {
            std::cout << rep.to_string();
        }
        return rep.pass ? kExitOk : kExitCheckFailed;
    });
}

int cmd_bench(const std::string& layout_path, int channels, int heads, const std::string& winnow_s, int iters,
              int threads, bool json) {
    return guarded([&] {
        const bool winnow = winnow_s == "on";
        const PatternLayout layout = parse_layout(read_file(layout_path));
        const FlopReport flops = flop_count(layout, std::size_t(channels), std::size_t(heads));
        const AttentionPlan plan = make_attention_plan(layout, BiasMode::absolute);

        Rng rng(0xb3);
        const AttentionWeights<float> w = random_attention_weights<float>(
            plan, std::size_t(channels), std::size_t(heads), true, BiasSharing::per_head, false, rng);
        Tensor<float> x = Tensor<float>::zeros({plan.tokens, std::size_t(channels)});
        for (float& v : x.mutable_view()) v = float(rng.normal());

        Tensor<float> out = pattern_attention_eval(x, plan, w, winnow, threads);  // warm
        double total_ms = 0;
        for (int i = 0; i < iters; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            out = pattern_attention_eval(x, plan, w, winnow, threads);
            const auto t1 = std::chrono::steady_clock::now();
            total_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        const double ms = iters > 0 ? total_ms / iters : 0.0;
        double checksum = 0;
        for (float v : out.view()) checksum += double(v);
        const double ratio = flops.full.p_stage > 0 ? double(flops.winnow.p_stage) / double(flops.full.p_stage) : 1.0;

        if (json) {
            ordered_json doc;
            doc["layout"] = layout_path;
            doc["height"] = layout.height;
            doc["width"] = layout.width;
            doc["channels"] = channels;
            doc["heads"] = heads;
            doc["winnow"] = winnow;
            doc["iters"] = iters;
            doc["threads"] = threads;
            auto flop_doc = [](const FlopCounts& f) {
                ordered_json e;
                e["p_stage"] = f.p_stage;
                e["av_stage"] = f.av_stage;
                e["proj"] = f.proj;
                e["total"] = f.total();
                return e;
            };
            doc["flops"]["winnow"] = flop_doc(flops.winnow);
            doc["flops"]["full"] = flop_doc(flops.full);
            doc["p_stage_ratio"] = ratio;
            ordered_json classes = ordered_json::array();
            for (const ClassFlops& c : flops.by_class) {
                ordered_json e;
                e["shape"] = c.shape_id;
                e["instances"] = c.instances;
                e["sensor"] = c.sensor_size;
                e["core"] = c.core_size;
                e["p_stage_ratio"] = double(c.winnow.p_stage) / double(c.full.p_stage);
                classes.push_back(std::move(e));
            }
            doc["by_class"] = std::move(classes);
            doc["wall_ms_per_iter"] = ms;
            doc["checksum"] = checksum;
            emit(doc);
        } else {
            std::printf("layout %dx%d, %zu shape classes, %zu instances, C=%d heads=%d\n", layout.height, layout.width,
                        layout.shapes.size(), layout.instances.size(), channels, heads);
            std::printf("winnow multiply-adds: p_stage=%llu av_stage=%llu proj=%llu total=%llu\n",
                        (unsigned long long)flops.winnow.p_stage, (unsigned long long)flops.winnow.av_stage,
                        (unsigned long long)flops.winnow.proj, (unsigned long long)flops.winnow.total());
            std::printf("full   multiply-adds: p_stage=%llu av_stage=%llu proj=%llu total=%llu\n",
                        (unsigned long long)flops.full.p_stage, (unsigned long long)flops.full.av_stage,
                        (unsigned long long)flops.full.proj, (unsigned long long)flops.full.total());
            std::printf("p-stage ratio winnow/full = %.6f\n", ratio);
            for (const ClassFlops& c : flops.by_class)
                std::printf("  class %s: instances=%zu sensor=%zu core=%zu p-stage ratio=%.6f\n", c.shape_id.c_str(),
                            c.instances, c.sensor_size, c.core_size,
                            double(c.winnow.p_stage) / double(c.full.p_stage));
            std::printf("wall ms/forward (winnow %s, %d threads): %.3f\n", winnow ? "on" : "off", threads, ms);
            std::printf("output checksum %.9e\n", checksum);
        }
        return kExitOk;
    });
}

int cmd_count_params(const std::string& config_path, bool json) {
    return guarded([&] {
        const ModelConfig cfg = parse_model_config(read_file(config_path));
        const ParamCount n = count_params(cfg);
        if (json) {
            ordered_json doc;
            doc["total"] = n.total;
            doc["by_group"]["weights"] = n.weights;
            doc["by_group"]["kernel_bias"] = n.kernel_bias;
            doc["by_group"]["block_bias"] = n.block_bias;
            emit(doc);
        } else {
            std::printf("total       %llu\n", (unsigned long long)n.total);
            std::printf("weights     %llu\n", (unsigned long long)n.weights);
            std::printf("kernel_bias %llu\n", (unsigned long long)n.kernel_bias);
            std::printf("block_bias  %llu\n", (unsigned long long)n.block_bias);
        }
        return kExitOk;
    });
}

int cmd_train(const std::string& config_path, std::uint64_t steps, std::uint64_t seed, const std::string& out_dir,
              int threads, bool json) {
    return guarded([&] {
        const ModelConfig cfg = parse_model_config(read_file(config_path));
        Model<float> model(cfg);
        model.init_params(seed);
        SynthDataset data(seed, cfg.num_classes, cfg.side, 0.1, cfg.in_channels);
        AdamW<float> opt(1e-3, 0.05);
        opt.attach(model.params());
        TrainOptions options;
        options.steps = steps;
        options.schedule_steps = steps;
        options.batch = 32;
        options.threads = threads;
        options.out_dir = out_dir;

        TrainResult result;
        if (json) {
            result = train_model(model, opt, data, options);
        } else {
            // stream metrics step by step: run one step at a time
            TrainOptions stepwise = options;
            stepwise.out_dir.clear();
            for (std::uint64_t t = 0; t < steps; ++t) {
                stepwise.steps = t + 1;
                TrainResult r = train_model(model, opt, data, stepwise);
                for (const StepMetrics& m : r.series) {
                    std::printf("step %4llu  loss %.6f  acc %.4f  lr %.6f\n", (unsigned long long)m.step, m.loss,
                                m.accuracy, m.lr);
                    std::fflush(stdout);
                    result.series.push_back(m);
                }
            }
            if (!out_dir.empty()) {
                TrainOptions fin = options;  // no further steps, just the artifacts
                fin.steps = steps;
                TrainResult r = train_model(model, opt, data, fin);
                result.checkpoint_path = r.checkpoint_path;
                result.metrics_path = r.metrics_path;
                // metrics.csv written by the final call covers no steps; rewrite it whole
                std::string csv = "step,loss,accuracy,lr\n";
                char buf[128];
                for (const StepMetrics& m : result.series) {
                    std::snprintf(buf, sizeof buf, "%llu,%.9e,%.9e,%.9e\n", (unsigned long long)m.step, m.loss,
                                  m.accuracy, m.lr);
                    csv += buf;
                }
                write_file(result.metrics_path, csv);
                std::printf("wrote %s and %s\n", result.checkpoint_path.c_str(), result.metrics_path.c_str());
            }
        }

        if (json) {
            ordered_json doc;
            doc["config"] = config_path;
            doc["steps"] = steps;
            doc["seed"] = seed;
            doc["batch"] = options.batch;
            doc["threads"] = threads;
            doc["checkpoint"] = result.checkpoint_path;
            doc["metrics"] = result.metrics_path;
            double best_acc = 0;
            ordered_json series = ordered_json::array();
            for (const StepMetrics& m : result.series) {
                best_acc = std::max(best_acc, m.accuracy);
                ordered_json e;
                e["step"] = m.step;
                e["loss"] = m.loss;
                e["accuracy"] = m.accuracy;
                e["lr"] = m.lr;
                series.push_back(std::move(e));
            }
            doc["best_accuracy"] = best_acc;
            if (!result.series.empty()) {
                doc["final_loss"] = result.series.back().loss;
                doc["final_accuracy"] = result.series.back().accuracy;
            }
            doc["series"] = std::move(series);
            emit(doc);
        }
        return kExitOk;
    });
}

int cmd_dump_bias(const std::string& ckpt_path, int layer, int head, const std::string& out, bool json) {
    return guarded([&] {
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        const ModelConfig cfg = parse_model_config(ckpt.config_json);
        if (!cfg.bias_sharing) throw std::invalid_argument("dump-bias: model has no kernel bias");
        Model<float> model(cfg);
        if (ckpt.tensors.size() != model.params().size())
            throw CheckpointError("checkpoint parameter count mismatch");
        for (const auto& [name, t] : ckpt.tensors) {
            if (!model.params().contains(name)) throw CheckpointError("checkpoint tensor not in model: " + name);
            model.set_param(name, t);
        }

        // resolve the global attention-layer index
        int remaining = layer;
        std::size_t stage = 0;
        int block = 0;
        bool found = false;
        for (std::size_t s = 0; s < model.stages().size() && !found; ++s) {
            if (remaining < model.stages()[s].depth) {
                stage = s;
                block = remaining;
                found = true;
            } else {
                remaining -= model.stages()[s].depth;
            }
        }
        if (layer < 0 || !found) throw std::invalid_argument("dump-bias: bad layer index " + std::to_string(layer));
        const StagePlanEntry& st = model.stages()[stage];
        if (head < 0 || head >= st.heads)
            throw std::invalid_argument("dump-bias: bad head index " + std::to_string(head) + " (stage has " +
                                        std::to_string(st.heads) + " heads)");

        AttentionWeights<float> w;
        w.heads = std::size_t(st.heads);
        w.use_bias = true;
        w.sharing = *cfg.bias_sharing;
        const std::string pre = "stage" + std::to_string(stage + 1) + ".block" + std::to_string(block) + ".";
        for (const ShapeClassPlan& cls : st.plan.classes) {
            std::vector<Tensor<float>> slots;
            for (std::size_t j = 0; j < w.slots(); ++j)
                slots.push_back(model.params().at(pre + "attn.bias." + cls.shape.shape_id + ".slot" + std::to_string(j)));
            w.bias.push_back(std::move(slots));
        }
        const std::size_t cls = dominant_class(st.plan);
        const Tensor<float> matrix = bias_matrix(st.plan, w, cls, std::size_t(head));
        write_file(out, csv_matrix(matrix));

        if (json) {
            ordered_json doc;
            doc["out"] = out;
            doc["layer"] = layer;
            doc["head"] = head;
            doc["stage"] = stage + 1;
            doc["block"] = block;
            doc["shape"] = st.plan.classes[cls].shape.shape_id;
            doc["rows"] = matrix.shape()[0];
            doc["cols"] = matrix.shape()[1];
            emit(doc);
        } else {
            std::printf("wrote %s: %zux%zu bias matrix, layer %d head %d (shape %s)\n", out.c_str(),
                        matrix.shape()[0], matrix.shape()[1], layer, head, st.plan.classes[cls].shape.shape_id.c_str());
        }
        return kExitOk;
    });
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"doughnut-kernel pattern attention toolkit"};
    app.require_subcommand(1);

    // pattern gen/validate/render
    auto* pattern = app.add_subcommand("pattern", "plan, validate, and render kernel layouts");
    pattern->require_subcommand(1);

    GenOpts gen_opts;
    auto* gen = pattern->add_subcommand("gen", "plan a layout and write it as JSON");
    gen->add_option("--height", gen_opts.height, "grid height")->required()->check(CLI::Range(1, 4096));
    gen->add_option("--width", gen_opts.width, "grid width")->required()->check(CLI::Range(1, 4096));
    gen->add_option("--kernel", gen_opts.kernel, "kernel family")
        ->check(CLI::IsMember({"octagon", "square"}))
        ->capture_default_str();
    auto* core_side_opt =
        gen->add_option("--core-side", gen_opts.core_side, "square core side (square kernels only)");
    gen->add_option("--sensor-radius", gen_opts.sensor_radius, "square sensor dilation radius")
        ->check(CLI::Range(0, 1024))
        ->capture_default_str();
    gen->add_option("--phase", gen_opts.phase, "octagon lattice phase 'r,c'")->capture_default_str();
    gen->add_option("--out", gen_opts.out, "output layout file")->required();
    gen->add_flag("--json", gen_opts.json, "machine-readable report on stdout");

    std::string validate_in;
    bool validate_json = false;
    auto* validate = pattern->add_subcommand("validate", "check a layout file's partition invariants");
    validate->add_option("--in", validate_in, "layout file")->required();
    validate->add_flag("--json", validate_json, "machine-readable report on stdout");

    std::string render_in, render_out;
    int render_px = 8;
    bool render_json = false;
    auto* render = pattern->add_subcommand("render", "rasterize a layout to a PPM image");
    render->add_option("--in", render_in, "layout file")->required();
    render->add_option("--cell-px", render_px, "pixels per grid cell")->check(CLI::Range(1, 128))->capture_default_str();
    render->add_option("--out", render_out, "output PPM file")->required();
    render->add_flag("--json", render_json, "machine-readable report on stdout");

    // oracle qkva
    auto* oracle = app.add_subcommand("oracle", "reference-path equivalence checks");
    oracle->require_subcommand(1);
    int qk_h = 0, qk_w = 0, qk_trials = 100;
    std::uint64_t qk_seed = 0;
    bool qk_json = false;
    auto* qkva = oracle->add_subcommand("qkva", "triple-loop attention identity vs matrix products");
    qkva->set_help_flag("--help", "print help");  // frees -h for the row-count flag
    qkva->add_option("--h", qk_h, "matrix rows")->required()->check(CLI::Range(1, 4096));
    qkva->add_option("--w", qk_w, "matrix cols")->required()->check(CLI::Range(1, 4096));
    qkva->add_option("--trials", qk_trials, "random trials")->check(CLI::Range(1, 1000000))->capture_default_str();
    qkva->add_option("--seed", qk_seed, "rng seed")->capture_default_str();
    qkva->add_flag("--json", qk_json, "machine-readable report on stdout");

    // gradcheck
    std::string gc_config;
    double gc_tol = 1e-4;
    std::uint64_t gc_seed = 0;
    bool gc_json = false;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of backprop gradients");
    gradcheck->add_option("--config", gc_config, "model config JSON file")->required();
    gradcheck->add_option("--tol", gc_tol, "max relative error accepted")->capture_default_str();
    gradcheck->add_option("--seed", gc_seed, "rng seed")->capture_default_str();
    gradcheck->add_flag("--json", gc_json, "machine-readable report on stdout");

    // bench
    std::string bench_layout, bench_winnow = "on";
    int bench_channels = 0, bench_heads = 0, bench_iters = 10, bench_threads = 1;
    bool bench_json = false;
    auto* bench = app.add_subcommand("bench", "multiply-add counts and wall time for one attention layer");
    bench->add_option("--layout", bench_layout, "layout file")->required();
    bench->add_option("--channels", bench_channels, "embedding channels")->required()->check(CLI::Range(1, 8192));
    bench->add_option("--heads", bench_heads, "attention heads")->required()->check(CLI::Range(1, 256));
    bench->add_option("--winnow", bench_winnow, "compute only update rows")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    bench->add_option("--iters", bench_iters, "timed iterations")->check(CLI::Range(1, 100000))->capture_default_str();
    bench->add_option("--threads", bench_threads, "worker threads")->check(CLI::Range(1, 256))->capture_default_str();
    bench->add_flag("--json", bench_json, "machine-readable report on stdout");

    // count-params
    std::string cp_config;
    bool cp_json = false;
    auto* count = app.add_subcommand("count-params", "parameter counts by group for a config");
    count->add_option("--config", cp_config, "model config JSON file")->required();
    count->add_flag("--json", cp_json, "machine-readable report on stdout");

    // train
    std::string tr_config, tr_out;
    std::uint64_t tr_steps = 300, tr_seed = 0;
    int tr_threads = 1;
    bool tr_json = false;
    auto* train = app.add_subcommand("train", "train on the synthetic dataset and write a checkpoint");
    train->add_option("--config", tr_config, "model config JSON file")->required();
    train->add_option("--steps", tr_steps, "optimization steps")->capture_default_str();
    train->add_option("--seed", tr_seed, "rng seed")->capture_default_str();
    train->add_option("--out", tr_out, "output directory")->required();
    train->add_option("--threads", tr_threads, "worker threads")->check(CLI::Range(1, 256))->capture_default_str();
    train->add_flag("--json", tr_json, "machine-readable report on stdout");

    // dump-bias
    std::string db_ckpt, db_out;
    int db_layer = 0, db_head = 0;
    bool db_json = false;
    auto* dump = app.add_subcommand("dump-bias", "write one layer/head bias matrix as CSV");
    dump->add_option("--checkpoint", db_ckpt, "checkpoint file")->required();
    dump->add_option("--layer", db_layer, "global attention-layer index")->required();
    dump->add_option("--head", db_head, "head index")->required();
    dump->add_option("--out", db_out, "output CSV file")->required();
    dump->add_flag("--json", db_json, "machine-readable report on stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (*gen) return cmd_pattern_gen(gen_opts, core_side_opt->count() > 0);
    if (*validate) return cmd_pattern_validate(validate_in, validate_json);
    if (*render) return cmd_pattern_render(render_in, render_px, render_out, render_json);
    if (*qkva) return cmd_oracle_qkva(qk_h, qk_w, qk_trials, qk_seed, qk_json);
    if (*gradcheck) return cmd_gradcheck(gc_config, gc_tol, gc_seed, gc_json);
    if (*bench)
        return cmd_bench(bench_layout, bench_channels, bench_heads, bench_winnow, bench_iters, bench_threads,
                         bench_json);
    if (*count) return cmd_count_params(cp_config, cp_json);
    if (*train) return cmd_train(tr_config, tr_steps, tr_seed, tr_out, tr_threads, tr_json);
    if (*dump) return cmd_dump_bias(db_ckpt, db_layer, db_head, db_out, db_json);
    std::cerr << "error: no subcommand\n";
    return kExitUsage;
}

}  // namespace pat
