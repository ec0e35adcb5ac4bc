#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pat/model.hpp"
#include "pat/rng.hpp"
#include "pat/tensor.hpp"

namespace pat {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Decoupled weight decay applied before the bias-corrected moment update;
// the update itself is a pure per-parameter map, so enumeration order does
// not matter.
template <typename Real>
class AdamW {
public:
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;

    AdamW() = default;
    AdamW(double lr_, double weight_decay_) : lr(lr_), weight_decay(weight_decay_) {}

    void attach(const ParamStore<Real>& params) {
        names_ = params.names();
        m_.clear();
        v_.clear();
        offsets_.clear();
        std::size_t off = 0;
        for (const std::string& name : names_) {
            const Tensor<Real>& p = params.at(name);
            m_.push_back(Tensor<Real>::zeros(p.shape()));
            v_.push_back(Tensor<Real>::zeros(p.shape()));
            offsets_.push_back(off);
            off += p.size();
        }
        total_ = off;
        step_ = 0;
    }

    std::uint64_t steps_taken() const { return step_; }
    void set_steps_taken(std::uint64_t t) { step_ = t; }
    const std::vector<std::string>& names() const { return names_; }
    std::vector<Tensor<Real>>& first_moments() { return m_; }
    std::vector<Tensor<Real>>& second_moments() { return v_; }
    std::size_t flat_size() const { return total_; }
    const std::vector<std::size_t>& offsets() const { return offsets_; }

    // grads is one flat buffer laid out in attached parameter order.
    void apply(ParamStore<Real>& params, std::span<const Real> grads, double lr_t) {
        if (grads.size() != total_) throw TrainError("adamw: gradient buffer size mismatch");
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1, double(step_));
        const double bc2 = 1.0 - std::pow(beta2, double(step_));
        for (std::size_t pi = 0; pi < names_.size(); ++pi) {
            Tensor<Real>& p = params.at(names_[pi]);
            auto pv = p.mutable_view();
            auto mv = m_[pi].mutable_view();
            auto vv = v_[pi].mutable_view();
            const Real* g = grads.data() + offsets_[pi];
            for (std::size_t i = 0; i < pv.size(); ++i) {
                const double gi = double(g[i]);
                if (!std::isfinite(gi)) throw TrainError("non-finite gradient for " + names_[pi]);
                double pd = double(pv[i]) * (1.0 - lr_t * weight_decay);
                double mi = beta1 * double(mv[i]) + (1.0 - beta1) * gi;
                double vi = beta2 * double(vv[i]) + (1.0 - beta2) * gi * gi;
                pd -= lr_t * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
                pv[i] = Real(pd);
                mv[i] = Real(mi);
                vv[i] = Real(vi);
            }
        }
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor<Real>> m_, v_;
    std::vector<std::size_t> offsets_;
    std::size_t total_ = 0;
    std::uint64_t step_ = 0;
};

// Class-conditioned images: a fixed random template per class plus Gaussian
// noise. Every sample is a pure function of (seed, index); labels cycle
// through the classes.
class SynthDataset {
public:
    SynthDataset(std::uint64_t seed, int num_classes, int side, double noise_sigma, int in_channels = 3);

    int num_classes() const { return k_; }
    int side() const { return side_; }
    int in_channels() const { return in_channels_; }
    std::uint32_t label(std::uint64_t index) const { return std::uint32_t(index % std::uint64_t(k_)); }

    template <typename Real>
    Tensor<Real> image(std::uint64_t index) const {
        Rng rng(hash_combine(hash_combine(seed_, 0x53414d504cull), index));
        const std::vector<double>& tpl = templates_[label(index)];
        Tensor<Real> img = Tensor<Real>::zeros({tpl.size()});
        auto o = img.mutable_view();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = Real(tpl[i] + sigma_ * rng.normal());
        return img;
    }

private:
    std::uint64_t seed_;
    int k_;
    int side_;
    int in_channels_;
    double sigma_;
    std::vector<std::vector<double>> templates_;
};

struct TrainOptions {
    std::uint64_t steps = 300;           // run until this global step (exclusive)
    std::uint64_t schedule_steps = 300;  // cosine horizon
    std::size_t batch = 32;
    int threads = 1;
    std::string out_dir;  // empty: nothing written
};

struct StepMetrics {
    std::uint64_t step = 0;
    double loss = 0;
    double accuracy = 0;
    double lr = 0;
};

struct TrainResult {
    std::vector<StepMetrics> series;
    std::string checkpoint_path;  // empty if no out_dir
    std::string metrics_path;
};

double cosine_lr(double base_lr, std::uint64_t step, std::uint64_t schedule_steps);

// Runs steps [opt.steps_taken(), options.steps). Gradients are reduced over
// fixed-size sample chunks in chunk order, so the series is identical for
// any thread count, and resuming from a checkpoint continues it bitwise.
TrainResult train_model(Model<float>& model, AdamW<float>& opt, const SynthDataset& data,
                        const TrainOptions& options);

struct Checkpoint {
    std::string config_json;
    std::uint64_t step = 0;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
    std::vector<std::pair<std::string, Tensor<float>>> opt_tensors;
};

std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const Model<float>& model, AdamW<float>& opt);
void restore_checkpoint(const Checkpoint& c, Model<float>& model, AdamW<float>& opt);

struct GradcheckGroup {
    std::string group;
    std::size_t checked = 0;
    double max_rel = 0;
    bool skipped = false;
};

struct GradcheckReport {
    double tol = 1e-4;
    double max_rel = 0;
    bool pass = false;
    std::vector<GradcheckGroup> groups;
    std::string to_string() const;
};

// Central differences (h=1e-3) against backprop in 64-bit on a seeded model
// with every bucket perturbed away from its init so value ties are generic.
// Relative error uses a floored denominator: |fd-bp| / max(|fd|, |bp|, 1).
GradcheckReport gradcheck_model(const ModelConfig& cfg, std::uint64_t seed, double tol = 1e-4,
                                std::size_t min_coords = 200);

}  // namespace pat
