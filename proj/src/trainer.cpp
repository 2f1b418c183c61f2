// Copyright 2026 The tsaseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the license.

#include "tsaseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace tsaseg {

TsaConfig TrainConfig::tsa() const {
    TsaConfig t;
    t.alpha_max = alpha_max;
    t.ramp_steps = ramp_steps < 0 ? iterations / 2 : ramp_steps;
    t.direction = direction;
    return t;
}

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
    };
    require(beta >= 0.0, "beta must be >= 0");
    require(lambda_teacher >= 0.0 && lambda_teacher <= 1.0, "lambda_teacher must lie in [0, 1]");
    require(stats_momentum >= 0.0 && stats_momentum <= 1.0, "stats_momentum must lie in [0, 1]");
    require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
    require(alpha_max >= 0.0 && alpha_max <= 1.0, "alpha_max must lie in [0, 1]");
    require(lr > 0.0, "lr must be > 0");
    require(sgd_momentum >= 0.0 && sgd_momentum < 1.0, "sgd_momentum must lie in [0, 1)");
    require(grad_clip >= 0.0, "grad_clip must be >= 0");
    require(iterations >= 0, "iterations must be >= 0");
    require(batch_labeled >= 1, "batch_labeled must be >= 1");
    require(mix.labeled >= 0.0 && mix.unlabeled >= 0.0, "mix weights must be >= 0");
    require(eval_interval >= 0, "eval_interval must be >= 0");
    require(feature_dim >= 1, "feature_dim must be >= 1");
    require(classes >= 2 && classes <= 4, "classes must be 2, 3, or 4");
}

std::vector<double> pixel_probabilities(const Tensor3& logits) {
    const std::size_t c = logits.channels;
    const std::size_t n = logits.pixels();
    std::vector<double> probs(n * c);
    for (std::size_t p = 0; p < n; ++p) {
        double m = logits.values[p];
        for (std::size_t k = 1; k < c; ++k) m = std::max(m, logits.values[k * n + p]);
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double e = std::exp(logits.values[k * n + p] - m);
            probs[p * c + k] = e;
            s += e;
        }
        for (std::size_t k = 0; k < c; ++k) probs[p * c + k] /= s;
    }
    return probs;
}

std::vector<Label> argmax_labels(const Tensor3& logits) {
    const std::size_t n = logits.pixels();
    std::vector<Label> out(n, 0);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < logits.channels; ++k)
            if (logits.values[k * n + p] > logits.values[best * n + p]) best = k;
        out[p] = static_cast<Label>(best);
    }
    return out;
}

SupervisedLoss supervised_loss(const Tensor3& logits, std::span<const Label> target, std::span<const double> weight) {
    constexpr double eps = 1e-5;
    const std::size_t classes = logits.channels;
    const std::size_t n = logits.pixels();
    if (target.size() != n || weight.size() != n) throw DimensionError("supervised_loss: shapes disagree");
    if (classes < 2) throw std::invalid_argument("supervised_loss: need at least two classes");

    const std::vector<double> probs = pixel_probabilities(logits);
    double total_weight = 0.0;
    for (double w : weight) total_weight += w;
    if (!(total_weight > 0.0)) throw std::invalid_argument("supervised_loss: weights sum to zero");

    SupervisedLoss out;
    out.grad_logits = Tensor3(classes, logits.height, logits.width);
    auto& g = out.grad_logits.values;

    // Weighted cross-entropy.
    double ce = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const Label y = target[p];
        if (y >= classes) throw std::out_of_range("supervised_loss: label out of range");
        ce -= weight[p] * std::log(std::max(probs[p * classes + y], 1e-300));
        const double scale = 0.5 * weight[p] / total_weight;
        for (std::size_t k = 0; k < classes; ++k)
            g[k * n + p] += scale * (probs[p * classes + k] - (k == y ? 1.0 : 0.0));
    }
    out.cross_entropy = ce / total_weight;

    // Weighted soft Dice over foreground classes.
    const double fg = static_cast<double>(classes - 1);
    std::vector<double> inter(classes, 0.0), denom(classes, 0.0);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t k = 1; k < classes; ++k) {
            const double pk = probs[p * classes + k];
            const double tk = target[p] == k ? 1.0 : 0.0;
            inter[k] += weight[p] * pk * tk;
            denom[k] += weight[p] * (pk + tk);
        }
    double dice_sum = 0.0;
    for (std::size_t k = 1; k < classes; ++k) dice_sum += (2.0 * inter[k] + eps) / (denom[k] + eps);
    out.dice_loss = 1.0 - dice_sum / fg;

    // dL/dP then through the softmax Jacobian.
    std::vector<double> dp(classes);
    for (std::size_t p = 0; p < n; ++p) {
        dp[0] = 0.0;
        for (std::size_t k = 1; k < classes; ++k) {
            const double tk = target[p] == k ? 1.0 : 0.0;
            const double s = denom[k] + eps;
            const double num = 2.0 * inter[k] + eps;
            dp[k] = -0.5 / fg * weight[p] * (2.0 * tk * s - num) / (s * s);
        }
        double dot_pd = 0.0;
        for (std::size_t k = 0; k < classes; ++k) dot_pd += dp[k] * probs[p * classes + k];
        for (std::size_t k = 0; k < classes; ++k) g[k * n + p] += probs[p * classes + k] * (dp[k] - dot_pd);
    }

    out.value = 0.5 * out.cross_entropy + 0.5 * out.dice_loss;
    return out;
}

TrainerState TrainerState::initial(const TrainConfig& cfg) {
    cfg.validate();
    TrainerState s;
    s.rng = Rng(cfg.seed);
    s.student = SegNetParams::initialize(cfg.feature_dim, cfg.classes, s.rng);
    s.teacher = s.student;
    s.velocity = SegNetParams(cfg.feature_dim, cfg.classes);
    s.bank = StatsBank(cfg.classes, cfg.feature_dim, cfg.stats_momentum);
    return s;
}

namespace {

/// Concatenates pixel features of several maps (pixel-major).
PixelFeatures concat_features(const std::vector<Tensor3>& maps) {
    std::size_t total = 0;
    for (const auto& m : maps) total += m.pixels();
    const std::size_t d = maps.empty() ? 0 : maps.front().channels;
    PixelFeatures out(total, d);
    std::size_t offset = 0;
    for (const auto& m : maps) {
        const std::size_t n = m.pixels();
        for (std::size_t c = 0; c < d; ++c) {
            const auto ch = m.channel(c);
            for (std::size_t p = 0; p < n; ++p) out.values[(offset + p) * d + c] = ch[p];
        }
        offset += n;
    }
    return out;
}

void update_bank(StatsBank& bank, Domain domain, const PixelFeatures& features, std::span<const Label> labels,
                 std::vector<std::size_t>* counts) {
    for (std::size_t c = 0; c < bank.classes(); ++c) {
        const auto label = static_cast<Label>(c);
        const BatchMoments m = batch_class_stats(features, labels, label);
        bank.ema_update(domain, label, m);
        if (counts) (*counts)[c] = m.count;
    }
}

} // namespace

StepReport train_step(TrainerState& state, const TrainConfig& cfg, std::span<const Sample* const> labeled,
                      std::span<const Sample* const> unlabeled) {
    if (labeled.empty()) throw std::invalid_argument("train_step: empty labeled batch");
    const std::size_t d = cfg.feature_dim;
    const std::size_t classes = cfg.classes;

    StepReport report;
    report.iteration = state.iteration;
    report.confident_pixels.assign(classes, 0);
    report.alpha = alpha_at(state.iteration, cfg.tsa());

    // (1) Teacher pseudo-labels on the unmixed unlabelled images.
    std::vector<std::vector<Label>> pseudo(unlabeled.size());
    std::vector<Tensor3> teacher_features(unlabeled.size());
    std::vector<Label> confident_labels;
    for (std::size_t u = 0; u < unlabeled.size(); ++u) {
        Tensor3 logits;
        infer(state.teacher, to_tensor(*unlabeled[u]), teacher_features[u], logits);
        const auto probs = pixel_probabilities(logits);
        ConfidentPixels conf = confident_pixels(probs, classes, cfg.tau);
        for (std::size_t p = 0; p < conf.pseudo_labels.size(); ++p)
            confident_labels.push_back(conf.selected[p] ? conf.pseudo_labels[p] : kIgnoreLabel);
        pseudo[u] = std::move(conf.pseudo_labels);
    }

    // (2) Target statistics from confident teacher pixels.
    if (!unlabeled.empty())
        update_bank(state.bank, Domain::target, concat_features(teacher_features), confident_labels,
                    &report.confident_pixels);

    // (3) Student on labelled images: source statistics, supervised and TSA losses.
    std::vector<ForwardResult> lab(labeled.size());
    std::vector<Tensor3> lab_features;
    std::vector<Label> lab_labels;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        lab[i] = forward(state.student, to_tensor(*labeled[i]));
        lab_features.push_back(lab[i].features);
        lab_labels.insert(lab_labels.end(), labeled[i]->label.begin(), labeled[i]->label.end());
    }
    const PixelFeatures lab_pixels = concat_features(lab_features);
    update_bank(state.bank, Domain::source, lab_pixels, lab_labels, nullptr);

    const double inv_l = 1.0 / static_cast<double>(labeled.size());
    std::vector<Tensor3> lab_grad_logits(labeled.size());
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const std::vector<double> ones(labeled[i]->label.size(), 1.0);
        SupervisedLoss sl = supervised_loss(lab[i].logits, labeled[i]->label, ones);
        report.loss_sup += inv_l * sl.value;
        for (double& g : sl.grad_logits.values) g *= inv_l;
        lab_grad_logits[i] = std::move(sl.grad_logits);
    }

    const LossReport tsa = tsa_loss(lab_pixels, lab_labels, state.student.head, state.bank, report.alpha,
                                    cfg.direction);
    report.loss_tsa = tsa.value;

    SegNetParams grads(d, classes);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const std::size_t h = labeled[i]->height;
        const std::size_t w = labeled[i]->width;
        Tensor3 grad_features(d, h, w);
        for (std::size_t p = 0; p < h * w; ++p)
            for (std::size_t k = 0; k < d; ++k)
                grad_features.values[k * h * w + p] = cfg.beta * tsa.grad_features.values[(offset + p) * d + k];
        offset += h * w;
        accumulate(grads, backward(state.student, lab[i].cache, lab_grad_logits[i], grad_features));
    }
    for (std::size_t k = 0; k < grads.head.weights.size(); ++k) grads.head.weights[k] += cfg.beta * tsa.grad_weights[k];
    for (std::size_t k = 0; k < grads.head.biases.size(); ++k) grads.head.biases[k] += cfg.beta * tsa.grad_biases[k];

    // (4) Bidirectional copy-paste consistency.
    if (!unlabeled.empty()) {
        const std::size_t pairs = labeled.size();
        const double inv_m = 1.0 / static_cast<double>(2 * pairs);
        for (std::size_t i = 0; i < pairs; ++i) {
            const Sample& lj = *labeled[i];
            const Sample& lk = *labeled[(i + 1) % pairs];
            const std::size_t n = i % unlabeled.size();
            const std::size_t m = (i + 1) % unlabeled.size();
            const MixMask mask = sample_mask(state.rng, lj.height, lj.width);
            const MixedSample mixed[2] = {
                mix_out(lj, unlabeled[n]->image, pseudo[n], mask, cfg.mix),
                mix_in(lk, unlabeled[m]->image, pseudo[m], mask, cfg.mix),
            };
            for (const MixedSample& ms : mixed) {
                Tensor3 image(1, lj.height, lj.width);
                for (std::size_t p = 0; p < ms.image.size(); ++p) image.values[p] = ms.image[p];
                const ForwardResult fr = forward(state.student, image);
                SupervisedLoss sl = supervised_loss(fr.logits, ms.target, ms.weight);
                report.loss_cons += inv_m * sl.value;
                for (double& g : sl.grad_logits.values) g *= inv_m;
                const Tensor3 zero_features(d, lj.height, lj.width);
                accumulate(grads, backward(state.student, fr.cache, sl.grad_logits, zero_features));
            }
        }
    }

    // (5) Student update; the teacher is only ever moved by EMA.
    report.grad_norm = cfg.grad_clip > 0.0 ? clip_global_norm(grads, cfg.grad_clip) : global_norm(grads);
    const std::uint64_t teacher_sum = checksum(state.teacher);
    sgd_step(state.student, grads, cfg.lr, cfg.sgd_momentum, state.velocity);
    if (checksum(state.teacher) != teacher_sum) throw std::logic_error("train_step: teacher modified by backprop");

    // (6) Teacher EMA.
    ema_teacher_update(state.teacher, state.student, cfg.lambda_teacher);

    report.loss_total = report.loss_sup + report.loss_cons + cfg.beta * report.loss_tsa;
    ++state.iteration;
    return report;
}

Split parse_split(const std::string& name) {
    if (name == "source") return Split::source;
    if (name == "target") return Split::target;
    if (name == "source_labeled") return Split::source_labeled;
    if (name == "source_unlabeled") return Split::source_unlabeled;
    if (name == "all") return Split::all;
    throw std::invalid_argument("unknown split '" + name + "'");
}

const char* to_string(Split split) {
    switch (split) {
    case Split::source: return "source";
    case Split::target: return "target";
    case Split::source_labeled: return "source_labeled";
    case Split::source_unlabeled: return "source_unlabeled";
    case Split::all: return "all";
    }
    return "unknown";
}

std::vector<std::size_t> split_indices(const Dataset& data, Split split) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        const auto& r = data.records[i];
        bool keep = false;
        switch (split) {
        case Split::source: keep = r.domain == Domain::source; break;
        case Split::target: keep = r.domain == Domain::target; break;
        case Split::source_labeled: keep = r.domain == Domain::source && r.labeled; break;
        case Split::source_unlabeled: keep = r.domain == Domain::source && !r.labeled; break;
        case Split::all: keep = true; break;
        }
        if (keep) out.push_back(i);
    }
    return out;
}

Trainer::Trainer(TrainConfig cfg, const Dataset& data)
    : cfg_(std::move(cfg)), data_(&data), labeled_(split_indices(data, Split::source_labeled)),
      unlabeled_(split_indices(data, Split::target)), state_(TrainerState::initial(cfg_)) {
    if (labeled_.empty()) throw std::invalid_argument("Trainer: dataset has no labeled source samples");
    for (std::size_t i : labeled_) {
        const Sample& s = data.samples[i];
        if (s.label.size() != s.height * s.width) throw DimensionError("Trainer: labeled sample without labels");
        for (Label l : s.label)
            if (l >= cfg_.classes) throw std::out_of_range("Trainer: label exceeds configured class count");
    }
}

StepReport Trainer::step() {
    std::vector<const Sample*> lab;
    std::vector<const Sample*> unl;
    for (std::size_t b = 0; b < cfg_.batch_labeled; ++b)
        lab.push_back(&data_->samples[labeled_[state_.rng.uniform_index(labeled_.size())]]);
    if (!unlabeled_.empty())
        for (std::size_t b = 0; b < cfg_.batch_unlabeled; ++b)
            unl.push_back(&data_->samples[unlabeled_[state_.rng.uniform_index(unlabeled_.size())]]);
    return train_step(state_, cfg_, lab, unl);
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { checkpoint_save(path, state_); }
void Trainer::load_checkpoint(const std::filesystem::path& path) { checkpoint_load(path, state_); }

EvalResult evaluate(const SegNetParams& params, const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("evaluate: empty split");
    EvalResult out;
    Tensor3 features, logits;
    for (std::size_t i : indices) {
        const Sample& s = data.samples.at(i);
        if (s.label.size() != s.height * s.width)
            throw std::invalid_argument("evaluate: sample " + data.records.at(i).image_path + " has no labels");
        infer(params, to_tensor(s), features, logits);
        const auto pred = argmax_labels(logits);
        out.samples.push_back(i);
        out.per_sample.push_back(segmentation_metrics(pred, s.label, s.height, s.width, params.classes()));
    }
    out.aggregate = average_rows(out.per_sample);
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_metric_row(std::ostream& os, const std::string& prefix, const std::string& cls, const ClassMetrics& m,
                      std::size_t sentinels) {
    os << prefix << ',' << cls << ',' << fmt(m.dice) << ',' << fmt(m.jaccard) << ',' << fmt(m.hd95) << ','
       << fmt(m.asd) << ',' << sentinels << '\n';
}

} // namespace

std::string format_step_row(const StepReport& r) {
    std::string counts;
    for (std::size_t c = 0; c < r.confident_pixels.size(); ++c) {
        if (c) counts += ';';
        counts += std::to_string(r.confident_pixels[c]);
    }
    return std::to_string(r.iteration) + ',' + fmt(r.loss_total) + ',' + fmt(r.loss_sup) + ',' + fmt(r.loss_cons) +
           ',' + fmt(r.loss_tsa) + ',' + fmt(r.alpha) + ',' + counts;
}

void write_eval_rows(std::ostream& os, std::int64_t iteration, Split split, const MetricsRow& row) {
    const std::string prefix = std::to_string(iteration) + ',' + to_string(split);
    for (std::size_t k = 0; k < row.per_class.size(); ++k)
        write_metric_row(os, prefix, std::to_string(k + 1), row.per_class[k], row.per_class[k].sentinel ? 1 : 0);
    write_metric_row(os, prefix, "mean", {row.dice, row.jaccard, row.hd95, row.asd, row.sentinel_count > 0},
                     row.sentinel_count);
}

void write_per_sample_rows(std::ostream& os, const Dataset& data, const EvalResult& result) {
    for (std::size_t s = 0; s < result.samples.size(); ++s) {
        const std::string name = data.records.at(result.samples[s]).image_path;
        const MetricsRow& row = result.per_sample[s];
        for (std::size_t k = 0; k < row.per_class.size(); ++k)
            write_metric_row(os, name, std::to_string(k + 1), row.per_class[k], row.per_class[k].sentinel ? 1 : 0);
        write_metric_row(os, name, "mean", {row.dice, row.jaccard, row.hd95, row.asd, row.sentinel_count > 0},
                         row.sentinel_count);
    }
}

EvalNetwork parse_eval_network(const std::string& name) {
    if (name == "student") return EvalNetwork::student;
    if (name == "teacher") return EvalNetwork::teacher;
    throw std::invalid_argument("unknown network '" + name + "' (expected student or teacher)");
}

EvalResult run_training(Trainer& trainer, std::span<const std::size_t> eval_indices, const TrainCallbacks& cb,
                        EvalNetwork network) {
    const TrainConfig& cfg = trainer.config();
    auto params = [&]() -> const SegNetParams& {
        return network == EvalNetwork::teacher ? trainer.state().teacher : trainer.state().student;
    };
    while (trainer.state().iteration < cfg.iterations) {
        const StepReport r = trainer.step();
        if (cb.on_step) cb.on_step(r);
        const std::int64_t done = trainer.state().iteration;
        if (cfg.eval_interval > 0 && done % cfg.eval_interval == 0 && done < cfg.iterations && !eval_indices.empty() &&
            cb.on_eval)
            cb.on_eval(done, evaluate(params(), trainer.data(), eval_indices));
    }
    if (eval_indices.empty()) return {};
    EvalResult final_eval = evaluate(params(), trainer.data(), eval_indices);
    if (cb.on_eval) cb.on_eval(trainer.state().iteration, final_eval);
    return final_eval;
}

} // namespace tsaseg
