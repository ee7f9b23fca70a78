#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "glc/errors.hpp"
#include "glc/global_pseudo.hpp"
#include "glc/matrix.hpp"
#include "glc/memory_bank.hpp"
#include "glc/metrics.hpp"
#include "glc/model.hpp"
#include "glc/rng.hpp"
#include "glc/scenario.hpp"
#include "glc/silhouette.hpp"

namespace glc {

// Stream salts for the training loops. Derived streams depend only on
// (seed, salt), so every consumer below is reproducible in isolation; tests
// rebuild individual stages (per-epoch pseudo-labels, shuffles) from these.
namespace salt {
inline constexpr std::uint64_t kEstimate = 101;
inline constexpr std::uint64_t kShuffleBase = 1000;    // + epoch
inline constexpr std::uint64_t kPseudoBase = 100000;   // + epoch
}  // namespace salt

inline std::vector<std::size_t> shuffled_indices(std::size_t n, RngState rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[rng.next_below(i)]);
    return idx;
}

struct SourceTrainConfig {
    std::size_t d_hidden = 64;
    std::size_t d_feat = 32;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double lr = 1e-2;
    double momentum = 0.9;
    double alpha = 0.1;  // label smoothing
    std::uint64_t seed = 0;

    void validate() const {
        if (d_hidden < 1 || d_feat < 1) throw std::invalid_argument("train config: zero layer width");
        if (batch_size < 1) throw std::invalid_argument("train config: batch size must be positive");
        if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw std::invalid_argument("train config: momentum must be in [0, 1)");
        if (!(alpha >= 0.0 && alpha < 1.0))
            throw std::invalid_argument("train config: smoothing must be in [0, 1)");
    }
};

// Mini-batch SGD with momentum on the label-smoothed cross-entropy. The
// class count is taken from the labels, which must cover [0, C_s) with no
// gaps. Deterministic: init draws from the seed stream, epoch e shuffles
// with the stream derived from (seed, kShuffleBase + e).
inline ModelParams train_source(const LabeledDataset& data, const SourceTrainConfig& cfg) {
    cfg.validate();
    if (data.x.rows == 0) throw DataError("train_source: empty dataset");
    if (data.y.size() != data.x.rows)
        throw std::invalid_argument("train_source: label count mismatch");

    long long max_label = -1;
    for (long long y : data.y) {
        if (y < 0) throw DataError("train_source: negative label");
        max_label = std::max(max_label, y);
    }
    const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
    std::vector<bool> present(n_classes, false);
    for (long long y : data.y) present[static_cast<std::size_t>(y)] = true;
    for (std::size_t c = 0; c < n_classes; ++c)
        if (!present[c])
            throw DataError("train_source: class " + std::to_string(c) + " has no samples");

    RngState root(cfg.seed);
    ModelParams params = init_model(
        ModelDims{data.x.cols, cfg.d_hidden, cfg.d_feat, n_classes}, root);
    OptimizerState opt = make_optimizer(params, cfg.lr, cfg.momentum);

    const std::size_t n = data.x.rows;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto idx = shuffled_indices(n, root.derive(salt::kShuffleBase + e));
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::span<const std::size_t> batch_idx(idx.data() + start, stop - start);
            LossSpec spec;
            spec.kind = LossKind::smoothed_ce;
            spec.alpha = cfg.alpha;
            spec.labels.reserve(batch_idx.size());
            for (std::size_t i : batch_idx)
                spec.labels.push_back(static_cast<std::size_t>(data.y[i]));
            const Matrix bx = take_rows(data.x, batch_idx);
            sgd_step(params, opt, backward(params, bx, spec));
        }
    }
    return params;
}

enum class Variant { full, no_global, no_local };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_global: return "no_global";
        case Variant::no_local: return "no_local";
    }
    throw std::invalid_argument("variant_name: unknown variant");
}

inline Variant parse_variant(const std::string& name) {
    if (name == "full") return Variant::full;
    if (name == "no_global") return Variant::no_global;
    if (name == "no_local") return Variant::no_local;
    throw std::invalid_argument("parse_variant: unknown variant '" + name + "'");
}

struct AdaptConfig {
    double eta = 0.3;    // weight of the global pseudo-label loss
    double rho = 0.75;   // suppression floor
    double omega = 0.55; // normalized-entropy rejection threshold
    std::size_t knn_k = 4;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double lr = 1e-2;
    double momentum = 0.9;
    std::size_t pseudo_refresh = 1;  // refresh pseudo-labels every n epochs
    std::uint64_t seed = 0;
    Metric silhouette_metric = Metric::cosine;
    Variant variant = Variant::full;

    void validate() const {
        if (!(eta > 0.0)) throw std::invalid_argument("adapt config: eta must be positive");
        if (!(rho > 0.0 && rho <= 1.0))
            throw std::invalid_argument("adapt config: rho must be in (0, 1]");
        if (!(omega > 0.0 && omega < 1.0))
            throw std::invalid_argument("adapt config: omega must be in (0, 1)");
        if (knn_k < 1) throw std::invalid_argument("adapt config: knn k must be positive");
        if (batch_size < 1) throw std::invalid_argument("adapt config: batch size must be positive");
        if (pseudo_refresh < 1)
            throw std::invalid_argument("adapt config: refresh period must be positive");
        if (!(lr > 0.0)) throw std::invalid_argument("adapt config: lr must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw std::invalid_argument("adapt config: momentum must be in [0, 1)");
    }
};

inline AdaptConfig ablation_variant(const AdaptConfig& cfg, Variant v) {
    switch (v) {
        case Variant::full:
        case Variant::no_global:
        case Variant::no_local: {
            AdaptConfig out = cfg;
            out.variant = v;
            return out;
        }
    }
    throw std::invalid_argument("ablation_variant: unknown variant");
}

struct EpochRecord {
    std::size_t epoch = 0;
    double loss_glb = 0.0;
    double loss_loc = 0.0;
    double loss_tar = 0.0;
    double h_score = std::numeric_limits<double>::quiet_NaN();
    double acc_known = std::numeric_limits<double>::quiet_NaN();
    double acc_unknown = std::numeric_limits<double>::quiet_NaN();
    std::size_t c_t_hat = 0;
};

using AdaptHistory = std::vector<EpochRecord>;

struct AdaptResult {
    ModelParams params;
    AdaptHistory history;
    std::size_t c_t_hat = 0;
};

namespace detail {

inline void scale_layer(LinearLayer& l, double s) {
    for (double& v : l.w.data) v *= s;
    for (double& v : l.b) v *= s;
}

inline void add_layer(LinearLayer& a, const LinearLayer& b) {
    for (std::size_t i = 0; i < a.w.data.size(); ++i) a.w.data[i] += b.w.data[i];
    for (std::size_t i = 0; i < a.b.size(); ++i) a.b[i] += b.b[i];
}

inline void scale_gradients(Gradients& g, double s) {
    scale_layer(g.l1, s);
    scale_layer(g.l2, s);
    scale_layer(g.cls, s);
}

inline void add_gradients(Gradients& a, const Gradients& b) {
    add_layer(a.l1, b.l1);
    add_layer(a.l2, b.l2);
    add_layer(a.cls, b.cls);
}

}  // namespace detail

// Called on every refresh epoch with the pseudo-labels the loop will train
// on; purely observational (debug dumps).
using PseudoObserver = std::function<void(std::size_t epoch, const PseudoLabelResult&)>;

// Target-side training loop. The classifier head is never updated; only the
// feature layers move. The target class count is estimated once from the
// source model's features and reused for every epoch. Ground-truth labels,
// when provided, feed the per-epoch history only; the optimization itself
// never sees them. Per-epoch loss records are means over the epoch's
// batches, and loss_tar is recomputed from the recorded means.
inline AdaptResult adapt(const ModelParams& source, const Matrix& target_x,
                         const AdaptConfig& cfg,
                         const std::vector<long long>* eval_labels = nullptr,
                         const PseudoObserver& pseudo_observer = {}) {
    cfg.validate();
    if (target_x.cols != source.dims.d_in)
        throw std::invalid_argument("adapt: data width does not match model input dim");
    if (target_x.rows < 2) throw std::invalid_argument("adapt: need at least 2 target samples");
    if (eval_labels && eval_labels->size() != target_x.rows)
        throw std::invalid_argument("adapt: eval label count mismatch");

    const std::size_t n = target_x.rows;
    const std::size_t c_s = source.dims.n_classes;
    RngState root(cfg.seed);

    AdaptResult res;
    res.params = source;

    Forward full = forward(res.params, target_x);
    ClassCountOptions est_opt;
    est_opt.metric = cfg.silhouette_metric;
    res.c_t_hat = estimate_class_count(normalize_rows(full.features), c_s,
                                       root.derive(salt::kEstimate), est_opt)
                      .chosen;
    if (cfg.epochs == 0) return res;

    OptimizerState opt = make_optimizer(res.params, cfg.lr, cfg.momentum);
    PseudoLabelResult pseudo;
    MemoryBank bank;

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        if (e % cfg.pseudo_refresh == 0) {
            if (e > 0) full = forward(res.params, target_x);
            if (cfg.variant != Variant::no_global) {
                pseudo = assign_pseudo_labels(full.features, full.probs, res.c_t_hat, cfg.rho,
                                              root.derive(salt::kPseudoBase + e));
                if (pseudo_observer) pseudo_observer(e, pseudo);
            }
            if (cfg.variant != Variant::no_local)
                bank = bank_init(normalize_rows(full.features), full.probs);
        }

        const auto idx = shuffled_indices(n, root.derive(salt::kShuffleBase + e));
        double sum_glb = 0.0, sum_loc = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::span<const std::size_t> batch_idx(idx.data() + start, stop - start);
            const Matrix bx = take_rows(target_x, batch_idx);
            const Forward fwd = forward(res.params, bx);

            Gradients total;
            bool have_grads = false;
            double glb = 0.0, loc = 0.0;
            if (cfg.variant != Variant::no_global) {
                const Matrix q = take_rows(pseudo.targets, batch_idx);
                glb = soft_ce_loss(fwd.probs, q);
                total = detail::backward_from(res.params, bx, fwd, q, true);
                detail::scale_gradients(total, cfg.eta);
                have_grads = true;
            }
            if (cfg.variant != Variant::no_local) {
                const Matrix targets = knn_neighbor_targets(bank, batch_idx, cfg.knn_k);
                loc = local_loss(fwd.probs, targets);
                Gradients g = detail::backward_from(res.params, bx, fwd, targets, true);
                if (have_grads) detail::add_gradients(total, g);
                else total = std::move(g);
            }
            if (!std::isfinite(glb) || !std::isfinite(loc))
                throw NumericError("adapt: non-finite loss at epoch " + std::to_string(e) +
                                   ", batch " + std::to_string(n_batches));
            sgd_step(res.params, opt, total, true);
            if (cfg.variant != Variant::no_local)
                bank_update(bank, batch_idx, normalize_rows(fwd.features), fwd.probs);
            sum_glb += glb;
            sum_loc += loc;
            ++n_batches;
        }

        EpochRecord rec;
        rec.epoch = e;
        rec.loss_glb = sum_glb / static_cast<double>(n_batches);
        rec.loss_loc = sum_loc / static_cast<double>(n_batches);
        rec.loss_tar = cfg.eta * rec.loss_glb + rec.loss_loc;
        rec.c_t_hat = res.c_t_hat;
        if (eval_labels) {
            const Forward ev = forward(res.params, target_x);
            const PredictionOutcome outcome = classify_with_rejection(ev.probs, cfg.omega);
            const EvalSummary s = summarize_outcome(outcome.predicted, *eval_labels, c_s);
            rec.h_score = s.h;
            rec.acc_known = s.acc_known;
            rec.acc_unknown = s.acc_unknown;
        }
        res.history.push_back(rec);
    }
    return res;
}

// History CSV; doubles printed with %.17g (NaN prints as "nan" for epochs
// without evaluation labels).
inline void write_history_csv(const AdaptHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_history_csv: cannot open for writing: " + path);
    out << "epoch,loss_glb,loss_loc,loss_tar,h_score,acc_known,acc_unknown,c_t_hat\n";
    char buf[64];
    for (const EpochRecord& r : history) {
        out << r.epoch;
        for (double v : {r.loss_glb, r.loss_loc, r.loss_tar, r.h_score, r.acc_known,
                         r.acc_unknown}) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ',' << buf;
        }
        out << ',' << r.c_t_hat << '\n';
    }
    if (!out) throw DataError("write_history_csv: write failed: " + path);
}

}  // namespace glc
