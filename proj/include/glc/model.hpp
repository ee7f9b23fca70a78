#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "glc/errors.hpp"
#include "glc/matrix.hpp"
#include "glc/numeric.hpp"
#include "glc/rng.hpp"

namespace glc {

struct ModelDims {
    std::size_t d_in = 0;
    std::size_t d_hidden = 64;
    std::size_t d_feat = 32;
    std::size_t n_classes = 0;

    bool operator==(const ModelDims&) const = default;
};

// One dense layer; w is (out x in), y = x w^T + b for row-major batches.
struct LinearLayer {
    Matrix w;
    std::vector<double> b;

    bool operator==(const LinearLayer&) const = default;
};

// Feature extractor (two layers, ReLU between) plus a linear classifier head.
struct ModelParams {
    ModelDims dims;
    LinearLayer l1;   // d_in -> d_hidden
    LinearLayer l2;   // d_hidden -> d_feat
    LinearLayer cls;  // d_feat -> n_classes

    bool operator==(const ModelParams&) const = default;
};

namespace detail {

inline LinearLayer init_layer(std::size_t out, std::size_t in, RngState& rng) {
    LinearLayer layer;
    layer.w = Matrix(out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : layer.w.data) v = rng.next_symmetric(bound);
    layer.b.assign(out, 0.0);
    return layer;
}

// y = x w^T + b, accumulated in ascending input-index order.
inline Matrix linear_forward(const Matrix& x, const LinearLayer& layer) {
    if (x.cols != layer.w.cols)
        throw std::invalid_argument("linear_forward: input width does not match layer");
    Matrix y(x.rows, layer.w.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.data.data() + i * x.cols;
        for (std::size_t o = 0; o < layer.w.rows; ++o) {
            const double* wo = layer.w.data.data() + o * layer.w.cols;
            double acc = layer.b[o];
            for (std::size_t k = 0; k < x.cols; ++k) acc += xi[k] * wo[k];
            y(i, o) = acc;
        }
    }
    return y;
}

// Gradient blocks for y = x w^T + b given dL/dy; returns dL/dx.
inline Matrix linear_backward(const Matrix& x, const LinearLayer& layer, const Matrix& dy,
                              LinearLayer& grad) {
    grad.w = Matrix(layer.w.rows, layer.w.cols);
    for (std::size_t o = 0; o < layer.w.rows; ++o)
        for (std::size_t k = 0; k < layer.w.cols; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) acc += dy(i, o) * x(i, k);
            grad.w(o, k) = acc;
        }
    grad.b = column_sums(dy);
    Matrix dx(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t k = 0; k < x.cols; ++k) {
            double acc = 0.0;
            for (std::size_t o = 0; o < layer.w.rows; ++o) acc += dy(i, o) * layer.w(o, k);
            dx(i, k) = acc;
        }
    return dx;
}

}  // namespace detail

// Weights uniform in +-1/sqrt(fan_in), biases zero. Layers are drawn in the
// fixed order l1, l2, cls so a seed fully determines the parameters.
inline ModelParams init_model(const ModelDims& dims, RngState& rng) {
    if (dims.d_in == 0 || dims.d_hidden == 0 || dims.d_feat == 0 || dims.n_classes == 0)
        throw std::invalid_argument("init_model: all dimensions must be positive");
    ModelParams p;
    p.dims = dims;
    p.l1 = detail::init_layer(dims.d_hidden, dims.d_in, rng);
    p.l2 = detail::init_layer(dims.d_feat, dims.d_hidden, rng);
    p.cls = detail::init_layer(dims.n_classes, dims.d_feat, rng);
    return p;
}

struct Forward {
    Matrix hidden_pre;
    Matrix hidden_act;
    Matrix features;
    Matrix logits;
    Matrix probs;
};

inline Forward forward(const ModelParams& params, const Matrix& batch) {
    if (batch.cols != params.dims.d_in)
        throw std::invalid_argument("forward: batch width does not match model input dim");
    Forward f;
    f.hidden_pre = detail::linear_forward(batch, params.l1);
    f.hidden_act = f.hidden_pre;
    for (double& v : f.hidden_act.data) v = v > 0.0 ? v : 0.0;
    f.features = detail::linear_forward(f.hidden_act, params.l2);
    f.logits = detail::linear_forward(f.features, params.cls);
    if (!f.logits.all_finite()) throw NumericError("forward: non-finite logits");
    f.probs = softmax_rows(f.logits);
    return f;
}

constexpr double kLogEps = 1e-12;

// Target distribution for hard labels under label smoothing:
// q_k = (1 - alpha) * [k == y] + alpha / C.
inline Matrix smoothed_target(const std::vector<std::size_t>& labels, std::size_t n_classes,
                              double alpha) {
    if (n_classes == 0) throw std::invalid_argument("smoothed_target: n_classes must be positive");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("smoothed_target: alpha must be in [0, 1]");
    Matrix q(labels.size(), n_classes, alpha / static_cast<double>(n_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_classes) throw std::invalid_argument("smoothed_target: label out of range");
        q(i, labels[i]) += 1.0 - alpha;
    }
    return q;
}

// Mean over rows of -sum_c target_c * log(max(prob_c, 1e-12)). The clamp
// bounds the reported value; gradients elsewhere use the exact composition.
inline double soft_ce_loss(const Matrix& probs, const Matrix& targets) {
    if (!probs.same_shape(targets)) throw std::invalid_argument("soft_ce_loss: shape mismatch");
    if (probs.rows == 0) throw std::invalid_argument("soft_ce_loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i)
        for (std::size_t c = 0; c < probs.cols; ++c)
            total -= targets(i, c) * std::log(std::max(probs(i, c), kLogEps));
    return total / static_cast<double>(probs.rows);
}

inline double smoothed_ce_loss(const Matrix& probs, const std::vector<std::size_t>& labels,
                               double alpha) {
    if (labels.size() != probs.rows)
        throw std::invalid_argument("smoothed_ce_loss: label count does not match batch");
    return soft_ce_loss(probs, smoothed_target(labels, probs.cols, alpha));
}

enum class LossKind { smoothed_ce, soft_ce };

struct LossSpec {
    LossKind kind = LossKind::smoothed_ce;
    std::vector<std::size_t> labels;  // smoothed_ce
    double alpha = 0.0;               // smoothed_ce
    Matrix targets;                   // soft_ce
    bool freeze_classifier = false;
};

struct Gradients {
    LinearLayer l1;
    LinearLayer l2;
    LinearLayer cls;
};

namespace detail {

inline Matrix loss_targets(const LossSpec& spec, std::size_t rows, std::size_t n_classes) {
    switch (spec.kind) {
        case LossKind::smoothed_ce:
            if (spec.labels.size() != rows)
                throw std::invalid_argument("backward: label count does not match batch");
            return smoothed_target(spec.labels, n_classes, spec.alpha);
        case LossKind::soft_ce:
            if (spec.targets.rows != rows || spec.targets.cols != n_classes)
                throw std::invalid_argument("backward: target shape does not match batch");
            return spec.targets;
    }
    throw std::invalid_argument("backward: unknown loss kind");
}

inline Gradients backward_from(const ModelParams& params, const Matrix& batch, const Forward& fwd,
                               const Matrix& targets, bool freeze_classifier) {
    const double n = static_cast<double>(batch.rows);
    Matrix dlogits(fwd.probs.rows, fwd.probs.cols);
    for (std::size_t i = 0; i < dlogits.data.size(); ++i)
        dlogits.data[i] = (fwd.probs.data[i] - targets.data[i]) / n;

    Gradients g;
    Matrix dfeat = linear_backward(fwd.features, params.cls, dlogits, g.cls);
    if (freeze_classifier) {
        g.cls.w = Matrix(params.cls.w.rows, params.cls.w.cols);
        g.cls.b.assign(params.cls.b.size(), 0.0);
    }
    Matrix dact = linear_backward(fwd.hidden_act, params.l2, dfeat, g.l2);
    for (std::size_t i = 0; i < dact.data.size(); ++i)
        if (fwd.hidden_pre.data[i] <= 0.0) dact.data[i] = 0.0;
    linear_backward(batch, params.l1, dact, g.l1);
    return g;
}

}  // namespace detail

inline Gradients backward(const ModelParams& params, const Matrix& batch, const LossSpec& spec) {
    if (batch.rows == 0) throw std::invalid_argument("backward: empty batch");
    const Forward fwd = forward(params, batch);
    const Matrix targets = detail::loss_targets(spec, batch.rows, params.dims.n_classes);
    return detail::backward_from(params, batch, fwd, targets, spec.freeze_classifier);
}

struct OptimizerState {
    double lr = 1e-2;
    double momentum = 0.9;
    LinearLayer v1;
    LinearLayer v2;
    LinearLayer vc;
};

inline OptimizerState make_optimizer(const ModelParams& params, double lr, double momentum) {
    if (!(lr > 0.0)) throw std::invalid_argument("make_optimizer: lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw std::invalid_argument("make_optimizer: momentum must be in [0, 1)");
    OptimizerState s;
    s.lr = lr;
    s.momentum = momentum;
    auto zeros = [](const LinearLayer& layer) {
        LinearLayer z;
        z.w = Matrix(layer.w.rows, layer.w.cols);
        z.b.assign(layer.b.size(), 0.0);
        return z;
    };
    s.v1 = zeros(params.l1);
    s.v2 = zeros(params.l2);
    s.vc = zeros(params.cls);
    return s;
}

namespace detail {

inline void sgd_layer(LinearLayer& p, LinearLayer& v, const LinearLayer& g, double lr, double m) {
    if (!p.w.same_shape(g.w) || p.b.size() != g.b.size())
        throw std::invalid_argument("sgd_step: gradient shape mismatch");
    for (double x : g.w.data)
        if (!std::isfinite(x)) throw NumericError("sgd_step: non-finite gradient");
    for (double x : g.b)
        if (!std::isfinite(x)) throw NumericError("sgd_step: non-finite gradient");
    for (std::size_t i = 0; i < p.w.data.size(); ++i) {
        v.w.data[i] = m * v.w.data[i] + g.w.data[i];
        p.w.data[i] -= lr * v.w.data[i];
    }
    for (std::size_t i = 0; i < p.b.size(); ++i) {
        v.b[i] = m * v.b[i] + g.b[i];
        p.b[i] -= lr * v.b[i];
    }
}

}  // namespace detail

// v <- m v + g; p <- p - lr v. With freeze_classifier the classifier block
// (parameters and momentum buffer) is not touched at all, so it stays
// bit-identical regardless of what the gradient holds.
inline void sgd_step(ModelParams& params, OptimizerState& state, const Gradients& grads,
                     bool freeze_classifier = false) {
    detail::sgd_layer(params.l1, state.v1, grads.l1, state.lr, state.momentum);
    detail::sgd_layer(params.l2, state.v2, grads.l2, state.lr, state.momentum);
    if (!freeze_classifier) detail::sgd_layer(params.cls, state.vc, grads.cls, state.lr, state.momentum);
}

// FNV-1a over the classifier block's raw bytes; detects any drift of the
// frozen head during adaptation.
inline std::uint64_t classifier_checksum(const ModelParams& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &p[i], sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ULL;
            }
        }
    };
    mix(params.cls.w.data.data(), params.cls.w.data.size());
    mix(params.cls.b.data(), params.cls.b.size());
    return h;
}

namespace detail {

inline void write_values(std::ostream& out, const double* p, std::size_t n) {
    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", p[i]);
        if (i) out << ' ';
        out << buf;
    }
    out << '\n';
}

inline void write_layer(std::ostream& out, const std::string& name, const LinearLayer& layer) {
    out << name << ' ' << layer.w.rows << ' ' << layer.w.cols << '\n';
    for (std::size_t r = 0; r < layer.w.rows; ++r)
        write_values(out, layer.w.data.data() + r * layer.w.cols, layer.w.cols);
    write_values(out, layer.b.data(), layer.b.size());
}

inline std::vector<double> read_values(std::istream& in, std::size_t n, const std::string& what) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("checkpoint: missing values for " + what);
    std::istringstream row(line);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!(row >> values[i])) throw DataError("checkpoint: bad value in " + what);
    double extra;
    if (row >> extra) throw DataError("checkpoint: extra value in " + what);
    for (double v : values)
        if (!std::isfinite(v)) throw DataError("checkpoint: non-finite value in " + what);
    return values;
}

inline LinearLayer read_layer(std::istream& in, const std::string& name) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("checkpoint: missing layer " + name);
    std::istringstream header(line);
    std::string got;
    std::size_t out_dim = 0, in_dim = 0;
    if (!(header >> got >> out_dim >> in_dim) || got != name)
        throw DataError("checkpoint: expected layer header '" + name + "'");
    if (out_dim == 0 || in_dim == 0) throw DataError("checkpoint: zero layer dimension in " + name);
    LinearLayer layer;
    layer.w = Matrix(out_dim, in_dim);
    for (std::size_t r = 0; r < out_dim; ++r) {
        auto row = read_values(in, in_dim, name + " row");
        std::copy(row.begin(), row.end(), layer.w.data.begin() + r * in_dim);
    }
    layer.b = read_values(in, out_dim, name + " bias");
    return layer;
}

}  // namespace detail

// Text checkpoint, one value list per line, doubles printed with %.17g so a
// save/load round trip is bit-exact. Layout:
//   glc-model v1
//   dims <d_in> <d_hidden> <d_feat> <n_classes>
//   l1 <out> <in>, then <out> weight rows, then one bias line
//   l2 ..., cls ... in the same shape
inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("checkpoint: cannot open for writing: " + path);
    out << "glc-model v1\n";
    out << "dims " << params.dims.d_in << ' ' << params.dims.d_hidden << ' ' << params.dims.d_feat
        << ' ' << params.dims.n_classes << '\n';
    detail::write_layer(out, "l1", params.l1);
    detail::write_layer(out, "l2", params.l2);
    detail::write_layer(out, "cls", params.cls);
    if (!out) throw DataError("checkpoint: write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("checkpoint: cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "glc-model v1")
        throw DataError("checkpoint: unsupported format tag in " + path);
    if (!std::getline(in, line)) throw DataError("checkpoint: missing dims line");
    std::istringstream dims_line(line);
    std::string tag;
    ModelParams p;
    if (!(dims_line >> tag >> p.dims.d_in >> p.dims.d_hidden >> p.dims.d_feat >>
          p.dims.n_classes) ||
        tag != "dims")
        throw DataError("checkpoint: bad dims line");
    p.l1 = detail::read_layer(in, "l1");
    p.l2 = detail::read_layer(in, "l2");
    p.cls = detail::read_layer(in, "cls");
    if (p.l1.w.rows != p.dims.d_hidden || p.l1.w.cols != p.dims.d_in ||
        p.l2.w.rows != p.dims.d_feat || p.l2.w.cols != p.dims.d_hidden ||
        p.cls.w.rows != p.dims.n_classes || p.cls.w.cols != p.dims.d_feat)
        throw DataError("checkpoint: layer shapes disagree with dims line");
    return p;
}

}  // namespace glc
