#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "glc/errors.hpp"
#include "glc/matrix.hpp"
#include "glc/numeric.hpp"
#include "glc/rng.hpp"

namespace glc {

// Category-shift families: which side of the shift owns private classes.
enum class Scenario { clda, pda, osda, opda };

enum class ClassRole { shared, source_private, target_private };

inline std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::clda: return "clda";
        case Scenario::pda: return "pda";
        case Scenario::osda: return "osda";
        case Scenario::opda: return "opda";
    }
    throw std::invalid_argument("scenario_name: unknown scenario");
}

inline Scenario parse_scenario(const std::string& name) {
    if (name == "clda") return Scenario::clda;
    if (name == "pda") return Scenario::pda;
    if (name == "osda") return Scenario::osda;
    if (name == "opda") return Scenario::opda;
    throw std::invalid_argument("parse_scenario: unknown scenario '" + name + "'");
}

// Global class indexing: shared ids first, then source-private, then
// target-private. A label is "known" exactly when it is below
// source_classes().
struct ScenarioSpec {
    Scenario scenario = Scenario::opda;
    std::size_t shared = 10;
    std::size_t source_private = 10;
    std::size_t target_private = 11;
    std::size_t d_in = 10;
    std::size_t source_per_class = 60;
    std::size_t target_per_class = 60;
    double rotation_deg = 25.0;      // target-domain rotation of class means
    double translation_scale = 0.5;  // target offset, in units of mean norm
    double noise_scale = 1.0;        // within-class std, both domains
    double noise_delta = 1.0;        // added to the target within-class std
    std::uint64_t seed = 0;

    std::size_t source_classes() const { return shared + source_private; }
    std::size_t total_classes() const { return shared + source_private + target_private; }

    void validate() const {
        if (shared < 1) throw std::invalid_argument("scenario: need at least one shared class");
        if (d_in < 2) throw std::invalid_argument("scenario: input dim must be at least 2");
        if (source_per_class < 1 || target_per_class < 1)
            throw std::invalid_argument("scenario: samples per class must be positive");
        if (!(noise_scale > 0.0)) throw std::invalid_argument("scenario: noise scale must be positive");
        if (!(noise_scale + noise_delta > 0.0))
            throw std::invalid_argument("scenario: target noise std must stay positive");
        if (!(translation_scale >= 0.0))
            throw std::invalid_argument("scenario: translation scale must be nonnegative");
        if (!std::isfinite(rotation_deg))
            throw std::invalid_argument("scenario: rotation must be finite");
        switch (scenario) {
            case Scenario::clda:
                if (source_private != 0 || target_private != 0)
                    throw std::invalid_argument("scenario: clda forbids private classes");
                break;
            case Scenario::pda:
                if (source_private == 0 || target_private != 0)
                    throw std::invalid_argument(
                        "scenario: pda needs source-private classes and forbids target-private ones");
                break;
            case Scenario::osda:
                if (source_private != 0 || target_private == 0)
                    throw std::invalid_argument(
                        "scenario: osda needs target-private classes and forbids source-private ones");
                break;
            case Scenario::opda:
                if (source_private == 0 || target_private == 0)
                    throw std::invalid_argument("scenario: opda needs private classes on both sides");
                break;
        }
    }
};

struct LabeledDataset {
    Matrix x;
    std::vector<long long> y;
    std::vector<ClassRole> roles;  // by global class id; empty after load_csv

    bool operator==(const LabeledDataset&) const = default;
};

struct GeneratedScenario {
    LabeledDataset source;
    LabeledDataset target;
};

namespace detail {

inline std::vector<double> gaussian_vector(RngState& rng, std::size_t d) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.next_gaussian();
    return v;
}

inline std::vector<double> unit_vector(RngState& rng, std::size_t d) {
    for (;;) {
        std::vector<double> v = gaussian_vector(rng, d);
        const double norm = l2_norm(v);
        if (norm > 1e-12) {
            for (double& x : v) x /= norm;
            return v;
        }
    }
}

// Class means on a common sphere with pairwise separation of at least
// 8 * noise std. Candidates are rejection-sampled; if a mean cannot be
// placed, the radius grows by half and placement restarts on the same
// stream, so the result is still a pure function of the seed.
inline Matrix place_class_means(std::size_t n_classes, std::size_t d, double noise_std,
                                RngState& rng) {
    const double min_dist = 8.0 * noise_std;
    double radius = 10.0 * noise_std;
    for (;;) {
        Matrix means(n_classes, d);
        std::size_t placed = 0;
        bool stuck = false;
        while (placed < n_classes && !stuck) {
            bool accepted = false;
            for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
                const std::vector<double> u = unit_vector(rng, d);
                accepted = true;
                for (std::size_t p = 0; p < placed && accepted; ++p) {
                    double sq = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double diff = radius * u[j] - means(p, j);
                        sq += diff * diff;
                    }
                    accepted = sq >= min_dist * min_dist;
                }
                if (accepted)
                    for (std::size_t j = 0; j < d; ++j) means(placed, j) = radius * u[j];
            }
            if (accepted) ++placed;
            else stuck = true;
        }
        if (placed == n_classes) return means;
        radius *= 1.5;
    }
}

// Rotation by a fixed angle in floor(d/2) disjoint planes of a random
// orthonormal basis: R = Q B Q^T with B block-diagonal Givens blocks.
struct Rotation {
    Matrix basis;  // Q, d x d, rows orthonormal
    double cos_t = 1.0;
    double sin_t = 0.0;

    std::vector<double> apply(std::span<const double> v) const {
        const std::size_t d = basis.rows;
        std::vector<double> coords(d);
        for (std::size_t r = 0; r < d; ++r) coords[r] = dot(basis.row(r), v);
        for (std::size_t p = 0; p + 1 < d; p += 2) {
            const double a = coords[p], b = coords[p + 1];
            coords[p] = cos_t * a - sin_t * b;
            coords[p + 1] = sin_t * a + cos_t * b;
        }
        std::vector<double> out(d, 0.0);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t j = 0; j < d; ++j) out[j] += coords[r] * basis(r, j);
        return out;
    }
};

inline Rotation make_rotation(std::size_t d, double angle_deg, RngState& rng) {
    Rotation rot;
    rot.basis = Matrix(d, d);
    const double rad = angle_deg * std::numbers::pi / 180.0;
    rot.cos_t = std::cos(rad);
    rot.sin_t = std::sin(rad);
    for (std::size_t r = 0; r < d; ++r) {
        for (;;) {
            std::vector<double> v = gaussian_vector(rng, d);
            for (std::size_t p = 0; p < r; ++p) {
                const double proj = dot(rot.basis.row(p), v);
                for (std::size_t j = 0; j < d; ++j) v[j] -= proj * rot.basis(p, j);
            }
            const double norm = l2_norm(v);
            if (norm > 1e-8) {
                for (std::size_t j = 0; j < d; ++j) rot.basis(r, j) = v[j] / norm;
                break;
            }
        }
    }
    return rot;
}

}  // namespace detail

// Draw order is fixed (means, rotation basis, translation direction, source
// samples, target samples, each from its own derived stream), so a seed
// fully determines both datasets. Zero rotation and zero translation skip
// their transforms entirely, leaving the class-conditional distributions of
// the two domains identical when noise_delta is also zero.
inline GeneratedScenario generate_scenario(const ScenarioSpec& spec) {
    spec.validate();
    const std::size_t d = spec.d_in;
    const std::size_t total = spec.total_classes();
    const std::size_t c_s = spec.source_classes();
    RngState root(spec.seed);

    RngState means_rng = root.derive(1);
    const Matrix means = detail::place_class_means(total, d, spec.noise_scale, means_rng);

    const bool rotate = spec.rotation_deg != 0.0;
    detail::Rotation rot;
    if (rotate) {
        RngState rot_rng = root.derive(2);
        rot = detail::make_rotation(d, spec.rotation_deg, rot_rng);
    }

    std::vector<double> translation(d, 0.0);
    if (spec.translation_scale > 0.0) {
        RngState trans_rng = root.derive(3);
        const std::vector<double> u = detail::unit_vector(trans_rng, d);
        double mean_norm = 0.0;
        for (std::size_t c = 0; c < total; ++c) mean_norm += l2_norm(means.row(c));
        mean_norm /= static_cast<double>(total);
        for (std::size_t j = 0; j < d; ++j) translation[j] = spec.translation_scale * mean_norm * u[j];
    }

    std::vector<ClassRole> roles(total);
    for (std::size_t c = 0; c < total; ++c)
        roles[c] = c < spec.shared ? ClassRole::shared
                 : c < c_s        ? ClassRole::source_private
                                  : ClassRole::target_private;

    GeneratedScenario out;
    out.source.roles = roles;
    out.target.roles = roles;

    RngState src_rng = root.derive(4);
    out.source.x = Matrix(c_s * spec.source_per_class, d);
    out.source.y.reserve(out.source.x.rows);
    std::size_t row = 0;
    for (std::size_t c = 0; c < c_s; ++c)
        for (std::size_t s = 0; s < spec.source_per_class; ++s, ++row) {
            for (std::size_t j = 0; j < d; ++j)
                out.source.x(row, j) = means(c, j) + spec.noise_scale * src_rng.next_gaussian();
            out.source.y.push_back(static_cast<long long>(c));
        }

    RngState tgt_rng = root.derive(5);
    const std::size_t n_target_classes = spec.shared + spec.target_private;
    const double tgt_std = spec.noise_scale + spec.noise_delta;
    out.target.x = Matrix(n_target_classes * spec.target_per_class, d);
    out.target.y.reserve(out.target.x.rows);
    row = 0;
    for (std::size_t tc = 0; tc < n_target_classes; ++tc) {
        const std::size_t c = tc < spec.shared ? tc : c_s + (tc - spec.shared);
        std::vector<double> center(means.row(c).begin(), means.row(c).end());
        if (rotate) center = rot.apply(center);
        for (std::size_t j = 0; j < d; ++j) center[j] += translation[j];
        for (std::size_t s = 0; s < spec.target_per_class; ++s, ++row) {
            for (std::size_t j = 0; j < d; ++j)
                out.target.x(row, j) = center[j] + tgt_std * tgt_rng.next_gaussian();
            out.target.y.push_back(static_cast<long long>(c));
        }
    }
    return out;
}

// CSV layout: header "f0,...,f{d-1},label", one sample per row, features
// printed with %.17g so values survive a round trip bit for bit. The class
// role map is not part of the file; it travels with the scenario spec.
inline void save_csv(const LabeledDataset& ds, const std::string& path) {
    if (ds.y.size() != ds.x.rows) throw std::invalid_argument("save_csv: label count mismatch");
    std::ofstream out(path);
    if (!out) throw DataError("save_csv: cannot open for writing: " + path);
    for (std::size_t j = 0; j < ds.x.cols; ++j) out << 'f' << j << ',';
    out << "label\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.x.rows; ++i) {
        for (std::size_t j = 0; j < ds.x.cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.x(i, j));
            out << buf << ',';
        }
        out << ds.y[i] << '\n';
    }
    if (!out) throw DataError("save_csv: write failed: " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string::size_type start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

}  // namespace detail

inline LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open: " + path);
    auto fail = [&path](std::size_t line_no, const std::string& what) {
        throw DataError(path + ":" + std::to_string(line_no) + ": " + what);
    };

    std::string line;
    if (!std::getline(in, line)) fail(1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = detail::split_csv_line(line);
    if (header.size() < 2 || header.back() != "label") fail(1, "header must end with 'label'");
    const std::size_t d = header.size() - 1;
    for (std::size_t j = 0; j < d; ++j)
        if (header[j] != "f" + std::to_string(j)) fail(1, "unexpected column name '" + header[j] + "'");

    std::vector<double> values;
    std::vector<long long> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) fail(line_no, "empty row");
        const std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() != d + 1)
            fail(line_no, "expected " + std::to_string(d + 1) + " columns, got " +
                              std::to_string(fields.size()));
        for (std::size_t j = 0; j < d; ++j) {
            const char* s = fields[j].c_str();
            char* end = nullptr;
            const double v = std::strtod(s, &end);
            if (end == s || *end != '\0') fail(line_no, "non-numeric value '" + fields[j] + "'");
            if (!std::isfinite(v)) fail(line_no, "non-finite value '" + fields[j] + "'");
            values.push_back(v);
        }
        const char* s = fields[d].c_str();
        char* end = nullptr;
        const long long y = std::strtoll(s, &end, 10);
        if (end == s || *end != '\0' || y < 0) fail(line_no, "bad label '" + fields[d] + "'");
        labels.push_back(y);
    }

    LabeledDataset ds;
    ds.x = Matrix(labels.size(), d);
    ds.x.data = std::move(values);
    ds.y = std::move(labels);
    return ds;
}

}  // namespace glc
