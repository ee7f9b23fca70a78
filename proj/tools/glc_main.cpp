#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "glc/glc.hpp"

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

// Shared layout for eval and sweep rows. c_t_hat is 0 on rows written by
// commands that never estimate it (eval); eta and rho are nan there.
constexpr const char* kMetricsHeader =
    "command,scenario,variant,eta,rho,omega,c_t_hat,h_score,acc_known,acc_unknown,"
    "overall_accuracy,primary_metric";

// Append-safe: creates the file with a header, refuses to append to a file
// whose first line is not the expected header, so restarted sweeps cannot
// silently interleave foreign columns.
void append_metrics_row(const std::string& path, const std::string& row) {
    ensure_parent_dir(path);
    bool need_header = true;
    {
        std::ifstream in(path);
        std::string first;
        if (in && std::getline(in, first)) {
            if (!first.empty() && first.back() == '\r') first.pop_back();
            if (first != kMetricsHeader)
                throw glc::DataError("metrics file has an unexpected header: " + path);
            need_header = false;
        }
    }
    std::ofstream out(path, std::ios::app);
    if (!out) throw glc::DataError("cannot open metrics file for append: " + path);
    if (need_header) out << kMetricsHeader << '\n';
    out << row << '\n';
    if (!out) throw glc::DataError("metrics write failed: " + path);
}

double primary_metric(glc::Scenario sc, const glc::EvalSummary& s) {
    return sc == glc::Scenario::osda || sc == glc::Scenario::opda ? s.h : s.overall;
}

std::string metrics_row(const std::string& command, const std::string& scenario,
                        const std::string& variant, double eta, double rho, double omega,
                        std::size_t c_t_hat, const glc::EvalSummary& s, double primary) {
    std::string row;
    row += command;
    row += ',';
    row += scenario;
    row += ',';
    row += variant;
    for (double v : {eta, rho, omega}) {
        row += ',';
        row += fmt17(v);
    }
    row += ',';
    row += std::to_string(c_t_hat);
    for (double v : {s.h, s.acc_known, s.acc_unknown, s.overall, primary}) {
        row += ',';
        row += fmt17(v);
    }
    return row;
}

glc::EvalSummary evaluate_model(const glc::ModelParams& params, const glc::LabeledDataset& data,
                                double omega, bool class_averaged) {
    const glc::Forward fwd = glc::forward(params, data.x);
    const auto outcome = glc::classify_with_rejection(fwd.probs, omega);
    return glc::summarize_outcome(outcome.predicted, data.y, params.dims.n_classes,
                                  class_averaged);
}

void print_summary(const glc::EvalSummary& s, double primary) {
    std::printf("n_known = %zu\n", s.n_known);
    std::printf("n_unknown = %zu\n", s.n_unknown);
    std::printf("h_score = %.6g\n", s.h);
    std::printf("acc_known = %.6g\n", s.acc_known);
    std::printf("acc_unknown = %.6g\n", s.acc_unknown);
    std::printf("overall_accuracy = %.6g\n", s.overall);
    std::printf("primary_metric = %.6g\n", primary);
}

struct GenerateArgs {
    std::string scenario = "opda";
    glc::ScenarioSpec spec;
    std::string out;
};

void cmd_generate(const GenerateArgs& a) {
    glc::ScenarioSpec spec = a.spec;
    spec.scenario = glc::parse_scenario(a.scenario);
    const auto gen = glc::generate_scenario(spec);

    fs::create_directories(a.out);
    const fs::path dir(a.out);
    glc::save_csv(gen.source, (dir / "source.csv").string());
    glc::save_csv(gen.target, (dir / "target.csv").string());

    // resolved spec; the keys match this subcommand's flags, so the file can
    // be fed back through --config
    std::ofstream txt(dir / "scenario.txt");
    if (!txt) throw glc::DataError("cannot write scenario file in " + a.out);
    txt << "scenario = " << glc::scenario_name(spec.scenario) << '\n'
        << "shared = " << spec.shared << '\n'
        << "src-private = " << spec.source_private << '\n'
        << "tgt-private = " << spec.target_private << '\n'
        << "dim = " << spec.d_in << '\n'
        << "src-per-class = " << spec.source_per_class << '\n'
        << "tgt-per-class = " << spec.target_per_class << '\n'
        << "rotation = " << fmt17(spec.rotation_deg) << '\n'
        << "translation = " << fmt17(spec.translation_scale) << '\n'
        << "noise = " << fmt17(spec.noise_scale) << '\n'
        << "noise-delta = " << fmt17(spec.noise_delta) << '\n'
        << "seed = " << spec.seed << '\n';
    if (!txt) throw glc::DataError("scenario file write failed in " + a.out);

    std::printf("source: %zu samples, %zu classes\n", gen.source.x.rows, spec.source_classes());
    std::printf("target: %zu samples, %zu classes\n", gen.target.x.rows,
                spec.shared + spec.target_private);
}

struct TrainArgs {
    std::string data;
    std::string out;
    glc::SourceTrainConfig cfg;
};

void cmd_train_source(const TrainArgs& a) {
    const glc::LabeledDataset data = glc::load_csv(a.data);
    const glc::ModelParams params = glc::train_source(data, a.cfg);
    ensure_parent_dir(a.out);
    glc::save_checkpoint(params, a.out);

    const glc::Forward fwd = glc::forward(params, data.x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.x.rows; ++i)
        hits += static_cast<long long>(glc::argmax_index(fwd.probs.row(i))) == data.y[i];
    std::printf("classes = %zu\n", params.dims.n_classes);
    std::printf("train_accuracy = %.6g\n",
                static_cast<double>(hits) / static_cast<double>(data.x.rows));
}

struct AdaptArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string history;
    std::string variant = "full";
    std::string metric = "cosine";
    std::string pseudo_debug_dir;
    glc::AdaptConfig cfg;
};

void cmd_adapt(const AdaptArgs& a) {
    const glc::ModelParams source = glc::load_checkpoint(a.model);
    const glc::LabeledDataset data = glc::load_csv(a.data);

    glc::AdaptConfig cfg = a.cfg;
    cfg.variant = glc::parse_variant(a.variant);
    cfg.silhouette_metric =
        a.metric == "euclidean" ? glc::Metric::euclidean : glc::Metric::cosine;

    glc::PseudoObserver observer;
    if (!a.pseudo_debug_dir.empty()) {
        fs::create_directories(a.pseudo_debug_dir);
        const fs::path dir(a.pseudo_debug_dir);
        observer = [dir](std::size_t epoch, const glc::PseudoLabelResult& pseudo) {
            const fs::path path = dir / ("pseudo_epoch_" + std::to_string(epoch) + ".csv");
            std::ofstream out(path);
            if (!out) throw glc::DataError("cannot write pseudo debug file: " + path.string());
            out << "index,assigned,score\n";
            for (std::size_t i = 0; i < pseudo.assigned.size(); ++i)
                out << i << ',' << pseudo.assigned[i] << ',' << fmt17(pseudo.best_score[i])
                    << '\n';
        };
    }

    // labels ride along for the per-epoch history metrics only
    const glc::AdaptResult res = glc::adapt(source, data.x, cfg, &data.y, observer);
    ensure_parent_dir(a.out);
    glc::save_checkpoint(res.params, a.out);
    ensure_parent_dir(a.history);
    glc::write_history_csv(res.history, a.history);

    std::printf("c_t_hat = %zu\n", res.c_t_hat);
    if (!res.history.empty()) {
        const auto& last = res.history.back();
        std::printf("final loss_tar = %.6g\n", last.loss_tar);
        std::printf("final h_score = %.6g\n", last.h_score);
    }
}

struct EvalArgs {
    std::string model;
    std::string data;
    std::string scenario;
    std::string metrics;
    double omega = 0.55;
    bool class_averaged = false;
};

void cmd_eval(const EvalArgs& a) {
    const glc::Scenario sc = glc::parse_scenario(a.scenario);
    const glc::ModelParams params = glc::load_checkpoint(a.model);
    const glc::LabeledDataset data = glc::load_csv(a.data);

    const glc::EvalSummary s = evaluate_model(params, data, a.omega, a.class_averaged);
    const double primary = primary_metric(sc, s);
    print_summary(s, primary);

    if (!a.metrics.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        append_metrics_row(a.metrics,
                           metrics_row("eval", a.scenario, "-", nan, nan, a.omega, 0, s, primary));
    }
}

struct SweepArgs {
    std::string model;
    std::string data;
    std::string scenario;
    std::string metrics;
    std::string variant = "full";
    std::string metric = "cosine";
    bool class_averaged = false;
    glc::AdaptConfig cfg;
};

// Grid mirrors the sensitivity study: the loss weight, the suppression
// floor (1.0 = no suppression), and the rejection threshold. One adapted
// model serves all omega values; every row is flushed before the next cell
// so an interrupted sweep keeps its finished cells.
void cmd_sweep(const SweepArgs& a) {
    const glc::Scenario sc = glc::parse_scenario(a.scenario);
    const glc::ModelParams source = glc::load_checkpoint(a.model);
    const glc::LabeledDataset data = glc::load_csv(a.data);

    const std::vector<double> etas{0.1, 0.2, 0.3, 0.4, 0.5};
    const std::vector<double> rhos{0.5, 2.0 / 3.0, 0.75, 0.8, 1.0};
    const std::vector<double> omegas{0.35, 0.45, 0.55, 0.65, 0.75};

    for (double eta : etas) {
        for (double rho : rhos) {
            glc::AdaptConfig cfg = a.cfg;
            cfg.eta = eta;
            cfg.rho = rho;
            cfg.variant = glc::parse_variant(a.variant);
            cfg.silhouette_metric =
                a.metric == "euclidean" ? glc::Metric::euclidean : glc::Metric::cosine;
            const glc::AdaptResult res = glc::adapt(source, data.x, cfg);

            const glc::Forward fwd = glc::forward(res.params, data.x);
            for (double omega : omegas) {
                const auto outcome = glc::classify_with_rejection(fwd.probs, omega);
                const glc::EvalSummary s = glc::summarize_outcome(
                    outcome.predicted, data.y, res.params.dims.n_classes, a.class_averaged);
                const double primary = primary_metric(sc, s);
                append_metrics_row(a.metrics,
                                   metrics_row("sweep", a.scenario, a.variant, eta, rho, omega,
                                               res.c_t_hat, s, primary));
                std::printf("eta=%.3g rho=%.3g omega=%.3g primary=%.6g\n", eta, rho, omega,
                            primary);
            }
        }
    }
}

// CLI11 only reads config files on the app that owns parse(), but every
// subcommand here takes its own flat file, so the merge happens on argv
// instead: each entry is appended as a trailing flag unless the command
// line already set that key, so explicit flags always win.

std::string trimmed(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct ConfigEntry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

std::vector<ConfigEntry> read_flat_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw glc::DataError("config: cannot open: " + path);
    std::vector<ConfigEntry> entries;
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trimmed(line);
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw glc::DataError(where + "expected key = value");
        ConfigEntry e{trimmed(line.substr(0, eq)), trimmed(line.substr(eq + 1)), no};
        if (e.key.empty()) throw glc::DataError(where + "missing key");
        if (e.value.empty()) throw glc::DataError(where + "missing value for '" + e.key + "'");
        entries.push_back(std::move(e));
    }
    return entries;
}

bool config_flag_value(const std::string& value, const std::string& where) {
    std::string v;
    for (char c : value) v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw glc::DataError(where + "expected a boolean, got '" + value + "'");
}

std::vector<std::string> merge_config_args(CLI::App& app, std::vector<std::string> args) {
    CLI::App* sub = nullptr;
    std::size_t sub_pos = 0;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i].rfind('-', 0) == 0) continue;
        for (CLI::App* cand : app.get_subcommands([](CLI::App*) { return true; }))
            if (cand->get_name() == args[i]) {
                sub = cand;
                sub_pos = i;
            }
        break;  // only the first non-flag token can name the subcommand
    }
    if (!sub) return args;

    std::string path;
    std::vector<std::string> out(args.begin(), args.begin() + sub_pos + 1);
    for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
        const std::string& arg = args[i];
        std::string got;
        if (arg == "--config") {
            if (i + 1 >= args.size()) throw std::invalid_argument("--config needs a file path");
            got = args[++i];
        } else if (arg.rfind("--config=", 0) == 0) {
            got = arg.substr(std::string("--config=").size());
        } else {
            out.push_back(arg);
            continue;
        }
        if (!path.empty()) throw std::invalid_argument("--config given more than once");
        if (got.empty()) throw std::invalid_argument("--config needs a file path");
        path = got;
    }
    if (path.empty()) return out;

    std::set<std::string> given;
    for (std::size_t i = sub_pos + 1; i < out.size(); ++i) {
        if (out[i].rfind("--", 0) != 0) continue;
        const std::string name = out[i].substr(2);
        given.insert(name.substr(0, name.find('=')));
    }

    std::map<std::string, const CLI::Option*> by_key;
    for (const CLI::Option* opt : sub->get_options())
        for (const std::string& lname : opt->get_lnames())
            if (lname != "config" && lname != "help") by_key[lname] = opt;

    std::set<std::string> seen;
    for (const ConfigEntry& e : read_flat_config(path)) {
        const std::string where = path + ":" + std::to_string(e.line) + ": ";
        const auto it = by_key.find(e.key);
        if (it == by_key.end())
            throw glc::DataError(where + "unknown key '" + e.key + "' for " + sub->get_name());
        if (!seen.insert(e.key).second)
            throw glc::DataError(where + "duplicate key '" + e.key + "'");
        if (given.count(e.key)) continue;
        if (it->second->get_expected_min() == 0) {
            if (config_flag_value(e.value, where)) out.push_back("--" + e.key);
        } else {
            out.push_back("--" + e.key);
            out.push_back(e.value);
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Source-free universal domain adaptation on synthetic shifted clusters"};
    app.name("glc");
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* g = app.add_subcommand("generate", "Generate a shifted source/target dataset pair");
    g->option_defaults()->always_capture_default();
    g->add_option("--config", "Flat key = value file with # comments; explicit flags win");
    g->add_option("--scenario", gen.scenario, "Category-shift family")
        ->check(CLI::IsMember({"clda", "pda", "osda", "opda"}));
    g->add_option("--shared", gen.spec.shared, "Classes present in both domains");
    g->add_option("--src-private", gen.spec.source_private, "Source-only classes");
    g->add_option("--tgt-private", gen.spec.target_private, "Target-only classes");
    g->add_option("--dim", gen.spec.d_in, "Input dimension");
    g->add_option("--src-per-class", gen.spec.source_per_class, "Source samples per class");
    g->add_option("--tgt-per-class", gen.spec.target_per_class, "Target samples per class");
    g->add_option("--rotation", gen.spec.rotation_deg, "Target rotation angle, degrees");
    g->add_option("--translation", gen.spec.translation_scale,
                  "Target offset, in units of mean class radius");
    g->add_option("--noise", gen.spec.noise_scale, "Within-class standard deviation");
    g->add_option("--noise-delta", gen.spec.noise_delta, "Extra target noise");
    g->add_option("--seed", gen.spec.seed, "Generator seed");
    g->add_option("--out", gen.out, "Output directory for source.csv, target.csv, scenario.txt")
        ->required();
    g->callback([&gen] { cmd_generate(gen); });

    TrainArgs tr;
    CLI::App* t = app.add_subcommand("train-source", "Train the source model on a labeled CSV");
    t->option_defaults()->always_capture_default();
    t->add_option("--config", "Flat key = value file with # comments; explicit flags win");
    t->add_option("--data", tr.data, "Labeled source CSV")->required();
    t->add_option("--out", tr.out, "Checkpoint path to write")->required();
    t->add_option("--hidden", tr.cfg.d_hidden, "Hidden layer width");
    t->add_option("--feat", tr.cfg.d_feat, "Feature dimension");
    t->add_option("--epochs", tr.cfg.epochs, "Training epochs");
    t->add_option("--batch-size", tr.cfg.batch_size, "Mini-batch size");
    t->add_option("--lr", tr.cfg.lr, "Learning rate");
    t->add_option("--momentum", tr.cfg.momentum, "SGD momentum");
    t->add_option("--alpha", tr.cfg.alpha, "Label smoothing weight");
    t->add_option("--seed", tr.cfg.seed, "Training seed");
    t->callback([&tr] { cmd_train_source(tr); });

    AdaptArgs ad;
    CLI::App* d = app.add_subcommand("adapt", "Adapt a source checkpoint to an unlabeled target");
    d->option_defaults()->always_capture_default();
    d->add_option("--config", "Flat key = value file with # comments; explicit flags win");
    d->add_option("--model", ad.model, "Source checkpoint")->required();
    d->add_option("--data", ad.data, "Target CSV (labels are used for history metrics only)")
        ->required();
    d->add_option("--out", ad.out, "Adapted checkpoint path")->required();
    d->add_option("--history", ad.history, "Per-epoch history CSV path")->required();
    d->add_option("--eta", ad.cfg.eta, "Weight of the global pseudo-label loss");
    d->add_option("--rho", ad.cfg.rho, "Suppression floor (1.0 disables suppression)");
    d->add_option("--omega", ad.cfg.omega, "Rejection threshold for history metrics");
    d->add_option("--knn-k", ad.cfg.knn_k, "Neighbors per sample for the local consensus");
    d->add_option("--epochs", ad.cfg.epochs, "Adaptation epochs");
    d->add_option("--batch-size", ad.cfg.batch_size, "Mini-batch size");
    d->add_option("--lr", ad.cfg.lr, "Learning rate");
    d->add_option("--momentum", ad.cfg.momentum, "SGD momentum");
    d->add_option("--pseudo-refresh", ad.cfg.pseudo_refresh,
                  "Recompute pseudo-labels every n epochs");
    d->add_option("--seed", ad.cfg.seed, "Adaptation seed");
    d->add_option("--silhouette-metric", ad.metric, "Distance for the class-count estimate")
        ->check(CLI::IsMember({"cosine", "euclidean"}));
    d->add_option("--variant", ad.variant, "Loss arms to train with")
        ->check(CLI::IsMember({"full", "no_global", "no_local"}));
    d->add_option("--pseudo-debug-dir", ad.pseudo_debug_dir,
                  "Directory for per-epoch pseudo-label dumps");
    d->callback([&ad] { cmd_adapt(ad); });

    EvalArgs ev;
    CLI::App* e = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled CSV");
    e->option_defaults()->always_capture_default();
    e->add_option("--config", "Flat key = value file with # comments; explicit flags win");
    e->add_option("--model", ev.model, "Checkpoint to evaluate")->required();
    e->add_option("--data", ev.data, "Labeled CSV")->required();
    e->add_option("--scenario", ev.scenario, "Decides the primary metric (h vs accuracy)")
        ->required()
        ->check(CLI::IsMember({"clda", "pda", "osda", "opda"}));
    e->add_option("--omega", ev.omega, "Rejection threshold");
    e->add_flag("--class-averaged", ev.class_averaged,
                "Average known accuracy per class instead of per sample");
    e->add_option("--metrics", ev.metrics, "Metrics CSV to append to");
    e->callback([&ev] { cmd_eval(ev); });

    SweepArgs sw;
    CLI::App* s = app.add_subcommand("sweep", "Grid over eta, rho, and omega");
    s->option_defaults()->always_capture_default();
    s->add_option("--config", "Flat key = value file with # comments; explicit flags win");
    s->add_option("--model", sw.model, "Source checkpoint")->required();
    s->add_option("--data", sw.data, "Target CSV")->required();
    s->add_option("--scenario", sw.scenario, "Decides the primary metric (h vs accuracy)")
        ->required()
        ->check(CLI::IsMember({"clda", "pda", "osda", "opda"}));
    s->add_option("--metrics", sw.metrics, "Metrics CSV, one row per grid cell")->required();
    s->add_option("--knn-k", sw.cfg.knn_k, "Neighbors per sample for the local consensus");
    s->add_option("--epochs", sw.cfg.epochs, "Adaptation epochs per cell");
    s->add_option("--batch-size", sw.cfg.batch_size, "Mini-batch size");
    s->add_option("--lr", sw.cfg.lr, "Learning rate");
    s->add_option("--momentum", sw.cfg.momentum, "SGD momentum");
    s->add_option("--pseudo-refresh", sw.cfg.pseudo_refresh,
                  "Recompute pseudo-labels every n epochs");
    s->add_option("--seed", sw.cfg.seed, "Adaptation seed, shared by every cell");
    s->add_option("--silhouette-metric", sw.metric, "Distance for the class-count estimate")
        ->check(CLI::IsMember({"cosine", "euclidean"}));
    s->add_option("--variant", sw.variant, "Loss arms to train with")
        ->check(CLI::IsMember({"full", "no_global", "no_local"}));
    s->add_flag("--class-averaged", sw.class_averaged,
                "Average known accuracy per class instead of per sample");
    s->callback([&sw] { cmd_sweep(sw); });

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = merge_config_args(app, std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    } catch (const glc::DataError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
    } catch (const glc::NumericError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 4;
    } catch (const std::invalid_argument& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
    return 0;
}
