// Copyright (c) 2026, The remixlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "remix/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "remix/bandit.hpp"
#include "remix/errors.hpp"
#include "remix/rloo.hpp"
#include "remix/theory.hpp"
#include "remix/trainer.hpp"

namespace remix::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::string out;
    std::string checkpoint;
    std::size_t threads = 0;
    bool bit_exact = false;
};

/// Typed, strict access to one JSON object; every key must be consumed.
class Reader {
public:
    Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) {
            throw ConfigError("config: '" + display("") + "' must be a JSON object");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
        const json* v = lookup(key, fallback.has_value());
        if (!v) {
            return *fallback;
        }
        if (!v->is_number()) {
            throw ConfigError("config: field '" + display(key) + "' must be a number");
        }
        const double d = v->get<double>();
        if (!std::isfinite(d)) {
            throw ConfigError("config: field '" + display(key) + "' must be finite");
        }
        return d;
    }

    std::size_t count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) {
        const json* v = lookup(key, fallback.has_value());
        if (!v) {
            return *fallback;
        }
        if (!v->is_number_unsigned()) {
            throw ConfigError("config: field '" + display(key) + "' must be a non-negative integer");
        }
        return v->get<std::size_t>();
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = lookup(key, true);
        if (!v) {
            return fallback;
        }
        if (!v->is_boolean()) {
            throw ConfigError("config: field '" + display(key) + "' must be true or false");
        }
        return v->get<bool>();
    }

    std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
        const json* v = lookup(key, fallback.has_value());
        if (!v) {
            return *fallback;
        }
        if (!v->is_string()) {
            throw ConfigError("config: field '" + display(key) + "' must be a string");
        }
        return v->get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) {
        const json* v = lookup(key, fallback.has_value());
        if (!v) {
            return *fallback;
        }
        if (!v->is_array() || v->empty()) {
            throw ConfigError("config: field '" + display(key) + "' must be a non-empty array of numbers");
        }
        std::vector<double> out;
        for (const auto& e : *v) {
            if (!e.is_number()) {
                throw ConfigError("config: field '" + display(key) + "' must be a non-empty array of numbers");
            }
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback) {
        const json* v = lookup(key, true);
        if (!v) {
            return fallback;
        }
        if (!v->is_array() || v->empty()) {
            throw ConfigError("config: field '" + display(key) + "' must be a non-empty array of integers");
        }
        std::vector<std::size_t> out;
        for (const auto& e : *v) {
            if (!e.is_number_unsigned()) {
                throw ConfigError("config: field '" + display(key) + "' must be a non-empty array of integers");
            }
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }

    /// Nested object, or an empty one when absent.
    Reader object(const std::string& key) {
        const json* v = lookup(key, true);
        return Reader(v ? *v : empty_object(), display(key));
    }

    /// Throws on any key that no getter asked for.
    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.count(key)) {
                throw ConfigError("config: unknown key '" + display(key) + "'");
            }
        }
    }

private:
    static const json& empty_object() {
        static const json e = json::object();
        return e;
    }

    std::string display(const std::string& key) const {
        if (prefix_.empty()) {
            return key;
        }
        return key.empty() ? prefix_ : prefix_ + "." + key;
    }

    const json* lookup(const std::string& key, bool optional) {
        used_.insert(key);
        if (!j_.contains(key)) {
            if (!optional) {
                throw ConfigError("config: missing required field '" + display(key) + "'");
            }
            return nullptr;
        }
        return &j_.at(key);
    }

    const json& j_;
    std::string prefix_;
    std::set<std::string> used_;
};

json load_config(const std::string& path) {
    if (path.empty()) {
        return json::object();
    }
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot read '" + path + "'");
    }
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/false);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
}

std::uint64_t resolve_seed(Reader& r) {
    if (r.has("seed")) {
        return r.count("seed");
    }
    if (const char* env = std::getenv("REMIX_SEED")) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used == std::string(env).size()) {
                return v;
            }
        } catch (const std::exception&) {
        }
        throw ConfigError("config: REMIX_SEED must be a non-negative integer");
    }
    return 1;
}

fs::path prepare_out(const std::string& dir) {
    if (dir.empty()) {
        throw ConfigError("missing --out directory");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory '" + dir + "'");
    }
    return fs::path(dir);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    out.close();
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
}

void write_json(const fs::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

std::size_t thread_count(const Options& opt) {
    if (opt.threads > 0) {
        return opt.threads;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------- collapse

int cmd_collapse(const Options& opt) {
    json cfg = load_config(opt.config);
    Reader r(cfg, "");
    const double sigma = r.number("sigma");
    const std::size_t n = r.count("n");
    const std::size_t dim = r.count("dim");
    const std::size_t trials = r.count("trials");
    const std::vector<double> deltas = r.numbers("deltas");
    const std::uint64_t seed = resolve_seed(r);
    r.finish();
    if (!(sigma > 0.0) || n < 2 || dim < 1 || trials < 1) {
        throw ConfigError("config: need sigma > 0, n >= 2, dim >= 1, trials >= 1");
    }
    for (double d : deltas) {
        if (!(d > 0.0 && d < 1.0)) {
            throw ConfigError("config: every entry of 'deltas' must lie in (0, 1)");
        }
    }
    const fs::path out = prepare_out(opt.out);

    const EssSamples s = monte_carlo_ess(sigma, n, dim, trials, seed, thread_count(opt));
    std::string csv = "trial,ess\n";
    for (std::size_t t = 0; t < s.samples.size(); ++t) {
        csv += std::to_string(t) + "," + format_double(s.samples[t]) + "\n";
    }
    write_text(out / "ess_samples.csv", csv);

    json rows = json::array();
    for (double delta : deltas) {
        const double bound = ess_upper_bound(BoundInputs{sigma, n, s.x_norm, delta});
        const double exceed = s.fraction_above(bound);
        const double slack = 3.0 * std::sqrt(delta * (1.0 - delta) / static_cast<double>(trials));
        rows.push_back({{"delta", delta},
                        {"bound", bound},
                        {"exceedance", exceed},
                        {"allowed", delta + slack},
                        {"within_allowed", exceed <= delta + slack}});
    }
    write_json(out / "bound_table.json", {{"sigma", sigma},
                                          {"n", n},
                                          {"dim", dim},
                                          {"trials", trials},
                                          {"seed", seed},
                                          {"x_norm", s.x_norm},
                                          {"median_ess", s.median()},
                                          {"rows", std::move(rows)}});
    return kExitOk;
}

// ------------------------------------------------------------------ verify

int cmd_verify(const Options& opt) {
    json cfg = load_config(opt.config);
    Reader r(cfg, "");
    const std::uint64_t seed = resolve_seed(r);
    const std::size_t topk_trials = r.count("topk_trials", 10000);
    const std::size_t swap_trials = r.count("swap_trials", 10000);
    const double tol = r.number("quadrature_tol", 1e-12);
    const std::string sabotage = r.string("sabotage", "");
    r.finish();
    std::optional<LemmaId> sabotaged;
    if (!sabotage.empty()) {
        try {
            sabotaged = parse_lemma_id(sabotage);
        } catch (const DomainError&) {
            throw ConfigError("config: field 'sabotage' must name a lemma L0..L6");
        }
    }
    if (!(tol > 0.0)) {
        throw ConfigError("config: field 'quadrature_tol' must be positive");
    }
    const fs::path out = prepare_out(opt.out);

    json records = json::array();
    bool all_pass = true;
    for (LemmaId id : kAllLemmas) {
        LemmaGrid grid = default_lemma_grid(id);
        grid.quadrature_tol = tol;
        grid.sabotage = sabotaged == id;
        const LemmaReport rep = verify_lemma(id, grid);
        all_pass = all_pass && rep.pass;
        records.push_back({{"name", rep.id},
                           {"kind", "lemma"},
                           {"grid", rep.grid},
                           {"points", rep.points},
                           {"worst_margin", rep.worst_margin},
                           {"violations", nullptr},
                           {"pass", rep.pass}});
    }

    std::size_t topk_total = 0;
    std::size_t topk_decisive = 0;
    std::size_t topk_violations = 0;
    std::size_t swap_total = 0;
    std::size_t swap_violations = 0;
    double worst_gain = std::numeric_limits<double>::infinity();
    for (std::size_t n = 3; n <= 6; ++n) {
        for (std::size_t k = 1; k <= 3; ++k) {
            const TopkReport t = check_topk_optimality(n, k, topk_trials, seed);
            topk_total += t.trials;
            topk_decisive += t.decisive;
            topk_violations += t.violations;
            if (k >= n) {
                continue;  // no swap partner outside a full selection
            }
            const SwapReport s = check_swap_lemma(n, k, swap_trials, seed);
            swap_total += s.trials;
            swap_violations += s.violations;
            worst_gain = std::min(worst_gain, s.worst_gain);
        }
    }
    const bool topk_pass = topk_violations == 0;
    const bool swap_pass = swap_violations == 0;
    all_pass = all_pass && topk_pass && swap_pass;
    records.push_back({{"name", "topk"},
                       {"kind", "theorem"},
                       {"grid", "n=3..6, k=1..3, " + std::to_string(topk_trials) + " trials per cell"},
                       {"points", topk_total},
                       {"decisive", topk_decisive},
                       {"worst_margin", nullptr},
                       {"violations", topk_violations},
                       {"pass", topk_pass}});
    records.push_back({{"name", "swap"},
                       {"kind", "lemma"},
                       {"grid", "n=3..6, k=1..min(3, n-1), " + std::to_string(swap_trials) + " trials per cell"},
                       {"points", swap_total},
                       {"worst_margin", worst_gain},
                       {"violations", swap_violations},
                       {"pass", swap_pass}});
    write_json(out / "verification_report.json",
               {{"seed", seed}, {"all_pass", all_pass}, {"records", std::move(records)}});
    return all_pass ? kExitOk : kExitVerificationFailed;
}

// -------------------------------------------------------------- rloo-check

json unbiasedness_cell(std::size_t n, std::size_t k, std::size_t layers, std::size_t rollouts, std::uint64_t seed,
                       std::size_t cell, double gate) {
    const std::size_t dim = 3;
    RngStream rng(seed, "rloo-cell", cell);
    std::vector<RouterLayer> routers;
    for (std::size_t l = 0; l < layers; ++l) {
        RouterLayer rl{gaussian_matrix(rng, n, dim, 1.0), Vector(dim)};
        for (double& v : rl.x) {
            v = rng.normal();
        }
        routers.push_back(std::move(rl));
    }
    std::map<Selection, double> table;
    for (const Selection& s : enumerate_selections(n, k, layers)) {
        table[s] = rng.normal();
    }
    const LossTable loss = [&table](const Selection& s) { return table.at(s); };
    const UnbiasednessResult res = unbiasedness_check(loss, routers, k, rollouts);
    return {{"n", n},
            {"k", k},
            {"layers", layers},
            {"rollouts", rollouts},
            {"selections", res.selections},
            {"tuples", res.tuples},
            {"max_deviation", res.max_deviation},
            {"pass", res.max_deviation <= gate}};
}

int cmd_rloo_check(const Options& opt) {
    json cfg = load_config(opt.config);
    Reader r(cfg, "");
    const std::uint64_t seed = resolve_seed(r);
    const double gate = r.number("max_deviation", 1e-10);
    const std::size_t trials = r.count("variance_trials", 10000);
    const std::size_t seeds = r.count("variance_seeds", 5);
    const std::vector<std::size_t> ms = r.counts("variance_rollouts", {2, 4, 16});
    r.finish();
    if (trials < 2 || seeds < 1) {
        throw ConfigError("config: need variance_trials >= 2 and variance_seeds >= 1");
    }
    for (std::size_t m : ms) {
        if (m < 2) {
            throw ConfigError("config: every entry of 'variance_rollouts' must be at least 2");
        }
    }
    const fs::path out = prepare_out(opt.out);

    bool pass = true;
    json cells = json::array();
    std::size_t cell = 0;
    for (std::size_t n : {2, 3}) {
        for (std::size_t k : {1, 2}) {
            for (std::size_t layers : {1, 2}) {
                for (std::size_t m : {2, 3}) {
                    const std::size_t s = selection_space_size(n, k, layers, kMaxSelections);
                    const double tuples = std::pow(static_cast<double>(s), static_cast<double>(m));
                    if (tuples > static_cast<double>(kMaxTuples)) {
                        continue;
                    }
                    json c = unbiasedness_cell(n, k, layers, m, seed, cell++, gate);
                    pass = pass && c.at("pass").get<bool>();
                    cells.push_back(std::move(c));
                }
            }
        }
    }

    json variance = json::array();
    for (std::size_t s = 0; s < seeds; ++s) {
        const std::uint64_t fixture_seed = seed + s;
        const BanditFixture f = make_bandit_fixture(BanditSpec{}, fixture_seed);
        const std::vector<RouterLayer> layers{f.router_layer()};
        json rows = json::array();
        bool ordered = true;
        double previous = std::numeric_limits<double>::infinity();
        for (std::size_t m : ms) {
            const VarianceSummary v =
                estimator_variance(f.loss_table(), layers, f.k, m, trials, fixture_seed, thread_count(opt));
            ordered = ordered && v.total_variance < previous;
            previous = v.total_variance;
            rows.push_back({{"rollouts", m},
                            {"total_variance", v.total_variance},
                            {"variance_frobenius", v.variance_frobenius}});
        }
        pass = pass && ordered;
        variance.push_back({{"seed", fixture_seed}, {"trials", trials}, {"rows", std::move(rows)}, {"ordered", ordered}});
    }
    write_json(out / "rloo_report.json", {{"seed", seed},
                                          {"max_deviation_gate", gate},
                                          {"unbiasedness", std::move(cells)},
                                          {"variance", std::move(variance)},
                                          {"pass", pass}});
    return pass ? kExitOk : kExitVerificationFailed;
}

// ------------------------------------------------------------- train / eval

struct RunSetup {
    TrainConfig train;
    TaskSpec task;
    std::optional<std::size_t> eval_k;
};

RunSetup read_run_config(const Options& opt) {
    json cfg = load_config(opt.config);
    Reader r(cfg, "");
    RunSetup s;
    TrainConfig& c = s.train;
    try {
        c.mode = parse_train_mode(r.string("mode"));
        c.omega_scheme = parse_omega_scheme(r.string("omega_scheme", std::string(to_string(c.omega_scheme))));
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.layers = r.count("layers", c.layers);
    c.n = r.count("n", c.n);
    c.k = r.count("k", c.k);
    c.rank = r.count("rank", c.rank);
    c.omega_alpha = r.number("omega_alpha", c.omega_alpha);
    c.rollouts = r.count("rollouts", c.rollouts);
    c.learning_rate = r.number("learning_rate", c.learning_rate);
    c.router_learning_rate = r.number("router_learning_rate", c.router_learning_rate);
    c.router_sigma = r.number("router_sigma", c.router_sigma);
    c.steps = r.count("steps", c.steps);
    c.batch_size = r.count("batch_size", c.batch_size);
    c.train_adapters = r.boolean("train_adapters", c.train_adapters);
    c.train_head = r.boolean("train_head", c.train_head);
    c.bit_exact = r.boolean("bit_exact", false) || opt.bit_exact;
    c.seed = resolve_seed(r);
    if (r.has("eval_k")) {
        s.eval_k = r.count("eval_k");
    }

    Reader t = r.object("task");
    TaskSpec& ts = s.task;
    ts.dim = t.count("dim", ts.dim);
    ts.clusters = t.count("clusters", ts.clusters);
    ts.separation = t.number("separation", ts.separation);
    ts.correction_rank = t.count("correction_rank", ts.correction_rank);
    ts.correction_scale = t.number("correction_scale", ts.correction_scale);
    ts.noise = t.number("noise", ts.noise);
    ts.train_size = t.count("train_size", ts.train_size);
    ts.eval_size = t.count("eval_size", ts.eval_size);
    t.finish();
    r.finish();
    try {
        c.validate();
        ts.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (s.eval_k && (*s.eval_k < 1 || *s.eval_k > c.n)) {
        throw ConfigError("config: field 'eval_k' must satisfy 1 <= eval_k <= n");
    }
    return s;
}

json histogram_json(const EvalResult& e) {
    json layers = json::array();
    for (const auto& h : e.histograms) {
        json entries = json::array();
        for (const auto& [subset, count] : h) {
            entries.push_back({{"subset", subset},
                               {"count", count},
                               {"frequency", static_cast<double>(count) / static_cast<double>(e.examples)}});
        }
        layers.push_back(std::move(entries));
    }
    return layers;
}

json eval_summary(const Model& model, const RunSetup& s, std::span<const Example> examples) {
    json evals = json::array();
    auto add = [&](std::optional<std::size_t> override) {
        const EvalResult e = evaluate(model, examples, s.train.k, override);
        evals.push_back({{"k", e.k},
                         {"k_override", override.has_value()},
                         {"loss", e.loss},
                         {"histograms", histogram_json(e)}});
    };
    add(std::nullopt);
    if (s.eval_k) {
        add(s.eval_k);
    }
    return {{"mode", std::string(to_string(model.mode))},
            {"trained_k", s.train.k},
            {"examples", examples.size()},
            {"seed", s.train.seed},
            {"eval_loss", evals.front().at("loss")},
            {"evaluations", std::move(evals)}};
}

int cmd_train(const Options& opt) {
    const RunSetup s = read_run_config(opt);
    const fs::path out = prepare_out(opt.out);
    const Task task = gen_cluster_task(s.task, s.train.layers, s.train.seed);
    Model model = init_model(s.train, task);

    std::ofstream csv(out / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!csv) {
        throw IoError("cannot write '" + (out / "metrics.csv").string() + "'");
    }
    csv << metrics_csv_header(s.train.layers) << "\n";
    try {
        train_model(model, s.train, task.train, 0, [&](const MetricsRow& row) {
            csv << metrics_csv_line(row) << "\n";
        });
    } catch (const DivergenceError& e) {
        csv.close();
        std::cerr << "remix: " << e.what() << "\n";
        return kExitDiverged;
    }
    csv.close();
    if (!csv) {
        throw IoError("cannot write '" + (out / "metrics.csv").string() + "'");
    }
    write_json(out / "checkpoint.json", model_to_json(model));
    write_json(out / "eval_summary.json", eval_summary(model, s, task.eval));
    return kExitOk;
}

int cmd_eval(const Options& opt) {
    const RunSetup s = read_run_config(opt);
    if (opt.checkpoint.empty()) {
        throw ConfigError("eval: --checkpoint is required");
    }
    Model model;
    try {
        model = model_from_json(load_config(opt.checkpoint));
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    const TrainConfig& c = s.train;
    const MixtureLayer& first = model.layers.front();
    const bool single = c.mode == TrainMode::single_lora;
    if (model.mode != c.mode || model.depth() != c.layers || model.dim_in() != s.task.dim ||
        model.dim_out() != s.task.dim || first.rank() != c.rank || (!single && (first.n() != c.n || first.k != c.k))) {
        throw ConfigError("eval: checkpoint does not match the config (mode, layers, dim, n, k or rank)");
    }
    const fs::path out = prepare_out(opt.out);
    const Task task = gen_cluster_task(s.task, c.layers, c.seed);
    write_json(out / "eval_summary.json", eval_summary(model, s, task.eval));
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"ReMix mixture-of-LoRAs toolkit"};
    app.require_subcommand(1);
    Options opt;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* c = sub->add_option("--config", opt.config, "JSON config file");
        if (config_required) {
            c->required();
        }
        sub->add_option("--out", opt.out, "Output directory")->required();
        sub->add_option("--threads", opt.threads, "Worker threads (default: hardware concurrency)");
        sub->add_flag("--bit-exact", opt.bit_exact, "Deterministic, byte-comparable artifacts");
        return sub;
    };
    auto* collapse = add_common(app.add_subcommand("collapse", "Monte Carlo ESS at initialization vs the bound"), true);
    auto* verify = add_common(app.add_subcommand("verify", "Check the lemma grids, top-k optimality and swap"), false);
    auto* rloo = add_common(app.add_subcommand("rloo-check", "Exact unbiasedness grid and variance study"), false);
    auto* train_cmd = add_common(app.add_subcommand("train", "Train on the synthetic clustered task"), true);
    auto* eval_cmd = add_common(app.add_subcommand("eval", "Evaluate a checkpoint"), true);
    eval_cmd->add_option("--checkpoint", opt.checkpoint, "Checkpoint written by train")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigError;
    }

    try {
        if (collapse->parsed()) {
            return cmd_collapse(opt);
        }
        if (verify->parsed()) {
            return cmd_verify(opt);
        }
        if (rloo->parsed()) {
            return cmd_rloo_check(opt);
        }
        if (train_cmd->parsed()) {
            return cmd_train(opt);
        }
        return cmd_eval(opt);
    } catch (const ConfigError& e) {
        std::cerr << "remix: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const IoError& e) {
        std::cerr << "remix: " << e.what() << "\n";
        return kExitIoError;
    } catch (const NumericalError& e) {
        std::cerr << "remix: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "remix: " << e.what() << "\n";
        return kExitConfigError;
    }
}

}  // namespace remix::cli
