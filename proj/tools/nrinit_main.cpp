// nrinit command-line front end.
//
// Exit codes: 0 success, 1 non-convergence or numerical failure, 2 bad input.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nrinit/basin.hpp"
#include "nrinit/case_io.hpp"
#include "nrinit/error.hpp"
#include "nrinit/io_util.hpp"
#include "nrinit/neural_init.hpp"
#include "nrinit/nr.hpp"
#include "nrinit/rl.hpp"

namespace fs = std::filesystem;
using namespace nrinit;

namespace {

constexpr const char* kVersion = "nrinit 1.0";

struct Globals {
    std::uint64_t seed = 1;
    std::string out_dir = ".";
};

// Collects outputs and inputs of one run, then writes them plus a manifest.
class Run {
  public:
    Run(const Globals& g, CLI::App* sub) : g_(g), sub_(sub) {}

    void input(const std::string& path) { inputs_[path] = hex(fnv1a64(read_file(path))); }

    void output(const std::string& name, const std::string& content) {
        write_file_atomic(fs::path(g_.out_dir) / name, content);
        outputs_[name] = hex(fnv1a64(content));
    }

    void finish() {
        nlohmann::ordered_json m;
        m["tool"] = kVersion;
        m["command"] = sub_->get_name();
        m["seed"] = g_.seed;
        nlohmann::ordered_json opts = nlohmann::ordered_json::object();
        for (const CLI::Option* o : sub_->get_options()) {
            if (o->get_lnames().empty() || o->get_lnames()[0] == "help") continue;
            const auto res = o->count() ? o->results() : std::vector<std::string>{o->get_default_str()};
            std::string joined;
            for (std::size_t i = 0; i < res.size(); ++i) joined += (i ? " " : "") + res[i];
            opts[o->get_lnames()[0]] = joined;
        }
        m["options"] = opts;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        write_file_atomic(fs::path(g_.out_dir) / ("manifest_" + sub_->get_name() + ".json"), m.dump(2) + "\n");
    }

  private:
    static std::string hex(std::uint64_t h) {
        std::ostringstream s;
        s << std::hex << std::setw(16) << std::setfill('0') << h;
        return s.str();
    }

    const Globals& g_;
    CLI::App* sub_;
    std::map<std::string, std::string> inputs_, outputs_;
};

NrConfig nr_config(double tol, int max_it) {
    NrConfig c;
    c.tolerance = tol;
    c.max_iterations = max_it;
    c.validate();
    return c;
}

// ---------------------------------------------------------------- solve

struct SolveOpts {
    std::string case_file, init = "flat", init_file;
    double tolerance = 1e-8;
    int max_iterations = 50;
};

StateVector read_init_file(const std::string& path, const GridCase& c) {
    // CSV `bus,v,theta_deg`, one row per PQ bus, 1-based bus numbers.
    StateVector x = c.flat_start();
    std::vector<char> seen(static_cast<std::size_t>(c.n_pq()), 0);
    std::istringstream in(read_file(path));
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty() || (row == 1 && line.rfind("bus", 0) == 0)) continue;
        const auto cells = split_char(line, ',');
        long bus = 0;
        double v = 0, th = 0;
        if (cells.size() != 3 || !parse_int(cells[0], bus) || !parse_num(cells[1], v) || !parse_num(cells[2], th)) {
            throw InputError(path + " line " + std::to_string(row) + ": expected bus,v,theta_deg");
        }
        const auto& pq = c.pq_buses();
        const auto it = std::find(pq.begin(), pq.end(), static_cast<int>(bus - 1));
        if (it == pq.end()) throw InputError(path + " line " + std::to_string(row) + ": bus is not a PQ bus");
        const auto k = it - pq.begin();
        x.v[k] = v;
        x.theta[k] = deg_to_rad(th);
        seen[static_cast<std::size_t>(k)] = 1;
    }
    if (std::count(seen.begin(), seen.end(), 0) != 0) throw InputError(path + ": every PQ bus needs a row");
    return x;
}

int cmd_solve(const SolveOpts& o, const Globals& g, CLI::App* sub) {
    Run run(g, sub);
    run.input(o.case_file);
    const GridCase c = load_case(o.case_file);
    const NrConfig cfg = nr_config(o.tolerance, o.max_iterations);

    StateVector x0;
    std::ostringstream note;
    if (o.init == "flat") {
        x0 = c.flat_start();
    } else if (o.init == "zero") {
        x0 = StateVector::uniform(c.n_pq(), 0.0, 0.0);
    } else if (o.init == "file") {
        if (o.init_file.empty()) throw InputError("--init file needs --init-file");
        run.input(o.init_file);
        x0 = read_init_file(o.init_file, c);
    } else {
        const auto est = estimate_basin(c, CenterChoice::nominal());
        if (!est.valid) throw NumericError("basin estimate is not valid for this case; no warm start available");
        Rng rng(g.seed);
        x0 = sample_in_basin(est, c, rng);
        const auto flat = nr_solve(c, c.flat_start(), cfg);
        note << "flat_start_iterations: " << (flat.converged ? std::to_string(flat.iterations) : "failed") << '\n';
    }

    const auto res = nr_solve(c, x0, cfg);
    std::ostringstream rep;
    rep << "init: " << o.init << '\n'
        << "converged: " << (res.converged ? "yes" : "no") << '\n'
        << "iterations: " << res.iterations << '\n'
        << "failure: " << to_string(res.failure_kind) << '\n'
        << "class: " << to_string(classify(res, cfg)) << '\n'
        << note.str() << "initial:\n";
    auto table = [&](const StateVector& x) {
        rep << "  bus,v,theta_deg\n";
        for (int k = 0; k < c.n_pq(); ++k) {
            rep << "  " << c.pq_buses()[k] + 1 << ',' << fmt_num(x.v[k]) << ',' << fmt_num(rad_to_deg(x.theta[k]))
                << '\n';
        }
    };
    table(x0);
    if (res.converged) {
        rep << "solution:\n";
        table(res.solution);
    }
    rep << "residual_history:\n";
    for (std::size_t i = 0; i < res.residual_norms.size(); ++i) rep << "  " << i << ',' << fmt_num(res.residual_norms[i]) << '\n';
    std::cout << rep.str();
    run.output("solve.txt", rep.str());
    run.finish();
    return res.converged ? 0 : 1;
}

// ---------------------------------------------------------------- map

struct MapOpts {
    std::string case_file;
    double v_min = 0.5, v_max = 1.5, theta_min = -90, theta_max = 90;
    int resolution = 100;
    double tolerance = 1e-8;
    int max_iterations = 50;
};

int cmd_map(const MapOpts& o, const Globals& g, CLI::App* sub) {
    Run run(g, sub);
    run.input(o.case_file);
    const GridCase c = load_case(o.case_file);
    const auto m = convergence_map(c, {o.v_min, o.v_max}, {deg_to_rad(o.theta_min), deg_to_rad(o.theta_max)},
                                   o.resolution, nr_config(o.tolerance, o.max_iterations));
    const auto fast = std::count_if(m.cells.begin(), m.cells.end(), [](const MapCell& x) { return x.iterations <= 3; });
    const auto conv = std::count_if(m.cells.begin(), m.cells.end(), [](const MapCell& x) { return x.converged; });
    std::cout << "cells: " << m.cells.size() << "\nconverged: " << conv << "\niterations<=3: " << fast << '\n';
    run.output("map.csv", m.to_csv());
    run.finish();
    return 0;
}

// ---------------------------------------------------------------- basin

struct BasinOpts {
    std::string case_file, center = "nominal", radius = "rmin";
    int samples = 500;
    double radius_scale = 1.0;
};

int cmd_basin(const BasinOpts& o, const Globals& g, CLI::App* sub) {
    Run run(g, sub);
    run.input(o.case_file);
    const GridCase c = load_case(o.case_file);
    const NrConfig cfg;
    CenterChoice center = CenterChoice::nominal();
    if (o.center == "slack") {
        center = CenterChoice::slack();
    } else if (o.center == "previous") {
        const auto res = nr_solve(c, c.flat_start(), cfg);
        if (!res.converged) {
            std::cerr << "error: flat start did not converge; no previous solution to center on\n";
            return 1;
        }
        center = CenterChoice::previous_solution(res.solution);
    }
    const auto est = estimate_basin(c, center);
    std::ostringstream rep;
    rep << "center: " << o.center << '\n' << format_basin_report(est);
    int rc = 0;
    if (est.valid) {
        Rng rng(g.seed);
        const auto rad = o.radius == "rmax" ? RadiusChoice::r_max : RadiusChoice::r_min;
        const auto cr = verify_contraction(c, est, o.samples, cfg, rng, rad, o.radius_scale);
        auto opt = [](const std::optional<double>& v) { return v ? fmt_num(*v) : std::string("undefined"); };
        rep << "verification:\n"
            << "  radius: " << o.radius << " x " << fmt_num(o.radius_scale) << '\n'
            << "  samples: " << cr.n_samples << '\n'
            << "  converged: " << cr.n_converged << '\n'
            << "  fraction_converged: " << opt(cr.fraction_converged) << '\n'
            << "  fraction_ill_conditioned: " << opt(cr.fraction_ill_conditioned) << '\n'
            << "  mean_iterations: " << opt(cr.mean_iterations) << '\n'
            << "  unique_fixed_point: " << (cr.unique_fixed_point ? "yes" : "no") << '\n'
            << "  max_pairwise_distance: " << fmt_num(cr.max_pairwise_distance) << '\n';
        run.output("basin_bands.csv", basin_bands_csv(est, c));
    } else {
        rep << "verification: skipped (estimate not valid)\n";
        rc = 1;
    }
    std::cout << rep.str();
    run.output("basin_report.txt", rep.str());
    run.finish();
    return rc;
}

// ---------------------------------------------------------------- gen-data

struct GenOpts {
    DatasetConfig dc;
    std::vector<double> r_range{0.01, 0.05}, x_range{0.05, 0.15}, p_range{0.1, 1.0}, q_range{0.0, 0.5};
    std::string output = "dataset.csv";
};

int cmd_gen_data(GenOpts o, const Globals& g, CLI::App* sub) {
    Run run(g, sub);
    auto& r = o.dc.ranges;
    std::tie(r.r_lo, r.r_hi) = std::pair{o.r_range[0], o.r_range[1]};
    std::tie(r.x_lo, r.x_hi) = std::pair{o.x_range[0], o.x_range[1]};
    std::tie(r.p_lo, r.p_hi) = std::pair{o.p_range[0], o.p_range[1]};
    std::tie(r.q_lo, r.q_hi) = std::pair{o.q_range[0], o.q_range[1]};
    if (o.dc.test_fraction < 0 || o.dc.test_fraction > 1) throw InputError("--test-fraction must be in [0, 1]");
    Rng rng(g.seed);
    const Dataset ds = generate_dataset(o.dc, rng);
    const auto failed = std::count_if(ds.records.begin(), ds.records.end(), [](const Record& x) { return x.labeling_failed; });
    std::cout << "records: " << ds.records.size() << "\ntest: " << ds.select(Split::test).size()
              << "\nlabeling_failed: " << failed << '\n';
    run.output(o.output, format_dataset_csv(ds));
    run.finish();
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
    std::string data, scheme = "supervised", name;
    TrainConfig tc;
};

int cmd_train(TrainOpts o, const Globals& g, CLI::App* sub) {
    Run run(g, sub);
    run.input(o.data);
    const Dataset ds = parse_dataset_csv(read_file(o.data));
    o.tc.scheme = scheme_from_string(o.scheme);
    o.tc.seed = g.seed;
    const std::string name = o.name.empty() ? o.scheme : o.name;
    const auto res = train(ds, o.tc);
    const auto& last = res.log.back();
    std::cout << "scheme: " << o.scheme << "\nepochs: " << o.tc.epochs << "\nfinal_objective: " << fmt_num(last.objective)
              << "\nfinal_physics: " << fmt_num(last.physics) << '\n';
    run.output("model_" + name + ".txt", format_mlp(res.model));
    run.output("train_log_" + name + ".csv", format_train_log_csv(res.log));
    run.finish();
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
    std::string data;
    std::vector<std::string> models, labels;
    bool zero_baseline = false;
    double tolerance = 1e-8;
    int max_iterations = 50;
};

int cmd_eval(const EvalOpts& o, const Globals& g, CLI::App* sub) {
    Run run(g, sub);
    run.input(o.data);
    if (!o.labels.empty() && o.labels.size() != o.models.size()) throw InputError("--label count must match --model count");
    if (o.models.empty() && !o.zero_baseline) throw InputError("nothing to evaluate: give --model and/or --zero-baseline");
    const Dataset ds = parse_dataset_csv(read_file(o.data));
    const NrConfig cfg = nr_config(o.tolerance, o.max_iterations);
    std::vector<std::pair<std::string, EvalMetrics>> cols;
    for (std::size_t i = 0; i < o.models.size(); ++i) {
        run.input(o.models[i]);
        const Mlp model = parse_mlp(read_file(o.models[i]));
        const std::string label = o.labels.empty() ? fs::path(o.models[i]).stem().string() : o.labels[i];
        cols.emplace_back(label, evaluate(model, ds, cfg));
    }
    if (o.zero_baseline) cols.emplace_back("zero-init", evaluate_zero_init(ds, cfg));
    const std::string report = format_metrics_report(cols);
    std::cout << report;
    run.output("metrics.txt", report);
    for (const auto& [label, m] : cols) run.output("per_sample_" + label + ".csv", format_per_sample_csv(m));
    run.finish();
    return 0;
}

// ---------------------------------------------------------------- rl

struct RlTrainOpts {
    std::string case_file;
    PPOConfig pc;
};

EnvConfig env_for(const std::string& case_file, Run& run) {
    EnvConfig env;
    if (!case_file.empty()) {
        run.input(case_file);
        env.grid = load_case(case_file);
    }
    env.validate();
    return env;
}

int cmd_rl_train(RlTrainOpts o, const Globals& g, CLI::App* sub) {
    Run run(g, sub);
    const EnvConfig env = env_for(o.case_file, run);
    o.pc.seed = g.seed;
    const auto res = train_ppo(env, o.pc);
    const auto& first = res.log.front();
    const auto& last = res.log.back();
    std::cout << "updates: " << res.log.size() << "\ntimesteps: " << last.timesteps
              << "\nmean_ep_len: " << fmt_num(first.mean_ep_len) << " -> " << fmt_num(last.mean_ep_len)
              << "\nmean_return: " << fmt_num(first.mean_return) << " -> " << fmt_num(last.mean_return) << '\n';
    run.output("policy.txt", format_policy(res.policy));
    run.output("rl_train_log.csv", format_ppo_log_csv(res.log));
    run.finish();
    return 0;
}

struct RlEvalOpts {
    std::string case_file, policy;
    int grid = 20;
    std::vector<double> traces;  // flattened (v0, θ0_deg) pairs
};

int cmd_rl_eval(const RlEvalOpts& o, const Globals& g, CLI::App* sub) {
    Run run(g, sub);
    const EnvConfig env = env_for(o.case_file, run);
    run.input(o.policy);
    const RLPolicy pol = parse_policy(read_file(o.policy));
    if (o.traces.size() % 2 != 0) throw InputError("--trace takes V0 and theta0_deg pairs");
    const auto m = eval_policy(pol, env, half_open_grid(kRlVMin, kRlVMax, o.grid),
                               half_open_grid(kRlThetaMin, kRlThetaMax, o.grid));
    run.output("rl_map.csv", m.to_csv());

    std::vector<std::pair<double, double>> starts;
    for (std::size_t i = 0; i + 1 < o.traces.size(); i += 2) starts.emplace_back(o.traces[i], o.traces[i + 1]);
    if (starts.empty()) {
        // Hardest start (largest k0) the policy still brings into the target region.
        int best = -1;
        for (std::size_t i = 0; i < m.steps.size(); ++i) {
            if (m.steps[i] > env.horizon) continue;
            if (best < 0 || m.k0[i] > m.k0[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
        }
        if (best >= 0) {
            const auto nt = m.theta_axis_deg.size();
            starts.emplace_back(m.v_axis[static_cast<std::size_t>(best) / nt], m.theta_axis_deg[static_cast<std::size_t>(best) % nt]);
        }
    }
    std::cout << "grid: " << o.grid << 'x' << o.grid << "\nreached_within_horizon: " << fmt_num(m.fraction_reached(env.horizon))
              << '\n';
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const auto tr = rollout_trace(pol, env, starts[i].first, starts[i].second);
        const std::string name = starts.size() == 1 ? "rl_trace.csv" : "rl_trace_" + std::to_string(i + 1) + ".csv";
        run.output(name, format_trace_csv(tr));
        std::cout << "trace " << name << ": v0=" << fmt_num(tr.front().v) << " theta0_deg=" << fmt_num(tr.front().theta_deg)
                  << " k0=" << tr.front().k << " steps=" << tr.back().t << " k_final=" << tr.back().k << '\n';
    }
    run.finish();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Newton-Raphson power-flow initialization toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file with option values; [section] per subcommand");
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();

    std::function<int()> action;

    SolveOpts so;
    auto* solve = app.add_subcommand("solve", "Solve a case with Newton-Raphson");
    solve->add_option("--case", so.case_file, "Case file")->required()->check(CLI::ExistingFile);
    solve->add_option("--init", so.init, "Initial state")->check(CLI::IsMember({"flat", "zero", "file", "basin"}))->capture_default_str();
    solve->add_option("--init-file", so.init_file, "CSV bus,v,theta_deg for --init file")->check(CLI::ExistingFile);
    solve->add_option("--tolerance", so.tolerance, "Mismatch tolerance (inf-norm)")->capture_default_str();
    solve->add_option("--max-iter", so.max_iterations, "Iteration cap")->capture_default_str();
    solve->callback([&] { action = [&] { return cmd_solve(so, g, solve); }; });

    MapOpts mo;
    auto* map = app.add_subcommand("map", "Iteration-count map over uniform initial states");
    map->add_option("--case", mo.case_file, "Case file")->required()->check(CLI::ExistingFile);
    map->add_option("--v-min", mo.v_min)->capture_default_str();
    map->add_option("--v-max", mo.v_max)->capture_default_str();
    map->add_option("--theta-min", mo.theta_min, "Degrees")->capture_default_str();
    map->add_option("--theta-max", mo.theta_max, "Degrees")->capture_default_str();
    map->add_option("--resolution", mo.resolution, "Points per axis")->capture_default_str();
    map->add_option("--tolerance", mo.tolerance)->capture_default_str();
    map->add_option("--max-iter", mo.max_iterations)->capture_default_str();
    map->callback([&] { action = [&] { return cmd_map(mo, g, map); }; });

    BasinOpts bo;
    auto* basin = app.add_subcommand("basin", "Basin-of-attraction estimate and Monte-Carlo check");
    basin->add_option("--case", bo.case_file, "Case file")->required()->check(CLI::ExistingFile);
    basin->add_option("--center", bo.center)->check(CLI::IsMember({"nominal", "slack", "previous"}))->capture_default_str();
    basin->add_option("--samples", bo.samples, "Warm starts to verify")->check(CLI::NonNegativeNumber)->capture_default_str();
    basin->add_option("--radius", bo.radius)->check(CLI::IsMember({"rmin", "rmax"}))->capture_default_str();
    basin->add_option("--radius-scale", bo.radius_scale)->check(CLI::PositiveNumber)->capture_default_str();
    basin->callback([&] { action = [&] { return cmd_basin(bo, g, basin); }; });

    GenOpts go;
    auto* gen = app.add_subcommand("gen-data", "Generate a labeled two-bus dataset");
    gen->add_option("--systems", go.dc.n_systems)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--states", go.dc.n_states_per_system)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--test-fraction", go.dc.test_fraction, "Fraction of systems held out")->capture_default_str();
    gen->add_option("--retries", go.dc.label_retries)->check(CLI::NonNegativeNumber)->capture_default_str();
    gen->add_option("--r-range", go.r_range, "Line resistance lo hi")->expected(2)->capture_default_str();
    gen->add_option("--x-range", go.x_range, "Line reactance lo hi")->expected(2)->capture_default_str();
    gen->add_option("--p-range", go.p_range, "Active load lo hi")->expected(2)->capture_default_str();
    gen->add_option("--q-range", go.q_range, "Reactive load lo hi")->expected(2)->capture_default_str();
    gen->add_option("--output", go.output, "File name inside --out-dir")->capture_default_str();
    gen->callback([&] { action = [&] { return cmd_gen_data(go, g, gen); }; });

    TrainOpts to;
    auto* tr = app.add_subcommand("train", "Train a neural initializer");
    tr->add_option("--data", to.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    tr->add_option("--scheme", to.scheme)->check(CLI::IsMember({"supervised", "unsupervised", "semisupervised"}))->capture_default_str();
    tr->add_option("--name", to.name, "Output suffix (default: scheme)");
    tr->add_option("--epochs", to.tc.epochs)->capture_default_str();
    tr->add_option("--lr", to.tc.learning_rate)->capture_default_str();
    tr->add_option("--batch-size", to.tc.batch_size)->capture_default_str();
    tr->add_option("--mix", to.tc.semisupervised_mix, "Weight on the MSE term (semisupervised)")->capture_default_str();
    tr->add_option("--lr-decay", to.tc.linear_decay, "Linear learning-rate decay to zero")->capture_default_str();
    tr->add_option("--hidden", to.tc.hidden, "Hidden layer widths")->capture_default_str();
    tr->callback([&] { action = [&] { return cmd_train(to, g, tr); }; });

    EvalOpts eo;
    auto* ev = app.add_subcommand("eval", "NR iterations from model predictions on the test split");
    ev->add_option("--data", eo.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    ev->add_option("--model", eo.models, "Model file (repeatable)")->check(CLI::ExistingFile);
    ev->add_option("--label", eo.labels, "Column label per model (repeatable)");
    ev->add_flag("--zero-baseline", eo.zero_baseline, "Add the V=0, theta=0 baseline column");
    ev->add_option("--tolerance", eo.tolerance)->capture_default_str();
    ev->add_option("--max-iter", eo.max_iterations)->capture_default_str();
    ev->callback([&] { action = [&] { return cmd_eval(eo, g, ev); }; });

    RlTrainOpts ro;
    auto* rlt = app.add_subcommand("rl-train", "Train the initial-guess adjustment agent");
    rlt->add_option("--case", ro.case_file, "Two-bus case (default: built-in g=100, b=10, load 0.9+j0.6)")->check(CLI::ExistingFile);
    rlt->add_option("--timesteps", ro.pc.total_timesteps)->capture_default_str();
    rlt->add_option("--lr", ro.pc.learning_rate)->capture_default_str();
    rlt->add_option("--gamma", ro.pc.discount)->capture_default_str();
    rlt->add_option("--rollout-steps", ro.pc.rollout_steps)->capture_default_str();
    rlt->add_option("--batch-size", ro.pc.batch_size)->capture_default_str();
    rlt->add_option("--epochs", ro.pc.epochs_per_update)->capture_default_str();
    rlt->add_option("--clip-range", ro.pc.clip_range)->capture_default_str();
    rlt->add_option("--entropy-coef", ro.pc.entropy_coef)->capture_default_str();
    rlt->add_option("--gae-lambda", ro.pc.gae_lambda)->capture_default_str();
    rlt->add_option("--value-coef", ro.pc.value_coef)->capture_default_str();
    rlt->add_option("--max-grad-norm", ro.pc.max_grad_norm)->capture_default_str();
    rlt->add_option("--reward-scale", ro.pc.reward_scale)->capture_default_str();
    rlt->add_option("--init-log-std", ro.pc.init_log_std)->capture_default_str();
    rlt->add_option("--hidden", ro.pc.hidden)->capture_default_str();
    rlt->callback([&] { action = [&] { return cmd_rl_train(ro, g, rlt); }; });

    RlEvalOpts reo;
    auto* rle = app.add_subcommand("rl-eval", "Steps-to-target map and traces for a trained agent");
    rle->add_option("--policy", reo.policy, "Policy file")->required()->check(CLI::ExistingFile);
    rle->add_option("--case", reo.case_file, "Two-bus case (default: built-in)")->check(CLI::ExistingFile);
    rle->add_option("--grid", reo.grid, "Points per axis")->check(CLI::PositiveNumber)->capture_default_str();
    rle->add_option("--trace", reo.traces, "Start V0 theta0_deg for a trace (repeatable)")->expected(2)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    rle->callback([&] { action = [&] { return cmd_rl_eval(reo, g, rle); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        return action();
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    }
}
