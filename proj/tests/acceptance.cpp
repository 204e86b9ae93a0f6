// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nrinit/basin.hpp"
#include "nrinit/case_io.hpp"
#include "nrinit/io_util.hpp"
#include "nrinit/neural_init.hpp"
#include "nrinit/nr.hpp"
#include "nrinit/rl.hpp"

namespace fs = std::filesystem;
using namespace nrinit;

namespace {

std::string fixture(const std::string& name) { return std::string(NRINIT_DATA_DIR) + "/cases/" + name; }

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------- 1

Outcome jacobian_check() {
    const std::vector<GridCase> cases{load_case(fixture("two_bus.case")), load_case(fixture("three_bus.case")),
                                      load_case(fixture("seven_bus.case"))};
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const GridCase& c = cases[static_cast<std::size_t>(trial % 3)];
        const int m = c.n_pq();
        StateVector x{Eigen::VectorXd(m), Eigen::VectorXd(m)};
        for (int k = 0; k < m; ++k) {
            x.v[k] = rng.uniform(0.8, 1.2);
            x.theta[k] = rng.uniform(-0.5, 0.5);
        }
        const Eigen::MatrixXd j = jacobian(c, x);
        const double h = 1e-6;
        for (int col = 0; col < 2 * m; ++col) {
            StateVector up = x, dn = x;
            double& pu = col < m ? up.theta[col] : up.v[col - m];
            double& pd = col < m ? dn.theta[col] : dn.v[col - m];
            pu += h;
            pd -= h;
            const Eigen::VectorXd fd = (power_residual(c, up) - power_residual(c, dn)) / (2 * h);
            for (int row = 0; row < 2 * m; ++row) {
                worst = std::max(worst, std::abs(j(row, col) - fd[row]) / std::max(1.0, std::abs(fd[row])));
            }
        }
    }
    return {worst <= 1e-5, "max relative error " + sci(worst) + " over 50 (case, state) pairs"};
}

// ---------------------------------------------------------------- 2

Outcome quadratic_tail() {
    Rng rng(202);
    int runs = 0, attempts = 0;
    double worst_ratio = 0.0, lo_slope = 1e9, hi_slope = -1e9;
    while (runs < 20 && attempts < 2000) {
        ++attempts;
        const GridCase c = build_two_bus(rng.uniform(0.01, 0.1), rng.uniform(0.05, 0.3), rng.uniform(0.2, 1.5),
                                         rng.uniform(0.0, 0.8));
        const auto res = nr_solve(c, c.flat_start());
        if (!res.converged || res.iterations < 3) continue;
        ++runs;
        const auto& r = res.residual_norms;
        const std::size_t k = r.size() - 1;
        worst_ratio = std::max(worst_ratio, r[k] / r[k - 1]);
        const double slope = (std::log(r[k]) - std::log(r[k - 1])) / (std::log(r[k - 1]) - std::log(r[k - 2]));
        lo_slope = std::min(lo_slope, slope);
        hi_slope = std::max(hi_slope, slope);
    }
    const bool ok = runs == 20 && worst_ratio < 0.5 && lo_slope >= 1.5 && hi_slope <= 2.5;
    return {ok, std::to_string(runs) + " runs, max last-step ratio " + sci(worst_ratio) + ", slopes in [" +
                    sci(lo_slope) + ", " + sci(hi_slope) + "]"};
}

// ---------------------------------------------------------------- 3

Outcome map_structure() {
    const GridCase c = load_case(fixture("two_bus.case"));
    const int n = 100;
    const auto m = convergence_map(c, {0.5, 1.5}, {deg_to_rad(-90.0), deg_to_rad(90.0)}, n, NrConfig{});
    // Reference cell: nearest grid point to the reference solution.
    auto nearest = [](const std::vector<double>& axis, double x) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < axis.size(); ++i) {
            if (std::abs(axis[i] - x) < std::abs(axis[best] - x)) best = i;
        }
        return best;
    };
    const std::size_t rv = nearest(m.v_axis, m.reference.v[0]);
    const std::size_t rt = nearest(m.theta_axis, m.reference.theta[0]);
    // Fast region of the reference root. Cells that reach the other
    // (low-voltage) root within 3 iterations belong to that root's basin and
    // are counted separately.
    std::vector<char> fast(m.cells.size()), seen(m.cells.size(), 0);
    long n_fast = 0, n_other_root = 0;
    for (std::size_t i = 0; i < m.cells.size(); ++i) {
        fast[i] = m.cells[i].iterations <= 3 && m.cells[i].matches_reference;
        n_fast += fast[i];
        n_other_root += m.cells[i].iterations <= 3 && !m.cells[i].matches_reference;
    }
    const std::size_t start = rv * n + rt;
    long reached = 0;
    if (fast[start]) {
        std::vector<std::size_t> stack{start};
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            ++reached;
            const long iv = static_cast<long>(cur) / n, it = static_cast<long>(cur) % n;
            const long nb[4][2] = {{iv - 1, it}, {iv + 1, it}, {iv, it - 1}, {iv, it + 1}};
            for (const auto& p : nb) {
                if (p[0] < 0 || p[0] >= n || p[1] < 0 || p[1] >= n) continue;
                const std::size_t idx = static_cast<std::size_t>(p[0] * n + p[1]);
                if (fast[idx] && !seen[idx]) {
                    seen[idx] = 1;
                    stack.push_back(idx);
                }
            }
        }
    }
    const bool ok = n_fast > 0 && fast[start] && reached == n_fast;
    return {ok, std::to_string(n_fast) + " cells reach the reference root in <= 3 iterations, " +
                    std::to_string(reached) + " of them 4-connected to the reference cell (" +
                    std::to_string(m.cells[start].iterations) + " iterations there); " + std::to_string(n_other_root) +
                    " further cells reach the low-voltage root in <= 3 iterations"};
}

// ---------------------------------------------------------------- 4, 7

const Dataset& pinn_dataset() {
    static const Dataset ds = [] {
        Rng rng(42);
        return generate_dataset(DatasetConfig{}, rng);
    }();
    return ds;
}

Outcome zero_init() {
    const Dataset& ds = pinn_dataset();
    std::vector<const Record*> recs;
    for (const auto* r : ds.select(Split::test)) if (r->label) recs.push_back(r);
    int converged = 0, singular = 0, capped = 0, other = 0;
    for (const auto* r : recs) {
        const GridCase c = case_from_features(r->features, ds.n_buses);
        const auto res = nr_solve(c, StateVector::uniform(1, 0.0, 0.0));
        if (res.converged) ++converged;
        else if (res.failure_kind == FailureKind::singular_jacobian) ++singular;
        else if (res.failure_kind == FailureKind::max_iterations) ++capped;
        else ++other;
    }
    const bool ok = recs.size() == 100 && converged == 0 && other == 0;
    return {ok, std::to_string(converged) + "/" + std::to_string(recs.size()) + " converged (" + std::to_string(singular) +
                    " singular-jacobian, " + std::to_string(capped) + " max-iterations, " + std::to_string(other) +
                    " other)"};
}

Outcome table3_bands() {
    const Dataset& ds = pinn_dataset();
    TrainConfig tc;
    tc.seed = 7;
    tc.scheme = Scheme::supervised;
    const auto sup = evaluate(train(ds, tc).model, ds, NrConfig{});
    tc.scheme = Scheme::unsupervised;
    const auto uns_model = train(ds, tc);
    const auto uns = evaluate(uns_model.model, ds, NrConfig{});
    const int uns_within_20 =
        static_cast<int>(std::count_if(uns.iterations.begin(), uns.iterations.end(), [](int k) { return k <= 20; }));
    const bool ok = sup.mean_iterations <= 4.0 && sup.mae_v <= 0.15 && uns.n_samples == 100 && uns_within_20 == 100 &&
                    uns.n_converged == 100 && uns.mean_iterations <= 10.0;
    std::ostringstream d;
    d << "supervised: mean iterations " << sci(sup.mean_iterations) << ", MAE_V " << sci(sup.mae_v)
      << "; unsupervised: " << uns_within_20 << "/" << uns.n_samples << " within 20, mean iterations "
      << sci(uns.mean_iterations) << ", MAE_V " << sci(uns.mae_v) << ", final physics loss "
      << sci(uns_model.log.back().physics) << "; soft check supervised MAE_V <= unsupervised MAE_V: "
      << (sup.mae_v <= uns.mae_v ? "holds" : "does not hold (logged only)");
    return {ok, d.str()};
}

// ---------------------------------------------------------------- 5

Outcome cubic_oracle() {
    Rng rng(505);
    double worst = 0.0;
    int count_mismatch = 0;
    for (int i = 0; i < 1000; ++i) {
        const double nu = rng.uniform(0.3, 1.5), a1 = rng.uniform(0.0, 0.6), a2 = rng.uniform(0.0, 0.6);
        const auto est = basin_cubic_roots(nu, a1, a2);
        // Monic coefficients of (r − α₂)(r − ν)² − α₁ r.
        const double b = -(2 * nu + a2), c = nu * nu + 2 * a2 * nu - a1, d = -a2 * nu * nu;
        Eigen::Matrix3d comp;
        comp << 0, 0, -d, 1, 0, -c, 0, 1, -b;
        const Eigen::Vector3cd ev = Eigen::EigenSolver<Eigen::Matrix3d>(comp).eigenvalues();
        std::vector<double> real;
        for (int k = 0; k < 3; ++k) {
            if (std::abs(ev[k].imag()) <= 1e-7) real.push_back(ev[k].real());
        }
        std::sort(real.begin(), real.end());
        if (real.size() != est.roots.size()) {
            ++count_mismatch;
            continue;
        }
        for (std::size_t k = 0; k < real.size(); ++k) worst = std::max(worst, std::abs(real[k] - est.roots[k]));
    }
    const auto triv = basin_cubic_roots(0.9, 0.0, 0.0);
    double triv_err = 1.0;
    if (triv.roots.size() == 3) {
        triv_err = std::max({std::abs(triv.roots[0]), std::abs(triv.roots[1] - 0.9), std::abs(triv.roots[2] - 0.9)});
    }
    const bool ok = count_mismatch == 0 && worst <= 1e-8 && triv_err <= 1e-12;
    return {ok, "max |Cardano - eigenvalue| " + sci(worst) + " on 1000 triples (" + std::to_string(count_mismatch) +
                    " root-count mismatches); alpha=0 case error " + sci(triv_err)};
}

// ---------------------------------------------------------------- 6

Outcome basin_utility() {
    std::ostringstream d;
    bool ok = true;
    for (const char* name : {"two_bus.case", "seven_bus.case"}) {
        const GridCase c = load_case(fixture(name));
        const auto sol = nr_solve(c, c.flat_start());
        if (!sol.converged) return {false, std::string(name) + ": flat start failed"};
        const auto est = estimate_basin(c, CenterChoice::previous_solution(sol.solution));
        if (!est.valid) return {false, std::string(name) + ": basin estimate not valid"};
        Rng rng(606);
        const auto rep = verify_contraction(c, est, 500, NrConfig{}, rng);
        const bool this_ok = rep.fraction_converged && *rep.fraction_converged == 1.0 && rep.unique_fixed_point &&
                             rep.max_pairwise_distance <= 1e-6;
        ok = ok && this_ok;
        d << name << ": r_min " << sci(est.r_min) << ", " << rep.n_converged << "/500 converged, max pairwise distance "
          << sci(rep.max_pairwise_distance) << (std::string(name) == "two_bus.case" ? "; " : "");
    }
    return {ok, d.str()};
}

// ---------------------------------------------------------------- 8

Outcome rl_result() {
    const EnvConfig env;
    PPOConfig pc;
    pc.total_timesteps = 200000;
    pc.seed = 1;
    const auto res = train_ppo(env, pc);
    const auto m = eval_policy(res.policy, env, half_open_grid(kRlVMin, kRlVMax, 20),
                               half_open_grid(kRlThetaMin, kRlThetaMax, 20));
    const double frac = m.fraction_reached(env.horizon);
    int hard_ok = 0, hard_total = 0, best_steps = 99;
    for (std::size_t i = 0; i < m.k0.size(); ++i) {
        if (m.k0[i] < 10) continue;
        ++hard_total;
        if (m.steps[i] <= env.horizon) {
            ++hard_ok;
            best_steps = std::min(best_steps, m.steps[i]);
        }
    }
    // Confirm one such start with an explicit trace.
    bool trace_ok = false;
    for (std::size_t i = 0; i < m.k0.size() && !trace_ok; ++i) {
        if (m.k0[i] >= 10 && m.steps[i] <= env.horizon) {
            const auto tr = rollout_trace(res.policy, env, m.v_axis[i / 20], m.theta_axis_deg[i % 20]);
            trace_ok = tr.front().k >= 10 && tr.back().k <= env.target_k && tr.back().t <= env.horizon;
        }
    }
    const auto w = std::max<std::size_t>(1, res.log.size() / 10);
    double first = 0, last = 0;
    for (std::size_t i = 0; i < w; ++i) {
        first += res.log[i].mean_ep_len / w;
        last += res.log[res.log.size() - 1 - i].mean_ep_len / w;
    }
    std::ostringstream d;
    d << sci(100 * frac) << "% of 20x20 starts reach k <= 3 within 10 steps; " << hard_ok << "/" << hard_total
      << " starts with k0 >= 10 succeed (fastest " << best_steps << " steps); mean episode length " << sci(first)
      << " -> " << sci(last) << " (first/last 10% of updates)";
    return {frac >= 0.7 && trace_ok, d.str()};
}

// ---------------------------------------------------------------- 9

Outcome cli_determinism() {
    const fs::path root = fs::path(NRINIT_WORK_DIR) / "acceptance_determinism";
    fs::remove_all(root);
    const std::string cli = NRINIT_CLI_PATH;
    const std::vector<std::string> commands = {
        "solve --case " + fixture("two_bus.case"),
        "solve --case " + fixture("seven_bus.case") + " --init basin",
        "map --case " + fixture("two_bus.case") + " --resolution 30",
        "basin --case " + fixture("seven_bus.case") + " --center previous --samples 100",
        "gen-data --systems 10 --states 5",
        "train --data dataset.csv --scheme semisupervised --epochs 5 --hidden 16 16",
        "eval --data dataset.csv --model model_semisupervised.txt --zero-baseline",
        "rl-train --timesteps 1024 --rollout-steps 512 --hidden 16",
        "rl-eval --policy policy.txt --grid 6 --trace 1.8 60",
    };
    std::set<std::string> subcommands;
    for (const char* run : {"a", "b"}) {
        const fs::path dir = root / run;
        fs::create_directories(dir);
        for (const auto& c : commands) {
            const std::string line = "cd '" + dir.string() + "' && '" + cli + "' --seed 11 --out-dir . " + c + " > /dev/null 2>&1";
            const int rc = std::system(line.c_str());
            if (rc != 0) return {false, "command failed: " + c};
            subcommands.insert(c.substr(0, c.find(' ')));
        }
    }
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(root / "a")) {
        const fs::path other = root / "b" / entry.path().filename();
        if (!fs::exists(other)) return {false, "missing in rerun: " + entry.path().filename().string()};
        if (fnv1a64(read_file(entry.path())) != fnv1a64(read_file(other))) {
            return {false, "hash differs: " + entry.path().filename().string()};
        }
        ++files;
    }
    const auto n_b = std::distance(fs::directory_iterator(root / "b"), fs::directory_iterator{});
    if (static_cast<std::size_t>(n_b) != files) return {false, "rerun produced a different file set"};
    return {subcommands.size() == 8, std::to_string(files) + " output files identical across two runs of " +
                                         std::to_string(subcommands.size()) + " subcommands"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        std::string name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "Jacobian matches central differences", 10, jacobian_check},
        {2, "NR quadratic tail", 5, quadratic_tail},
        {3, "convergence map: connected fast region at the solution", 60, map_structure},
        {4, "zero initialization fails on all 100 test samples", 60, zero_init},
        {5, "cubic roots match the companion-matrix oracle", 5, cubic_oracle},
        {6, "basin warm starts converge to a unique fixed point", 60, basin_utility},
        {7, "learned initializer iteration / error bands", 900, table3_bands},
        {8, "RL agent reaches the fast region from the start grid", 1800, rl_result},
        {9, "CLI outputs are bit-identical on rerun", 300, cli_determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = o.pass && secs < c.budget_s;
        if (!pass) ++failed;
        std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << " — " << o.detail << " ["
                  << sci(secs) << " s, budget " << c.budget_s << " s]" << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
