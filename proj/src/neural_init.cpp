#include "nrinit/neural_init.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "nrinit/basin.hpp"
#include "nrinit/error.hpp"
#include "nrinit/io_util.hpp"

namespace nrinit {

int feature_count(int n_buses) {
    const int m = n_buses - 1;
    return 2 * m + n_buses * (n_buses + 1);
}

Eigen::VectorXd case_features(const GridCase& c) {
    if (c.slack_index() != 0) throw InputError("feature layout assumes the slack is bus 1");
    const int n = c.n_buses();
    const int m = n - 1;
    Eigen::VectorXd f(feature_count(n));
    for (int k = 0; k < m; ++k) {
        f[k] = c.p_injection()[k + 1];
        f[m + k] = c.q_injection()[k + 1];
    }
    int idx = 2 * m;
    for (const auto* mat : {&c.conductance(), &c.susceptance()}) {
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) f[idx++] = (*mat)(i, j);
    }
    return f;
}

GridCase case_from_features(const Eigen::VectorXd& features, int n_buses) {
    if (features.size() != feature_count(n_buses)) {
        throw InputError("feature vector has length " + std::to_string(features.size()) + ", expected " +
                         std::to_string(feature_count(n_buses)));
    }
    const int n = n_buses;
    const int m = n - 1;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n), q = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < m; ++k) {
        p[k + 1] = features[k];
        q[k + 1] = features[m + k];
    }
    Eigen::MatrixXd g(n, n), b(n, n);
    int idx = 2 * m;
    for (auto* mat : {&g, &b}) {
        for (int i = 0; i < n; ++i) {
            for (int j = i; j < n; ++j) {
                (*mat)(i, j) = features[idx];
                (*mat)(j, i) = features[idx];
                ++idx;
            }
        }
    }
    return GridCase(g, b, p, q, 0, ComplexPhasor{1.0, 0.0});
}

std::vector<const Record*> Dataset::select(Split split) const {
    std::vector<const Record*> out;
    for (const auto& r : records) {
        if (r.split == split) out.push_back(&r);
    }
    return out;
}

Dataset generate_dataset(const DatasetConfig& config, Rng& rng) {
    if (config.n_systems < 1 || config.n_states_per_system < 1) {
        throw InputError("dataset needs at least one system and one state");
    }
    const auto& pr = config.ranges;
    if (pr.r_hi < pr.r_lo || pr.x_hi < pr.x_lo || pr.p_hi < pr.p_lo || pr.q_hi < pr.q_lo) {
        throw InputError("parameter ranges must satisfy lo <= hi");
    }

    std::vector<int> order(static_cast<std::size_t>(config.n_systems));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    const int n_test = static_cast<int>(std::lround(config.test_fraction * config.n_systems));
    std::vector<char> is_test(order.size(), 0);
    for (int i = 0; i < n_test; ++i) is_test[order[i]] = 1;

    Dataset ds;
    ds.n_buses = 2;
    for (int s = 0; s < config.n_systems; ++s) {
        const double r = rng.uniform(pr.r_lo, pr.r_hi);
        const double x = rng.uniform(pr.x_lo, pr.x_hi);
        for (int k = 0; k < config.n_states_per_system; ++k) {
            const double p = rng.uniform(pr.p_lo, pr.p_hi);
            const double q = rng.uniform(pr.q_lo, pr.q_hi);
            const GridCase c = build_two_bus(r, x, p, q);
            Record rec;
            rec.features = case_features(c);
            rec.split = is_test[s] ? Split::test : Split::train;

            auto res = nr_solve(c, c.flat_start(), config.nr);
            if (!res.converged) {
                const auto est = estimate_basin(c, CenterChoice::nominal());
                for (int t = 0; t < config.label_retries && est.valid && !res.converged; ++t) {
                    res = nr_solve(c, sample_in_basin(est, c, rng), config.nr);
                }
            }
            if (res.converged) rec.label = res.solution;
            else rec.labeling_failed = true;
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

namespace {

std::vector<std::string> feature_names(int n) {
    std::vector<std::string> names;
    for (int b = 2; b <= n; ++b) names.push_back("P" + std::to_string(b));
    for (int b = 2; b <= n; ++b) names.push_back("Q" + std::to_string(b));
    for (const char* tag : {"G", "B"}) {
        for (int i = 1; i <= n; ++i)
            for (int j = i; j <= n; ++j) names.push_back(std::string(tag) + std::to_string(i) + "_" + std::to_string(j));
    }
    return names;
}

}  // namespace

std::string format_dataset_csv(const Dataset& ds) {
    std::ostringstream out;
    const int n = ds.n_buses;
    const int m = n - 1;
    out << "# nrinit-dataset n_buses=" << n << '\n' << "split,status";
    for (const auto& name : feature_names(n)) out << ',' << name;
    for (int b = 2; b <= n; ++b) out << ",V" << b;
    for (int b = 2; b <= n; ++b) out << ",theta" << b << "_deg";
    out << '\n';
    for (const auto& r : ds.records) {
        out << (r.split == Split::train ? "train" : "test") << ','
            << (r.label ? "labeled" : (r.labeling_failed ? "failed" : "unlabeled"));
        for (Eigen::Index i = 0; i < r.features.size(); ++i) out << ',' << fmt_num(r.features[i]);
        for (int k = 0; k < m; ++k) out << ',' << (r.label ? fmt_num(r.label->v[k]) : "");
        for (int k = 0; k < m; ++k) out << ',' << (r.label ? fmt_num(rad_to_deg(r.label->theta[k])) : "");
        out << '\n';
    }
    return out.str();
}

Dataset parse_dataset_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# nrinit-dataset n_buses=", 0) != 0) {
        throw InputError("dataset file: missing '# nrinit-dataset n_buses=' header");
    }
    long n = 0;
    if (!parse_int(line.substr(std::string("# nrinit-dataset n_buses=").size()), n) || n < 2) {
        throw InputError("dataset file: bad n_buses");
    }
    Dataset ds;
    ds.n_buses = static_cast<int>(n);
    const int m = ds.n_buses - 1;
    const int nf = feature_count(ds.n_buses);
    if (!std::getline(in, line)) throw InputError("dataset file: missing column header");
    const std::size_t n_cols = 2 + static_cast<std::size_t>(nf) + 2 * static_cast<std::size_t>(m);
    if (split_char(line, ',').size() != n_cols) throw InputError("dataset file: column header has wrong width");

    int row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const std::string where = "dataset row " + std::to_string(row);
        auto cells = split_char(line, ',');
        if (cells.size() != n_cols) throw InputError(where + ": expected " + std::to_string(n_cols) + " columns");
        Record rec;
        if (cells[0] == "train") rec.split = Split::train;
        else if (cells[0] == "test") rec.split = Split::test;
        else throw InputError(where + ": field 'split' must be train or test");
        const bool labeled = cells[1] == "labeled";
        if (!labeled && cells[1] != "unlabeled" && cells[1] != "failed")
            throw InputError(where + ": field 'status' must be labeled, unlabeled or failed");
        rec.labeling_failed = cells[1] == "failed";
        rec.features.resize(nf);
        for (int i = 0; i < nf; ++i) {
            if (!parse_num(cells[2 + i], rec.features[i])) throw InputError(where + ": bad feature value");
        }
        if (labeled) {
            StateVector s{Eigen::VectorXd(m), Eigen::VectorXd(m)};
            for (int k = 0; k < m; ++k) {
                double deg = 0.0;
                if (!parse_num(cells[2 + nf + k], s.v[k]) || !parse_num(cells[2 + nf + m + k], deg))
                    throw InputError(where + ": bad label value");
                s.theta[k] = deg_to_rad(deg);
            }
            rec.label = std::move(s);
        }
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::supervised: return "supervised";
        case Scheme::unsupervised: return "unsupervised";
        case Scheme::semisupervised: return "semisupervised";
    }
    return "unknown";
}

Scheme scheme_from_string(const std::string& s) {
    if (s == "supervised") return Scheme::supervised;
    if (s == "unsupervised") return Scheme::unsupervised;
    if (s == "semisupervised") return Scheme::semisupervised;
    throw InputError("unknown scheme '" + s + "' (supervised | unsupervised | semisupervised)");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw InputError("learning_rate must be > 0");
    if (epochs < 0) throw InputError("epochs must be >= 0");
    if (batch_size < 1) throw InputError("batch_size must be >= 1");
    if (semisupervised_mix < 0.0 || semisupervised_mix > 1.0) throw InputError("semisupervised_mix must be in [0, 1]");
}

namespace {

Eigen::MatrixXd stack_features(const std::vector<const Record*>& batch) {
    Eigen::MatrixXd x(batch.front()->features.size(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = batch[i]->features;
    return x;
}

StateVector output_to_state(const Eigen::VectorXd& out) {
    const Eigen::Index m = out.size() / 2;
    return {out.head(m), out.tail(m)};
}

}  // namespace

StateVector predict(const Mlp& model, const Eigen::VectorXd& features) {
    return output_to_state(model.forward_one(features));
}

LossAndGrad mse_loss(const Mlp& model, const std::vector<const Record*>& batch) {
    LossAndGrad out;
    out.grad = Eigen::VectorXd::Zero(model.params().size());
    if (batch.empty()) return out;
    for (const auto* r : batch) {
        if (!r->label) throw InputError("mse_loss: batch contains an unlabeled record");
    }
    const auto tr = model.forward_trace(stack_features(batch));
    const Eigen::Index m = model.output_size() / 2;
    Eigen::MatrixXd diff(tr.output.rows(), tr.output.cols());
    for (Eigen::Index i = 0; i < diff.cols(); ++i) {
        const auto& lab = *batch[static_cast<std::size_t>(i)]->label;
        diff.col(i).head(m) = tr.output.col(i).head(m) - lab.v;
        diff.col(i).tail(m) = tr.output.col(i).tail(m) - lab.theta;
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    out.loss = diff.squaredNorm() * inv_b;
    model.backward(tr, 2.0 * inv_b * diff, out.grad);
    return out;
}

LossAndGrad physics_loss(const Mlp& model, const std::vector<const Record*>& batch,
                         const std::vector<GridCase>& cases) {
    LossAndGrad out;
    out.grad = Eigen::VectorXd::Zero(model.params().size());
    if (batch.empty()) return out;
    if (cases.size() != batch.size()) throw InputError("physics_loss: one case per record required");
    const auto tr = model.forward_trace(stack_features(batch));
    const Eigen::Index m = model.output_size() / 2;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    Eigen::MatrixXd d_out(tr.output.rows(), tr.output.cols());
    for (Eigen::Index i = 0; i < tr.output.cols(); ++i) {
        const auto& c = cases[static_cast<std::size_t>(i)];
        const StateVector x = output_to_state(tr.output.col(i));
        const Eigen::VectorXd f = power_residual(c, x);
        out.loss += f.cwiseAbs().sum() * inv_b;
        const Eigen::VectorXd sign = f.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
        const Eigen::VectorXd g = jacobian(c, x).transpose() * sign;  // [d/dθ; d/dV]
        d_out.col(i).head(m) = g.tail(m) * inv_b;
        d_out.col(i).tail(m) = g.head(m) * inv_b;
    }
    model.backward(tr, d_out, out.grad);
    return out;
}

namespace {

struct Objective {
    Scheme scheme;
    double mix;

    LossAndGrad operator()(const Mlp& model, const std::vector<const Record*>& batch,
                           const std::vector<GridCase>& cases) const {
        switch (scheme) {
            case Scheme::supervised: return mse_loss(model, batch);
            case Scheme::unsupervised: return physics_loss(model, batch, cases);
            case Scheme::semisupervised: {
                auto a = mse_loss(model, batch);
                auto b = physics_loss(model, batch, cases);
                return {mix * a.loss + (1.0 - mix) * b.loss, mix * a.grad + (1.0 - mix) * b.grad};
            }
        }
        return {};
    }
};

EpochLog full_pass(const Mlp& model, const std::vector<const Record*>& recs, const std::vector<GridCase>& cases,
                   const Objective& obj, bool labeled, int epoch) {
    EpochLog e;
    e.epoch = epoch;
    e.physics = physics_loss(model, recs, cases).loss;
    if (labeled) e.mse = mse_loss(model, recs).loss;
    switch (obj.scheme) {
        case Scheme::supervised: e.objective = e.mse; break;
        case Scheme::unsupervised: e.objective = e.physics; break;
        case Scheme::semisupervised: e.objective = obj.mix * e.mse + (1.0 - obj.mix) * e.physics; break;
    }
    return e;
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& config) {
    config.validate();
    std::vector<const Record*> recs;
    for (const auto* r : ds.select(Split::train)) {
        if (config.scheme == Scheme::unsupervised || r->label) recs.push_back(r);
    }
    if (recs.empty()) {
        throw InputError(config.scheme == Scheme::unsupervised ? "training split is empty"
                                                               : "scheme " + to_string(config.scheme) +
                                                                     " needs labeled training records");
    }
    const bool labeled = std::all_of(recs.begin(), recs.end(), [](const Record* r) { return r->label.has_value(); });

    std::vector<GridCase> cases;
    cases.reserve(recs.size());
    for (const auto* r : recs) cases.push_back(case_from_features(r->features, ds.n_buses));

    const int nf = feature_count(ds.n_buses);
    std::vector<int> sizes{nf};
    for (int h : config.hidden) sizes.push_back(h);
    sizes.push_back(2 * (ds.n_buses - 1));
    Mlp model(sizes, OutputTransform::voltage_angle);

    Eigen::MatrixXd all = stack_features(recs);
    Eigen::VectorXd mean = all.rowwise().mean();
    Eigen::VectorXd stdev = ((all.colwise() - mean).array().square().rowwise().mean()).sqrt();
    for (Eigen::Index i = 0; i < stdev.size(); ++i) {
        if (!(stdev[i] > 1e-12)) stdev[i] = 1.0;
    }
    model.set_input_normalization(mean, stdev);

    Rng rng(config.seed);
    model.init(rng);
    Adam opt(model.params().size(), config.learning_rate);
    const Objective obj{config.scheme, config.semisupervised_mix};

    TrainResult result;
    result.log.push_back(full_pass(model, recs, cases, obj, labeled, 0));

    std::vector<std::size_t> order(recs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<const Record*> batch;
    std::vector<GridCase> batch_cases;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.linear_decay) {
            opt.set_learning_rate(config.learning_rate * (1.0 - static_cast<double>(epoch - 1) / config.epochs));
        }
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            batch_cases.clear();
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(recs[order[k]]);
                batch_cases.push_back(cases[order[k]]);
            }
            auto lg = obj(model, batch, batch_cases);
            if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
                throw NumericError("training diverged (non-finite loss) in epoch " + std::to_string(epoch));
            }
            opt.step(model.params(), lg.grad);
        }
        result.log.push_back(full_pass(model, recs, cases, obj, labeled, epoch));
    }
    result.model = std::move(model);
    return result;
}

std::string format_train_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream out;
    out << "epoch,objective,mse,physics\n";
    for (const auto& e : log) {
        out << e.epoch << ',' << fmt_num(e.objective) << ',' << (std::isnan(e.mse) ? "" : fmt_num(e.mse)) << ','
            << fmt_num(e.physics) << '\n';
    }
    return out.str();
}

EvalMetrics evaluate_initial_states(const std::vector<const Record*>& records, int n_buses,
                                    const std::vector<StateVector>& initial, const NrConfig& config) {
    if (records.size() != initial.size()) throw InputError("one initial state per record required");
    EvalMetrics mt;
    mt.n_samples = static_cast<int>(records.size());
    if (records.empty()) return mt;
    double iter_sum = 0.0, ae_v = 0.0, ae_t = 0.0;
    Complex resid_sum{0.0, 0.0};
    long n_terms = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = *records[i];
        if (!rec.label) throw InputError("evaluation requires NR-labeled records");
        const GridCase c = case_from_features(rec.features, n_buses);
        const auto res = nr_solve(c, initial[i], config);
        const int its = res.converged ? res.iterations : config.max_iterations + 1;
        mt.iterations.push_back(its);
        mt.converged.push_back(res.converged);
        iter_sum += its;
        ae_v += (initial[i].v - rec.label->v).cwiseAbs().sum();
        ae_t += (initial[i].theta - rec.label->theta).cwiseAbs().sum();
        n_terms += rec.label->v.size();
        if (res.converged) {
            ++mt.n_converged;
            mt.max_iterations = std::max(mt.max_iterations, res.iterations);
            const Eigen::VectorXd f = power_residual(c, res.solution);
            const Eigen::Index m = f.size() / 2;
            resid_sum += Complex{f.head(m).mean(), f.tail(m).mean()};
        }
    }
    mt.mean_iterations = iter_sum / mt.n_samples;
    mt.mae_v = ae_v / static_cast<double>(n_terms);
    mt.mae_theta_deg = rad_to_deg(ae_t / static_cast<double>(n_terms));
    if (mt.n_converged > 0) mt.mean_pf_residual = resid_sum / static_cast<double>(mt.n_converged);
    return mt;
}

EvalMetrics evaluate(const Mlp& model, const Dataset& ds, const NrConfig& config) {
    std::vector<const Record*> recs;
    for (const auto* r : ds.select(Split::test)) {
        if (r->label) recs.push_back(r);
    }
    std::vector<StateVector> init;
    init.reserve(recs.size());
    for (const auto* r : recs) init.push_back(predict(model, r->features));
    return evaluate_initial_states(recs, ds.n_buses, init, config);
}

EvalMetrics evaluate_zero_init(const Dataset& ds, const NrConfig& config) {
    std::vector<const Record*> recs;
    for (const auto* r : ds.select(Split::test)) {
        if (r->label) recs.push_back(r);
    }
    std::vector<StateVector> init(recs.size(), StateVector::uniform(ds.n_buses - 1, 0.0, 0.0));
    return evaluate_initial_states(recs, ds.n_buses, init, config);
}

std::string format_metrics_report(const std::vector<std::pair<std::string, EvalMetrics>>& columns) {
    std::ostringstream out;
    auto row = [&](const std::string& name, auto&& cell) {
        out << std::left << std::setw(28) << name;
        for (const auto& [label, m] : columns) out << std::setw(30) << cell(m);
        out << '\n';
    };
    row("Metrics", [&, i = std::size_t{0}](const EvalMetrics&) mutable { return columns[i++].first; });
    auto fixed = [](double v, int digits) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(digits) << v;
        return s.str();
    };
    row("Iterations", [&](const EvalMetrics& m) { return fixed(m.mean_iterations, 2); });
    row("MAE (V_pred, V_NR)", [&](const EvalMetrics& m) { return fixed(m.mae_v, 4); });
    row("MAE (theta_pred, theta_NR)", [&](const EvalMetrics& m) { return fixed(m.mae_theta_deg, 4) + " deg"; });
    row("PF equation residual", [](const EvalMetrics& m) -> std::string {
        if (m.n_converged == 0) return "n/a";
        std::ostringstream s;
        s << std::scientific << std::setprecision(2) << m.mean_pf_residual.real()
          << (m.mean_pf_residual.imag() < 0 ? "" : "+") << m.mean_pf_residual.imag() << 'j';
        return s.str();
    });
    row("Converged", [](const EvalMetrics& m) { return std::to_string(m.n_converged) + "/" + std::to_string(m.n_samples); });
    row("Max iterations (converged)", [](const EvalMetrics& m) { return std::to_string(m.max_iterations); });
    return out.str();
}

std::string format_per_sample_csv(const EvalMetrics& m) {
    std::ostringstream out;
    out << "sample,iterations,converged\n";
    for (std::size_t i = 0; i < m.iterations.size(); ++i) {
        out << i << ',' << m.iterations[i] << ',' << (m.converged[i] ? 1 : 0) << '\n';
    }
    return out.str();
}

}  // namespace nrinit
