#include "nrinit/nr.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "nrinit/error.hpp"
#include "nrinit/io_util.hpp"

namespace nrinit {

namespace {

constexpr double kMinReciprocalCondition = 1e-14;

double inf_norm(const Eigen::VectorXd& f) { return f.size() == 0 ? 0.0 : f.cwiseAbs().maxCoeff(); }

}  // namespace

void NrConfig::validate() const {
    if (!(tolerance > 0.0)) throw InputError("NrConfig.tolerance must be > 0");
    if (max_iterations < 1) throw InputError("NrConfig.max_iterations must be >= 1");
    if (ill_conditioned_threshold > max_iterations)
        throw InputError("NrConfig.ill_conditioned_threshold must be <= max_iterations");
    if (!(divergence_norm > tolerance)) throw InputError("NrConfig.divergence_norm must exceed tolerance");
}

std::string to_string(FailureKind kind) {
    switch (kind) {
        case FailureKind::none: return "none";
        case FailureKind::max_iterations: return "max-iterations";
        case FailureKind::singular_jacobian: return "singular-jacobian";
        case FailureKind::numeric_blowup: return "numeric-blowup";
    }
    return "unknown";
}

std::string to_string(InitialClass c) {
    switch (c) {
        case InitialClass::fast: return "fast";
        case InitialClass::ill_conditioned: return "ill_conditioned";
        case InitialClass::failed: return "failed";
    }
    return "unknown";
}

Eigen::MatrixXd jacobian(const GridCase& c, const StateVector& x) {
    Eigen::VectorXd v, th, pc, qc;
    c.expand(x, v, th);
    bus_power(c, v, th, pc, qc);
    const auto& g = c.conductance();
    const auto& b = c.susceptance();
    const auto& pq = c.pq_buses();
    const int n = c.n_buses();
    const int m = c.n_pq();

    // Σ_k V_k (G_ik cos θ_ik + B_ik sin θ_ik) and its Q counterpart; these give
    // the diagonal ∂/∂V_i terms without dividing by V_i.
    Eigen::VectorXd sum_p = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sum_q = Eigen::VectorXd::Zero(n);
    for (int i : pq) {
        for (int k = 0; k < n; ++k) {
            const double t = th[i] - th[k];
            sum_p[i] += v[k] * (g(i, k) * std::cos(t) + b(i, k) * std::sin(t));
            sum_q[i] += v[k] * (g(i, k) * std::sin(t) - b(i, k) * std::cos(t));
        }
    }

    Eigen::MatrixXd jac(2 * m, 2 * m);
    for (int r = 0; r < m; ++r) {
        const int i = pq[r];
        for (int s = 0; s < m; ++s) {
            const int j = pq[s];
            double dp_dth, dp_dv, dq_dth, dq_dv;
            if (i == j) {
                dp_dth = -qc[i] - b(i, i) * v[i] * v[i];
                dq_dth = pc[i] - g(i, i) * v[i] * v[i];
                dp_dv = sum_p[i] + g(i, i) * v[i];
                dq_dv = sum_q[i] - b(i, i) * v[i];
            } else {
                const double t = th[i] - th[j];
                const double ct = std::cos(t);
                const double st = std::sin(t);
                dp_dth = v[i] * v[j] * (g(i, j) * st - b(i, j) * ct);
                dq_dth = -v[i] * v[j] * (g(i, j) * ct + b(i, j) * st);
                dp_dv = v[i] * (g(i, j) * ct + b(i, j) * st);
                dq_dv = v[i] * (g(i, j) * st - b(i, j) * ct);
            }
            jac(r, s) = dp_dth;
            jac(r, m + s) = dp_dv;
            jac(m + r, s) = dq_dth;
            jac(m + r, m + s) = dq_dv;
        }
    }
    return jac;
}

NrResult nr_solve(const GridCase& c, const StateVector& x0, const NrConfig& config) {
    NrResult res;
    res.solution = x0;
    const int m = c.n_pq();

    auto blown_up = [&](const Eigen::VectorXd& f, double norm) {
        return !f.allFinite() || !std::isfinite(norm) || norm > config.divergence_norm;
    };

    if (!x0.v.allFinite() || !x0.theta.allFinite()) {
        res.residual_norms.push_back(std::numeric_limits<double>::quiet_NaN());
        res.failure_kind = FailureKind::numeric_blowup;
        return res;
    }

    Eigen::VectorXd f = power_residual(c, res.solution);
    double norm = inf_norm(f);
    res.residual_norms.push_back(norm);
    if (blown_up(f, norm)) {
        res.failure_kind = FailureKind::numeric_blowup;
        return res;
    }
    if (norm <= config.tolerance) {
        res.converged = true;
        return res;
    }

    while (res.iterations < config.max_iterations) {
        const Eigen::MatrixXd jac = jacobian(c, res.solution);
        if (!jac.allFinite()) {
            res.failure_kind = FailureKind::numeric_blowup;
            return res;
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        const double rcond = lu.rcond();
        if (!(rcond >= kMinReciprocalCondition)) {
            res.failure_kind = FailureKind::singular_jacobian;
            return res;
        }
        const Eigen::VectorXd dx = lu.solve(-f);
        res.solution.theta += dx.head(m);
        res.solution.v += dx.tail(m);
        ++res.iterations;

        f = power_residual(c, res.solution);
        norm = inf_norm(f);
        res.residual_norms.push_back(norm);
        if (blown_up(f, norm) || !dx.allFinite()) {
            res.failure_kind = FailureKind::numeric_blowup;
            return res;
        }
        if (norm <= config.tolerance) {
            res.converged = true;
            return res;
        }
    }
    res.failure_kind = FailureKind::max_iterations;
    return res;
}

InitialClass classify(const NrResult& result, const NrConfig& config) {
    if (!result.converged) return InitialClass::failed;
    return result.iterations < config.ill_conditioned_threshold ? InitialClass::fast
                                                                : InitialClass::ill_conditioned;
}

InitialClass classify_initial(const GridCase& c, const StateVector& x0, const NrConfig& config) {
    return classify(nr_solve(c, x0, config), config);
}

std::vector<double> linspace(double lo, double hi, int resolution) {
    if (resolution < 2) throw InputError("resolution must be >= 2");
    std::vector<double> out(static_cast<std::size_t>(resolution));
    for (int i = 0; i < resolution; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
    }
    out.back() = hi;
    return out;
}

double state_distance(const StateVector& a, const StateVector& b) {
    if (a.size() == 0) return 0.0;
    return std::max((a.v - b.v).cwiseAbs().maxCoeff(), (a.theta - b.theta).cwiseAbs().maxCoeff());
}

ConvergenceMap convergence_map(const GridCase& c, const std::vector<double>& v_axis,
                               const std::vector<double>& theta_axis, const NrConfig& config,
                               const StateVector& reference) {
    config.validate();
    if (v_axis.size() < 2 || theta_axis.size() < 2) throw InputError("convergence map needs >= 2 points per axis");
    ConvergenceMap map;
    map.v_axis = v_axis;
    map.theta_axis = theta_axis;
    map.reference = reference;
    map.cells.resize(v_axis.size() * theta_axis.size());
    for (std::size_t iv = 0; iv < v_axis.size(); ++iv) {
        for (std::size_t it = 0; it < theta_axis.size(); ++it) {
            const auto r = nr_solve(c, StateVector::uniform(c.n_pq(), v_axis[iv], theta_axis[it]), config);
            MapCell& cell = map.cells[iv * theta_axis.size() + it];
            cell.converged = r.converged;
            cell.iterations = r.converged ? r.iterations : config.max_iterations + 1;
            cell.matches_reference = r.converged && state_distance(r.solution, reference) <= 1e-6;
        }
    }
    return map;
}

ConvergenceMap convergence_map(const GridCase& c, std::pair<double, double> v_range,
                               std::pair<double, double> theta_range, int resolution,
                               const NrConfig& config, const std::optional<StateVector>& reference) {
    StateVector ref;
    if (reference) {
        ref = *reference;
    } else {
        const auto r = nr_solve(c, c.flat_start(), config);
        if (!r.converged) throw NumericError("flat start does not converge; supply a reference solution");
        ref = r.solution;
    }
    return convergence_map(c, linspace(v_range.first, v_range.second, resolution),
                           linspace(theta_range.first, theta_range.second, resolution), config, ref);
}

std::string ConvergenceMap::to_csv() const {
    std::ostringstream out;
    out << "v0,theta0_deg,iterations,converged,matches_reference\n";
    for (std::size_t iv = 0; iv < v_axis.size(); ++iv) {
        for (std::size_t it = 0; it < theta_axis.size(); ++it) {
            const auto& cell = at(iv, it);
            out << fmt_num(v_axis[iv]) << ',' << fmt_num(rad_to_deg(theta_axis[it])) << ','
                << cell.iterations << ',' << (cell.converged ? 1 : 0) << ','
                << (cell.matches_reference ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

}  // namespace nrinit
