#include "nrinit/basin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nrinit/error.hpp"
#include "nrinit/io_util.hpp"

namespace nrinit {

namespace {

double inf_norm(const Eigen::VectorXcd& v) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v[i]));
    return m;
}

Eigen::MatrixXcd slack_removed(const GridCase& c) {
    const Eigen::MatrixXcd y = c.admittance();
    const auto& pq = c.pq_buses();
    const int m = c.n_pq();
    Eigen::MatrixXcd ynn(m, m);
    for (int r = 0; r < m; ++r)
        for (int s = 0; s < m; ++s) ynn(r, s) = y(pq[r], pq[s]);
    return ynn;
}

// Newton polish on the cubic; a step is kept only if it lowers |p(r)|.
double polish(double r, double nu, double a1, double a2) {
    for (int it = 0; it < 4; ++it) {
        const double f = basin_cubic(r, nu, a1, a2);
        const double df = 3 * r * r - 2 * (2 * nu + a2) * r + (nu * nu + 2 * a2 * nu - a1);
        if (df == 0.0) break;
        const double cand = r - f / df;
        if (std::abs(basin_cubic(cand, nu, a1, a2)) < std::abs(f)) r = cand;
        else break;
    }
    return r;
}

StateVector sample_with_radius(const BasinEstimate& est, const GridCase& c, Rng& rng, double radius) {
    StateVector x = StateVector::uniform(c.n_pq(), est.nu, c.slack_voltage().angle);
    for (int k = 0; k < c.n_pq(); ++k) {
        const double v = est.nu + radius * (2.0 * rng.uniform() - 1.0);
        x.v[k] = std::max(v, 1e-6);
    }
    return x;
}

}  // namespace

Eigen::MatrixXcd reduced_impedance(const GridCase& c) {
    const Eigen::MatrixXcd ynn = slack_removed(c);
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(ynn);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
        throw NumericError("slack-removed admittance matrix is singular (PQ island without a path to the slack bus)");
    }
    return lu.inverse();
}

BasinInputs basin_inputs(const GridCase& c, double nu) {
    if (!(nu > 0.0)) throw InputError("basin center magnitude must be > 0");
    const Eigen::MatrixXcd y = c.admittance();
    const auto& pq = c.pq_buses();
    const int m = c.n_pq();
    BasinInputs in;
    in.z_reduced = reduced_impedance(c);
    in.s_pq.resize(m);
    in.y_slack_coupling.resize(m);
    for (int k = 0; k < m; ++k) {
        in.s_pq[k] = Complex{c.p_injection()[pq[k]], c.q_injection()[pq[k]]};
        in.y_slack_coupling[k] = y(pq[k], c.slack_index());
    }
    in.v_slack = c.slack_voltage().rectangular();
    in.v_center = Eigen::VectorXcd::Constant(m, std::polar(nu, c.slack_voltage().angle));
    in.nu = nu;
    return in;
}

std::pair<double, double> alpha_coefficients(const BasinInputs& in) {
    for (Eigen::Index k = 0; k < in.v_center.size(); ++k) {
        if (in.v_center[k] == Complex{0.0, 0.0}) throw InputError("basin center has a zero entry");
    }
    const double alpha1 = inf_norm(in.z_reduced * in.s_pq.conjugate());
    const Eigen::VectorXcd ratio = in.s_pq.cwiseQuotient(in.v_center).conjugate();
    const Eigen::VectorXcd mapped = in.z_reduced * (ratio - in.y_slack_coupling * in.v_slack);
    const double alpha2 = inf_norm(in.v_center - mapped);
    return {alpha1, alpha2};
}

double basin_cubic(double r, double nu, double alpha1, double alpha2) {
    return ((r - (2 * nu + alpha2)) * r + (nu * nu + 2 * alpha2 * nu - alpha1)) * r - alpha2 * nu * nu;
}

BasinEstimate basin_cubic_roots(double nu, double alpha1, double alpha2) {
    if (!(nu > 0.0)) throw InputError("nu must be > 0");
    if (alpha1 < 0.0 || alpha2 < 0.0) throw InputError("alpha coefficients must be >= 0");

    BasinEstimate est;
    est.nu = nu;
    est.alpha1 = alpha1;
    est.alpha2 = alpha2;

    // Monic cubic r³ + a r² + b r + c, depressed with r = t − a/3.
    const double a = -(2 * nu + alpha2);
    const double b = nu * nu + 2 * alpha2 * nu - alpha1;
    const double c = -alpha2 * nu * nu;
    const double shift = -a / 3.0;
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    const double half_q = q / 2.0;
    const double third_p = p / 3.0;
    const double disc = half_q * half_q + third_p * third_p * third_p;
    const double scale = half_q * half_q + std::abs(third_p * third_p * third_p);

    std::vector<double> roots;
    if (scale == 0.0) {
        roots = {shift, shift, shift};
    } else if (p < 0.0 && disc <= 1e-12 * scale) {
        const double mag = 2.0 * std::sqrt(-third_p);
        const double arg = std::clamp((3.0 * q / (2.0 * p)) * std::sqrt(-3.0 / p), -1.0, 1.0);
        const double phi = std::acos(arg) / 3.0;
        double t[3];
        for (int k = 0; k < 3; ++k) t[k] = polish(mag * std::cos(phi - 2.0 * kPi * k / 3.0) + shift, nu, alpha1, alpha2);
        // The trigonometric form loses half the digits of a (near-)double
        // root; keep only the isolated root and deflate to a quadratic.
        int iso = 0;
        double best = -1.0;
        for (int k = 0; k < 3; ++k) {
            const double d = std::min(std::abs(t[k] - t[(k + 1) % 3]), std::abs(t[k] - t[(k + 2) % 3]));
            if (d > best) {
                best = d;
                iso = k;
            }
        }
        const double r1 = t[iso];
        const double hb = 0.5 * (a + r1);  // r² + 2·hb·r + cq
        const double cq = b + (a + r1) * r1;
        const double dq = hb * hb - cq;
        roots.push_back(r1);
        if (dq <= 4.0 * std::numeric_limits<double>::epsilon() * (hb * hb + std::abs(cq))) {
            // Discriminant is roundoff: a double root. Newton is useless there
            // (p' vanishes), so it is left unpolished.
            roots.push_back(-hb);
            roots.push_back(-hb);
        } else {
            const double big = -hb - std::copysign(std::sqrt(dq), hb);
            roots.push_back(polish(big, nu, alpha1, alpha2));
            roots.push_back(polish(big != 0.0 ? cq / big : 0.0, nu, alpha1, alpha2));
        }
    } else {
        const double sq = std::sqrt(std::max(disc, 0.0));
        roots.push_back(polish(std::cbrt(-half_q + sq) + std::cbrt(-half_q - sq) + shift, nu, alpha1, alpha2));
    }
    std::sort(roots.begin(), roots.end());
    est.roots = roots;

    std::vector<double> admissible;
    for (double r : roots) {
        if (r > 0.0 && r <= nu * (1.0 + 1e-12)) admissible.push_back(r);
    }
    if (admissible.size() >= 2) {
        est.valid = true;
        est.r_min = admissible.front();
        est.r_max = admissible.back();
    }
    return est;
}

BasinEstimate estimate_basin(const GridCase& c, const CenterChoice& center) {
    double nu = 1.0;
    switch (center.kind) {
        case CenterChoice::Kind::nominal: nu = 1.0; break;
        case CenterChoice::Kind::slack: nu = c.slack_voltage().magnitude; break;
        case CenterChoice::Kind::previous_solution:
            if (!center.previous || center.previous->size() != c.n_pq())
                throw InputError("previous-solution center needs a state of length " + std::to_string(c.n_pq()));
            nu = center.previous->v.mean();
            break;
    }
    const auto [a1, a2] = alpha_coefficients(basin_inputs(c, nu));
    return basin_cubic_roots(nu, a1, a2);
}

StateVector sample_in_basin(const BasinEstimate& est, const GridCase& c, Rng& rng, RadiusChoice radius) {
    if (!est.valid) throw InputError("cannot sample from an invalid basin estimate");
    return sample_with_radius(est, c, rng, radius == RadiusChoice::r_min ? est.r_min : est.r_max);
}

ContractionReport verify_contraction(const GridCase& c, const BasinEstimate& est, int n_samples,
                                     const NrConfig& config, Rng& rng, RadiusChoice radius,
                                     double radius_scale) {
    if (!est.valid) throw InputError("cannot verify an invalid basin estimate");
    ContractionReport rep;
    rep.n_samples = std::max(n_samples, 0);
    if (rep.n_samples == 0) return rep;

    const double r = radius_scale * (radius == RadiusChoice::r_min ? est.r_min : est.r_max);
    std::vector<StateVector> solutions;
    double iter_sum = 0.0;
    for (int s = 0; s < rep.n_samples; ++s) {
        const auto res = nr_solve(c, sample_with_radius(est, c, rng, r), config);
        if (!res.converged) continue;
        ++rep.n_converged;
        if (classify(res, config) == InitialClass::ill_conditioned) ++rep.n_ill_conditioned;
        iter_sum += res.iterations;
        solutions.push_back(res.solution);
    }
    for (std::size_t i = 0; i < solutions.size(); ++i) {
        for (std::size_t j = i + 1; j < solutions.size(); ++j) {
            rep.max_pairwise_distance = std::max(rep.max_pairwise_distance, state_distance(solutions[i], solutions[j]));
        }
    }
    rep.unique_fixed_point = rep.max_pairwise_distance <= 1e-6;
    rep.fraction_converged = static_cast<double>(rep.n_converged) / rep.n_samples;
    rep.fraction_ill_conditioned = static_cast<double>(rep.n_ill_conditioned) / rep.n_samples;
    if (rep.n_converged > 0) rep.mean_iterations = iter_sum / rep.n_converged;
    return rep;
}

std::string basin_bands_csv(const BasinEstimate& est, const GridCase& c) {
    std::ostringstream out;
    out << "bus,center,r_min_lo,r_min_hi,r_max_lo,r_max_hi\n";
    for (int bus : c.pq_buses()) {
        out << bus + 1 << ',' << fmt_num(est.nu) << ',' << fmt_num(est.nu - est.r_min) << ','
            << fmt_num(est.nu + est.r_min) << ',' << fmt_num(est.nu - est.r_max) << ','
            << fmt_num(est.nu + est.r_max) << '\n';
    }
    return out.str();
}

std::string format_basin_report(const BasinEstimate& est) {
    std::ostringstream out;
    out << "nu      = " << fmt_num(est.nu) << '\n'
        << "alpha1  = " << fmt_num(est.alpha1) << '\n'
        << "alpha2  = " << fmt_num(est.alpha2) << '\n'
        << "roots   =";
    for (double r : est.roots) out << ' ' << fmt_num(r);
    out << '\n'
        << "valid   = " << (est.valid ? "true" : "false") << '\n'
        << "r_min   = " << fmt_num(est.r_min) << '\n'
        << "r_max   = " << fmt_num(est.r_max) << '\n';
    return out.str();
}

}  // namespace nrinit
