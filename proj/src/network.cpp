#include "nrinit/network.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "nrinit/error.hpp"

namespace nrinit {

namespace {

// Depth-first reachability from bus 0 over the line graph.
bool all_connected(int n_buses, const std::vector<LineSpec>& lines, int& isolated) {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_buses));
    for (const auto& l : lines) {
        adj[l.from].push_back(l.to);
        adj[l.to].push_back(l.from);
    }
    std::vector<char> seen(static_cast<std::size_t>(n_buses), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
        int b = stack.back();
        stack.pop_back();
        for (int nb : adj[b]) {
            if (!seen[nb]) {
                seen[nb] = 1;
                stack.push_back(nb);
            }
        }
    }
    for (int b = 0; b < n_buses; ++b) {
        if (!seen[b]) {
            isolated = b;
            return false;
        }
    }
    return true;
}

}  // namespace

Admittance admittance_from_lines(int n_buses, const std::vector<LineSpec>& lines) {
    if (n_buses < 2) {
        throw InputError("network needs at least 2 buses, got " + std::to_string(n_buses));
    }
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n_buses, n_buses);
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto& l = lines[k];
        if (l.from < 0 || l.from >= n_buses || l.to < 0 || l.to >= n_buses || l.from == l.to) {
            throw InputError("line " + std::to_string(k) + ": invalid bus pair (" +
                             std::to_string(l.from) + ", " + std::to_string(l.to) + ")");
        }
        const Complex z{l.r, l.x};
        if (z == Complex{0.0, 0.0}) {
            throw InputError("line " + std::to_string(k) + ": zero impedance (R = X = 0)");
        }
        const Complex ys = 1.0 / z;
        const Complex ysh{0.0, 0.5 * l.shunt};
        y(l.from, l.from) += ys + ysh;
        y(l.to, l.to) += ys + ysh;
        y(l.from, l.to) -= ys;
        y(l.to, l.from) -= ys;
    }
    int isolated = -1;
    if (!all_connected(n_buses, lines, isolated)) {
        throw InputError("bus " + std::to_string(isolated) + " is disconnected from the network");
    }
    return {y.real(), y.imag()};
}

GridCase::GridCase(Eigen::MatrixXd conductance, Eigen::MatrixXd susceptance,
                   Eigen::VectorXd p_injection, Eigen::VectorXd q_injection, int slack_index,
                   ComplexPhasor slack_voltage)
    : g_(std::move(conductance)),
      b_(std::move(susceptance)),
      p_(std::move(p_injection)),
      q_(std::move(q_injection)),
      slack_(slack_index),
      slack_voltage_(slack_voltage) {
    validate();
}

GridCase::GridCase(int n_buses, std::vector<LineSpec> lines, Eigen::VectorXd p_injection,
                   Eigen::VectorXd q_injection, int slack_index, ComplexPhasor slack_voltage)
    : p_(std::move(p_injection)),
      q_(std::move(q_injection)),
      slack_(slack_index),
      slack_voltage_(slack_voltage) {
    auto y = admittance_from_lines(n_buses, lines);
    g_ = std::move(y.conductance);
    b_ = std::move(y.susceptance);
    lines_ = std::move(lines);
    validate();
    if (!g_.isApprox(g_.transpose(), 1e-12) || !b_.isApprox(b_.transpose(), 1e-12)) {
        throw InputError("assembled admittance matrix is not symmetric");
    }
}

void GridCase::validate() {
    const auto n = g_.rows();
    if (n < 2) {
        throw InputError("n_buses must be >= 2, got " + std::to_string(n));
    }
    if (g_.cols() != n || b_.rows() != n || b_.cols() != n) {
        throw InputError("conductance/susceptance must both be " + std::to_string(n) + "x" +
                         std::to_string(n));
    }
    if (p_.size() != n || q_.size() != n) {
        throw InputError("injection vectors must have length " + std::to_string(n));
    }
    if (slack_ < 0 || slack_ >= n) {
        throw InputError("slack_index " + std::to_string(slack_) + " out of range");
    }
    if (!g_.allFinite() || !b_.allFinite() || !p_.allFinite() || !q_.allFinite() ||
        !std::isfinite(slack_voltage_.magnitude) || !std::isfinite(slack_voltage_.angle)) {
        throw InputError("case data contains non-finite values");
    }
    pq_.clear();
    for (int i = 0; i < n; ++i) {
        if (i != slack_) pq_.push_back(i);
    }
}

Eigen::MatrixXcd GridCase::admittance() const {
    Eigen::MatrixXcd y(g_.rows(), g_.cols());
    y.real() = g_;
    y.imag() = b_;
    return y;
}

void GridCase::expand(const StateVector& x, Eigen::VectorXd& v_full,
                      Eigen::VectorXd& theta_full) const {
    if (x.v.size() != n_pq() || x.theta.size() != n_pq()) {
        throw InputError("state vector length " + std::to_string(x.v.size()) +
                         " does not match PQ bus count " + std::to_string(n_pq()));
    }
    v_full.resize(n_buses());
    theta_full.resize(n_buses());
    v_full[slack_] = slack_voltage_.magnitude;
    theta_full[slack_] = slack_voltage_.angle;
    for (int k = 0; k < n_pq(); ++k) {
        v_full[pq_[k]] = x.v[k];
        theta_full[pq_[k]] = x.theta[k];
    }
}

GridCase GridCase::with_scaled_injections(double factor) const {
    GridCase c = *this;
    c.p_ *= factor;
    c.q_ *= factor;
    return c;
}

bool GridCase::operator==(const GridCase& other) const {
    return g_ == other.g_ && b_ == other.b_ && p_ == other.p_ && q_ == other.q_ &&
           slack_ == other.slack_ && slack_voltage_ == other.slack_voltage_ &&
           lines_ == other.lines_;
}

GridCase build_two_bus(double r, double x, double p_load, double q_load) {
    Eigen::Vector2d p{0.0, -p_load};
    Eigen::Vector2d q{0.0, -q_load};
    return GridCase(2, {LineSpec{0, 1, r, x, 0.0}}, p, q, 0, ComplexPhasor{1.0, 0.0});
}

GridCase build_two_bus_from_admittance(double g, double b, double p_load, double q_load) {
    Eigen::Matrix2d gm;
    gm << g, -g, -g, g;
    Eigen::Matrix2d bm;
    bm << b, -b, -b, b;
    Eigen::Vector2d p{0.0, -p_load};
    Eigen::Vector2d q{0.0, -q_load};
    return GridCase(gm, bm, p, q, 0, ComplexPhasor{1.0, 0.0});
}

void bus_power(const GridCase& c, const Eigen::VectorXd& v_full, const Eigen::VectorXd& theta_full,
               Eigen::VectorXd& p_calc, Eigen::VectorXd& q_calc) {
    const int n = c.n_buses();
    const auto& g = c.conductance();
    const auto& b = c.susceptance();
    p_calc.setZero(n);
    q_calc.setZero(n);
    for (int i = 0; i < n; ++i) {
        double sp = 0.0;
        double sq = 0.0;
        for (int k = 0; k < n; ++k) {
            const double t = theta_full[i] - theta_full[k];
            const double ct = std::cos(t);
            const double st = std::sin(t);
            sp += v_full[k] * (g(i, k) * ct + b(i, k) * st);
            sq += v_full[k] * (g(i, k) * st - b(i, k) * ct);
        }
        p_calc[i] = v_full[i] * sp;
        q_calc[i] = v_full[i] * sq;
    }
}

Eigen::VectorXd power_residual(const GridCase& c, const StateVector& x) {
    Eigen::VectorXd v, th, pc, qc;
    c.expand(x, v, th);
    bus_power(c, v, th, pc, qc);
    const int m = c.n_pq();
    Eigen::VectorXd f(2 * m);
    for (int k = 0; k < m; ++k) {
        const int i = c.pq_buses()[k];
        f[k] = pc[i] - c.p_injection()[i];
        f[m + k] = qc[i] - c.q_injection()[i];
    }
    return f;
}

}  // namespace nrinit
