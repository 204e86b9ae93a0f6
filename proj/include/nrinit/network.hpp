#pragma once

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace nrinit {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Polar voltage phasor. Magnitude in per-unit, angle in radians.
struct ComplexPhasor {
    double magnitude = 1.0;
    double angle = 0.0;

    [[nodiscard]] Complex rectangular() const { return std::polar(magnitude, angle); }
    [[nodiscard]] static ComplexPhasor from_rectangular(Complex z) {
        return {std::abs(z), std::arg(z)};
    }

    bool operator==(const ComplexPhasor&) const = default;
};

/// Unknowns of the power-flow problem: magnitude and angle of every PQ bus,
/// in increasing bus-index order (the slack bus is skipped).
struct StateVector {
    Eigen::VectorXd v;
    Eigen::VectorXd theta;

    [[nodiscard]] Eigen::Index size() const { return v.size(); }

    /// Uniform state: every PQ bus set to (magnitude, angle).
    static StateVector uniform(Eigen::Index n_pq, double magnitude, double angle) {
        return {Eigen::VectorXd::Constant(n_pq, magnitude), Eigen::VectorXd::Constant(n_pq, angle)};
    }
};

/// Series branch with optional total line-charging susceptance (pi model,
/// half at each end). Bus indices are zero-based.
struct LineSpec {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double shunt = 0.0;

    bool operator==(const LineSpec&) const = default;
};

struct Admittance {
    Eigen::MatrixXd conductance;
    Eigen::MatrixXd susceptance;
};

/// Assembles G and B from a line list. Throws InputError on a zero-impedance
/// line, an out-of-range bus index, or a bus not connected to the rest of the
/// network.
Admittance admittance_from_lines(int n_buses, const std::vector<LineSpec>& lines);

/// Network description: Y = G + jB, net injections (loads negative), one
/// slack bus, every other bus PQ. Immutable after construction.
class GridCase {
  public:
    /// Direct-matrix construction. Matrices are taken verbatim; symmetry is not
    /// required.
    GridCase(Eigen::MatrixXd conductance, Eigen::MatrixXd susceptance, Eigen::VectorXd p_injection,
             Eigen::VectorXd q_injection, int slack_index, ComplexPhasor slack_voltage);

    /// Line-based construction; the admittance matrix is assembled and checked
    /// for symmetry, and the line list is kept for serialization.
    GridCase(int n_buses, std::vector<LineSpec> lines, Eigen::VectorXd p_injection,
             Eigen::VectorXd q_injection, int slack_index, ComplexPhasor slack_voltage);

    [[nodiscard]] int n_buses() const { return static_cast<int>(p_.size()); }
    [[nodiscard]] int n_pq() const { return n_buses() - 1; }
    [[nodiscard]] const Eigen::MatrixXd& conductance() const { return g_; }
    [[nodiscard]] const Eigen::MatrixXd& susceptance() const { return b_; }
    [[nodiscard]] const Eigen::VectorXd& p_injection() const { return p_; }
    [[nodiscard]] const Eigen::VectorXd& q_injection() const { return q_; }
    [[nodiscard]] int slack_index() const { return slack_; }
    [[nodiscard]] const ComplexPhasor& slack_voltage() const { return slack_voltage_; }
    [[nodiscard]] const std::optional<std::vector<LineSpec>>& lines() const { return lines_; }

    /// Bus indices of the PQ buses, in the order used by StateVector.
    [[nodiscard]] const std::vector<int>& pq_buses() const { return pq_; }

    [[nodiscard]] Eigen::MatrixXcd admittance() const;

    /// Full-length magnitude/angle vectors with the slack values substituted.
    void expand(const StateVector& x, Eigen::VectorXd& v_full, Eigen::VectorXd& theta_full) const;

    /// Same network with injections multiplied by `factor`.
    [[nodiscard]] GridCase with_scaled_injections(double factor) const;

    [[nodiscard]] StateVector flat_start() const {
        return StateVector::uniform(n_pq(), 1.0, 0.0);
    }

    bool operator==(const GridCase& other) const;

  private:
    void validate();

    Eigen::MatrixXd g_;
    Eigen::MatrixXd b_;
    Eigen::VectorXd p_;
    Eigen::VectorXd q_;
    int slack_ = 0;
    ComplexPhasor slack_voltage_;
    std::optional<std::vector<LineSpec>> lines_;
    std::vector<int> pq_;
};

/// Two-bus case: slack bus 0 at 1.0∠0 feeding a load P2 + jQ2 at bus 1 through
/// R + jX.
GridCase build_two_bus(double r, double x, double p_load, double q_load);

/// Two-bus case given the line admittance directly: Y = [[y,-y],[-y,y]] with
/// y = g + jb.
GridCase build_two_bus_from_admittance(double g, double b, double p_load, double q_load);

/// Calculated bus injections P_i, Q_i for all buses at the given full-length
/// voltage profile.
void bus_power(const GridCase& c, const Eigen::VectorXd& v_full, const Eigen::VectorXd& theta_full,
               Eigen::VectorXd& p_calc, Eigen::VectorXd& q_calc);

/// Mismatch [ΔP_pq; ΔQ_pq] with ΔP_i = P_calc,i − P_i. Length 2·n_pq.
Eigen::VectorXd power_residual(const GridCase& c, const StateVector& x);

}  // namespace nrinit
