#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nrinit/network.hpp"
#include "nrinit/nr.hpp"
#include "nrinit/rng.hpp"

namespace nrinit {

/// Data of the fixed-point voltage map V = Z_N((s_N / V)* − Y_M v_S) about a
/// ball centered at V̄.
struct BasinInputs {
    Eigen::MatrixXcd z_reduced;         // (Y without slack row/column)⁻¹
    Eigen::VectorXcd s_pq;              // complex injections at PQ buses
    Eigen::VectorXcd y_slack_coupling;  // Y[pq, slack]
    Complex v_slack;
    Eigen::VectorXcd v_center;
    double nu = 1.0;
};

struct BasinEstimate {
    double nu = 0.0;
    double alpha1 = 0.0;
    double alpha2 = 0.0;
    std::vector<double> roots;  // real roots of the cubic, ascending, with multiplicity
    double r_min = 0.0;
    double r_max = 0.0;
    bool valid = false;
};

struct CenterChoice {
    enum class Kind { nominal, slack, previous_solution };
    Kind kind = Kind::nominal;
    std::optional<StateVector> previous;

    static CenterChoice nominal() { return {Kind::nominal, std::nullopt}; }
    static CenterChoice slack() { return {Kind::slack, std::nullopt}; }
    static CenterChoice previous_solution(StateVector x) { return {Kind::previous_solution, std::move(x)}; }
};

enum class RadiusChoice { r_min, r_max };

Eigen::MatrixXcd reduced_impedance(const GridCase& c);

/// Inputs with a uniform center V̄ = ν·e^{jθ_slack}·1.
BasinInputs basin_inputs(const GridCase& c, double nu);

/// (α₁, α₂) = (‖Z_N s*_N‖∞, ‖V̄_N − Z_N((s_N / V̄)* − Y_M v_S)‖∞).
std::pair<double, double> alpha_coefficients(const BasinInputs& in);

/// r³ − (2ν + α₂)r² + (ν² + 2α₂ν − α₁)r − α₂ν², equivalently
/// (r − α₂)(r − ν)² − α₁r.
double basin_cubic(double r, double nu, double alpha1, double alpha2);

/// Closed-form roots. r_min/r_max are the smallest and largest roots in
/// (0, ν]; the estimate is valid when there are at least two of them.
BasinEstimate basin_cubic_roots(double nu, double alpha1, double alpha2);

BasinEstimate estimate_basin(const GridCase& c, const CenterChoice& center);

/// Warm start with magnitudes uniform in [ν − r, ν + r] (clipped positive)
/// and angles equal to the slack angle.
StateVector sample_in_basin(const BasinEstimate& est, const GridCase& c, Rng& rng,
                            RadiusChoice radius = RadiusChoice::r_min);

struct ContractionReport {
    int n_samples = 0;
    int n_converged = 0;
    int n_ill_conditioned = 0;
    std::optional<double> fraction_converged;  // empty when n_samples == 0
    std::optional<double> fraction_ill_conditioned;
    std::optional<double> mean_iterations;     // over converged runs
    bool unique_fixed_point = true;
    double max_pairwise_distance = 0.0;
};

/// Runs NR from `n_samples` warm starts drawn in the chosen ball and checks
/// that every converged run lands on the same solution (within 1e-6).
ContractionReport verify_contraction(const GridCase& c, const BasinEstimate& est, int n_samples,
                                     const NrConfig& config, Rng& rng,
                                     RadiusChoice radius = RadiusChoice::r_min,
                                     double radius_scale = 1.0);

/// CSV `bus,center,r_min_lo,r_min_hi,r_max_lo,r_max_hi` over PQ buses.
std::string basin_bands_csv(const BasinEstimate& est, const GridCase& c);

std::string format_basin_report(const BasinEstimate& est);

}  // namespace nrinit
