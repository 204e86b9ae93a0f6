#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nrinit/network.hpp"

namespace nrinit {

struct NrConfig {
    double tolerance = 1e-8;  // ∞-norm of the mismatch
    int max_iterations = 50;
    int ill_conditioned_threshold = 10;
    double divergence_norm = 1e8;

    /// Throws InputError when the invariants do not hold.
    void validate() const;
};

enum class FailureKind { none, max_iterations, singular_jacobian, numeric_blowup };

std::string to_string(FailureKind kind);

struct NrResult {
    bool converged = false;
    int iterations = 0;  // Newton updates performed
    StateVector solution;
    std::vector<double> residual_norms;  // iterations + 1 entries
    FailureKind failure_kind = FailureKind::none;
};

enum class InitialClass { fast, ill_conditioned, failed };

std::string to_string(InitialClass c);

/// d[ΔP; ΔQ] / d[θ; V], both over PQ buses in StateVector order.
Eigen::MatrixXd jacobian(const GridCase& c, const StateVector& x);

/// Full-step Newton-Raphson from x0. Never throws for numerical trouble; the
/// failure is reported through NrResult.
NrResult nr_solve(const GridCase& c, const StateVector& x0, const NrConfig& config = {});

InitialClass classify(const NrResult& result, const NrConfig& config);
InitialClass classify_initial(const GridCase& c, const StateVector& x0, const NrConfig& config = {});

/// Per-cell outcome of a convergence map sweep.
struct MapCell {
    int iterations = 0;  // max_iterations + 1 for failed runs
    bool converged = false;
    bool matches_reference = false;
};

/// Iteration counts over a grid of uniform initial states (every PQ bus gets
/// the same (V, θ)). Cells are stored row-major: index = iv * |theta| + it.
struct ConvergenceMap {
    std::vector<double> v_axis;
    std::vector<double> theta_axis;  // radians
    std::vector<MapCell> cells;
    StateVector reference;

    [[nodiscard]] const MapCell& at(std::size_t iv, std::size_t it) const {
        return cells[iv * theta_axis.size() + it];
    }

    /// CSV `v0,theta0_deg,iterations,converged,matches_reference`.
    [[nodiscard]] std::string to_csv() const;
};

/// `resolution` evenly spaced points on [lo, hi], endpoints included.
std::vector<double> linspace(double lo, double hi, int resolution);

ConvergenceMap convergence_map(const GridCase& c, const std::vector<double>& v_axis,
                               const std::vector<double>& theta_axis, const NrConfig& config,
                               const StateVector& reference);

/// Range form. The reference is the flat-start NR solution unless given.
ConvergenceMap convergence_map(const GridCase& c, std::pair<double, double> v_range,
                               std::pair<double, double> theta_range, int resolution,
                               const NrConfig& config,
                               const std::optional<StateVector>& reference = std::nullopt);

/// ∞-norm distance between two states over magnitudes and angles.
double state_distance(const StateVector& a, const StateVector& b);

}  // namespace nrinit
