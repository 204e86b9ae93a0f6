#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nrinit/mlp.hpp"
#include "nrinit/network.hpp"
#include "nrinit/nr.hpp"
#include "nrinit/rng.hpp"

namespace nrinit {

// State and action ranges. All intervals are half-open (lo, hi].
inline constexpr double kRlVMin = 0.5, kRlVMax = 2.0;
inline constexpr double kRlThetaMin = -90.0, kRlThetaMax = 90.0;  // degrees
inline constexpr double kRlDvMax = 0.5;
inline constexpr double kRlDthetaMax = 50.0;  // degrees

/// Initial guess for the non-slack bus of a two-bus case plus the NR
/// iteration count it needs (failures count as the NR iteration cap).
struct RLState {
    double v = 1.0;
    double theta_deg = 0.0;
    int k = 0;
};

struct RLAction {
    double dv = 0.0;
    double dtheta_deg = 0.0;
};

/// Clamp into (lo, hi]; the open end maps to the next representable value.
double clip_half_open(double x, double lo, double hi);

struct EnvConfig {
    GridCase grid = build_two_bus_from_admittance(100.0, 10.0, 0.9, 0.6);
    int target_k = 3;
    int horizon = 10;
    NrConfig nr;

    void validate() const;
};

/// NR iteration count from (v, θ) with failures mapped to nr.max_iterations.
int nr_steps_from(const EnvConfig& config, double v, double theta_deg);

/// State at a given guess (clipped into range) with its k.
RLState env_state_at(const EnvConfig& config, double v, double theta_deg);

RLState env_reset(const EnvConfig& config, Rng& rng);

struct StepResult {
    RLState next;
    double reward = 0.0;
    bool done = false;       // target reached or horizon exhausted
    bool at_target = false;  // k' <= target_k
};

/// `step_index` is the 1-based index of this step within the episode.
StepResult env_step(const RLState& state, const RLAction& action, int step_index, const EnvConfig& config);

/// Gaussian policy in pre-squash space with a separate value network.
struct RLPolicy {
    Mlp mean_net;             // 3 → … → 2, identity output
    Eigen::Vector2d log_std;  // per action dimension
    Mlp value_net;            // 3 → … → 1

    bool operator==(const RLPolicy& o) const {
        return mean_net == o.mean_net && log_std == o.log_std && value_net == o.value_net;
    }
};

/// Raw policy input [V, θ_deg, k]; both networks standardize it with fixed
/// range-based constants.
Eigen::Vector3d policy_input(const RLState& s);

RLPolicy make_policy(const std::vector<int>& hidden, double init_log_std, Rng& rng);

/// tanh squash of a pre-squash sample u into the action box.
RLAction squash(const Eigen::Vector2d& u);

/// log |d squash / du| summed over both dimensions.
double squash_log_det(const Eigen::Vector2d& u);

/// Gaussian log-density of u (before the squash correction).
double gaussian_log_prob(const Eigen::Vector2d& u, const Eigen::Vector2d& mean, const Eigen::Vector2d& log_std);

struct PolicySample {
    RLAction action;
    Eigen::Vector2d u;  // pre-squash sample
    double log_prob = 0.0;  // density of the squashed action
};

PolicySample policy_sample(const RLPolicy& policy, const RLState& state, Rng& rng);

/// Squashed mean action, used for evaluation.
RLAction policy_mean_action(const RLPolicy& policy, const RLState& state);

struct PPOConfig {
    double learning_rate = 1e-4;
    double discount = 0.99;
    int rollout_steps = 2048;
    int batch_size = 64;
    int epochs_per_update = 10;
    double clip_range = 0.2;
    double entropy_coef = 0.0;
    long total_timesteps = 200000;
    double gae_lambda = 0.95;
    double value_coef = 0.5;
    double max_grad_norm = 0.5;
    double reward_scale = 0.01;  // applied to rewards inside the learner only
    double init_log_std = 0.0;
    std::vector<int> hidden = {64, 64};
    std::uint64_t seed = 1;

    void validate() const;
};

/// Clipped surrogate for one minibatch: mean over i of
/// min(r_i A_i, clip(r_i, 1 − ε, 1 + ε) A_i), and its derivative with respect
/// to each log r_i.
struct Surrogate {
    double objective = 0.0;
    Eigen::VectorXd d_log_ratio;
};
Surrogate clipped_surrogate(const Eigen::VectorXd& ratio, const Eigen::VectorXd& advantage, double clip_range);

/// Generalized advantage estimates. `next_value[i]` is V(s_{i+1}) (ignored when
/// `terminal[i]`); `episode_end[i]` stops the recursion at i.
Eigen::VectorXd gae(const Eigen::VectorXd& reward, const Eigen::VectorXd& value, const Eigen::VectorXd& next_value,
                    const std::vector<bool>& terminal, const std::vector<bool>& episode_end, double discount,
                    double lambda);

struct UpdateLog {
    int update = 0;
    long timesteps = 0;
    double mean_return = 0.0;  // undiscounted raw reward over episodes finished in the rollout
    double mean_ep_len = 0.0;
    int episodes = 0;
};

struct PPOResult {
    RLPolicy policy;
    std::vector<UpdateLog> log;
};

PPOResult train_ppo(const EnvConfig& env, const PPOConfig& config);

std::string format_ppo_log_csv(const std::vector<UpdateLog>& log);

struct TraceRow {
    int t = 0;
    double v = 0.0;
    double theta_deg = 0.0;
    int k = 0;
    double reward = 0.0;  // 0 for the start row
};

/// Deterministic rollout with mean actions until k <= target_k or the horizon.
std::vector<TraceRow> rollout_trace(const RLPolicy& policy, const EnvConfig& env, double v0, double theta0_deg);

struct StepsMap {
    std::vector<double> v_axis;
    std::vector<double> theta_axis_deg;
    std::vector<int> k0;     // row-major, index = iv * |θ| + it
    std::vector<int> steps;  // 0 when k0 <= target_k, horizon + 1 when never reached

    [[nodiscard]] double fraction_reached(int horizon) const;
    /// CSV `v0,theta0_deg,steps_to_target`.
    [[nodiscard]] std::string to_csv() const;
};

StepsMap eval_policy(const RLPolicy& policy, const EnvConfig& env, const std::vector<double>& v_axis,
                     const std::vector<double>& theta_axis_deg);

/// `n` points lo + (i+1)(hi − lo)/n, i = 0..n−1: a grid covering (lo, hi].
std::vector<double> half_open_grid(double lo, double hi, int n);

/// CSV `t,v,theta_deg,k,reward`.
std::string format_trace_csv(const std::vector<TraceRow>& trace);

std::string format_policy(const RLPolicy& policy);
RLPolicy parse_policy(const std::string& text);

}  // namespace nrinit
