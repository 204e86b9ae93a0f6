#include "nrinit/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nrinit/error.hpp"
#include "nrinit/io_util.hpp"

namespace nrinit {

namespace {

constexpr double kLog2 = 0.69314718055994530942;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Fixed standardization of [V, θ_deg, k] to roughly [-1, 1].
const Eigen::Vector3d kInputShift{1.25, 0.0, 25.0};
const Eigen::Vector3d kInputScale{0.75, 90.0, 25.0};

void shuffle(std::vector<int>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

void clip_norm(Eigen::VectorXd& g, double max_norm) {
    const double n = g.norm();
    if (max_norm > 0 && n > max_norm) g *= max_norm / n;
}

}  // namespace

double clip_half_open(double x, double lo, double hi) {
    if (x > hi) return hi;
    if (x <= lo) return std::nextafter(lo, hi);
    return x;
}

void EnvConfig::validate() const {
    nr.validate();
    if (grid.n_buses() != 2) throw InputError("RL environment needs a two-bus case");
    if (target_k < 0 || target_k >= nr.max_iterations) throw InputError("target_k must be in [0, max_iterations)");
    if (horizon < 1) throw InputError("horizon must be >= 1");
}

int nr_steps_from(const EnvConfig& config, double v, double theta_deg) {
    const auto res =
        nr_solve(config.grid, StateVector::uniform(1, v, deg_to_rad(theta_deg)), config.nr);
    return res.converged ? res.iterations : config.nr.max_iterations;
}

RLState env_state_at(const EnvConfig& config, double v, double theta_deg) {
    RLState s;
    s.v = clip_half_open(v, kRlVMin, kRlVMax);
    s.theta_deg = clip_half_open(theta_deg, kRlThetaMin, kRlThetaMax);
    s.k = nr_steps_from(config, s.v, s.theta_deg);
    return s;
}

RLState env_reset(const EnvConfig& config, Rng& rng) {
    const double v = rng.uniform_left_open(kRlVMin, kRlVMax);
    const double th = rng.uniform_left_open(kRlThetaMin, kRlThetaMax);
    return env_state_at(config, v, th);
}

StepResult env_step(const RLState& state, const RLAction& action, int step_index, const EnvConfig& config) {
    StepResult r;
    const double dv = clip_half_open(action.dv, -kRlDvMax, kRlDvMax);
    const double dth = clip_half_open(action.dtheta_deg, -kRlDthetaMax, kRlDthetaMax);
    r.next = env_state_at(config, state.v + dv, state.theta_deg + dth);
    const StateVector x = StateVector::uniform(1, r.next.v, deg_to_rad(r.next.theta_deg));
    r.reward = -power_residual(config.grid, x).norm();
    r.at_target = r.next.k <= config.target_k;
    r.done = r.at_target || step_index >= config.horizon;
    return r;
}

Eigen::Vector3d policy_input(const RLState& s) { return {s.v, s.theta_deg, static_cast<double>(s.k)}; }

RLPolicy make_policy(const std::vector<int>& hidden, double init_log_std, Rng& rng) {
    std::vector<int> pi{3}, vf{3};
    pi.insert(pi.end(), hidden.begin(), hidden.end());
    vf.insert(vf.end(), hidden.begin(), hidden.end());
    pi.push_back(2);
    vf.push_back(1);
    RLPolicy p{Mlp(pi), Eigen::Vector2d::Constant(init_log_std), Mlp(vf)};
    p.mean_net.set_input_normalization(kInputShift, kInputScale);
    p.value_net.set_input_normalization(kInputShift, kInputScale);
    p.mean_net.init(rng, 0.01);
    p.value_net.init(rng, 1.0);
    return p;
}

RLAction squash(const Eigen::Vector2d& u) {
    return {clip_half_open(kRlDvMax * std::tanh(u[0]), -kRlDvMax, kRlDvMax),
            clip_half_open(kRlDthetaMax * std::tanh(u[1]), -kRlDthetaMax, kRlDthetaMax)};
}

double squash_log_det(const Eigen::Vector2d& u) {
    // log(1 − tanh²u) = 2 (log 2 − u − softplus(−2u))
    double s = std::log(kRlDvMax) + std::log(kRlDthetaMax);
    for (int d = 0; d < 2; ++d) s += 2.0 * (kLog2 - u[d] - softplus(-2.0 * u[d]));
    return s;
}

double gaussian_log_prob(const Eigen::Vector2d& u, const Eigen::Vector2d& mean, const Eigen::Vector2d& log_std) {
    double lp = 0.0;
    for (int d = 0; d < 2; ++d) {
        const double z = (u[d] - mean[d]) * std::exp(-log_std[d]);
        lp += -0.5 * z * z - log_std[d] - kLogSqrt2Pi;
    }
    return lp;
}

PolicySample policy_sample(const RLPolicy& policy, const RLState& state, Rng& rng) {
    const Eigen::Vector2d mean = policy.mean_net.forward_one(policy_input(state));
    PolicySample s;
    for (int d = 0; d < 2; ++d) s.u[d] = mean[d] + std::exp(policy.log_std[d]) * rng.normal();
    s.action = squash(s.u);
    s.log_prob = gaussian_log_prob(s.u, mean, policy.log_std) - squash_log_det(s.u);
    return s;
}

RLAction policy_mean_action(const RLPolicy& policy, const RLState& state) {
    return squash(policy.mean_net.forward_one(policy_input(state)));
}

void PPOConfig::validate() const {
    if (!(learning_rate > 0)) throw InputError("learning_rate must be > 0");
    if (!(discount > 0 && discount < 1)) throw InputError("discount must be in (0, 1)");
    if (rollout_steps < 1 || batch_size < 1 || epochs_per_update < 1) {
        throw InputError("rollout_steps, batch_size and epochs_per_update must be >= 1");
    }
    if (!(clip_range > 0)) throw InputError("clip_range must be > 0");
    if (total_timesteps < 1) throw InputError("total_timesteps must be >= 1");
    if (gae_lambda < 0 || gae_lambda > 1) throw InputError("gae_lambda must be in [0, 1]");
    if (entropy_coef < 0 || value_coef < 0) throw InputError("loss coefficients must be >= 0");
    if (!(reward_scale > 0)) throw InputError("reward_scale must be > 0");
}

Surrogate clipped_surrogate(const Eigen::VectorXd& ratio, const Eigen::VectorXd& advantage, double clip_range) {
    Surrogate s;
    const auto n = ratio.size();
    s.d_log_ratio = Eigen::VectorXd::Zero(n);
    if (n == 0) return s;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double unclipped = ratio[i] * advantage[i];
        const double clipped = std::clamp(ratio[i], 1.0 - clip_range, 1.0 + clip_range) * advantage[i];
        if (unclipped <= clipped) {
            s.objective += unclipped;
            s.d_log_ratio[i] = unclipped / static_cast<double>(n);
        } else {
            s.objective += clipped;
        }
    }
    s.objective /= static_cast<double>(n);
    return s;
}

Eigen::VectorXd gae(const Eigen::VectorXd& reward, const Eigen::VectorXd& value, const Eigen::VectorXd& next_value,
                    const std::vector<bool>& terminal, const std::vector<bool>& episode_end, double discount,
                    double lambda) {
    const auto n = reward.size();
    Eigen::VectorXd adv(n);
    double running = 0.0;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        const double boot = terminal[ui] ? 0.0 : discount * next_value[i];
        const double delta = reward[i] + boot - value[i];
        running = delta + (episode_end[ui] ? 0.0 : discount * lambda * running);
        adv[i] = running;
    }
    return adv;
}

PPOResult train_ppo(const EnvConfig& env, const PPOConfig& config) {
    env.validate();
    config.validate();
    Rng master(config.seed);
    Rng init_rng = master.split();
    Rng env_rng = master.split();
    Rng act_rng = master.split();
    Rng batch_rng = master.split();

    PPOResult result;
    RLPolicy& pol = result.policy;
    pol = make_policy(config.hidden, config.init_log_std, init_rng);

    const Eigen::Index n_mean = pol.mean_net.params().size();
    Adam pi_opt(n_mean + 2, config.learning_rate);
    Adam vf_opt(pol.value_net.params().size(), config.learning_rate);
    Eigen::VectorXd pi_params(n_mean + 2);

    RLState state = env_reset(env, env_rng);
    int ep_len = 0;
    double ep_return = 0.0;
    long timesteps = 0;
    int update = 0;

    while (timesteps < config.total_timesteps) {
        const int n = static_cast<int>(std::min<long>(config.rollout_steps, config.total_timesteps - timesteps));
        Eigen::MatrixXd x(3, n), x_next(3, n), u(2, n);
        Eigen::VectorXd logp_old(n), reward(n);
        std::vector<bool> terminal(n), episode_end(n);
        double sum_return = 0.0, sum_len = 0.0;
        int episodes = 0;

        for (int i = 0; i < n; ++i) {
            x.col(i) = policy_input(state);
            const Eigen::Vector2d mean = pol.mean_net.forward_one(x.col(i));
            const auto sample = policy_sample(pol, state, act_rng);
            u.col(i) = sample.u;
            logp_old[i] = gaussian_log_prob(sample.u, mean, pol.log_std);
            const auto step = env_step(state, sample.action, ep_len + 1, env);
            ++ep_len;
            ep_return += step.reward;
            reward[i] = config.reward_scale * step.reward;
            x_next.col(i) = policy_input(step.next);
            terminal[i] = step.at_target;
            episode_end[i] = step.done || i + 1 == n;
            if (step.done) {
                sum_return += ep_return;
                sum_len += ep_len;
                ++episodes;
                ep_return = 0.0;
                ep_len = 0;
                state = env_reset(env, env_rng);
            } else {
                state = step.next;
            }
        }
        timesteps += n;

        const Eigen::VectorXd value = pol.value_net.forward(x).row(0).transpose();
        const Eigen::VectorXd next_value = pol.value_net.forward(x_next).row(0).transpose();
        const Eigen::VectorXd adv = gae(reward, value, next_value, terminal, episode_end, config.discount,
                                        config.gae_lambda);
        const Eigen::VectorXd returns = adv + value;

        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 0; epoch < config.epochs_per_update; ++epoch) {
            shuffle(order, batch_rng);
            for (int start = 0; start < n; start += config.batch_size) {
                const int b = std::min(config.batch_size, n - start);
                Eigen::MatrixXd xb(3, b), ub(2, b);
                Eigen::VectorXd ab(b), rb(b), lb(b);
                for (int j = 0; j < b; ++j) {
                    const int idx = order[static_cast<std::size_t>(start + j)];
                    xb.col(j) = x.col(idx);
                    ub.col(j) = u.col(idx);
                    ab[j] = adv[idx];
                    rb[j] = returns[idx];
                    lb[j] = logp_old[idx];
                }
                if (b > 1) {
                    const double mu = ab.mean();
                    const double sd = std::sqrt((ab.array() - mu).square().mean());
                    ab = (ab.array() - mu) / (sd + 1e-8);
                }

                // Policy step.
                const auto tr = pol.mean_net.forward_trace(xb);
                const Eigen::Vector2d inv_var = (-2.0 * pol.log_std.array()).exp();
                Eigen::VectorXd ratio(b);
                for (int j = 0; j < b; ++j) {
                    ratio[j] = std::exp(gaussian_log_prob(ub.col(j), tr.output.col(j), pol.log_std) - lb[j]);
                }
                const auto surr = clipped_surrogate(ratio, ab, config.clip_range);
                Eigen::MatrixXd d_mean(2, b);
                Eigen::Vector2d g_log_std = Eigen::Vector2d::Constant(-config.entropy_coef);
                for (int j = 0; j < b; ++j) {
                    const double dl = -surr.d_log_ratio[j];  // d loss / d log π
                    const Eigen::Array2d diff = ub.col(j) - tr.output.col(j);
                    d_mean.col(j) = dl * (diff * inv_var.array()).matrix();
                    g_log_std += dl * (diff.square() * inv_var.array() - 1.0).matrix();
                }
                Eigen::VectorXd g_pi = Eigen::VectorXd::Zero(n_mean + 2);
                Eigen::VectorXd g_mean = Eigen::VectorXd::Zero(n_mean);
                pol.mean_net.backward(tr, d_mean, g_mean);
                g_pi << g_mean, g_log_std;

                // Value step.
                const auto vt = pol.value_net.forward_trace(xb);
                const Eigen::RowVectorXd vdiff = vt.output.row(0) - rb.transpose();
                const double v_loss = config.value_coef * vdiff.squaredNorm() / b;
                Eigen::VectorXd g_v = Eigen::VectorXd::Zero(pol.value_net.params().size());
                pol.value_net.backward(vt, (2.0 * config.value_coef / b) * vdiff, g_v);

                if (!std::isfinite(surr.objective) || !std::isfinite(v_loss) || !g_pi.allFinite() || !g_v.allFinite()) {
                    throw NumericError("PPO update " + std::to_string(update + 1) + ": non-finite loss (policy " +
                                       fmt_num(surr.objective) + ", value " + fmt_num(v_loss) + ")");
                }
                clip_norm(g_pi, config.max_grad_norm);
                clip_norm(g_v, config.max_grad_norm);
                pi_params << pol.mean_net.params(), pol.log_std;
                pi_opt.step(pi_params, g_pi);
                pol.mean_net.params() = pi_params.head(n_mean);
                pol.log_std = pi_params.tail(2);
                vf_opt.step(pol.value_net.params(), g_v);
            }
        }

        UpdateLog log;
        log.update = ++update;
        log.timesteps = timesteps;
        log.episodes = episodes;
        log.mean_return = episodes ? sum_return / episodes : std::nan("");
        log.mean_ep_len = episodes ? sum_len / episodes : std::nan("");
        result.log.push_back(log);
    }
    return result;
}

std::string format_ppo_log_csv(const std::vector<UpdateLog>& log) {
    std::ostringstream out;
    out << "update,timesteps,mean_return,mean_ep_len\n";
    for (const auto& l : log) {
        out << l.update << ',' << l.timesteps << ',' << fmt_num(l.mean_return) << ',' << fmt_num(l.mean_ep_len)
            << '\n';
    }
    return out.str();
}

std::vector<TraceRow> rollout_trace(const RLPolicy& policy, const EnvConfig& env, double v0, double theta0_deg) {
    RLState s = env_state_at(env, v0, theta0_deg);
    std::vector<TraceRow> rows{{0, s.v, s.theta_deg, s.k, 0.0}};
    if (s.k <= env.target_k) return rows;
    for (int t = 1; t <= env.horizon; ++t) {
        const auto step = env_step(s, policy_mean_action(policy, s), t, env);
        s = step.next;
        rows.push_back({t, s.v, s.theta_deg, s.k, step.reward});
        if (step.done) break;
    }
    return rows;
}

double StepsMap::fraction_reached(int horizon) const {
    if (steps.empty()) return 0.0;
    const auto hit = std::count_if(steps.begin(), steps.end(), [&](int s) { return s <= horizon; });
    return static_cast<double>(hit) / static_cast<double>(steps.size());
}

std::string StepsMap::to_csv() const {
    std::ostringstream out;
    out << "v0,theta0_deg,steps_to_target\n";
    for (std::size_t i = 0; i < v_axis.size(); ++i) {
        for (std::size_t j = 0; j < theta_axis_deg.size(); ++j) {
            out << fmt_num(v_axis[i]) << ',' << fmt_num(theta_axis_deg[j]) << ','
                << steps[i * theta_axis_deg.size() + j] << '\n';
        }
    }
    return out.str();
}

StepsMap eval_policy(const RLPolicy& policy, const EnvConfig& env, const std::vector<double>& v_axis,
                     const std::vector<double>& theta_axis_deg) {
    env.validate();
    StepsMap m{v_axis, theta_axis_deg, {}, {}};
    for (double v : v_axis) {
        for (double th : theta_axis_deg) {
            const auto trace = rollout_trace(policy, env, v, th);
            m.k0.push_back(trace.front().k);
            const auto& last = trace.back();
            m.steps.push_back(last.k <= env.target_k ? last.t : env.horizon + 1);
        }
    }
    return m;
}

std::vector<double> half_open_grid(double lo, double hi, int n) {
    if (n < 1) throw InputError("grid resolution must be >= 1");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * (i + 1) / n;
    return g;
}

std::string format_trace_csv(const std::vector<TraceRow>& trace) {
    std::ostringstream out;
    out << "t,v,theta_deg,k,reward\n";
    for (const auto& r : trace) {
        out << r.t << ',' << fmt_num(r.v) << ',' << fmt_num(r.theta_deg) << ',' << r.k << ',' << fmt_num(r.reward)
            << '\n';
    }
    return out.str();
}

std::string format_policy(const RLPolicy& policy) {
    std::ostringstream out;
    out << "nrinit-rl-policy 1\nlog_std " << fmt_num(policy.log_std[0]) << ' ' << fmt_num(policy.log_std[1])
        << "\n[mean_net]\n"
        << format_mlp(policy.mean_net) << "[value_net]\n"
        << format_mlp(policy.value_net);
    return out.str();
}

RLPolicy parse_policy(const std::string& text) {
    const std::string head = "nrinit-rl-policy 1\n";
    if (text.rfind(head, 0) != 0) throw InputError("policy file: missing 'nrinit-rl-policy 1' header");
    const auto m = text.find("[mean_net]\n");
    const auto v = text.find("[value_net]\n");
    if (m == std::string::npos || v == std::string::npos || v < m) {
        throw InputError("policy file: expected [mean_net] and [value_net] sections");
    }
    const std::string std_line = text.substr(head.size(), m - head.size());
    const auto toks = split_ws(trim(std_line));
    RLPolicy p;
    if (toks.size() != 3 || toks[0] != "log_std" || !parse_num(toks[1], p.log_std[0]) ||
        !parse_num(toks[2], p.log_std[1])) {
        throw InputError("policy file: bad log_std line");
    }
    const auto mstart = m + std::string("[mean_net]\n").size();
    p.mean_net = parse_mlp(text.substr(mstart, v - mstart));
    p.value_net = parse_mlp(text.substr(v + std::string("[value_net]\n").size()));
    if (p.mean_net.input_size() != 3 || p.mean_net.output_size() != 2 || p.value_net.input_size() != 3 ||
        p.value_net.output_size() != 1) {
        throw InputError("policy file: network shapes must be 3→2 and 3→1");
    }
    return p;
}

}  // namespace nrinit
