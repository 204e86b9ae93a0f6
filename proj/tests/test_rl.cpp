#include <cmath>
#include <map>

#include "doctest.h"
#include "nrinit/error.hpp"
#include "nrinit/rl.hpp"

using namespace nrinit;

namespace {

// Independent residual oracle: S2 = V2 · conj(Σ_k Y_2k V_k).
double residual_norm_oracle(double v, double theta_deg) {
    const Complex y{100.0, 10.0};
    const Complex v1{1.0, 0.0};
    const Complex v2 = std::polar(v, deg_to_rad(theta_deg));
    const Complex s2 = v2 * std::conj(-y * v1 + y * v2);
    return std::abs(s2 - Complex{-0.9, -0.6});
}

const EnvConfig& env() {
    static const EnvConfig e;
    return e;
}

StateVector solution() {
    const auto& c = env().grid;
    return nr_solve(c, c.flat_start()).solution;
}

}  // namespace

TEST_CASE("env: half-open clipping is idempotent and stays in range") {
    CHECK(clip_half_open(0.5, 0.5, 2.0) > 0.5);
    CHECK(clip_half_open(3.0, 0.5, 2.0) == 2.0);
    CHECK(clip_half_open(1.2, 0.5, 2.0) == 1.2);
    for (double x : {-5.0, 0.5, 0.7, 2.0, 9.0}) {
        const double c = clip_half_open(x, 0.5, 2.0);
        CHECK(clip_half_open(c, 0.5, 2.0) == c);
    }
}

TEST_CASE("env: resets are seed-deterministic and satisfy the ranges") {
    Rng a(3), b(3);
    const auto s1 = env_reset(env(), a);
    const auto s2 = env_reset(env(), b);
    CHECK(s1.v == s2.v);
    CHECK(s1.theta_deg == s2.theta_deg);
    CHECK(s1.k == s2.k);
    Rng rng(4);
    for (int i = 0; i < 10000; ++i) {
        const double v = rng.uniform_left_open(kRlVMin, kRlVMax);
        const double th = rng.uniform_left_open(kRlThetaMin, kRlThetaMax);
        REQUIRE(v > kRlVMin);
        REQUIRE(v <= kRlVMax);
        REQUIRE(th > kRlThetaMin);
        REQUIRE(th <= kRlThetaMax);
    }
    for (int i = 0; i < 300; ++i) {
        const auto s = env_reset(env(), rng);
        REQUIRE(s.k >= 0);
        REQUIRE(s.k <= 50);
    }
}

TEST_CASE("env: forced reset at the NR solution has k = 0") {
    const auto x = solution();
    const auto s = env_state_at(env(), x.v[0], rad_to_deg(x.theta[0]));
    CHECK(s.k == 0);
    const auto step = env_step(s, RLAction{0.0, 0.0}, 1, env());
    CHECK(step.done);
    CHECK(step.at_target);
    CHECK(step.reward <= 0.0);
    CHECK(step.reward >= -2e-8 * std::sqrt(2.0));
}

TEST_CASE("env: reward equals the negated residual norm at the post-action state") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const auto s = env_reset(env(), rng);
        const RLAction a{rng.uniform(-0.6, 0.6), rng.uniform(-60, 60)};
        const auto r = env_step(s, a, 1, env());
        CHECK(r.reward <= 0.0);
        CHECK(r.reward == doctest::Approx(-residual_norm_oracle(r.next.v, r.next.theta_deg)).epsilon(1e-10));
        CHECK(std::abs(r.next.v - s.v) <= kRlDvMax + 1e-12);
        CHECK(r.done == (r.next.k <= 3));
        CHECK(r.next.k == nr_steps_from(env(), r.next.v, r.next.theta_deg));
    }
}

TEST_CASE("env: episodes never exceed the horizon") {
    Rng rng(6);
    for (int ep = 0; ep < 20; ++ep) {
        auto s = env_reset(env(), rng);
        int t = 0;
        bool done = false;
        double ret = 0.0, worst = 0.0;
        while (!done) {
            ++t;
            // Push away from the solution so episodes tend to run the full horizon.
            const auto r = env_step(s, RLAction{0.5, 50.0}, t, env());
            ret += std::pow(0.99, t - 1) * r.reward;
            worst = std::max(worst, -r.reward);
            done = r.done;
            s = r.next;
        }
        CHECK(t <= 10);
        CHECK(ret >= -10 * worst - 1e-9);
    }
}

TEST_CASE("env: invalid configuration") {
    EnvConfig e;
    e.target_k = 50;
    CHECK_THROWS_AS(e.validate(), InputError);
    e = EnvConfig{};
    e.horizon = 0;
    CHECK_THROWS_AS(e.validate(), InputError);
}

TEST_CASE("policy: squashed actions respect bounds and zero spread gives the squashed mean") {
    Rng rng(7);
    RLPolicy p = make_policy({8}, 0.0, rng);
    p.mean_net.params() *= 300.0;  // saturate the squash
    for (int i = 0; i < 500; ++i) {
        RLState s{rng.uniform(0.6, 2.0), rng.uniform(-89, 90), static_cast<int>(rng.index(51))};
        const auto a = policy_sample(p, s, rng).action;
        REQUIRE(a.dv > -0.5);
        REQUIRE(a.dv <= 0.5);
        REQUIRE(a.dtheta_deg > -50.0);
        REQUIRE(a.dtheta_deg <= 50.0);
    }
    Rng r2(8);
    RLPolicy q = make_policy({8}, -40.0, r2);
    const RLState s{1.3, 20.0, 12};
    const auto sample = policy_sample(q, s, r2);
    const auto mean = policy_mean_action(q, s);
    CHECK(sample.action.dv == doctest::Approx(mean.dv).epsilon(1e-12));
    CHECK(sample.action.dtheta_deg == doctest::Approx(mean.dtheta_deg).epsilon(1e-12));
}

TEST_CASE("policy: sample mean converges to the squashed-Gaussian mean") {
    Rng rng(9);
    RLPolicy p = make_policy({4}, std::log(0.3), rng);
    const RLState s{1.5, 40.0, 20};
    const Eigen::Vector2d mu = p.mean_net.forward_one(policy_input(s));
    // Reference mean of 0.5·tanh(u) by Gauss-Hermite-free quadrature on a fine grid.
    double ref = 0.0, wsum = 0.0;
    for (int i = -4000; i <= 4000; ++i) {
        const double z = i * 0.002;
        const double w = std::exp(-0.5 * z * z);
        ref += w * 0.5 * std::tanh(mu[0] + 0.3 * z);
        wsum += w;
    }
    ref /= wsum;
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = policy_sample(p, s, rng).action.dv;
        sum += a;
        sq += a * a;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean - ref) < 3 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("policy: log-density matches a histogram on a 1-D slice") {
    // Fix dθ's pre-squash coordinate and histogram dv; the marginal density of
    // dv is exp(log_prob) integrated over the other dimension, which for a
    // product density is the 1-D factor.
    const double mu = 0.4, sigma = 0.5;
    Rng rng(10);
    const int n = 400000, bins = 40;
    std::vector<int> hist(bins, 0);
    for (int i = 0; i < n; ++i) {
        const double a = 0.5 * std::tanh(mu + sigma * rng.normal());
        hist[std::min(bins - 1, static_cast<int>((a + 0.5) / (1.0 / bins)))]++;
    }
    for (int b = 5; b < bins - 5; ++b) {
        const double a = -0.5 + (b + 0.5) / bins;
        const double u = std::atanh(2.0 * a);
        // Same formula as the library, restricted to one dimension.
        const Eigen::Vector2d uu{u, 0.0}, mm{mu, 0.0}, ls{std::log(sigma), 0.0};
        const double lp2 = gaussian_log_prob(uu, mm, ls) - squash_log_det(uu);
        const double lp_other = gaussian_log_prob({0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}) / 2.0 * 1.0;
        // Remove the θ factor: N(0;0,1) and the squash derivative 50 at u = 0.
        const double density = std::exp(lp2 - lp_other + std::log(50.0));
        const double empirical = hist[b] / (n * (1.0 / bins));
        CAPTURE(a);
        CHECK(density == doctest::Approx(empirical).epsilon(0.05));
    }
}

TEST_CASE("ppo: surrogate with an unbounded clip range is the plain ratio objective") {
    Eigen::VectorXd r(5), a(5);
    r << 0.5, 0.9, 1.0, 1.3, 2.5;
    a << 1.0, -2.0, 0.5, -1.0, 3.0;
    const auto s = clipped_surrogate(r, a, 1e300);
    CHECK(s.objective == doctest::Approx((r.array() * a.array()).mean()));
    for (int i = 0; i < 5; ++i) CHECK(s.d_log_ratio[i] == doctest::Approx(r[i] * a[i] / 5));
    const auto c = clipped_surrogate(r, a, 0.2);
    // Positive advantage with r = 2.5 is clipped; negative advantage with r = 0.9 is not.
    CHECK(c.d_log_ratio[4] == 0.0);
    CHECK(c.d_log_ratio[1] != 0.0);
    CHECK(c.objective == doctest::Approx((0.5 * 1 + 0.9 * -2 + 0.5 + 1.3 * -1 + 1.2 * 3) / 5));
}

TEST_CASE("ppo: advantage estimation against a hand recursion") {
    Eigen::VectorXd r(4), v(4), nv(4);
    r << -1, -2, -3, -4;
    v << 0.5, 0.2, -0.1, 0.3;
    nv << 0.2, -0.1, 7.0, 0.9;
    const std::vector<bool> term{false, false, true, false};
    const std::vector<bool> end{false, false, true, true};
    const double g = 0.9, l = 0.8;
    const auto adv = gae(r, v, nv, term, end, g, l);
    const double d3 = -4 + g * 0.9 - 0.3;
    const double d2 = -3 - (-0.1);
    const double d1 = -2 + g * -0.1 - 0.2;
    const double d0 = -1 + g * 0.2 - 0.5;
    CHECK(adv[3] == doctest::Approx(d3));
    CHECK(adv[2] == doctest::Approx(d2));
    CHECK(adv[1] == doctest::Approx(d1 + g * l * d2));
    CHECK(adv[0] == doctest::Approx(d0 + g * l * (d1 + g * l * d2)));
    // λ = 1 with no bootstrap is the discounted return minus the baseline.
    Eigen::VectorXd chained(4);
    chained << 0.2, -0.1, 0.3, 0.0;
    const auto mc = gae(r, v, chained, {false, false, false, true}, {false, false, false, true}, 1.0, 1.0);
    CHECK(mc[0] == doctest::Approx(-10 - 0.5));
}

TEST_CASE("ppo: short training is deterministic and logs every update") {
    PPOConfig pc;
    pc.total_timesteps = 600;
    pc.rollout_steps = 256;
    pc.hidden = {16};
    const auto a = train_ppo(env(), pc);
    const auto b = train_ppo(env(), pc);
    REQUIRE(a.log.size() == 3);
    CHECK(a.log.back().timesteps == 600);
    CHECK(format_ppo_log_csv(a.log) == format_ppo_log_csv(b.log));
    CHECK(a.policy == b.policy);
    for (const auto& l : a.log) {
        CHECK(l.mean_ep_len <= 10.0);
        CHECK(l.mean_return <= 0.0);
    }
    pc.clip_range = 0.0;
    CHECK_THROWS_AS(train_ppo(env(), pc), InputError);
    pc.clip_range = 0.2;
    pc.learning_rate = 1e300;
    pc.max_grad_norm = 0.0;
    pc.reward_scale = 1e300;
    CHECK_THROWS_AS(train_ppo(env(), pc), NumericError);
}

TEST_CASE("eval: starts already in the target region take zero steps; reruns are identical") {
    Rng rng(11);
    const RLPolicy p = make_policy({8}, 0.0, rng);
    const auto x = solution();
    const auto tr = rollout_trace(p, env(), x.v[0], rad_to_deg(x.theta[0]));
    CHECK(tr.size() == 1);
    const auto m1 = eval_policy(p, env(), half_open_grid(0.5, 2.0, 6), half_open_grid(-90, 90, 6));
    const auto m2 = eval_policy(p, env(), half_open_grid(0.5, 2.0, 6), half_open_grid(-90, 90, 6));
    CHECK(m1.to_csv() == m2.to_csv());
    for (std::size_t i = 0; i < m1.steps.size(); ++i) {
        if (m1.k0[i] <= 3) CHECK(m1.steps[i] == 0);
        CHECK(m1.steps[i] <= 11);
    }
    CHECK(m1.to_csv().rfind("v0,theta0_deg,steps_to_target\n", 0) == 0);
    const auto g = half_open_grid(-90, 90, 20);
    CHECK(g.front() == doctest::Approx(-81.0));
    CHECK(g.back() == 90.0);
}

TEST_CASE("eval: trace rows follow the environment") {
    Rng rng(12);
    const RLPolicy p = make_policy({8}, 0.0, rng);
    const auto tr = rollout_trace(p, env(), 1.9, 80.0);
    REQUIRE(tr.size() >= 2);
    CHECK(tr.size() <= 11);
    for (std::size_t i = 1; i < tr.size(); ++i) {
        CHECK(tr[i].t == static_cast<int>(i));
        CHECK(tr[i].reward == doctest::Approx(-residual_norm_oracle(tr[i].v, tr[i].theta_deg)).epsilon(1e-10));
    }
    CHECK(format_trace_csv(tr).rfind("t,v,theta_deg,k,reward\n0,", 0) == 0);
}

TEST_CASE("policy: serialization round trip") {
    Rng rng(13);
    const RLPolicy p = make_policy({5, 4}, -0.3, rng);
    const auto text = format_policy(p);
    CHECK(parse_policy(text) == p);
    CHECK_THROWS_AS(parse_policy("nope"), InputError);
    CHECK_THROWS_AS(parse_policy("nrinit-rl-policy 1\nlog_std 0 0\n"), InputError);
}
