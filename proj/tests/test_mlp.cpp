#include <cmath>

#include "doctest.h"
#include "nrinit/error.hpp"
#include "nrinit/mlp.hpp"

using namespace nrinit;

namespace {

// Central-difference gradient of L = Σ w ⊙ f(x) against the analytic backward pass.
double max_grad_error(Mlp& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& w) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m.params().size());
    m.backward(m.forward_trace(x), w, g);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m.params().size(); ++i) {
        const double keep = m.params()[i];
        const double h = 1e-6 * std::max(1.0, std::abs(keep));
        m.params()[i] = keep + h;
        const double up = (m.forward(x).array() * w.array()).sum();
        m.params()[i] = keep - h;
        const double dn = (m.forward(x).array() * w.array()).sum();
        m.params()[i] = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd)));
    }
    return worst;
}

}  // namespace

TEST_CASE("mlp: single linear layer matches hand computation") {
    Mlp m({2, 1});
    m.params() << 2.0, -1.0, 0.5;  // W = [2 -1], b = 0.5
    Eigen::Vector2d x{3.0, 4.0};
    CHECK(m.forward_one(x)[0] == doctest::Approx(2.5));
    m.set_input_normalization(Eigen::Vector2d{1.0, 0.0}, Eigen::Vector2d{2.0, 4.0});
    CHECK(m.forward_one(x)[0] == doctest::Approx(2.0 - 1.0 + 0.5));
}

TEST_CASE("mlp: voltage_angle transform keeps magnitudes above the floor") {
    Mlp m({1, 2}, OutputTransform::voltage_angle);
    m.params() << 0.0, 0.0, -50.0, 0.3;
    auto y = m.forward_one(Eigen::VectorXd::Ones(1));
    CHECK(y[0] >= 0.1);
    CHECK(y[0] == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(y[1] == doctest::Approx(0.3));
    m.params() << 0.0, 0.0, 0.0, 0.0;
    CHECK(m.forward_one(Eigen::VectorXd::Ones(1))[0] == doctest::Approx(std::log(2.0) + 0.1));
}

TEST_CASE("mlp: zero parameters give zero output and zero input gradient") {
    Mlp m({3, 5, 2});
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
    CHECK(m.forward(x).isZero(0.0));
    Eigen::VectorXd g;
    auto d_in = m.backward(m.forward_trace(x), Eigen::MatrixXd::Ones(2, 4), g);
    CHECK(d_in.isZero(0.0));
    // Only the output bias receives gradient when every weight is zero.
    CHECK(g.tail(2).isApprox(Eigen::Vector2d(4.0, 4.0)));
    CHECK(g.head(g.size() - 2).isZero(0.0));
}

TEST_CASE("mlp: backward matches finite differences") {
    Rng rng(7);
    for (auto t : {OutputTransform::identity, OutputTransform::voltage_angle}) {
        Mlp m({4, 6, 5, 2}, t);
        m.init(rng);
        m.set_input_normalization(Eigen::Vector4d(0.1, -0.2, 0.3, 0.0), Eigen::Vector4d(1.5, 0.5, 2.0, 1.0));
        Eigen::MatrixXd x(4, 3), w(2, 3);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
        CHECK(max_grad_error(m, x, w) < 1e-6);
    }
}

TEST_CASE("mlp: batch columns are independent of ordering") {
    Rng rng(3);
    Mlp m({3, 8, 2}, OutputTransform::voltage_angle);
    m.init(rng);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
    Eigen::MatrixXd y = m.forward(x);
    Eigen::MatrixXd xr = x.rowwise().reverse();
    CHECK(m.forward(xr).rowwise().reverse().isApprox(y, 1e-14));
    for (int c = 0; c < 5; ++c) CHECK(m.forward_one(x.col(c)).isApprox(y.col(c), 1e-14));
}

TEST_CASE("mlp: init is seed-deterministic and output gain scales the last layer") {
    Rng a(11), b(11);
    Mlp m1({4, 3, 2}), m2({4, 3, 2});
    m1.init(a);
    m2.init(b, 0.01);
    const Eigen::Index last_w = 4 * 3 + 3;
    CHECK(m1.params().head(last_w) == m2.params().head(last_w));
    CHECK((m1.params().segment(last_w, 6) * 0.01).isApprox(m2.params().segment(last_w, 6)));
}

TEST_CASE("mlp: serialization round trip is exact") {
    Rng rng(5);
    Mlp m({8, 16, 4}, OutputTransform::voltage_angle);
    m.init(rng);
    m.set_input_normalization(Eigen::VectorXd::LinSpaced(8, -1, 1), Eigen::VectorXd::LinSpaced(8, 0.5, 3));
    const std::string text = format_mlp(m);
    const Mlp back = parse_mlp(text);
    CHECK(back == m);
    CHECK(format_mlp(back) == text);
}

TEST_CASE("mlp: model files list weights row-major") {
    Mlp m({2, 2});
    m.params() << 1, 2, 3, 4, 5, 6;  // W = [[1 3] [2 4]] in memory, b = (5, 6)
    const std::string text = format_mlp(m);
    CHECK(text.find("params 6\n1 3 2 4 5 6\n") != std::string::npos);
    Eigen::Vector2d x{1.0, 10.0};
    CHECK(parse_mlp(text).forward_one(x) == m.forward_one(x));
}

TEST_CASE("mlp: malformed model files are rejected") {
    CHECK_THROWS_AS(parse_mlp(""), InputError);
    CHECK_THROWS_AS(parse_mlp("nrinit-mlp 2\n"), InputError);
    Mlp m({2, 2});
    std::string text = format_mlp(m);
    CHECK_THROWS_AS(parse_mlp(text.substr(0, text.size() - 4)), InputError);
    CHECK_THROWS_AS(Mlp({3}), InputError);
    CHECK_THROWS_AS(Mlp({3, 3}, OutputTransform::voltage_angle), InputError);
}

TEST_CASE("adam: first step moves each parameter by the learning rate against the gradient sign") {
    Adam opt(3, 0.01);
    Eigen::Vector3d p{1.0, 2.0, 3.0};
    Eigen::VectorXd pv = p;
    opt.step(pv, Eigen::Vector3d{0.5, -2.0, 0.0});
    CHECK(pv[0] == doctest::Approx(0.99));
    CHECK(pv[1] == doctest::Approx(2.01));
    CHECK(pv[2] == 3.0);
}

TEST_CASE("adam: minimizes a convex quadratic") {
    Adam opt(2, 0.05);
    Eigen::VectorXd p = Eigen::Vector2d{3.0, -2.0};
    for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * (p - Eigen::Vector2d{0.5, 1.0}));
    CHECK(p.isApprox(Eigen::Vector2d{0.5, 1.0}, 1e-3));
}
