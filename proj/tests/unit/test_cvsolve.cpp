#include "ctxval/cvsolve.hpp"
#include "ctxval/errors.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace ctxval;
using oracle::rel_err;

namespace {

Observable diag_obs(std::initializer_list<double> d) {
    const std::vector<double> v(d);
    return Observable::diagonal(v);
}

CalibrationMatrix raw(const RMatrix& F, const RVector& a) {
    CalibrationMatrix c;
    c.F = F;
    c.targets = a;
    c.basis = CMatrix::Identity(F.rows(), F.rows());
    return c;
}

MeasurementContext projective3() {
    const Validity v{0.0, 0.1};
    std::vector<GMatrixFn> ops;
    for (int k = 0; k < 3; ++k) {
        RMatrix p = RMatrix::Zero(3, 3);
        p(k, k) = 1;
        ops.push_back(GMatrixFn::constant(p, v));
    }
    return MeasurementContext(ops);
}

}  // namespace

TEST_CASE("F of the qubit detector") {
    for (double g : {0.0, 0.05, 0.1, 0.3}) {
        const auto cal = build_F(diag_obs({1, -1}), oracle::ce1_context(), g);
        CHECK((cal.F - oracle::ce1_F(g)).norm() < 1e-15);
        CHECK(cal.targets(0) == 1.0);
        CHECK(cal.targets(1) == -1.0);
        // columns sum to tr(E_j)
        const RVector colsum = cal.F.colwise().sum();
        CHECK(std::abs(colsum(2) - 2 * (0.5 - 2 * g * g)) < 1e-15);
    }
}

TEST_CASE("F of the projective context is the identity") {
    const auto cal = build_F(diag_obs({2, -1, 0.5}), projective3(), 0.0);
    CHECK((cal.F - RMatrix::Identity(3, 3)).norm() == 0.0);
    CHECK(null_space(cal.F).cols() == 0);
}

TEST_CASE("F rejects incompatible observables") {
    const CMatrix x = (CMatrix(2, 2) << 0, 1, 1, 0).finished();
    CHECK_THROWS_AS(build_F(Observable(x), oracle::ce1_context(), 0.1), IncompatibleContext);
}

TEST_CASE("F of a context that is diagonal in a rotated basis") {
    // E_j = U D_j U^dagger, A = U diag(a) U^dagger
    std::mt19937_64 rng(31);
    const CMatrix u = oracle::random_unitary(rng, 2);
    const double g = 0.1;
    std::vector<CMatrix> e;
    for (const auto& d : {RVector((RVector(2) << 0.36, 0.16).finished()), RVector((RVector(2) << 0.16, 0.36).finished()),
                          RVector((RVector(2) << 0.48, 0.48).finished())}) {
        e.push_back(u * d.cast<Complex>().asDiagonal() * u.adjoint());
    }
    const Observable a(u * RVector((RVector(2) << 1, -1).finished()).cast<Complex>().asDiagonal() * u.adjoint());
    const auto cal = build_F(a, e, g);
    const auto cv = solve_pinv(cal);
    CHECK(std::abs(cv.alphas(0) - 5) < 1e-10);
    CHECK(std::abs(cv.alphas(1) + 5) < 1e-10);
    CHECK(std::abs(cv.alphas(2)) < 1e-10);
    CHECK(reconstruction_error(a, e, cv.alphas) < 1e-9);
}

TEST_CASE("pseudoinverse contextual values of the qubit detector") {
    const auto ctx = oracle::ce1_context();
    const auto cv = solve_pinv(build_F(diag_obs({1, -1}), ctx, 0.1));
    CHECK(cv.method == SolveMethod::Pseudoinverse);
    CHECK(std::abs(cv.alphas(0) - 5) < 1e-12);
    CHECK(std::abs(cv.alphas(1) + 5) < 1e-12);
    CHECK(std::abs(cv.alphas(2)) < 1e-12);
    CHECK(cv.residual < 1e-12);

    // a = b = 1: (2/3, 2/3, 4/3) as g -> 0
    const auto small = solve_pinv(build_F(diag_obs({1, 1}), ctx, 1e-5));
    CHECK(std::abs(small.alphas(0) - 2.0 / 3) < 1e-8);
    CHECK(std::abs(small.alphas(1) - 2.0 / 3) < 1e-8);
    CHECK(std::abs(small.alphas(2) - 4.0 / 3) < 1e-8);

    const double a3 = solve_pinv(build_F(diag_obs({0.7, 0.2}), ctx, 0.1)).alphas(2);
    CHECK(rel_err(a3, 2 * 0.9 * (1 - 0.04) / 2.9248) < 1e-12);
}

TEST_CASE("pseudoinverse solutions match the closed forms") {
    const auto ctx = oracle::ce1_context();
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int t = 0; t < 20; ++t) {
        const double a = u(rng), b = u(rng);
        for (double g : {0.2, 0.1, 0.05, 0.01}) {
            const auto cv = solve_pinv(build_F(diag_obs({a, b}), ctx, g));
            const auto ref = oracle::ce1_pinv(a, b, g);
            for (int j = 0; j < 3; ++j) CHECK(rel_err(cv.alphas(j), ref[static_cast<std::size_t>(j)]) < 1e-10);
        }
    }
}

TEST_CASE("null spaces") {
    const RMatrix n1 = null_space(oracle::ce1_F(0.1));
    REQUIRE(n1.cols() == 1);
    CHECK((oracle::ce1_F(0.1) * n1).norm() < 1e-14);
    CHECK(std::abs(n1.norm() - 1.0) < 1e-14);

    const RMatrix F2 = oracle::ce2_first_order_F(0.1);
    CHECK(std::abs(F2.determinant()) < 1e-15);
    const RMatrix n2 = null_space(F2);
    REQUIRE(n2.cols() == 1);
    CHECK((F2 * n2).norm() < 1e-14);
}

TEST_CASE("pseudoinverse is the minimum-norm solution") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> u(-3, 3);
    const auto ctx = oracle::ce1_context();
    for (int t = 0; t < 20; ++t) {
        const double g = std::uniform_real_distribution<double>(0.01, 0.4)(rng);
        const auto cal = build_F(diag_obs({u(rng), u(rng)}), ctx, g);
        const auto cv = solve_pinv(cal);
        const RMatrix ns = null_space(cal.F);
        REQUIRE(ns.cols() == 1);
        CHECK(std::abs(ns.col(0).dot(cv.alphas)) < 1e-10 * (1 + cv.alphas.norm()));
        for (double s : {-1.0, -1e-3, 1e-3, 2.0}) {
            const RVector other = cv.alphas + s * ns.col(0);
            CHECK(other.squaredNorm() > cv.norm_sq());
            CHECK(std::abs(other.squaredNorm() - cv.norm_sq() - s * s) < 1e-9 * (1 + cv.norm_sq()));
        }
    }
}

TEST_CASE("pinned solutions") {
    const auto ctx = oracle::ce1_context();
    for (double g : {0.2, 0.1, 0.05}) {
        const double a = 0.8, b = -0.3;
        const auto cal = build_F(diag_obs({a, b}), ctx, g);
        const FixedComponent pin{0, 1 / (g * g)};
        const auto cv = solve_fixed(cal, std::span(&pin, 1));
        CHECK(cv.method == SolveMethod::FixedComponent);
        const auto ref = oracle::ce1_pinned(a, b, g);
        for (int j = 0; j < 3; ++j) CHECK(rel_err(cv.alphas(j), ref[static_cast<std::size_t>(j)]) < 1e-10);
        CHECK(std::abs(cv.alphas(1) - (1 / (g * g) - (a - b) / (2 * g))) < 1e-10 / (g * g));
    }
    // a = b = 1
    const double g = 0.1;
    const FixedComponent pin{0, 1 / (g * g)};
    const auto cv = solve_fixed(build_F(diag_obs({1, 1}), ctx, g), std::span(&pin, 1));
    CHECK(rel_err(cv.alphas(1), 1 / (g * g)) < 1e-12);
    CHECK(rel_err(cv.alphas(2), (2 * g * g + 1) / (g * g * (4 * g * g - 1))) < 1e-12);

    // pinning to the pseudoinverse's own component reproduces it
    const auto cal = build_F(diag_obs({1, -1}), ctx, 0.1);
    const auto p = solve_pinv(cal);
    const FixedComponent own{2, p.alphas(2)};
    const auto f = solve_fixed(cal, std::span(&own, 1));
    CHECK((f.alphas - p.alphas).norm() < 1e-12);
}

TEST_CASE("inconsistent pins are rejected with the residual") {
    // projective F = 1: pinning alpha_1 away from a_1 leaves no exact solution
    const auto cal = build_F(diag_obs({2, -1, 0.5}), projective3(), 0.0);
    const FixedComponent pin{0, 3.0};
    try {
        (void)solve_fixed(cal, std::span(&pin, 1));
        FAIL("expected InconsistentSystem");
    } catch (const InconsistentSystem& e) {
        CHECK(e.residual() == doctest::Approx(1.0));
    }
    const FixedComponent bad{7, 1.0};
    CHECK_THROWS(solve_fixed(cal, std::span(&bad, 1)));
}

TEST_CASE("exact inverse") {
    const auto cal = build_F(diag_obs({2, -1, 0.5}), projective3(), 0.0);
    const auto cv = solve_exact(cal);
    CHECK(cv.alphas(0) == 2.0);
    CHECK(cv.alphas(2) == 0.5);
    CHECK_THROWS_AS(solve_exact(build_F(diag_obs({1, -1}), oracle::ce1_context(), 0.1)), InconsistentSystem);
    CHECK_THROWS_AS(solve_exact(raw(oracle::ce2_first_order_F(0.1), RVector::Unit(3, 0))), InconsistentSystem);

    // the qutrit detector at finite g is invertible
    const auto exact = solve_exact(build_F(diag_obs({1, 0, 0}), oracle::ce2_context(), 0.1));
    const auto ref = oracle::ce2_exact(0.1);
    for (int j = 0; j < 3; ++j) CHECK(rel_err(exact.alphas(j), ref[static_cast<std::size_t>(j)]) < 1e-10);
    CHECK(std::abs(ref[0] - 20.0 / 3) < 1e-12);
    CHECK(std::abs(ref[2] + 280.0 / 3) < 1e-12);
}

TEST_CASE("exact solves certify the operator identity") {
    std::mt19937_64 rng(34);
    std::uniform_real_distribution<double> u(-3, 3);
    const auto ctx = oracle::ce1_context();
    for (int t = 0; t < 20; ++t) {
        const double g = std::uniform_real_distribution<double>(0.01, 0.4)(rng);
        const Observable obs = diag_obs({u(rng), u(rng)});
        const auto cal = build_F(obs, ctx, g);
        const auto cv = solve_pinv(cal);
        REQUIRE(satisfies_identity(cal, cv.alphas, cv.residual));
        CHECK(reconstruction_error(obs, povm_at(ctx, g), cv.alphas) < 1e-9);
    }
}

TEST_CASE("prescriptions with g-dependent pins") {
    const auto ctx = oracle::ce1_context();
    Prescription p;
    p.method = SolveMethod::FixedComponent;
    p.pins.push_back({0, GExpr::parse("g^-2")});
    const double g = 0.05;
    const auto cv = solve(build_F(diag_obs({1, -1}), ctx, g), p);
    const auto ref = oracle::ce1_pinned(1, -1, g);
    for (int j = 0; j < 3; ++j) CHECK(rel_err(cv.alphas(j), ref[static_cast<std::size_t>(j)]) < 1e-10);
}

TEST_CASE("variance bound") {
    const ContextualValues cv{(RVector(3) << 5, -5, 0).finished(), SolveMethod::Pseudoinverse, 0.0, 0.1};
    CHECK(variance_bound(cv).norm_sq == 50.0);

    // sum_j alpha_j^2 P(j) <= ||alpha||^2 for random states
    const auto ctx = oracle::ce1_context();
    std::mt19937_64 rng(35);
    for (int t = 0; t < 50; ++t) {
        const State rho(oracle::random_density(rng, 2));
        const auto p = outcome_probs(ctx, 0.1, rho);
        double s = 0.0;
        for (int j = 0; j < 3; ++j) s += cv.alphas(j) * cv.alphas(j) * p[static_cast<std::size_t>(j)];
        CHECK(s <= cv.norm_sq());
    }
}

TEST_CASE("variance series of the qubit detector") {
    const auto ctx = oracle::ce1_context();
    const double a = 1.0, b = -0.5;
    const Observable obs = diag_obs({a, b});
    const LaurentGrid grid{1e-3, 1e-2, 31};

    const auto pinv = variance_series([&](double g) { return solve_pinv(build_F(obs, ctx, g)); }, grid);
    REQUIRE(pinv.leading_series.size() >= 2);
    CHECK(pinv.leading_series[0].power == -2);
    CHECK(rel_err(pinv.leading_series[0].coeff, (a - b) * (a - b) / 8) < 1e-2);
    const auto c0 = std::find_if(pinv.leading_series.begin(), pinv.leading_series.end(),
                                 [](const SeriesTerm& s) { return s.power == 0; });
    REQUIRE(c0 != pinv.leading_series.end());
    CHECK(rel_err(c0->coeff, 2.0 / 3 * (a + b) * (a + b)) < 1e-2);

    const auto pinned = variance_series(
        [&](double g) {
            const FixedComponent pin{0, 1 / (g * g)};
            return solve_fixed(build_F(obs, ctx, g), std::span(&pin, 1));
        },
        grid);
    REQUIRE(pinned.leading_series.size() >= 2);
    CHECK(pinned.leading_series[0].power == -4);
    CHECK(rel_err(pinned.leading_series[0].coeff, 3.0) < 1e-2);
    CHECK(pinned.leading_series[1].power == -3);
    CHECK(rel_err(pinned.leading_series[1].coeff, -1.5 * (a - b)) < 1e-2);

    // a = b = 1: bound tends to 8/3
    const Observable id = diag_obs({1, 1});
    const auto flat = variance_series([&](double g) { return solve_pinv(build_F(id, ctx, g)); }, grid);
    REQUIRE(!flat.leading_series.empty());
    CHECK(flat.leading_series[0].power == 0);
    CHECK(rel_err(flat.leading_series[0].coeff, 8.0 / 3) < 1e-6);
}

TEST_CASE("laurent_fit and pole_order on known functions") {
    const LaurentGrid grid{1e-3, 1e-2, 31};
    const auto c = laurent_fit([](double g) { return 2 / (g * g) - 3 / g + 5 + 7 * g; }, grid, -2, 2);
    REQUIRE(c.size() == 5);
    CHECK(rel_err(c[0], 2) < 1e-8);
    CHECK(rel_err(c[1], -3) < 1e-6);
    CHECK(rel_err(c[2], 5) < 1e-4);
    const auto po = pole_order([](double g) { return 4 / (g * g * g) + 1; }, grid);
    CHECK(po.order == 3);
    CHECK(std::abs(po.raw_slope + 3) < 1e-3);
    CHECK(pole_order([](double) { return 0.0; }, grid, 1e-300).order == 0);
    CHECK(pole_order([](double g) { return 1 + g; }, grid).order == 0);
}

TEST_CASE("pole order of pseudoinverse values stays within the minimal order") {
    const auto ctx = oracle::ce1_context();
    const Observable obs = diag_obs({1, -0.4});
    const auto oa = order_analysis(obs, ctx);
    REQUIRE(oa.solvable_at_order_n);
    const LaurentGrid grid{1e-4, 1e-2, 41};
    for (int j = 0; j < 3; ++j) {
        const auto po = pole_order([&](double g) { return solve_pinv(build_F(obs, ctx, g)).alphas(j); }, grid);
        CHECK(po.order <= oa.n);
    }
}

TEST_CASE("order analysis of the qubit detector") {
    const auto ctx = oracle::ce1_context();
    std::mt19937_64 rng(36);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int t = 0; t < 5; ++t) {
        const auto oa = order_analysis(diag_obs({u(rng), u(rng)}), ctx);
        CHECK(oa.n == 1);
        CHECK(oa.solvable_at_order_n);
        CHECK(std::abs(oa.p(0) - 0.25) < 1e-9);
        CHECK(std::abs(oa.p(2) - 0.5) < 1e-9);
        CHECK(oa.p_sum_defect < 1e-9);
        CHECK(oa.coeff_sum_defect < 1e-8);
    }
}

TEST_CASE("order analysis of the qutrit detector") {
    const auto oa = order_analysis(diag_obs({1, 0, 0}), oracle::ce2_context());
    CHECK(oa.n == 1);
    CHECK_FALSE(oa.solvable_at_order_n);
    CHECK(std::abs(oa.p(0) - 0.5) < 1e-9);
    CHECK(std::abs(oa.p(1) - 1.0 / 3) < 1e-9);
    CHECK(std::abs(oa.p(2) - 1.0 / 6) < 1e-9);
    CHECK((oa.F_truncated - oracle::ce2_first_order_F(oa.g_ref)).norm() < 1e-7);
    REQUIRE(oa.reconstructed.size() == 3);
    CHECK(std::abs(oa.reconstructed(0) - 0.5) < 1e-7);
    CHECK(std::abs(oa.reconstructed(1)) < 1e-7);
    CHECK(std::abs(oa.reconstructed(2) - 0.5) < 1e-7);
    CHECK(oa.residual_at_order_n == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));

    // truncated-system pseudoinverse values at g = 0.1
    const auto cv = solve_pinv(raw(oracle::ce2_first_order_F(0.1), RVector::Unit(3, 0)));
    CHECK(std::abs(cv.alphas(0) - 230.0 / 99) < 1e-10);
    CHECK(std::abs(cv.alphas(1) + 265.0 / 99) < 1e-10);
    CHECK(std::abs(cv.alphas(2) + 5.0 / 198) < 1e-10);
}

TEST_CASE("order analysis of a g-independent context") {
    CHECK_THROWS_AS(order_analysis(diag_obs({2, -1, 0.5}), projective3()), GIndependentContext);
}
