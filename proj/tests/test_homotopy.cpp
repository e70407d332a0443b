#include "doctest.h"

#include <cmath>

#include "test_util.hpp"
#include "torus/homotopy.hpp"

using namespace torus;
using testutil::random_field;

namespace {

const double g = (1.0 + std::sqrt(5.0)) / 2.0;

ResonanceParams golden_params(double sigma = 0.2, double kappa = 0.8) {
    RVec w(2);
    w << 1.0, g;
    return ResonanceParams{w, sigma, kappa};
}

FourierField omega_field(const ResonanceParams& p, int K) { return FourierField::constant(p.omega, K); }

/// Independent commutator form: [v, w] = Dw v - Dv w.
FourierField commutator(const FourierField& v, const FourierField& w) {
    return jacobian_apply(w, v, 0.0) - jacobian_apply(v, w, 0.0);
}

}  // namespace

TEST_CASE("f_operator: F(0) is the far-from-resonance part of f") {
    auto p = golden_params();
    FourierField f = random_field(2, 10, 6, 10, 1e-3, 101);
    FourierField u0 = FourierField::zero(2, 10);
    FourierField F0 = f_operator(u0, f, p);
    FourierField expect = project(f, p, ResonancePart::minus);
    CHECK(norm(F0 - expect, NormKind::plain(0.5)) < 1e-18);

    FourierField resonant_only = project(f, p, ResonancePart::plus);
    CHECK(f_operator(u0, resonant_only, p).empty());
}

TEST_CASE("f_operator rejects resonant u") {
    auto p = golden_params();
    CVec v(2);
    v << cplx(1e-3, 0), cplx(0, 0);
    FourierField u = FourierField::single_mode(MultiIndex{0, 0}, v, 10);
    FourierField f = random_field(2, 10, 4, 4, 1e-3, 102);
    CHECK_THROWS_AS(f_operator(u, f, p), ResonantInput);
}

TEST_CASE("df_apply: DF(0) on a single far-from-resonance mode is -2 pi i (k.omega) v") {
    auto p = golden_params();
    MultiIndex k{1, 0};
    CVec v(2);
    v << cplx(0.3, -0.1), cplx(0.2, 0.5);
    FourierField h = FourierField::single_mode(k, v, 10);
    FourierField f0 = FourierField::zero(2, 10);
    FourierField u0 = FourierField::zero(2, 10);
    FourierField out = df_apply(u0, f0, h, p);
    REQUIRE(out.size() == 1);
    const cplx factor = -cplx(0, two_pi) * k.dot(p.omega);
    CHECK((out.coeff(k) - CVec(factor * v)).lpNorm<1>() < 1e-15);
}

TEST_CASE("df_apply at u = 0 equals the commutator form I^-[h, omega + f]") {
    auto p = golden_params();
    FourierField f = random_field(2, 10, 5, 8, 1e-3, 103);
    FourierField h = project(random_field(2, 10, 5, 8, 1e-3, 104), p, ResonancePart::minus);
    FourierField u0 = FourierField::zero(2, 10);
    FourierField lhs = df_apply(u0, f, h, p);
    FourierField X = omega_field(p, 10) + f;
    FourierField rhs = project(commutator(h, X), p, ResonancePart::minus);
    CHECK(norm(lhs - rhs, NormKind::plain(0.5)) < 1e-12 * std::max(1.0, norm(rhs, NormKind::plain(0.5))));
}

TEST_CASE("df_apply is linear in h") {
    auto p = golden_params();
    FourierField f = random_field(2, 10, 4, 6, 1e-3, 105);
    FourierField u = project(random_field(2, 10, 3, 3, 1e-4, 106), p, ResonancePart::minus);
    FourierField h1 = project(random_field(2, 10, 4, 5, 1e-3, 107), p, ResonancePart::minus);
    FourierField h2 = project(random_field(2, 10, 4, 5, 1e-3, 108), p, ResonancePart::minus);
    const cplx a(1.7, -0.3), b(-0.4, 0.9);
    FourierField lhs = df_apply(u, f, h1 * a + h2 * b, p);
    FourierField rhs = df_apply(u, f, h1, p) * a + df_apply(u, f, h2, p) * b;
    const double scale = std::max(1.0, norm(rhs, NormKind::plain(0.5)));
    CHECK(norm(lhs - rhs, NormKind::plain(0.5)) < 1e-12 * scale);
}

TEST_CASE("df_apply matches finite differences of f_operator") {
    auto p = golden_params();
    FourierField f = random_field(2, 10, 4, 6, 1e-3, 109);
    FourierField u = project(random_field(2, 10, 3, 3, 1e-4, 110), p, ResonancePart::minus);
    FourierField h = project(random_field(2, 10, 4, 4, 1.0, 111), p, ResonancePart::minus);
    h = h * (1.0 / norm(h, NormKind::prime(0.5)));
    const double t = 1e-6;
    FourierField fd = (f_operator(u + h * t, f, p) - f_operator(u, f, p)) * (1.0 / t);
    FourierField exact = df_apply(u, f, h, p);
    const double rel = norm(fd - exact, NormKind::plain(0.5)) / std::max(1e-30, norm(exact, NormKind::plain(0.5)));
    CHECK(rel < 1e-5);
}

TEST_CASE("small_divisor_inverse: closed form, round trip, resonant rejection") {
    auto p = golden_params();
    CVec v(2);
    v << cplx(0.7, 0.2), cplx(-0.4, 0.1);
    FourierField gm = FourierField::single_mode(MultiIndex{1, 0}, v, 10);
    FourierField out = small_divisor_inverse(gm, p);
    // k.omega = 1 so the coefficient is v / (2 pi i)
    CHECK((out.coeff(MultiIndex{1, 0}) - CVec(v / cplx(0, two_pi))).lpNorm<1>() < 1e-16);

    FourierField gr = project(random_field(2, 10, 6, 10, 0.5, 112), p, ResonancePart::minus);
    FourierField h = small_divisor_inverse(gr, p);
    // D(result).omega reconstructs g: coefficient-wise 2 pi i (k.omega) h_k
    FourierField back = jacobian_apply(h, omega_field(p, 10), 0.0);
    CHECK(norm(back - gr, NormKind::plain(0.5)) < 1e-12 * std::max(1.0, norm(gr, NormKind::plain(0.5))));
    // and the prime-norm operator bound 2/sigma holds
    CHECK(norm(h, NormKind::prime(0.5)) <= 2.0 / p.sigma * norm(gr, NormKind::plain(0.5)) * (1 + 1e-12));

    CVec w(2);
    w << cplx(1, 0), cplx(0, 0);
    FourierField bad = FourierField::single_mode(MultiIndex{0, 0}, w, 10);
    CHECK_THROWS_AS(small_divisor_inverse(bad, p), ResonantInput);
    FourierField bad2 = FourierField::single_mode(MultiIndex{13, -8}, w, 21);
    CHECK_THROWS_AS(small_divisor_inverse(bad2, p), ResonantInput);
}

TEST_CASE("df0_solve: f = 0 reduces to -small_divisor_inverse") {
    auto p = golden_params();
    EliminationConfig cfg;
    FourierField gm = project(random_field(2, 10, 5, 8, 0.3, 113), p, ResonancePart::minus);
    FourierField f0 = FourierField::zero(2, 10);
    for (auto ls : {EliminationConfig::LinSolve::neumann, EliminationConfig::LinSolve::direct}) {
        cfg.linsolve = ls;
        FourierField h = df0_solve(gm, f0, p, cfg);
        FourierField expect = -small_divisor_inverse(gm, p);
        CHECK(norm(h - expect, NormKind::plain(0.5)) < 1e-12 * std::max(1.0, norm(expect, NormKind::plain(0.5))));
    }
}

TEST_CASE("df0_solve: neumann and direct strategies agree and both satisfy the residual") {
    auto p = golden_params();
    FourierField f = random_field(2, 10, 5, 8, 1.0, 114);
    f = f * (p.sigma / 8.0 / norm(f, NormKind::prime(0.6)));  // |f|'_rho = sigma/8
    FourierField gm = project(random_field(2, 10, 5, 8, 0.2, 115), p, ResonancePart::minus);

    EliminationConfig cn;
    cn.linsolve = EliminationConfig::LinSolve::neumann;
    EliminationConfig cd;
    cd.linsolve = EliminationConfig::LinSolve::direct;
    FourierField hn = df0_solve(gm, f, p, cn);
    FourierField hd = df0_solve(gm, f, p, cd);
    CHECK(norm(hn - hd, NormKind::plain(0.5)) < 1e-9 * std::max(1.0, norm(hd, NormKind::plain(0.5))));

    for (const FourierField& h : {hn, hd}) {
        FourierField resid = df_apply(FourierField::zero(2, 10), f, h, p) - gm;
        CHECK(norm(resid, NormKind::plain(0.5)) < 1e-10);
    }
}

TEST_CASE("eliminate: the constant field omega is a bit-exact fixed point") {
    auto p = golden_params();
    EliminationConfig cfg;
    FourierField X = omega_field(p, 10);
    EliminationResult res = eliminate(X, p, cfg);
    CHECK(res.u.empty());
    CHECK(res.residual == 0.0);
    CHECK(res.transformed.size() == X.size());
    CHECK(testutil::bits_equal(res.transformed, X));
}

TEST_CASE("eliminate: resonant-only inputs return u = 0 bit-exactly") {
    auto p = golden_params();
    EliminationConfig cfg;
    FourierField f = project(random_field(2, 10, 8, 12, 1e-3, 116), p, ResonancePart::plus);
    FourierField X = omega_field(p, 10) + f;
    EliminationResult res = eliminate(X, p, cfg);
    CHECK(res.u.empty());
    CHECK(testutil::bits_equal(res.transformed, X));
}

TEST_CASE("eliminate: single far-from-resonance mode pair at eps = 1e-4") {
    auto p = golden_params();
    EliminationConfig cfg;
    const double eps = 1e-4;
    CVec v(2);
    v << cplx(1, 0), cplx(0, 0);
    MultiIndex k{1, 0};
    FourierField X = omega_field(p, 12) + FourierField::single_mode(k, CVec(eps * v), 12) +
                     FourierField::single_mode(-k, CVec(eps * v), 12);
    X.set_real_flag(true);

    for (auto ls : {EliminationConfig::LinSolve::direct, EliminationConfig::LinSolve::neumann}) {
        cfg.linsolve = ls;
        EliminationResult res = eliminate(X, p, cfg);
        CHECK(res.residual < 1e-12);
        // u is supported on far-from-resonance modes only
        CHECK(project(res.u, p, ResonancePart::plus).empty());
        // leading coefficient matches the first-order small-divisor formula
        // u_k = f_k / (2 pi i k.omega)
        CVec expect = CVec(eps * v) / (cplx(0, two_pi) * k.dot(p.omega));
        CHECK((res.u.coeff(k) - expect).lpNorm<1>() < 1e-7 * eps);
        // Hermitian symmetry preserved
        CHECK(res.u.hermitian_defect() < 1e-13);
        CHECK(res.transformed.hermitian_defect() < 1e-13);
    }
}

TEST_CASE("eliminate: quadratic contact with the resonant projection") {
    auto p = golden_params();
    EliminationConfig cfg;
    CVec v(2);
    v << cplx(0.6, 0), cplx(-0.8, 0);
    MultiIndex k{1, 0};
    std::vector<double> eps_list{1e-3, 1e-4, 1e-5, 1e-6};
    std::vector<double> defect;
    for (double eps : eps_list) {
        FourierField X = omega_field(p, 12) + FourierField::single_mode(k, CVec(eps * v), 12) +
                         FourierField::single_mode(-k, CVec(eps * v.conjugate()), 12);
        X.set_real_flag(true);
        EliminationResult res = eliminate(X, p, cfg);
        // I^+ f is empty for a pure far-from-resonance pair
        defect.push_back(norm(res.transformed - omega_field(p, 12), NormKind::plain(0.5)));
    }
    // least-squares slope in log-log
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(eps_list.size());
    for (int i = 0; i < n; ++i) {
        const double x = std::log(eps_list[i]);
        const double y = std::log(defect[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("eliminate: homotopy residual tracks (1 - lambda) |F(0)| within 10%") {
    auto p = golden_params();
    EliminationConfig cfg;
    cfg.newton_polish = 2;
    FourierField f = random_field(2, 10, 4, 6, 2e-4, 117);
    FourierField X = omega_field(p, 10) + f;
    EliminationResult res = eliminate(X, p, cfg);
    REQUIRE(res.residual_history.size() >= static_cast<size_t>(cfg.lambda_steps) + 1);
    const double F0 = res.residual_history.front().second;
    for (int s = 0; s <= cfg.lambda_steps; ++s) {
        const auto& [lam, r] = res.residual_history[static_cast<size_t>(s)];
        CHECK(std::abs(r - (1.0 - lam) * F0) <= 0.1 * F0 + 1e-14);
    }
    // Newton polish drives the tail to the floor
    CHECK(res.residual_history.back().second < 1e-12);
}

TEST_CASE("eliminate: derivative at constant shifts is the resonant projection (second order)") {
    auto p = golden_params();
    EliminationConfig cfg;
    RVec psi_v(2);
    psi_v << 3e-3, -2e-3;
    FourierField psi = FourierField::constant(psi_v, 12);
    std::vector<double> eps_list{1e-3, 1e-4};
    std::vector<double> defect;
    for (double eps : eps_list) {
        FourierField f = random_field(2, 12, 3, 4, eps, 118);
        FourierField X = omega_field(p, 12) + psi + f;
        EliminationResult res = eliminate(X, p, cfg);
        FourierField expect = omega_field(p, 12) + psi + project(f, p, ResonancePart::plus);
        defect.push_back(norm(res.transformed - expect, NormKind::plain(0.5)) /
                         std::max(1e-30, norm(f, NormKind::plain(0.5))));
    }
    // relative defect shrinks linearly with eps => contact is second order
    CHECK(defect[1] < 0.2 * defect[0]);
}

TEST_CASE("eliminate: theorem-ball diagnostics populate without gating") {
    auto p = golden_params();
    EliminationConfig cfg;
    const double ehat = elimination_theorem_radius(p, cfg.rho, cfg.rho_prime);
    CHECK(ehat > 0);
    // a comfortable field inside the ball
    FourierField f = random_field(2, 10, 3, 3, 1e-6, 119);
    FourierField X = omega_field(p, 10) + f;
    EliminationResult res = eliminate(X, p, cfg);
    CHECK(res.theorem_radius == doctest::Approx(ehat));
    CHECK(res.inside_theorem_ball == (norm(f, NormKind::prime(0.6)) < ehat));
}

TEST_CASE("eliminate: far outside the perturbative regime raises SolverDiverged or NonConvergence") {
    auto p = golden_params();
    EliminationConfig cfg;
    cfg.max_support_growth = 64;
    FourierField f = random_field(2, 8, 4, 8, 0.8, 120);  // order-one perturbation
    FourierField X = omega_field(p, 8) + f;
    CHECK_THROWS_AS(eliminate(X, p, cfg), Error);
}
