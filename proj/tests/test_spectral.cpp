#include "doctest.h"

#include <cmath>

#include "test_util.hpp"
#include "torus/spectral.hpp"

using namespace torus;
using testutil::golden_config;
using testutil::plastic_config;
using testutil::random_field;

namespace {
const double g = (1.0 + std::sqrt(5.0)) / 2.0;
}

TEST_CASE("build_dr_matrix: neutral direction is annihilated") {
    RenormConfig cfg = golden_config(12);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, cfg.K, cfg.rho);
    FourierField omega_f = FourierField::constant(cfg.basis.omega, cfg.K);
    FourierField image = L.apply(omega_f);
    CHECK((image.empty() ? 0.0 : norm(image, NormKind::plain(0.5))) < 1e-12);
    // and through the flattened matrix
    CVec v = L.flatten(omega_f);
    CHECK((L.matrix * v).lpNorm<1>() < 1e-12);
}

TEST_CASE("build_dr_matrix: action on omega^(2) is the eigenvalue lambda_1/lambda_2") {
    RenormConfig cfg = golden_config(12);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, cfg.K, cfg.rho);
    FourierField e2 = FourierField::constant(CVec(cfg.basis.evecs.col(1)), cfg.K, false);
    FourierField image = L.apply(e2);
    REQUIRE(image.size() == 1);
    CVec expect = -g * g * cfg.basis.evecs.col(1);
    CHECK((mean(image) - expect).lpNorm<1>() < 1e-10);
}

TEST_CASE("build_dr_matrix: far-from-resonance directions are killed") {
    RenormConfig cfg = golden_config(12);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, cfg.K, cfg.rho);
    CVec v(2);
    v << cplx(0.3, 0.4), cplx(-0.1, 0.2);
    FourierField ffr = FourierField::single_mode(MultiIndex{1, 0}, v, cfg.K);
    CHECK(L.apply(ffr).empty());
    CHECK(L.flatten(ffr).lpNorm<1>() == 0.0);  // not even representable in the resonant space
}

TEST_CASE("build_dr_matrix: finite differences of renorm_step validate the assembly") {
    RenormConfig cfg = golden_config(12);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, cfg.K, cfg.rho);
    FdValidation val = validate_dr_matrix(L, cfg, 20, 1e-7);
    CHECK(val.max_rel_err_operator < 1e-5);
    CHECK(val.max_rel_err_matrix < 1e-5);
}

TEST_CASE("eigen_spectrum golden K=15: single unstable eigenvalue -gamma^2, everything else zero") {
    RenormConfig cfg = golden_config(15, 0.2, 0.95);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, cfg.K, cfg.rho);
    std::vector<cplx> eigs = eigen_spectrum(L);
    REQUIRE(eigs.size() == 2 * L.modes.size());
    CHECK(std::abs(eigs[0] - cplx(-g * g, 0)) < 1e-8);
    int unstable = 0;
    for (const cplx& e : eigs)
        if (std::abs(e) > 1.0) ++unstable;
    CHECK(unstable == 1);
    for (size_t i = 1; i < eigs.size(); ++i) CHECK(std::abs(eigs[i]) < 1e-6);
}

TEST_CASE("eigen_spectrum golden: eigenvector of -gamma^2 is supported on k=0 along omega^(2)") {
    RenormConfig cfg = golden_config(15, 0.2, 0.95);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, cfg.K, cfg.rho);
    Eigen::ComplexEigenSolver<CMat> es(L.constant_block());
    int best = 0;
    for (int i = 1; i < 2; ++i)
        if (std::abs(es.eigenvalues()[i]) > std::abs(es.eigenvalues()[best])) best = i;
    CHECK(std::abs(es.eigenvalues()[best] - cplx(-g * g, 0)) < 1e-10);
    CVec vec = es.eigenvectors().col(best);
    CVec e2 = cfg.basis.evecs.col(1);
    // align phases and compare directions
    const cplx scale = e2[0] / vec[0];
    CHECK((vec * scale - e2).lpNorm<1>() < 1e-10);
}

TEST_CASE("eigen_spectrum plastic K=8: conjugate unstable pair of modulus lambda_1^{3/2}") {
    RenormConfig cfg = plastic_config(8);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, cfg.K, cfg.rho);
    std::vector<cplx> eigs = eigen_spectrum(L);
    int unstable = 0;
    for (const cplx& e : eigs)
        if (std::abs(e) > 1.0) ++unstable;
    CHECK(unstable == 2);
    // derived oracle: product of |lambda_j| = 1 forces |lambda_1/lambda_2| = lambda_1^{3/2}
    const double expect = std::pow(cfg.basis.lambda1(), 1.5);
    CHECK(std::abs(eigs[0]) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(std::abs(eigs[1]) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(std::abs(eigs[0] - std::conj(eigs[1])) < 1e-12);
}

TEST_CASE("nilpotency_check: K=1 window with small sigma has index 1") {
    RenormConfig cfg = golden_config(1, 0.05, 0.8);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, 1, cfg.rho);
    NilpotencyReport rep = nilpotency_check(L);
    CHECK(rep.nilpotency_index == 1);
    CHECK(rep.max_residual == 0.0);
}

TEST_CASE("nilpotency_check golden K=15: structural extinction below the chain-length bound") {
    RenormConfig cfg = golden_config(15, 0.2, 0.95);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, cfg.K, cfg.rho);
    NilpotencyReport rep = nilpotency_check(L);
    CHECK(rep.nilpotency_index >= 1);
    CHECK(rep.max_residual == 0.0);  // exact structural zero

    // chain-length bound from min |omega.k| over retained resonant indices:
    // lambda_1^n |omega.k| <= sigma K forces extinction
    double min_dot = std::numeric_limits<double>::infinity();
    for (const MultiIndex& k : L.modes)
        if (!k.is_zero()) min_dot = std::min(min_dot, std::abs(k.dot(cfg.basis.omega)));
    REQUIRE(min_dot < std::numeric_limits<double>::infinity());
    const int bound =
        static_cast<int>(std::ceil(std::log(cfg.params.sigma * cfg.K / min_dot) / std::log(cfg.basis.lambda1()))) + 1;
    CHECK(rep.nilpotency_index <= bound);

    // operator-norm ratios strictly decreasing until extinction
    REQUIRE(rep.norms.size() == static_cast<size_t>(rep.nilpotency_index) - 1);
    for (double n : rep.norms) CHECK(n > 0.0);
    std::vector<double> ratios;
    for (size_t n = 1; n < rep.norms.size(); ++n) ratios.push_back(rep.norms[n] / rep.norms[n - 1]);
    for (size_t i = 1; i < ratios.size(); ++i) CHECK(ratios[i] < ratios[i - 1]);
}

TEST_CASE("project_stable_unstable: examples and algebraic identities") {
    KTBasis b = golden_basis();
    FourierField omega_f = FourierField::constant(b.omega, 10);
    auto [s1, u1] = project_stable_unstable(omega_f, b);
    CHECK(u1.empty());

    FourierField e2 = FourierField::constant(CVec(b.evecs.col(1)), 10, false);
    auto [s2, u2] = project_stable_unstable(e2, b);
    CHECK((s2.empty() || norm(s2, NormKind::plain(0.5)) < 1e-15));
    CHECK((mean(u2) - CVec(b.evecs.col(1))).lpNorm<1>() < 1e-14);

    FourierField zero_mean = random_field(2, 10, 5, 8, 0.3, 301);
    if (zero_mean.has_mode(MultiIndex::zero(2)))
        zero_mean = zero_mean - FourierField::constant(mean(zero_mean), 10, false);
    auto [s3, u3] = project_stable_unstable(zero_mean, b);
    CHECK(u3.empty());

    // stable + unstable = f exactly; P^u idempotent
    FourierField f = random_field(2, 10, 5, 10, 0.7, 302);
    auto [st, un] = project_stable_unstable(f, b);
    CHECK(testutil::bits_equal(st + un, f));
    auto [st2, un2] = project_stable_unstable(un, b);
    CHECK((st2.empty() || norm(st2, NormKind::plain(0.5)) < 1e-15));
    CHECK(norm(un2 - un, NormKind::plain(0.5)) < 1e-15);
}

TEST_CASE("L commutes with the projection P_omega E") {
    RenormConfig cfg = golden_config(12);
    LinearizedOperator L = build_dr_matrix(cfg.basis, cfg.params, cfg.K, cfg.rho);
    const int d = cfg.basis.d;
    const int N = static_cast<int>(L.modes.size()) * d;
    // projector: k=0 block omega omega_bar^T, zero elsewhere
    CMat P = CMat::Zero(N, N);
    const int z = L.lookup(MultiIndex::zero(d));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) P(L.col(z, i), L.col(z, j)) = cfg.basis.omega[i] * cfg.basis.omega_bar[j];
    // the L matrix: DR plus the rank-one correction restored
    CMat Lmat = L.matrix;
    Eigen::MatrixXd l_block =
        cfg.basis.lambda1() * cfg.basis.T_inv.cast<double>();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) Lmat(L.col(z, i), L.col(z, j)) = l_block(i, j);
    CHECK(((P * Lmat - Lmat * P).lpNorm<1>()) < 1e-12);
}

TEST_CASE("shoot_stable: seed without unstable component returns immediately") {
    RenormConfig cfg = golden_config(8, 0.2, 0.8, EliminationConfig::LinSolve::neumann);
    cfg.elim.lambda_steps = 4;
    FourierField seed = random_field(2, 8, 2, 4, 1e-4, 303);
    auto [stable_part, unstable_part] = project_stable_unstable(seed, cfg.basis);
    FourierField X = shoot_stable(stable_part, cfg, 2);
    RVec adjust = unstable_real_coords(X, cfg.basis);
    CHECK(adjust.lpNorm<1>() < 1e-6);
}

TEST_CASE("shoot_stable: random real seed lands on the stable manifold") {
    RenormConfig cfg = golden_config(10, 0.2, 0.8, EliminationConfig::LinSolve::neumann);
    cfg.elim.lambda_steps = 4;
    FourierField seed = random_field(2, 10, 2, 4, 2e-4, 304);
    seed = seed * (1e-3 / norm(seed, NormKind::prime(cfg.rho)));
    const int n_targets = 3;
    FourierField X = shoot_stable(seed, cfg, n_targets);

    FourierField cur = X;
    for (int n = 0; n < n_targets; ++n) cur = renorm_step(cur, cfg).first;
    RVec coords = unstable_real_coords(cur, cfg.basis);
    CHECK(coords.lpNorm<1>() < 1e-9 * norm(seed, NormKind::prime(cfg.rho)));

    // subsequently the nonconstant part keeps collapsing
    double prev = nonconstant_prime_norm(cur, cfg.rho);
    for (int n = 0; n < 2; ++n) {
        cur = renorm_step(cur, cfg).first;
        const double now = nonconstant_prime_norm(cur, cfg.rho);
        if (prev > 1e-14) CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("shoot_stable: unstable-only seed is cancelled to omega") {
    RenormConfig cfg = golden_config(8, 0.2, 0.8, EliminationConfig::LinSolve::neumann);
    cfg.elim.lambda_steps = 4;
    const KTBasis& b = cfg.basis;
    FourierField seed = FourierField::constant(RVec(1e-4 * b.evecs.col(1).real()), cfg.K);
    FourierField X = shoot_stable(seed, cfg, 3);
    FourierField omega_f = FourierField::constant(b.omega, cfg.K);
    CHECK(norm(X - omega_f, NormKind::prime(cfg.rho)) < 1e-7);
}
