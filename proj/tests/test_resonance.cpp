#include "doctest.h"

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "torus/kt_basis.hpp"

using namespace torus;

namespace {
const double g = (1.0 + std::sqrt(5.0)) / 2.0;

ResonanceParams golden_params(double sigma, double kappa = 0.9) {
    RVec w(2);
    w << 1.0, g;
    return ResonanceParams{w, sigma, kappa};
}
}  // namespace

TEST_CASE("classify: zero index is always resonant") {
    CHECK(classify(MultiIndex{0, 0}, golden_params(0.2)) == ModeClass::Resonant);
    CHECK(classify(MultiIndex{0, 0, 0}, ResonanceParams{plastic_basis().omega, 0.01, 0.9}) == ModeClass::Resonant);
}

TEST_CASE("classify: golden examples at sigma = 0.2") {
    auto p = golden_params(0.2);
    // |omega.k| = 1 > 0.2 * 1
    CHECK(classify(MultiIndex{1, 0}, p) == ModeClass::FarFromResonance);
    // |13 - 8 gamma| ~ 0.0557 <= 0.2 * 21
    CHECK(std::abs(13.0 - 8.0 * g) == doctest::Approx(0.05572809).epsilon(1e-6));
    CHECK(classify(MultiIndex{13, -8}, p) == ModeClass::Resonant);
}

TEST_CASE("classify: exact ties are resonant") {
    RVec w(2);
    w << 1.0, 1.0;
    // omega.k = 2 and sigma |k|_1 = 1.0 * 2 exactly: the strict > puts ties in I^+
    ResonanceParams p{w, 1.0, 0.9};
    CHECK(classify(MultiIndex{1, 1}, p) == ModeClass::Resonant);
    CHECK(classify(MultiIndex{1, 0}, ResonanceParams{w, 0.999, 0.9}) == ModeClass::FarFromResonance);
}

TEST_CASE("classify: scale invariance over integer multiples") {
    std::mt19937_64 rng(5);
    auto p = golden_params(0.2);
    int checked = 0;
    for (int t = 0; t < 400; ++t) {
        int a = static_cast<int>(rng() % 19) - 9;
        int b = static_cast<int>(rng() % 19) - 9;
        if (a == 0 && b == 0) continue;
        MultiIndex k{a, b};
        for (int m : {2, 3, 5}) {
            CHECK(classify(k, p) == classify(k * m, p));
            ++checked;
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("project: plus/minus split reconstructs bit-exactly and is idempotent") {
    auto p = golden_params(0.2);
    FourierField f = testutil::random_field(2, 14, 14, 40, 0.9, 7);
    FourierField plus = project(f, p, ResonancePart::plus);
    FourierField minus = project(f, p, ResonancePart::minus);
    FourierField sum = plus + minus;
    REQUIRE(sum.size() == f.size());
    for (int i = 0; i < f.size(); ++i) {
        CHECK(sum.mode_index(i) == f.mode_index(i));
        auto a = sum.coeff_at(i);
        auto b = f.coeff_at(i);
        for (int q = 0; q < 2; ++q) CHECK(a[q] == b[q]);
    }
    CHECK(project(plus, p, ResonancePart::plus).size() == plus.size());
    CHECK(project(plus, p, ResonancePart::minus).empty());
    CHECK(project(minus, p, ResonancePart::minus).size() == minus.size());

    // every far-from-resonance index satisfies the strict inequality
    for (int i = 0; i < minus.size(); ++i) {
        MultiIndex k = minus.mode_index(i);
        CHECK(std::abs(k.dot(p.omega)) > p.sigma * static_cast<double>(k.norm1()));
    }
}

TEST_CASE("project: constant field is entirely resonant") {
    auto p = golden_params(0.2);
    FourierField c = FourierField::constant(p.omega, 6);
    CHECK(project(c, p, ResonancePart::plus).size() == 1);
    CHECK(project(c, p, ResonancePart::minus).empty());

    CVec v(2);
    v << cplx(1, 0), cplx(0, 0);
    FourierField m = FourierField::single_mode(MultiIndex{1, 0}, v, 6);
    CHECK(project(m, p, ResonancePart::plus).empty());
}

TEST_CASE("cone check, golden: sigma -> 0 ratio approaches 1/gamma") {
    KTBasis b = golden_basis();
    auto p = golden_params(1e-9, 0.9);
    ConeReport rep = check_cone_inclusion(b.T, p, 0, 10);
    CHECK(rep.max_ratio_directions == doctest::Approx(1.0 / g).epsilon(1e-6));
    CHECK(rep.max_ratio == doctest::Approx(1.0 / g).epsilon(1e-6));
    CHECK(rep.ok);
    CHECK(rep.modes_ok);
}

TEST_CASE("cone check, golden: sigma = |omega| swallows omega and fails") {
    KTBasis b = golden_basis();
    auto p = golden_params(1.0 + g, 0.99);
    ConeReport rep = check_cone_inclusion(b.T, p, 0, 8);
    CHECK(rep.max_ratio > 1.0);
    CHECK_FALSE(rep.ok);
    CHECK_FALSE((rep.violating_directions.empty() && rep.violating_modes.empty()));
    CHECK_THROWS_AS(require_cone(b.T, p, 0, 8), ConeViolation);
}

TEST_CASE("cone check, golden: every retained resonant index contracts at kappa = 0.95, K = 20") {
    KTBasis b = golden_basis();
    auto p = golden_params(0.2, 0.95);
    ConeReport rep = check_cone_inclusion(b.T, p, 0, 20);
    CHECK(rep.modes_ok);
    CHECK(rep.max_ratio_modes < 0.95);
    // exhaustive confirmation, independent loop
    auto win = Window::get(2, 20);
    for (long long r = 0; r < win->size(); ++r) {
        MultiIndex k = win->unrank(r);
        if (k.is_zero()) continue;
        if (classify(k, p) != ModeClass::Resonant) continue;
        MultiIndex img = apply_int_matrix(b.T_star, k);
        CHECK(static_cast<double>(img.norm1()) <= 0.95 * static_cast<double>(k.norm1()));
    }
}

TEST_CASE("cone check, plastic: direction cone cannot contract at power 1 but integer indices do") {
    KTBasis b = plastic_basis();
    ResonanceParams p{b.omega, 0.003, 0.9};
    ConeReport rep = check_cone_inclusion(b.T, p, 4000, 8);
    // (-alpha, 1, 0) direction is an exact l1 isometry of T*
    CHECK(rep.max_ratio_directions >= 0.98);
    CHECK(rep.modes_ok);
    CHECK_FALSE(rep.ok);
}

TEST_CASE("ResonanceParams validation") {
    RVec w(2);
    w << 1.0, g;
    CHECK_THROWS_AS(ResonanceParams(w, -0.1, 0.5).validate(), std::invalid_argument);
    CHECK_THROWS_AS(ResonanceParams(w, 0.2, 1.5).validate(), std::invalid_argument);
    CHECK_NOTHROW(ResonanceParams(w, 0.2, 0.5).validate());
}
