#include "torus/spectral.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <random>
#include <sstream>

namespace torus {

namespace {

double mode_weight(const MultiIndex& k, double rho) {
    const double n1 = static_cast<double>(k.norm1());
    return (1.0 + two_pi * n1) * std::exp(rho * n1);
}

/// Weighted l1 -> l1 operator norm matching the prime norm on fields:
/// max over columns of sum_rows w_row |M_rc| / w_col.
double weighted_opnorm(const CMat& M, const LinearizedOperator& L) {
    const int d = L.basis.d;
    double best = 0;
    for (int c = 0; c < M.cols(); ++c) {
        const double wc = mode_weight(L.modes[static_cast<size_t>(c / d)], L.rho);
        double s = 0;
        for (int r = 0; r < M.rows(); ++r) {
            const double a = std::abs(M(r, c));
            if (a == 0) continue;
            s += mode_weight(L.modes[static_cast<size_t>(r / d)], L.rho) * a;
        }
        best = std::max(best, s / wc);
    }
    return best;
}

}  // namespace

CVec LinearizedOperator::flatten(const FourierField& f) const {
    CVec v = CVec::Zero(static_cast<Eigen::Index>(modes.size()) * basis.d);
    for (int i = 0; i < f.size(); ++i) {
        int mi = lookup(f.mode_index(i));
        if (mi < 0) continue;
        auto c = f.coeff_at(i);
        for (int q = 0; q < basis.d; ++q) v[col(mi, q)] = c[q];
    }
    return v;
}

FourierField LinearizedOperator::unflatten(const CVec& v, bool real_flag) const {
    FieldBuilder fb(basis.d, basis.d, K);
    CVec c(basis.d);
    for (size_t m = 0; m < modes.size(); ++m) {
        bool nz = false;
        for (int q = 0; q < basis.d; ++q) {
            c[q] = v[col(static_cast<int>(m), q)];
            if (c[q] != cplx(0, 0)) nz = true;
        }
        if (nz) fb.add(modes[m], c);
    }
    return fb.build(real_flag);
}

FourierField LinearizedOperator::apply(const FourierField& f) const {
    FourierField plus = project(f, params, ResonancePart::plus);
    FourierField Lf = pullback_T(plus, basis, nullptr, nullptr, /*strict_window=*/true) * cplx(basis.lambda1(), 0.0);
    CVec m = mean(Lf);
    cplx corr(0, 0);
    for (int i = 0; i < basis.d; ++i) corr += basis.omega_bar[i] * m[i];
    return Lf - FourierField::constant(CVec(corr * basis.omega.cast<cplx>()), f.trunc_radius(), false);
}

CMat LinearizedOperator::constant_block() const {
    const int d = basis.d;
    CMat block = CMat::Zero(d, d);
    int zero_idx = lookup(MultiIndex::zero(d));
    assert(zero_idx >= 0);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) block(i, j) = matrix(col(zero_idx, i), col(zero_idx, j));
    return block;
}

LinearizedOperator build_dr_matrix(const KTBasis& b, const ResonanceParams& p, int K, double rho) {
    LinearizedOperator L;
    L.basis = b;
    L.params = p;
    L.K = K;
    L.rho = rho;

    auto win = Window::get(b.d, K);
    for (long long r = 0; r < win->size(); ++r) {
        MultiIndex k = win->unrank(r);
        const double dot = std::abs(k.dot(p.omega));
        if (dot > p.sigma * static_cast<double>(k.norm1())) continue;  // far from resonance
        L.index_of.emplace(k, static_cast<int>(L.modes.size()));
        L.modes.push_back(std::move(k));
    }

    const int d = b.d;
    const int N = static_cast<int>(L.modes.size()) * d;
    L.matrix = CMat::Zero(N, N);
    const Eigen::MatrixXd Tinv = b.T_inv.cast<double>();
    const double l1 = b.lambda1();

    for (size_t m = 0; m < L.modes.size(); ++m) {
        const MultiIndex& k = L.modes[m];
        if (k.is_zero()) {
            // lambda_1 (I - omega omega_bar^T) T^{-1}
            Eigen::MatrixXd block =
                l1 * (Eigen::MatrixXd::Identity(d, d) - b.omega * b.omega_bar.transpose()) * Tinv;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) L.matrix(L.col(static_cast<int>(m), i), L.col(static_cast<int>(m), j)) = block(i, j);
            continue;
        }
        MultiIndex img = apply_int_matrix(b.T_star, k);
        if (img.norm1() > K) {
            std::ostringstream os;
            os << "build_dr_matrix: image of resonant mode leaves the window (|k| = " << k.norm1()
               << ", |T*k| = " << img.norm1() << "); cone check required";
            throw WindowOverflow(os.str());
        }
        const int row_mode = L.lookup(img);
        if (row_mode < 0) continue;  // image is far from resonance: next application kills it
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                L.matrix(L.col(row_mode, i), L.col(static_cast<int>(m), j)) = l1 * Tinv(i, j);
    }
    return L;
}

std::vector<cplx> eigen_spectrum(const LinearizedOperator& L) {
    NilpotencyReport nil = nilpotency_check(L);  // proves the nonconstant spectrum is exactly zero
    (void)nil;

    Eigen::ComplexEigenSolver<CMat> es(L.constant_block());
    if (es.info() != Eigen::Success) throw Error("eigen_spectrum: dense eigensolver failed on the constant block");
    std::vector<cplx> eigs(es.eigenvalues().data(), es.eigenvalues().data() + L.basis.d);

    const size_t total = L.modes.size() * static_cast<size_t>(L.basis.d);
    eigs.resize(total, cplx(0, 0));
    std::sort(eigs.begin(), eigs.end(), [](const cplx& a, const cplx& b) {
        if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    });
    return eigs;
}

NilpotencyReport nilpotency_check(const LinearizedOperator& L) {
    NilpotencyReport rep;
    const int d = L.basis.d;

    // chain length: c(k) = 1 if T*k leaves the resonant window, else 1 + c(T*k)
    std::map<MultiIndex, int> memo;
    std::function<int(const MultiIndex&)> chain = [&](const MultiIndex& k) -> int {
        auto it = memo.find(k);
        if (it != memo.end()) return it->second;
        MultiIndex img = apply_int_matrix(L.basis.T_star, k);
        int c = 1;
        if (img.norm1() <= L.K && L.lookup(img) >= 0) c = 1 + chain(img);
        if (c > static_cast<int>(L.modes.size()) + 1)
            throw Error("nilpotency_check: chain does not terminate (cone condition violated)");
        memo.emplace(k, c);
        return c;
    };

    int index = 1;
    for (const MultiIndex& k : L.modes) {
        if (k.is_zero()) continue;
        index = std::max(index, chain(k));
    }
    rep.nilpotency_index = index;

    // numerical confirmation: powers of the nonconstant block vanish exactly
    // at the structural index, with the norm sequence recorded up to the last
    // nonzero power
    CMat M = L.matrix;
    const int zero_idx = L.lookup(MultiIndex::zero(d));
    if (zero_idx >= 0) {
        for (int i = 0; i < d; ++i) {
            M.row(L.col(zero_idx, i)).setZero();
            M.col(L.col(zero_idx, i)).setZero();
        }
    }
    CMat P = M;
    for (int n = 1; n < index; ++n) {
        rep.norms.push_back(weighted_opnorm(P, L));
        P = (P * M).eval();
    }
    rep.max_residual = weighted_opnorm(P, L);  // |M^index|, an exact structural zero
    return rep;
}

std::pair<FourierField, FourierField> project_stable_unstable(const FourierField& f, const KTBasis& b) {
    CVec m = mean(f);
    cplx a(0, 0);
    for (int i = 0; i < b.d; ++i) a += b.omega_bar[i] * m[i];
    CVec pu = m - a * b.omega.cast<cplx>();
    FourierField unstable = FourierField::constant(pu, f.trunc_radius(), f.real_flag());
    FourierField stable = f - unstable;
    stable.set_real_flag(f.real_flag());
    return {std::move(stable), std::move(unstable)};
}

Eigen::MatrixXd unstable_real_basis(const KTBasis& b) {
    Eigen::MatrixXd B(b.d, b.d - 1);
    int c = 0;
    for (int j = 1; j < b.d; ++j) {
        if (std::abs(b.lambda[j].imag()) < 1e-12) {
            B.col(c++) = b.evecs.col(j).real();
        } else if (b.lambda[j].imag() > 0) {
            B.col(c++) = b.evecs.col(j).real();
            B.col(c++) = b.evecs.col(j).imag();
        }
    }
    assert(c == b.d - 1);
    return B;
}

RVec unstable_real_coords(const FourierField& f, const KTBasis& b) {
    auto [stable, unstable] = project_stable_unstable(f, b);
    CVec m = mean(unstable);
    if (m.imag().lpNorm<1>() > 1e-9 * (1.0 + m.real().lpNorm<1>()))
        warn("unstable_real_coords: discarding imaginary part of the unstable component");
    Eigen::MatrixXd B = unstable_real_basis(b);
    return B.colPivHouseholderQr().solve(m.real());
}

FourierField shoot_stable(const FourierField& f_seed, const RenormConfig& cfg, int n_targets) {
    cfg.validate();
    const KTBasis& b = cfg.basis;
    const int d = b.d;
    const int K = f_seed.trunc_radius();
    const double seed_norm = f_seed.empty() ? 0.0 : norm(f_seed, NormKind::prime(cfg.rho));
    const double target = 1e-9 * std::max(seed_norm, 1e-12);

    const FourierField omega_f = FourierField::constant(b.omega, K);
    const Eigen::MatrixXd B = unstable_real_basis(b);

    auto make_candidate = [&](const RVec& c) {
        RVec cur = unstable_real_coords(f_seed, b);
        RVec shift = B * (c - cur);
        FourierField extra = FourierField::constant(shift, K);
        FourierField X = omega_f + f_seed + extra;
        X.set_real_flag(f_seed.real_flag());
        return X;
    };

    auto G = [&](const RVec& c) -> RVec {
        FourierField X = make_candidate(c);
        for (int n = 0; n < n_targets; ++n) X = renorm_step(X, cfg).first;
        return unstable_real_coords(X, b);
    };

    RVec c = unstable_real_coords(f_seed, b);
    RVec g;
    try {
        g = G(c);
    } catch (const Error& e) {
        throw ShootingFailed(std::string("shoot_stable: initial trajectory failed: ") + e.what());
    }
    if (g.lpNorm<1>() < target) return make_candidate(c);

    // finite-difference Jacobian, then Broyden updates
    const double delta = std::max(1e-10, 1e-4 * std::max(seed_norm, 1e-6));
    Eigen::MatrixXd J(d - 1, d - 1);
    try {
        for (int i = 0; i < d - 1; ++i) {
            RVec cp = c;
            cp[i] += delta;
            J.col(i) = (G(cp) - g) / delta;
        }
    } catch (const Error& e) {
        throw ShootingFailed(std::string("shoot_stable: Jacobian estimate failed: ") + e.what());
    }

    for (int it = 0; it < 50; ++it) {
        RVec step = J.colPivHouseholderQr().solve(g);
        RVec cn = c - step;
        RVec gn;
        try {
            gn = G(cn);
        } catch (const Error& e) {
            throw ShootingFailed(std::string("shoot_stable: trajectory failed during iteration: ") + e.what());
        }
        if (gn.lpNorm<1>() < target) return make_candidate(cn);
        RVec dc = cn - c;
        RVec dg = gn - g;
        if (dc.lpNorm<1>() > 0) J += (dg - J * dc) * dc.transpose() / dc.squaredNorm();
        c = cn;
        g = gn;
    }
    throw ShootingFailed("shoot_stable: no convergence within 50 secant iterations");
}

FdValidation validate_dr_matrix(const LinearizedOperator& L, const RenormConfig& cfg, int n_directions, double t) {
    FdValidation val;
    val.directions = n_directions;
    val.step = t;
    const int d = L.basis.d;
    const int N = static_cast<int>(L.modes.size()) * d;
    std::mt19937_64 rng(0xd1235u);
    const FourierField omega_f = FourierField::constant(L.basis.omega, L.K);

    for (int dir = 0; dir < n_directions; ++dir) {
        const int pick = static_cast<int>(rng() % static_cast<size_t>(N));
        const int mode_idx = pick / d;
        const int comp = pick % d;
        CVec e = CVec::Zero(d);
        e[comp] = 1.0;
        FourierField ef = FourierField::single_mode(L.modes[static_cast<size_t>(mode_idx)], e, L.K);

        FourierField X = omega_f + ef * t;
        FourierField fd = (renorm_step(X, cfg).first - omega_f) * (1.0 / t);
        FourierField exact = L.apply(ef);

        const double scale = std::max(exact.empty() ? 0.0 : norm(exact, NormKind::prime(L.rho)), 1e-12);
        const double err_op = norm(fd - exact, NormKind::prime(L.rho)) / scale;
        val.max_rel_err_operator = std::max(val.max_rel_err_operator, err_op);

        // the matrix is the resonant-space restriction of the exact action;
        // compare it against the projected finite differences at the
        // operator's own scale (images may live on far-from-resonance modes)
        CVec mat_action = L.matrix * L.flatten(ef);
        CVec fd_proj = L.flatten(fd);
        const double scale_m = std::max({mat_action.lpNorm<1>(), scale, 1e-12});
        val.max_rel_err_matrix = std::max(val.max_rel_err_matrix, (mat_action - fd_proj).lpNorm<1>() / scale_m);
    }
    return val;
}

}  // namespace torus
