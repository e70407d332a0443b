#include "torus/homotopy.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <sstream>

namespace torus {

namespace {

constexpr int kNeumannMaxTerms = 400;

double series_tol(const FourierField& g) { return 1e-16 * (1.0 + g.mass()); }

FourierField omega_field(const ResonanceParams& p, int K) { return FourierField::constant(p.omega, K); }

ComposeOptions compose_opts(const EliminationConfig& cfg, const FourierField& reference) {
    ComposeOptions opt;
    opt.order_cap = cfg.order_cap;
    opt.tol = series_tol(reference);
    opt.drop_tol = cfg.drop_tol;
    opt.rho = cfg.rho;
    opt.rho_prime = cfg.rho_prime;
    return opt;
}

/// Everything needed to apply DF(u) repeatedly at a fixed u.
struct Stage {
    FourierField u;
    std::vector<FourierField> C;  // (d_j f)(id + u)
    FourierField composed;        // f(id + u)
    FourierField w;               // (I + Du)^{-1} (omega + f(id+u))
};

Stage make_stage(const FourierField& u, const FourierField& f, const ResonanceParams& p,
                 const EliminationConfig& cfg) {
    Stage st;
    st.u = u;
    ComposeBundle bundle = compose_with_jacobian(f, u, compose_opts(cfg, f));
    st.composed = std::move(bundle.composed);
    st.C = std::move(bundle.jacobian);
    FourierField rhs = omega_field(p, f.trunc_radius()) + st.composed;
    st.w = neumann_inverse_apply(u, rhs, series_tol(rhs), kNeumannMaxTerms, cfg.drop_tol);
    return st;
}

/// DF(u) h without the final minus-projection.
FourierField apply_df_raw(const Stage& st, const FourierField& h, const EliminationConfig& cfg) {
    const int d = h.dim();
    FourierField B(d, d, h.trunc_radius(), h.real_flag() && st.w.real_flag());
    for (int j = 0; j < d; ++j) B = B + scalar_multiply(h.component_series(j), st.C[j], cfg.drop_tol);
    B = B - jacobian_apply(h, st.w, cfg.drop_tol);
    if (st.u.empty()) return B;
    return neumann_inverse_apply(st.u, B, series_tol(B), kNeumannMaxTerms, cfg.drop_tol);
}

FourierField apply_df(const Stage& st, const FourierField& h, const ResonanceParams& p,
                      const EliminationConfig& cfg) {
    return project(apply_df_raw(st, h, cfg), p, ResonancePart::minus);
}

FourierField f_of_stage(const Stage& st, const ResonanceParams& p) {
    // F(u) = I^- (I+Du)^{-1} (omega + f(id+u)) = I^- w
    return project(st.w, p, ResonancePart::minus);
}

FourierField fhat_apply(const FourierField& f, const FourierField& h, double drop_tol) {
    return jacobian_apply(f, h, drop_tol) - jacobian_apply(h, f, drop_tol);
}

// --- flattened linear algebra over window modes -------------------------------

struct ModeBasis {
    std::vector<MultiIndex> modes;
    std::map<MultiIndex, int> pos;
    int d = 0;

    int cols() const { return static_cast<int>(modes.size()) * d; }
    int col(int mode_idx, int comp) const { return mode_idx * d + comp; }
    int lookup(const MultiIndex& k) const {
        auto it = pos.find(k);
        return it == pos.end() ? -1 : it->second;
    }

    CVec flatten(const FourierField& f) const {
        CVec v = CVec::Zero(cols());
        for (int i = 0; i < f.size(); ++i) {
            int mi = lookup(f.mode_index(i));
            if (mi < 0) continue;
            auto c = f.coeff_at(i);
            for (int q = 0; q < d; ++q) v[col(mi, q)] = c[q];
        }
        return v;
    }

    FourierField unflatten(const CVec& v, int K, bool real_flag) const {
        FieldBuilder fb(d, d, K);
        CVec c(d);
        for (size_t m = 0; m < modes.size(); ++m) {
            bool nz = false;
            for (int q = 0; q < d; ++q) {
                c[q] = v[col(static_cast<int>(m), q)];
                if (c[q] != cplx(0, 0)) nz = true;
            }
            if (nz) fb.add(modes[m], c);
        }
        return fb.build(real_flag);
    }
};

ModeBasis window_basis(int d, int K, const ResonanceParams& p, ModeClass wanted) {
    ModeBasis mb;
    mb.d = d;
    auto win = Window::get(d, K);
    for (long long r = 0; r < win->size(); ++r) {
        MultiIndex k = win->unrank(r);
        double dot = std::abs(k.dot(p.omega));
        bool resonant = !(dot > p.sigma * static_cast<double>(k.norm1()));
        if ((wanted == ModeClass::Resonant) != resonant) continue;
        mb.pos.emplace(k, static_cast<int>(mb.modes.size()));
        mb.modes.push_back(std::move(k));
    }
    return mb;
}

using SpMat = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<cplx>;

CVec sparse_solve(SpMat& M, const CVec& rhs, const char* what) {
    M.makeCompressed();
    Eigen::SparseLU<SpMat> lu(M);
    if (lu.info() != Eigen::Success) throw SolverDiverged(std::string(what) + ": sparse factorisation failed");
    CVec sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw SolverDiverged(std::string(what) + ": sparse solve failed");
    return sol;
}

/// Sparse matrix of DF(0) restricted to the far-from-resonance window modes.
SpMat df0_matrix(const ModeBasis& minus, const FourierField& f, const ResonanceParams& p) {
    const int d = minus.d;
    const int N = minus.cols();
    std::vector<Triplet> trip;
    trip.reserve(static_cast<size_t>(N) * (1 + static_cast<size_t>(f.size()) * (d + 1)));
    const cplx tpi(0.0, two_pi);
    for (size_t m = 0; m < minus.modes.size(); ++m) {
        const MultiIndex& k = minus.modes[m];
        const cplx diag = -tpi * k.dot(p.omega);
        for (int i = 0; i < d; ++i)
            trip.emplace_back(minus.col(static_cast<int>(m), i), minus.col(static_cast<int>(m), i), diag);
    }
    for (int fi = 0; fi < f.size(); ++fi) {
        const MultiIndex l = f.mode_index(fi);
        auto fl = f.coeff_at(fi);
        for (size_t m = 0; m < minus.modes.size(); ++m) {
            const MultiIndex& k = minus.modes[m];
            const int row_mode = minus.lookup(k + l);
            if (row_mode < 0) continue;
            // + (Df h): row (k+l, i), col (k, j) += 2 pi i l_j f^i_l
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    trip.emplace_back(minus.col(row_mode, i), minus.col(static_cast<int>(m), j),
                                      tpi * static_cast<double>(l[j]) * fl[i]);
            // - (Dh f): row (k+l, i), col (k, i) -= 2 pi i (k . f_l)
            cplx kf(0, 0);
            for (int j = 0; j < d; ++j) kf += static_cast<double>(k[j]) * fl[j];
            const cplx val = -tpi * kf;
            for (int i = 0; i < d; ++i)
                trip.emplace_back(minus.col(row_mode, i), minus.col(static_cast<int>(m), i), val);
        }
    }
    SpMat M(N, N);
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

FourierField df0_solve_neumann(const FourierField& g, const FourierField& f, const ResonanceParams& p,
                               const EliminationConfig& cfg) {
    const double fp = f.empty() ? 0.0 : norm(f, NormKind::prime(cfg.rho));
    if (fp >= p.sigma / 4)
        warn("df0_solve: |f|'_rho = " + std::to_string(fp) + " outside the Neumann hypothesis sigma/4 = " +
             std::to_string(p.sigma / 4));
    FourierField term = g;
    FourierField sum = g;
    const double tol = series_tol(g);
    double prev = term.mass();
    int bad = 0;
    for (int n = 1; n <= kNeumannMaxTerms; ++n) {
        term = project(fhat_apply(f, small_divisor_inverse(term, p, cfg.rho_prime), cfg.drop_tol), p,
                       ResonancePart::minus);
        sum = sum + term;
        const double m = term.mass();
        if (m < tol) break;
        if (m >= prev && ++bad >= 5) throw SolverDiverged("df0_solve: Neumann series diverging");
        if (n == kNeumannMaxTerms) throw SolverDiverged("df0_solve: Neumann series stalled");
        prev = std::max(m, 1e-300);
    }
    return -small_divisor_inverse(sum, p, cfg.rho_prime);
}

FourierField df0_solve_direct(const FourierField& g, const FourierField& f, const ResonanceParams& p) {
    const int d = g.dim();
    const int K = g.trunc_radius();
    ModeBasis minus = window_basis(d, K, p, ModeClass::FarFromResonance);
    SpMat M = df0_matrix(minus, f, p);
    CVec rhs = minus.flatten(g);
    CVec h = sparse_solve(M, rhs, "df0_solve");
    FourierField out = minus.unflatten(h, K, g.real_flag() && f.real_flag());
    return out.compact(1e-16 * out.mass());
}

/// Direct solve of DF(u) h = g via the extended system
///   B h - (I + Du) s = (I + Du) g
/// over all window modes, where B h = sum_j C_j h^j - Dh w and s collects the
/// resonant part of (I+Du)^{-1} B h. Avoids forming (I+Du)^{-1} as a matrix.
FourierField solve_df_direct(const Stage& st, const FourierField& g, const ResonanceParams& p,
                             const EliminationConfig& cfg) {
    const int d = g.dim();
    const int K = g.trunc_radius();
    ModeBasis minus = window_basis(d, K, p, ModeClass::FarFromResonance);
    ModeBasis plus = window_basis(d, K, p, ModeClass::Resonant);
    const int Nm = minus.cols();
    const int Np = plus.cols();
    const int N = Nm + Np;

    // rows indexed like [minus | plus] flattening of the full window
    auto row_of = [&](const MultiIndex& k) -> std::pair<int, int> {
        int mi = minus.lookup(k);
        if (mi >= 0) return {mi, 0};
        int pi = plus.lookup(k);
        if (pi >= 0) return {pi, 1};
        return {-1, -1};
    };
    auto row_col = [&](const std::pair<int, int>& rm, int comp) {
        return rm.second == 0 ? minus.col(rm.first, comp) : Nm + plus.col(rm.first, comp);
    };

    std::vector<Triplet> trip;
    const cplx tpi(0.0, two_pi);

    // B h contributions, columns over minus modes
    for (size_t m = 0; m < minus.modes.size(); ++m) {
        const MultiIndex& k = minus.modes[m];
        for (int j = 0; j < d; ++j) {
            const FourierField& Cj = st.C[j];
            for (int ci = 0; ci < Cj.size(); ++ci) {
                auto rm = row_of(k + Cj.mode_index(ci));
                if (rm.first < 0) continue;
                auto cl = Cj.coeff_at(ci);
                for (int i = 0; i < d; ++i)
                    trip.emplace_back(row_col(rm, i), minus.col(static_cast<int>(m), j), cl[i]);
            }
        }
        for (int wi = 0; wi < st.w.size(); ++wi) {
            auto rm = row_of(k + st.w.mode_index(wi));
            if (rm.first < 0) continue;
            auto wl = st.w.coeff_at(wi);
            cplx kw(0, 0);
            for (int j = 0; j < d; ++j) kw += static_cast<double>(k[j]) * wl[j];
            const cplx val = -tpi * kw;
            for (int i = 0; i < d; ++i) trip.emplace_back(row_col(rm, i), minus.col(static_cast<int>(m), i), val);
        }
    }
    // -(I + Du) s, columns over plus modes
    for (size_t q = 0; q < plus.modes.size(); ++q) {
        const MultiIndex& kq = plus.modes[q];
        auto rm = row_of(kq);
        for (int i = 0; i < d; ++i) trip.emplace_back(row_col(rm, i), Nm + plus.col(static_cast<int>(q), i), -1.0);
        for (int ui = 0; ui < st.u.size(); ++ui) {
            const MultiIndex l = st.u.mode_index(ui);
            auto rmu = row_of(kq + l);
            if (rmu.first < 0) continue;
            auto ul = st.u.coeff_at(ui);
            // (Du s)^i at l+q picks up 2 pi i l_j u^i_l s^j_q
            for (int j = 0; j < d; ++j) {
                const cplx val = tpi * static_cast<double>(l[j]);
                for (int i = 0; i < d; ++i)
                    trip.emplace_back(row_col(rmu, i), Nm + plus.col(static_cast<int>(q), j), -val * ul[i]);
            }
        }
    }
    SpMat M(N, N);
    M.setFromTriplets(trip.begin(), trip.end());

    FourierField rhs_field = g + jacobian_apply(st.u, g, cfg.drop_tol);
    CVec rhs = CVec::Zero(N);
    for (int i = 0; i < rhs_field.size(); ++i) {
        auto rm = row_of(rhs_field.mode_index(i));
        if (rm.first < 0) continue;
        auto c = rhs_field.coeff_at(i);
        for (int q = 0; q < d; ++q) rhs[row_col(rm, q)] = c[q];
    }

    CVec sol = sparse_solve(M, rhs, "solve_df_direct");
    FourierField h = minus.unflatten(sol.head(Nm), K, g.real_flag());
    h = h.compact(1e-16 * h.mass());

    FourierField resid = apply_df(st, h, p, cfg) - g;
    const double rmass = resid.mass();
    if (rmass > 1e-9 * std::max(1.0, g.mass()))
        throw SolverDiverged("solve_df_direct: residual " + std::to_string(rmass) + " after direct solve");
    return h;
}

/// Richardson iteration preconditioned with DF(0)^{-1} (the Neumann path).
FourierField solve_df_neumann(const Stage& st, const FourierField& g, const FourierField& f,
                              const ResonanceParams& p, const EliminationConfig& cfg) {
    FourierField h = df0_solve_neumann(g, f, p, cfg);
    const double target = 1e-13 * std::max(1.0, g.mass());
    double prev = std::numeric_limits<double>::infinity();
    int bad = 0;
    for (int it = 0; it < 60; ++it) {
        FourierField r = g - apply_df(st, h, p, cfg);
        const double m = r.mass();
        if (m <= target) return h;
        if (m >= prev && ++bad >= 5) throw SolverDiverged("solve_df: preconditioned iteration diverging");
        prev = m;
        h = h + df0_solve_neumann(r, f, p, cfg);
    }
    throw SolverDiverged("solve_df: preconditioned iteration stalled");
}

FourierField solve_df(const Stage& st, const FourierField& g, const FourierField& f, const ResonanceParams& p,
                      const EliminationConfig& cfg) {
    if (g.empty()) return FourierField(g.dim(), g.dim(), g.trunc_radius(), g.real_flag());
    if (cfg.linsolve == EliminationConfig::LinSolve::direct) return solve_df_direct(st, g, p, cfg);
    return solve_df_neumann(st, g, f, p, cfg);
}

}  // namespace

FourierField f_operator(const FourierField& u, const FourierField& f, const ResonanceParams& p,
                        const EliminationConfig& cfg) {
    if (!project(u, p, ResonancePart::plus).empty())
        throw ResonantInput("f_operator: u must be supported on far-from-resonance modes");
    Stage st = make_stage(u, f, p, cfg);
    return f_of_stage(st, p);
}

FourierField df_apply(const FourierField& u, const FourierField& f, const FourierField& h,
                      const ResonanceParams& p, const EliminationConfig& cfg) {
    Stage st = make_stage(u, f, p, cfg);
    return apply_df(st, h, p, cfg);
}

FourierField small_divisor_inverse(const FourierField& g, const ResonanceParams& p, double rho_prime) {
    const int d = g.dim();
    std::vector<int> md;
    std::vector<cplx> cd;
    const cplx tpi(0.0, two_pi);
    for (int i = 0; i < g.size(); ++i) {
        MultiIndex k = g.mode_index(i);
        const double dot = k.dot(p.omega);
        if (!(std::abs(dot) > p.sigma * static_cast<double>(k.norm1())) || k.is_zero()) {
            std::ostringstream os;
            os << "small_divisor_inverse: resonant mode (";
            for (int j = 0; j < d; ++j) os << (j ? "," : "") << k[j];
            os << ")";
            throw ResonantInput(os.str());
        }
        const cplx inv = 1.0 / (tpi * dot);
        auto m = g.mode(i);
        md.insert(md.end(), m.begin(), m.end());
        auto c = g.coeff_at(i);
        for (int q = 0; q < g.components(); ++q) cd.push_back(inv * c[q]);
    }
    FourierField out = FourierField::from_sorted(d, g.components(), g.trunc_radius(), g.real_flag(), std::move(md),
                                                 std::move(cd));
    // operator bound |(D.omega)^{-1} g|'_{rho'} <= (2/sigma) |g|_{rho'}, diagnostic
    if (!out.empty()) {
        const double lhs = norm(out, NormKind::prime(rho_prime));
        const double rhs = 2.0 / p.sigma * norm(g, NormKind::plain(rho_prime));
        if (lhs > rhs * (1 + 1e-12)) warn("small_divisor_inverse: operator bound 2/sigma violated (numerical)");
    }
    return out;
}

FourierField df0_solve(const FourierField& g, const FourierField& f, const ResonanceParams& p,
                       const EliminationConfig& cfg) {
    if (!project(g, p, ResonancePart::plus).empty())
        throw ResonantInput("df0_solve: g must be supported on far-from-resonance modes");
    if (g.empty()) return FourierField(g.dim(), g.dim(), g.trunc_radius(), g.real_flag());
    if (cfg.linsolve == EliminationConfig::LinSolve::direct) return df0_solve_direct(g, f, p);
    return df0_solve_neumann(g, f, p, cfg);
}

double elimination_theorem_radius(const ResonanceParams& p, double rho, double rho_prime) {
    const double nw = p.omega.lpNorm<1>();
    const double sqrt6 = std::sqrt(6.0);
    const double a = (rho - rho_prime) / (2.0 * two_pi);
    const double b = (3.0 - sqrt6) / 6.0 * p.sigma / nw;
    return (sqrt6 - 2.0) / 12.0 * p.sigma * std::min(a, b);
}

EliminationResult eliminate(const FourierField& X, const ResonanceParams& p, const EliminationConfig& cfg) {
    if (cfg.lambda_steps < 1) throw std::invalid_argument("eliminate: lambda_steps must be >= 1");
    const int d = X.dim();
    const int K = X.trunc_radius();
    assert(p.omega.size() == d);

    EliminationResult res;
    res.theorem_radius = elimination_theorem_radius(p, cfg.rho, cfg.rho_prime);

    FourierField f = X - FourierField::constant(p.omega, K);
    f.set_real_flag(X.real_flag());
    res.inside_theorem_ball = f.empty() || norm(f, NormKind::prime(cfg.rho)) < res.theorem_radius;

    FourierField F0 = project(f, p, ResonancePart::minus);
    if (F0.empty()) {
        res.u = FourierField::zero(d, K, X.real_flag());
        res.transformed = X;
        res.residual = 0.0;
        return res;
    }

    const double initial_modes = std::max(8.0, static_cast<double>(X.size()));
    auto guard_support = [&](const FourierField& u) {
        if (static_cast<double>(u.size()) > cfg.max_support_growth * initial_modes)
            throw NonConvergence("eliminate: intermediate support growth exceeded the configured bound");
    };

    FourierField u = FourierField::zero(d, K, X.real_flag());
    const double F0_norm = norm(F0, NormKind::plain(cfg.rho_prime));
    res.residual_history.emplace_back(0.0, F0_norm);

    const double h = 1.0 / static_cast<double>(cfg.lambda_steps);
    auto phi = [&](const FourierField& ucur) {
        Stage st = make_stage(ucur, f, p, cfg);
        return -solve_df(st, F0, f, p, cfg);
    };

    for (int step = 0; step < cfg.lambda_steps; ++step) {
        FourierField k1 = phi(u);
        FourierField k2 = phi(u + k1 * (h / 2));
        FourierField k3 = phi(u + k2 * (h / 2));
        FourierField k4 = phi(u + k3 * h);
        u = u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        u = u.compact(cfg.drop_tol < 0 ? 1e-16 * u.mass() : cfg.drop_tol);
        u.set_real_flag(X.real_flag());
        guard_support(u);
        Stage st = make_stage(u, f, p, cfg);
        const double lam = static_cast<double>(step + 1) * h;
        res.residual_history.emplace_back(lam, norm(f_of_stage(st, p), NormKind::plain(cfg.rho_prime)));
    }

    for (int it = 0; it < cfg.newton_polish; ++it) {
        Stage st = make_stage(u, f, p, cfg);
        FourierField Fu = f_of_stage(st, p);
        u = u - solve_df(st, Fu, f, p, cfg);
        u = u.compact(cfg.drop_tol < 0 ? 1e-16 * u.mass() : cfg.drop_tol);
        u.set_real_flag(X.real_flag());
        guard_support(u);
        Stage st2 = make_stage(u, f, p, cfg);
        res.residual_history.emplace_back(1.0, norm(f_of_stage(st2, p), NormKind::plain(cfg.rho_prime)));
    }

    Stage st = make_stage(u, f, p, cfg);
    st.w.set_real_flag(X.real_flag());

    res.u = std::move(u);
    res.transformed = std::move(st.w);
    res.residual = norm(project(res.transformed, p, ResonancePart::minus), NormKind::plain(cfg.rho_prime));
    if (res.residual > cfg.residual_tol) {
        std::ostringstream os;
        os << "eliminate: residual " << res.residual << " above tolerance " << cfg.residual_tol
           << " (input likely outside the perturbative regime)";
        throw SolverDiverged(os.str());
    }
    return res;
}

}  // namespace torus
