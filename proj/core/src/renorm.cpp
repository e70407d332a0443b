#include "torus/renorm.hpp"

#include <cassert>
#include <cmath>
#include <sstream>

namespace torus {

void RenormConfig::validate() const {
    params.validate();
    if (!(rho_prime > 0 && rho_prime < rho)) throw ConfigError("RenormConfig: need 0 < rho_prime < rho");
    if (!(params.kappa * rho < rho_prime)) throw ConfigError("RenormConfig: kappa * rho must be below rho_prime");
    if (!(params.sigma < basis.sigma_bound()))
        throw ConfigError("RenormConfig: sigma must stay below 1/(2 |omega_bar|_1)");
    if ((params.omega - basis.omega).lpNorm<1>() > 1e-12)
        throw ConfigError("RenormConfig: params.omega does not match basis.omega");
    if (!(min_rescale > 0)) throw ConfigError("RenormConfig: min_rescale must be positive");
    if (K < 1) throw ConfigError("RenormConfig: truncation radius must be >= 1");
}

FourierField pullback_T(const FourierField& X, const KTBasis& b, const ResonanceParams* p, PullbackReport* rep,
                        bool strict_window) {
    assert(X.dim() == b.d);
    const int K = X.trunc_radius();
    FieldBuilder fb(b.d, X.components(), K);
    PullbackReport local;
    const Eigen::MatrixXd Tinv = b.T_inv.cast<double>();
    for (int i = 0; i < X.size(); ++i) {
        MultiIndex k = X.mode_index(i);
        if (p) {
            const double dot = std::abs(k.dot(p->omega));
            if (dot > p->sigma * static_cast<double>(k.norm1())) {
                double m = 0;
                for (const cplx& c : X.coeff_at(i)) m += std::abs(c);
                local.dropped_nonresonant_mass += m;
                continue;
            }
        }
        MultiIndex img = apply_int_matrix(b.T_star, k);
        if (img.norm1() > K) {
            double m = 0;
            for (const cplx& c : X.coeff_at(i)) m += std::abs(c);
            if (strict_window) {
                std::ostringstream os;
                os << "pullback_T: image of mode |k|_1 = " << k.norm1() << " lands at |T*k|_1 = " << img.norm1()
                   << " outside the window K = " << K;
                throw WindowOverflow(os.str());
            }
            local.dropped_overflow_mass += m;
            continue;
        }
        auto c = X.coeff_at(i);
        CVec v(X.components());
        for (int q = 0; q < X.components(); ++q) v[q] = c[q];
        CVec tv = Tinv.cast<cplx>() * v;
        fb.add(img, tv);
    }
    if (local.dropped_nonresonant_mass > 0)
        warn("pullback_T: dropped far-from-resonance mass " + std::to_string(local.dropped_nonresonant_mass));
    if (local.dropped_overflow_mass > 0)
        warn("pullback_T: dropped window-overflow mass " + std::to_string(local.dropped_overflow_mass));
    if (rep) *rep = local;
    return fb.build(X.real_flag());
}

std::pair<FourierField, cplx> rescale_time(const FourierField& X, const KTBasis& b, double min_rescale) {
    CVec m = mean(X);
    cplx s(0, 0);
    for (int i = 0; i < b.d; ++i) s += b.omega_bar[i] * m[i];
    if (std::abs(s) < min_rescale) {
        std::ostringstream os;
        os << "rescale_time: |omega_bar . E(X)| = " << std::abs(s) << " below min_rescale = " << min_rescale;
        throw RescaleDegenerate(os.str());
    }
    return {X / s, s};
}

double nonconstant_prime_norm(const FourierField& f, double rho) {
    double s = 0;
    for (int i = 0; i < f.size(); ++i) {
        auto m = f.mode(i);
        long long l1 = 0;
        for (int v : m) l1 += std::abs(v);
        if (l1 == 0) continue;
        double w = std::exp(rho * static_cast<double>(l1)) * (1.0 + two_pi * static_cast<double>(l1));
        double c = 0;
        for (const cplx& x : f.coeff_at(i)) c += std::abs(x);
        s += c * w;
    }
    return s;
}

RenormStepResult renorm_step_full(const FourierField& X, const RenormConfig& cfg) {
    cfg.validate();
    assert(X.dim() == cfg.basis.d);

    EliminationConfig elim = cfg.elim;
    elim.rho = cfg.rho;
    elim.rho_prime = cfg.rho_prime;

    EliminationResult er = eliminate(X, cfg.params, elim);
    FourierField resonant_part = project(er.transformed, cfg.params, ResonancePart::plus);

    PullbackReport prep;
    FourierField pulled = pullback_T(resonant_part, cfg.basis, nullptr, &prep, false);

    FourierField Y;
    cplx s;
    {
        CVec m = mean(pulled);
        cplx mean_dual(0, 0);
        for (int i = 0; i < cfg.basis.d; ++i) mean_dual += cfg.basis.omega_bar[i] * m[i];
        if (cfg.rescale_mode == RenormConfig::RescaleMode::mean_dual) {
            auto [field, factor] = rescale_time(pulled, cfg.basis, cfg.min_rescale);
            Y = std::move(field);
            s = factor;
        } else {
            Y = pulled * cplx(cfg.basis.lambda1(), 0.0);
            s = mean_dual;
        }
    }
    if (X.real_flag()) Y.set_real_flag(true);

    StepReport rep;
    FourierField omega_f = FourierField::constant(cfg.basis.omega, Y.trunc_radius());
    rep.norm_prime = norm(Y - omega_f, NormKind::prime(cfg.rho));
    rep.nonconstant_norm = nonconstant_prime_norm(Y, cfg.rho);
    rep.mean = mean(Y);
    rep.rescale = s;
    FourierField minus_part = project(Y, cfg.params, ResonancePart::minus);
    rep.residual_minus = minus_part.empty() ? 0.0 : norm(minus_part, NormKind::plain(cfg.rho_prime));
    rep.mode_count = Y.size();

    RenormStepResult out;
    out.field = std::move(Y);
    out.report = std::move(rep);
    out.u = std::move(er.u);
    out.elimination_residual = er.residual;
    return out;
}

std::pair<FourierField, StepReport> renorm_step(const FourierField& X, const RenormConfig& cfg) {
    RenormStepResult r = renorm_step_full(X, cfg);
    return {std::move(r.field), std::move(r.report)};
}

IterationResult renorm_iterate(const FourierField& X, const RenormConfig& cfg) {
    IterationResult out;
    out.final_field = X;
    const FourierField omega_f = FourierField::constant(cfg.basis.omega, X.trunc_radius());
    const double initial = std::max(norm(X - omega_f, NormKind::prime(cfg.rho)), 1e-12);

    for (int it = 1; it <= cfg.max_iters; ++it) {
        StepReport rep;
        rep.iter = it;
        try {
            auto [Y, r] = renorm_step(out.final_field, cfg);
            rep = r;
            rep.iter = it;
            out.final_field = std::move(Y);
        } catch (const Error& e) {
            rep.error = e.what();
            out.steps.push_back(rep);
            out.status = IterStatus::DIVERGED;
            return out;
        }
        out.steps.push_back(rep);
        if (rep.norm_prime < 1e-12) {
            out.status = IterStatus::CONVERGED;
            return out;
        }
        if (rep.norm_prime > 10.0 * initial) {
            out.status = IterStatus::DIVERGED;
            return out;
        }
    }
    out.status = IterStatus::MAXITER;
    return out;
}

}  // namespace torus
