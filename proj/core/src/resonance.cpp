#include "torus/resonance.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <random>
#include <sstream>

namespace torus {

void ResonanceParams::validate() const {
    if (!(sigma > 0)) throw std::invalid_argument("ResonanceParams: sigma must be positive");
    if (!(kappa > 0 && kappa < 1)) throw std::invalid_argument("ResonanceParams: kappa must lie in (0,1)");
    if (omega.size() < 2) throw std::invalid_argument("ResonanceParams: omega must have dimension >= 2");
}

ModeClass classify(const MultiIndex& k, const ResonanceParams& p) {
    const double lhs = std::abs(k.dot(p.omega));
    const double rhs = p.sigma * static_cast<double>(k.norm1());
    if (rhs > 0 && std::abs(lhs - rhs) <= 1e-9 * rhs) {
        std::ostringstream os;
        os << "classify: index within 1e-9 of the resonance boundary, |omega.k| = " << lhs << ", sigma|k| = " << rhs;
        warn(os.str());
    }
    return lhs > rhs ? ModeClass::FarFromResonance : ModeClass::Resonant;
}

FourierField project(const FourierField& f, const ResonanceParams& p, ResonancePart part) {
    const bool keep_resonant = part == ResonancePart::plus;
    std::vector<int> md;
    std::vector<cplx> cd;
    const int d = f.dim();
    const int nc = f.components();
    for (int i = 0; i < f.size(); ++i) {
        auto m = f.mode(i);
        double dot = 0;
        long long l1 = 0;
        for (int j = 0; j < d; ++j) {
            dot += m[j] * p.omega[j];
            l1 += std::abs(m[j]);
        }
        const bool resonant = !(std::abs(dot) > p.sigma * static_cast<double>(l1));
        if (resonant != keep_resonant) continue;
        md.insert(md.end(), m.begin(), m.end());
        auto c = f.coeff_at(i);
        cd.insert(cd.end(), c.begin(), c.end());
    }
    return FourierField::from_sorted(d, nc, f.trunc_radius(), f.real_flag(), std::move(md), std::move(cd));
}

namespace {

double l1(const RVec& v) { return v.lpNorm<1>(); }

double ratio_at(const Eigen::MatrixXd& Tstar, const RVec& x) {
    const double nx = l1(x);
    if (nx == 0) return 0;
    return l1(RVec(Tstar * x)) / nx;
}

/// Exact extreme-direction scan for d = 2: the feasible set on each edge of
/// the unit l1 diamond is an interval, and |T* x|_1 is convex there, so the
/// maximum sits at interval endpoints.
void scan_d2(const ResonanceParams& p, std::vector<RVec>& candidates) {
    const RVec& w = p.omega;
    const double s = p.sigma;
    RVec verts[4];
    verts[0] = RVec::Zero(2);
    verts[0][0] = 1;
    verts[1] = RVec::Zero(2);
    verts[1][1] = 1;
    verts[2] = -verts[0];
    verts[3] = -verts[1];
    for (int e = 0; e < 4; ++e) {
        const RVec& a = verts[e];
        const RVec& b = verts[(e + 1) % 4];
        // x(t) = (1-t) a + t b, omega.x affine in t
        const double wa = w.dot(a), wb = w.dot(b);
        double lo = 0.0, hi = 1.0;
        bool feasible_lo = std::abs(wa) <= s;
        bool feasible_hi = std::abs(wb) <= s;
        auto crossing = [&](double level) -> double {
            // solve wa + t (wb - wa) = level
            if (wb == wa) return -1.0;
            return (level - wa) / (wb - wa);
        };
        std::vector<double> ts;
        if (feasible_lo) ts.push_back(lo);
        if (feasible_hi) ts.push_back(hi);
        for (double level : {s, -s}) {
            double t = crossing(level);
            if (t > 0.0 && t < 1.0) ts.push_back(t);
        }
        for (double t : ts) {
            RVec x = (1 - t) * a + t * b;
            if (std::abs(w.dot(x)) <= s * l1(x) + 1e-15) candidates.push_back(x);
        }
    }
}

/// Sampled directions on the cone for d >= 3: points of the hyperplane
/// perpendicular to omega plus bisected boundary points along +-omega.
void sample_dge3(const ResonanceParams& p, int n_samples, std::vector<RVec>& candidates) {
    const RVec& w = p.omega;
    const int d = static_cast<int>(w.size());
    const RVec wh = w / w.norm();
    std::mt19937_64 rng(0x51a7e5u);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int s = 0; s < n_samples; ++s) {
        RVec z(d);
        for (int i = 0; i < d; ++i) z[i] = gauss(rng);
        RVec y = z - z.dot(wh) * wh;
        if (l1(y) < 1e-12) continue;
        y /= l1(y);
        candidates.push_back(y);
        // boundary of the cone along +-omega from y
        for (double sign : {1.0, -1.0}) {
            double tlo = 0.0, thi = 1.0;
            auto g = [&](double t) { return t * w.norm() - p.sigma * l1(RVec(y + sign * t * wh)); };
            int guard = 0;
            while (g(thi) < 0 && guard++ < 60) thi *= 2;
            if (g(thi) < 0) continue;  // cone unbounded in this direction
            for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (tlo + thi);
                (g(mid) < 0 ? tlo : thi) = mid;
            }
            candidates.push_back(y + sign * tlo * wh);
        }
    }
}

}  // namespace

ConeReport check_cone_inclusion(const IMat& T, const ResonanceParams& p, int n_samples, int K) {
    const int d = static_cast<int>(T.rows());
    assert(T.cols() == d && p.omega.size() == d);
    ConeReport rep;
    rep.argmax = RVec::Zero(d);

    Eigen::MatrixXd Tstar(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) Tstar(i, j) = static_cast<double>(T(j, i));

    std::vector<RVec> candidates;
    if (d == 2)
        scan_d2(p, candidates);
    else
        sample_dge3(p, std::max(1, n_samples), candidates);

    for (const RVec& x : candidates) {
        const double r = ratio_at(Tstar, x);
        if (r > rep.max_ratio_directions) {
            rep.max_ratio_directions = r;
            rep.argmax = x / l1(x);
        }
        if (r >= p.kappa && rep.violating_directions.size() < 16) rep.violating_directions.push_back(x / l1(x));
    }

    // Exact verification on retained resonant integer indices.
    IMat Ts = T.transpose();
    rep.modes_ok = true;
    auto win = Window::get(d, K);
    for (long long rk = 0; rk < win->size(); ++rk) {
        MultiIndex k = win->unrank(rk);
        if (k.is_zero()) continue;
        const double dot = std::abs(k.dot(p.omega));
        const long long n1 = k.norm1();
        if (dot > p.sigma * static_cast<double>(n1)) continue;  // far from resonance
        MultiIndex img = apply_int_matrix(Ts, k);
        const double r = static_cast<double>(img.norm1()) / static_cast<double>(n1);
        if (r > rep.max_ratio_modes) rep.max_ratio_modes = r;
        const bool contracts = static_cast<double>(img.norm1()) <= p.kappa * static_cast<double>(n1);
        const bool in_window = img.norm1() <= K;
        if (!contracts || !in_window) {
            rep.modes_ok = false;
            if (rep.violating_modes.size() < 16) rep.violating_modes.push_back(k);
        }
    }

    rep.max_ratio = std::max(rep.max_ratio_directions, rep.max_ratio_modes);
    rep.ok = rep.max_ratio < p.kappa;
    return rep;
}

ConeReport require_cone(const IMat& T, const ResonanceParams& p, int n_samples, int K) {
    ConeReport rep = check_cone_inclusion(T, p, n_samples, K);
    if (!rep.ok) {
        std::ostringstream os;
        os << "cone condition failed: max ratio " << rep.max_ratio << " >= kappa " << p.kappa
           << "; offending directions:";
        for (const RVec& v : rep.violating_directions) {
            os << " (";
            for (int i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
            os << ")";
        }
        for (const MultiIndex& k : rep.violating_modes) {
            os << " k=(";
            for (int i = 0; i < k.dim(); ++i) os << (i ? "," : "") << k[i];
            os << ")";
        }
        throw ConeViolation(os.str());
    }
    return rep;
}

}  // namespace torus
