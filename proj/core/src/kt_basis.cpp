#include "torus/kt_basis.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>

namespace torus {

namespace {

long long int_det(const IMat& M) {
    const int n = static_cast<int>(M.rows());
    if (n == 1) return M(0, 0);
    if (n == 2) return M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0);
    long long det = 0;
    for (int j = 0; j < n; ++j) {
        IMat minor(n - 1, n - 1);
        for (int r = 1; r < n; ++r) {
            int cc = 0;
            for (int c = 0; c < n; ++c) {
                if (c == j) continue;
                minor(r - 1, cc++) = M(r, c);
            }
        }
        const long long cof = int_det(minor);
        det += (j % 2 == 0 ? 1 : -1) * M(0, j) * cof;
    }
    return det;
}

IMat int_adjugate(const IMat& M) {
    const int n = static_cast<int>(M.rows());
    IMat adj(n, n);
    if (n == 1) {
        adj(0, 0) = 1;
        return adj;
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            IMat minor(n - 1, n - 1);
            int rr = 0;
            for (int r = 0; r < n; ++r) {
                if (r == i) continue;
                int cc = 0;
                for (int c = 0; c < n; ++c) {
                    if (c == j) continue;
                    minor(rr, cc++) = M(r, c);
                }
                ++rr;
            }
            adj(j, i) = ((i + j) % 2 == 0 ? 1 : -1) * int_det(minor);
        }
    }
    return adj;
}

/// Realify an eigenvector of a real eigenvalue: rotate the phase of the
/// largest component away, check the residue, return the real part with the
/// first component normalised to 1.
RVec realify_and_normalise(const CVec& v, const char* what) {
    int imax = 0;
    for (int i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[imax])) imax = i;
    const cplx phase = v[imax] / std::abs(v[imax]);
    CVec w = v / phase;
    double imag_residue = 0;
    for (int i = 0; i < w.size(); ++i) imag_residue = std::max(imag_residue, std::abs(w[i].imag()));
    if (imag_residue > 1e-8 * w.norm())
        throw BadSpectrum(std::string(what) + ": eigenvector of a real eigenvalue is not realifiable");
    RVec r = w.real();
    if (std::abs(r[0]) < 1e-12 * r.norm())
        throw DegenerateEigenvector(std::string(what) + ": first eigenvector component vanishes");
    return r / r[0];
}

}  // namespace

KTBasis from_matrix(const IMat& T) {
    const int d = static_cast<int>(T.rows());
    if (T.cols() != d || d < 2) throw std::invalid_argument("from_matrix: T must be square with d >= 2");

    KTBasis b;
    b.d = d;
    b.T = T;
    b.T_star = T.transpose();
    b.det = int_det(T);
    if (b.det != 1 && b.det != -1) {
        std::ostringstream os;
        os << "from_matrix: det T = " << b.det << ", not in GL(d,Z)";
        throw NotUnimodular(os.str());
    }
    b.T_inv = int_adjugate(T);
    if (b.det == -1) b.T_inv = -b.T_inv;

    Eigen::MatrixXd Td(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) Td(i, j) = static_cast<double>(T(i, j));

    Eigen::EigenSolver<Eigen::MatrixXd> es(Td);
    if (es.info() != Eigen::Success) throw BadSpectrum("from_matrix: eigensolver failed");
    CVec lam = es.eigenvalues();
    CMat vec = es.eigenvectors();

    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int c) {
        const double ma = std::abs(lam[a]), mc = std::abs(lam[c]);
        if (std::abs(ma - mc) > 1e-14 * std::max(ma, mc)) return ma > mc;
        if (lam[a].real() != lam[c].real()) return lam[a].real() > lam[c].real();
        return lam[a].imag() > lam[c].imag();
    });
    b.lambda = CVec(d);
    b.evecs = CMat(d, d);
    for (int i = 0; i < d; ++i) {
        b.lambda[i] = lam[order[i]];
        b.evecs.col(i) = vec.col(order[i]);
    }

    // Spectral layout: exactly one simple real eigenvalue outside the unit
    // circle, everything else strictly inside.
    int outside = 0;
    for (int i = 0; i < d; ++i)
        if (std::abs(b.lambda[i]) > 1.0 + 1e-12) ++outside;
    if (outside != 1)
        throw BadSpectrum("from_matrix: need exactly one eigenvalue outside the unit circle, found " +
                          std::to_string(outside));
    if (std::abs(b.lambda[0].imag()) > 1e-10)
        throw BadSpectrum("from_matrix: the expanding eigenvalue is not real");
    for (int i = 1; i < d; ++i)
        if (std::abs(b.lambda[i]) >= 1.0 - 1e-12)
            throw BadSpectrum("from_matrix: contracting eigenvalues must be strictly inside the unit circle");
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            if (std::abs(b.lambda[i] - b.lambda[j]) < 1e-9)
                throw BadSpectrum("from_matrix: eigenvalues are not simple");

    b.lambda[0] = cplx(b.lambda[0].real(), 0.0);
    b.omega = realify_and_normalise(b.evecs.col(0), "omega");
    b.evecs.col(0) = b.omega.cast<cplx>();

    // Deterministic phase for the contracting eigenvectors; conjugate pairs
    // are stored adjacently with matching conjugate columns.
    for (int i = 1; i < d; ++i) {
        CVec v = b.evecs.col(i);
        int imax = 0;
        for (int q = 1; q < d; ++q)
            if (std::abs(v[q]) > std::abs(v[imax])) imax = q;
        b.evecs.col(i) = v / v[imax];
    }
    for (int i = 1; i + 1 < d; ++i) {
        if (std::abs(b.lambda[i] - std::conj(b.lambda[i + 1])) < 1e-9 && b.lambda[i].imag() != 0.0)
            b.evecs.col(i + 1) = b.evecs.col(i).conjugate();
    }

    // Dual vector: lambda_1 eigenvector of T*, scaled so omega_bar.omega = 1.
    Eigen::EigenSolver<Eigen::MatrixXd> est(Td.transpose());
    if (est.info() != Eigen::Success) throw BadSpectrum("from_matrix: eigensolver failed on T*");
    CVec lam2 = est.eigenvalues();
    int best = 0;
    for (int i = 1; i < d; ++i)
        if (std::abs(lam2[i] - b.lambda[0]) < std::abs(lam2[best] - b.lambda[0])) best = i;
    RVec wb = realify_and_normalise(est.eigenvectors().col(best), "omega_bar");
    const double pairing = wb.dot(b.omega);
    if (std::abs(pairing) < 1e-12) throw DegenerateEigenvector("from_matrix: omega_bar.omega vanishes");
    b.omega_bar = wb / pairing;

    // Paper-level identities, cheap to assert here.
    const double l1v = (Td * b.omega - b.lambda1() * b.omega).lpNorm<1>();
    const double l1w = (Td.transpose() * b.omega_bar - b.lambda1() * b.omega_bar).lpNorm<1>();
    if (l1v > 1e-10 || l1w > 1e-10) throw BadSpectrum("from_matrix: eigenvector residual too large");
    double prod = 1.0;
    for (int i = 0; i < d; ++i) prod *= std::abs(b.lambda[i]);
    if (std::abs(prod - 1.0) > 1e-10) throw BadSpectrum("from_matrix: |det| = product of |lambda_j| violated");
    for (int j = 1; j < d; ++j) {
        // biorthogonality omega_bar . omega^(j) = 0 is what the spectral
        // projections rely on; enforce it hard
        cplx dual(0, 0), plain(0, 0);
        for (int i = 0; i < d; ++i) {
            dual += b.omega_bar[i] * b.evecs(i, j);
            plain += b.omega[i] * b.evecs(i, j);
        }
        if (std::abs(dual) > 1e-9 * b.evecs.col(j).norm())
            throw BadSpectrum("from_matrix: omega_bar is not biorthogonal to the contracting eigenvectors");
        // omega . omega^(j) = 0 additionally holds for symmetric T; flag when it fails
        if (std::abs(plain) > 1e-9 * b.evecs.col(j).norm())
            warn("from_matrix: omega . omega^(j) = " + std::to_string(std::abs(plain)) +
                 " (holds only for symmetric T; the dual pairing is used instead)");
    }
    return b;
}

KTBasis golden_basis() {
    IMat T(2, 2);
    T << 0, 1, 1, 1;
    return from_matrix(T);
}

KTBasis plastic_basis() {
    IMat T(3, 3);
    T << 0, 1, 0, 0, 0, 1, 1, 1, 0;
    return from_matrix(T);
}

KTBasis basis_power(const KTBasis& b, int p) {
    if (p < 1) throw std::invalid_argument("basis_power: p must be >= 1");
    IMat Tp = IMat::Identity(b.d, b.d);
    for (int i = 0; i < p; ++i) Tp = (Tp * b.T).eval();
    KTBasis bp = from_matrix(Tp);
    bp.power = p;
    return bp;
}

namespace {

ResonanceParams choose_params_impl(const KTBasis& b, double rho, double rho_prime, int K, bool directions_gate) {
    if (!(rho_prime > 0 && rho_prime < rho))
        throw std::invalid_argument("choose_params: need 0 < rho_prime < rho");
    const double kappa_limit = rho_prime / rho;
    const double sigma_cap = 0.9999 * b.sigma_bound();
    const int n_samples = 2000;

    auto probe = [&](double sigma) {
        ResonanceParams p{b.omega, sigma, std::min(0.999, kappa_limit)};
        ConeReport rep = check_cone_inclusion(b.T, p, n_samples, K);
        return directions_gate ? rep.max_ratio : rep.max_ratio_modes;
    };

    double sigma;
    if (probe(sigma_cap) < kappa_limit) {
        sigma = sigma_cap;
    } else {
        double lo = 1e-6 * sigma_cap;
        if (probe(lo) >= kappa_limit) {
            std::ostringstream os;
            os << "choose_params: no sigma makes the cone contract below kappa = " << kappa_limit
               << " (basis power " << b.power << "); consider a higher power of T";
            throw NoFeasibleParams(os.str());
        }
        double hi = sigma_cap;
        for (int it = 0; it < 50; ++it) {
            const double mid = 0.5 * (lo + hi);
            (probe(mid) < kappa_limit ? lo : hi) = mid;
        }
        sigma = 0.98 * lo;
    }

    const double ratio = probe(sigma);
    ResonanceParams out{b.omega, sigma, 0.5 * (ratio + kappa_limit)};
    ConeReport final_rep = check_cone_inclusion(b.T, out, n_samples, K);
    const bool pass = directions_gate ? final_rep.ok : final_rep.modes_ok;
    if (!pass || !(out.kappa * rho < rho_prime))
        throw NoFeasibleParams("choose_params: refinement failed to certify (sigma, kappa)");
    return out;
}

}  // namespace

ResonanceParams choose_params(const KTBasis& b, double rho, double rho_prime, int K) {
    return choose_params_impl(b, rho, rho_prime, K, /*directions_gate=*/true);
}

ResonanceParams choose_params_window(const KTBasis& b, double rho, double rho_prime, int K) {
    return choose_params_impl(b, rho, rho_prime, K, /*directions_gate=*/false);
}

DiophantineFit diophantine_fit(const KTBasis& b, int K) {
    DiophantineFit fit;
    fit.beta = -1.0 - std::log(std::abs(b.lambda[0])) / std::log(std::abs(b.lambda[1]));
    fit.C = std::numeric_limits<double>::infinity();
    auto win = Window::get(b.d, K);
    for (long long r = 0; r < win->size(); ++r) {
        MultiIndex k = win->unrank(r);
        if (k.is_zero()) continue;
        const double v = std::abs(k.dot(b.omega)) * std::pow(static_cast<double>(k.norm1()), fit.beta + 1.0);
        if (v < fit.C) {
            fit.C = v;
            fit.worst = k;
        }
    }
    return fit;
}

double t_inverse_l1_norm(const KTBasis& b) {
    double best = 0;
    for (int j = 0; j < b.d; ++j) {
        double col = 0;
        for (int i = 0; i < b.d; ++i) col += std::abs(static_cast<double>(b.T_inv(i, j)));
        best = std::max(best, col);
    }
    if (best > std::abs(b.lambda1()))
        warn("t_inverse_l1_norm: |T^{-1}|_1 = " + std::to_string(best) + " exceeds lambda_1 = " +
             std::to_string(b.lambda1()));
    return best;
}

}  // namespace torus
