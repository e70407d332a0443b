#include "oracle.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace oracle {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<RVec> grid_points(int dim, int N) {
    const long long total = static_cast<long long>(std::pow(N, dim));
    std::vector<RVec> pts;
    pts.reserve(static_cast<size_t>(total));
    for (long long flat = 0; flat < total; ++flat) {
        long long rem = flat;
        RVec theta(dim);
        for (int i = 0; i < dim; ++i) {
            theta[i] = static_cast<double>(rem % N) / static_cast<double>(N);
            rem /= N;
        }
        pts.push_back(std::move(theta));
    }
    return pts;
}

CVec eval_at(const FourierField& f, const RVec& theta) {
    CVec out = CVec::Zero(f.components());
    for (int i = 0; i < f.size(); ++i) {
        auto m = f.mode(i);
        double phase = 0;
        for (int j = 0; j < f.dim(); ++j) phase += m[j] * theta[j];
        const cplx e(std::cos(kTwoPi * phase), std::sin(kTwoPi * phase));
        auto c = f.coeff_at(i);
        for (int q = 0; q < f.components(); ++q) out[q] += c[q] * e;
    }
    return out;
}

Eigen::MatrixXcd jac_at(const FourierField& f, const RVec& theta) {
    Eigen::MatrixXcd J = Eigen::MatrixXcd::Zero(f.components(), f.dim());
    for (int i = 0; i < f.size(); ++i) {
        auto m = f.mode(i);
        double phase = 0;
        for (int j = 0; j < f.dim(); ++j) phase += m[j] * theta[j];
        const cplx e = cplx(0, kTwoPi) * cplx(std::cos(kTwoPi * phase), std::sin(kTwoPi * phase));
        auto c = f.coeff_at(i);
        for (int q = 0; q < f.components(); ++q)
            for (int j = 0; j < f.dim(); ++j) J(q, j) += c[q] * e * static_cast<double>(m[j]);
    }
    return J;
}

}  // namespace

std::vector<CVec> grid_eval(const FourierField& f, int N) {
    auto pts = grid_points(f.dim(), N);
    std::vector<CVec> out;
    out.reserve(pts.size());
    for (const RVec& th : pts) out.push_back(eval_at(f, th));
    return out;
}

FourierField grid_to_field(const std::vector<CVec>& values, int dim, int ncomp, int N, int K) {
    auto win = torus::Window::get(dim, K);
    auto pts = grid_points(dim, N);
    const double inv = 1.0 / static_cast<double>(pts.size());
    torus::FieldBuilder fb(dim, ncomp, K);
    for (long long r = 0; r < win->size(); ++r) {
        torus::MultiIndex k = win->unrank(r);
        CVec acc = CVec::Zero(ncomp);
        for (size_t g = 0; g < pts.size(); ++g) {
            double phase = 0;
            for (int j = 0; j < dim; ++j) phase += k[j] * pts[g][j];
            const cplx e(std::cos(-kTwoPi * phase), std::sin(-kTwoPi * phase));
            acc += values[g] * e;
        }
        acc *= inv;
        if (acc.lpNorm<1>() > 0) fb.add(k, acc);
    }
    return fb.build(false, 0.0);
}

FourierField jacobian_apply(const FourierField& f, const FourierField& g, int N) {
    auto pts = grid_points(f.dim(), N);
    std::vector<CVec> vals;
    vals.reserve(pts.size());
    for (const RVec& th : pts) vals.push_back(CVec(jac_at(f, th) * eval_at(g, th)));
    return grid_to_field(vals, f.dim(), f.components(), N, std::min(f.trunc_radius(), g.trunc_radius()));
}

FourierField compose(const FourierField& f, const FourierField& u, int N) {
    auto pts = grid_points(f.dim(), N);
    std::vector<CVec> vals;
    vals.reserve(pts.size());
    for (const RVec& th : pts) {
        CVec shift = eval_at(u, th);
        RVec shifted = th + shift.real();
        // direct series summation at the (complex-displaced) point; our test
        // inputs keep the displacement real
        vals.push_back(eval_at(f, shifted));
    }
    return grid_to_field(vals, f.dim(), f.components(), N, f.trunc_radius());
}

FourierField neumann_inverse(const FourierField& u, const FourierField& g, int N) {
    auto pts = grid_points(u.dim(), N);
    const int d = u.dim();
    std::vector<CVec> vals;
    vals.reserve(pts.size());
    for (const RVec& th : pts) {
        Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(d, d) + jac_at(u, th);
        vals.push_back(CVec(A.partialPivLu().solve(eval_at(g, th))));
    }
    return grid_to_field(vals, d, g.components(), N, std::min(u.trunc_radius(), g.trunc_radius()));
}

double max_coeff_error(const FourierField& a, const FourierField& b) {
    double worst = 0;
    for (int i = 0; i < a.size(); ++i) {
        CVec diff = CVec::Zero(a.components());
        auto c = a.coeff_at(i);
        CVec other = b.coeff(a.mode_index(i));
        for (int q = 0; q < a.components(); ++q) diff[q] = c[q] - other[q];
        worst = std::max(worst, diff.lpNorm<Eigen::Infinity>());
    }
    for (int i = 0; i < b.size(); ++i) {
        if (a.has_mode(b.mode_index(i))) continue;
        auto c = b.coeff_at(i);
        double m = 0;
        for (int q = 0; q < b.components(); ++q) m = std::max(m, std::abs(c[q]));
        worst = std::max(worst, m);
    }
    return worst;
}

}  // namespace oracle
