#include "torus/flow.hpp"

#include <cassert>
#include <cmath>
#include <sstream>

namespace torus {

namespace {

RVec eval_real(const FourierField& X, const RVec& theta) {
    CVec v = evaluate(X, theta);
    return v.real();
}

RVec rk4_step(const FourierField& X, const RVec& y, double dt) {
    RVec k1 = eval_real(X, y);
    RVec k2 = eval_real(X, y + 0.5 * dt * k1);
    RVec k3 = eval_real(X, y + 0.5 * dt * k2);
    RVec k4 = eval_real(X, y + dt * k3);
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Trajectory integrate(const FourierField& X, const RVec& theta0, double t_end, double dt) {
    if (!X.real_flag()) throw std::invalid_argument("integrate: X must be real-flagged");
    if (!(dt > 0)) throw std::invalid_argument("integrate: dt must be positive");

    Trajectory traj;
    traj.theta0 = theta0;
    const int n_steps = static_cast<int>(std::ceil(t_end / dt - 1e-12));
    traj.times.reserve(static_cast<size_t>(n_steps) + 1);
    traj.points.reserve(static_cast<size_t>(n_steps) + 1);
    traj.times.push_back(0.0);
    traj.points.push_back(theta0);

    RVec y = theta0;
    double t = 0.0;
    for (int s = 0; s < n_steps; ++s) {
        const double h = std::min(dt, t_end - t);
        RVec full = rk4_step(X, y, h);
        RVec half = rk4_step(X, rk4_step(X, y, 0.5 * h), 0.5 * h);
        const double err = (full - half).lpNorm<1>();
        if (err > 1e-6) {
            std::ostringstream os;
            os << "integrate: step-doubling error " << err << " at t = " << t << " exceeds 1e-6; reduce dt";
            throw StepTooLarge(os.str());
        }
        y = half;  // keep the more accurate value
        t += h;
        traj.times.push_back(t);
        traj.points.push_back(y);
    }
    return traj;
}

WindingEstimate winding_ratio(const Trajectory& traj) {
    WindingEstimate est;
    if (traj.points.empty()) return est;
    const RVec& last = traj.points.back();
    const double n_last = last.lpNorm<1>();

    if (n_last <= 10.0) {
        // bounded-orbit convention: winding ratio zero
        double peak = 0.0;
        for (const RVec& p : traj.points) peak = std::max(peak, p.lpNorm<1>());
        est.w = RVec::Zero(last.size());
        est.confident = peak <= 10.0;
        return est;
    }

    const size_t mid = traj.points.size() / 2;
    const RVec& half = traj.points[mid];
    if (half.lpNorm<1>() <= 0) return est;
    RVec w_full = last / n_last;
    RVec w_half = half / half.lpNorm<1>();
    const double disagreement = (w_full - w_half).lpNorm<1>();
    if (disagreement > 1e-2) return est;  // undefined: horizons disagree
    est.w = w_full;
    est.confident = true;
    return est;
}

double conjugacy_residual(const FourierField& X, const FourierField& Y, const FourierField& u, const KTBasis& b,
                          cplx rescale, int grid_n) {
    assert(X.dim() == b.d && Y.dim() == b.d);
    const int d = b.d;
    const Eigen::MatrixXd Td = b.T.cast<double>();

    double worst = 0.0;
    std::vector<int> idx(d, 0);
    const double step = 1.0 / static_cast<double>(grid_n);
    const long long total = static_cast<long long>(std::pow(grid_n, d));
    for (long long flat = 0; flat < total; ++flat) {
        long long rem = flat;
        RVec theta(d);
        for (int i = 0; i < d; ++i) {
            theta[i] = static_cast<double>(rem % grid_n) * step;
            rem /= grid_n;
        }
        const RVec Ttheta = Td * theta;
        const CVec u_at = u.empty() ? CVec::Zero(d) : evaluate(u, Ttheta);
        const RVec h_theta = Ttheta + u_at.real();
        // Dh(theta) = (I + Du(T theta)) T
        CMat Du = u.empty() ? CMat::Zero(d, d) : evaluate_jacobian(u, Ttheta);
        CMat Dh = (CMat::Identity(d, d) + Du) * Td.cast<cplx>();
        const CVec y_val = evaluate(Y, theta);
        const CVec lhs = rescale * (Dh * y_val);
        const CVec rhs = evaluate(X, h_theta);
        worst = std::max(worst, (lhs - rhs).lpNorm<1>());
    }
    return worst;
}

double conjugacy_residual(const FourierField& X, const RenormStepResult& step, const KTBasis& b, int grid_n) {
    return conjugacy_residual(X, step.field, step.u, b, step.report.rescale, grid_n);
}

}  // namespace torus
