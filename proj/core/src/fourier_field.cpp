#include "torus/fourier_field.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <mutex>
#include <sstream>

namespace torus {

namespace {

std::mutex g_warn_mutex;
std::function<void(const std::string&)> g_warn_handler;

double coeff_l1(std::span<const cplx> v) {
    double s = 0;
    for (const cplx& c : v) s += std::abs(c);
    return s;
}

}  // namespace

void set_warning_handler(std::function<void(const std::string&)> handler) {
    std::lock_guard<std::mutex> lock(g_warn_mutex);
    g_warn_handler = std::move(handler);
}

void warn(const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_warn_mutex);
    if (g_warn_handler)
        g_warn_handler(msg);
    else
        std::cerr << "[torus] warning: " << msg << "\n";
}

// --- Window -----------------------------------------------------------------

Window::Window(int dim, int K) : dim_(dim), K_(K) {
    assert(dim >= 1 && K >= 0);
    count_.assign(dim + 1, std::vector<long long>(K + 1, 0));
    for (int r = 0; r <= K; ++r) count_[0][r] = 1;
    for (int d = 1; d <= dim; ++d) {
        for (int r = 0; r <= K; ++r) {
            long long s = count_[d - 1][r];
            for (int x = 1; x <= r; ++x) s += 2 * count_[d - 1][r - x];
            count_[d][r] = s;
        }
    }
    size_ = count_[dim][K];

    pref_.assign(dim, {});
    for (int rem = 0; rem < dim; ++rem) {
        pref_[rem].assign(K + 1, std::vector<long long>(2 * K + 1, 0));
        for (int R = 0; R <= K; ++R) {
            long long acc = 0;
            for (int x = -R; x <= R; ++x) {
                acc += count_[rem][R - std::abs(x)];
                pref_[rem][R][x + K] = acc;
            }
        }
    }
}

long long Window::rank(std::span<const int> k) const {
    long long r = 0;
    int R = K_;
    for (int i = 0; i < dim_; ++i) {
        const int x = k[i];
        assert(std::abs(x) <= R);
        const int rem = dim_ - 1 - i;
        if (x > -R) r += pref_[rem][R][(x - 1) + K_];
        R -= std::abs(x);
    }
    return r;
}

MultiIndex Window::unrank(long long r) const {
    std::vector<int> k(dim_, 0);
    int R = K_;
    for (int i = 0; i < dim_; ++i) {
        const int rem = dim_ - 1 - i;
        int x = -R;
        for (; x <= R; ++x) {
            if (pref_[rem][R][x + K_] > r) break;
        }
        k[i] = x;
        if (x > -R) r -= pref_[rem][R][(x - 1) + K_];
        R -= std::abs(x);
    }
    return MultiIndex(std::move(k));
}

std::vector<MultiIndex> Window::enumerate() const {
    std::vector<MultiIndex> out;
    out.reserve(static_cast<size_t>(size_));
    for (long long r = 0; r < size_; ++r) out.push_back(unrank(r));
    return out;
}

std::shared_ptr<const Window> Window::get(int dim, int K) {
    static std::mutex mtx;
    static std::map<std::pair<int, int>, std::shared_ptr<const Window>> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto key = std::make_pair(dim, K);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto w = std::make_shared<const Window>(dim, K);
    cache.emplace(key, w);
    return w;
}

// --- FourierField ------------------------------------------------------------

FourierField::FourierField(int dim, int ncomp, int trunc_radius, bool real_flag)
    : dim_(dim), ncomp_(ncomp), K_(trunc_radius), real_(real_flag) {
    assert(dim >= 1 && ncomp >= 1 && trunc_radius >= 0);
}

FourierField FourierField::zero(int dim, int trunc_radius, bool real_flag) {
    return FourierField(dim, dim, trunc_radius, real_flag);
}

FourierField FourierField::constant(const CVec& value, int trunc_radius, bool real_flag) {
    FourierField f(static_cast<int>(value.size()), static_cast<int>(value.size()), trunc_radius, real_flag);
    if (value.lpNorm<1>() > 0) {
        f.mode_data_.assign(static_cast<size_t>(f.dim_), 0);
        f.coeff_data_.assign(value.data(), value.data() + value.size());
    }
    return f;
}

FourierField FourierField::constant(const RVec& value, int trunc_radius) {
    CVec v = value.cast<cplx>();
    return constant(v, trunc_radius, /*real_flag=*/true);
}

FourierField FourierField::single_mode(const MultiIndex& k, const CVec& coeff, int trunc_radius) {
    if (k.norm1() > trunc_radius) throw ModeOutOfWindow("single_mode: |k|_1 exceeds truncation radius");
    FourierField f(k.dim(), static_cast<int>(coeff.size()), trunc_radius, false);
    f.mode_data_.assign(k.entries().begin(), k.entries().end());
    f.coeff_data_.assign(coeff.data(), coeff.data() + coeff.size());
    return f;
}

FourierField FourierField::scalar_one(int dim, int trunc_radius) {
    FourierField f(dim, 1, trunc_radius, true);
    f.mode_data_.assign(static_cast<size_t>(dim), 0);
    f.coeff_data_.assign(1, cplx(1.0, 0.0));
    return f;
}

FourierField FourierField::from_sorted(int dim, int ncomp, int K, bool real_flag, std::vector<int> mode_data,
                                       std::vector<cplx> coeff_data) {
    FourierField f(dim, ncomp, K, real_flag);
    f.mode_data_ = std::move(mode_data);
    f.coeff_data_ = std::move(coeff_data);
    return f;
}

std::optional<int> FourierField::find(std::span<const int> k) const {
    const int n = size();
    int lo = 0, hi = n;
    while (lo < hi) {
        int mid = (lo + hi) / 2;
        auto m = mode(mid);
        int cmp = 0;
        for (int i = 0; i < dim_; ++i) {
            if (m[i] != k[i]) {
                cmp = m[i] < k[i] ? -1 : 1;
                break;
            }
        }
        if (cmp < 0)
            lo = mid + 1;
        else if (cmp > 0)
            hi = mid;
        else
            return mid;
    }
    return std::nullopt;
}

CVec FourierField::coeff(const MultiIndex& k) const {
    CVec v = CVec::Zero(ncomp_);
    if (auto i = find(std::span<const int>(k.entries()))) {
        auto c = coeff_at(*i);
        for (int j = 0; j < ncomp_; ++j) v[j] = c[j];
    }
    return v;
}

bool FourierField::has_mode(const MultiIndex& k) const { return find(std::span<const int>(k.entries())).has_value(); }

std::vector<MultiIndex> FourierField::modes() const {
    std::vector<MultiIndex> out;
    out.reserve(static_cast<size_t>(size()));
    for (int i = 0; i < size(); ++i) out.push_back(mode_index(i));
    return out;
}

double FourierField::mass() const {
    double s = 0;
    for (const cplx& c : coeff_data_) s += std::abs(c);
    return s;
}

double FourierField::hermitian_defect() const {
    double worst = 0;
    std::vector<int> neg(dim_);
    for (int i = 0; i < size(); ++i) {
        auto m = mode(i);
        for (int j = 0; j < dim_; ++j) neg[j] = -m[j];
        auto other = find(neg);
        auto c = coeff_at(i);
        for (int j = 0; j < ncomp_; ++j) {
            cplx mirror = other ? coeff_at(*other)[j] : cplx(0, 0);
            worst = std::max(worst, std::abs(c[j] - std::conj(mirror)));
        }
    }
    return worst;
}

FourierField FourierField::operator+(const FourierField& o) const {
    assert(dim_ == o.dim_ && ncomp_ == o.ncomp_);
    const int K = std::max(K_, o.K_);
    std::vector<int> md;
    std::vector<cplx> cd;
    md.reserve(mode_data_.size() + o.mode_data_.size());
    cd.reserve(coeff_data_.size() + o.coeff_data_.size());
    int ia = 0, ib = 0;
    const int na = size(), nb = o.size();
    auto emit = [&](std::span<const int> m, std::span<const cplx> c) {
        bool nonzero = false;
        for (const cplx& x : c)
            if (x != cplx(0, 0)) nonzero = true;
        if (!nonzero) return;
        md.insert(md.end(), m.begin(), m.end());
        cd.insert(cd.end(), c.begin(), c.end());
    };
    std::vector<cplx> tmp(ncomp_);
    while (ia < na || ib < nb) {
        int cmp;
        if (ia >= na)
            cmp = 1;
        else if (ib >= nb)
            cmp = -1;
        else {
            cmp = 0;
            auto ma = mode(ia), mb = o.mode(ib);
            for (int i = 0; i < dim_; ++i) {
                if (ma[i] != mb[i]) {
                    cmp = ma[i] < mb[i] ? -1 : 1;
                    break;
                }
            }
        }
        if (cmp < 0) {
            emit(mode(ia), coeff_at(ia));
            ++ia;
        } else if (cmp > 0) {
            emit(o.mode(ib), o.coeff_at(ib));
            ++ib;
        } else {
            auto ca = coeff_at(ia), cb = o.coeff_at(ib);
            for (int j = 0; j < ncomp_; ++j) tmp[j] = ca[j] + cb[j];
            emit(mode(ia), tmp);
            ++ia;
            ++ib;
        }
    }
    return from_sorted(dim_, ncomp_, K, real_ && o.real_, std::move(md), std::move(cd));
}

FourierField FourierField::operator-(const FourierField& o) const { return (*this) + (o * cplx(-1.0, 0.0)); }

FourierField FourierField::operator*(cplx s) const {
    if (s == cplx(0, 0)) return FourierField(dim_, ncomp_, K_, real_);
    FourierField f(*this);
    for (cplx& c : f.coeff_data_) c *= s;
    if (s.imag() != 0.0) f.real_ = false;
    return f;
}

FourierField FourierField::compact(double tol) const {
    std::vector<int> md;
    std::vector<cplx> cd;
    for (int i = 0; i < size(); ++i) {
        auto c = coeff_at(i);
        double l1 = coeff_l1(c);
        if (l1 == 0.0 || l1 < tol) continue;
        auto m = mode(i);
        md.insert(md.end(), m.begin(), m.end());
        cd.insert(cd.end(), c.begin(), c.end());
    }
    return from_sorted(dim_, ncomp_, K_, real_, std::move(md), std::move(cd));
}

FourierField FourierField::retruncate(int new_K) const {
    std::vector<int> md;
    std::vector<cplx> cd;
    for (int i = 0; i < size(); ++i) {
        auto m = mode(i);
        long long l1 = 0;
        for (int v : m) l1 += std::abs(v);
        if (l1 > new_K) continue;
        md.insert(md.end(), m.begin(), m.end());
        auto c = coeff_at(i);
        cd.insert(cd.end(), c.begin(), c.end());
    }
    return from_sorted(dim_, ncomp_, new_K, real_, std::move(md), std::move(cd));
}

FourierField FourierField::component_series(int j) const {
    assert(j >= 0 && j < ncomp_);
    std::vector<int> md;
    std::vector<cplx> cd;
    for (int i = 0; i < size(); ++i) {
        cplx c = coeff_at(i)[j];
        if (c == cplx(0, 0)) continue;
        auto m = mode(i);
        md.insert(md.end(), m.begin(), m.end());
        cd.push_back(c);
    }
    return from_sorted(dim_, 1, K_, real_, std::move(md), std::move(cd));
}

FourierField FourierField::partial_derivative(int j) const {
    assert(j >= 0 && j < dim_);
    std::vector<int> md;
    std::vector<cplx> cd;
    const cplx tpi(0.0, two_pi);
    for (int i = 0; i < size(); ++i) {
        auto m = mode(i);
        if (m[j] == 0) continue;
        cplx factor = tpi * static_cast<double>(m[j]);
        md.insert(md.end(), m.begin(), m.end());
        auto c = coeff_at(i);
        for (int q = 0; q < ncomp_; ++q) cd.push_back(factor * c[q]);
    }
    return from_sorted(dim_, ncomp_, K_, real_, std::move(md), std::move(cd));
}

// --- FieldBuilder -------------------------------------------------------------

FieldBuilder::FieldBuilder(int dim, int ncomp, int trunc_radius) : dim_(dim), ncomp_(ncomp), K_(trunc_radius) {}

void FieldBuilder::add(const MultiIndex& k, const CVec& v) {
    add(std::span<const int>(k.entries()), std::span<const cplx>(v.data(), static_cast<size_t>(v.size())));
}

void FieldBuilder::add(std::span<const int> k, std::span<const cplx> v) {
    long long l1 = 0;
    for (int x : k) l1 += std::abs(x);
    if (l1 > K_) {
        std::ostringstream os;
        os << "FieldBuilder::add: |k|_1 = " << l1 << " exceeds window K = " << K_;
        throw ModeOutOfWindow(os.str());
    }
    auto [it, inserted] = acc_.try_emplace(std::vector<int>(k.begin(), k.end()), ncomp_, cplx(0, 0));
    for (int j = 0; j < ncomp_; ++j) it->second[j] += v[j];
}

void FieldBuilder::add_field(const FourierField& g, cplx s) {
    std::vector<cplx> tmp(static_cast<size_t>(ncomp_));
    for (int i = 0; i < g.size(); ++i) {
        auto c = g.coeff_at(i);
        for (int j = 0; j < ncomp_; ++j) tmp[j] = s * c[j];
        add(g.mode(i), tmp);
    }
}

FourierField FieldBuilder::build(bool real_flag, double drop_tol) {
    std::vector<int> md;
    std::vector<cplx> cd;
    for (const auto& [k, v] : acc_) {
        double l1 = coeff_l1(v);
        if (l1 == 0.0 || l1 < drop_tol) continue;
        md.insert(md.end(), k.begin(), k.end());
        cd.insert(cd.end(), v.begin(), v.end());
    }
    return FourierField::from_sorted(dim_, ncomp_, K_, real_flag, std::move(md), std::move(cd));
}

// --- norms ---------------------------------------------------------------------

double norm(const FourierField& f, NormKind kind) {
    if (!(kind.r > 0)) throw std::invalid_argument("norm: analyticity radius must be positive");
    double s = 0;
    for (int i = 0; i < f.size(); ++i) {
        auto m = f.mode(i);
        long long l1 = 0;
        for (int v : m) l1 += std::abs(v);
        double w = std::exp(kind.r * static_cast<double>(l1));
        if (kind.tag == NormKind::Tag::prime_r) w *= 1.0 + two_pi * static_cast<double>(l1);
        s += coeff_l1(f.coeff_at(i)) * w;
    }
    return s;
}

CVec mean(const FourierField& f) { return f.coeff(MultiIndex::zero(f.dim())); }

// --- convolution kernel ----------------------------------------------------------

namespace {

/// Dense accumulation buffer over a truncation window. Touched slots are
/// tracked so extraction is O(result size log result size).
class ConvAccum {
  public:
    ConvAccum(int dim, int ncomp, int K)
        : win_(Window::get(dim, K)), dim_(dim), ncomp_(ncomp), K_(K),
          buf_(static_cast<size_t>(win_->size()) * ncomp_, cplx(0, 0)), seen_(static_cast<size_t>(win_->size()), 0),
          key_(dim_) {}

    /// Slot for index ka+kb, or nullptr if it leaves the window.
    cplx* slot_sum(std::span<const int> ka, std::span<const int> kb) {
        long long l1 = 0;
        for (int i = 0; i < dim_; ++i) {
            key_[i] = ka[i] + kb[i];
            l1 += std::abs(key_[i]);
        }
        if (l1 > K_) return nullptr;
        return slot_key();
    }

    cplx* slot(std::span<const int> k) {
        long long l1 = 0;
        for (int i = 0; i < dim_; ++i) {
            key_[i] = k[i];
            l1 += std::abs(k[i]);
        }
        if (l1 > K_) return nullptr;
        return slot_key();
    }

    FourierField finalize(bool real_flag, double drop_tol) {
        std::sort(touched_.begin(), touched_.end());
        std::vector<int> md;
        std::vector<cplx> cd;
        md.reserve(touched_.size() * dim_);
        cd.reserve(touched_.size() * ncomp_);
        double total_mass = 0;
        if (drop_tol < 0) {
            for (long long r : touched_) {
                const cplx* c = buf_.data() + static_cast<size_t>(r) * ncomp_;
                for (int j = 0; j < ncomp_; ++j) total_mass += std::abs(c[j]);
            }
            drop_tol = 1e-16 * total_mass;
        }
        for (long long r : touched_) {
            const cplx* c = buf_.data() + static_cast<size_t>(r) * ncomp_;
            double l1 = 0;
            for (int j = 0; j < ncomp_; ++j) l1 += std::abs(c[j]);
            if (l1 == 0.0 || l1 < drop_tol) continue;
            MultiIndex m = win_->unrank(r);
            md.insert(md.end(), m.entries().begin(), m.entries().end());
            cd.insert(cd.end(), c, c + ncomp_);
        }
        return FourierField::from_sorted(dim_, ncomp_, K_, real_flag, std::move(md), std::move(cd));
    }

  private:
    cplx* slot_key() {
        long long r = win_->rank(key_);
        if (!seen_[static_cast<size_t>(r)]) {
            seen_[static_cast<size_t>(r)] = 1;
            touched_.push_back(r);
        }
        return buf_.data() + static_cast<size_t>(r) * ncomp_;
    }

    std::shared_ptr<const Window> win_;
    int dim_, ncomp_, K_;
    std::vector<cplx> buf_;
    std::vector<uint8_t> seen_;
    std::vector<long long> touched_;
    std::vector<int> key_;
};

int common_radius(const FourierField& a, const FourierField& b) { return std::min(a.trunc_radius(), b.trunc_radius()); }

}  // namespace

FourierField jacobian_apply(const FourierField& f, const FourierField& g, double drop_tol) {
    assert(f.dim() == g.dim());
    assert(f.components() >= 1 && g.components() == g.dim());
    const int d = f.dim();
    const int nc = f.components();
    if (f.empty() || g.empty()) return FourierField(d, nc, common_radius(f, g), f.real_flag() && g.real_flag());
    ConvAccum acc(d, nc, common_radius(f, g));
    const cplx tpi(0.0, two_pi);
    for (int a = 0; a < f.size(); ++a) {
        auto ka = f.mode(a);
        auto ca = f.coeff_at(a);
        bool kzero = true;
        for (int i = 0; i < d; ++i)
            if (ka[i] != 0) kzero = false;
        if (kzero) continue;  // Df of a constant mode vanishes
        for (int b = 0; b < g.size(); ++b) {
            auto cb = g.coeff_at(b);
            cplx kd(0, 0);
            for (int j = 0; j < d; ++j) kd += static_cast<double>(ka[j]) * cb[j];
            if (kd == cplx(0, 0)) continue;
            cplx s = tpi * kd;
            cplx* out = acc.slot_sum(ka, g.mode(b));
            if (!out) continue;
            for (int i = 0; i < nc; ++i) out[i] += s * ca[i];
        }
    }
    return acc.finalize(f.real_flag() && g.real_flag(), drop_tol);
}

FourierField scalar_multiply(const FourierField& alpha, const FourierField& f, double drop_tol) {
    assert(alpha.components() == 1 && alpha.dim() == f.dim());
    const int d = f.dim();
    const int nc = f.components();
    if (alpha.empty() || f.empty()) return FourierField(d, nc, common_radius(alpha, f), alpha.real_flag() && f.real_flag());
    ConvAccum acc(d, nc, common_radius(alpha, f));
    for (int a = 0; a < alpha.size(); ++a) {
        const cplx s = alpha.coeff_at(a)[0];
        auto ka = alpha.mode(a);
        for (int b = 0; b < f.size(); ++b) {
            cplx* out = acc.slot_sum(ka, f.mode(b));
            if (!out) continue;
            auto cb = f.coeff_at(b);
            for (int i = 0; i < nc; ++i) out[i] += s * cb[i];
        }
    }
    return acc.finalize(alpha.real_flag() && f.real_flag(), drop_tol);
}

FourierField dot_product(const FourierField& f, const FourierField& g, double drop_tol) {
    assert(f.dim() == g.dim() && f.components() == g.components());
    const int d = f.dim();
    if (f.empty() || g.empty()) return FourierField(d, 1, common_radius(f, g), f.real_flag() && g.real_flag());
    ConvAccum acc(d, 1, common_radius(f, g));
    const int nc = f.components();
    for (int a = 0; a < f.size(); ++a) {
        auto ca = f.coeff_at(a);
        auto ka = f.mode(a);
        for (int b = 0; b < g.size(); ++b) {
            cplx* out = acc.slot_sum(ka, g.mode(b));
            if (!out) continue;
            auto cb = g.coeff_at(b);
            cplx s(0, 0);
            for (int i = 0; i < nc; ++i) s += ca[i] * cb[i];
            out[0] += s;
        }
    }
    return acc.finalize(f.real_flag() && g.real_flag(), drop_tol);
}

// --- composition -----------------------------------------------------------------

namespace {

/// Coefficients of the alpha-th partial derivative scaled by 1: each mode k
/// picks up prod_j (2 pi i k_j)^{alpha_j}.
FourierField derivative_power(const FourierField& f, std::span<const int> alpha) {
    std::vector<int> md;
    std::vector<cplx> cd;
    const int d = f.dim();
    const int nc = f.components();
    const cplx tpi(0.0, two_pi);
    for (int i = 0; i < f.size(); ++i) {
        auto m = f.mode(i);
        cplx factor(1.0, 0.0);
        bool zero = false;
        for (int j = 0; j < d && !zero; ++j) {
            for (int p = 0; p < alpha[j]; ++p) {
                if (m[j] == 0) {
                    zero = true;
                    break;
                }
                factor *= tpi * static_cast<double>(m[j]);
            }
        }
        if (zero) continue;
        md.insert(md.end(), m.begin(), m.end());
        auto c = f.coeff_at(i);
        for (int q = 0; q < nc; ++q) cd.push_back(factor * c[q]);
    }
    return FourierField::from_sorted(d, nc, f.trunc_radius(), f.real_flag(), std::move(md), std::move(cd));
}

/// Enumerate compositions of m into d non-negative parts, lexicographically.
void enumerate_alphas(int d, int m, std::vector<std::vector<int>>& out) {
    std::vector<int> cur(d, 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == d - 1) {
            cur[pos] = left;
            out.push_back(cur);
            return;
        }
        for (int v = 0; v <= left; ++v) {
            cur[pos] = v;
            rec(pos + 1, left - v);
        }
    };
    rec(0, m);
}

struct ComposeState {
    FourierField composed;
    std::vector<FourierField> jacobian;
};

ComposeState compose_impl(const FourierField& f, const FourierField& u, const ComposeOptions& opt,
                          bool want_jacobian) {
    const int d = f.dim();
    assert(u.dim() == d && u.components() == d);
    if (opt.order_cap < 1) throw std::invalid_argument("compose_displacement: order_cap must be >= 1");

    ComposeState st;
    st.composed = f;
    if (want_jacobian) {
        st.jacobian.reserve(static_cast<size_t>(d));
        for (int j = 0; j < d; ++j) st.jacobian.push_back(f.partial_derivative(j));
    }
    if (u.empty()) return st;  // identity displacement, bit-exact

    if (opt.warn) {
        double nu = norm(u, NormKind::prime(opt.rho_prime));
        double lemma = (opt.rho - opt.rho_prime) / (2.0 * two_pi);
        if (nu >= 1.0)
            warn("compose_displacement: |u|'_{rho'} = " + std::to_string(nu) + " >= 1");
        else if (norm(u, NormKind::plain(opt.rho_prime)) >= lemma)
            warn("compose_displacement: |u|_{rho'} exceeds (rho-rho')/4pi = " + std::to_string(lemma));
    }

    // Taylor series f(id+u) = sum_alpha (d^alpha f) u^alpha / alpha!.
    std::vector<FourierField> u_comp;
    for (int j = 0; j < d; ++j) u_comp.push_back(u.component_series(j));

    std::map<std::vector<int>, FourierField> table_prev;
    table_prev.emplace(std::vector<int>(d, 0), FourierField::scalar_one(d, f.trunc_radius()));

    double prev_term_mass = st.composed.mass();
    for (int m = 1;; ++m) {
        std::vector<std::vector<int>> alphas;
        enumerate_alphas(d, m, alphas);
        std::map<std::vector<int>, FourierField> table_cur;
        FourierField term(d, f.components(), f.trunc_radius(), f.real_flag() && u.real_flag());
        std::vector<FourierField> jterm;
        if (want_jacobian)
            for (int j = 0; j < d; ++j) jterm.emplace_back(d, f.components(), f.trunc_radius(), true);

        for (const auto& alpha : alphas) {
            int j0 = 0;
            while (alpha[j0] == 0) ++j0;
            std::vector<int> prev = alpha;
            prev[j0] -= 1;
            const FourierField& base = table_prev.at(prev);
            FourierField ua = scalar_multiply(u_comp[j0], base, opt.drop_tol) * (1.0 / static_cast<double>(alpha[j0]));
            if (ua.empty()) {
                table_cur.emplace(alpha, std::move(ua));
                continue;
            }
            term = term + scalar_multiply(ua, derivative_power(f, alpha), opt.drop_tol);
            if (want_jacobian) {
                for (int j = 0; j < d; ++j) {
                    std::vector<int> aj = alpha;
                    aj[j] += 1;
                    jterm[j] = jterm[j] + scalar_multiply(ua, derivative_power(f, aj), opt.drop_tol);
                }
            }
            table_cur.emplace(alpha, std::move(ua));
        }

        const double term_mass = term.mass();
        st.composed = st.composed + term;
        if (want_jacobian)
            for (int j = 0; j < d; ++j) st.jacobian[j] = st.jacobian[j] + jterm[j];

        if (term_mass < opt.tol) break;
        if (m >= opt.order_cap) {
            if (term_mass >= prev_term_mass) {
                std::ostringstream os;
                os << "compose_displacement: series terms not decreasing after " << opt.order_cap
                   << " orders (last term mass " << term_mass << ")";
                throw NonConvergence(os.str());
            }
            break;
        }
        prev_term_mass = term_mass;
        table_prev = std::move(table_cur);
    }

    double drop = opt.drop_tol < 0 ? 1e-16 * st.composed.mass() : opt.drop_tol;
    st.composed = st.composed.compact(drop);
    if (want_jacobian)
        for (int j = 0; j < d; ++j) st.jacobian[j] = st.jacobian[j].compact(drop);
    return st;
}

}  // namespace

FourierField compose_displacement(const FourierField& f, const FourierField& u, int order_cap, double tol) {
    ComposeOptions opt;
    opt.order_cap = order_cap;
    opt.tol = tol;
    return compose_impl(f, u, opt, false).composed;
}

FourierField compose_displacement(const FourierField& f, const FourierField& u, const ComposeOptions& opt) {
    return compose_impl(f, u, opt, false).composed;
}

ComposeBundle compose_with_jacobian(const FourierField& f, const FourierField& u, const ComposeOptions& opt) {
    ComposeState st = compose_impl(f, u, opt, true);
    return ComposeBundle{std::move(st.composed), std::move(st.jacobian)};
}

// --- Neumann inversion ---------------------------------------------------------

FourierField neumann_inverse_apply(const FourierField& u, const FourierField& g, double tol, int max_terms,
                                   double drop_tol) {
    assert(u.dim() == g.dim() && u.components() == u.dim());
    if (u.empty()) return g;
    FourierField sum = g;
    FourierField term = g;
    double prev_mass = term.mass();
    int non_decreasing = 0;
    for (int n = 1; n <= max_terms; ++n) {
        term = jacobian_apply(u, term, drop_tol) * cplx(-1.0, 0.0);
        sum = sum + term;
        const double m = term.mass();
        if (m < tol) return sum;
        if (m >= prev_mass) {
            if (++non_decreasing >= 5) throw Divergence("neumann_inverse_apply: term norms non-decreasing");
        } else {
            non_decreasing = 0;
        }
        prev_mass = m;
    }
    throw Divergence("neumann_inverse_apply: series did not reach tolerance in max_terms");
}

// --- evaluation -------------------------------------------------------------------

CVec evaluate(const FourierField& f, const RVec& theta) {
    assert(theta.size() == f.dim());
    CVec out = CVec::Zero(f.components());
    for (int i = 0; i < f.size(); ++i) {
        auto m = f.mode(i);
        double phase = 0;
        for (int j = 0; j < f.dim(); ++j) phase += m[j] * theta[j];
        const cplx e = std::polar(1.0, two_pi * phase);
        auto c = f.coeff_at(i);
        for (int q = 0; q < f.components(); ++q) out[q] += c[q] * e;
    }
    return out;
}

CMat evaluate_jacobian(const FourierField& f, const RVec& theta) {
    assert(theta.size() == f.dim());
    CMat J = CMat::Zero(f.components(), f.dim());
    const cplx tpi(0.0, two_pi);
    for (int i = 0; i < f.size(); ++i) {
        auto m = f.mode(i);
        double phase = 0;
        for (int j = 0; j < f.dim(); ++j) phase += m[j] * theta[j];
        const cplx e = std::polar(1.0, two_pi * phase);
        auto c = f.coeff_at(i);
        for (int q = 0; q < f.components(); ++q)
            for (int j = 0; j < f.dim(); ++j) J(q, j) += c[q] * e * tpi * static_cast<double>(m[j]);
    }
    return J;
}

}  // namespace torus
