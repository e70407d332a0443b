#ifndef TORUS_FOURIER_FIELD_HPP
#define TORUS_FOURIER_FIELD_HPP

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "torus/errors.hpp"
#include "torus/multi_index.hpp"

namespace torus {

using cplx = std::complex<double>;
using RVec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double two_pi = 6.283185307179586476925286766559;

/// Which weighted l1 norm to evaluate: |f|_r = sum |f_k| e^{r|k|} or the
/// derivative-weighted variant |f|'_r = sum (1+2pi|k|) |f_k| e^{r|k|}.
struct NormKind {
    enum class Tag { plain_r, prime_r };
    Tag tag = Tag::plain_r;
    double r = 0.0;  // analyticity radius, > 0

    static NormKind plain(double r) { return {Tag::plain_r, r}; }
    static NormKind prime(double r) { return {Tag::prime_r, r}; }
};

/// Truncation window: all integer indices with l1 norm <= K, ordered
/// lexicographically. Provides O(d) rank lookups used by the sparse
/// convolution kernels. Instances are cached per (dim, K).
class Window {
  public:
    static std::shared_ptr<const Window> get(int dim, int K);

    int dim() const { return dim_; }
    int radius() const { return K_; }
    long long size() const { return size_; }

    /// Lexicographic rank of k among window points; k must satisfy |k|_1 <= K.
    long long rank(std::span<const int> k) const;
    MultiIndex unrank(long long r) const;
    /// All window points in lexicographic order.
    std::vector<MultiIndex> enumerate() const;

    Window(int dim, int K);

  private:
    int dim_;
    int K_;
    long long size_;
    // count_[d'][r] = number of points of the l1 ball of radius r in Z^{d'}
    std::vector<std::vector<long long>> count_;
    // pref_[d'][R][x+K] = sum_{y=-R..x} count_[d'][R-|y|]; entries for |x|<=R
    std::vector<std::vector<std::vector<long long>>> pref_;
};

/// Finite Fourier series sum_k c_k e^{2 pi i k.theta} with c_k in C^m and
/// k restricted to the l1 ball |k|_1 <= K. Vector fields have m == dim;
/// scalar series (elements of A_1) have m == 1. Values are immutable after
/// construction; every operation returns a fresh field.
class FourierField {
  public:
    FourierField() = default;
    FourierField(int dim, int ncomp, int trunc_radius, bool real_flag = false);

    static FourierField zero(int dim, int trunc_radius, bool real_flag = true);
    static FourierField constant(const CVec& value, int trunc_radius, bool real_flag = false);
    static FourierField constant(const RVec& value, int trunc_radius);
    /// Single-mode field c e^{2 pi i k.theta}.
    static FourierField single_mode(const MultiIndex& k, const CVec& coeff, int trunc_radius);
    static FourierField scalar_one(int dim, int trunc_radius);

    int dim() const { return dim_; }
    int components() const { return ncomp_; }
    int trunc_radius() const { return K_; }
    bool real_flag() const { return real_; }
    void set_real_flag(bool r) { real_ = r; }
    int size() const { return static_cast<int>(mode_data_.size() / std::max(dim_, 1)); }
    bool empty() const { return mode_data_.empty(); }

    std::span<const int> mode(int i) const { return {mode_data_.data() + static_cast<size_t>(i) * dim_, static_cast<size_t>(dim_)}; }
    MultiIndex mode_index(int i) const { return MultiIndex(mode(i)); }
    std::span<const cplx> coeff_at(int i) const {
        return {coeff_data_.data() + static_cast<size_t>(i) * ncomp_, static_cast<size_t>(ncomp_)};
    }

    /// Coefficient at k; zero vector if the mode is absent.
    CVec coeff(const MultiIndex& k) const;
    bool has_mode(const MultiIndex& k) const;
    std::optional<int> find(std::span<const int> k) const;

    std::vector<MultiIndex> modes() const;

    /// Sum of coefficient l1 norms (the plain norm at r = 0).
    double mass() const;
    /// Largest |c(k) - conj(c(-k))| entry; zero for exactly Hermitian data.
    double hermitian_defect() const;

    FourierField operator+(const FourierField& o) const;
    FourierField operator-(const FourierField& o) const;
    FourierField operator*(cplx s) const;
    FourierField operator*(double s) const { return (*this) * cplx(s, 0.0); }
    FourierField operator/(cplx s) const { return (*this) * (cplx(1.0, 0.0) / s); }
    FourierField operator-() const { return (*this) * cplx(-1.0, 0.0); }

    /// Drop coefficients with l1 norm below tol (>= 0, absolute).
    FourierField compact(double tol) const;
    /// Copy with a new truncation radius, dropping modes outside it.
    FourierField retruncate(int new_K) const;
    /// Component j as a scalar series.
    FourierField component_series(int j) const;
    /// Partial derivative d/d theta_j (coefficients scaled by 2 pi i k_j).
    FourierField partial_derivative(int j) const;

    /// Internal: construct from pre-sorted parallel arrays.
    static FourierField from_sorted(int dim, int ncomp, int K, bool real_flag,
                                    std::vector<int> mode_data, std::vector<cplx> coeff_data);

  private:
    int dim_ = 0;
    int ncomp_ = 0;
    int K_ = 0;
    bool real_ = false;
    std::vector<int> mode_data_;    // size() * dim_, lexicographically sorted
    std::vector<cplx> coeff_data_;  // size() * ncomp_
};

/// Incremental accumulator used to assemble fields mode by mode.
class FieldBuilder {
  public:
    FieldBuilder(int dim, int ncomp, int trunc_radius);

    /// Accumulate v into the coefficient at k. Throws ModeOutOfWindow if
    /// |k|_1 > K.
    void add(const MultiIndex& k, const CVec& v);
    void add(std::span<const int> k, std::span<const cplx> v);
    /// Accumulate the whole field g scaled by s.
    void add_field(const FourierField& g, cplx s = cplx(1.0, 0.0));

    /// Finalize; drops exact zeros and coefficients below drop_tol.
    FourierField build(bool real_flag = false, double drop_tol = 0.0);

  private:
    int dim_;
    int ncomp_;
    int K_;
    std::map<std::vector<int>, std::vector<cplx>> acc_;
};

// --- norms and basic operations -------------------------------------------

/// Truncated norm sum; empty field gives 0. Requires kind.r > 0.
double norm(const FourierField& f, NormKind kind);

/// Average over the torus: the k = 0 coefficient (zero vector if absent).
CVec mean(const FourierField& f);

/// Matrix-vector product Df(theta) g(theta) as a truncated series.
/// f must be a vector field (components == dim); g any component count.
FourierField jacobian_apply(const FourierField& f, const FourierField& g, double drop_tol = -1.0);

/// Pointwise product of a scalar series with a field.
FourierField scalar_multiply(const FourierField& alpha, const FourierField& f, double drop_tol = -1.0);

/// Dot product f.g as a scalar series (components == 1).
FourierField dot_product(const FourierField& f, const FourierField& g, double drop_tol = -1.0);

struct ComposeOptions {
    int order_cap = 30;
    double tol = 1e-15;        // stop once a series term has mass below this
    double drop_tol = -1.0;    // negative: relative 1e-16 of running mass
    double rho = 0.6;          // radii used only for the Lemma-hypothesis warning
    double rho_prime = 0.5;
    bool warn = true;
};

/// f composed with the displacement id + u: f(theta + u(theta)) summed as
/// a Taylor series in u. Exact (bit-identical) when u is empty.
FourierField compose_displacement(const FourierField& f, const FourierField& u, int order_cap, double tol);
FourierField compose_displacement(const FourierField& f, const FourierField& u, const ComposeOptions& opt);

/// One composition pass returning f(id+u) together with the composed
/// partial derivatives (d_j f)(id+u) for j = 0..d-1 (shared series tables).
struct ComposeBundle {
    FourierField composed;
    std::vector<FourierField> jacobian;  // d entries
};
ComposeBundle compose_with_jacobian(const FourierField& f, const FourierField& u, const ComposeOptions& opt);

/// (I + Du)^{-1} g via the Neumann series sum_n (-Du)^n g.
FourierField neumann_inverse_apply(const FourierField& u, const FourierField& g, double tol, int max_terms,
                                   double drop_tol = -1.0);

/// Direct series evaluation at a point of the torus.
CVec evaluate(const FourierField& f, const RVec& theta);
/// Jacobian matrix Df(theta) (rows: component, cols: d/d theta_j).
CMat evaluate_jacobian(const FourierField& f, const RVec& theta);

/// Warning sink for non-fatal diagnostics (defaults to stderr).
void set_warning_handler(std::function<void(const std::string&)> handler);
void warn(const std::string& msg);

}  // namespace torus

#endif
