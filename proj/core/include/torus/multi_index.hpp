#ifndef TORUS_MULTI_INDEX_HPP
#define TORUS_MULTI_INDEX_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace torus {

/// Integer Fourier mode index k in Z^d, compared lexicographically.
class MultiIndex {
  public:
    MultiIndex() = default;
    explicit MultiIndex(std::vector<int> entries) : k_(std::move(entries)) {}
    MultiIndex(std::initializer_list<int> entries) : k_(entries) {}
    explicit MultiIndex(std::span<const int> entries) : k_(entries.begin(), entries.end()) {}

    static MultiIndex zero(int dim) { return MultiIndex(std::vector<int>(dim, 0)); }

    int dim() const { return static_cast<int>(k_.size()); }
    int operator[](int i) const { return k_[i]; }
    int& operator[](int i) { return k_[i]; }
    const std::vector<int>& entries() const { return k_; }

    /// l1 norm, exact in integer arithmetic.
    long long norm1() const {
        long long s = 0;
        for (int v : k_) s += v < 0 ? -static_cast<long long>(v) : v;
        return s;
    }

    bool is_zero() const {
        for (int v : k_)
            if (v != 0) return false;
        return true;
    }

    MultiIndex operator-() const {
        MultiIndex r(*this);
        for (int& v : r.k_) v = -v;
        return r;
    }
    MultiIndex operator+(const MultiIndex& o) const {
        MultiIndex r(*this);
        for (size_t i = 0; i < k_.size(); ++i) r.k_[i] += o.k_[i];
        return r;
    }
    MultiIndex operator-(const MultiIndex& o) const {
        MultiIndex r(*this);
        for (size_t i = 0; i < k_.size(); ++i) r.k_[i] -= o.k_[i];
        return r;
    }
    MultiIndex operator*(int m) const {
        MultiIndex r(*this);
        for (int& v : r.k_) v *= m;
        return r;
    }

    double dot(const Eigen::VectorXd& w) const {
        double s = 0;
        for (size_t i = 0; i < k_.size(); ++i) s += k_[i] * w[static_cast<Eigen::Index>(i)];
        return s;
    }

    Eigen::VectorXd as_vector() const {
        Eigen::VectorXd v(dim());
        for (int i = 0; i < dim(); ++i) v[i] = k_[i];
        return v;
    }

    auto operator<=>(const MultiIndex&) const = default;

  private:
    std::vector<int> k_;
};

/// Image index under an integer matrix: (M k)_i = sum_j M_ij k_j.
MultiIndex apply_int_matrix(const Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>& M,
                            const MultiIndex& k);

}  // namespace torus

#endif
