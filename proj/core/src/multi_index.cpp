#include "torus/multi_index.hpp"

namespace torus {

MultiIndex apply_int_matrix(const Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>& M,
                            const MultiIndex& k) {
    const int d = k.dim();
    std::vector<int> out(d, 0);
    for (int i = 0; i < d; ++i) {
        long long s = 0;
        for (int j = 0; j < d; ++j) s += M(i, j) * k[j];
        out[i] = static_cast<int>(s);
    }
    return MultiIndex(std::move(out));
}

}  // namespace torus
