#pragma once

// Exhaustive permutation oracle for the two-sided Mann-Whitney p-value:
// every way of choosing which n_a pooled observations form sample A.

#include <cstdint>
#include <cstdlib>
#include <vector>

namespace dbmef::testing {

// 2U by the pairwise definition, kept integral.
inline std::int64_t doubled_u_pairwise(const std::vector<double>& a, const std::vector<double>& b) {
    std::int64_t u = 0;
    for (double x : a) {
        for (double y : b) u += x > y ? 2 : (x == y ? 1 : 0);
    }
    return u;
}

inline double exhaustive_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    const int n = static_cast<int>(pooled.size()), na = static_cast<int>(a.size());
    const std::int64_t centre = static_cast<std::int64_t>(a.size() * b.size());
    const std::int64_t observed = std::llabs(doubled_u_pairwise(a, b) - centre);
    std::uint64_t total = 0, extreme = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (__builtin_popcount(mask) != na) continue;
        std::int64_t u = 0;
        for (int i = 0; i < n; ++i) {
            if (!((mask >> i) & 1u)) continue;
            for (int j = 0; j < n; ++j) {
                if ((mask >> j) & 1u) continue;
                u += pooled[i] > pooled[j] ? 2 : (pooled[i] == pooled[j] ? 1 : 0);
            }
        }
        ++total;
        if (std::llabs(u - centre) >= observed) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(total);
}

}  // namespace dbmef::testing
