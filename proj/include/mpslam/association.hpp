#pragma once

#include <vector>

namespace mpslam {

/// Single-scan association weights between K legacy features and M
/// measurements. beta is K x M row-major; beta(k, m) is the evidence that
/// feature k generated measurement m, beta0[k] the missed-detection weight,
/// xi[m] the weight that measurement m started a new feature.
struct AssociationWeights {
    int K = 0;
    int M = 0;
    std::vector<double> beta;
    std::vector<double> beta0;
    std::vector<double> xi;

    double beta_at(int k, int m) const { return beta[static_cast<std::size_t>(k) * M + m]; }
    double& beta_at(int k, int m) { return beta[static_cast<std::size_t>(k) * M + m]; }
};

/// Marginal association probabilities. p_legacy is K x (M+1); row k is the
/// PMF over the feature-oriented assignment (column 0 = missed, column m =
/// measurement m). p_meas is M x (K+1); row m is the PMF over the
/// measurement-oriented assignment (column 0 = not from a legacy feature).
/// nu holds the converged measurement-to-feature messages, needed by the
/// filter's marginal updates.
struct AssociationResult {
    int K = 0;
    int M = 0;
    std::vector<double> p_legacy;
    std::vector<double> p_meas;
    std::vector<double> nu;  // M x K
    bool converged = true;
    int iterations = 0;

    double legacy_at(int k, int m_or_0) const {
        return p_legacy[static_cast<std::size_t>(k) * (M + 1) + m_or_0];
    }
    double meas_at(int m, int k_or_0) const {
        return p_meas[static_cast<std::size_t>(m) * (K + 1) + k_or_0];
    }
    double nu_at(int m, int k) const { return nu[static_cast<std::size_t>(m) * K + k]; }
};

/// Pairwise consistency indicator between the two redundant assignment
/// directions: zero iff exactly one of (a_k = m, abar_m = k) holds. Feature
/// and measurement indices k, m are 1-based; assignment value 0 means none.
inline int psi(int a_k, int abar_m, int k, int m) {
    const bool fwd = a_k == m;
    const bool bwd = abar_m == k;
    return fwd == bwd ? 1 : 0;
}

/// Loopy belief propagation on the bipartite association graph. Undamped;
/// convergence is max absolute message change < tol. On non-convergence the
/// last iterate is returned with converged = false.
AssociationResult bp_marginals(const AssociationWeights& w, double tol = 1e-6, int max_iter = 50);

/// Exact marginals by enumerating every consistent assignment. Verification
/// oracle; throws for K > 6 or M > 6.
AssociationResult exact_marginals(const AssociationWeights& w);

}  // namespace mpslam
