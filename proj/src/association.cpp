#include "mpslam/association.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpslam {

namespace {

void validate(const AssociationWeights& w) {
    if (w.K < 0 || w.M < 0) throw std::invalid_argument("association: negative dimensions");
    if (w.beta.size() != static_cast<std::size_t>(w.K) * w.M ||
        w.beta0.size() != static_cast<std::size_t>(w.K) ||
        w.xi.size() != static_cast<std::size_t>(w.M))
        throw std::invalid_argument("association: weight array sizes do not match K, M");
    for (double v : w.beta)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("association: beta entries must be finite and >= 0");
    for (double v : w.beta0)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("association: beta0 entries must be finite and >= 0");
    for (double v : w.xi)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("association: xi entries must be finite and >= 0");
}

// Scale each feature row (beta row plus beta0) so its largest entry is one.
// Marginals are invariant under per-row scaling; this keeps the message
// arithmetic away from overflow for extreme likelihood ratios.
AssociationWeights row_normalized(const AssociationWeights& w) {
    AssociationWeights s = w;
    for (int k = 0; k < w.K; ++k) {
        double mx = s.beta0[k];
        for (int m = 0; m < w.M; ++m) mx = std::max(mx, s.beta_at(k, m));
        if (mx <= 0.0) continue;
        s.beta0[k] /= mx;
        for (int m = 0; m < w.M; ++m) s.beta_at(k, m) /= mx;
    }
    return s;
}

void normalize_row(double* row, int n) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += row[i];
    if (sum > 0.0) {
        for (int i = 0; i < n; ++i) row[i] /= sum;
    } else {
        row[0] = 1.0;
        for (int i = 1; i < n; ++i) row[i] = 0.0;
    }
}

}  // namespace

AssociationResult bp_marginals(const AssociationWeights& w_in, double tol, int max_iter) {
    validate(w_in);
    const AssociationWeights w = row_normalized(w_in);
    const int K = w.K;
    const int M = w.M;

    AssociationResult r;
    r.K = K;
    r.M = M;
    r.p_legacy.assign(static_cast<std::size_t>(K) * (M + 1), 0.0);
    r.p_meas.assign(static_cast<std::size_t>(M) * (K + 1), 0.0);
    r.nu.assign(static_cast<std::size_t>(M) * K, 1.0);

    std::vector<double> mu(static_cast<std::size_t>(K) * M, 0.0);
    const auto mu_at = [&](int k, int m) -> double& {
        return mu[static_cast<std::size_t>(k) * M + m];
    };
    const auto nu_at = [&](int m, int k) -> double& {
        return r.nu[static_cast<std::size_t>(m) * K + k];
    };

    if (K > 0 && M > 0) {
        r.converged = false;
        for (int it = 0; it < max_iter; ++it) {
            // feature -> measurement
            for (int k = 0; k < K; ++k) {
                double total = w.beta0[k];
                for (int m = 0; m < M; ++m) total += w.beta_at(k, m) * nu_at(m, k);
                for (int m = 0; m < M; ++m) {
                    const double denom = total - w.beta_at(k, m) * nu_at(m, k);
                    double mu = denom > 0.0 ? w.beta_at(k, m) / denom : 0.0;
                    if (!std::isfinite(mu)) mu = 1e300;
                    mu_at(k, m) = mu;
                }
            }
            // measurement -> feature
            double delta = 0.0;
            for (int m = 0; m < M; ++m) {
                double total = 1.0 + w.xi[m];
                for (int k = 0; k < K; ++k) total += mu_at(k, m);
                for (int k = 0; k < K; ++k) {
                    const double next = 1.0 / (total - mu_at(k, m));
                    delta = std::max(delta, std::abs(next - nu_at(m, k)));
                    nu_at(m, k) = next;
                }
            }
            r.iterations = it + 1;
            if (delta < tol) {
                r.converged = true;
                break;
            }
        }
    }

    for (int k = 0; k < K; ++k) {
        double* row = &r.p_legacy[static_cast<std::size_t>(k) * (M + 1)];
        row[0] = w.beta0[k];
        for (int m = 0; m < M; ++m) row[m + 1] = w.beta_at(k, m) * nu_at(m, k);
        normalize_row(row, M + 1);
    }
    for (int m = 0; m < M; ++m) {
        double* row = &r.p_meas[static_cast<std::size_t>(m) * (K + 1)];
        row[0] = 1.0 + w.xi[m];
        for (int k = 0; k < K; ++k) row[k + 1] = mu_at(k, m);
        normalize_row(row, K + 1);
    }
    return r;
}

AssociationResult exact_marginals(const AssociationWeights& w_in) {
    validate(w_in);
    if (w_in.K > 6 || w_in.M > 6)
        throw std::invalid_argument("exact_marginals: instance too large to enumerate (K, M <= 6)");
    const AssociationWeights w = row_normalized(w_in);
    const int K = w.K;
    const int M = w.M;

    AssociationResult r;
    r.K = K;
    r.M = M;
    r.p_legacy.assign(static_cast<std::size_t>(K) * (M + 1), 0.0);
    r.p_meas.assign(static_cast<std::size_t>(M) * (K + 1), 0.0);
    r.nu.assign(static_cast<std::size_t>(M) * K, 1.0);
    r.iterations = 0;

    // One pass over all assignments a: features -> {0..M}, injective on
    // nonzero values. Unassigned measurements contribute their (1 + xi) mass;
    // the xi part is the new-feature branch.
    std::vector<int> assign(K, 0);
    std::vector<int> claimed(M, 0);  // feature index + 1, or 0

    const auto weight_of = [&]() {
        double v = 1.0;
        for (int k = 0; k < K; ++k)
            v *= assign[k] == 0 ? w.beta0[k] : w.beta_at(k, assign[k] - 1);
        for (int m = 0; m < M; ++m)
            if (claimed[m] == 0) v *= 1.0 + w.xi[m];
        return v;
    };

    double total = 0.0;
    const auto record = [&]() {
        const double v = weight_of();
        total += v;
        for (int k = 0; k < K; ++k)
            r.p_legacy[static_cast<std::size_t>(k) * (M + 1) + assign[k]] += v;
        for (int m = 0; m < M; ++m) {
            if (claimed[m] != 0) {
                r.p_meas[static_cast<std::size_t>(m) * (K + 1) + claimed[m]] += v;
            } else {
                // split the unassigned mass between clutter and new-feature
                // branches; both map to column 0 of the measurement PMF
                r.p_meas[static_cast<std::size_t>(m) * (K + 1)] += v;
            }
        }
    };

    const auto recurse = [&](auto&& self, int k) -> void {
        if (k == K) {
            record();
            return;
        }
        assign[k] = 0;
        self(self, k + 1);
        for (int m = 0; m < M; ++m) {
            if (claimed[m] != 0) continue;
            assign[k] = m + 1;
            claimed[m] = k + 1;
            self(self, k + 1);
            claimed[m] = 0;
        }
        assign[k] = 0;
    };
    recurse(recurse, 0);

    for (int k = 0; k < K; ++k)
        normalize_row(&r.p_legacy[static_cast<std::size_t>(k) * (M + 1)], M + 1);
    for (int m = 0; m < M; ++m)
        normalize_row(&r.p_meas[static_cast<std::size_t>(m) * (K + 1)], K + 1);
    return r;
}

}  // namespace mpslam
