#include "mpslam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpslam {

std::vector<double> rmse_position(const std::vector<std::vector<Point2>>& est,
                                  const std::vector<Point2>& truth) {
    if (est.empty()) throw std::invalid_argument("rmse_position: no runs");
    for (const auto& run : est)
        if (run.size() != truth.size())
            throw std::invalid_argument("rmse_position: run length does not match truth");
    std::vector<double> out(truth.size(), 0.0);
    for (std::size_t s = 0; s < truth.size(); ++s) {
        double acc = 0.0;
        for (const auto& run : est) acc += (run[s] - truth[s]).squared_norm();
        out[s] = std::sqrt(acc / static_cast<double>(est.size()));
    }
    return out;
}

std::vector<double> rmse_orientation(const std::vector<std::vector<double>>& est_rad,
                                     const std::vector<double>& truth_rad) {
    if (est_rad.empty()) throw std::invalid_argument("rmse_orientation: no runs");
    for (const auto& run : est_rad)
        if (run.size() != truth_rad.size())
            throw std::invalid_argument("rmse_orientation: run length does not match truth");
    std::vector<double> out(truth_rad.size(), 0.0);
    for (std::size_t s = 0; s < truth_rad.size(); ++s) {
        double acc = 0.0;
        for (const auto& run : est_rad) {
            const double d = wrap_angle(run[s] - truth_rad[s]);
            acc += d * d;
        }
        out[s] = std::sqrt(acc / static_cast<double>(est_rad.size())) * 180.0 / kPi;
    }
    return out;
}

std::vector<ModeTrace> mode_belief_trace(const std::vector<RunMapTrace>& runs,
                                         const std::vector<Point2>& true_positions,
                                         double match_radius) {
    if (match_radius <= 0.0)
        throw std::invalid_argument("mode_belief_trace: match_radius must be > 0");
    std::size_t n_steps = 0;
    for (const auto& r : runs) n_steps = std::max(n_steps, r.size());

    std::vector<ModeTrace> traces(true_positions.size());
    for (auto& t : traces) {
        t.p_va.assign(n_steps, 0.0);
        t.p_ps.assign(n_steps, 0.0);
        t.matched.assign(n_steps, 0);
    }

    for (const auto& run : runs) {
        for (std::size_t s = 0; s < run.size(); ++s) {
            // greedy nearest-neighbor assignment within the radius
            struct Pair {
                double d;
                std::size_t t, e;
            };
            std::vector<Pair> pairs;
            for (std::size_t t = 0; t < true_positions.size(); ++t)
                for (std::size_t e = 0; e < run[s].size(); ++e) {
                    const double d = (run[s][e].pos - true_positions[t]).norm();
                    if (d <= match_radius) pairs.push_back({d, t, e});
                }
            std::sort(pairs.begin(), pairs.end(),
                      [](const Pair& a, const Pair& b) { return a.d < b.d; });
            std::vector<bool> t_used(true_positions.size(), false);
            std::vector<bool> e_used(run[s].size(), false);
            for (const auto& p : pairs) {
                if (t_used[p.t] || e_used[p.e]) continue;
                t_used[p.t] = true;
                e_used[p.e] = true;
                traces[p.t].p_va[s] += run[s][p.e].p_va;
                traces[p.t].p_ps[s] += run[s][p.e].p_ps;
                traces[p.t].matched[s] += 1;
            }
        }
    }
    for (auto& t : traces) {
        for (std::size_t s = 0; s < n_steps; ++s) {
            if (t.matched[s] > 0) {
                t.p_va[s] /= t.matched[s];
                t.p_ps[s] /= t.matched[s];
            }
        }
    }
    return traces;
}

}  // namespace mpslam
