#include "mpslam/dynamics.hpp"

#include <stdexcept>

namespace mpslam {

AgentState predict_agent(const AgentState& x, const MotionParams& params, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double nux = params.sigma_nu * n(rng);
    const double nuy = params.sigma_nu * n(rng);
    const double dt = params.dt;
    const double half_dt2 = 0.5 * dt * dt;
    AgentState out;
    out.p = {x.p.x + x.v.x * dt + half_dt2 * nux, x.p.y + x.v.y * dt + half_dt2 * nuy};
    out.v = {x.v.x + dt * nux, x.v.y + dt * nuy};
    return out;
}

std::pair<Point2, double> predict_feature(const Point2& pos, double amp,
                                          const MotionParams& params, const RadioParams& radio,
                                          std::mt19937_64& rng) {
    if (amp <= 0.0) throw std::invalid_argument("predict_feature: requires amp > 0");
    std::normal_distribution<double> n(0.0, 1.0);
    Point2 p{pos.x + params.sigma_p_feat * n(rng), pos.y + params.sigma_p_feat * n(rng)};
    double u = amp + amp_stddev(amp, radio) * n(rng);
    if (u < kAmpFloor) u = kAmpFloor;
    return {p, u};
}

std::array<double, 2> predict_type(const std::array<double, 2>& pmf, const TypeTransition& t) {
    if (std::abs(pmf[0] + pmf[1] - 1.0) > 1e-9)
        throw std::invalid_argument("predict_type: input PMF not normalized");
    std::array<double, 2> out{};
    out[0] = t.q[0][0] * pmf[0] + t.q[0][1] * pmf[1];
    out[1] = t.q[1][0] * pmf[0] + t.q[1][1] * pmf[1];
    const double s = out[0] + out[1];
    out[0] /= s;
    out[1] /= s;
    return out;
}

}  // namespace mpslam
