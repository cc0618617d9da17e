#pragma once

#include <array>
#include <random>
#include <utility>

#include "mpslam/geometry.hpp"
#include "mpslam/measurement_model.hpp"

namespace mpslam {

/// Mobile agent state: planar position and velocity. The array heading is
/// derived from the velocity direction and not stored.
struct AgentState {
    Point2 p;
    Vec2 v;
};

struct MotionParams {
    double dt = 1.0;             // sampling period
    double sigma_nu = 0.05;      // driving-noise stddev per axis [m/s per step]
    double sigma_p_feat = 1e-5;  // feature position walk stddev [m]
    double p_s = 0.999;          // survival probability
};

/// Feature-type Markov chain. Columns index the previous type and sum to one:
/// q[to][from] = P(type_n = to | type_{n-1} = from).
struct TypeTransition {
    std::array<std::array<double, 2>, 2> q{{{1.0, 0.0}, {0.0, 1.0}}};
};

/// Amplitudes are floored here to keep the Fisher noise model away from its
/// singularity at zero.
inline constexpr double kAmpFloor = 1e-3;

/// Near constant-velocity step: p' = p + v dt + (dt^2/2) nu, v' = v + dt nu,
/// with nu drawn iid Gaussian per axis.
AgentState predict_agent(const AgentState& x, const MotionParams& params, std::mt19937_64& rng);

/// Feature random walk: position noise sigma_p_feat per axis, amplitude noise
/// with the amplitude's own Fisher stddev. Result amplitude is floored.
std::pair<Point2, double> predict_feature(const Point2& pos, double amp,
                                          const MotionParams& params, const RadioParams& radio,
                                          std::mt19937_64& rng);

/// One Markov-chain step of the type PMF. Input must be normalized.
std::array<double, 2> predict_type(const std::array<double, 2>& pmf, const TypeTransition& t);

inline double predict_existence(double p_exist, double p_s) { return p_s * p_exist; }

}  // namespace mpslam
