#pragma once

#include <random>
#include <span>
#include <vector>

#include "mpslam/dynamics.hpp"
#include "mpslam/engine.hpp"
#include "mpslam/geometry.hpp"
#include "mpslam/measurement_model.hpp"

namespace mpslam {

/// Ground-truth map feature. For virtual anchors, mirror_chain records the
/// reflecting walls used to construct it; when empty, the wall is recovered
/// as the perpendicular bisector between the anchor and the feature.
struct TrueFeature {
    FeatureType type = FeatureType::va;
    Point2 pos;
    std::vector<WallSegment> mirror_chain;
};

struct SynthParams {
    double u_ref = 30.0;  // nominal amplitude at the reference path length
    double d_ref = 10.0;
    bool include_los = false;
    bool noiseless = false;
};

/// Complete synthetic experiment description.
struct Scenario {
    Environment env;
    std::vector<AgentState> trajectory;
    std::vector<TrueFeature> features;
    RadioParams radio;
    ClutterParams clutter;
    SynthParams synth;
};

/// Piecewise-linear constant-speed trajectory through the waypoints, sampled
/// every speed * dt meters of arc length. Velocities point along the segment
/// currently being traversed.
std::vector<AgentState> generate_trajectory(std::span<const Point2> waypoints, double speed,
                                            double dt);

/// Free-space-like amplitude decay u(d) = u_ref * d_ref / d.
double nominal_amplitude(const SynthParams& synth, double path_dist);

/// True path length of a feature seen from the given agent position.
double feature_path_distance(const TrueFeature& f, const Point2& anchor, const Point2& agent);

/// True departure azimuth of the feature's path. For virtual anchors this is
/// the direction toward the agent mirrored back through the reflection chain.
double feature_aod(const TrueFeature& f, const Environment& env, const Point2& agent);

/// One scan: Bernoulli-thinned feature detections with Fisher-level noise and
/// truncated-Rician amplitudes, plus Poisson clutter, in shuffled order.
std::vector<Measurement> generate_measurements(const Scenario& scenario, int step,
                                               std::mt19937_64& rng);

/// Ships the bundled experiment: a 10 m straight track sampled every 10 cm,
/// one scatterer and two first-order virtual anchors.
Scenario default_scenario();

/// Filter configuration matching the default scenario.
SlamConfig default_slam_config(const Scenario& scenario);

}  // namespace mpslam
