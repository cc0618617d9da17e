#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "mpslam/association.hpp"
#include "mpslam/dynamics.hpp"
#include "mpslam/geometry.hpp"
#include "mpslam/measurement_model.hpp"

namespace mpslam {

struct SlamConfig {
    MotionParams motion;
    RadioParams radio;
    ClutterParams clutter;
    TypeTransition type_transition;
    double mu_n = 0.1;   // mean number of new features per scan
    double p_de = 0.5;   // detection threshold on existence
    double p_pr = 1e-3;  // pruning threshold on existence
    int n_particles = 20000;
    std::uint64_t seed = 0;

    Point2 anchor;
    double anchor_aod_orientation = 0.0;
    bool anchor_known = true;       // fixed anchor position vs tight prior
    double anchor_prior_std = 0.1;  // only used when the anchor is estimated

    // Diffuse birth prior, expressed in measurement coordinates: uniform over
    // distance/azimuth supports and over amplitude in [u_de, birth_u_max].
    double birth_u_max = 150.0;

    // Initial agent prior: uniform box around the start hint.
    double init_pos_halfwidth = 0.2;
    double init_vel_halfwidth = 0.2;
};

struct Particle {
    AgentState agent;
    double weight = 0.0;
};

struct FeaturePoint {
    Point2 pos;
    double amp = 0.0;
};

/// Particle belief over one potential map feature, with existence probability
/// and a PMF over the two feature types.
struct FeatureBelief {
    int id = 0;
    std::vector<FeaturePoint> particles;
    std::vector<double> weights;
    double p_exist = 0.0;
    std::array<double, 2> type_pmf{0.5, 0.5};  // indexed by FeatureType
    int birth_time = 0;
    bool is_anchor = false;
};

class PdTable;  // cached detection-probability lookup, engine-internal

struct SlamState {
    int step = 0;
    std::vector<Particle> agent_particles;
    std::vector<FeatureBelief> features;
    int k_count = 0;  // features ever instantiated (ids are never reused)
    std::shared_ptr<const PdTable> pd_table;
};

/// Thrown when every agent particle receives zero posterior weight.
struct FilterDivergence : std::runtime_error {
    explicit FilterDivergence(int step_index)
        : std::runtime_error("filter divergence at step " + std::to_string(step_index)),
          step(step_index) {}
    int step;
};

/// Fresh filter state: agent particles from a uniform box centered on
/// (start_hint, zero velocity), plus the anchor as permanent feature 1.
SlamState init_slam(const SlamConfig& cfg, const Point2& start_hint);

/// One filter step: prediction, association-weight evaluation, BP data
/// association, agent/feature/type/existence updates, feature birth,
/// resampling, pruning.
SlamState step(SlamState state, std::span<const Measurement> measurements, const SlamConfig& cfg);

struct MapFeature {
    int id = 0;
    Point2 pos;
    std::array<double, 2> type_pmf{0.5, 0.5};
    double p_exist = 0.0;
};

struct Estimate {
    AgentState agent;
    double orientation = 0.0;
    std::vector<MapFeature> map;  // features with p_exist >= p_de
};

Estimate estimate(const SlamState& state, const SlamConfig& cfg);

/// Systematic resampling. Weights must be normalized and not all zero;
/// returns n survivors with expected multiplicity n * w_i each.
template <class T>
std::vector<T> resample(const std::vector<T>& particles, const std::vector<double>& weights,
                        std::size_t n, std::mt19937_64& rng) {
    if (particles.size() != weights.size() || particles.empty())
        throw std::invalid_argument("resample: size mismatch or empty input");
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw std::invalid_argument("resample: degenerate (all-zero) weights");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double start = u01(rng) / static_cast<double>(n);
    std::vector<T> out;
    out.reserve(n);
    double cum = 0.0;
    std::size_t i = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double target = total * (start + static_cast<double>(j) / static_cast<double>(n));
        while (cum + weights[i] < target && i + 1 < particles.size()) cum += weights[i++];
        out.push_back(particles[i]);
    }
    return out;
}

double effective_sample_size(std::span<const double> weights);

/// Legacy-feature pseudo-likelihood branch for one (agent particle, feature
/// particle) pair: assignment a_k > 0 gives the likelihood ratio against
/// clutter times the detection probability, a_k = 0 the missed-detection
/// complement. A nonexistent feature contributes the indicator of a_k = 0.
double weight_legacy(FeatureType type, bool is_los, bool exists, const AgentState& agent,
                     const Point2& feat_pos, double feat_amp, int a_k, const Measurement* z,
                     const SlamConfig& cfg);

/// New-feature pseudo-likelihood branch: zero when the measurement is claimed
/// by a legacy feature, otherwise the birth-intensity likelihood ratio. The
/// birth prior is diffuse in measurement coordinates; birth_logprop is the
/// proposal log-density of the sampled feature (importance correction).
double weight_new(FeatureType type, const AgentState& agent, const Point2& birth_pos,
                  double birth_amp, double birth_logprop, int assoc, const Measurement& z,
                  const SlamConfig& cfg);

/// log of the diffuse birth prior density, expressed per measurement-space
/// volume over (distance, arrival azimuth, amplitude).
double log_birth_density(const SlamConfig& cfg);

/// Feature position implied by a direct-path measurement: the point at the
/// measured distance along the global arrival direction.
Point2 invert_va_measurement(double dist, double aoa_global, const Point2& agent);

/// Scatterer position consistent with a scattered-path measurement, if one
/// exists: the point on the arrival ray whose anchor-scatterer-agent path
/// length equals the measured distance.
std::optional<Point2> invert_ps_measurement(double dist, double aoa_global, const Point2& agent,
                                            const Point2& anchor);

/// Birth proposal for one measurement: feature particles obtained by sampling
/// measurement space at the Fisher stddevs and inverting the path geometry
/// from the agent estimate (per-sample type drawn from the initial type PMF).
struct BirthProposal {
    std::vector<FeaturePoint> particles;
    std::vector<double> log_prop;      // proposal log-density per particle
    std::vector<FeatureType> sample_type;
};

BirthProposal birth_proposal(const Measurement& z, const AgentState& agent_estimate,
                             const SlamConfig& cfg, std::mt19937_64& rng);

}  // namespace mpslam
