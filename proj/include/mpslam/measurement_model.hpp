#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mpslam/geometry.hpp"

namespace mpslam {

/// Map-feature type: virtual anchor (specular reflection) or point scatterer.
enum class FeatureType : std::uint8_t { va = 0, ps = 1 };

/// One multipath-component detection: distance, departure azimuth, arrival
/// azimuth and normalized amplitude (sqrt component SNR).
struct Measurement {
    double dist = 0.0;
    double aod = 0.0;
    double aoa = 0.0;
    double amp = 0.0;
};

struct ArrayElement {
    double dist_m = 0.0;       // distance from array center
    double azimuth_rad = 0.0;  // azimuth of the element seen from the center
    double elevation_rad = 0.0;
};

/// Antenna array layout with cached coefficients for the squared aperture
/// D^2(angle) = (1/N) sum_i (d_i sin(theta_i) sin(phi_i - angle))^2, which
/// reduces to A - B cos(2 angle) - C sin(2 angle).
class ArrayGeometry {
public:
    explicit ArrayGeometry(std::vector<ArrayElement> elements);

    static ArrayGeometry uniform_circle(int n_elements, double radius_m);

    const std::vector<ArrayElement>& elements() const { return elements_; }

    double squared_aperture(double angle_rad) const {
        const double v = a_ - b_ * std::cos(2.0 * angle_rad) - c_ * std::sin(2.0 * angle_rad);
        return v > 0.0 ? v : 0.0;
    }

private:
    std::vector<ArrayElement> elements_;
    double a_ = 0.0, b_ = 0.0, c_ = 0.0;
};

inline double squared_aperture(const ArrayGeometry& array, double angle_rad) {
    return array.squared_aperture(angle_rad);
}

/// Radio front-end parameters driving the amplitude-dependent measurement
/// noise and the detection probability.
struct RadioParams {
    double beta_bw = 0.0;  // RMS signal bandwidth [Hz]
    double f_c = 0.0;      // carrier frequency [Hz]
    double c = 299792458.0;
    int n_rx = 1;
    int n_tx = 1;
    int n_f = 1;
    double u_de = 0.0;  // detection threshold on normalized amplitude
    ArrayGeometry tx_array{{{0.0, 0.0, 0.0}}};
    ArrayGeometry rx_array{{{0.0, 0.0, 0.0}}};
};

/// Poisson clutter model: mean count per scan and distance support.
struct ClutterParams {
    double mu_fa = 0.0;
    double d_max = 1.0;
};

struct FisherStddevs {
    double dist = 0.0;
    double aod = 0.0;
    double aoa = 0.0;
    double amp = 0.0;
};

/// Amplitude-dependent measurement noise, from the Fisher information of the
/// signal model. All stddevs except amp scale as 1/u.
FisherStddevs fisher_stddevs(double u, const RadioParams& params, double aod, double aoa);

/// sqrt(1/2 + u^2 / (4 n_rx n_tx n_f)); increasing in u.
double amp_stddev(double u, const RadioParams& params);

/// Probability that a feature with normalized amplitude u produces a
/// detection: Q1(u/sigma_u, u_de/sigma_u).
double detection_prob(double u, const RadioParams& params);

double pdf_dist(FeatureType type, double z_d, const Point2& p_agent, const Point2& p_feat,
                const Point2& p_anchor, double sigma_d);
double log_pdf_dist(FeatureType type, double z_d, const Point2& p_agent, const Point2& p_feat,
                    const Point2& p_anchor, double sigma_d);

/// Departure-azimuth likelihood, Gaussian in the wrapped residual. The target
/// is the agent for the direct path and the scatterer for scattered paths.
double pdf_aod(double z_aod, const Point2& p_anchor, const Point2& target, double aod_orientation,
               double sigma);
double log_pdf_aod(double z_aod, const Point2& p_anchor, const Point2& target,
                   double aod_orientation, double sigma);

struct AgentState;  // defined in dynamics.hpp

/// Arrival-azimuth likelihood relative to the velocity-derived heading.
double pdf_aoa(double z_aoa, const AgentState& agent, const Point2& p_feat, double sigma);
double log_pdf_aoa(double z_aoa, const AgentState& agent, const Point2& p_feat, double sigma);

/// Truncated Rician amplitude likelihood on [u_de, inf), renormalized by the
/// detection probability so it integrates to one on its support.
double pdf_amp(double z_u, double u, const RadioParams& params);
double log_pdf_amp(double z_u, double u, const RadioParams& params);

/// False-alarm factorization context: specular paths carry no departure
/// azimuth factor, direct and scattered paths do.
enum class FaContext : std::uint8_t { no_aod, with_aod };

inline FaContext fa_context(FeatureType type, bool is_los) {
    return (type == FeatureType::va && !is_los) ? FaContext::no_aod : FaContext::with_aod;
}

/// Clutter density: uniform in distance and azimuths, truncated unit-scale
/// Rayleigh in amplitude. With enforce_support=false the uniform factors are
/// evaluated without their indicator, for use inside likelihood ratios.
double pdf_fa(const Measurement& z, FaContext ctx, const ClutterParams& clutter,
              const RadioParams& params, bool enforce_support = true);
double log_pdf_fa(const Measurement& z, FaContext ctx, const ClutterParams& clutter,
                  const RadioParams& params, bool enforce_support = true);

/// Full single-measurement likelihood for a feature of the given type. The
/// direct (LOS) path is a VA-type path that additionally constrains the
/// departure azimuth.
double joint_lhf(FeatureType type, bool is_los, const Measurement& z, const AgentState& agent,
                 const Point2& feat_pos, double feat_amp, const Point2& anchor,
                 double aod_orientation, const RadioParams& params);
double log_joint_lhf(FeatureType type, bool is_los, const Measurement& z, const AgentState& agent,
                     const Point2& feat_pos, double feat_amp, const Point2& anchor,
                     double aod_orientation, const RadioParams& params);

}  // namespace mpslam
