#include "mpslam/measurement_model.hpp"

#include <cmath>
#include <limits>

#include "mpslam/dynamics.hpp"
#include "mpslam/stats.hpp"

namespace mpslam {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kRoot8Pi2 = std::sqrt(8.0) * kPi;

double dist_stddev(double u, const RadioParams& params) {
    return params.c / (kRoot8Pi2 * params.beta_bw * u);
}

double angle_stddev(double u, const RadioParams& params, const ArrayGeometry& array,
                    double angle) {
    const double d2 = array.squared_aperture(angle);
    if (d2 <= 0.0)
        throw std::domain_error("fisher_stddevs: degenerate aperture at the given angle");
    return params.c / (kRoot8Pi2 * params.f_c * u * std::sqrt(d2));
}

}  // namespace

ArrayGeometry::ArrayGeometry(std::vector<ArrayElement> elements) : elements_(std::move(elements)) {
    if (elements_.empty()) throw std::invalid_argument("ArrayGeometry: empty element list");
    const double inv_2n = 0.5 / static_cast<double>(elements_.size());
    for (const auto& e : elements_) {
        const double g = e.dist_m * std::sin(e.elevation_rad);
        const double g2 = g * g;
        a_ += g2 * inv_2n;
        b_ += g2 * std::cos(2.0 * e.azimuth_rad) * inv_2n;
        c_ += g2 * std::sin(2.0 * e.azimuth_rad) * inv_2n;
    }
}

ArrayGeometry ArrayGeometry::uniform_circle(int n_elements, double radius_m) {
    if (n_elements < 1) throw std::invalid_argument("uniform_circle: need at least one element");
    std::vector<ArrayElement> els;
    els.reserve(n_elements);
    for (int i = 0; i < n_elements; ++i) {
        els.push_back({radius_m, 2.0 * kPi * i / n_elements, 0.5 * kPi});
    }
    return ArrayGeometry(std::move(els));
}

double amp_stddev(double u, const RadioParams& params) {
    if (u <= 0.0) throw std::invalid_argument("amp_stddev: requires u > 0");
    const double n = static_cast<double>(params.n_rx) * params.n_tx * params.n_f;
    return std::sqrt(0.5 + u * u / (4.0 * n));
}

FisherStddevs fisher_stddevs(double u, const RadioParams& params, double aod, double aoa) {
    if (u <= 0.0) throw std::invalid_argument("fisher_stddevs: requires u > 0");
    FisherStddevs s;
    s.dist = dist_stddev(u, params);
    s.aod = angle_stddev(u, params, params.tx_array, aod);
    s.aoa = angle_stddev(u, params, params.rx_array, aoa);
    s.amp = amp_stddev(u, params);
    return s;
}

double detection_prob(double u, const RadioParams& params) {
    if (u <= 0.0) throw std::invalid_argument("detection_prob: requires u > 0");
    if (params.u_de <= 0.0) return 1.0;
    const double s = amp_stddev(u, params);
    return marcum_q1(u / s, params.u_de / s);
}

double log_pdf_dist(FeatureType type, double z_d, const Point2& p_agent, const Point2& p_feat,
                    const Point2& p_anchor, double sigma_d) {
    if (sigma_d <= 0.0) throw std::invalid_argument("log_pdf_dist: requires sigma_d > 0");
    const double mean =
        type == FeatureType::va ? dist_va(p_agent, p_feat) : dist_ps(p_agent, p_feat, p_anchor);
    return log_normal_pdf(z_d, mean, sigma_d);
}

double pdf_dist(FeatureType type, double z_d, const Point2& p_agent, const Point2& p_feat,
                const Point2& p_anchor, double sigma_d) {
    return std::exp(log_pdf_dist(type, z_d, p_agent, p_feat, p_anchor, sigma_d));
}

double log_pdf_aod(double z_aod, const Point2& p_anchor, const Point2& target,
                   double aod_orientation, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("log_pdf_aod: requires sigma > 0");
    const double mean = bearing(p_anchor, target, aod_orientation);
    return log_normal_pdf(wrap_angle(z_aod - mean), 0.0, sigma);
}

double pdf_aod(double z_aod, const Point2& p_anchor, const Point2& target, double aod_orientation,
               double sigma) {
    return std::exp(log_pdf_aod(z_aod, p_anchor, target, aod_orientation, sigma));
}

double log_pdf_aoa(double z_aoa, const AgentState& agent, const Point2& p_feat, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("log_pdf_aoa: requires sigma > 0");
    const double orient = orientation_from_velocity(agent.v);
    const double mean = bearing(agent.p, p_feat, orient);
    return log_normal_pdf(wrap_angle(z_aoa - mean), 0.0, sigma);
}

double pdf_aoa(double z_aoa, const AgentState& agent, const Point2& p_feat, double sigma) {
    return std::exp(log_pdf_aoa(z_aoa, agent, p_feat, sigma));
}

double log_pdf_amp(double z_u, double u, const RadioParams& params) {
    if (u <= 0.0) throw std::invalid_argument("log_pdf_amp: requires u > 0");
    if (z_u < params.u_de || z_u < 0.0) return kNegInf;
    const double s = amp_stddev(u, params);
    const double s2 = s * s;
    // Rician numerator, renormalized to the truncation support by p_d.
    const double log_num =
        std::log(z_u / s2) - (z_u * z_u + u * u) / (2.0 * s2) + log_bessel_i0(z_u * u / s2);
    const double pd = detection_prob(u, params);
    return log_num - std::log(pd);
}

double pdf_amp(double z_u, double u, const RadioParams& params) {
    const double l = log_pdf_amp(z_u, u, params);
    return l == kNegInf ? 0.0 : std::exp(l);
}

double log_pdf_fa(const Measurement& z, FaContext ctx, const ClutterParams& clutter,
                  const RadioParams& params, bool enforce_support) {
    if (enforce_support) {
        if (z.dist < 0.0 || z.dist > clutter.d_max) return kNegInf;
        if (z.aoa < -kPi || z.aoa >= kPi) return kNegInf;
        if (ctx == FaContext::with_aod && (z.aod < -kPi || z.aod >= kPi)) return kNegInf;
        if (z.amp < params.u_de) return kNegInf;
    }
    double l = -std::log(clutter.d_max) - std::log(2.0 * kPi);
    if (ctx == FaContext::with_aod) l -= std::log(2.0 * kPi);
    // truncated unit-scale Rayleigh
    l += std::log(z.amp) - 0.5 * (z.amp * z.amp - params.u_de * params.u_de);
    return l;
}

double pdf_fa(const Measurement& z, FaContext ctx, const ClutterParams& clutter,
              const RadioParams& params, bool enforce_support) {
    const double l = log_pdf_fa(z, ctx, clutter, params, enforce_support);
    return l == kNegInf ? 0.0 : std::exp(l);
}

double joint_lhf(FeatureType type, bool is_los, const Measurement& z, const AgentState& agent,
                 const Point2& feat_pos, double feat_amp, const Point2& anchor,
                 double aod_orientation, const RadioParams& params) {
    const double s_dist = dist_stddev(feat_amp, params);
    const double aoa_mean = bearing(agent.p, feat_pos, orientation_from_velocity(agent.v));
    const double s_aoa = angle_stddev(feat_amp, params, params.rx_array, aoa_mean);

    double v = pdf_dist(type, z.dist, agent.p, feat_pos, anchor, s_dist) *
               pdf_aoa(z.aoa, agent, feat_pos, s_aoa) * pdf_amp(z.amp, feat_amp, params);
    if (is_los) {
        const double aod_mean = bearing(anchor, agent.p, aod_orientation);
        const double s_aod = angle_stddev(feat_amp, params, params.tx_array, aod_mean);
        v *= pdf_aod(z.aod, anchor, agent.p, aod_orientation, s_aod);
    } else if (type == FeatureType::ps) {
        const double aod_mean = bearing(anchor, feat_pos, aod_orientation);
        const double s_aod = angle_stddev(feat_amp, params, params.tx_array, aod_mean);
        v *= pdf_aod(z.aod, anchor, feat_pos, aod_orientation, s_aod);
    }
    return v;
}

double log_joint_lhf(FeatureType type, bool is_los, const Measurement& z, const AgentState& agent,
                     const Point2& feat_pos, double feat_amp, const Point2& anchor,
                     double aod_orientation, const RadioParams& params) {
    const double s_dist = dist_stddev(feat_amp, params);
    const double aoa_mean = bearing(agent.p, feat_pos, orientation_from_velocity(agent.v));
    const double s_aoa = angle_stddev(feat_amp, params, params.rx_array, aoa_mean);

    double l = log_pdf_dist(type, z.dist, agent.p, feat_pos, anchor, s_dist) +
               log_pdf_aoa(z.aoa, agent, feat_pos, s_aoa) + log_pdf_amp(z.amp, feat_amp, params);
    if (is_los) {
        const double aod_mean = bearing(anchor, agent.p, aod_orientation);
        const double s_aod = angle_stddev(feat_amp, params, params.tx_array, aod_mean);
        l += log_pdf_aod(z.aod, anchor, agent.p, aod_orientation, s_aod);
    } else if (type == FeatureType::ps) {
        const double aod_mean = bearing(anchor, feat_pos, aod_orientation);
        const double s_aod = angle_stddev(feat_amp, params, params.tx_array, aod_mean);
        l += log_pdf_aod(z.aod, anchor, feat_pos, aod_orientation, s_aod);
    }
    return l;
}

}  // namespace mpslam
