#include "mpslam/engine.hpp"
#include <cstdio>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mpslam/random.hpp"
#include "mpslam/stats.hpp"

namespace mpslam {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Initial type PMF of a feature that has not produced evidence yet.
constexpr std::array<double, 2> kInitialTypePmf{0.5, 0.5};

// Clutter-rate floor used inside likelihood ratios so that clutter-free
// configurations stay finite.
constexpr double kMuFaFloor = 1e-12;

double safe_orientation(const AgentState& agent, double fallback) {
    if (agent.v.x == 0.0 && agent.v.y == 0.0) return fallback;
    return std::atan2(agent.v.y, agent.v.x);
}

}  // namespace

/// Detection probability sampled on a uniform amplitude grid with linear
/// interpolation; the exact Marcum evaluation is too slow for per-particle use.
class PdTable {
public:
    PdTable(const RadioParams& radio, int n_points, double u_max)
        : lo_(kAmpFloor), hi_(u_max), values_(static_cast<std::size_t>(n_points)) {
        const double du = (hi_ - lo_) / (n_points - 1);
        inv_du_ = 1.0 / du;
        for (int i = 0; i < n_points; ++i)
            values_[i] = detection_prob(lo_ + i * du, radio);
    }

    double operator()(double u) const {
        if (u <= lo_) return values_.front();
        if (u >= hi_) return values_.back();
        const double t = (u - lo_) * inv_du_;
        const auto i = static_cast<std::size_t>(t);
        const double f = t - static_cast<double>(i);
        return values_[i] * (1.0 - f) + values_[i + 1] * f;
    }

private:
    double lo_, hi_, inv_du_ = 0.0;
    std::vector<double> values_;
};

double effective_sample_size(std::span<const double> weights) {
    double s = 0.0, s2 = 0.0;
    for (double w : weights) {
        s += w;
        s2 += w * w;
    }
    return s2 > 0.0 ? s * s / s2 : 0.0;
}

SlamState init_slam(const SlamConfig& cfg, const Point2& start_hint) {
    if (cfg.n_particles <= 0) throw std::invalid_argument("init_slam: n_particles must be > 0");
    if (cfg.p_de < 0.0 || cfg.p_de > 1.0 || cfg.p_pr < 0.0 || cfg.p_pr > 1.0)
        throw std::invalid_argument("init_slam: thresholds must lie in [0, 1]");

    SlamState st;
    st.step = 0;
    st.k_count = 1;
    st.pd_table = std::make_shared<const PdTable>(cfg.radio, 16384,
                                                  std::max(2.0 * cfg.birth_u_max, 128.0));

    const std::size_t n = static_cast<std::size_t>(cfg.n_particles);
    auto rng = substream(cfg.seed, kStreamInit);
    std::uniform_real_distribution<double> upos(-cfg.init_pos_halfwidth, cfg.init_pos_halfwidth);
    std::uniform_real_distribution<double> uvel(-cfg.init_vel_halfwidth, cfg.init_vel_halfwidth);
    st.agent_particles.resize(n);
    for (auto& pt : st.agent_particles) {
        pt.agent.p = {start_hint.x + upos(rng), start_hint.y + upos(rng)};
        pt.agent.v = {uvel(rng), uvel(rng)};
        pt.weight = 1.0 / static_cast<double>(n);
    }

    FeatureBelief anchor;
    anchor.id = 1;
    anchor.is_anchor = true;
    anchor.p_exist = 1.0;
    anchor.type_pmf = {1.0, 0.0};
    anchor.birth_time = 0;
    anchor.particles.resize(n);
    anchor.weights.assign(n, 1.0 / static_cast<double>(n));
    std::normal_distribution<double> g(0.0, 1.0);
    // Spike-and-slab amplitude prior for the direct path: a spike at the
    // floor ("currently obstructed", unharmed by missed detections) plus a
    // flat component over the birth range, so the anchor survives the blind
    // bootstrap phase and can still claim a direct path of any strength.
    const double amp_lo = std::max(cfg.radio.u_de, 2.0 * kAmpFloor);
    std::uniform_real_distribution<double> ua(amp_lo, std::max(cfg.birth_u_max, amp_lo + 1.0));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (auto& fp : anchor.particles) {
        fp.pos = cfg.anchor;
        if (!cfg.anchor_known) {
            fp.pos.x += cfg.anchor_prior_std * g(rng);
            fp.pos.y += cfg.anchor_prior_std * g(rng);
        }
        fp.amp = u01(rng) < 0.5 ? kAmpFloor : ua(rng);
    }
    st.features.push_back(std::move(anchor));
    return st;
}

Point2 invert_va_measurement(double dist, double aoa_global, const Point2& agent) {
    return {agent.x + dist * std::cos(aoa_global), agent.y + dist * std::sin(aoa_global)};
}

namespace {
// Near-field exclusion around either antenna: the far-field path model does
// not cover scatterers glued to the agent or the anchor (a direct path
// masquerades as either).
constexpr double kMinScatterRange = 1.0;
}  // namespace

std::optional<Point2> invert_ps_measurement(double dist, double aoa_global, const Point2& agent,
                                            const Point2& anchor) {
    // scatterer on the arrival ray at range s with |anchor - ps| + s = dist
    const Vec2 e{std::cos(aoa_global), std::sin(aoa_global)};
    const Vec2 d = anchor - agent;
    const double denom = dist - d.dot(e);
    if (denom <= 1e-9) return std::nullopt;
    const double s = 0.5 * (dist * dist - d.squared_norm()) / denom;
    if (s <= kMinScatterRange || dist - s <= kMinScatterRange) return std::nullopt;
    return Point2{agent.x + s * e.x, agent.y + s * e.y};
}

std::optional<Point2> invert_ps_from_departure(double dist, double aod_global,
                                               const Point2& agent, const Point2& anchor) {
    // scatterer on the departure ray at range rho with rho + |ps - agent| = dist;
    // unlike the arrival ray, this construction does not involve the agent
    // heading, so every sample lands where the anchored geometry dictates
    const Vec2 e{std::cos(aod_global), std::sin(aod_global)};
    const Vec2 b = anchor - agent;
    const double denom = dist + b.dot(e);
    if (denom <= 1e-9) return std::nullopt;
    const double rho = 0.5 * (dist * dist - b.squared_norm()) / denom;
    if (rho <= kMinScatterRange || dist - rho <= kMinScatterRange) return std::nullopt;
    return Point2{anchor.x + rho * e.x, anchor.y + rho * e.y};
}

double log_birth_density(const SlamConfig& cfg) {
    const double span = std::max(cfg.birth_u_max - cfg.radio.u_de, 1.0);
    return -std::log(cfg.clutter.d_max) - std::log(2.0 * kPi) - std::log(span);
}

double weight_legacy(FeatureType type, bool is_los, bool exists, const AgentState& agent,
                     const Point2& feat_pos, double feat_amp, int a_k, const Measurement* z,
                     const SlamConfig& cfg) {
    if (a_k < 0) throw std::invalid_argument("weight_legacy: negative assignment");
    if (!exists) return a_k == 0 ? 1.0 : 0.0;
    if (a_k == 0) return 1.0 - detection_prob(feat_amp, cfg.radio);
    if (z == nullptr)
        throw std::invalid_argument("weight_legacy: assigned branch requires a measurement");
    const double num = joint_lhf(type, is_los, *z, agent, feat_pos, feat_amp, cfg.anchor,
                                 cfg.anchor_aod_orientation, cfg.radio) *
                       detection_prob(feat_amp, cfg.radio);
    const double den = std::max(cfg.clutter.mu_fa, kMuFaFloor) *
                       pdf_fa(*z, fa_context(type, is_los), cfg.clutter, cfg.radio, false);
    return num / den;
}

double weight_new(FeatureType type, const AgentState& agent, const Point2& birth_pos,
                  double birth_amp, double birth_logprop, int assoc, const Measurement& z,
                  const SlamConfig& cfg) {
    if (assoc != 0) return 0.0;
    if (cfg.mu_n <= 0.0) return 0.0;
    const double log_num =
        std::log(cfg.mu_n) + log_birth_density(cfg) +
        log_joint_lhf(type, false, z, agent, birth_pos, birth_amp, cfg.anchor,
                      cfg.anchor_aod_orientation, cfg.radio);
    const double log_den = std::log(std::max(cfg.clutter.mu_fa, kMuFaFloor)) +
                           log_pdf_fa(z, fa_context(type, false), cfg.clutter, cfg.radio, false) +
                           birth_logprop;
    return std::exp(log_num - log_den);
}

namespace {

struct BirthDraw {
    FeaturePoint fp;
    double log_prop = 0.0;
    FeatureType type = FeatureType::va;
};

BirthDraw sample_birth(const Measurement& z, const FisherStddevs& s, const AgentState& agent,
                       const Point2& anchor, double aod_orientation, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    BirthDraw out;
    const double d = z.dist + s.dist * g(rng);
    const double aoa = z.aoa + s.aoa * g(rng);
    const double aod = z.aod + s.aod * g(rng);
    const double amp = z.amp + s.amp * g(rng);
    const double lp_common =
        log_normal_pdf(d, z.dist, s.dist) + log_normal_pdf(amp, z.amp, s.amp);
    out.fp.amp = std::max(kAmpFloor, amp);
    out.type = u01(rng) < kInitialTypePmf[0] ? FeatureType::va : FeatureType::ps;

    const double dd = std::max(d, 1e-6);
    if (out.type == FeatureType::ps) {
        // construct the scatterer from the anchored departure ray; the agent
        // heading then enters only through the importance weight, not the
        // sample positions
        const double phi = aod + aod_orientation;
        if (auto p = invert_ps_from_departure(dd, phi, agent.p, anchor)) {
            out.fp.pos = *p;
            out.log_prop = lp_common + log_normal_pdf(aod, z.aod, s.aod);
            return out;
        }
        out.type = FeatureType::va;  // no consistent scattered-path geometry
    }
    const double orient = safe_orientation(agent, 0.0);
    out.fp.pos = invert_va_measurement(dd, aoa + orient, agent.p);
    out.log_prop = lp_common + log_normal_pdf(aoa, z.aoa, s.aoa);
    return out;
}

}  // namespace

BirthProposal birth_proposal(const Measurement& z, const AgentState& agent_estimate,
                             const SlamConfig& cfg, std::mt19937_64& rng) {
    const FisherStddevs s = fisher_stddevs(z.amp, cfg.radio, z.aod, z.aoa);
    BirthProposal prop;
    const std::size_t n = static_cast<std::size_t>(cfg.n_particles);
    prop.particles.resize(n);
    prop.log_prop.resize(n);
    prop.sample_type.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        BirthDraw d = sample_birth(z, s, agent_estimate, cfg.anchor, cfg.anchor_aod_orientation, rng);
        prop.particles[i] = d.fp;
        prop.log_prop[i] = d.log_prop;
        prop.sample_type[i] = d.type;
    }
    return prop;
}

namespace {

// Per-step working quantities for one legacy feature.
struct FeatureScratch {
    std::vector<double> pd;        // detection probability per particle
    std::vector<double> pair_w;    // normalized w_pred * feature weight
    std::vector<double> dist_va;   // predicted direct distance per particle
    std::vector<double> dist_ps;   // predicted scattered path length
    std::vector<double> aoa_mean;  // arrival azimuth mean per particle
    std::vector<double> aod_ps;    // departure azimuth mean, scattered path
    std::vector<double> aod_los;   // departure azimuth mean, direct path
    std::vector<double> sig_d;     // distance stddev per particle
    std::vector<double> sig_aoa;
    std::vector<double> sig_aod_ps;
    std::vector<double> sig_aod_los;
    double pd_bar = 0.0;
};

// One (feature, measurement, type) slice of the likelihood-ratio tensor:
// e[i] = exp(log ratio - scale).
struct Slice {
    bool active = false;
    double scale = kNegInf;
    double sum_we = 0.0;  // sum_i pair_w[i] * e[i]
    std::vector<double> e;
};

struct StepContext {
    StepContext(const SlamConfig& c, const PdTable& p, std::span<const Measurement> m)
        : cfg(c), pd(p), meas(m) {}

    const SlamConfig& cfg;
    const PdTable& pd;
    std::span<const Measurement> meas;
    int n = 0;
    int K = 0;
    int M = 0;
    std::vector<double> w_pred;
    std::vector<double> orient;               // per agent particle
    std::vector<double> log_fa;               // M x 2 (FaContext)
    std::vector<FeatureScratch> scratch;      // per feature
    std::vector<Slice> slices;                // K x M x 2

    Slice& slice(int k, int m, int q) {
        return slices[(static_cast<std::size_t>(k) * M + m) * 2 + q];
    }
    double log_fa_at(int m, FaContext ctx) const {
        return log_fa[static_cast<std::size_t>(m) * 2 + static_cast<int>(ctx)];
    }
};

double dist_sigma_coeff(const RadioParams& radio) {
    return radio.c / (std::sqrt(8.0) * kPi * radio.beta_bw);
}

double angle_sigma_coeff(const RadioParams& radio) {
    return radio.c / (std::sqrt(8.0) * kPi * radio.f_c);
}

// Anchor reference position for scattered-path geometry, paired by index.
Point2 anchor_ref(const SlamState& st, const SlamConfig& cfg, std::size_t i) {
    if (cfg.anchor_known) return cfg.anchor;
    return st.features.front().particles[i].pos;
}

void build_scratch(const SlamState& st, StepContext& ctx) {
    ctx.scratch.resize(st.features.size());
    for (std::size_t k = 0; k < st.features.size(); ++k) {
        const auto& f = st.features[k];
        auto& s = ctx.scratch[k];
        const std::size_t n = f.particles.size();
        s.pd.resize(n);
        s.pair_w.resize(n);
        double pw_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s.pd[i] = ctx.pd(f.particles[i].amp);
            s.pair_w[i] = ctx.w_pred[i] * f.weights[i];
            pw_sum += s.pair_w[i];
        }
        s.pd_bar = 0.0;
        if (pw_sum > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                s.pair_w[i] /= pw_sum;
                s.pd_bar += s.pair_w[i] * s.pd[i];
            }
        }
    }
}

// Geometry caches for a feature; built lazily once some measurement survives
// the distance gate.
void build_geometry(const SlamState& st, StepContext& ctx, int k, bool need_ps) {
    const auto& cfg = ctx.cfg;
    const auto& f = st.features[static_cast<std::size_t>(k)];
    auto& s = ctx.scratch[static_cast<std::size_t>(k)];
    if (!s.dist_va.empty()) {
        if (!need_ps || !s.dist_ps.empty()) return;
    }
    const std::size_t n = f.particles.size();
    const double cd = dist_sigma_coeff(cfg.radio);
    const double ca = angle_sigma_coeff(cfg.radio);

    if (s.dist_va.empty()) {
        s.dist_va.resize(n);
        s.aoa_mean.resize(n);
        s.sig_d.resize(n);
        s.sig_aoa.resize(n);
        if (f.is_anchor) {
            s.aod_los.resize(n);
            s.sig_aod_los.resize(n);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const Point2 fp = f.particles[i].pos;
            const Point2 ap = st.agent_particles[i].agent.p;
            const Vec2 d = fp - ap;
            const double dist = d.norm();
            s.dist_va[i] = dist;
            const double brg = std::atan2(d.y, d.x);
            s.aoa_mean[i] = wrap_angle(brg - ctx.orient[i]);
            const double amp = f.particles[i].amp;
            s.sig_d[i] = cd / amp;
            const double d2_rx = cfg.radio.rx_array.squared_aperture(s.aoa_mean[i]);
            s.sig_aoa[i] = d2_rx > 0.0 ? ca / (amp * std::sqrt(d2_rx)) : kPi;
            if (f.is_anchor) {
                const Vec2 da = ap - fp;
                const double aod =
                    wrap_angle(std::atan2(da.y, da.x) - cfg.anchor_aod_orientation);
                s.aod_los[i] = aod;
                const double d2_tx = cfg.radio.tx_array.squared_aperture(aod);
                s.sig_aod_los[i] = d2_tx > 0.0 ? ca / (amp * std::sqrt(d2_tx)) : kPi;
            }
        }
    }
    if (need_ps && s.dist_ps.empty() && !f.is_anchor) {
        s.dist_ps.resize(n);
        s.aod_ps.resize(n);
        s.sig_aod_ps.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Point2 fp = f.particles[i].pos;
            const Point2 an = anchor_ref(st, cfg, i);
            const Vec2 da = fp - an;
            s.dist_ps[i] = da.norm() + s.dist_va[i];
            const double aod = wrap_angle(std::atan2(da.y, da.x) - cfg.anchor_aod_orientation);
            s.aod_ps[i] = aod;
            const double amp = f.particles[i].amp;
            const double d2_tx = cfg.radio.tx_array.squared_aperture(aod);
            s.sig_aod_ps[i] = d2_tx > 0.0 ? ca / (amp * std::sqrt(d2_tx)) : kPi;
        }
    }
}

// Coarse reachability test: can feature k plausibly explain distance z_d
// under type q? Subsamples the particle cloud and pads generously, so a
// failed gate corresponds to a likelihood ratio around exp(-70) or less.
bool distance_gate(const SlamState& st, const StepContext& ctx, int k, int q, double z_d) {
    const auto& f = st.features[static_cast<std::size_t>(k)];
    const auto& cfg = ctx.cfg;
    const std::size_t n = f.particles.size();
    const std::size_t stride = std::max<std::size_t>(1, n / 64);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < n; i += stride) {
        const Point2 fp = f.particles[i].pos;
        const Point2 ap = st.agent_particles[i].agent.p;
        double d = (fp - ap).norm();
        if (q == static_cast<int>(FeatureType::ps))
            d += (fp - anchor_ref(st, cfg, i)).norm();
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    const double sig_ref = dist_sigma_coeff(cfg.radio) / std::max(cfg.radio.u_de, 0.5);
    const double margin = 12.0 * sig_ref + 0.5 * (hi - lo) + 0.5;
    return z_d >= lo - margin && z_d <= hi + margin;
}

// Amplitude factor of the likelihood with the detection-probability
// normalizer cancelled against the assigned-branch p_d.
double log_rice_numerator(double z_u, double u, double sigma2) {
    return std::log(z_u / sigma2) - (z_u * z_u + u * u) / (2.0 * sigma2) +
           log_bessel_i0(z_u * u / sigma2);
}

void fill_slices(const SlamState& st, StepContext& ctx) {
    const auto& cfg = ctx.cfg;
    const double inv4n =
        1.0 / (4.0 * static_cast<double>(cfg.radio.n_rx) * cfg.radio.n_tx * cfg.radio.n_f);
    for (int k = 0; k < ctx.K; ++k) {
        const auto& f = st.features[static_cast<std::size_t>(k)];
        auto& sc = ctx.scratch[static_cast<std::size_t>(k)];
        const std::size_t n = f.particles.size();
        for (int m = 0; m < ctx.M; ++m) {
            const Measurement& z = ctx.meas[static_cast<std::size_t>(m)];
            for (int q = 0; q < 2; ++q) {
                if (f.is_anchor && q != static_cast<int>(FeatureType::va)) continue;
                if (f.type_pmf[static_cast<std::size_t>(q)] <= 0.0) continue;
                if (!distance_gate(st, ctx, k, q, z.dist)) continue;
                build_geometry(st, ctx, k, q == static_cast<int>(FeatureType::ps));

                auto& sl = ctx.slice(k, m, q);
                sl.active = true;
                sl.e.resize(n);
                const bool is_los = f.is_anchor;
                const FaContext fa_ctx =
                    fa_context(static_cast<FeatureType>(q), is_los);
                const double log_den = ctx.log_fa_at(m, fa_ctx);
                double mx = kNegInf;
                for (std::size_t i = 0; i < n; ++i) {
                    const double amp = f.particles[i].amp;
                    const double s2 = 0.5 + amp * amp * inv4n;
                    double l = log_rice_numerator(z.amp, amp, s2);
                    const double dmean =
                        q == static_cast<int>(FeatureType::ps) ? sc.dist_ps[i] : sc.dist_va[i];
                    l += log_normal_pdf(z.dist, dmean, sc.sig_d[i]);
                    l += log_normal_pdf(wrap_angle(z.aoa - sc.aoa_mean[i]), 0.0, sc.sig_aoa[i]);
                    if (is_los) {
                        l += log_normal_pdf(wrap_angle(z.aod - sc.aod_los[i]), 0.0,
                                            sc.sig_aod_los[i]);
                    } else if (q == static_cast<int>(FeatureType::ps)) {
                        l += log_normal_pdf(wrap_angle(z.aod - sc.aod_ps[i]), 0.0,
                                            sc.sig_aod_ps[i]);
                    }
                    l -= log_den;
                    sl.e[i] = l;  // still log; rescaled below
                    mx = std::max(mx, l);
                }
                if (mx == kNegInf) {
                    sl.active = false;
                    sl.e.clear();
                    continue;
                }
                sl.scale = mx;
                double sum_we = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double e = std::exp(sl.e[i] - mx);
                    sl.e[i] = e;
                    sum_we += sc.pair_w[i] * e;
                }
                sl.sum_we = sum_we;
            }
        }
    }
}

AssociationWeights build_weights(const SlamState& st, StepContext& ctx) {
    AssociationWeights w;
    w.K = ctx.K;
    w.M = ctx.M;
    w.beta.assign(static_cast<std::size_t>(ctx.K) * ctx.M, 0.0);
    w.beta0.assign(static_cast<std::size_t>(ctx.K), 0.0);
    if (ctx.M == 0) {
        for (int k = 0; k < ctx.K; ++k) {
            const auto& f = st.features[static_cast<std::size_t>(k)];
            w.beta0[k] = (1.0 - f.p_exist) + f.p_exist * (1.0 - ctx.scratch[k].pd_bar);
        }
        return w;
    }
    // log-domain row assembly, renormalized per feature row
    for (int k = 0; k < ctx.K; ++k) {
        const auto& f = st.features[static_cast<std::size_t>(k)];
        const double r = f.p_exist;
        std::vector<double> log_beta(static_cast<std::size_t>(ctx.M), kNegInf);
        for (int m = 0; m < ctx.M; ++m) {
            double acc = kNegInf;
            for (int q = 0; q < 2; ++q) {
                const auto& sl = ctx.slice(k, m, q);
                if (!sl.active || sl.sum_we <= 0.0) continue;
                const double term = std::log(f.type_pmf[static_cast<std::size_t>(q)]) +
                                    sl.scale + std::log(sl.sum_we);
                acc = log_add_exp(acc, term);
            }
            log_beta[static_cast<std::size_t>(m)] = r > 0.0 ? std::log(r) + acc : kNegInf;
        }
        const double b0 = (1.0 - r) + r * (1.0 - ctx.scratch[k].pd_bar);
        const double log_b0 = b0 > 0.0 ? std::log(b0) : kNegInf;
        double mx = log_b0;
        for (double v : log_beta) mx = std::max(mx, v);
        if (mx == kNegInf) {
            w.beta0[k] = 1.0;  // degenerate row; missed by convention
            continue;
        }
        w.beta0[k] = std::exp(log_b0 - mx);
        for (int m = 0; m < ctx.M; ++m)
            w.beta_at(k, m) = std::exp(log_beta[static_cast<std::size_t>(m)] - mx);
    }
    return w;
}

}  // namespace

SlamState step(SlamState st, std::span<const Measurement> measurements, const SlamConfig& cfg) {
    const std::size_t n = st.agent_particles.size();
    if (n == 0) throw std::invalid_argument("step: empty agent particle set");
    st.step += 1;
    const int now = st.step;
    const int M = static_cast<int>(measurements.size());

    // (1) prediction
    {
        auto rng = substream(cfg.seed, kStreamAgent, static_cast<std::uint64_t>(now));
        for (auto& pt : st.agent_particles) pt.agent = predict_agent(pt.agent, cfg.motion, rng);
    }
    for (auto& f : st.features) {
        auto rng = substream(cfg.seed, kStreamFeature, static_cast<std::uint64_t>(now),
                             static_cast<std::uint64_t>(f.id));
        const bool pin_pos = f.is_anchor && cfg.anchor_known;
        if (f.is_anchor) {
            // The direct-path amplitude can change abruptly (obstruction and
            // re-acquisition), which a pure Gaussian walk cannot recover
            // from; a small regenerating component keeps a standing flat
            // slab so the anchor can re-claim a direct path of any strength.
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            const double amp_lo = std::max(cfg.radio.u_de, 2.0 * kAmpFloor);
            std::uniform_real_distribution<double> ua(amp_lo,
                                                      std::max(cfg.birth_u_max, amp_lo + 1.0));
            for (auto& fp : f.particles) {
                auto [p, a] = predict_feature(fp.pos, fp.amp, cfg.motion, cfg.radio, rng);
                fp.amp = u01(rng) < 0.05 ? ua(rng) : a;
                if (!pin_pos) fp.pos = p;
            }
        } else {
            for (auto& fp : f.particles) {
                auto [p, a] = predict_feature(fp.pos, fp.amp, cfg.motion, cfg.radio, rng);
                fp.amp = a;
                fp.pos = p;
            }
            f.type_pmf = predict_type(f.type_pmf, cfg.type_transition);
        }
        f.p_exist = predict_existence(f.p_exist, cfg.motion.p_s);
    }

    StepContext ctx{cfg, *st.pd_table, measurements};
    ctx.n = static_cast<int>(n);
    ctx.K = static_cast<int>(st.features.size());
    ctx.M = M;
    ctx.w_pred.resize(n);
    ctx.orient.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ctx.w_pred[i] = st.agent_particles[i].weight;
        ctx.orient[i] = safe_orientation(st.agent_particles[i].agent, 0.0);
    }
    ctx.log_fa.resize(static_cast<std::size_t>(M) * 2);
    for (int m = 0; m < M; ++m) {
        const Measurement& z = measurements[static_cast<std::size_t>(m)];
        const double lmu = std::log(std::max(cfg.clutter.mu_fa, kMuFaFloor));
        ctx.log_fa[static_cast<std::size_t>(m) * 2 + static_cast<int>(FaContext::no_aod)] =
            lmu + log_pdf_fa(z, FaContext::no_aod, cfg.clutter, cfg.radio, false);
        ctx.log_fa[static_cast<std::size_t>(m) * 2 + static_cast<int>(FaContext::with_aod)] =
            lmu + log_pdf_fa(z, FaContext::with_aod, cfg.clutter, cfg.radio, false);
    }

    build_scratch(st, ctx);
    ctx.slices.assign(static_cast<std::size_t>(ctx.K) * M * 2, Slice{});

    // (2) association weights from the legacy likelihood tensor
    if (M > 0) fill_slices(st, ctx);
    AssociationWeights aw = build_weights(st, ctx);

    // (3) birth proposals and new-feature weights
    std::vector<BirthProposal> props(static_cast<std::size_t>(M));
    std::vector<std::vector<double>> birth_w(static_cast<std::size_t>(M));
    aw.xi.assign(static_cast<std::size_t>(M), 0.0);
    const double log_fn = log_birth_density(cfg);
    const double log_mu_n = cfg.mu_n > 0.0 ? std::log(cfg.mu_n) : kNegInf;
    for (int m = 0; m < M; ++m) {
        const Measurement& z = measurements[static_cast<std::size_t>(m)];
        auto rng = substream(cfg.seed, kStreamBirth, static_cast<std::uint64_t>(now),
                             static_cast<std::uint64_t>(m));
        const FisherStddevs s = fisher_stddevs(z.amp, cfg.radio, z.aod, z.aoa);
        auto& prop = props[static_cast<std::size_t>(m)];
        prop.particles.resize(n);
        prop.log_prop.resize(n);
        prop.sample_type.resize(n);
        std::vector<double> lw(n, kNegInf);
        for (std::size_t i = 0; i < n; ++i) {
            const AgentState& x = st.agent_particles[i].agent;
            BirthDraw d = sample_birth(z, s, x, anchor_ref(st, cfg, i), cfg.anchor_aod_orientation, rng);
            prop.particles[i] = d.fp;
            prop.log_prop[i] = d.log_prop;
            prop.sample_type[i] = d.type;
            if (log_mu_n == kNegInf) continue;
            const FaContext fa_ctx = fa_context(d.type, false);
            double l;
            try {
                l = log_joint_lhf(d.type, false, z, x, d.fp.pos, d.fp.amp, anchor_ref(st, cfg, i),
                                  cfg.anchor_aod_orientation, cfg.radio);
            } catch (const std::exception&) {
                continue;  // degenerate geometry for this sample
            }
            lw[i] = log_fn + l - d.log_prop - ctx.log_fa_at(m, fa_ctx);
        }
        double mx = kNegInf;
        for (double v : lw) mx = std::max(mx, v);
        auto& bw = birth_w[static_cast<std::size_t>(m)];
        bw.assign(n, 0.0);
        if (mx > kNegInf) {
            double xi_acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (lw[i] == kNegInf) continue;
                const double e = std::exp(lw[i] - mx);
                bw[i] = ctx.w_pred[i] * e;
                xi_acc += bw[i];
            }
            if (xi_acc > 0.0 && log_mu_n > kNegInf) {
                const double log_xi = log_mu_n + mx + std::log(xi_acc);
                aw.xi[static_cast<std::size_t>(m)] = log_xi > 690.0 ? 1e300 : std::exp(log_xi);
            }
        }
    }

    // (4) data association
    const AssociationResult assoc = bp_marginals(aw);

    // (5) agent update
    {
        std::vector<double> logw(n);
        for (std::size_t i = 0; i < n; ++i)
            logw[i] = ctx.w_pred[i] > 0.0 ? std::log(ctx.w_pred[i]) : kNegInf;
        const double dn = static_cast<double>(n);
        for (int k = 0; k < ctx.K; ++k) {
            const auto& f = st.features[static_cast<std::size_t>(k)];
            const double r = f.p_exist;
            const double b0 = (1.0 - r) + r * (1.0 - ctx.scratch[k].pd_bar);
            double t_k = 0.0;
            for (int m = 0; m < M; ++m)
                for (int q = 0; q < 2; ++q) {
                    const auto& sl = ctx.slice(k, m, q);
                    if (sl.active)
                        t_k = std::max(t_k, std::log(assoc.nu_at(m, k)) + sl.scale);
                }
            const double log_b0 = b0 > 0.0 ? std::log(b0) : kNegInf;
            // t_k-scaled slice coefficients, hoisted out of the particle loop
            std::vector<std::pair<const Slice*, double>> active;
            for (int m = 0; m < M; ++m) {
                for (int q = 0; q < 2; ++q) {
                    const auto& sl = ctx.slice(k, m, q);
                    if (!sl.active) continue;
                    const double nu = assoc.nu_at(m, k);
                    if (nu <= 0.0) continue;
                    const double c = std::exp(std::log(nu) + sl.scale - t_k) *
                                     f.type_pmf[static_cast<std::size_t>(q)] * r;
                    if (c > 0.0) active.emplace_back(&sl, c);
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                double assigned = 0.0;  // in t_k-scaled space
                for (const auto& [sl, c] : active) assigned += c * sl->e[i];
                const double log_assigned =
                    assigned > 0.0 ? t_k + std::log(assigned * dn * f.weights[i]) : kNegInf;
                logw[i] += log_add_exp(log_b0, log_assigned);
            }
        }
        double mx = kNegInf;
        for (double v : logw) mx = std::max(mx, v);
        if (mx == kNegInf) {
#ifdef MPSLAM_DIVERGENCE_DIAG
            std::fprintf(stderr, "divergence at step %d: M=%d K=%d\n", now, M, ctx.K);
            for (int k = 0; k < ctx.K; ++k) {
                const auto& f = st.features[static_cast<std::size_t>(k)];
                const double b0 = (1.0 - f.p_exist) +
                                  f.p_exist * (1.0 - ctx.scratch[k].pd_bar);
                std::fprintf(stderr,
                             "  k=%d id=%d anchor=%d p_exist=%.6g pd_bar=%.6g b0=%.3e "
                             "type=(%.3f,%.3f)\n",
                             k, f.id, f.is_anchor, f.p_exist, ctx.scratch[k].pd_bar, b0,
                             f.type_pmf[0], f.type_pmf[1]);
                for (int m = 0; m < M; ++m)
                    for (int q = 0; q < 2; ++q) {
                        const auto& sl = ctx.slice(k, m, q);
                        if (sl.active)
                            std::fprintf(stderr, "    m=%d q=%d scale=%.1f nu=%.3e\n", m, q,
                                         sl.scale, assoc.nu_at(m, k));
                    }
            }
#endif
            throw FilterDivergence(now);
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = std::exp(logw[i] - mx);
            st.agent_particles[i].weight = w;
            sum += w;
        }
        for (auto& pt : st.agent_particles) pt.weight /= sum;
    }

    // (6) feature updates: spatial weights, existence, type PMF
    for (int k = 0; k < ctx.K; ++k) {
        auto& f = st.features[static_cast<std::size_t>(k)];
        auto& sc = ctx.scratch[static_cast<std::size_t>(k)];
        const double r = f.p_exist;
        const double dn = static_cast<double>(n);

        // per-type evidence T_q = (1 - pd_bar) + sum_m nu * <ratio>
        std::array<double, 2> log_T{kNegInf, kNegInf};
        for (int q = 0; q < 2; ++q) {
            double acc = sc.pd_bar < 1.0 ? std::log(1.0 - sc.pd_bar) : kNegInf;
            for (int m = 0; m < M; ++m) {
                const auto& sl = ctx.slice(k, m, q);
                if (!sl.active || sl.sum_we <= 0.0) continue;
                acc = log_add_exp(acc,
                                  std::log(assoc.nu_at(m, k)) + sl.scale + std::log(sl.sum_we));
            }
            log_T[static_cast<std::size_t>(q)] = acc;
        }

        // spatial reweighting
        double t_k = 0.0;
        for (int m = 0; m < M; ++m)
            for (int q = 0; q < 2; ++q) {
                const auto& sl = ctx.slice(k, m, q);
                if (sl.active) t_k = std::max(t_k, std::log(assoc.nu_at(m, k)) + sl.scale);
            }
        std::vector<std::pair<const Slice*, double>> active;
        for (int m = 0; m < M; ++m) {
            for (int q = 0; q < 2; ++q) {
                const auto& sl = ctx.slice(k, m, q);
                if (!sl.active) continue;
                const double nu = assoc.nu_at(m, k);
                if (nu <= 0.0) continue;
                const double c = std::exp(std::log(nu) + sl.scale - t_k) *
                                 f.type_pmf[static_cast<std::size_t>(q)];
                if (c > 0.0) active.emplace_back(&sl, c);
            }
        }
        std::vector<double> lognew(n, kNegInf);
        double mxw = kNegInf;
        for (std::size_t i = 0; i < n; ++i) {
            if (f.weights[i] <= 0.0) continue;
            double assigned = 0.0;  // in t_k-scaled space
            for (const auto& [sl, c] : active) assigned += c * sl->e[i];
            const double log_miss = sc.pd[i] < 1.0 ? std::log(1.0 - sc.pd[i]) : kNegInf;
            const double log_assigned =
                assigned > 0.0 ? t_k + std::log(assigned * dn * ctx.w_pred[i]) : kNegInf;
            lognew[i] = std::log(f.weights[i]) + log_add_exp(log_miss, log_assigned);
            mxw = std::max(mxw, lognew[i]);
        }
        if (mxw > kNegInf) {
            double wsum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double w = lognew[i] > kNegInf ? std::exp(lognew[i] - mxw) : 0.0;
                f.weights[i] = w;
                wsum += w;
            }
            for (std::size_t i = 0; i < n; ++i) f.weights[i] /= wsum;
        }

        const double log_T_mix =
            log_add_exp(std::log(f.type_pmf[0]) + log_T[0], std::log(f.type_pmf[1]) + log_T[1]);
        // p' = r e^T / (r e^T + (1 - r))
        if (r >= 1.0) {
            f.p_exist = 1.0;
        } else if (r <= 0.0 || log_T_mix == kNegInf) {
            f.p_exist = 0.0;
        } else {
            const double d = std::log1p(-r) - std::log(r) - log_T_mix;
            f.p_exist = 1.0 / (1.0 + std::exp(d));
        }
        if (f.is_anchor) continue;  // type stays pinned for the anchor

        // type posterior mixes evidence with the nonexistent branch
        std::array<double, 2> lt{};
        for (int q = 0; q < 2; ++q) {
            const double evid =
                log_add_exp(r > 0.0 ? std::log(r) + log_T[static_cast<std::size_t>(q)] : kNegInf,
                            r < 1.0 ? std::log1p(-r) : kNegInf);
            lt[static_cast<std::size_t>(q)] =
                std::log(f.type_pmf[static_cast<std::size_t>(q)]) + evid;
        }
        const double norm = log_add_exp(lt[0], lt[1]);
        if (norm > kNegInf) {
            f.type_pmf[0] = std::exp(lt[0] - norm);
            f.type_pmf[1] = std::exp(lt[1] - norm);
        }
    }

    // (7) birth of new features
    for (int m = 0; m < M; ++m) {
        FeatureBelief nb;
        nb.id = st.k_count + m + 1;
        nb.birth_time = now;
        nb.type_pmf = kInitialTypePmf;
        nb.is_anchor = false;
        nb.particles = std::move(props[static_cast<std::size_t>(m)].particles);
        auto& bw = birth_w[static_cast<std::size_t>(m)];
        double s = 0.0;
        for (double v : bw) s += v;
        if (s > 0.0) {
            for (double& v : bw) v /= s;
            nb.weights = std::move(bw);
            const double xi = aw.xi[static_cast<std::size_t>(m)];
            nb.p_exist = assoc.meas_at(m, 0) * xi / (1.0 + xi);
        } else {
            nb.weights.assign(n, 1.0 / static_cast<double>(n));
            nb.p_exist = 0.0;
        }
        st.features.push_back(std::move(nb));
    }
    st.k_count += M;

    // (8) resampling at effective sample size below half
    {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = st.agent_particles[i].weight;
        if (effective_sample_size(w) < 0.5 * static_cast<double>(n)) {
            auto rng = substream(cfg.seed, kStreamResample, static_cast<std::uint64_t>(now), 0);
            st.agent_particles = resample(st.agent_particles, w, n, rng);
            for (auto& pt : st.agent_particles) pt.weight = 1.0 / static_cast<double>(n);
        }
    }
    for (auto& f : st.features) {
        if (effective_sample_size(f.weights) < 0.5 * static_cast<double>(f.particles.size())) {
            auto rng = substream(cfg.seed, kStreamResample, static_cast<std::uint64_t>(now),
                                 static_cast<std::uint64_t>(f.id));
            const bool pin_pos = f.is_anchor && cfg.anchor_known;
            double sx = 0.0, sy = 0.0;
            if (!pin_pos) {
                double mx = 0.0, my = 0.0;
                for (std::size_t i = 0; i < f.particles.size(); ++i) {
                    mx += f.weights[i] * f.particles[i].pos.x;
                    my += f.weights[i] * f.particles[i].pos.y;
                }
                for (std::size_t i = 0; i < f.particles.size(); ++i) {
                    const double dx = f.particles[i].pos.x - mx;
                    const double dy = f.particles[i].pos.y - my;
                    sx += f.weights[i] * dx * dx;
                    sy += f.weights[i] * dy * dy;
                }
            }
            f.particles = resample(f.particles, f.weights, f.particles.size(), rng);
            std::fill(f.weights.begin(), f.weights.end(),
                      1.0 / static_cast<double>(f.particles.size()));
            if (!pin_pos && (sx > 0.0 || sy > 0.0)) {
                // Regularized resampling: kernel jitter at the Silverman
                // bandwidth keeps the static-feature cloud from collapsing
                // onto a handful of ancestors, which would freeze any early
                // position error permanently. Capped so that a wide (e.g.
                // freshly born, multimodal) cloud is not smeared.
                constexpr double kJitterCap = 0.05;
                const double h = std::pow(
                    4.0 / (4.0 * static_cast<double>(f.particles.size())), 1.0 / 6.0);
                const double jx = std::min(h * std::sqrt(sx), kJitterCap);
                const double jy = std::min(h * std::sqrt(sy), kJitterCap);
                std::normal_distribution<double> g(0.0, 1.0);
                for (auto& fp : f.particles) {
                    fp.pos.x += jx * g(rng);
                    fp.pos.y += jy * g(rng);
                }
            }
        }
    }

    // (9) pruning
    std::erase_if(st.features, [&](const FeatureBelief& f) {
        return !f.is_anchor && f.p_exist < cfg.p_pr;
    });

    return st;
}

Estimate estimate(const SlamState& state, const SlamConfig& cfg) {
    Estimate est;
    double wx = 0.0, wy = 0.0, wvx = 0.0, wvy = 0.0;
    for (const auto& pt : state.agent_particles) {
        wx += pt.weight * pt.agent.p.x;
        wy += pt.weight * pt.agent.p.y;
        wvx += pt.weight * pt.agent.v.x;
        wvy += pt.weight * pt.agent.v.y;
    }
    est.agent = {{wx, wy}, {wvx, wvy}};
    est.orientation = orientation_from_velocity(est.agent.v);
    for (const auto& f : state.features) {
        if (f.is_anchor && cfg.anchor_known) continue;
        if (f.p_exist < cfg.p_de) continue;
        MapFeature mf;
        mf.id = f.id;
        mf.type_pmf = f.type_pmf;
        mf.p_exist = f.p_exist;
        double x = 0.0, y = 0.0;
        for (std::size_t i = 0; i < f.particles.size(); ++i) {
            x += f.weights[i] * f.particles[i].pos.x;
            y += f.weights[i] * f.particles[i].pos.y;
        }
        mf.pos = {x, y};
        est.map.push_back(mf);
    }
    return est;
}

}  // namespace mpslam
