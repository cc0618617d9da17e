#include "mpslam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mpslam/random.hpp"
#include "mpslam/stats.hpp"

namespace mpslam {

std::vector<AgentState> generate_trajectory(std::span<const Point2> waypoints, double speed,
                                            double dt) {
    if (waypoints.size() < 2)
        throw std::invalid_argument("generate_trajectory: need at least two waypoints");
    if (speed <= 0.0) throw std::invalid_argument("generate_trajectory: speed must be > 0");
    if (dt <= 0.0) throw std::invalid_argument("generate_trajectory: dt must be > 0");

    const double step_len = speed * dt;
    std::vector<AgentState> out;
    std::size_t seg = 0;
    Point2 pos = waypoints[0];
    double remaining = step_len;  // distance until the next emitted sample

    const auto seg_dir = [&](std::size_t s) {
        const Vec2 d = waypoints[s + 1] - waypoints[s];
        const double len = d.norm();
        if (len <= 0.0)
            throw std::invalid_argument("generate_trajectory: repeated waypoint");
        return std::pair<Vec2, double>{{d.x / len, d.y / len}, len};
    };

    auto [dir, seg_len] = seg_dir(0);
    double seg_left = seg_len;
    out.push_back({pos, dir * speed});
    while (true) {
        if (seg_left >= remaining - 1e-12) {
            pos = pos + dir * remaining;
            seg_left -= remaining;
            remaining = step_len;
            out.push_back({pos, dir * speed});
        } else {
            remaining -= seg_left;
            ++seg;
            if (seg + 1 >= waypoints.size()) break;
            pos = waypoints[seg];
            std::tie(dir, seg_len) = seg_dir(seg);
            seg_left = seg_len;
        }
    }
    return out;
}

double nominal_amplitude(const SynthParams& synth, double path_dist) {
    return synth.u_ref * synth.d_ref / std::max(path_dist, 1e-6);
}

double feature_path_distance(const TrueFeature& f, const Point2& anchor, const Point2& agent) {
    return f.type == FeatureType::va ? dist_va(agent, f.pos) : dist_ps(agent, f.pos, anchor);
}

namespace {

// Wall recovered from a bare virtual anchor: the set of points equidistant
// from the anchor and its mirror image.
WallSegment bisector_wall(const Point2& anchor, const Point2& va) {
    const Point2 mid{0.5 * (anchor.x + va.x), 0.5 * (anchor.y + va.y)};
    const Vec2 d = va - anchor;
    const Vec2 perp{-d.y, d.x};
    return {mid + perp, mid - perp};
}

}  // namespace

double feature_aod(const TrueFeature& f, const Environment& env, const Point2& agent) {
    if (f.type == FeatureType::ps)
        return bearing(env.anchor, f.pos, env.anchor_aod_orientation);
    // Unfold the specular path by mirroring the agent back through the chain;
    // the departure ray points at the mirrored agent.
    Point2 img = agent;
    if (f.mirror_chain.empty()) {
        img = mirror_point(img, bisector_wall(env.anchor, f.pos));
    } else {
        for (auto it = f.mirror_chain.rbegin(); it != f.mirror_chain.rend(); ++it)
            img = mirror_point(img, *it);
    }
    return bearing(env.anchor, img, env.anchor_aod_orientation);
}

std::vector<Measurement> generate_measurements(const Scenario& scenario, int step,
                                               std::mt19937_64& rng) {
    if (step < 0 || static_cast<std::size_t>(step) >= scenario.trajectory.size())
        throw std::out_of_range("generate_measurements: step outside trajectory");
    const AgentState& agent = scenario.trajectory[static_cast<std::size_t>(step)];
    const double orient = orientation_from_velocity(agent.v);
    const auto& radio = scenario.radio;

    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<Measurement> out;

    const auto emit_feature = [&](FeatureType type, bool is_los, const Point2& pos,
                                  double true_aod) {
        const double d = is_los ? dist_va(agent.p, pos)
                                : (type == FeatureType::va
                                       ? dist_va(agent.p, pos)
                                       : dist_ps(agent.p, pos, scenario.env.anchor));
        const double u = nominal_amplitude(scenario.synth, d);
        const double aoa = bearing(agent.p, pos, orient);
        // the measurement model carries no departure-azimuth density for
        // specular non-direct paths, so the generative completion for that
        // component is uniform; anchored paths emit their geometric value
        const bool aod_modeled = is_los || type == FeatureType::ps;
        if (scenario.synth.noiseless) {
            if (u >= radio.u_de) out.push_back({d, true_aod, aoa, u});
            return;
        }
        if (u01(rng) >= detection_prob(u, radio)) return;  // missed detection
        const FisherStddevs s = fisher_stddevs(u, radio, true_aod, aoa);
        Measurement z;
        z.dist = std::max(0.0, d + s.dist * g(rng));
        z.aod = aod_modeled ? wrap_angle(true_aod + s.aod * g(rng))
                            : wrap_angle((2.0 * u01(rng) - 1.0) * kPi);
        z.aoa = wrap_angle(aoa + s.aoa * g(rng));
        // truncated Rician via rejection; acceptance rate is the detection prob
        do {
            const double re = u + s.amp * g(rng);
            const double im = s.amp * g(rng);
            z.amp = std::hypot(re, im);
        } while (z.amp < radio.u_de);
        out.push_back(z);
    };

    if (scenario.synth.include_los)
        emit_feature(FeatureType::va, true, scenario.env.anchor,
                     bearing(scenario.env.anchor, agent.p, scenario.env.anchor_aod_orientation));
    for (const auto& f : scenario.features)
        emit_feature(f.type, false, f.pos, feature_aod(f, scenario.env, agent.p));

    // Poisson clutter, uniform in distance and azimuths, truncated-Rayleigh
    // amplitude drawn by inverse CDF.
    if (scenario.clutter.mu_fa > 0.0 && !scenario.synth.noiseless) {
        std::poisson_distribution<int> pois(scenario.clutter.mu_fa);
        const int n_fa = pois(rng);
        for (int j = 0; j < n_fa; ++j) {
            Measurement z;
            z.dist = u01(rng) * scenario.clutter.d_max;
            z.aod = wrap_angle((2.0 * u01(rng) - 1.0) * kPi);
            z.aoa = wrap_angle((2.0 * u01(rng) - 1.0) * kPi);
            const double u = u01(rng);
            z.amp = std::sqrt(radio.u_de * radio.u_de - 2.0 * std::log(1.0 - u));
            out.push_back(z);
        }
    }

    // Fisher-Yates shuffle so measurement order carries no association hint.
    for (std::size_t i = out.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(out[i - 1], out[pick(rng)]);
    }
    return out;
}

Scenario default_scenario() {
    Scenario sc;
    sc.env.anchor = {0.0, 0.0};
    sc.env.anchor_aod_orientation = 0.0;
    sc.env.walls = {
        {{-12.0, 10.0}, {12.0, 10.0}},  // back wall, y = 10
        {{-7.0, -2.0}, {-7.0, 12.0}},   // side wall, x = -7
    };
    sc.env.scatterers = {{6.0, 2.0}};

    const std::array<Point2, 2> wps{{{-5.0, 8.0}, {5.0, 8.0}}};
    sc.trajectory = generate_trajectory(wps, 0.1, 1.0);

    for (const auto& w : sc.env.walls) {
        TrueFeature f;
        f.type = FeatureType::va;
        f.mirror_chain = {w};
        f.pos = virtual_anchor(sc.env.anchor, f.mirror_chain);
        sc.features.push_back(std::move(f));
    }
    for (const auto& p : sc.env.scatterers) sc.features.push_back({FeatureType::ps, p, {}});

    sc.radio.beta_bw = 768e6 / std::sqrt(12.0);  // RMS bandwidth of a flat 768 MHz spectrum
    sc.radio.f_c = 28e9;
    sc.radio.n_rx = 16;
    sc.radio.n_tx = 8;
    sc.radio.n_f = 256;
    sc.radio.u_de = 3.0;
    sc.radio.tx_array = ArrayGeometry::uniform_circle(8, 0.02);
    sc.radio.rx_array = ArrayGeometry::uniform_circle(16, 0.02);

    sc.clutter.mu_fa = 1.0;
    sc.clutter.d_max = 30.0;

    sc.synth.u_ref = 30.0;
    sc.synth.d_ref = 10.0;
    sc.synth.include_los = false;
    return sc;
}

SlamConfig default_slam_config(const Scenario& scenario) {
    SlamConfig cfg;
    cfg.motion.dt = 1.0;
    cfg.motion.sigma_nu = std::sqrt(0.0025);
    cfg.motion.sigma_p_feat = 1e-5;
    cfg.motion.p_s = 0.999;
    cfg.radio = scenario.radio;
    cfg.clutter = scenario.clutter;
    cfg.type_transition.q = {{{0.96, 0.04}, {0.04, 0.96}}};
    cfg.mu_n = 0.1;
    cfg.p_de = 0.5;
    cfg.p_pr = 1e-3;
    cfg.n_particles = 20000;
    cfg.anchor = scenario.env.anchor;
    cfg.anchor_aod_orientation = scenario.env.anchor_aod_orientation;
    cfg.anchor_known = true;
    cfg.init_pos_halfwidth = 0.2;
    cfg.init_vel_halfwidth = 0.2;
    return cfg;
}

}  // namespace mpslam
