#include "mpslam/runner.hpp"

#include "mpslam/random.hpp"

namespace mpslam {

namespace {

RunResult run_impl(const Scenario& scenario, SlamConfig cfg, std::uint64_t run_seed,
                   const std::vector<std::vector<Measurement>>* scans,
                   const StepCallback& on_step) {
    if (scenario.trajectory.empty())
        throw std::invalid_argument("run_once: scenario trajectory is empty");
    cfg.seed = run_seed;

    RunResult out;
    SlamState st = init_slam(cfg, scenario.trajectory.front().p);
    auto synth_rng = substream(run_seed, kStreamSynth);

    const std::size_t n_steps = scenario.trajectory.size() - 1;
    out.estimates.reserve(n_steps);
    for (std::size_t s = 0; s < n_steps; ++s) {
        const int step_index = static_cast<int>(s) + 1;
        std::vector<Measurement> z;
        if (scans != nullptr) {
            if (s < scans->size()) z = (*scans)[s];
        } else {
            z = generate_measurements(scenario, step_index, synth_rng);
        }
        try {
            st = step(std::move(st), z, cfg);
        } catch (const FilterDivergence& e) {
            out.diverged_at = e.step;
            break;
        }
        out.meas_counts.push_back(static_cast<int>(z.size()));
        out.estimates.push_back(estimate(st, cfg));

        std::vector<SnapshotFeature> detected;
        std::vector<SnapshotFeature> all;
        for (const auto& f : st.features) {
            if (f.is_anchor && cfg.anchor_known) continue;
            SnapshotFeature sf;
            sf.id = f.id;
            double x = 0.0, y = 0.0;
            for (std::size_t i = 0; i < f.particles.size(); ++i) {
                x += f.weights[i] * f.particles[i].pos.x;
                y += f.weights[i] * f.particles[i].pos.y;
            }
            sf.pos = {x, y};
            sf.p_va = f.type_pmf[0];
            sf.p_ps = f.type_pmf[1];
            sf.p_exist = f.p_exist;
            all.push_back(sf);
            if (f.p_exist >= cfg.p_de) detected.push_back(sf);
        }
        out.maps.push_back(std::move(detected));
        out.all_feats.push_back(std::move(all));
        if (on_step) on_step(st, static_cast<int>(z.size()));
    }
    return out;
}

}  // namespace

RunResult run_once(const Scenario& scenario, SlamConfig cfg, std::uint64_t run_seed,
                   const StepCallback& on_step) {
    return run_impl(scenario, std::move(cfg), run_seed, nullptr, on_step);
}

RunResult run_once_with_measurements(const Scenario& scenario, SlamConfig cfg,
                                     std::uint64_t run_seed,
                                     const std::vector<std::vector<Measurement>>& scans,
                                     const StepCallback& on_step) {
    return run_impl(scenario, std::move(cfg), run_seed, &scans, on_step);
}

}  // namespace mpslam
