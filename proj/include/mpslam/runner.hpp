#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "mpslam/engine.hpp"
#include "mpslam/metrics.hpp"
#include "mpslam/synth.hpp"

namespace mpslam {

/// Outcome of one Monte-Carlo run over the scenario trajectory. Step s of the
/// vectors corresponds to filter step s+1 (after the s-th scan).
struct RunResult {
    std::vector<Estimate> estimates;
    std::vector<std::vector<SnapshotFeature>> maps;       // detected features
    std::vector<std::vector<SnapshotFeature>> all_feats;  // every live feature
    std::vector<int> meas_counts;
    std::optional<int> diverged_at;
};

/// Invoked after every filter step with the raw state and the scan size.
using StepCallback = std::function<void(const SlamState&, int n_meas)>;

/// Run the filter over synthesized scans, one per trajectory step after the
/// first. The run seed drives both synthesis and the filter.
RunResult run_once(const Scenario& scenario, SlamConfig cfg, std::uint64_t run_seed,
                   const StepCallback& on_step = {});

/// Same, with externally supplied measurements (scans[s] feeds step s+1).
RunResult run_once_with_measurements(const Scenario& scenario, SlamConfig cfg,
                                     std::uint64_t run_seed,
                                     const std::vector<std::vector<Measurement>>& scans,
                                     const StepCallback& on_step = {});

}  // namespace mpslam
