#pragma once

#include <optional>
#include <vector>

#include "mpslam/engine.hpp"
#include "mpslam/geometry.hpp"

namespace mpslam {

/// Per-step root-mean-square position error across runs. est[run][step];
/// a single run degenerates to the per-step absolute error.
std::vector<double> rmse_position(const std::vector<std::vector<Point2>>& est,
                                  const std::vector<Point2>& truth);

/// Per-step RMS of the wrapped orientation residual, in degrees.
std::vector<double> rmse_orientation(const std::vector<std::vector<double>>& est_rad,
                                     const std::vector<double>& truth_rad);

/// Detected feature as it appears in a map snapshot.
struct SnapshotFeature {
    int id = 0;
    Point2 pos;
    double p_va = 0.5;
    double p_ps = 0.5;
    double p_exist = 0.0;
};

/// maps[run][step] = detected features at that step.
using RunMapTrace = std::vector<std::vector<SnapshotFeature>>;

/// Averaged type beliefs of the estimated features matched to one true
/// feature; matched[step] counts the runs with a match at that step.
struct ModeTrace {
    std::vector<double> p_va;
    std::vector<double> p_ps;
    std::vector<int> matched;

    bool ever_matched() const {
        for (int m : matched)
            if (m > 0) return true;
        return false;
    }
};

/// Match estimated features to true positions by greedy nearest neighbor
/// within match_radius, then average type PMFs across runs per step.
std::vector<ModeTrace> mode_belief_trace(const std::vector<RunMapTrace>& runs,
                                         const std::vector<Point2>& true_positions,
                                         double match_radius);

struct DetectionEvent {
    int run = 0;
    int step = 0;
    int feat_id = 0;
    double p_exist = 0.0;
};

/// Evaluation summary for a batch of Monte-Carlo runs.
struct RunReport {
    std::vector<double> pos_rmse;
    std::vector<double> orient_rmse_deg;
    std::vector<ModeTrace> mode_traces;
    std::vector<DetectionEvent> detection_log;
};

}  // namespace mpslam
