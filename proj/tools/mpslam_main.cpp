// Scenario runner: synthesizes (or ingests) measurement scans, runs the
// filter over Monte-Carlo repetitions and writes plot-ready CSV traces.

#include <cstdio>
#include <filesystem>
#include <future>
#include <iostream>
#include <thread>

#include "CLI11.hpp"

#include "mpslam/metrics.hpp"
#include "mpslam/random.hpp"
#include "mpslam/runner.hpp"
#include "mpslam/scenario_io.hpp"

namespace fs = std::filesystem;
using namespace mpslam;

namespace {

struct RunOutput {
    RunResult result;
    std::vector<TraceRow> trace;
    std::vector<MapRow> map;
};

RunOutput make_run_output(const Scenario& sc, const RunResult& rr, int run) {
    RunOutput out;
    out.result = rr;
    for (std::size_t s = 0; s < rr.estimates.size(); ++s) {
        const auto& est = rr.estimates[s];
        const auto& truth = sc.trajectory[s + 1];
        TraceRow t;
        t.step = static_cast<int>(s) + 1;
        t.run = run;
        t.est_x = est.agent.p.x;
        t.est_y = est.agent.p.y;
        t.est_vx = est.agent.v.x;
        t.est_vy = est.agent.v.y;
        t.est_orient = est.orientation;
        t.true_x = truth.p.x;
        t.true_y = truth.p.y;
        t.true_orient = orientation_from_velocity(truth.v);
        out.trace.push_back(t);
        for (const auto& f : rr.all_feats[s]) {
            MapRow m;
            m.step = t.step;
            m.run = run;
            m.feat_id = f.id;
            m.x = f.pos.x;
            m.y = f.pos.y;
            m.p_exist = f.p_exist;
            m.p_va = f.p_va;
            m.p_ps = f.p_ps;
            out.map.push_back(m);
        }
    }
    return out;
}

std::string run_name(const char* prefix, int run) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_run%04d.csv", prefix, run);
    return buf;
}

void write_reports(const fs::path& dir, const Scenario& sc, const SlamConfig& cfg,
                   const std::vector<std::vector<TraceRow>>& traces,
                   const std::vector<std::vector<MapRow>>& maps) {
    // aggregate RMSE over runs, indexed by step
    std::size_t n_steps = 0;
    for (const auto& t : traces) n_steps = std::max(n_steps, t.size());
    if (n_steps == 0) return;

    std::vector<std::vector<Point2>> est_pos;
    std::vector<std::vector<double>> est_orient;
    std::vector<Point2> truth_pos(n_steps);
    std::vector<double> truth_orient(n_steps);
    for (const auto& rows : traces) {
        if (rows.size() != n_steps) continue;  // diverged runs are reported separately
        std::vector<Point2> p(n_steps);
        std::vector<double> o(n_steps);
        for (std::size_t s = 0; s < n_steps; ++s) {
            p[s] = {rows[s].est_x, rows[s].est_y};
            o[s] = rows[s].est_orient;
            truth_pos[s] = {rows[s].true_x, rows[s].true_y};
            truth_orient[s] = rows[s].true_orient;
        }
        est_pos.push_back(std::move(p));
        est_orient.push_back(std::move(o));
    }
    if (est_pos.empty()) return;
    const auto pos_rmse = rmse_position(est_pos, truth_pos);
    const auto orient_rmse = rmse_orientation(est_orient, truth_orient);
    {
        std::ostringstream os;
        os << "step,pos_rmse_m,orient_rmse_deg,n_runs\n";
        os.precision(17);
        for (std::size_t s = 0; s < n_steps; ++s)
            os << (s + 1) << ',' << pos_rmse[s] << ',' << orient_rmse[s] << ','
               << est_pos.size() << '\n';
        write_file_atomic(dir / "rmse.csv", os.str());
    }

    // mode traces against the true feature positions
    std::vector<Point2> true_positions;
    for (const auto& f : sc.features) true_positions.push_back(f.pos);
    std::vector<RunMapTrace> run_maps;
    for (const auto& rows : maps) {
        RunMapTrace rm(n_steps);
        for (const auto& r : rows) {
            if (r.p_exist < cfg.p_de) continue;
            if (r.step < 1 || static_cast<std::size_t>(r.step) > n_steps) continue;
            rm[static_cast<std::size_t>(r.step) - 1].push_back(
                {r.feat_id, {r.x, r.y}, r.p_va, r.p_ps, r.p_exist});
        }
        run_maps.push_back(std::move(rm));
    }
    const auto traces_out = mode_belief_trace(run_maps, true_positions, 0.5);
    {
        std::ostringstream os;
        os << "step,true_feat,p_va,p_ps,n_matched\n";
        os.precision(17);
        for (std::size_t t = 0; t < traces_out.size(); ++t)
            for (std::size_t s = 0; s < n_steps; ++s)
                os << (s + 1) << ',' << t << ',' << traces_out[t].p_va[s] << ','
                   << traces_out[t].p_ps[s] << ',' << traces_out[t].matched[s] << '\n';
        write_file_atomic(dir / "mode_trace.csv", os.str());
    }

    // detection events: first upward crossing of the detection threshold
    {
        std::ostringstream os;
        os << "run,step,feat_id,p_exist\n";
        os.precision(17);
        for (std::size_t run = 0; run < maps.size(); ++run) {
            std::map<int, bool> above;
            for (const auto& r : maps[run]) {
                const bool now_above = r.p_exist >= cfg.p_de;
                if (now_above && !above[r.feat_id])
                    os << run << ',' << r.step << ',' << r.feat_id << ',' << r.p_exist << '\n';
                above[r.feat_id] = now_above;
            }
        }
        write_file_atomic(dir / "detections.csv", os.str());
    }
}

int cmd_run(const std::string& scenario_path, const std::string& measurements_path, int runs,
            std::uint64_t seed, const std::string& out_dir,
            const std::vector<std::string>& overrides, bool dump_measurements) {
    if (!fs::exists(scenario_path)) {
        std::cerr << "error: scenario file not found: " << scenario_path << "\n";
        return 2;
    }
    ScenarioFile sf;
    try {
        std::string text = read_file(scenario_path);
        for (const auto& kv : overrides) text = apply_override(text, kv);
        sf = parse_scenario_json(text);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::vector<std::vector<Measurement>> external_scans;
    const bool use_external = !measurements_path.empty();
    if (use_external) {
        try {
            external_scans = load_measurements_csv(measurements_path, sf.scenario.radio.u_de);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        }
    }

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    write_file_atomic(dir / "scenario.json", scenario_to_json(sf));

    std::vector<std::vector<TraceRow>> traces(static_cast<std::size_t>(runs));
    std::vector<std::vector<MapRow>> maps(static_cast<std::size_t>(runs));
    std::vector<std::optional<int>> diverged(static_cast<std::size_t>(runs));

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::future<void>> futs;
    std::atomic<int> next{0};
    for (unsigned t = 0; t < std::min<unsigned>(hw, static_cast<unsigned>(runs)); ++t) {
        futs.push_back(std::async(std::launch::async, [&] {
            for (int r = next.fetch_add(1); r < runs; r = next.fetch_add(1)) {
                const std::uint64_t run_seed = splitmix64(seed ^ splitmix64(kStreamRun + r));
                RunResult rr = use_external
                                   ? run_once_with_measurements(sf.scenario, sf.config, run_seed,
                                                                external_scans)
                                   : run_once(sf.scenario, sf.config, run_seed);
                RunOutput out = make_run_output(sf.scenario, rr, r);
                write_file_atomic(dir / run_name("trace", r), trace_to_csv(out.trace));
                write_file_atomic(dir / run_name("map", r), map_to_csv(out.map));
                if (dump_measurements && !use_external) {
                    auto rng = substream(run_seed, kStreamSynth);
                    std::vector<std::vector<Measurement>> scans;
                    for (std::size_t s = 0; s + 1 < sf.scenario.trajectory.size(); ++s)
                        scans.push_back(generate_measurements(sf.scenario,
                                                              static_cast<int>(s) + 1, rng));
                    write_file_atomic(dir / run_name("measurements", r),
                                      measurements_to_csv(scans));
                }
                traces[static_cast<std::size_t>(r)] = std::move(out.trace);
                maps[static_cast<std::size_t>(r)] = std::move(out.map);
                diverged[static_cast<std::size_t>(r)] = rr.diverged_at;
            }
        }));
    }
    for (auto& f : futs) f.get();

    write_reports(dir, sf.scenario, sf.config, traces, maps);

    bool any_diverged = false;
    for (std::size_t r = 0; r < diverged.size(); ++r) {
        if (diverged[r]) {
            any_diverged = true;
            std::cerr << "run " << r << ": filter divergence at step " << *diverged[r]
                      << " (partial trace written)\n";
        }
    }
    if (any_diverged) return 1;
    std::cout << "wrote " << runs << " run(s) to " << out_dir << "\n";
    return 0;
}

int cmd_report(const std::string& in_dir) {
    const fs::path dir(in_dir);
    if (!fs::exists(dir / "scenario.json")) {
        std::cerr << "error: no scenario.json in " << in_dir << "\n";
        return 2;
    }
    ScenarioFile sf;
    try {
        sf = load_scenario_file(dir / "scenario.json");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::vector<std::vector<TraceRow>> traces;
    std::vector<std::vector<MapRow>> maps;
    for (int r = 0;; ++r) {
        const fs::path tp = dir / run_name("trace", r);
        const fs::path mp = dir / run_name("map", r);
        if (!fs::exists(tp)) break;
        traces.push_back(parse_trace_csv(read_file(tp)));
        maps.push_back(fs::exists(mp) ? parse_map_csv(read_file(mp)) : std::vector<MapRow>{});
    }
    if (traces.empty()) {
        std::cerr << "error: no trace files in " << in_dir << "\n";
        return 2;
    }
    write_reports(dir, sf.scenario, sf.config, traces, maps);
    std::cout << "aggregated " << traces.size() << " run(s) in " << in_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multipath-based SLAM scenario runner"};
    app.require_subcommand(1);

    std::string scenario_path, measurements_path, out_dir = "out", in_dir;
    int runs = 1;
    std::uint64_t seed = 1;
    std::vector<std::string> overrides;
    bool dump_measurements = false;

    auto* run = app.add_subcommand("run", "synthesize scans and run the filter");
    run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--measurements", measurements_path,
                    "measurement CSV to ingest instead of synthesizing");
    run->add_option("--runs", runs, "number of Monte-Carlo runs")->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "base random seed");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--set", overrides, "override a scenario field, e.g. filter.n_particles=5000");
    run->add_flag("--dump-measurements", dump_measurements,
                  "also write the synthesized measurements per run");

    auto* report = app.add_subcommand("report", "re-aggregate RMSE and mode traces");
    report->add_option("--in", in_dir, "directory with trace/map CSV files")->required();

    std::string dump_path;
    auto* dump = app.add_subcommand("dump-default-scenario", "print the bundled scenario JSON");
    dump->add_option("--out", dump_path, "write to a file instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(scenario_path, measurements_path, runs, seed, out_dir, overrides,
                           dump_measurements);
        if (report->parsed()) return cmd_report(in_dir);
        if (dump->parsed()) {
            ScenarioFile sf;
            sf.scenario = default_scenario();
            sf.config = default_slam_config(sf.scenario);
            const std::string text = scenario_to_json(sf);
            if (dump_path.empty())
                std::cout << text;
            else
                write_file_atomic(dump_path, text);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
