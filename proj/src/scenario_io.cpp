#include "mpslam/scenario_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mpslam {

using nlohmann::json;

namespace {

double num_at(const json& j, const std::string& key, const char* where) {
    if (!j.contains(key) || !j[key].is_number())
        throw std::invalid_argument(std::string("scenario: missing or non-numeric field '") +
                                    where + "." + key + "'");
    return j[key].get<double>();
}

double num_or(const json& j, const std::string& key, double fallback) {
    return j.contains(key) ? j[key].get<double>() : fallback;
}

Point2 point_at(const json& j, const char* where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw std::invalid_argument(std::string("scenario: field '") + where +
                                    "' must be a [x, y] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

ArrayGeometry array_at(const json& j, const char* where) {
    if (!j.is_array() || j.empty())
        throw std::invalid_argument(std::string("scenario: field '") + where +
                                    "' must be a nonempty list of [d, azimuth, elevation]");
    std::vector<ArrayElement> els;
    for (const auto& e : j) {
        if (!e.is_array() || e.size() != 3)
            throw std::invalid_argument(std::string("scenario: elements of '") + where +
                                        "' must be [d, azimuth, elevation] triples");
        els.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
    }
    return ArrayGeometry(std::move(els));
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

ScenarioFile parse_scenario_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("scenario: JSON parse error: ") + e.what());
    }
    ScenarioFile sf;
    auto& sc = sf.scenario;
    auto& cfg = sf.config;

    if (!j.contains("environment")) throw std::invalid_argument("scenario: missing 'environment'");
    const json& env = j["environment"];
    sc.env.anchor = point_at(env.at("anchor"), "environment.anchor");
    sc.env.anchor_aod_orientation = num_or(env, "anchor_aod_orientation", 0.0);
    if (env.contains("walls"))
        for (const auto& w : env["walls"]) {
            if (!w.is_array() || w.size() != 2)
                throw std::invalid_argument(
                    "scenario: environment.walls entries must be endpoint pairs");
            sc.env.walls.push_back(
                {point_at(w[0], "environment.walls[.][0]"), point_at(w[1], "environment.walls[.][1]")});
        }
    if (env.contains("scatterers"))
        for (const auto& p : env["scatterers"])
            sc.env.scatterers.push_back(point_at(p, "environment.scatterers[.]"));

    if (!j.contains("trajectory")) throw std::invalid_argument("scenario: missing 'trajectory'");
    const json& tr = j["trajectory"];
    if (!tr.contains("waypoints") || !tr["waypoints"].is_array() || tr["waypoints"].size() < 2)
        throw std::invalid_argument("scenario: trajectory.waypoints needs at least two points");
    std::vector<Point2> wps;
    for (const auto& p : tr["waypoints"]) wps.push_back(point_at(p, "trajectory.waypoints[.]"));
    const double speed = num_at(tr, "speed", "trajectory");
    const double dt = num_or(tr, "dt", 1.0);
    sc.trajectory = generate_trajectory(wps, speed, dt);

    if (!j.contains("radio")) throw std::invalid_argument("scenario: missing 'radio'");
    const json& ra = j["radio"];
    sc.radio.beta_bw = num_at(ra, "beta_bw_hz", "radio");
    sc.radio.f_c = num_at(ra, "f_c_hz", "radio");
    sc.radio.c = num_or(ra, "c", 299792458.0);
    sc.radio.n_rx = static_cast<int>(num_at(ra, "n_rx", "radio"));
    sc.radio.n_tx = static_cast<int>(num_at(ra, "n_tx", "radio"));
    sc.radio.n_f = static_cast<int>(num_at(ra, "n_f", "radio"));
    sc.radio.u_de = num_at(ra, "u_de", "radio");
    sc.radio.tx_array = array_at(ra.at("tx_array"), "radio.tx_array");
    sc.radio.rx_array = array_at(ra.at("rx_array"), "radio.rx_array");

    if (!j.contains("clutter")) throw std::invalid_argument("scenario: missing 'clutter'");
    sc.clutter.mu_fa = num_at(j["clutter"], "mu_fa", "clutter");
    sc.clutter.d_max = num_at(j["clutter"], "d_max", "clutter");

    if (j.contains("synth")) {
        const json& sy = j["synth"];
        sc.synth.u_ref = num_or(sy, "u_ref", sc.synth.u_ref);
        sc.synth.d_ref = num_or(sy, "d_ref", sc.synth.d_ref);
        sc.synth.include_los = sy.value("include_los", false);
        sc.synth.noiseless = sy.value("noiseless", false);
    }

    // features derive from the environment: first-order virtual anchors from
    // walls, scatterers as given
    for (const auto& w : sc.env.walls) {
        TrueFeature f;
        f.type = FeatureType::va;
        f.mirror_chain = {w};
        f.pos = virtual_anchor(sc.env.anchor, f.mirror_chain);
        sc.features.push_back(std::move(f));
    }
    for (const auto& p : sc.env.scatterers) sc.features.push_back({FeatureType::ps, p, {}});

    cfg.radio = sc.radio;
    cfg.clutter = sc.clutter;
    cfg.anchor = sc.env.anchor;
    cfg.anchor_aod_orientation = sc.env.anchor_aod_orientation;
    cfg.motion.dt = dt;
    if (j.contains("filter")) {
        const json& f = j["filter"];
        cfg.mu_n = num_or(f, "mu_n", cfg.mu_n);
        cfg.motion.p_s = num_or(f, "p_s", cfg.motion.p_s);
        cfg.p_de = num_or(f, "p_de", cfg.p_de);
        cfg.p_pr = num_or(f, "p_pr", cfg.p_pr);
        cfg.n_particles = static_cast<int>(num_or(f, "n_particles", cfg.n_particles));
        cfg.motion.sigma_nu = std::sqrt(num_or(f, "sigma_nu2", 0.0025));
        cfg.motion.sigma_p_feat = num_or(f, "sigma_p_feat", cfg.motion.sigma_p_feat);
        cfg.init_pos_halfwidth = num_or(f, "init_pos_halfwidth_m", cfg.init_pos_halfwidth);
        cfg.init_vel_halfwidth = num_or(f, "init_vel_halfwidth_mps", cfg.init_vel_halfwidth);
        cfg.anchor_known = f.value("anchor_known", true);
        cfg.anchor_prior_std = num_or(f, "anchor_prior_std_m", cfg.anchor_prior_std);
        cfg.birth_u_max = num_or(f, "birth_u_max", cfg.birth_u_max);
        if (f.contains("q_matrix")) {
            const json& q = f["q_matrix"];
            if (!q.is_array() || q.size() != 2 || q[0].size() != 2 || q[1].size() != 2)
                throw std::invalid_argument("scenario: filter.q_matrix must be 2x2");
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) cfg.type_transition.q[a][b] = q[a][b].get<double>();
            for (int b = 0; b < 2; ++b) {
                const double col = cfg.type_transition.q[0][b] + cfg.type_transition.q[1][b];
                if (std::abs(col - 1.0) > 1e-9)
                    throw std::invalid_argument("scenario: filter.q_matrix columns must sum to 1");
            }
        }
    }
    if (!j.contains("filter") || !j["filter"].contains("q_matrix"))
        cfg.type_transition.q = {{{0.96, 0.04}, {0.04, 0.96}}};
    return sf;
}

ScenarioFile load_scenario_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("scenario file not readable: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario_json(ss.str());
}

std::string scenario_to_json(const ScenarioFile& sf) {
    const auto& sc = sf.scenario;
    const auto& cfg = sf.config;
    json j;
    j["environment"]["anchor"] = {sc.env.anchor.x, sc.env.anchor.y};
    j["environment"]["anchor_aod_orientation"] = sc.env.anchor_aod_orientation;
    j["environment"]["walls"] = json::array();
    for (const auto& w : sc.env.walls)
        j["environment"]["walls"].push_back({{w.a.x, w.a.y}, {w.b.x, w.b.y}});
    j["environment"]["scatterers"] = json::array();
    for (const auto& p : sc.env.scatterers) j["environment"]["scatterers"].push_back({p.x, p.y});

    // waypoints reduce to the trajectory endpoints for piecewise tracks
    j["trajectory"]["waypoints"] = json::array();
    if (!sc.trajectory.empty()) {
        j["trajectory"]["waypoints"].push_back(
            {sc.trajectory.front().p.x, sc.trajectory.front().p.y});
        j["trajectory"]["waypoints"].push_back(
            {sc.trajectory.back().p.x, sc.trajectory.back().p.y});
        j["trajectory"]["speed"] = sc.trajectory.front().v.norm();
    }
    j["trajectory"]["dt"] = cfg.motion.dt;

    j["radio"]["beta_bw_hz"] = sc.radio.beta_bw;
    j["radio"]["f_c_hz"] = sc.radio.f_c;
    j["radio"]["c"] = sc.radio.c;
    j["radio"]["n_rx"] = sc.radio.n_rx;
    j["radio"]["n_tx"] = sc.radio.n_tx;
    j["radio"]["n_f"] = sc.radio.n_f;
    j["radio"]["u_de"] = sc.radio.u_de;
    for (const char* key : {"tx_array", "rx_array"}) {
        const auto& arr = std::string(key) == "tx_array" ? sc.radio.tx_array : sc.radio.rx_array;
        j["radio"][key] = json::array();
        for (const auto& e : arr.elements())
            j["radio"][key].push_back({e.dist_m, e.azimuth_rad, e.elevation_rad});
    }

    j["clutter"]["mu_fa"] = sc.clutter.mu_fa;
    j["clutter"]["d_max"] = sc.clutter.d_max;

    j["synth"]["u_ref"] = sc.synth.u_ref;
    j["synth"]["d_ref"] = sc.synth.d_ref;
    j["synth"]["include_los"] = sc.synth.include_los;
    j["synth"]["noiseless"] = sc.synth.noiseless;

    j["filter"]["mu_n"] = cfg.mu_n;
    j["filter"]["p_s"] = cfg.motion.p_s;
    j["filter"]["p_de"] = cfg.p_de;
    j["filter"]["p_pr"] = cfg.p_pr;
    j["filter"]["n_particles"] = cfg.n_particles;
    j["filter"]["q_matrix"] = {{cfg.type_transition.q[0][0], cfg.type_transition.q[0][1]},
                               {cfg.type_transition.q[1][0], cfg.type_transition.q[1][1]}};
    j["filter"]["sigma_nu2"] = cfg.motion.sigma_nu * cfg.motion.sigma_nu;
    j["filter"]["sigma_p_feat"] = cfg.motion.sigma_p_feat;
    j["filter"]["init_pos_halfwidth_m"] = cfg.init_pos_halfwidth;
    j["filter"]["init_vel_halfwidth_mps"] = cfg.init_vel_halfwidth;
    j["filter"]["anchor_known"] = cfg.anchor_known;
    j["filter"]["anchor_prior_std_m"] = cfg.anchor_prior_std;
    j["filter"]["birth_u_max"] = cfg.birth_u_max;
    return j.dump(2) + "\n";
}

std::string apply_override(const std::string& json_text, const std::string& key_value) {
    const auto eq = key_value.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must have the form key=value: " + key_value);
    const std::string key = key_value.substr(0, eq);
    const std::string value = key_value.substr(eq + 1);

    json j = json::parse(json_text);
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
        if (part.empty()) throw std::invalid_argument("override has an empty key segment: " + key);
        if (dot == std::string::npos) {
            json parsed;
            try {
                parsed = json::parse(value);
            } catch (const json::parse_error&) {
                parsed = value;  // bare strings are allowed unquoted
            }
            (*node)[part] = parsed;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
    return j.dump(2) + "\n";
}

std::string measurements_to_csv(const std::vector<std::vector<Measurement>>& scans) {
    std::ostringstream os;
    os << "step,dist_m,aod_rad,aoa_rad,amp\n";
    for (std::size_t s = 0; s < scans.size(); ++s)
        for (const auto& z : scans[s])
            os << (s + 1) << ',' << format_double(z.dist) << ',' << format_double(z.aod) << ','
               << format_double(z.aoa) << ',' << format_double(z.amp) << '\n';
    return os.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

double parse_num(const std::string& s, int line_no, const char* col) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("csv line " + std::to_string(line_no) + ": bad value for " +
                                    col + ": '" + s + "'");
    }
}

}  // namespace

std::vector<std::vector<Measurement>> parse_measurements_csv(const std::string& text,
                                                             double u_de) {
    std::istringstream is(text);
    std::string line;
    std::vector<std::vector<Measurement>> scans;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line_no == 1) continue;  // header
        const auto cells = split_csv_line(line);
        if (cells.size() != 5)
            throw std::invalid_argument("csv line " + std::to_string(line_no) +
                                        ": expected 5 columns step,dist_m,aod_rad,aoa_rad,amp");
        const int step = static_cast<int>(parse_num(cells[0], line_no, "step"));
        if (step < 1)
            throw std::invalid_argument("csv line " + std::to_string(line_no) + ": step must be >= 1");
        Measurement z;
        z.dist = parse_num(cells[1], line_no, "dist_m");
        z.aod = parse_num(cells[2], line_no, "aod_rad");
        z.aoa = parse_num(cells[3], line_no, "aoa_rad");
        z.amp = parse_num(cells[4], line_no, "amp");
        if (z.dist < 0.0)
            throw std::invalid_argument("csv line " + std::to_string(line_no) +
                                        ": dist_m must be >= 0");
        if (z.amp < u_de)
            throw std::invalid_argument("csv line " + std::to_string(line_no) +
                                        ": amp below the detection threshold");
        if (scans.size() < static_cast<std::size_t>(step)) scans.resize(step);
        scans[static_cast<std::size_t>(step) - 1].push_back(z);
    }
    return scans;
}

std::vector<std::vector<Measurement>> load_measurements_csv(const std::filesystem::path& path,
                                                            double u_de) {
    return parse_measurements_csv(read_file(path), u_de);
}

std::string trace_to_csv(const std::vector<TraceRow>& rows) {
    std::ostringstream os;
    os << "step,run,est_x,est_y,est_vx,est_vy,est_orient_rad,true_x,true_y,true_orient_rad\n";
    for (const auto& r : rows)
        os << r.step << ',' << r.run << ',' << format_double(r.est_x) << ','
           << format_double(r.est_y) << ',' << format_double(r.est_vx) << ','
           << format_double(r.est_vy) << ',' << format_double(r.est_orient) << ','
           << format_double(r.true_x) << ',' << format_double(r.true_y) << ','
           << format_double(r.true_orient) << '\n';
    return os.str();
}

std::vector<TraceRow> parse_trace_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::vector<TraceRow> rows;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line_no == 1) continue;
        const auto c = split_csv_line(line);
        if (c.size() != 10)
            throw std::invalid_argument("trace csv line " + std::to_string(line_no) +
                                        ": expected 10 columns");
        TraceRow r;
        r.step = static_cast<int>(parse_num(c[0], line_no, "step"));
        r.run = static_cast<int>(parse_num(c[1], line_no, "run"));
        r.est_x = parse_num(c[2], line_no, "est_x");
        r.est_y = parse_num(c[3], line_no, "est_y");
        r.est_vx = parse_num(c[4], line_no, "est_vx");
        r.est_vy = parse_num(c[5], line_no, "est_vy");
        r.est_orient = parse_num(c[6], line_no, "est_orient_rad");
        r.true_x = parse_num(c[7], line_no, "true_x");
        r.true_y = parse_num(c[8], line_no, "true_y");
        r.true_orient = parse_num(c[9], line_no, "true_orient_rad");
        rows.push_back(r);
    }
    return rows;
}

std::string map_to_csv(const std::vector<MapRow>& rows) {
    std::ostringstream os;
    os << "step,run,feat_id,x,y,p_exist,p_va,p_ps\n";
    for (const auto& r : rows)
        os << r.step << ',' << r.run << ',' << r.feat_id << ',' << format_double(r.x) << ','
           << format_double(r.y) << ',' << format_double(r.p_exist) << ','
           << format_double(r.p_va) << ',' << format_double(r.p_ps) << '\n';
    return os.str();
}

std::vector<MapRow> parse_map_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::vector<MapRow> rows;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line_no == 1) continue;
        const auto c = split_csv_line(line);
        if (c.size() != 8)
            throw std::invalid_argument("map csv line " + std::to_string(line_no) +
                                        ": expected 8 columns");
        MapRow r;
        r.step = static_cast<int>(parse_num(c[0], line_no, "step"));
        r.run = static_cast<int>(parse_num(c[1], line_no, "run"));
        r.feat_id = static_cast<int>(parse_num(c[2], line_no, "feat_id"));
        r.x = parse_num(c[3], line_no, "x");
        r.y = parse_num(c[4], line_no, "y");
        r.p_exist = parse_num(c[5], line_no, "p_exist");
        r.p_va = parse_num(c[6], line_no, "p_va");
        r.p_ps = parse_num(c[7], line_no, "p_ps");
        rows.push_back(r);
    }
    return rows;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace mpslam
