#include "impx/config.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "impx/util.hpp"

namespace impx {

namespace {

std::vector<double> parse_numbers(const std::string& s) {
    std::vector<double> out;
    std::istringstream ss(s);
    std::string tok;
    while (ss >> tok) {
        if (tok == ",") continue;
        if (!tok.empty() && tok.back() == ',') tok.pop_back();
        out.push_back(std::stod(tok));
    }
    return out;
}

std::string join_numbers(const std::vector<double>& v) {
    std::ostringstream ss;
    ss.precision(17);
    for (size_t i = 0; i < v.size(); ++i) ss << (i ? " " : "") << v[i];
    return ss.str();
}

} // namespace

SimConfig RunConfig::sim_config() const {
    SimConfig sc;
    sc.epsilon = epsilon;
    sc.n_steps_base = n_steps_base;
    sc.dt_factor = dt_factor;
    sc.n_paths = n_paths;
    sc.seed = seed;
    sc.t0 = t0;
    sc.w0 = w0;
    sc.s0 = Eigen::Map<const Vec>(s0.data(), long(s0.size()));
    sc.monitor_mode = monitor_mode == "record" ? MonitorMode::record : MonitorMode::liquidate;
    sc.guard_mult = guard_mult;
    sc.cash_floor_mult = cash_floor_mult;
    sc.n_threads = n_threads;
    return sc;
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["market"]["mu"] = c.mu;
    j["market"]["sigma"] = c.sigma;
    j["market"]["r"] = c.r;
    j["investor"]["R"] = c.R;
    j["investor"]["T"] = c.T;
    j["investor"]["kappa"] = c.kappa;
    j["investor"]["m"] = c.m;
    j["sim"]["epsilon"] = c.epsilon;
    j["sim"]["n_paths"] = c.n_paths;
    j["sim"]["n_steps_base"] = c.n_steps_base;
    j["sim"]["dt_factor"] = c.dt_factor;
    j["sim"]["seed"] = c.seed;
    j["sim"]["t0"] = c.t0;
    j["sim"]["w0"] = c.w0;
    j["sim"]["s0"] = c.s0;
    j["sim"]["monitor_mode"] = c.monitor_mode;
    j["sim"]["guard_mult"] = c.guard_mult;
    j["sim"]["cash_floor_mult"] = c.cash_floor_mult;
    j["sim"]["n_threads"] = c.n_threads;
    j["sim"]["trace_paths"] = c.trace_paths;
    j["validator"]["eps_grid"] = c.eps_grid;
    j["validator"]["n_paths"] = c.validator_paths;
    j["validator"]["ratio_tol"] = c.ratio_tol;
    j["validator"]["slack_tol"] = c.slack_tol;
    j["validator"]["scaling_eps_grid"] = c.scaling_eps_grid;
    j["validator"]["scaling_n_paths"] = c.scaling_paths;
    j["validator"]["fk_paths"] = c.fk_paths;
    j["solver"]["bisect_tol"] = c.bisect_tol;
    j["solver"]["asym_tol"] = c.asym_tol;
    j["output"]["output_dir"] = c.output_dir;
    j["output"]["cache_dir"] = c.cache_dir;
    return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        const auto& mk = j.at("market");
        c.mu = mk.at("mu").get<std::vector<double>>();
        c.sigma = mk.at("sigma").get<std::vector<std::vector<double>>>();
        c.r = mk.at("r").get<double>();
        const auto& in = j.at("investor");
        c.R = in.at("R").get<double>();
        c.T = in.at("T").get<double>();
        c.kappa = in.at("kappa").get<double>();
        c.m = in.at("m").get<double>();
        const auto& sm = j.at("sim");
        c.epsilon = sm.at("epsilon").get<double>();
        c.n_paths = sm.at("n_paths").get<long>();
        c.n_steps_base = sm.at("n_steps_base").get<int>();
        c.dt_factor = sm.at("dt_factor").get<double>();
        c.seed = sm.at("seed").get<std::uint64_t>();
        c.t0 = sm.at("t0").get<double>();
        c.w0 = sm.at("w0").get<double>();
        c.s0 = sm.at("s0").get<std::vector<double>>();
        c.monitor_mode = sm.value("monitor_mode", std::string("liquidate"));
        c.guard_mult = sm.value("guard_mult", 1.0);
        c.cash_floor_mult = sm.value("cash_floor_mult", 0.75);
        c.n_threads = sm.value("n_threads", 0);
        c.trace_paths = sm.value("trace_paths", 0);
        const auto& va = j.at("validator");
        c.eps_grid = va.at("eps_grid").get<std::vector<double>>();
        c.validator_paths = va.at("n_paths").get<long>();
        c.ratio_tol = va.value("ratio_tol", 0.2);
        c.slack_tol = va.value("slack_tol", 0.1);
        c.scaling_eps_grid = va.value("scaling_eps_grid", std::vector<double>{});
        c.scaling_paths = va.value("scaling_n_paths", 100000L);
        c.fk_paths = va.value("fk_paths", 100000L);
        if (j.contains("solver")) {
            c.bisect_tol = j["solver"].value("bisect_tol", 1e-10);
            c.asym_tol = j["solver"].value("asym_tol", 0.005);
        }
        if (j.contains("output")) {
            c.output_dir = j["output"].value("output_dir", std::string("out"));
            c.cache_dir = j["output"].value("cache_dir", std::string("cache"));
        }
    } catch (const nlohmann::json::exception& e) {
        throw invalid_parameter(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_parameter("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{')
        return config_from_json(nlohmann::json::parse(text));

    // sectioned key-value format
    std::map<std::string, std::map<std::string, std::string>> kv;
    std::string section;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        size_t e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        if (line.front() == '[') {
            if (line.back() != ']') throw invalid_parameter("config: malformed section: " + line);
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw invalid_parameter("config: expected key = value: " + line);
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        key.erase(key.find_last_not_of(" \t") + 1);
        val.erase(0, val.find_first_not_of(" \t"));
        kv[section][key] = val;
    }

    nlohmann::json j;
    auto num = [&](const std::string& sec, const std::string& key, double dflt,
                   bool required = false) {
        auto s = kv.find(sec);
        if (s == kv.end() || !s->second.count(key)) {
            if (required) throw invalid_parameter("config: missing " + sec + "." + key);
            return dflt;
        }
        return std::stod(s->second.at(key));
    };
    auto list = [&](const std::string& sec, const std::string& key) -> std::vector<double> {
        auto s = kv.find(sec);
        if (s == kv.end() || !s->second.count(key))
            throw invalid_parameter("config: missing " + sec + "." + key);
        return parse_numbers(s->second.at(key));
    };
    auto str = [&](const std::string& sec, const std::string& key, const std::string& dflt) {
        auto s = kv.find(sec);
        if (s == kv.end() || !s->second.count(key)) return dflt;
        return s->second.at(key);
    };

    RunConfig c;
    c.mu = list("market", "mu");
    c.r = num("market", "r", 0.0, true);
    {
        // matrix rows separated by ';'
        auto s = kv.find("market");
        if (s == kv.end() || !s->second.count("sigma"))
            throw invalid_parameter("config: missing market.sigma");
        std::string rows = s->second.at("sigma");
        std::string row;
        std::istringstream rs(rows);
        while (std::getline(rs, row, ';')) c.sigma.push_back(parse_numbers(row));
    }
    c.R = num("investor", "R", 0.5, true);
    c.T = num("investor", "T", 1.0, true);
    c.kappa = num("investor", "kappa", 1.0, true);
    c.m = num("investor", "m", 3.0, true);
    c.epsilon = num("sim", "epsilon", 0.1);
    c.n_paths = long(num("sim", "n_paths", 10000));
    c.n_steps_base = int(num("sim", "n_steps_base", 1000));
    c.dt_factor = num("sim", "dt_factor", 0.1);
    c.seed = std::uint64_t(num("sim", "seed", 20240801));
    c.t0 = num("sim", "t0", 0.0);
    c.w0 = num("sim", "w0", 1.0);
    c.s0 = list("sim", "s0");
    c.monitor_mode = str("sim", "monitor_mode", "liquidate");
    c.guard_mult = num("sim", "guard_mult", 1.0);
    c.cash_floor_mult = num("sim", "cash_floor_mult", 0.75);
    c.n_threads = int(num("sim", "n_threads", 0));
    c.trace_paths = int(num("sim", "trace_paths", 0));
    if (kv.count("validator")) {
        c.eps_grid = list("validator", "eps_grid");
        c.validator_paths = long(num("validator", "n_paths", 10000));
        c.ratio_tol = num("validator", "ratio_tol", 0.2);
        c.slack_tol = num("validator", "slack_tol", 0.1);
        if (kv["validator"].count("scaling_eps_grid"))
            c.scaling_eps_grid = list("validator", "scaling_eps_grid");
        c.scaling_paths = long(num("validator", "scaling_n_paths", 100000));
        c.fk_paths = long(num("validator", "fk_paths", 100000));
    }
    c.bisect_tol = num("solver", "bisect_tol", 1e-10);
    c.asym_tol = num("solver", "asym_tol", 0.005);
    c.output_dir = str("output", "output_dir", "out");
    c.cache_dir = str("output", "cache_dir", "cache");
    return c;
}

void save_config(const RunConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw invalid_parameter("config: cannot write " + path);
    out.precision(17);
    out << "[market]\n";
    out << "mu = " << join_numbers(c.mu) << "\n";
    out << "r = " << c.r << "\n";
    out << "sigma = ";
    for (size_t i = 0; i < c.sigma.size(); ++i)
        out << (i ? " ; " : "") << join_numbers(c.sigma[i]);
    out << "\n\n[investor]\n";
    out << "R = " << c.R << "\nT = " << c.T << "\nkappa = " << c.kappa << "\nm = " << c.m;
    out << "\n\n[sim]\n";
    out << "epsilon = " << c.epsilon << "\nn_paths = " << c.n_paths
        << "\nn_steps_base = " << c.n_steps_base << "\ndt_factor = " << c.dt_factor
        << "\nseed = " << c.seed << "\nt0 = " << c.t0 << "\nw0 = " << c.w0
        << "\ns0 = " << join_numbers(c.s0) << "\nmonitor_mode = " << c.monitor_mode
        << "\nguard_mult = " << c.guard_mult << "\ncash_floor_mult = " << c.cash_floor_mult
        << "\nn_threads = " << c.n_threads << "\ntrace_paths = " << c.trace_paths;
    out << "\n\n[validator]\n";
    out << "eps_grid = " << join_numbers(c.eps_grid) << "\nn_paths = " << c.validator_paths
        << "\nratio_tol = " << c.ratio_tol << "\nslack_tol = " << c.slack_tol
        << "\nscaling_eps_grid = " << join_numbers(c.scaling_eps_grid)
        << "\nscaling_n_paths = " << c.scaling_paths << "\nfk_paths = " << c.fk_paths;
    out << "\n\n[solver]\n";
    out << "bisect_tol = " << c.bisect_tol << "\nasym_tol = " << c.asym_tol;
    out << "\n\n[output]\n";
    out << "output_dir = " << c.output_dir << "\ncache_dir = " << c.cache_dir << "\n";
}

std::string config_hash(const RunConfig& c) {
    // identifies the experiment; where the reports land is not part of it
    nlohmann::ordered_json j = config_to_json(c);
    j.erase("output");
    const std::string dump = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig benchmark_config() {
    RunConfig c;
    c.mu = {0.04, 0.05};
    c.sigma = {{0.30, 0.00}, {0.09, 0.28}};
    c.r = 0.02;
    c.R = 0.5;
    c.T = 1.0;
    c.kappa = 1.0;
    c.m = 3.0;
    c.epsilon = 0.1;
    c.t0 = 0.0;
    c.w0 = 1.0;
    c.s0 = {1.0, 1.0};
    c.eps_grid = {0.2, 0.1, 0.05, 0.025};
    // the candidate is monitored but not force-liquidated in the study (see README)
    c.monitor_mode = "record";
    return c;
}

namespace {

std::string corrector_cache_key(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["m"] = c.m;
    j["bisect_tol"] = c.bisect_tol;
    j["asym_tol"] = c.asym_tol;
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace

Pipeline build_pipeline(const RunConfig& cfg, bool use_cache, std::ostream* log) {
    if (cfg.mu.empty() || cfg.sigma.size() != cfg.mu.size())
        throw invalid_parameter("config: mu and sigma dimensions disagree");
    const int d = int(cfg.mu.size());
    Mat sigma(d, d);
    for (int i = 0; i < d; ++i) {
        if (int(cfg.sigma[i].size()) != d)
            throw invalid_parameter("config: sigma must be square");
        for (int j = 0; j < d; ++j) sigma(i, j) = cfg.sigma[i][j];
    }
    if (int(cfg.s0.size()) != d) throw invalid_parameter("config: s0 has wrong dimension");

    MarketParams market(Eigen::Map<const Vec>(cfg.mu.data(), d), sigma, cfg.r);
    InvestorImpactParams investor(cfg.R, cfg.T, cfg.kappa, cfg.m);
    MertonSolution merton(market, investor);  // validates the simplex condition

    std::shared_ptr<const Corrector1D> c1d;
    ShootOptions opt;
    opt.bisect_tol = cfg.bisect_tol;
    opt.asym_tol = cfg.asym_tol;
    if (use_cache && !cfg.cache_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.cache_dir);
        const std::string key = corrector_cache_key(cfg);
        const std::string base = cfg.cache_dir + "/corrector1d_" + key;
        if (fs::exists(base + ".csv") && fs::exists(base + ".json")) {
            try {
                auto loaded = Corrector1D::load(base + ".csv", base + ".json");
                if (loaded.m != cfg.m) throw solver_error("cache m mismatch");
                c1d = std::make_shared<Corrector1D>(std::move(loaded));
                if (log) *log << "corrector1d: cache hit (" << base << ")\n";
            } catch (const std::exception& e) {
                if (log) *log << "corrector1d: cache unusable (" << e.what() << "), re-solving\n";
            }
        }
        if (!c1d) {
            auto solved = std::make_shared<Corrector1D>(shoot_lambda(cfg.m, opt));
            solved->save(base + ".csv", base + ".json");
            c1d = solved;
        }
    } else {
        c1d = std::make_shared<Corrector1D>(shoot_lambda(cfg.m, opt));
    }

    Pipeline p{std::move(market), investor, std::move(merton), c1d, nullptr, nullptr, nullptr};
    p.corrector = std::make_shared<CorrectorMD>(p.market, p.investor, p.merton, p.c1d);
    p.second = std::make_shared<SecondCorrector>(p.market, p.investor, p.merton,
                                                 p.corrector->lambda());
    p.sim = std::make_shared<MarketSim>(p.market, p.investor, p.merton, p.corrector);
    return p;
}

} // namespace impx
