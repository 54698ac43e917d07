#include "scdd/config.hpp"

#include "scdd/error.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace scdd {

MarkovSource SourceSpec::build(int K) const {
    if (kind == "sticky") {
        return MarkovSource::sticky(K, zipf, stickiness);
    }
    if (kind == "uniform") {
        return MarkovSource::uniform(K);
    }
    if (kind == "constant") {
        return MarkovSource::constant(K, token);
    }
    if (kind == "file") {
        MarkovSource s = MarkovSource::from_file(path);
        if (s.K != K) {
            throw InvalidArgument("source file K does not match the model K");
        }
        return s;
    }
    throw InvalidArgument("unknown source_kind '" + kind + "'");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) {
        throw ParseError("config: '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
    Int out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ParseError("config: '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") {
        return true;
    }
    if (v == "false" || v == "0") {
        return false;
    }
    throw ParseError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(trim(item));
    }
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"schedule_kind", [](RunConfig& c, auto&, auto& v) { c.schedule.kind = parse_schedule_kind(v); }},
        {"p_u", [](RunConfig& c, auto& k, auto& v) { c.schedule.p_u = to_double(k, v); }},
        {"t_peak", [](RunConfig& c, auto& k, auto& v) { c.schedule.t_peak = to_double(k, v); }},
        {"shape", [](RunConfig& c, auto& k, auto& v) { c.schedule.shape = to_double(k, v); }},
        {"mask_alpha", [](RunConfig& c, auto&, auto& v) { c.schedule.mask_alpha_name = v; }},
        {"T", [](RunConfig& c, auto& k, auto& v) { c.T = to_int<int>(k, v); }},
        {"K", [](RunConfig& c, auto& k, auto& v) { c.train.dims.K = to_int<int>(k, v); }},
        {"L", [](RunConfig& c, auto& k, auto& v) { c.L = to_int<int>(k, v); }},
        {"d", [](RunConfig& c, auto& k, auto& v) { c.train.dims.d = to_int<int>(k, v); }},
        {"h", [](RunConfig& c, auto& k, auto& v) { c.train.dims.h = to_int<int>(k, v); }},
        {"steps", [](RunConfig& c, auto& k, auto& v) { c.train.steps = to_int<long>(k, v); }},
        {"batch", [](RunConfig& c, auto& k, auto& v) { c.train.batch = to_int<int>(k, v); }},
        {"lr", [](RunConfig& c, auto& k, auto& v) { c.train.lr = to_double(k, v); }},
        {"warmup", [](RunConfig& c, auto& k, auto& v) { c.train.warmup = to_int<long>(k, v); }},
        {"weight_decay", [](RunConfig& c, auto& k, auto& v) { c.train.optimizer.weight_decay = to_double(k, v); }},
        {"ema_decay", [](RunConfig& c, auto& k, auto& v) { c.train.optimizer.ema_decay = to_double(k, v); }},
        {"log_every", [](RunConfig& c, auto& k, auto& v) { c.train.log_every = to_int<long>(k, v); }},
        {"seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_int<std::uint64_t>(k, v); }},
        {"mc_passes", [](RunConfig& c, auto& k, auto& v) { c.mc_passes = to_int<int>(k, v); }},
        {"train_size", [](RunConfig& c, auto& k, auto& v) { c.train_size = to_int<int>(k, v); }},
        {"val_size", [](RunConfig& c, auto& k, auto& v) { c.val_size = to_int<int>(k, v); }},
        {"use_ema", [](RunConfig& c, auto& k, auto& v) { c.use_ema = to_bool(k, v); }},
        {"sample_steps",
         [](RunConfig& c, auto& k, auto& v) {
             c.sample_steps.clear();
             for (const auto& item : split_list(v)) {
                 c.sample_steps.push_back(to_int<int>(k, item));
             }
         }},
        {"nucleus_p",
         [](RunConfig& c, auto& k, auto& v) {
             if (v == "none") {
                 c.nucleus_p.reset();
             } else {
                 c.nucleus_p = to_double(k, v);
             }
         }},
        {"sample_count", [](RunConfig& c, auto& k, auto& v) { c.sample_count = to_int<int>(k, v); }},
        {"source_kind", [](RunConfig& c, auto&, auto& v) { c.source.kind = v; }},
        {"source_zipf", [](RunConfig& c, auto& k, auto& v) { c.source.zipf = to_double(k, v); }},
        {"source_stickiness", [](RunConfig& c, auto& k, auto& v) { c.source.stickiness = to_double(k, v); }},
        {"source_token", [](RunConfig& c, auto& k, auto& v) { c.source.token = to_int<int>(k, v); }},
        {"source_path", [](RunConfig& c, auto&, auto& v) { c.source.path = v; }},
        {"ablate_pu",
         [](RunConfig& c, auto& k, auto& v) {
             c.ablate_pu.clear();
             for (const auto& item : split_list(v)) {
                 c.ablate_pu.push_back(to_double(k, item));
             }
         }},
        {"ablate_tpeak",
         [](RunConfig& c, auto& k, auto& v) {
             c.ablate_tpeak.clear();
             for (const auto& item : split_list(v)) {
                 c.ablate_tpeak.push_back(to_double(k, item));
             }
         }},
        {"ablate_steps", [](RunConfig& c, auto& k, auto& v) { c.ablate_steps = to_int<long>(k, v); }},
        {"ablate_traces", [](RunConfig& c, auto& k, auto& v) { c.ablate_traces = to_int<int>(k, v); }},
        {"ablate_curve_steps", [](RunConfig& c, auto& k, auto& v) { c.ablate_curve_steps = to_int<int>(k, v); }},
    };
    return table;
}

NoiseSchedule rebuild_schedule(const NoiseSchedule& s) {
    switch (s.kind) {
    case ScheduleKind::GiddAligned:
        return NoiseSchedule::gidd_aligned(s.p_u, s.shape);
    case ScheduleKind::PeakShifted:
        return NoiseSchedule::peak_shifted(s.p_u, s.t_peak, s.shape);
    case ScheduleKind::MaskOnly:
        return NoiseSchedule::mask_only(s.mask_alpha_name);
    }
    throw InvalidSchedule("unknown schedule kind");
}

} // namespace

void RunConfig::validate() const {
    schedule.validate();
    train.validate();
    if (T < 1) {
        throw InvalidArgument("T must be at least 1");
    }
    if (L < 1) {
        throw InvalidArgument("L must be at least 1");
    }
    if (mc_passes < 1 || train_size < 1 || val_size < 1 || sample_count < 1) {
        throw InvalidArgument("mc_passes, train_size, val_size and sample_count must be positive");
    }
    if (sample_steps.empty()) {
        throw InvalidArgument("sample_steps must list at least one step count");
    }
    for (int n : sample_steps) {
        if (n < 1) {
            throw InvalidArgument("sample_steps entries must be positive");
        }
    }
    if (nucleus_p && !(*nucleus_p > 0.0 && *nucleus_p <= 1.0)) {
        throw InvalidArgument("nucleus_p must lie in (0, 1]");
    }
    for (double p : ablate_pu) {
        NoiseSchedule::gidd_aligned(p, schedule.shape).validate();
    }
    for (double tp : ablate_tpeak) {
        NoiseSchedule::peak_shifted(schedule.p_u, tp, schedule.shape).validate();
    }
    if (ablate_steps < 0 || ablate_curve_steps < 1 || ablate_traces < 1) {
        throw InvalidArgument("invalid ablation settings");
    }
    source.build(train.dims.K);
}

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) {
            throw ParseError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        if (!seen.insert(key).second) {
            throw ParseError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        it->second(cfg, key, value);
    }
    cfg.schedule = rebuild_schedule(cfg.schedule);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open config " + path.string());
    }
    return parse_config(in);
}

} // namespace scdd
