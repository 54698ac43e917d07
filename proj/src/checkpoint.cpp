#include "scdd/checkpoint.hpp"

#include "scdd/error.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace scdd {

OptimizerState OptimizerState::init(const DenoiserParams& params) {
    OptimizerState s;
    s.m1 = DenoiserParams::zeros(params.dims);
    s.m2 = DenoiserParams::zeros(params.dims);
    s.ema = params;
    return s;
}

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_tensor(std::ostream& out, const std::string& name, const Matrix& m) {
    out << "tensor " << name << ' ' << m.rows << ' ' << m.cols << '\n';
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (c) {
                out << ' ';
            }
            out << fmt17(m(r, c));
        }
        out << '\n';
    }
}

void write_group(std::ostream& out, const std::string& prefix, const DenoiserParams& p) {
    const auto ts = p.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        write_tensor(out, prefix + "." + DenoiserParams::kNames[i], *ts[i]);
    }
}

std::string next_line(std::istream& in, const char* what) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(std::string("checkpoint truncated before ") + what);
    }
    return line;
}

double parse_double(const std::string& tok) {
    const char* s = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0') {
        throw ParseError("checkpoint: bad number '" + tok + "'");
    }
    return v;
}

std::map<std::string, std::string> parse_fields(const std::string& line, const std::string& keyword) {
    std::istringstream ss(line);
    std::string head;
    ss >> head;
    if (head != keyword) {
        throw ParseError("checkpoint: expected '" + keyword + "' line, got '" + line + "'");
    }
    std::map<std::string, std::string> out;
    std::string kv;
    while (ss >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ParseError("checkpoint: malformed field '" + kv + "'");
        }
        out[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return out;
}

const std::string& field(const std::map<std::string, std::string>& m, const std::string& key) {
    const auto it = m.find(key);
    if (it == m.end()) {
        throw ParseError("checkpoint: missing field '" + key + "'");
    }
    return it->second;
}

} // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    const auto& s = ckpt.schedule;
    out << kCheckpointHeader << '\n';
    out << "schedule kind=" << to_string(s.kind) << " p_u=" << fmt17(s.p_u) << " t_peak=" << fmt17(s.t_peak)
        << " shape=" << fmt17(s.shape) << " mask_alpha=" << s.mask_alpha_name << " T=" << ckpt.T << '\n';
    out << "state step=" << ckpt.step << " optimizer_steps=" << ckpt.optimizer.step_count << " K=" << ckpt.params.dims.K
        << " d=" << ckpt.params.dims.d << " h=" << ckpt.params.dims.h << '\n';
    write_group(out, "params", ckpt.params);
    write_group(out, "ema", ckpt.optimizer.ema);
    write_group(out, "m1", ckpt.optimizer.m1);
    write_group(out, "m2", ckpt.optimizer.m2);
}

Checkpoint read_checkpoint(std::istream& in) {
    std::string header;
    if (!std::getline(in, header) || header != kCheckpointHeader) {
        throw ParseError("not a checkpoint: expected header '" + std::string(kCheckpointHeader) + "'");
    }
    Checkpoint ckpt;
    const auto sched = parse_fields(next_line(in, "schedule"), "schedule");
    const auto kind = parse_schedule_kind(field(sched, "kind"));
    const double p_u = parse_double(field(sched, "p_u"));
    const double t_peak = parse_double(field(sched, "t_peak"));
    const double shape = parse_double(field(sched, "shape"));
    switch (kind) {
    case ScheduleKind::GiddAligned:
        ckpt.schedule = NoiseSchedule::gidd_aligned(p_u, shape);
        break;
    case ScheduleKind::PeakShifted:
        ckpt.schedule = NoiseSchedule::peak_shifted(p_u, t_peak, shape);
        break;
    case ScheduleKind::MaskOnly:
        ckpt.schedule = NoiseSchedule::mask_only(field(sched, "mask_alpha"));
        break;
    }
    ckpt.schedule.p_u = p_u;
    ckpt.schedule.t_peak = t_peak;
    ckpt.schedule.shape = shape;
    ckpt.T = std::stoi(field(sched, "T"));

    const auto state = parse_fields(next_line(in, "state"), "state");
    ckpt.step = std::stol(field(state, "step"));
    const ModelDims dims{std::stoi(field(state, "K")), std::stoi(field(state, "d")), std::stoi(field(state, "h"))};

    ckpt.params = DenoiserParams::zeros(dims);
    ckpt.optimizer = OptimizerState::init(ckpt.params);
    ckpt.optimizer.step_count = std::stol(field(state, "optimizer_steps"));

    std::map<std::string, Matrix*> slots;
    const std::pair<const char*, DenoiserParams*> groups[] = {
        {"params", &ckpt.params}, {"ema", &ckpt.optimizer.ema}, {"m1", &ckpt.optimizer.m1}, {"m2", &ckpt.optimizer.m2}};
    for (const auto& [prefix, p] : groups) {
        const auto ts = p->tensors();
        for (std::size_t i = 0; i < ts.size(); ++i) {
            slots[std::string(prefix) + "." + DenoiserParams::kNames[i]] = ts[i];
        }
    }

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string kw, name;
        std::size_t rows = 0, cols = 0;
        if (!(ss >> kw >> name >> rows >> cols) || kw != "tensor") {
            throw ParseError("checkpoint: malformed tensor line '" + line + "'");
        }
        const auto it = slots.find(name);
        if (it == slots.end()) {
            throw ParseError("checkpoint: unknown tensor '" + name + "'");
        }
        Matrix& m = *it->second;
        if (m.rows != rows || m.cols != cols) {
            throw ParseError("checkpoint: tensor '" + name + "' has unexpected shape");
        }
        for (std::size_t r = 0; r < rows; ++r) {
            std::istringstream row(next_line(in, name.c_str()));
            std::string tok;
            for (std::size_t c = 0; c < cols; ++c) {
                if (!(row >> tok)) {
                    throw ParseError("checkpoint: tensor '" + name + "' row too short");
                }
                m(r, c) = parse_double(tok);
            }
        }
        slots.erase(it);
    }
    if (!slots.empty()) {
        throw ParseError("checkpoint: missing tensor '" + slots.begin()->first + "'");
    }
    ckpt.params.validate();
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write checkpoint " + path.string());
    }
    write_checkpoint(out, ckpt);
    if (!out) {
        throw Error("failed writing checkpoint " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open checkpoint " + path.string());
    }
    return read_checkpoint(in);
}

bool bit_equal(const Checkpoint& a, const Checkpoint& b) {
    auto same = [](double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; };
    if (a.step != b.step || a.T != b.T || a.schedule.kind != b.schedule.kind || !same(a.schedule.p_u, b.schedule.p_u) ||
        !same(a.schedule.t_peak, b.schedule.t_peak) || !same(a.schedule.shape, b.schedule.shape) ||
        a.schedule.mask_alpha_name != b.schedule.mask_alpha_name ||
        a.optimizer.step_count != b.optimizer.step_count || !(a.params.dims == b.params.dims)) {
        return false;
    }
    auto group_equal = [&](const DenoiserParams& x, const DenoiserParams& y) {
        const auto tx = x.tensors();
        const auto ty = y.tensors();
        for (std::size_t i = 0; i < tx.size(); ++i) {
            if (tx[i]->rows != ty[i]->rows || tx[i]->cols != ty[i]->cols) {
                return false;
            }
            for (std::size_t j = 0; j < tx[i]->data.size(); ++j) {
                if (!same(tx[i]->data[j], ty[i]->data[j])) {
                    return false;
                }
            }
        }
        return true;
    };
    return group_equal(a.params, b.params) && group_equal(a.optimizer.ema, b.optimizer.ema) &&
           group_equal(a.optimizer.m1, b.optimizer.m1) && group_equal(a.optimizer.m2, b.optimizer.m2);
}

} // namespace scdd
