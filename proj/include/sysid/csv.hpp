#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sysid/dss.hpp"
#include "sysid/errors.hpp"
#include "sysid/harmonic.hpp"
#include "sysid/sim.hpp"

// CSV readers and writers for the three interchange tables: time series
// (t,u,x), frequency response (omega,gain_re,gain_im,amplitude,phase), and
// static curves (x,u,source). Writers are atomic: content goes to a sibling
// temp file which is renamed over the target, so a crash never leaves a
// half-written table. Numbers carry 17 significant digits and round-trip
// doubles exactly.

namespace sysid {

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write to " + tmp + " failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        const std::string why = std::strerror(errno);
        std::remove(tmp.c_str());
        throw IoError("cannot replace " + path + ": " + why);
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read from " + path + " failed");
    return ss.str();
}

// One CSV line -> fields. No quoting: none of our tables needs it.
inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline double parse_double(const std::string& s, const std::string& where) {
    const char* begin = s.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    while (end && *end == ' ') ++end;
    if (end == begin || (end && *end != '\0') || errno == ERANGE)
        throw ValidationError(where + ": not a number: '" + s + "'");
    return v;
}

struct CsvTable {
    std::vector<std::vector<std::string>> rows;  // header excluded
};

inline CsvTable parse_csv(const std::string& path, const std::string& expect_header) {
    const std::string text = read_file(path);
    CsvTable t;
    std::size_t lineno = 0, start = 0;
    while (start < text.size()) {
        std::size_t eol = text.find('\n', start);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(start, eol - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        start = eol + 1;
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1) {
            if (line != expect_header)
                throw ValidationError(path + ":1: expected header '" + expect_header +
                                      "', got '" + line + "'");
            continue;
        }
        t.rows.push_back(split_csv(line));
        if (t.rows.back().size() != split_csv(expect_header).size())
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(split_csv(expect_header).size()) +
                                  " fields, got " + std::to_string(t.rows.back().size()));
    }
    if (lineno == 0) throw ValidationError(path + ": empty file");
    return t;
}

}  // namespace detail

inline void write_time_series(const std::string& path, const TimeSeries& u,
                              const TimeSeries& x) {
    if (!u.same_grid(x))
        throw GridMismatchError("write_time_series: u and x are not on the same grid");
    std::string s = "t,u,x\n";
    for (std::size_t k = 0; k < u.size(); ++k) {
        s += detail::fmt17(u.time(k));
        s += ',';
        s += detail::fmt17(u.values[k]);
        s += ',';
        s += detail::fmt17(x.values[k]);
        s += '\n';
    }
    detail::atomic_write(path, s);
}

// Reads a (u, x) record. The time column must be a uniform grid; tolerance is
// relative so files written by write_time_series always pass.
inline std::pair<TimeSeries, TimeSeries> read_time_series(const std::string& path) {
    const auto t = detail::parse_csv(path, "t,u,x");
    if (t.rows.size() < 2)
        throw InsufficientDataError(path + ": a time series needs at least 2 samples");
    const std::size_t n = t.rows.size();
    std::vector<double> tv(n);
    TimeSeries u, x;
    u.values.resize(n);
    x.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::string where = path + ":" + std::to_string(k + 2);
        tv[k] = detail::parse_double(t.rows[k][0], where);
        u.values[k] = detail::parse_double(t.rows[k][1], where);
        x.values[k] = detail::parse_double(t.rows[k][2], where);
    }
    const double t0 = tv.front();
    const double dt = (tv.back() - t0) / static_cast<double>(n - 1);
    if (!(dt > 0.0)) throw ValidationError(path + ": time column must increase");
    for (std::size_t k = 0; k < n; ++k)
        if (std::abs(tv[k] - (t0 + dt * static_cast<double>(k))) > 1e-6 * dt)
            throw ValidationError(path + ":" + std::to_string(k + 2) +
                                  ": time column is not a uniform grid");
    u.t0 = x.t0 = t0;
    u.dt = x.dt = dt;
    return {std::move(u), std::move(x)};
}

inline void write_frequency_response(const std::string& path,
                                     const std::vector<FrequencyResponsePoint>& pts) {
    std::string s = "omega,gain_re,gain_im,amplitude,phase\n";
    for (const auto& p : pts) {
        s += detail::fmt17(p.omega);
        s += ',';
        s += detail::fmt17(p.gain.real());
        s += ',';
        s += detail::fmt17(p.gain.imag());
        s += ',';
        s += detail::fmt17(p.amplitude);
        s += ',';
        s += detail::fmt17(p.phase);
        s += '\n';
    }
    detail::atomic_write(path, s);
}

inline std::vector<FrequencyResponsePoint> read_frequency_response(const std::string& path) {
    const auto t = detail::parse_csv(path, "omega,gain_re,gain_im,amplitude,phase");
    std::vector<FrequencyResponsePoint> pts;
    pts.reserve(t.rows.size());
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const std::string where = path + ":" + std::to_string(k + 2);
        FrequencyResponsePoint p;
        p.omega = detail::parse_double(t.rows[k][0], where);
        p.gain = {detail::parse_double(t.rows[k][1], where),
                  detail::parse_double(t.rows[k][2], where)};
        p.amplitude = detail::parse_double(t.rows[k][3], where);
        p.phase = detail::parse_double(t.rows[k][4], where);
        pts.push_back(p);
    }
    return pts;
}

inline const char* curve_source_name(CurveSource s) {
    return s == CurveSource::lissajous ? "lissajous" : "dss_corrected";
}

inline void write_static_curve(const std::string& path, const StaticCurve& curve) {
    std::string s = "x,u,source\n";
    const char* src = curve_source_name(curve.source);
    for (const auto& [xv, uv] : curve.points) {
        s += detail::fmt17(xv);
        s += ',';
        s += detail::fmt17(uv);
        s += ',';
        s += src;
        s += '\n';
    }
    detail::atomic_write(path, s);
}

inline StaticCurve read_static_curve(const std::string& path) {
    const auto t = detail::parse_csv(path, "x,u,source");
    StaticCurve curve;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const std::string where = path + ":" + std::to_string(k + 2);
        const double xv = detail::parse_double(t.rows[k][0], where);
        const double uv = detail::parse_double(t.rows[k][1], where);
        const std::string& src = t.rows[k][2];
        if (src == "lissajous")
            curve.source = CurveSource::lissajous;
        else if (src == "dss_corrected")
            curve.source = CurveSource::dss_corrected;
        else
            throw ValidationError(where + ": unknown curve source '" + src + "'");
        curve.points.emplace_back(xv, uv);
    }
    return curve;
}

}  // namespace sysid
