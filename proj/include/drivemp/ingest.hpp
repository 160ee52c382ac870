#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "drivemp/csv.hpp"
#include "drivemp/error.hpp"
#include "drivemp/trace.hpp"

namespace drivemp {

/// Timestamped samples straight from a logger; timestamps need not be uniform.
struct RawTrace {
    std::string id;
    std::vector<double> timestamps;
    std::vector<double> theta;
    std::vector<double> v;
    std::vector<double> delta;
};

struct ExclusionInterval {
    std::string trace_id;
    double start = 0.0;
    double end = 0.0;
};

struct ExclusionList {
    std::vector<ExclusionInterval> intervals;
};

/// Centered moving average. Near the edges the window is truncated to the samples that exist,
/// so the first sample averages itself and the next (window-1)/2 samples.
inline std::vector<double> smooth_moving_average(std::span<const double> series, int window = 5) {
    if (window < 1 || window % 2 == 0) throw InputError("moving average window must be odd and >= 1");
    if (series.empty()) throw InputError("moving average: empty series");
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(series.size());
    const std::ptrdiff_t half = window / 2;
    std::vector<double> out(series.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
        const std::ptrdiff_t hi = std::min(n - 1, i + half);
        double sum = 0.0;
        for (std::ptrdiff_t j = lo; j <= hi; ++j) sum += series[j];
        out[i] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

/// Linear interpolation onto the 0.1 s grid starting at the first timestamp.
inline DrivingTrace resample_uniform(const RawTrace& raw) {
    const std::size_t n = raw.timestamps.size();
    if (raw.theta.size() != n || raw.v.size() != n || raw.delta.size() != n)
        throw InputError("resample: series length mismatch in '" + raw.id + "'");
    if (n < 2) throw InputError("resample: '" + raw.id + "' has fewer than 2 samples");
    for (std::size_t i = 1; i < n; ++i) {
        if (raw.timestamps[i] == raw.timestamps[i - 1])
            throw InputError("resample: duplicate timestamp " + csv::format(raw.timestamps[i]) + " in '" + raw.id + "'");
        if (raw.timestamps[i] < raw.timestamps[i - 1])
            throw InputError("resample: timestamps not increasing at index " + std::to_string(i) + " in '" + raw.id + "'");
    }
    const double t0 = raw.timestamps.front();
    const double span = raw.timestamps.back() - t0;
    const auto steps = static_cast<std::size_t>(std::floor(span * kSampleRate + 1e-6));

    DrivingTrace out;
    out.id = raw.id;
    out.timestamps.reserve(steps + 1);
    std::size_t seg = 0;
    for (std::size_t i = 0; i <= steps; ++i) {
        const double t = std::min(grid_time(t0, i), raw.timestamps.back());
        while (seg + 2 < n && raw.timestamps[seg + 1] <= t) ++seg;
        const double ta = raw.timestamps[seg];
        const double tb = raw.timestamps[seg + 1];
        const double w = std::clamp((t - ta) / (tb - ta), 0.0, 1.0);
        auto lerp = [&](const std::vector<double>& s) { return w == 0.0 ? s[seg] : (w == 1.0 ? s[seg + 1] : s[seg] + w * (s[seg + 1] - s[seg])); };
        out.timestamps.push_back(grid_time(t0, i));
        out.theta.push_back(lerp(raw.theta));
        out.v.push_back(lerp(raw.v));
        out.delta.push_back(lerp(raw.delta));
    }
    if (out.size() < 2) throw InputError("resample: '" + raw.id + "' spans less than one 0.1 s step");
    return out;
}

inline RawTrace read_raw_csv(const std::string& path) {
    const auto table = csv::read_file(path);
    const auto ct = table.column("t_s");
    const auto cth = table.column("theta_deg");
    const auto cv = table.column("v_kmh");
    const auto cd = table.column("delta_deg");
    if (table.rows.size() < 2)
        throw InputError(path + ": need at least 2 data rows, got " + std::to_string(table.rows.size()));
    RawTrace raw;
    raw.id = std::filesystem::path(path).stem().string();
    for (const auto& row : table.rows) {
        raw.timestamps.push_back(csv::parse_double(table, row, ct));
        raw.theta.push_back(csv::parse_double(table, row, cth));
        raw.v.push_back(csv::parse_double(table, row, cv));
        raw.delta.push_back(csv::parse_double(table, row, cd));
        if (raw.timestamps.size() > 1 && raw.timestamps.back() <= raw.timestamps[raw.timestamps.size() - 2])
            throw InputError(path + ":" + std::to_string(row.line) + ": timestamps must be strictly increasing");
    }
    return raw;
}

/// Reads a trace CSV and brings it onto the canonical 10 Hz grid.
inline DrivingTrace load_csv(const std::string& path) {
    auto trace = resample_uniform(read_raw_csv(path));
    require_valid(trace);
    return trace;
}

inline std::string to_csv(const DrivingTrace& trace) {
    std::string out = "t_s,theta_deg,v_kmh,delta_deg\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += csv::format(trace.timestamps[i]);
        out += ',';
        out += csv::format(trace.theta[i]);
        out += ',';
        out += csv::format(trace.v[i]);
        out += ',';
        out += csv::format(trace.delta[i]);
        out += '\n';
    }
    return out;
}

inline void save_csv(const DrivingTrace& trace, const std::string& path) { csv::write_file(path, to_csv(trace)); }

/// Loads every *.csv in a directory (sorted by name), or a single file.
inline std::vector<DrivingTrace> load_traces(const std::string& path) {
    namespace fs = std::filesystem;
    std::vector<DrivingTrace> traces;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) traces.push_back(load_csv(f.string()));
        if (traces.empty()) throw InputError("no .csv traces in '" + path + "'");
    } else {
        if (!fs::exists(path)) throw InputError("no such file '" + path + "'");
        traces.push_back(load_csv(path));
    }
    return traces;
}

inline ExclusionList load_exclusions(const std::string& path) {
    const auto table = csv::read_file(path);
    const auto cid = table.column("trace_id");
    const auto cs = table.column("start_s");
    const auto ce = table.column("end_s");
    ExclusionList list;
    for (const auto& row : table.rows) {
        ExclusionInterval iv{row.fields[cid], csv::parse_double(table, row, cs), csv::parse_double(table, row, ce)};
        if (!(iv.start < iv.end))
            throw InputError(path + ":" + std::to_string(row.line) + ": exclusion start must be < end");
        list.intervals.push_back(std::move(iv));
    }
    return list;
}

inline DrivingTrace slice(const DrivingTrace& trace, std::size_t begin, std::size_t end, std::string id) {
    DrivingTrace out;
    out.id = std::move(id);
    auto cut = [&](const std::vector<double>& s) { return std::vector<double>(s.begin() + begin, s.begin() + end); };
    out.timestamps = cut(trace.timestamps);
    out.theta = cut(trace.theta);
    out.v = cut(trace.v);
    out.delta = cut(trace.delta);
    return out;
}

/// Splits a trace around excluded intervals (closed, in trace time). Pieces shorter than
/// `min_length` samples are dropped. An untouched trace is returned as-is.
inline std::vector<DrivingTrace> apply_exclusions(const DrivingTrace& trace, const ExclusionList& ex,
                                                  std::size_t min_length = 1) {
    std::vector<char> excluded(trace.size(), 0);
    bool any = false;
    for (const auto& iv : ex.intervals) {
        if (iv.trace_id != trace.id) continue;
        for (std::size_t i = 0; i < trace.size(); ++i) {
            if (trace.timestamps[i] >= iv.start && trace.timestamps[i] <= iv.end) {
                excluded[i] = 1;
                any = true;
            }
        }
    }
    std::vector<DrivingTrace> out;
    if (!any) {
        if (trace.size() >= min_length) out.push_back(trace);
        return out;
    }
    std::size_t piece = 0;
    std::size_t i = 0;
    while (i < trace.size()) {
        while (i < trace.size() && excluded[i]) ++i;
        const std::size_t begin = i;
        while (i < trace.size() && !excluded[i]) ++i;
        if (i > begin && i - begin >= min_length)
            out.push_back(slice(trace, begin, i, trace.id + ":" + std::to_string(piece++)));
    }
    return out;
}

/// Moving-average smoothing of theta, v and delta; timestamps untouched.
inline DrivingTrace smooth_trace(const DrivingTrace& trace, int window = 5) {
    DrivingTrace out = trace;
    out.theta = smooth_moving_average(trace.theta, window);
    out.v = smooth_moving_average(trace.v, window);
    out.delta = smooth_moving_average(trace.delta, window);
    return out;
}

struct PreprocessConfig {
    int smoothing_window = 5;
    std::size_t min_length = 1;
};

/// Exclusions first, then smoothing per surviving piece, so excluded samples never leak in.
inline std::vector<DrivingTrace> preprocess(const std::vector<DrivingTrace>& traces, const ExclusionList& ex,
                                            const PreprocessConfig& cfg) {
    std::vector<DrivingTrace> out;
    for (const auto& trace : traces)
        for (auto& piece : apply_exclusions(trace, ex, std::max<std::size_t>(cfg.min_length, 2)))
            out.push_back(smooth_trace(piece, cfg.smoothing_window));
    return out;
}

}  // namespace drivemp
