#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "snls/harness/config.hpp"
#include "snls/version.hpp"

namespace snls::harness {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Row {
    std::string series;
    double x = 0.0;
    double value = 0.0;
    double std_error = 0.0;

    friend bool operator==(const Row&, const Row&) = default;
};

/// Result of one experiment run. Everything except wall_seconds is written to CSV.
struct RunRecord {
    ExperimentConfig config;
    std::vector<Row> rows;
    std::vector<std::string> notes;
    std::string summary;  // human-readable verdict lines for the console
    std::string version = snls::version;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
    bool failed = false;
    std::string failure;

    void add(std::string series, double x, double value, double std_error = 0.0) {
        rows.push_back({std::move(series), x, value, std_error});
    }
};

inline constexpr std::string_view csv_header = "series,x,value,stderr";

/// CSV text: `#` comment lines (version, config echo, notes), header, one row per datum.
inline std::string to_csv(const RunRecord& rec) {
    using detail::format_number;
    std::ostringstream out;
    out << "# snls " << rec.version << '\n';
    for (const auto& [k, v] : echo(rec.config)) out << "# " << k << " = " << v << '\n';
    for (const auto& note : rec.notes) out << "# note: " << note << '\n';
    if (rec.failed) out << "# failure: " << rec.failure << '\n';
    out << csv_header << '\n';
    for (const Row& r : rec.rows) {
        out << r.series << ',' << format_number(r.x) << ',' << format_number(r.value) << ','
            << format_number(r.std_error) << '\n';
    }
    return out.str();
}

inline void emit_csv(const RunRecord& rec, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << to_csv(rec);
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

struct CsvData {
    std::vector<std::string> comments;  // without the leading "# "
    std::vector<Row> rows;
};

inline double parse_csv_double(std::string_view s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw IoError("malformed number '" + std::string(s) + "' in CSV");
    }
    return v;
}

inline CsvData parse_csv(std::string_view text) {
    CsvData data;
    std::istringstream in{std::string(text)};
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            data.comments.push_back(line.size() > 2 ? line.substr(2) : std::string());
            continue;
        }
        if (!header_seen) {
            if (line != csv_header) throw IoError("unexpected CSV header '" + line + "'");
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 4) throw IoError("CSV row must have 4 fields: '" + line + "'");
        data.rows.push_back({fields[0], parse_csv_double(fields[1]), parse_csv_double(fields[2]),
                             parse_csv_double(fields[3])});
    }
    if (!header_seen) throw IoError("CSV has no header row");
    return data;
}

inline CsvData read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

} // namespace snls::harness
