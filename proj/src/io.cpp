#include "clab/io.hpp"

#include <cstdio>
#include <filesystem>

#include "clab/errors.hpp"

namespace clab::io {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::string& header) : out_(path) {
    if (!out_) throw ConfigError("cannot open CSV for writing: " + path);
    out_ << header << '\n';
}

void CsvWriter::row(std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
        if (!first) out_ << ',';
        out_ << fmt(v);
        first = false;
    }
    out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
    bool first = true;
    for (double v : values) {
        if (!first) out_ << ',';
        out_ << fmt(v);
        first = false;
    }
    out_ << '\n';
}

void CsvWriter::row_id(std::int64_t id, const std::vector<double>& values) {
    out_ << id;
    for (double v : values) out_ << ',' << fmt(v);
    out_ << '\n';
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open JSON for writing: " + path);
    out << j.dump(2) << '\n';
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw ConfigError("cannot create output directory: " + path);
}

} // namespace clab::io
