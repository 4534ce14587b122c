#pragma once

// CSV/JSON artifact writers. Formatting is pinned to "%.17g" so repeated runs of
// the same plan produce byte-identical files (a tested determinism guarantee).

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

namespace clab::io {

inline constexpr int schema_version = 1;

std::string fmt(double v);

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& header);
    void row(std::initializer_list<double> values);
    void row(const std::vector<double>& values);
    // first column an integer id (path dumps)
    void row_id(std::int64_t id, const std::vector<double>& values);

private:
    std::ofstream out_;
};

void write_json(const std::string& path, const nlohmann::json& j);
void ensure_dir(const std::string& path);

} // namespace clab::io
