#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace coda::io {

/// In-memory CSV with a mandatory header row. All cells kept as text;
/// numeric conversion happens at the point of use so parse errors can
/// name the exact row and column.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    Eigen::Index column(const std::string& name) const; // throws schema_error
    bool has_column(const std::string& name) const;
};

/// RFC-4180-style reader: quoted fields, doubled-quote escapes, CR/LF line
/// ends, optional UTF-8 BOM. Every row must match the header width.
CsvTable read_csv(const std::filesystem::path& path);

/// Shortest decimal string that round-trips to the same double. NaN and
/// infinities spelled "nan", "inf", "-inf".
std::string format_double(double value);

/// Strict double parse of a whole cell; `row` is 1-based (header excluded)
/// and `column` names the field, both carried into the error.
double parse_double(const std::string& cell, std::size_t row, const std::string& column);

/// Quote-escaping CSV writer; one header row then data rows.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

} // namespace coda::io
