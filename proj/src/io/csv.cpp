#include "coda/io/csv.hpp"

#include "coda/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

namespace coda::io {

Eigen::Index CsvTable::column(const std::string& name) const {
    for (size_t j = 0; j < header.size(); ++j)
        if (header[j] == name)
            return static_cast<Eigen::Index>(j);
    throw schema_error("missing column '" + name + "'");
}

bool CsvTable::has_column(const std::string& name) const {
    for (const auto& h : header)
        if (h == name)
            return true;
    return false;
}

namespace {

std::vector<std::string> split_record(const std::string& line, std::size_t lineno) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            if (!field.empty())
                throw parse_error("stray quote in line " + std::to_string(lineno), lineno, "");
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    if (quoted)
        throw parse_error("unterminated quote in line " + std::to_string(lineno), lineno, "");
    fields.push_back(std::move(field));
    return fields;
}

} // namespace

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw schema_error("cannot open '" + path.string() + "'");
    std::string line;
    CsvTable table;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
            static_cast<unsigned char>(line[1]) == 0xBB &&
            static_cast<unsigned char>(line[2]) == 0xBF)
            line.erase(0, 3);
        if (line.empty() && lineno > 1)
            continue;
        auto fields = split_record(line, lineno);
        if (lineno == 1) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size())
                throw schema_error("line " + std::to_string(lineno) + " has " +
                                   std::to_string(fields.size()) + " fields, expected " +
                                   std::to_string(table.header.size()));
            table.rows.push_back(std::move(fields));
        }
    }
    if (table.header.empty())
        throw schema_error("'" + path.string() + "' is empty");
    return table;
}

std::string format_double(double value) {
    if (std::isnan(value))
        return "nan";
    if (std::isinf(value))
        return value > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& cell, std::size_t row, const std::string& column) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t'))
        ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t'))
        --end;
    double value = 0.0;
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw parse_error("cannot parse '" + cell + "' as a number (row " + std::to_string(row) +
                              ", column '" + column + "')",
                          row, column);
    return value;
}

namespace {

std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos)
        return field;
    std::string out = "\"";
    for (const char c : field) {
        if (c == '"')
            out += "\"\"";
        else
            out += c;
    }
    out += '"';
    return out;
}

} // namespace

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw schema_error("cannot write '" + path.string() + "'");
    std::ostringstream buf;
    for (size_t j = 0; j < header.size(); ++j) {
        if (j)
            buf << ',';
        buf << escape(header[j]);
    }
    buf << '\n';
    for (const auto& row : rows) {
        for (size_t j = 0; j < row.size(); ++j) {
            if (j)
                buf << ',';
            buf << escape(row[j]);
        }
        buf << '\n';
    }
    out << buf.str();
    if (!out)
        throw schema_error("failed writing '" + path.string() + "'");
}

} // namespace coda::io
