#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace coda {

// Base class for all library errors so callers can catch coda failures
// separately from standard-library exceptions.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numeric argument outside the mathematical domain (non-positive x, zero
// composition entry, ...).
class domain_error : public error {
public:
    using error::error;
};

// Structurally invalid argument combination (bad k, overlapping part sets,
// rank request too large, ...).
class parameter_error : public error {
public:
    using error::error;
};

// Unknown part / column / covariate name.
class lookup_error : public error {
public:
    using error::error;
};

// Data that makes the requested statistic undefined (zero variance,
// single group, n too small).
class degenerate_data_error : public error {
public:
    using error::error;
};

// Design matrix is rank deficient; lists the offending columns.
class collinearity_error : public error {
public:
    collinearity_error(const std::string& msg, std::vector<std::string> columns)
        : error(msg), dependent_columns(std::move(columns)) {}
    std::vector<std::string> dependent_columns;
};

// Input file violates the expected schema (missing column, no data rows).
class schema_error : public error {
public:
    using error::error;
};

// A cell failed to parse; carries 1-based row and the column name.
class parse_error : public error {
public:
    parse_error(const std::string& msg, std::size_t row, std::string column)
        : error(msg), row(row), column(std::move(column)) {}
    std::size_t row = 0;
    std::string column;
};

// Coordinates inconsistent with the basis (CLR rows not summing to zero).
class inconsistency_error : public error {
public:
    using error::error;
};

} // namespace coda
