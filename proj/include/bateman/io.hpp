#pragma once

#include <string>
#include <vector>

namespace bateman {

/// Shortest round-trip decimal text of a double ('.' decimal, no locale).
std::string format_double(double v);

/// Parses a full double token; throws std::invalid_argument otherwise.
double parse_double(const std::string& text);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    /// Index of a header column; throws std::invalid_argument when absent.
    std::size_t column(const std::string& name) const;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace bateman
