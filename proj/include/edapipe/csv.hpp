#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace edapipe {

// Shortest text form that parses back to the same double.
std::string format_number(double value);

std::vector<std::string> split_csv_line(std::string_view line);

// Parses a full number; throws DataError naming `what` otherwise.
double parse_number(std::string_view text, std::string_view what);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Throws DataError when the column is missing.
    std::size_t column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv_file(const std::string& path);

std::string read_text_file(const std::string& path);
// Throws DataError when the file cannot be written.
void write_text_file(const std::string& path, std::string_view bytes);

}  // namespace edapipe
