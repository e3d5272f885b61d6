#include "edapipe/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "edapipe/error.hpp"

namespace edapipe {

std::string format_number(double value) {
    if (value == 0.0) return "0";  // folds -0
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        auto cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
        while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
        cells.emplace_back(cell);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

double parse_number(std::string_view text, std::string_view what) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty())
        throw DataError(std::string(what) + ": '" + std::string(text) + "' is not a number");
    return v;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw DataError("missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    std::size_t start = 0;
    bool first = true;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = text.substr(start, nl - start);
        start = nl + 1;
        if (line.empty() || line == "\r" || line.front() == '#') continue;
        auto cells = split_csv_line(line);
        if (first) {
            table.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != table.header.size())
            throw DataError("row " + std::to_string(table.rows.size() + 1) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(table.header.size()));
        table.rows.push_back(std::move(cells));
    }
    return table;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CsvTable read_csv_file(const std::string& path) { return parse_csv(read_text_file(path)); }

void write_text_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path);
}

}  // namespace edapipe
