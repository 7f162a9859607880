#pragma once
// Comma-separated text helpers shared by ingestion and the CLI writers.

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace survcate::io {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column position by name, if present.
    std::optional<std::size_t> column(std::string_view name) const;
};

std::vector<std::string> split_line(std::string_view line);
Table read_table(std::istream& in);
Table read_table_file(const std::string& path);

// Shortest round-trip decimal representation.
std::string format_double(double v);
std::optional<double> parse_double(std::string_view s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace survcate::io
