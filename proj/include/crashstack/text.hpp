#ifndef CRASHSTACK_TEXT_HPP_
#define CRASHSTACK_TEXT_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crashstack {

// Shortest representation that parses back to the identical double.
std::string format_double(double v);

// Fixed-point with `digits` decimals, for human-facing tables.
std::string format_fixed(double v, int digits);

// Strict parse of the whole field; surrounding blanks are ignored.
std::optional<double> parse_double(std::string_view s);

// Splits one CSV record. Double-quoted fields may contain commas and "".
std::vector<std::string> split_csv_line(std::string_view line);

// Joins fields, quoting any that contain a comma, quote or newline.
std::string join_csv(const std::vector<std::string>& fields);

std::string read_file(const std::filesystem::path& path);

// Creates parent directories as needed; throws Error on failure.
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace crashstack

#endif  // CRASHSTACK_TEXT_HPP_
