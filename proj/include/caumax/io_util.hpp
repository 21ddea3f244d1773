#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace caumax {

// Shortest representation that round-trips a double bit-exactly.
std::string format_double(double x);

// Write-temp-then-rename so concurrent writers never expose partial files.
void atomic_write(const std::filesystem::path& path, const std::string& content);

// Headerless CSV of doubles, one row per line.
Eigen::MatrixXd load_csv_matrix(const std::filesystem::path& path);

// FNV-1a used for config hashes embedded in artifacts.
std::uint64_t fnv1a(std::string_view s);
std::string hash_hex(std::string_view s);

}  // namespace caumax
