#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace synforge {

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

std::vector<std::string> split_lines(std::string_view text);
std::string_view trim(std::string_view s);

// Worker cap from SYNFORGE_THREADS (>= 1), defaulting to the hardware concurrency.
unsigned worker_threads();

}  // namespace synforge
