#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace suma {

/// Flat "key = value" text format used for encoder configs and experiment
/// config files. Keys are kept sorted so serialization is reproducible.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv(std::string_view text);
std::string format_kv(const KvMap& kv);
KvMap read_kv_file(const std::filesystem::path& path);
void write_kv_file(const std::filesystem::path& path, const KvMap& kv);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

void write_doubles_binary(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_doubles_binary(const std::filesystem::path& path);

/// Deterministic, round-trippable decimal rendering (printf %.17g).
std::string format_double(double v);

std::string csv_escape(std::string_view field);
std::vector<std::string> split_csv_line(std::string_view line);
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

}  // namespace suma
