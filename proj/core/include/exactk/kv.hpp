#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

// Flat key=value text configuration shared by config files and checkpoint
// manifests.
namespace exactk::kv {

using Entries = std::vector<std::pair<std::string, std::string>>;

// '#' starts a comment; blank lines are skipped; whitespace around keys and
// values is trimmed. Malformed lines raise ConfigError with the line number.
Entries parse(const std::string& text, const std::string& origin);
Entries read_file(const std::filesystem::path& path);

std::size_t to_size(const std::string& key, const std::string& value);
std::uint64_t to_u64(const std::string& key, const std::string& value);
double to_double(const std::string& key, const std::string& value);
// on/off, true/false, 1/0.
bool to_bool(const std::string& key, const std::string& value);

// Round-trippable decimal form.
std::string format(double value);
inline std::string format(bool value) { return value ? "on" : "off"; }
inline std::string format(std::size_t value) { return std::to_string(value); }

}  // namespace exactk::kv
