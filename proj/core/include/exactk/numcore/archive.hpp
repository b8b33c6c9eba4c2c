#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exactk/numcore/tensor.hpp"

namespace exactk::numcore {

// Binary layout (all integers little-endian):
//   magic      8 bytes  "EXKARCH1"
//   u64        manifest byte length, then UTF-8 "key=value\n" lines
//   u64        record count
//   per record: u64 name length, name bytes, u64 rank, rank x u64 extents,
//               product(extents) x f64 (IEEE-754 binary64, little-endian)
struct ArchiveRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Archive {
  std::vector<std::pair<std::string, std::string>> manifest;
  std::vector<ArchiveRecord> records;

  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;
  const ArchiveRecord* find(const std::string& name) const;
  const ArchiveRecord& record(const std::string& name) const;
};

void write_archive(const Archive& archive, const std::filesystem::path& path);
Archive read_archive(const std::filesystem::path& path);

}  // namespace exactk::numcore
