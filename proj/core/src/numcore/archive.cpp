#include "exactk/numcore/archive.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "exactk/errors.hpp"

namespace exactk::numcore {

namespace {

constexpr std::array<char, 8> kMagic = {'E', 'X', 'K', 'A', 'R', 'C', 'H', '1'};
constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 40;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

class Reader {
 public:
  Reader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string str(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  bool done() const { return pos_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError("archive " + origin_ + ": " + why + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) fail("truncated");
  }
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void Archive::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : manifest) {
    if (k == key) {
      v = value;
      return;
    }
  }
  manifest.emplace_back(key, value);
}

std::optional<std::string> Archive::get(const std::string& key) const {
  for (const auto& [k, v] : manifest)
    if (k == key) return v;
  return std::nullopt;
}

std::string Archive::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw DataError("archive: manifest key '" + key + "' missing");
  return *v;
}

const ArchiveRecord* Archive::find(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

const ArchiveRecord& Archive::record(const std::string& name) const {
  const auto* r = find(name);
  if (r == nullptr) throw DataError("archive: record '" + name + "' missing");
  return *r;
}

void write_archive(const Archive& archive, const std::filesystem::path& path) {
  std::string out(kMagic.begin(), kMagic.end());
  std::string manifest;
  for (const auto& [k, v] : archive.manifest) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractViolation("archive: manifest entry '" + k + "' contains a separator");
    }
    manifest += k + "=" + v + "\n";
  }
  put_u64(out, manifest.size());
  out += manifest;
  put_u64(out, archive.records.size());
  for (const auto& r : archive.records) {
    if (shape_size(r.shape) != r.data.size()) {
      throw ContractViolation("archive: record '" + r.name + "' shape " + shape_string(r.shape) + " does not match data");
    }
    put_u64(out, r.name.size());
    out += r.name;
    put_u64(out, r.shape.size());
    for (auto e : r.shape) put_u64(out, e);
    for (double d : r.data) put_u64(out, std::bit_cast<std::uint64_t>(d));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  Reader in(ss.str(), path.string());
  std::string magic = in.str(kMagic.size());
  if (magic != std::string(kMagic.begin(), kMagic.end())) in.fail("bad magic");
  Archive archive;
  std::istringstream manifest(in.str(in.u64()));
  for (std::string line; std::getline(manifest, line);) {
    auto eq = line.find('=');
    if (eq == std::string::npos) in.fail("manifest line without '='");
    archive.manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  const auto count = in.u64();
  if (count > kMaxCount) in.fail("implausible record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    ArchiveRecord r;
    r.name = in.str(in.u64());
    const auto rank = in.u64();
    if (rank == 0 || rank > 8) in.fail("bad rank for '" + r.name + "'");
    for (std::uint64_t d = 0; d < rank; ++d) r.shape.push_back(in.u64());
    const auto n = shape_size(r.shape);
    if (n > kMaxCount) in.fail("implausible size for '" + r.name + "'");
    r.data.resize(n);
    for (auto& v : r.data) v = in.f64();
    archive.records.push_back(std::move(r));
  }
  if (!in.done()) in.fail("trailing bytes");
  return archive;
}

}  // namespace exactk::numcore
