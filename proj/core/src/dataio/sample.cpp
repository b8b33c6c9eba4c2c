#include "exactk/dataio/sample.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "exactk/errors.hpp"

namespace exactk::dataio {

std::vector<std::size_t> Sample::card_nodes() const {
  std::vector<std::size_t> nodes;
  nodes.reserve(card.size());
  for (auto item : card) {
    auto it = std::find(candidates.begin(), candidates.end(), item);
    if (it == candidates.end()) {
      throw DataError("card item " + std::to_string(item) + " is not among the candidates");
    }
    nodes.push_back(static_cast<std::size_t>(it - candidates.begin()));
  }
  return nodes;
}

std::string sample_violation(const Sample& s) {
  if (s.card.empty()) return "empty card";
  if (s.candidates.empty()) return "empty candidate list";
  if (std::set<ItemId>(s.card.begin(), s.card.end()).size() != s.card.size()) return "card items are not distinct";
  std::set<ItemId> cands(s.candidates.begin(), s.candidates.end());
  if (cands.size() != s.candidates.size()) return "candidate items are not distinct";
  for (auto item : s.card) {
    if (!cands.count(item)) return "card item " + std::to_string(item) + " is not among the candidates";
  }
  if (s.label != 0 && s.label != 1) return "label must be 0 or 1";
  if (s.label == 1) {
    if (!s.positive_item) return "label 1 without a positive item";
    if (std::find(s.card.begin(), s.card.end(), *s.positive_item) == s.card.end()) {
      return "positive item " + std::to_string(*s.positive_item) + " is not in the card";
    }
  } else if (s.positive_item) {
    return "label 0 with a positive item";
  }
  return {};
}

void validate_sample(const Sample& s, const std::string& context) {
  auto why = sample_violation(s);
  if (!why.empty()) throw DataError(context + ": " + why);
}

void DatasetSpec::validate() const {
  if (k == 0) throw ConfigError("K must be positive");
  if (n == 0) throw ConfigError("N must be positive");
  if (k >= n) throw ConfigError("K must be < N");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
}

SplitResult split(const std::vector<Sample>& samples, double ratio, numcore::Rng& rng) {
  if (samples.empty()) throw DataError("split: no samples");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split: ratio must lie in (0, 1)");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  numcore::shuffle(order, rng);
  // The epsilon keeps exact products such as 0.8 * 10 from flooring to 7.
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(samples.size()) + 1e-9));
  SplitResult out;
  out.train.reserve(n_train);
  out.test.reserve(samples.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.train : out.test).push_back(samples[order[i]]);
  }
  return out;
}

std::vector<Sample> labeled(const std::vector<Sample>& samples, int label) {
  std::vector<Sample> out;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(out), [label](const Sample& s) { return s.label == label; });
  return out;
}

namespace {

std::string join_ids(const std::vector<ItemId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

[[noreturn]] void row_error(std::size_t line, const std::string& why) {
  throw DataError("line " + std::to_string(line) + ": " + why);
}

std::int64_t parse_id(const std::string& text, std::size_t line, const char* column) {
  std::int64_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last) {
    row_error(line, std::string("non-integer ") + column + " '" + text + "'");
  }
  return value;
}

std::vector<ItemId> parse_ids(const std::string& text, std::size_t line, const char* column) {
  std::vector<ItemId> ids;
  std::size_t start = 0;
  while (true) {
    auto comma = text.find(',', start);
    ids.push_back(parse_id(text.substr(start, comma - start), line, column));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return ids;
}

}  // namespace

std::string format_sample(const Sample& s) {
  std::string out = std::to_string(s.user);
  out += '\t';
  out += join_ids(s.card);
  out += '\t';
  out += join_ids(s.candidates);
  out += '\t';
  out += std::to_string(s.label);
  out += '\t';
  out += s.positive_item ? std::to_string(*s.positive_item) : std::string("-");
  return out;
}

Sample parse_sample_row(const std::string& row, std::size_t line_number) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = row.find('\t', start);
    cols.push_back(row.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (cols.size() != 5) {
    row_error(line_number, "expected 5 tab-separated columns, found " + std::to_string(cols.size()));
  }
  Sample s;
  s.user = parse_id(cols[0], line_number, "user");
  s.card = parse_ids(cols[1], line_number, "card id");
  s.candidates = parse_ids(cols[2], line_number, "candidate id");
  if (cols[3] != "0" && cols[3] != "1") row_error(line_number, "label must be 0 or 1, got '" + cols[3] + "'");
  s.label = cols[3] == "1" ? 1 : 0;
  if (cols[4] != "-") s.positive_item = parse_id(cols[4], line_number, "positive item");
  auto why = sample_violation(s);
  if (!why.empty()) row_error(line_number, why);
  return s;
}

std::vector<Sample> parse_samples(std::istream& in, const std::string& origin) {
  std::vector<Sample> out;
  std::string line;
  std::size_t line_number = 0;
  if (!std::getline(in, line)) throw DataError(origin + ": empty file");
  ++line_number;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSampleHeader) throw DataError(origin + ": line 1: unexpected header '" + line + "'");
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(parse_sample_row(line, line_number));
    } catch (const DataError& e) {
      throw DataError(origin + ": " + e.what());
    }
  }
  return out;
}

std::vector<Sample> read_samples(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  return parse_samples(f, path.string());
}

void write_samples(const std::vector<Sample>& samples, std::ostream& out) {
  out << kSampleHeader << '\n';
  for (const auto& s : samples) out << format_sample(s) << '\n';
}

void write_samples(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  write_samples(samples, f);
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace exactk::dataio
