#include "spanrank/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace spanrank {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (const char ch : line) {
    if (ch == ',') {
      fields.push_back(current);
      current.clear();
    } else if (ch != '\r') {
      current += ch;
    }
  }
  fields.push_back(current);
  return fields;
}

double parse_double(const std::string& text, const std::string& where) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  while (begin < end && *begin == ' ') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) throw IoError(where + ": bad number '" + text + "'");
  return value;
}

long long parse_int(const std::string& text, const std::string& where) {
  long long value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  while (begin < end && *begin == ' ') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) throw IoError(where + ": bad integer '" + text + "'");
  return value;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool is_blank_or_comment(const std::string& line) {
  for (const char ch : line) {
    if (ch == '#') return true;
    if (ch != ' ' && ch != '\t') return false;
  }
  return true;
}

void append_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void append_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void append_f64le(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  append_u64le(out, bits);
}

std::uint64_t read_u64le(const std::string& data, std::size_t& pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
  return v;
}

std::uint32_t read_u32le(const std::string& data, std::size_t& pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
  return v;
}

double read_f64le(const std::string& data, std::size_t& pos) {
  const std::uint64_t bits = read_u64le(data, pos);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

std::string format_general(double value, int significant_digits) {
  std::array<char, 64> buffer{};
  const auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value,
                                       std::chars_format::general, significant_digits);
  if (ec != std::errc{}) throw IoError("number formatting failed");
  return std::string(buffer.data(), ptr);
}

std::string format_fixed(double value, int decimals) {
  std::array<char, 64> buffer{};
  const auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value,
                                       std::chars_format::fixed, decimals);
  if (ec != std::errc{}) throw IoError("number formatting failed");
  return std::string(buffer.data(), ptr);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

// ---- labeled instance sets -------------------------------------------------

LabeledInstanceSet read_instances_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  std::size_t row = 0;
  while (row < lines.size() && is_blank_or_comment(lines[row])) ++row;
  if (row == lines.size()) throw IoError(path + ": missing header");
  const std::vector<std::string> header = split_csv(lines[row]);
  if (header.size() < 2 || header.back() != "label")
    throw IoError(path + ": expected header f0,...,label");
  const auto d = static_cast<Eigen::Index>(header.size() - 1);

  std::vector<double> values;
  std::vector<int> labels;
  for (++row; row < lines.size(); ++row) {
    if (is_blank_or_comment(lines[row])) continue;
    const std::vector<std::string> fields = split_csv(lines[row]);
    if (static_cast<Eigen::Index>(fields.size()) != d + 1)
      throw IoError(path + ": row " + std::to_string(row + 1) + " has " +
                    std::to_string(fields.size()) + " fields, expected " + std::to_string(d + 1));
    for (Eigen::Index j = 0; j < d; ++j)
      values.push_back(parse_double(fields[static_cast<std::size_t>(j)], path));
    labels.push_back(static_cast<int>(parse_int(fields.back(), path)));
  }
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (n == 0) throw IoError(path + ": no instances");

  LabeledInstanceSet set;
  set.data.resize(n, d);
  set.labels.resize(n);
  int max_label = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) set.data(i, j) = values[static_cast<std::size_t>(i * d + j)];
    set.labels[i] = labels[static_cast<std::size_t>(i)];
    if (set.labels[i] < 0) throw IoError(path + ": negative label");
    max_label = std::max(max_label, set.labels[i]);
  }
  set.num_classes = max_label + 1;
  set.validate();
  return set;
}

void write_instances_csv(const std::string& path, const LabeledInstanceSet& set) {
  std::string out;
  for (Eigen::Index j = 0; j < set.dimension(); ++j) out += "f" + std::to_string(j) + ",";
  out += "label\n";
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    for (Eigen::Index j = 0; j < set.dimension(); ++j) out += format_general(set.data(i, j)) + ",";
    out += std::to_string(set.labels[i]) + "\n";
  }
  write_text_file(path, out);
}

LabeledInstanceSet read_instances_binary(const std::string& path) {
  const std::string data = read_text_file(path);
  if (data.size() < 28 || data.compare(0, 4, "FLIM") != 0)
    throw UnsupportedFormat(path + ": not a FLIM instance file");
  std::size_t pos = 4;
  const std::uint64_t n = read_u64le(data, pos);
  const std::uint64_t d = read_u64le(data, pos);
  const std::uint64_t c = read_u64le(data, pos);
  const std::size_t expected = 28 + n * d * 8 + n * 4;
  if (data.size() != expected)
    throw IoError(path + ": truncated FLIM payload (" + std::to_string(data.size()) + " vs " +
                  std::to_string(expected) + " bytes)");
  LabeledInstanceSet set;
  set.num_classes = static_cast<int>(c);
  set.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  set.labels.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < set.data.rows(); ++i)
    for (Eigen::Index j = 0; j < set.data.cols(); ++j) set.data(i, j) = read_f64le(data, pos);
  for (Eigen::Index i = 0; i < set.labels.size(); ++i)
    set.labels[i] = static_cast<int>(read_u32le(data, pos));
  set.validate();
  return set;
}

void write_instances_binary(const std::string& path, const LabeledInstanceSet& set) {
  std::string out = "FLIM";
  append_u64le(out, static_cast<std::uint64_t>(set.size()));
  append_u64le(out, static_cast<std::uint64_t>(set.dimension()));
  append_u64le(out, static_cast<std::uint64_t>(set.num_classes));
  for (Eigen::Index i = 0; i < set.size(); ++i)
    for (Eigen::Index j = 0; j < set.dimension(); ++j) append_f64le(out, set.data(i, j));
  for (Eigen::Index i = 0; i < set.size(); ++i)
    append_u32le(out, static_cast<std::uint32_t>(set.labels[i]));
  write_text_file(path, out);
}

LabeledInstanceSet read_instances(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, "FLIM", 4) == 0) return read_instances_binary(path);
  return read_instances_csv(path);
}

// ---- dense matrices ----------------------------------------------------------

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ",";
      out += format_general(m(i, j));
    }
    out += "\n";
  }
  write_text_file(path, out);
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_blank_or_comment(lines[i])) continue;
    const std::vector<std::string> fields = split_csv(lines[i]);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const std::string& field : fields) row.push_back(parse_double(field, path));
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError(path + ": ragged matrix at line " + std::to_string(i + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": empty matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

// ---- solver and ranking outputs ---------------------------------------------

void write_trace_csv(const std::string& path, const SolverTrace& trace) {
  std::string out = "iter,H,H1,H2\n";
  for (std::size_t i = 0; i < trace.objective_history.size(); ++i) {
    const ObjectiveValue& v = trace.objective_history[i];
    out += std::to_string(i) + "," + format_general(v.total) + "," + format_general(v.ratio) +
           "," + format_general(v.orthogonality) + "\n";
  }
  write_text_file(path, out);
}

void write_ranking_csv(const std::string& path, const RankingReport& report,
                       bool include_criterion) {
  std::string out = "index,score,selected";
  if (include_criterion)
    for (Eigen::Index j = 0; j < report.criterion.cols(); ++j)
      out += ",crit_" + std::to_string(j);
  out += "\n";
  for (Eigen::Index i = 0; i < report.score.size(); ++i) {
    out += std::to_string(i) + "," + format_general(report.score[i]) + "," +
           (report.mask[i] ? "1" : "0");
    if (include_criterion)
      for (Eigen::Index j = 0; j < report.criterion.cols(); ++j)
        out += "," + format_general(report.criterion(i, j));
    out += "\n";
  }
  write_text_file(path, out);
}

RankingReport read_ranking_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  std::size_t row = 0;
  while (row < lines.size() && is_blank_or_comment(lines[row])) ++row;
  if (row == lines.size()) throw IoError(path + ": missing header");
  const std::vector<std::string> header = split_csv(lines[row]);
  if (header.size() < 3 || header[0] != "index" || header[1] != "score" ||
      header[2] != "selected")
    throw IoError(path + ": expected header index,score,selected");
  const auto crit_cols = static_cast<Eigen::Index>(header.size() - 3);

  std::vector<double> scores;
  std::vector<bool> selected;
  std::vector<double> criterion;
  for (++row; row < lines.size(); ++row) {
    if (is_blank_or_comment(lines[row])) continue;
    const std::vector<std::string> fields = split_csv(lines[row]);
    if (fields.size() != header.size()) throw IoError(path + ": ragged ranking row");
    scores.push_back(parse_double(fields[1], path));
    selected.push_back(parse_int(fields[2], path) != 0);
    for (Eigen::Index j = 0; j < crit_cols; ++j)
      criterion.push_back(parse_double(fields[static_cast<std::size_t>(3 + j)], path));
  }
  RankingReport report;
  const auto n = static_cast<Eigen::Index>(scores.size());
  report.score.resize(n);
  report.mask.resize(n);
  report.criterion.resize(n, crit_cols);
  double min_selected = std::numeric_limits<double>::infinity();
  double max_any = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    report.score[i] = scores[static_cast<std::size_t>(i)];
    report.mask[i] = selected[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < crit_cols; ++j)
      report.criterion(i, j) = criterion[static_cast<std::size_t>(i * crit_cols + j)];
    max_any = std::max(max_any, report.score[i]);
    if (report.mask[i]) min_selected = std::min(min_selected, report.score[i]);
  }
  // The written format carries the mask, not the threshold; the smallest
  // selected score reproduces a consistent one.
  report.threshold = std::isfinite(min_selected) ? min_selected : max_any;
  return report;
}

// ---- filter specs -------------------------------------------------------------

void write_specs_csv(const std::string& path, const std::vector<SpecRecord>& specs) {
  const bool with_loss =
      !specs.empty() && specs.front().initial_loss.has_value() && specs.front().final_loss.has_value();
  std::string out = "index,kind,scale,orientation,tau,resolution";
  if (with_loss) out += ",initial_loss,final_loss";
  out += "\n";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const FilterSpec& s = specs[i].spec;
    out += std::to_string(i) + "," + to_string(s.kind) + "," + format_general(s.scale) + "," +
           format_general(s.orientation) + "," + std::to_string(s.tau) + "," +
           std::to_string(s.resolution);
    if (with_loss)
      out += "," + format_general(specs[i].initial_loss.value()) + "," +
             format_general(specs[i].final_loss.value());
    out += "\n";
  }
  write_text_file(path, out);
}

std::vector<SpecRecord> read_specs_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  std::size_t row = 0;
  while (row < lines.size() && is_blank_or_comment(lines[row])) ++row;
  if (row == lines.size()) throw IoError(path + ": missing header");
  const std::vector<std::string> header = split_csv(lines[row]);
  if (header.size() < 6) throw IoError(path + ": expected filter spec header");
  const bool with_loss = header.size() >= 8;

  std::vector<SpecRecord> specs;
  for (++row; row < lines.size(); ++row) {
    if (is_blank_or_comment(lines[row])) continue;
    const std::vector<std::string> fields = split_csv(lines[row]);
    if (fields.size() != header.size()) throw IoError(path + ": ragged filter spec row");
    SpecRecord record;
    record.spec.kind = parse_filter_kind(fields[1]);
    record.spec.scale = parse_double(fields[2], path);
    record.spec.orientation = parse_double(fields[3], path);
    record.spec.tau = static_cast<int>(parse_int(fields[4], path));
    record.spec.resolution = static_cast<int>(parse_int(fields[5], path));
    if (with_loss) {
      record.initial_loss = parse_double(fields[6], path);
      record.final_loss = parse_double(fields[7], path);
    }
    record.spec.validate();
    specs.push_back(record);
  }
  return specs;
}

// ---- dataset manifests ---------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  std::size_t row = 0;
  while (row < lines.size() && is_blank_or_comment(lines[row])) ++row;
  if (row == lines.size()) throw IoError(path + ": missing header");
  const std::vector<std::string> header = split_csv(lines[row]);
  if (header.size() != 3 || header[0] != "path" || header[1] != "label" || header[2] != "split")
    throw IoError(path + ": expected header path,label,split");

  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  for (++row; row < lines.size(); ++row) {
    if (is_blank_or_comment(lines[row])) continue;
    const std::vector<std::string> fields = split_csv(lines[row]);
    if (fields.size() != 3) throw IoError(path + ": ragged manifest row");
    ManifestEntry entry;
    entry.path = (base / fields[0]).string();
    entry.label = static_cast<int>(parse_int(fields[1], path));
    if (fields[2] == "train")
      entry.is_train = true;
    else if (fields[2] == "test")
      entry.is_train = false;
    else
      throw IoError(path + ": split must be train or test, got '" + fields[2] + "'");
    entries.push_back(entry);
  }
  if (entries.empty()) throw IoError(path + ": empty manifest");
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::string out = "path,label,split\n";
  for (const ManifestEntry& entry : entries)
    out += entry.path + "," + std::to_string(entry.label) + "," +
           (entry.is_train ? "train" : "test") + "\n";
  write_text_file(path, out);
}

// ---- images ----------------------------------------------------------------------

namespace {

int next_pnm_token(const std::string& data, std::size_t& pos) {
  // Skips whitespace and '#' comments, then reads one unsigned decimal.
  while (pos < data.size()) {
    const char ch = data[pos];
    if (ch == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      ++pos;
    } else {
      break;
    }
  }
  int value = 0;
  bool any = false;
  while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') {
    value = value * 10 + (data[pos] - '0');
    any = true;
    ++pos;
  }
  if (!any) throw UnsupportedFormat("malformed netpbm header");
  return value;
}

}  // namespace

Image8 read_netpbm(const std::string& path) {
  const std::string data = read_text_file(path);
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '6'))
    throw UnsupportedFormat(path + ": only binary PGM (P5) and PPM (P6) are supported");
  Image8 image;
  image.channels = data[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  image.width = next_pnm_token(data, pos);
  image.height = next_pnm_token(data, pos);
  const int maxval = next_pnm_token(data, pos);
  if (maxval != 255) throw UnsupportedFormat(path + ": only 8-bit samples are supported");
  ++pos;  // single whitespace after maxval
  const std::size_t expected =
      static_cast<std::size_t>(image.width) * image.height * image.channels;
  if (image.width < 1 || image.height < 1 || pos >= data.size() ||
      data.size() - pos < expected)
    throw UnsupportedFormat(path + ": truncated pixel data");
  image.pixels.resize(expected);
  std::memcpy(image.pixels.data(), data.data() + pos, expected);
  return image;
}

void write_netpbm(const std::string& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3)
    throw UnsupportedFormat("netpbm supports 1 or 3 channels");
  std::string out = image.channels == 3 ? "P6\n" : "P5\n";
  out += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  write_text_file(path, out);
}

// ---- plain key = value configs ----------------------------------------------------

const std::string& KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw IoError("config: missing key '" + key + "'");
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
  return parse_double(get(key), "config key " + key);
}

long long KeyValueConfig::get_int(const std::string& key) const {
  return parse_int(get(key), "config key " + key);
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank_or_comment(line)) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("config line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto from = s.find_first_not_of(" \t");
      const auto to = s.find_last_not_of(" \t");
      return from == std::string::npos ? std::string{} : s.substr(from, to - from + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw IoError("config line " + std::to_string(lineno) + ": empty key");
    config.values_[key] = trim(line.substr(eq + 1));
  }
  return config;
}

void KeyValueConfig::save(const std::string& path) const { write_text_file(path, serialize()); }

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  return parse(read_text_file(path));
}

}  // namespace spanrank
