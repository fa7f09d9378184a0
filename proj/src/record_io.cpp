#include "linksae/record_io.hpp"

#include "linksae/errors.hpp"
#include "linksae/json_util.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace linksae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + s + "' is not a number");
  }
}

// Natural order: compare the non-digit prefix, then a trailing integer.
bool natural_less(const std::string& a, const std::string& b) {
  auto split = [](const std::string& s) {
    std::size_t i = s.size();
    while (i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]))) --i;
    long long num = -1;
    if (i < s.size() && s.size() - i < 18) num = std::stoll(s.substr(i));
    return std::pair<std::string, long long>(s.substr(0, i), num);
  };
  const auto [pa, na] = split(a);
  const auto [pb, nb] = split(b);
  if (pa != pb) return pa < pb;
  if (na != nb) return na < nb;
  return a < b;
}

int encode_key(const KeyColumn& kc, const std::string& raw, const FileSchema& schema,
               const std::string& where) {
  if (std::find(schema.missing_tokens.begin(), schema.missing_tokens.end(), raw) !=
      schema.missing_tokens.end()) {
    return kMissing;
  }
  if (!kc.levels.empty()) {
    const auto it = std::find(kc.levels.begin(), kc.levels.end(), raw);
    if (it == kc.levels.end()) {
      // Out-of-range codes are kept so that validation can report them.
      return kc.field.cardinality + 1;
    }
    return static_cast<int>(it - kc.levels.begin()) + 1;
  }
  const double v = parse_double(raw, where);
  return static_cast<int>(std::lround(v)) - kc.min_value + 1;
}

std::string decode_key(const KeyColumn& kc, int code) {
  if (is_missing(code)) return "-";
  if (!kc.levels.empty()) return kc.levels.at(code - 1);
  return std::to_string(code - 1 + kc.min_value);
}

RecordFile parse_record_table(const CsvTable& table, const FileSchema& schema,
                              const std::string& name) {
  RecordFile rf;
  const int id_col = table.column(schema.id_column);
  const int dom_col = table.column(schema.domain_column);
  if (id_col < 0) throw ConfigError(name + ": missing id column '" + schema.id_column + "'");
  if (dom_col < 0) throw ConfigError(name + ": missing domain column '" + schema.domain_column + "'");
  std::vector<int> key_cols;
  for (const auto& kc : schema.keys) {
    const int c = table.column(kc.column);
    if (c < 0) throw ConfigError(name + ": missing key column '" + kc.column + "'");
    key_cols.push_back(c);
  }
  const int y_col = schema.response_column.empty() ? -1 : table.column(schema.response_column);
  std::vector<int> x_cols;
  for (const auto& c : schema.covariate_columns) {
    const int idx = table.column(c);
    if (idx >= 0) x_cols.push_back(idx);
  }
  const bool has_x = !schema.covariate_columns.empty() && x_cols.size() == schema.covariate_columns.size();

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  rf.keys.resize(n, static_cast<Eigen::Index>(schema.keys.size()));
  if (y_col >= 0) rf.y = Vector(n);
  if (has_x) {
    rf.x = Matrix(n, static_cast<Eigen::Index>(x_cols.size()));
    rf.covariate_names = schema.covariate_columns;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    const std::string where = name + " line " + std::to_string(i + 2);
    rf.ids.push_back(row[id_col]);
    for (std::size_t l = 0; l < key_cols.size(); ++l) {
      rf.keys(i, static_cast<Eigen::Index>(l)) = encode_key(schema.keys[l], row[key_cols[l]], schema, where);
    }
    if (y_col >= 0) (*rf.y)(i) = parse_double(row[y_col], where);
    if (has_x) {
      for (std::size_t c = 0; c < x_cols.size(); ++c) {
        (*rf.x)(i, static_cast<Eigen::Index>(c)) = parse_double(row[x_cols[c]], where);
      }
    }
  }
  return rf;
}

std::unordered_map<std::string, int> id_lookup(const RecordFile& f, const std::string& which) {
  std::unordered_map<std::string, int> out;
  for (int i = 0; i < f.size(); ++i) {
    if (!out.emplace(f.ids[i], i).second) {
      throw ConfigError(which + ": duplicate id '" + f.ids[i] + "'");
    }
  }
  return out;
}

}  // namespace

KeySchema FileSchema::key_schema() const {
  KeySchema out;
  for (const auto& k : keys) out.push_back(k.field);
  return out;
}

FileSchema FileSchema::select_keys(const std::vector<std::string>& names) const {
  FileSchema out = *this;
  out.keys.clear();
  for (const auto& n : names) {
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const KeyColumn& k) { return k.field.name == n; });
    if (it == keys.end()) throw ConfigError("unknown key field '" + n + "'");
    out.keys.push_back(*it);
  }
  return out;
}

FileSchema read_schema(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("schema " + path.string() + ": " + e.what());
  }
  require_known_keys(j, {"delimiter", "id_column", "domain_column", "missing_tokens", "key_fields",
                         "response_column", "covariate_columns"},
                     "schema");
  FileSchema s;
  const auto delim = get_or<std::string>(j, "delimiter", ",");
  if (delim.size() != 1) throw ConfigError("schema: delimiter must be a single character");
  s.delimiter = delim[0];
  s.id_column = get_or<std::string>(j, "id_column", s.id_column);
  s.domain_column = get_or<std::string>(j, "domain_column", s.domain_column);
  s.missing_tokens = get_or<std::vector<std::string>>(j, "missing_tokens", s.missing_tokens);
  s.response_column = get_or<std::string>(j, "response_column", "");
  s.covariate_columns = get_or<std::vector<std::string>>(j, "covariate_columns", {});
  if (!j.contains("key_fields") || !j["key_fields"].is_array()) {
    throw ConfigError("schema: 'key_fields' array is required");
  }
  for (const auto& kf : j["key_fields"]) {
    require_known_keys(kf, {"name", "column", "cardinality", "missing_allowed", "levels", "min"},
                       "schema.key_fields");
    KeyColumn kc;
    kc.field.name = get_or<std::string>(kf, "name", "");
    if (kc.field.name.empty()) throw ConfigError("schema.key_fields: 'name' is required");
    kc.column = get_or<std::string>(kf, "column", kc.field.name);
    kc.levels = get_or<std::vector<std::string>>(kf, "levels", {});
    kc.field.cardinality = get_or<int>(kf, "cardinality", static_cast<int>(kc.levels.size()));
    kc.field.missing_allowed = get_or<bool>(kf, "missing_allowed", true);
    kc.min_value = get_or<int>(kf, "min", 1);
    if (!kc.levels.empty() && static_cast<int>(kc.levels.size()) != kc.field.cardinality) {
      throw ConfigError("schema.key_fields: '" + kc.field.name + "' levels do not match cardinality");
    }
    s.keys.push_back(std::move(kc));
  }
  validate_schema(s.key_schema());
  return s;
}

void write_schema(const fs::path& path, const FileSchema& schema) {
  json j;
  j["delimiter"] = std::string(1, schema.delimiter);
  j["id_column"] = schema.id_column;
  j["domain_column"] = schema.domain_column;
  j["missing_tokens"] = schema.missing_tokens;
  j["key_fields"] = json::array();
  for (const auto& k : schema.keys) {
    json kf{{"name", k.field.name}, {"column", k.column}, {"cardinality", k.field.cardinality},
            {"missing_allowed", k.field.missing_allowed}};
    if (!k.levels.empty()) {
      kf["levels"] = k.levels;
    } else {
      kf["min"] = k.min_value;
    }
    j["key_fields"].push_back(kf);
  }
  if (!schema.response_column.empty()) j["response_column"] = schema.response_column;
  if (!schema.covariate_columns.empty()) j["covariate_columns"] = schema.covariate_columns;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

DomainIndex::DomainIndex(std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end(), natural_less);
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  labels_ = std::move(labels);
  for (int i = 0; i < size(); ++i) lookup_[labels_[i]] = i;
}

int DomainIndex::index(const std::string& label) const {
  const auto it = lookup_.find(label);
  if (it == lookup_.end()) throw ConfigError("unknown domain label '" + label + "'");
  return it->second;
}

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable read_csv(const fs::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line, delimiter);
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ConfigError(path.string() + " line " + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (first) throw ConfigError(path.string() + ": empty file (no header row)");
  return t;
}

RecordPair read_record_pair(const fs::path& path1, const fs::path& path2, const FileSchema& schema) {
  const CsvTable t1 = read_csv(path1, schema.delimiter);
  const CsvTable t2 = read_csv(path2, schema.delimiter);
  std::vector<std::string> labels;
  for (const auto* t : {&t1, &t2}) {
    const int c = t->column(schema.domain_column);
    if (c < 0) throw ConfigError("missing domain column '" + schema.domain_column + "'");
    for (const auto& row : t->rows) labels.push_back(row[c]);
  }
  RecordPair out;
  out.domains = DomainIndex(std::move(labels));
  out.file1 = parse_record_table(t1, schema, path1.string());
  out.file2 = parse_record_table(t2, schema, path2.string());
  for (auto pr : {std::pair{&out.file1, &t1}, std::pair{&out.file2, &t2}}) {
    const int c = pr.second->column(schema.domain_column);
    for (const auto& row : pr.second->rows) pr.first->domain.push_back(out.domains.index(row[c]));
    pr.first->n_domains = out.domains.size();
  }
  const KeySchema ks = schema.key_schema();
  for (const auto& [rf, path] : {std::pair{&out.file1, &path1}, std::pair{&out.file2, &path2}}) {
    const auto violations = validate_file(*rf, ks);
    if (!violations.empty()) {
      std::string msg = path->string() + ": " + std::to_string(violations.size()) + " violation(s); first: " +
                        violations.front().message;
      throw ConfigError(msg);
    }
  }
  return out;
}

void write_record_file(const fs::path& path, const RecordFile& file, const FileSchema& schema,
                       const DomainIndex& domains, const std::string& value_column) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const char d = schema.delimiter;
  out << schema.id_column;
  for (const auto& k : schema.keys) out << d << k.column;
  out << d << schema.domain_column;
  const bool write_y = file.y.has_value() && !value_column.empty() && value_column == schema.response_column;
  const bool write_x = file.x.has_value() && !write_y;
  if (write_y) out << d << value_column;
  if (write_x) {
    for (const auto& c : schema.covariate_columns) out << d << c;
  }
  out << "\n";
  for (int i = 0; i < file.size(); ++i) {
    out << file.ids[i];
    for (std::size_t l = 0; l < schema.keys.size(); ++l) {
      out << d << decode_key(schema.keys[l], file.keys(i, static_cast<Eigen::Index>(l)));
    }
    out << d << domains.label(file.domain[i]);
    if (write_y) out << d << format_number((*file.y)(i));
    if (write_x) {
      for (Eigen::Index c = 0; c < file.x->cols(); ++c) out << d << format_number((*file.x)(i, c));
    }
    out << "\n";
  }
}

void write_pair_list(const fs::path& path, const std::vector<ScoredLink>& pairs, const RecordFile& f1,
                     const RecordFile& f2) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id1,id2,score\n";
  for (const auto& p : pairs) {
    out << f1.ids.at(p.link.row) << ',' << f2.ids.at(p.link.col) << ',' << format_number(p.score) << "\n";
  }
}

std::vector<ScoredLink> read_pair_list(const fs::path& path, const RecordFile& f1, const RecordFile& f2) {
  const CsvTable t = read_csv(path);
  const int c1 = t.column("id1");
  const int c2 = t.column("id2");
  const int cs = t.column("score");
  if (c1 < 0 || c2 < 0) throw ConfigError(path.string() + ": pair list needs id1,id2 columns");
  const auto l1 = id_lookup(f1, "file 1");
  const auto l2 = id_lookup(f2, "file 2");
  std::vector<ScoredLink> out;
  for (const auto& row : t.rows) {
    const auto a = l1.find(row[c1]);
    const auto b = l2.find(row[c2]);
    if (a == l1.end() || b == l2.end()) {
      throw ConfigError(path.string() + ": unknown id in pair (" + row[c1] + ", " + row[c2] + ")");
    }
    out.push_back({{a->second, b->second}, cs >= 0 ? parse_double(row[cs], path.string()) : 1.0});
  }
  return out;
}

void write_truth_deck(const fs::path& path, const TruthDeck& truth, const RecordFile& f1, const RecordFile& f2) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id1,id2\n";
  for (const auto& l : truth.links()) out << f1.ids.at(l.row) << ',' << f2.ids.at(l.col) << "\n";
}

TruthDeck read_truth_deck(const fs::path& path, const RecordFile& f1, const RecordFile& f2) {
  std::vector<Link> links;
  for (const auto& s : read_pair_list(path, f1, f2)) links.push_back(s.link);
  try {
    return TruthDeck(std::move(links), &f1.domain, &f2.domain);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_number(double value, int precision) {
  if (std::isnan(value)) return "NA";
  if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
  return buf;
}

}  // namespace linksae
