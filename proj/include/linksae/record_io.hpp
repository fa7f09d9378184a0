#pragma once

#include "linksae/datamodel.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace linksae {

/// How a key column maps to category codes: either explicit labels
/// (code = position + 1) or an integer range starting at `min_value`.
struct KeyColumn {
  KeyField field;
  std::string column;
  std::vector<std::string> levels;
  int min_value = 1;
};

/// Schema sidecar: which columns are keys, the domain and the value columns.
struct FileSchema {
  char delimiter = ',';
  std::string id_column = "id";
  std::string domain_column = "domain";
  std::vector<std::string> missing_tokens{"", "-", "NA"};
  std::vector<KeyColumn> keys;
  std::string response_column;               // may be absent from a given file
  std::vector<std::string> covariate_columns;  // idem

  KeySchema key_schema() const;
  // Restrict to the named key fields (in the given order).
  FileSchema select_keys(const std::vector<std::string>& names) const;
};

FileSchema read_schema(const std::filesystem::path& path);
void write_schema(const std::filesystem::path& path, const FileSchema& schema);

/// Domain labels shared by every file of a run; index order is the natural
/// order of labels (numeric suffixes compared as numbers).
class DomainIndex {
 public:
  DomainIndex() = default;
  explicit DomainIndex(std::vector<std::string> labels);

  int size() const { return static_cast<int>(labels_.size()); }
  const std::string& label(int d) const { return labels_.at(d); }
  const std::vector<std::string>& labels() const { return labels_; }
  // Throws ConfigError for an unknown label.
  int index(const std::string& label) const;
  bool contains(const std::string& label) const { return lookup_.contains(label); }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, int> lookup_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path, char delimiter = ',');

struct RecordPair {
  RecordFile file1;
  RecordFile file2;
  DomainIndex domains;
};

/// Reads both files of a linkage problem; the domain table is the union of
/// their labels. Violations of the schema are reported as ConfigError.
RecordPair read_record_pair(const std::filesystem::path& path1, const std::filesystem::path& path2,
                            const FileSchema& schema);

void write_record_file(const std::filesystem::path& path, const RecordFile& file,
                       const FileSchema& schema, const DomainIndex& domains,
                       const std::string& value_column);

struct ScoredLink {
  Link link;
  double score = 0.0;
};

void write_pair_list(const std::filesystem::path& path, const std::vector<ScoredLink>& pairs,
                     const RecordFile& f1, const RecordFile& f2);
std::vector<ScoredLink> read_pair_list(const std::filesystem::path& path, const RecordFile& f1,
                                       const RecordFile& f2);

void write_truth_deck(const std::filesystem::path& path, const TruthDeck& truth,
                      const RecordFile& f1, const RecordFile& f2);
TruthDeck read_truth_deck(const std::filesystem::path& path, const RecordFile& f1,
                          const RecordFile& f2);

/// Fixed-format number rendering used by every text output, so reruns are
/// byte-identical.
std::string format_number(double value, int precision = 10);

}  // namespace linksae
