#pragma once

#include "linksae/types.hpp"

#include <compare>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace linksae {

struct KeyField {
  std::string name;
  int cardinality = 2;
  bool missing_allowed = true;
};

using KeySchema = std::vector<KeyField>;

/// Throws ConfigError when a cardinality is below 2 or names repeat.
void validate_schema(const KeySchema& schema);

/// A table of units: categorical key fields, a domain label and optional
/// response / covariate columns. Domains are stored 0-based.
struct RecordFile {
  std::vector<std::string> ids;
  KeyMatrix keys;            // N x h, codes in 1..k_l or kMissing
  std::vector<int> domain;   // N entries in [0, n_domains)
  int n_domains = 0;
  std::optional<Vector> y;   // response
  std::optional<Matrix> x;   // N x p covariates
  std::vector<std::string> covariate_names;

  int size() const { return static_cast<int>(ids.size()); }
  int n_keys() const { return static_cast<int>(keys.cols()); }
};

struct Violation {
  enum class Kind { BadCategory, DuplicateId, BadDomain, MissingNotAllowed, ShapeMismatch };
  Kind kind;
  int record = -1;
  std::string message;
};

/// Report-returning validation; an empty result means the file is valid.
std::vector<Violation> validate_file(const RecordFile& file, const KeySchema& schema);

struct Link {
  int row = 0;  // record index in file 1
  int col = 0;  // record index in file 2
  auto operator<=>(const Link&) const = default;
};

struct LinkHash {
  std::size_t operator()(const Link& l) const noexcept {
    return std::hash<long long>()((static_cast<long long>(l.row) << 32) ^ static_cast<unsigned>(l.col));
  }
};

/// The 0/1 matching matrix C stored as an injective partial map between the
/// two files. Every mutation preserves one-to-one and same-domain linking.
class MatchMatrix {
 public:
  MatchMatrix(std::vector<int> domain1, std::vector<int> domain2);
  MatchMatrix(const RecordFile& f1, const RecordFile& f2) : MatchMatrix(f1.domain, f2.domain) {}

  int n1() const { return static_cast<int>(row_to_col_.size()); }
  int n2() const { return static_cast<int>(col_to_row_.size()); }
  int size() const { return n_links_; }

  // Throws std::invalid_argument when the pair would break an invariant.
  void link(int row, int col);
  void unlink_row(int row);
  bool can_link(int row, int col) const;
  bool contains(int row, int col) const { return row_to_col_.at(row) == col; }
  int partner_of_row(int row) const { return row_to_col_.at(row); }
  int partner_of_col(int col) const { return col_to_row_.at(col); }

  // Sorted by (row, col).
  std::vector<Link> links() const;
  const std::vector<int>& domain1() const { return *domain1_; }
  const std::vector<int>& domain2() const { return *domain2_; }

  // Re-derives every invariant from scratch; used by tests.
  bool check_invariants() const;

 private:
  std::shared_ptr<const std::vector<int>> domain1_;
  std::shared_ptr<const std::vector<int>> domain2_;
  std::vector<int> row_to_col_;
  std::vector<int> col_to_row_;
  int n_links_ = 0;
};

/// Ground-truth co-referring pairs (simulation or clerical audit).
class TruthDeck {
 public:
  TruthDeck() = default;
  // Throws std::invalid_argument unless one-to-one and, when domains are
  // supplied, same-domain.
  explicit TruthDeck(std::vector<Link> links, const std::vector<int>* domain1 = nullptr,
                     const std::vector<int>* domain2 = nullptr);

  const std::vector<Link>& links() const { return links_; }
  bool contains(const Link& l) const { return set_.contains(l); }
  int size() const { return static_cast<int>(links_.size()); }

 private:
  std::vector<Link> links_;
  std::unordered_set<Link, LinkHash> set_;
};

struct LinkErrorRates {
  double false_link_rate = 0.0;
  double missed_link_rate = 0.0;
  int n_declared = 0;
  bool no_declared_links = false;
};

/// false = |est \ truth| / |est|, missed = |truth \ est| / |truth|.
/// Throws std::invalid_argument for an empty truth deck.
LinkErrorRates link_error_rates(const MatchMatrix& est, const TruthDeck& truth);

/// Number of domains from two domain columns sharing one index space.
int count_domains(const std::vector<int>& domain1, const std::vector<int>& domain2);

}  // namespace linksae
