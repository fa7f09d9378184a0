#include "linksae/datamodel.hpp"

#include "linksae/errors.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace linksae {

void validate_schema(const KeySchema& schema) {
  std::unordered_set<std::string> names;
  for (const auto& field : schema) {
    if (field.cardinality < 2) {
      throw ConfigError("key field '" + field.name + "' has cardinality " +
                        std::to_string(field.cardinality) + " (< 2)");
    }
    if (!names.insert(field.name).second) {
      throw ConfigError("duplicate key field name '" + field.name + "'");
    }
  }
}

std::vector<Violation> validate_file(const RecordFile& file, const KeySchema& schema) {
  std::vector<Violation> out;
  const int n = file.size();
  if (file.keys.rows() != n || file.keys.cols() != static_cast<Eigen::Index>(schema.size()) ||
      static_cast<int>(file.domain.size()) != n) {
    out.push_back({Violation::Kind::ShapeMismatch, -1,
                   "key matrix / domain column do not match the id column and schema"});
    return out;
  }
  std::unordered_map<std::string, int> seen;
  for (int i = 0; i < n; ++i) {
    auto [it, inserted] = seen.emplace(file.ids[i], i);
    if (!inserted) {
      out.push_back({Violation::Kind::DuplicateId, i, "duplicate id '" + file.ids[i] + "'"});
    }
    for (std::size_t l = 0; l < schema.size(); ++l) {
      const int code = file.keys(i, static_cast<Eigen::Index>(l));
      if (is_missing(code)) {
        if (!schema[l].missing_allowed) {
          out.push_back({Violation::Kind::MissingNotAllowed, i,
                         "record '" + file.ids[i] + "' is missing '" + schema[l].name + "'"});
        }
      } else if (code < 1 || code > schema[l].cardinality) {
        out.push_back({Violation::Kind::BadCategory, i,
                       "record '" + file.ids[i] + "' field '" + schema[l].name + "' has code " +
                           std::to_string(code) + " outside 1.." +
                           std::to_string(schema[l].cardinality)});
      }
    }
    if (file.domain[i] < 0 || file.domain[i] >= file.n_domains) {
      out.push_back({Violation::Kind::BadDomain, i,
                     "record '" + file.ids[i] + "' has domain index outside the domain table"});
    }
  }
  return out;
}

MatchMatrix::MatchMatrix(std::vector<int> domain1, std::vector<int> domain2)
    : domain1_(std::make_shared<const std::vector<int>>(std::move(domain1))),
      domain2_(std::make_shared<const std::vector<int>>(std::move(domain2))),
      row_to_col_(domain1_->size(), -1),
      col_to_row_(domain2_->size(), -1) {}

bool MatchMatrix::can_link(int row, int col) const {
  if (row < 0 || row >= n1() || col < 0 || col >= n2()) return false;
  return row_to_col_[row] < 0 && col_to_row_[col] < 0 && (*domain1_)[row] == (*domain2_)[col];
}

void MatchMatrix::link(int row, int col) {
  if (!can_link(row, col)) {
    throw std::invalid_argument("link (" + std::to_string(row) + ", " + std::to_string(col) +
                                ") violates one-to-one or same-domain constraints");
  }
  row_to_col_[row] = col;
  col_to_row_[col] = row;
  ++n_links_;
}

void MatchMatrix::unlink_row(int row) {
  const int col = row_to_col_.at(row);
  if (col < 0) return;
  row_to_col_[row] = -1;
  col_to_row_[col] = -1;
  --n_links_;
}

std::vector<Link> MatchMatrix::links() const {
  std::vector<Link> out;
  out.reserve(n_links_);
  for (int r = 0; r < n1(); ++r) {
    if (row_to_col_[r] >= 0) out.push_back({r, row_to_col_[r]});
  }
  return out;
}

bool MatchMatrix::check_invariants() const {
  int count = 0;
  for (int r = 0; r < n1(); ++r) {
    const int c = row_to_col_[r];
    if (c < 0) continue;
    ++count;
    if (c >= n2() || col_to_row_[c] != r) return false;
    if ((*domain1_)[r] != (*domain2_)[c]) return false;
  }
  int back = 0;
  for (int c = 0; c < n2(); ++c) {
    const int r = col_to_row_[c];
    if (r < 0) continue;
    ++back;
    if (row_to_col_[r] != c) return false;
  }
  return count == n_links_ && back == n_links_;
}

TruthDeck::TruthDeck(std::vector<Link> links, const std::vector<int>* domain1,
                     const std::vector<int>* domain2)
    : links_(std::move(links)) {
  std::sort(links_.begin(), links_.end());
  std::unordered_set<int> rows, cols;
  for (const auto& l : links_) {
    if (!rows.insert(l.row).second || !cols.insert(l.col).second) {
      throw std::invalid_argument("truth deck is not one-to-one");
    }
    if (domain1 && domain2 && domain1->at(l.row) != domain2->at(l.col)) {
      throw std::invalid_argument("truth deck links records from different domains");
    }
    set_.insert(l);
  }
}

LinkErrorRates link_error_rates(const MatchMatrix& est, const TruthDeck& truth) {
  if (truth.size() == 0) {
    throw std::invalid_argument("link_error_rates: empty truth deck");
  }
  LinkErrorRates out;
  const auto declared = est.links();
  out.n_declared = static_cast<int>(declared.size());
  int correct = 0;
  for (const auto& l : declared) {
    if (truth.contains(l)) ++correct;
  }
  if (declared.empty()) {
    out.no_declared_links = true;
    out.false_link_rate = 0.0;
  } else {
    out.false_link_rate = static_cast<double>(out.n_declared - correct) / out.n_declared;
  }
  out.missed_link_rate = static_cast<double>(truth.size() - correct) / truth.size();
  return out;
}

int count_domains(const std::vector<int>& domain1, const std::vector<int>& domain2) {
  int d = 0;
  for (int v : domain1) d = std::max(d, v + 1);
  for (int v : domain2) d = std::max(d, v + 1);
  return d;
}

}  // namespace linksae
