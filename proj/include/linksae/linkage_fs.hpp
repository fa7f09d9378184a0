#pragma once

#include "linksae/datamodel.hpp"
#include "linksae/record_io.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace linksae {

/// Agreement pattern for one candidate pair; bit l set iff field l agrees.
struct Comparison {
  int row = 0;
  int col = 0;
  std::uint32_t pattern = 0;

  int agree(int field) const { return static_cast<int>((pattern >> field) & 1u); }
};

struct ComparisonSet {
  int n_fields = 0;
  std::vector<Comparison> pairs;

  // (pattern, multiplicity) sorted by pattern.
  std::vector<std::pair<std::uint32_t, double>> pattern_counts() const;
};

/// All within-domain pairs over the selected key columns (all columns when
/// `key_fields` is empty). A field agrees iff both values are present and equal.
ComparisonSet build_comparisons(const RecordFile& f1, const RecordFile& f2,
                                std::span<const int> key_fields = {});

inline constexpr double kFsClamp = 1e-6;

struct FsModel {
  Vector m;
  Vector u;
  double zeta = 0.0;
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  // every comparison shares one pattern
};

/// m = 0.9, u = 0.1, zeta = min(N1, N2) / |pairs|.
FsModel default_fs_init(int n_fields, int n1, int n2, std::size_t n_pairs);

FsModel fit_em(std::span<const std::pair<std::uint32_t, double>> pattern_counts, FsModel init,
               double tol = 1e-6, int max_iter = 1000);
FsModel fit_em(const ComparisonSet& comparisons, FsModel init, double tol = 1e-6, int max_iter = 1000);

/// log psi for an agreement pattern.
double log_likelihood_ratio(std::uint32_t pattern, const FsModel& model);

/// psi = prod m^q (1-m)^(1-q) / prod u^q (1-u)^(1-q), evaluated in log space.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar likelihood_ratio(const Eigen::MatrixBase<Derived>& q, const VectorX<Scalar>& m, const VectorX<Scalar>& u) {
  Scalar log_psi(0);
  for (Eigen::Index l = 0; l < q.size(); ++l) {
    if (q(l) != Scalar(0)) {
      log_psi += std::log(m(l)) - std::log(u(l));
    } else {
      log_psi += std::log1p(-m(l)) - std::log1p(-u(l));
    }
  }
  return std::exp(log_psi);
}

/// zeta psi / (1 - zeta + zeta psi).
template <typename Scalar>
Scalar posterior_match_prob(Scalar psi, Scalar zeta) {
  return zeta * psi / (Scalar(1) - zeta + zeta * psi);
}

/// Same quantity from log psi, stable for extreme ratios.
double posterior_match_prob_log(double log_psi, double zeta);

/// Posterior match probability for every comparison with score >= min_score.
std::vector<ScoredLink> score_pairs(const ComparisonSet& comparisons, const FsModel& model,
                                    double min_score = 0.0);

/// Pairs scoring at least `threshold`, reduced to one-to-one greedily by
/// descending score with (row, col) tie-breaking.
MatchMatrix decide_links(std::vector<ScoredLink> scored, const std::vector<int>& domain1,
                         const std::vector<int>& domain2, double threshold = 0.5);

struct FsRunOptions {
  std::vector<int> key_fields;  // empty: every key column
  double threshold = 0.5;
  double tol = 1e-6;
  int max_iter = 1000;
};

struct FsRun {
  FsModel model;
  MatchMatrix matches;
  std::vector<ScoredLink> declared;  // sorted by (row, col)
  std::size_t n_comparisons = 0;
};

/// Comparisons, EM fit, scoring and thresholded one-to-one decisions.
FsRun run_fellegi_sunter(const RecordFile& f1, const RecordFile& f2, const FsRunOptions& options);

}  // namespace linksae
