#pragma once

#include "linksae/datamodel.hpp"
#include "linksae/record_io.hpp"
#include "linksae/rng.hpp"

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

namespace linksae {

/// Hit-and-miss measurement model: observed = true with probability nu,
/// otherwise uniform noise over the k categories. Missing observations are
/// marginalised out (likelihood 1).
template <typename Scalar>
Scalar hit_miss_lik(int observed, int truth, Scalar nu, int k) {
  if (is_missing(observed)) return Scalar(1);
  return nu * Scalar(observed == truth ? 1 : 0) + (Scalar(1) - nu) / Scalar(k);
}

struct HitMissParams {
  Vector nu;                  // per field
  std::vector<Vector> theta;  // per field, length k_l, sums to 1
};

/// Log-probability of the true key values given C under independent fields;
/// a linked pair contributes one theta factor. Returns -infinity when a
/// linked pair has unequal true values.
double joint_true_loglik(const KeyMatrix& true1, const KeyMatrix& true2, const MatchMatrix& c,
                         const std::vector<Vector>& theta);

/// Two-stage prior on C: p(t) over the number of links, uniform over the
/// (block-diagonal) configurations with t links.
struct CPrior {
  Vector p_t;  // index t = 0..min(N1, N2)

  static CPrior uniform(int max_links);
  static CPrior point_mass(int t, int max_links);
};

/// log |C^(t)| for t = 0..min(N1,N2) with C restricted to within-domain links.
Vector log_configuration_counts(const std::vector<int>& block_sizes1, const std::vector<int>& block_sizes2);

struct LinkageHyper {
  double nu_a = 1.0;  // Beta(nu_a, nu_b) on each nu_l
  double nu_b = 1.0;
  double theta_alpha = 1.0;  // symmetric Dirichlet on each theta_l
  std::optional<Vector> fixed_nu;  // hold nu at these values
};

struct MoveWeights {
  double add = 0.3;
  double remove = 0.3;
  double swap = 0.4;
  // Constrained sampler: swap vs. moving a link to a free column.
  double constrained_swap = 0.5;
  // Share of the uniform component in column proposals; the rest picks a
  // column agreeing with the row on one random key field.
  double uniform_share = 0.5;
};

struct McmcOptions {
  int n_burn = 5000;
  int n_draws = 10000;
  int thin = 1;
  std::uint64_t seed = 1;
  bool constrained_subset = false;
  int moves_per_sweep = 0;  // 0: one per file-1 record
  MoveWeights weights;
  bool store_draws = false;
  bool store_theta_trace = false;
};

struct LinkagePosterior {
  int n1 = 0;
  int n2 = 0;
  std::vector<int> domain1;
  std::vector<int> domain2;
  std::vector<ScoredLink> pair_probs;     // P(C_jj' = 1 | W1, W2), sorted by link
  std::vector<std::vector<int>> draws;    // row -> column (-1 unlinked) per stored draw
  Matrix nu_trace;                        // draws x h
  Matrix theta_trace;                     // draws x sum(k_l), optional
  std::vector<int> t_trace;
  double acceptance_rate = 0.0;
  int n_recorded = 0;

  double prob(int row, int col) const;
};

/// Extra log-likelihood contributed by a link, e.g. a regression term.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual double log_weight(int row, int col) const = 0;
};

/// Metropolis-within-Gibbs over (C, true values, nu, theta) with
/// within-domain proposals. C moves use the true-value-marginal likelihood of
/// the affected records; their true values are then redrawn from the full
/// conditional, followed by Gibbs scans of all true values, nu (augmented
/// hit/miss indicators) and theta.
class LinkageSampler {
 public:
  // Throws NumericalError when the subset constraint is infeasible in a block.
  LinkageSampler(const RecordFile& f1, const RecordFile& f2, std::vector<int> cardinalities, CPrior prior,
                 LinkageHyper hyper, McmcOptions options, Rng& rng);

  void sweep(Rng& rng, const PairScorer* scorer = nullptr);
  // Single Metropolis proposal on C; returns whether it was accepted.
  bool propose_move(Rng& rng, const PairScorer* scorer = nullptr);
  void gibbs_true_values(Rng& rng);
  void gibbs_nu(Rng& rng);
  void gibbs_theta(Rng& rng);

  int n1() const { return static_cast<int>(row_to_col_.size()); }
  int n2() const { return static_cast<int>(col_to_row_.size()); }
  int n_links() const { return n_links_; }
  int partner_of_row(int row) const { return row_to_col_[row]; }
  const std::vector<int>& row_partners() const { return row_to_col_; }
  MatchMatrix current() const;
  const Vector& nu() const { return params_.nu; }
  const std::vector<Vector>& theta() const { return params_.theta; }
  const KeyMatrix& true_values1() const { return true1_; }
  const KeyMatrix& true_values2() const { return true2_; }
  void set_params(HitMissParams params);
  // Replaces C; throws unless the mapping is feasible for this sampler.
  void set_links(const std::vector<int>& row_to_col, Rng& rng);

  double log_single(int file, int record) const;
  double log_pair(int row, int col) const;

  void begin_recording();
  void record_draw();
  LinkagePosterior finish() const;
  double acceptance_rate() const { return proposals_ == 0 ? 0.0 : double(accepted_) / double(proposals_); }

 private:
  class Pool {
   public:
    void reset(int n_domains, int n_items);
    void add(int d, int id);
    void remove(int d, int id);
    bool contains(int id) const { return pos_[id] >= 0; }
    int size(int d) const { return static_cast<int>(items_[d].size()); }
    int at(int d, int i) const { return items_[d][i]; }
    int total() const { return total_; }

   private:
    std::vector<std::vector<int>> items_;
    std::vector<int> pos_;
    int total_ = 0;
  };

  void do_link(int row, int col);
  void do_unlink(int row);
  void redraw_pair(int row, int col, Rng& rng);
  void redraw_single(int file, int record, Rng& rng);
  int draw_true_value(int field, int obs_a, int obs_b, Rng& rng) const;
  int draw_from_theta_excluding(int field, int ex_a, int ex_b, Rng& rng) const;
  void rebuild_theta_cdf();
  double log_prior_links(int t) const;
  int propose_column(int row, Rng& rng) const;
  double column_proposal_prob(int row, int col, int free_cols) const;
  int random_free_row(Rng& rng) const;
  bool move_add(Rng& rng, const PairScorer* scorer);
  bool move_remove(Rng& rng, const PairScorer* scorer);
  bool move_swap(Rng& rng, const PairScorer* scorer);
  bool move_reassign(Rng& rng, const PairScorer* scorer);
  void initialise_links();
  void mark_dirty(int row);

  const RecordFile& f1_;
  const RecordFile& f2_;
  std::vector<int> k_;
  CPrior prior_;
  LinkageHyper hyper_;
  McmcOptions options_;
  int n_domains_ = 0;
  int h_ = 0;

  std::vector<int> row_to_col_;
  std::vector<int> col_to_row_;
  int n_links_ = 0;
  KeyMatrix true1_;
  KeyMatrix true2_;
  HitMissParams params_;
  std::vector<std::vector<double>> theta_cdf_;

  Pool linked_rows_;
  Pool free_rows_;
  Pool free_cols_;
  std::vector<int> links_per_domain_;
  std::vector<int> cols_per_domain_;
  std::vector<std::vector<int>> domain_cols_;
  // [domain][field] -> offsets into value buckets of file-2 records.
  std::vector<std::vector<std::vector<std::vector<int>>>> buckets_;
  Vector log_counts_;

  long long proposals_ = 0;
  long long accepted_ = 0;

  // Draw bookkeeping.
  bool recording_ = false;
  int n_recorded_ = 0;
  std::vector<int> snapshot_;
  std::vector<int> since_;
  std::vector<char> dirty_flag_;
  std::vector<int> dirty_;
  std::unordered_map<Link, double, LinkHash> link_mass_;
  std::vector<std::vector<int>> draws_;
  std::vector<Vector> nu_trace_;
  std::vector<Vector> theta_trace_;
  std::vector<int> t_trace_;
};

/// Runs burn-in and recorded sweeps; reproducible for a given seed.
/// Throws NumericalError when the subset constraint is infeasible.
LinkagePosterior run_mcmc(const RecordFile& f1, const RecordFile& f2, const std::vector<int>& cardinalities,
                          const CPrior& prior, const LinkageHyper& hyper, const McmcOptions& options);

/// Links with marginal posterior probability >= 1/2, made one-to-one greedily.
MatchMatrix point_estimate(const LinkagePosterior& posterior, double threshold = 0.5);

}  // namespace linksae
