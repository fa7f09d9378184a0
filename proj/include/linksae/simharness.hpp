#pragma once

#include "linksae/datamodel.hpp"
#include "linksae/errors.hpp"
#include "linksae/linkage_bayes.hpp"
#include "linksae/sae_bayes.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace linksae {

/// Domain sizes of the reference population.
std::vector<int> reference_domain_sizes();

/// Day (31), year (101) and gender (2).
KeySchema default_key_schema();

struct PopulationSpec {
  std::vector<int> domain_sizes = reference_domain_sizes();
  KeySchema keys = default_key_schema();
  // Draw key combinations without replacement inside each domain so that
  // error-free keys identify every unit.
  bool unique_keys = false;
  double beta0 = 3.576;
  double beta1 = 0.538;
  double sigma_u = 1.0;
  double sigma_e = 3.5;
  // Income analog in thousands: log-normal with domain-specific log means.
  double income_log_mean = 2.9;
  double income_log_sd = 0.45;
  double domain_log_mean_sd = 0.1;
  // Per field, applied to the perturbed copy: typo first, then missingness.
  double typo_prob = 0.010;
  double missing_prob = 0.006;

  int n_domains() const { return static_cast<int>(domain_sizes.size()); }
  int size() const;
};

/// Throws ConfigError for invalid sizes, probabilities or variances.
void validate_spec(const PopulationSpec& spec);

struct Population {
  KeySchema keys;
  RecordFile register_file;   // keys, domain and income x
  RecordFile perturbed_file;  // perturbed keys, domain and response y
  TruthDeck truth;            // identity pairing
  Vector pop_size;            // N_d
  Matrix pop_xbar;            // D x 2 with a leading intercept column
  Vector area_mean;           // true Y_d
};

Population generate_population(const PopulationSpec& spec, std::uint64_t seed);

enum class Estimator { A, B, C, D, AStar, CStar, E, F, SampleMean };
inline constexpr int kEstimatorCount = 9;
inline constexpr std::array<Estimator, kEstimatorCount> kAllEstimators = {
    Estimator::A,     Estimator::B, Estimator::C, Estimator::D,         Estimator::AStar,
    Estimator::CStar, Estimator::E, Estimator::F, Estimator::SampleMean};

const char* estimator_name(Estimator e);
bool is_bayesian(Estimator e);

struct EstimatorToggles {
  std::array<bool, kEstimatorCount> on{true, true, true, true, true, true, true, true, true};

  bool enabled(Estimator e) const { return on[static_cast<int>(e)]; }
  void set(Estimator e, bool v) { on[static_cast<int>(e)] = v; }
  static EstimatorToggles frequentist();
};

struct HarnessOptions {
  int replications = 100;
  int n_sample = 1000;
  int threads = 0;  // 0: hardware concurrency
  EstimatorToggles estimators;
  double fs_threshold = 0.5;
  // A* and C*.
  int sae_burn = 1000;
  int sae_draws = 2000;
  // Subset-constrained linkage chain shared by C* and E.
  LinkageHyper hyper;
  int link_burn = 200;
  int link_draws = 100;
  NonFeedbackOptions nonfeedback{20, 10};
  int feedback_burn = 200;
  int feedback_draws = 1000;
  SaePrior prior;
};

struct EstimateCell {
  bool ok = false;
  Vector coef;           // intercept, slope (empty for the sample mean)
  Vector coef_post_sd;   // Bayesian estimators only
  Vector area_pred;      // D; NaN where undefined
  std::string failure;
};

struct ReplicationResult {
  std::array<EstimateCell, kEstimatorCount> cells;
  double fs_false_rate = 0.0;
  double fs_missed_rate = 0.0;
  int fs_declared = 0;
  std::optional<double> bayes_false_rate;
  std::optional<double> bayes_missed_rate;
  std::optional<int> bayes_declared;
  Vector lambda_hat;
};

struct EstimatorRow {
  Estimator estimator = Estimator::A;
  int n_ok = 0;
  int n_failed = 0;
  Vector coef_mean;
  Vector coef_sd;
  Vector mean_post_sd;  // averaged over replications
  Vector pred_mean;     // per domain
  Vector domain_sd;
  Vector domain_mse;
  double arb = 0.0;
  double sd = 0.0;
  double mse = 0.0;
};

struct ReplicationReport {
  int replications = 0;
  int n_sample = 0;
  Vector beta_truth;
  Vector area_truth;
  std::vector<EstimatorRow> rows;  // enabled estimators in canonical order
  double fs_false_rate = 0.0;
  double fs_missed_rate = 0.0;
  double fs_declared = 0.0;
  double fs_unlinked_rate = 0.0;  // 1 - declared / n
  std::optional<double> bayes_false_rate;
  std::optional<double> bayes_missed_rate;
  std::optional<double> bayes_declared;
  std::vector<ReplicationResult> runs;

  const EstimatorRow* row(Estimator e) const;
};

/// Mean over domains of |pred - truth| / truth. Throws ConfigError if a
/// truth entry is zero.
template <typename Derived1, typename Derived2>
typename Derived1::Scalar compute_arb(const Eigen::MatrixBase<Derived1>& pred,
                                      const Eigen::MatrixBase<Derived2>& truth) {
  using Scalar = typename Derived1::Scalar;
  if (pred.size() != truth.size() || truth.size() == 0) throw ConfigError("compute_arb: length mismatch");
  Scalar acc(0);
  for (Eigen::Index d = 0; d < truth.size(); ++d) {
    if (truth(d) == Scalar(0)) throw ConfigError("compute_arb: true mean is zero in domain " + std::to_string(d));
    acc += std::abs(pred(d) - truth(d)) / std::abs(truth(d));
  }
  return acc / Scalar(truth.size());
}

/// Indices of a simple random sample without replacement, sorted.
std::vector<int> srswor(int population, int n, Rng& rng);

/// One replication on a fixed population; pure given the seed.
ReplicationResult run_replication(const Population& pop, const HarnessOptions& options, std::uint64_t seed);

/// Generates the population from derive_seed(seed, 0) and runs the
/// replications in parallel, replication r seeded by derive_seed(seed, r + 1).
ReplicationReport run_replications(const PopulationSpec& spec, const HarnessOptions& options, std::uint64_t seed);
ReplicationReport run_replications(const Population& pop, const PopulationSpec& spec, const HarnessOptions& options,
                                   std::uint64_t seed);

}  // namespace linksae
