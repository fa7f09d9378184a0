#pragma once

#include "linksae/linkage_bayes.hpp"
#include "linksae/sae_core.hpp"

#include <optional>
#include <vector>

namespace linksae {

enum class SigmaUPrior { Gelman, InvGamma };

/// Flat prior on beta, IG(a_e, b_e) on sigma2_e, and either a uniform prior
/// on sigma_u over (0, U] or IG(a_u, b_u) on sigma2_u.
struct SaePrior {
  double a_e = 0.01;
  double b_e = 0.01;
  SigmaUPrior sigma_u_prior = SigmaUPrior::Gelman;
  double upper = 0.0;  // U; 0 means 1e6 times the sample SD of y
  double a_u = 0.01;
  double b_u = 0.01;
};

struct SaeState {
  Vector beta;
  Vector u;
  double sigma2_e = 1.0;
  double sigma2_u = 1.0;
};

struct SaePosterior {
  Matrix beta;      // draws x p
  Vector sigma2_e;  // draws
  Vector sigma2_u;  // draws
  Matrix u;         // draws x D
  Matrix mu;        // draws x D, mu_d = Xbar_d' beta + u_d
  std::vector<int> c_draw;  // index of the linkage draw behind each row, if any
  bool propriety_warning = false;  // uniform sigma_u prior with D <= 3

  int n_draws() const { return static_cast<int>(beta.rows()); }
  Vector beta_mean() const { return beta.colwise().mean(); }
  Vector beta_sd() const;
  Vector mu_mean() const { return mu.colwise().mean(); }
};

/// Gibbs sampler for the unit-level model at a fixed linkage. Each
/// conditional step is exposed so tests can check it in isolation.
class SaeGibbs {
 public:
  SaeGibbs(const UnitSample& data, SaePrior prior);

  // Swaps in new (y, X) with the same domains and population means.
  void set_data(const UnitSample& data);
  void set_state(SaeState state) { state_ = std::move(state); }
  const SaeState& state() const { return state_; }
  const SaePrior& prior() const { return prior_; }
  double upper() const { return upper_; }
  bool propriety_warning() const { return propriety_warning_; }

  void draw_beta(Rng& rng);
  void draw_u(Rng& rng);
  void draw_sigma2_e(Rng& rng);
  void draw_sigma_u(Rng& rng);
  void sweep(Rng& rng);

  // Conditional of beta given the rest: mean and covariance.
  std::pair<Vector, Matrix> beta_conditional() const;
  Vector area_means() const;

 private:
  void refresh();

  UnitSample data_;
  SaePrior prior_;
  SaeState state_;
  double upper_ = 0.0;
  bool propriety_warning_ = false;
  Eigen::LLT<Matrix> xtx_;
  Vector n_d_;
};

/// Draws retained after burn-in; starts from OLS unless `init` is given.
SaePosterior gibbs_sae(const UnitSample& data, const SaePrior& prior, int n_burn, int n_draws, std::uint64_t seed,
                       const std::optional<SaeState>& init = std::nullopt);

struct NonFeedbackOptions {
  int inner_sweeps = 100;  // L
  int thin = 10;           // linkage sweeps between retained draws
};

/// Second stage of the non-feedback strategy: one warm-started run of
/// `inner_sweeps` SAE sweeps per linkage draw, keeping the final state.
SaePosterior sae_given_links(const RecordFile& f1, const RecordFile& f2, const std::vector<std::vector<int>>& draws,
                             const Vector& pop_size, const Matrix& pop_xbar, const SaePrior& prior,
                             int inner_sweeps, std::uint64_t seed);

struct BayesLinkedResult {
  SaePosterior sae;
  LinkagePosterior linkage;
};

/// Linkage chain on key variables only (subset sampler), SAE Gibbs per
/// retained draw. `mcmc.n_draws` is the number of retained draws.
BayesLinkedResult run_nonfeedback(const RecordFile& f1, const RecordFile& f2, const std::vector<int>& cardinalities,
                                  const LinkageHyper& hyper, McmcOptions mcmc, const Vector& pop_size,
                                  const Matrix& pop_xbar, const SaePrior& prior, const NonFeedbackOptions& options);

struct FeedbackOptions {
  double sae_weight = 1.0;  // 0 switches the regression term off
  // Hold the SAE parameters at this state instead of sampling them.
  std::optional<SaeState> fixed_params;
};

/// Joint chain over C and the SAE parameters: C moves see the regression
/// likelihood of the reassigned pairs under the current (beta, u, sigma2_e).
BayesLinkedResult run_feedback(const RecordFile& f1, const RecordFile& f2, const std::vector<int>& cardinalities,
                               const LinkageHyper& hyper, McmcOptions mcmc, const Vector& pop_size,
                               const Matrix& pop_xbar, const SaePrior& prior, const FeedbackOptions& options);

}  // namespace linksae
