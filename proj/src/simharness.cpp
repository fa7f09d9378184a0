#include "linksae/simharness.hpp"

#include "linksae/linkage_fs.hpp"
#include "linksae/sae_linked.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_set>

namespace linksae {

std::vector<int> reference_domain_sizes() {
  return {2880, 2302, 2443, 2404, 314, 255, 113, 296, 488, 490, 106, 421, 231, 2840, 2915, 2325, 2354, 3448};
}

KeySchema default_key_schema() { return {{"day", 31, true}, {"year", 101, true}, {"gender", 2, true}}; }

int PopulationSpec::size() const { return std::accumulate(domain_sizes.begin(), domain_sizes.end(), 0); }

void validate_spec(const PopulationSpec& spec) {
  if (spec.domain_sizes.empty()) throw ConfigError("population: no domains");
  for (int n : spec.domain_sizes) {
    if (n < 1) throw ConfigError("population: every domain needs at least one unit");
  }
  validate_schema(spec.keys);
  if (spec.keys.empty() || spec.keys.size() > 32) throw ConfigError("population: need 1 to 32 key fields");
  for (double p : {spec.typo_prob, spec.missing_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("population: probabilities must lie in [0, 1]");
  }
  if (spec.sigma_u < 0 || spec.sigma_e < 0 || spec.income_log_sd < 0 || spec.domain_log_mean_sd < 0) {
    throw ConfigError("population: standard deviations must be nonnegative");
  }
  if (spec.unique_keys) {
    double combos = 1.0;
    for (const KeyField& f : spec.keys) combos *= f.cardinality;
    for (int n : spec.domain_sizes) {
      if (n > combos) throw ConfigError("population: unique_keys needs domains no larger than the key space");
    }
  }
}

namespace {

std::string make_id(char prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%07d", prefix, i + 1);
  return buf;
}

}  // namespace

Population generate_population(const PopulationSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Rng rng(seed);
  const int D = spec.n_domains();
  const int N = spec.size();
  const int h = static_cast<int>(spec.keys.size());

  Vector log_mean(D), u(D);
  for (int d = 0; d < D; ++d) log_mean(d) = spec.income_log_mean + spec.domain_log_mean_sd * rng.normal();
  for (int d = 0; d < D; ++d) u(d) = spec.sigma_u * rng.normal();

  KeyMatrix keys(N, h);
  std::vector<int> domain(N);
  Vector x(N), y(N);
  int i = 0;
  for (int d = 0; d < D; ++d) {
    std::unordered_set<std::uint64_t> used;
    for (int k = 0; k < spec.domain_sizes[d]; ++k, ++i) {
      for (;;) {
        std::uint64_t code = 0;
        for (int l = 0; l < h; ++l) {
          const int v = static_cast<int>(rng.index(spec.keys[l].cardinality)) + 1;
          keys(i, l) = v;
          code = code * static_cast<std::uint64_t>(spec.keys[l].cardinality + 1) + static_cast<std::uint64_t>(v);
        }
        if (!spec.unique_keys || used.insert(code).second) break;
      }
      domain[i] = d;
      x(i) = std::exp(log_mean(d) + spec.income_log_sd * rng.normal());
      y(i) = spec.beta0 + spec.beta1 * x(i) + u(d) + spec.sigma_e * rng.normal();
    }
  }

  // The register is stored in shuffled order so that record positions carry
  // no information about the true pairing.
  std::vector<int> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());  // perm[unit] = register position

  Population pop;
  pop.keys = spec.keys;
  RecordFile& reg = pop.register_file;
  reg.ids.resize(N);
  reg.keys.resize(N, h);
  reg.domain.resize(N);
  reg.n_domains = D;
  reg.x = Matrix(N, 1);
  reg.covariate_names = {"income"};
  for (int unit = 0; unit < N; ++unit) {
    const int pos = perm[unit];
    reg.ids[pos] = make_id('R', pos);
    reg.keys.row(pos) = keys.row(unit);
    reg.domain[pos] = domain[unit];
    (*reg.x)(pos, 0) = x(unit);
  }

  RecordFile& per = pop.perturbed_file;
  per.ids.resize(N);
  per.keys = keys;
  per.domain = domain;
  per.n_domains = D;
  per.y = y;
  for (int unit = 0; unit < N; ++unit) {
    per.ids[unit] = make_id('P', unit);
    for (int l = 0; l < h; ++l) {
      const int k = spec.keys[l].cardinality;
      if (rng.uniform() < spec.typo_prob) {
        const int shift = static_cast<int>(rng.index(k - 1)) + 1;
        per.keys(unit, l) = (per.keys(unit, l) - 1 + shift) % k + 1;
      }
      if (rng.uniform() < spec.missing_prob) per.keys(unit, l) = kMissing;
    }
  }

  std::vector<Link> truth(N);
  for (int unit = 0; unit < N; ++unit) truth[unit] = {unit, perm[unit]};
  pop.truth = TruthDeck(std::move(truth), &per.domain, &reg.domain);

  pop.pop_size = Vector::Zero(D);
  pop.pop_xbar = Matrix::Zero(D, 2);
  pop.area_mean = Vector::Zero(D);
  for (int unit = 0; unit < N; ++unit) {
    const int d = domain[unit];
    pop.pop_size(d) += 1.0;
    pop.pop_xbar(d, 1) += x(unit);
    pop.area_mean(d) += y(unit);
  }
  pop.pop_xbar.col(1).array() /= pop.pop_size.array();
  pop.pop_xbar.col(0).setOnes();
  pop.area_mean.array() /= pop.pop_size.array();
  return pop;
}

const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::A: return "A";
    case Estimator::B: return "B";
    case Estimator::C: return "C";
    case Estimator::D: return "D";
    case Estimator::AStar: return "A*";
    case Estimator::CStar: return "C*";
    case Estimator::E: return "E";
    case Estimator::F: return "F";
    case Estimator::SampleMean: return "Sample mean";
  }
  return "?";
}

bool is_bayesian(Estimator e) {
  return e == Estimator::AStar || e == Estimator::CStar || e == Estimator::E || e == Estimator::F;
}

EstimatorToggles EstimatorToggles::frequentist() {
  EstimatorToggles t;
  for (Estimator e : kAllEstimators) t.set(e, !is_bayesian(e));
  return t;
}

const EstimatorRow* ReplicationReport::row(Estimator e) const {
  for (const auto& r : rows) {
    if (r.estimator == e) return &r;
  }
  return nullptr;
}

std::vector<int> srswor(int population, int n, Rng& rng) {
  if (n < 0 || n > population) throw ConfigError("sample size exceeds the population");
  // Selection sampling: each unit kept with probability (needed / remaining).
  std::vector<int> out;
  out.reserve(n);
  for (int i = 0; i < population && static_cast<int>(out.size()) < n; ++i) {
    const double need = n - static_cast<double>(out.size());
    if (rng.uniform() * (population - i) < need) out.push_back(i);
  }
  return out;
}

namespace {

EstimateCell frequentist_cell(const Vector& beta, const Vector& pred) {
  EstimateCell c;
  c.ok = true;
  c.coef = beta;
  c.area_pred = pred;
  return c;
}

EstimateCell bayes_cell(const SaePosterior& post) {
  EstimateCell c;
  c.ok = true;
  c.coef = post.beta_mean();
  c.coef_post_sd = post.beta_sd();
  c.area_pred = post.mu_mean();
  return c;
}

template <typename F>
void guarded(EstimateCell& cell, F&& f) {
  try {
    f();
  } catch (const std::exception& ex) {
    cell = EstimateCell{};
    cell.failure = ex.what();
  }
}

}  // namespace

ReplicationResult run_replication(const Population& pop, const HarnessOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  const RecordFile& per = pop.perturbed_file;
  const RecordFile& reg = pop.register_file;
  const int D = static_cast<int>(pop.pop_size.size());
  const std::vector<int> idx = srswor(per.size(), options.n_sample, rng);
  const int n = static_cast<int>(idx.size());

  RecordFile f1;
  f1.ids.resize(n);
  f1.keys.resize(n, per.keys.cols());
  f1.domain.resize(n);
  f1.n_domains = D;
  f1.y = Vector(n);
  std::vector<int> true_col(n);
  std::vector<Link> truth_links(n);
  for (int k = 0; k < n; ++k) {
    const int unit = idx[k];
    f1.ids[k] = per.ids[unit];
    f1.keys.row(k) = per.keys.row(unit);
    f1.domain[k] = per.domain[unit];
    (*f1.y)(k) = (*per.y)(unit);
    true_col[k] = pop.truth.links()[unit].col;
    truth_links[k] = {k, true_col[k]};
  }
  const TruthDeck truth(std::move(truth_links), &f1.domain, &reg.domain);
  std::vector<int> cards;
  for (const KeyField& f : pop.keys) cards.push_back(f.cardinality);

  ReplicationResult res;
  auto cell = [&](Estimator e) -> EstimateCell& { return res.cells[static_cast<int>(e)]; };
  auto on = [&](Estimator e) { return options.estimators.enabled(e); };
  const UnitSample sample_a = assemble_linked(f1, reg, true_col, pop.pop_size, pop.pop_xbar);

  if (on(Estimator::A)) {
    guarded(cell(Estimator::A), [&] {
      const MixedFit fit = fit_ml(sample_a);
      cell(Estimator::A) = frequentist_cell(fit.beta, fit.area_pred);
    });
  }

  if (on(Estimator::B) || on(Estimator::C) || on(Estimator::D)) {
    std::vector<int> declared(n, -1);
    std::optional<MatchMatrix> matches;
    std::string fs_failure;
    try {
      FsRunOptions fs;
      fs.threshold = options.fs_threshold;
      FsRun run = run_fellegi_sunter(f1, reg, fs);
      const LinkErrorRates rates = link_error_rates(run.matches, truth);
      res.fs_false_rate = rates.false_link_rate;
      res.fs_missed_rate = rates.missed_link_rate;
      res.fs_declared = rates.n_declared;
      for (int k = 0; k < n; ++k) declared[k] = run.matches.partner_of_row(k);
      matches = std::move(run.matches);
    } catch (const std::exception& ex) {
      fs_failure = ex.what();
    }
    for (Estimator e : {Estimator::B, Estimator::C, Estimator::D}) {
      if (on(e) && !matches) cell(e).failure = "linkage failed: " + fs_failure;
    }
    if (matches) {
      if (on(Estimator::B)) {
        guarded(cell(Estimator::B), [&] {
          std::vector<int> rows(n, -1);
          for (int k = 0; k < n; ++k) {
            if (declared[k] >= 0) rows[k] = true_col[k];
          }
          const MixedFit fit = fit_ml(assemble_linked(f1, reg, rows, pop.pop_size, pop.pop_xbar));
          cell(Estimator::B) = frequentist_cell(fit.beta, fit.area_pred);
        });
      }
      const UnitSample naive = assemble_linked(f1, reg, declared, pop.pop_size, pop.pop_xbar);
      if (on(Estimator::C)) {
        guarded(cell(Estimator::C), [&] {
          const MixedFit fit = fit_ml(naive);
          cell(Estimator::C) = frequentist_cell(fit.beta, fit.area_pred);
        });
      }
      if (on(Estimator::D)) {
        guarded(cell(Estimator::D), [&] {
          const LinkErrorSpec spec = estimate_lambda(*matches, truth, D);
          res.lambda_hat = spec.lambda;
          const AdjustedFit fit = fit_adjusted(naive, spec);
          cell(Estimator::D) = frequentist_cell(fit.beta_blue, fit.area_pred);
        });
      }
    }
  }

  if (on(Estimator::AStar)) {
    guarded(cell(Estimator::AStar), [&] {
      cell(Estimator::AStar) = bayes_cell(
          gibbs_sae(sample_a, options.prior, options.sae_burn, options.sae_draws, derive_seed(seed, 11)));
    });
  }

  if (on(Estimator::CStar) || on(Estimator::E)) {
    McmcOptions mcmc;
    mcmc.n_burn = options.link_burn;
    mcmc.n_draws = options.link_draws;
    mcmc.thin = options.nonfeedback.thin;
    mcmc.seed = derive_seed(seed, 12);
    mcmc.constrained_subset = true;
    std::optional<LinkagePosterior> linkage;
    std::string failure;
    try {
      if (on(Estimator::E)) {
        BayesLinkedResult r = run_nonfeedback(f1, reg, cards, options.hyper, mcmc, pop.pop_size, pop.pop_xbar,
                                              options.prior, options.nonfeedback);
        cell(Estimator::E) = bayes_cell(r.sae);
        linkage = std::move(r.linkage);
      } else {
        const CPrior prior = CPrior::point_mass(n, std::min(n, reg.size()));
        linkage = run_mcmc(f1, reg, cards, prior, options.hyper, mcmc);
      }
    } catch (const std::exception& ex) {
      failure = ex.what();
      if (on(Estimator::E)) cell(Estimator::E).failure = failure;
    }
    if (on(Estimator::CStar)) {
      if (!linkage) {
        cell(Estimator::CStar).failure = "linkage failed: " + failure;
      } else {
        guarded(cell(Estimator::CStar), [&] {
          const MatchMatrix point = point_estimate(*linkage);
          const LinkErrorRates rates = link_error_rates(point, truth);
          res.bayes_false_rate = rates.false_link_rate;
          res.bayes_missed_rate = rates.missed_link_rate;
          res.bayes_declared = rates.n_declared;
          std::vector<int> rows(n, -1);
          for (int k = 0; k < n; ++k) rows[k] = point.partner_of_row(k);
          cell(Estimator::CStar) = bayes_cell(gibbs_sae(assemble_linked(f1, reg, rows, pop.pop_size, pop.pop_xbar),
                                                        options.prior, options.sae_burn, options.sae_draws,
                                                        derive_seed(seed, 13)));
        });
      }
    }
  }

  if (on(Estimator::F)) {
    guarded(cell(Estimator::F), [&] {
      McmcOptions mcmc;
      mcmc.n_burn = options.feedback_burn;
      mcmc.n_draws = options.feedback_draws;
      mcmc.thin = 1;
      mcmc.seed = derive_seed(seed, 14);
      const BayesLinkedResult r = run_feedback(f1, reg, cards, options.hyper, mcmc, pop.pop_size, pop.pop_xbar,
                                               options.prior, FeedbackOptions{});
      cell(Estimator::F) = bayes_cell(r.sae);
    });
  }

  if (on(Estimator::SampleMean)) {
    EstimateCell& c = cell(Estimator::SampleMean);
    Vector sum = Vector::Zero(D), count = Vector::Zero(D);
    for (int k = 0; k < n; ++k) {
      sum(f1.domain[k]) += (*f1.y)(k);
      count(f1.domain[k]) += 1.0;
    }
    c.ok = true;
    c.area_pred = Vector(D);
    for (int d = 0; d < D; ++d) {
      c.area_pred(d) = count(d) > 0 ? sum(d) / count(d) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return res;
}

namespace {

EstimatorRow summarise(Estimator e, const std::vector<ReplicationResult>& runs, const Vector& truth) {
  EstimatorRow row;
  row.estimator = e;
  const int D = static_cast<int>(truth.size());
  std::vector<const EstimateCell*> ok;
  for (const auto& r : runs) {
    const EstimateCell& c = r.cells[static_cast<int>(e)];
    if (c.ok) {
      ok.push_back(&c);
    } else {
      ++row.n_failed;
    }
  }
  row.n_ok = static_cast<int>(ok.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (ok.empty()) {
    row.arb = row.sd = row.mse = nan;
    return row;
  }
  const Eigen::Index p = ok.front()->coef.size();
  if (p > 0) {
    row.coef_mean = Vector::Zero(p);
    row.coef_sd = Vector::Zero(p);
    for (const auto* c : ok) row.coef_mean += c->coef;
    row.coef_mean /= static_cast<double>(ok.size());
    for (const auto* c : ok) row.coef_sd += (c->coef - row.coef_mean).cwiseAbs2();
    row.coef_sd = (row.coef_sd / static_cast<double>(ok.size())).cwiseSqrt();
    if (ok.front()->coef_post_sd.size() == p) {
      row.mean_post_sd = Vector::Zero(p);
      for (const auto* c : ok) row.mean_post_sd += c->coef_post_sd;
      row.mean_post_sd /= static_cast<double>(ok.size());
    }
  }
  row.pred_mean = Vector::Constant(D, nan);
  row.domain_sd = Vector::Constant(D, nan);
  row.domain_mse = Vector::Constant(D, nan);
  double arb = 0.0, sd = 0.0, mse = 0.0;
  int used = 0;
  for (int d = 0; d < D; ++d) {
    double sum = 0.0, sq = 0.0, err = 0.0;
    int m = 0;
    for (const auto* c : ok) {
      const double v = c->area_pred(d);
      if (!std::isfinite(v)) continue;
      sum += v;
      err += (v - truth(d)) * (v - truth(d));
      ++m;
    }
    if (m == 0) continue;
    const double mean = sum / m;
    for (const auto* c : ok) {
      const double v = c->area_pred(d);
      if (std::isfinite(v)) sq += (v - mean) * (v - mean);
    }
    row.pred_mean(d) = mean;
    row.domain_sd(d) = std::sqrt(sq / m);
    row.domain_mse(d) = err / m;
    arb += std::abs(mean - truth(d)) / std::abs(truth(d));
    sd += row.domain_sd(d);
    mse += row.domain_mse(d);
    ++used;
  }
  row.arb = used ? arb / used : nan;
  row.sd = used ? sd / used : nan;
  row.mse = used ? mse / used : nan;
  return row;
}

}  // namespace

ReplicationReport run_replications(const PopulationSpec& spec, const HarnessOptions& options, std::uint64_t seed) {
  const Population pop = generate_population(spec, derive_seed(seed, 0));
  return run_replications(pop, spec, options, seed);
}

ReplicationReport run_replications(const Population& pop, const PopulationSpec& spec, const HarnessOptions& options,
                                   std::uint64_t seed) {
  if (options.replications < 1) throw ConfigError("replications must be >= 1");
  if (options.n_sample < 1 || options.n_sample > pop.perturbed_file.size()) {
    throw ConfigError("n_sample must lie in [1, population size]");
  }
  for (double v : pop.area_mean) {
    if (v == 0.0) throw ConfigError("a true area mean is zero; relative bias is undefined");
  }
  const int R = options.replications;
  std::vector<ReplicationResult> runs(R);
  unsigned threads = options.threads > 0 ? static_cast<unsigned>(options.threads) : std::thread::hardware_concurrency();
  threads = std::clamp<unsigned>(threads, 1u, static_cast<unsigned>(R));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < R; r = next++) runs[r] = run_replication(pop, options, derive_seed(seed, r + 1));
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ReplicationReport rep;
  rep.replications = R;
  rep.n_sample = options.n_sample;
  rep.beta_truth = Vector(2);
  rep.beta_truth << spec.beta0, spec.beta1;
  rep.area_truth = pop.area_mean;
  for (Estimator e : kAllEstimators) {
    if (options.estimators.enabled(e)) rep.rows.push_back(summarise(e, runs, pop.area_mean));
  }
  const bool fs_ran = options.estimators.enabled(Estimator::B) || options.estimators.enabled(Estimator::C) ||
                      options.estimators.enabled(Estimator::D);
  if (fs_ran) {
    for (const auto& r : runs) {
      rep.fs_false_rate += r.fs_false_rate / R;
      rep.fs_missed_rate += r.fs_missed_rate / R;
      rep.fs_declared += static_cast<double>(r.fs_declared) / R;
    }
    rep.fs_unlinked_rate = 1.0 - rep.fs_declared / options.n_sample;
  }
  int bayes_runs = 0;
  double bf = 0.0, bm = 0.0, bd = 0.0;
  for (const auto& r : runs) {
    if (!r.bayes_false_rate) continue;
    ++bayes_runs;
    bf += *r.bayes_false_rate;
    bm += *r.bayes_missed_rate;
    bd += *r.bayes_declared;
  }
  if (bayes_runs > 0) {
    rep.bayes_false_rate = bf / bayes_runs;
    rep.bayes_missed_rate = bm / bayes_runs;
    rep.bayes_declared = bd / bayes_runs;
  }
  rep.runs = std::move(runs);
  return rep;
}

}  // namespace linksae
