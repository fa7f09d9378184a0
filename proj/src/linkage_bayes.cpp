#include "linksae/linkage_bayes.hpp"

#include "linksae/errors.hpp"
#include "linksae/linkage_fs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace linksae {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

}  // namespace

double joint_true_loglik(const KeyMatrix& true1, const KeyMatrix& true2, const MatchMatrix& c,
                         const std::vector<Vector>& theta) {
  auto log_theta = [&](const KeyMatrix& w, int r) {
    double out = 0.0;
    for (Eigen::Index l = 0; l < w.cols(); ++l) out += std::log(theta[l](w(r, l) - 1));
    return out;
  };
  double out = 0.0;
  for (int j = 0; j < c.n1(); ++j) {
    const int jp = c.partner_of_row(j);
    if (jp >= 0 && true1.row(j) != true2.row(jp)) return kNegInf;
    out += log_theta(true1, j);
  }
  for (int jp = 0; jp < c.n2(); ++jp) {
    if (c.partner_of_col(jp) < 0) out += log_theta(true2, jp);
  }
  return out;
}

CPrior CPrior::uniform(int max_links) {
  return {Vector::Constant(max_links + 1, 1.0 / (max_links + 1))};
}

CPrior CPrior::point_mass(int t, int max_links) {
  if (t < 0 || t > max_links) throw std::invalid_argument("CPrior::point_mass: t out of range");
  CPrior p{Vector::Zero(max_links + 1)};
  p.p_t(t) = 1.0;
  return p;
}

Vector log_configuration_counts(const std::vector<int>& block_sizes1, const std::vector<int>& block_sizes2) {
  const int n1 = std::accumulate(block_sizes1.begin(), block_sizes1.end(), 0);
  const int n2 = std::accumulate(block_sizes2.begin(), block_sizes2.end(), 0);
  std::vector<double> acc{0.0};
  for (std::size_t d = 0; d < block_sizes1.size(); ++d) {
    const int a = block_sizes1[d];
    const int b = d < block_sizes2.size() ? block_sizes2[d] : 0;
    const int m = std::min(a, b);
    std::vector<double> block(m + 1);
    for (int t = 0; t <= m; ++t) block[t] = log_choose(a, t) + log_choose(b, t) + std::lgamma(t + 1.0);
    std::vector<double> next(acc.size() + m, kNegInf);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      for (int t = 0; t <= m; ++t) next[i + t] = log_add(next[i + t], acc[i] + block[t]);
    }
    acc = std::move(next);
  }
  Vector out = Vector::Constant(std::min(n1, n2) + 1, kNegInf);
  for (std::size_t t = 0; t < acc.size() && static_cast<Eigen::Index>(t) < out.size(); ++t) out(t) = acc[t];
  return out;
}

double LinkagePosterior::prob(int row, int col) const {
  const auto it = std::lower_bound(pair_probs.begin(), pair_probs.end(), Link{row, col},
                                   [](const ScoredLink& s, const Link& l) { return s.link < l; });
  return (it != pair_probs.end() && it->link == Link{row, col}) ? it->score : 0.0;
}

// ---------------------------------------------------------------------------
// Pool
// ---------------------------------------------------------------------------

void LinkageSampler::Pool::reset(int n_domains, int n_items) {
  items_.assign(n_domains, {});
  pos_.assign(n_items, -1);
  total_ = 0;
}

void LinkageSampler::Pool::add(int d, int id) {
  pos_[id] = static_cast<int>(items_[d].size());
  items_[d].push_back(id);
  ++total_;
}

void LinkageSampler::Pool::remove(int d, int id) {
  const int p = pos_[id];
  const int last = items_[d].back();
  items_[d][p] = last;
  pos_[last] = p;
  items_[d].pop_back();
  pos_[id] = -1;
  --total_;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

LinkageSampler::LinkageSampler(const RecordFile& f1, const RecordFile& f2, std::vector<int> cardinalities,
                               CPrior prior, LinkageHyper hyper, McmcOptions options, Rng& rng)
    : f1_(f1), f2_(f2), k_(std::move(cardinalities)), prior_(std::move(prior)), hyper_(std::move(hyper)),
      options_(std::move(options)) {
  h_ = f1.n_keys();
  if (f2.n_keys() != h_ || static_cast<int>(k_.size()) != h_) {
    throw std::invalid_argument("LinkageSampler: files and cardinalities disagree on the key fields");
  }
  if (h_ == 0) throw std::invalid_argument("LinkageSampler: no key fields");
  n_domains_ = std::max({count_domains(f1.domain, f2.domain), f1.n_domains, f2.n_domains});
  const int max_links = std::min(f1.size(), f2.size());

  std::vector<int> n1d(n_domains_, 0), n2d(n_domains_, 0);
  for (int d : f1.domain) ++n1d[d];
  for (int d : f2.domain) ++n2d[d];
  if (options_.constrained_subset) {
    for (int d = 0; d < n_domains_; ++d) {
      if (n1d[d] > n2d[d]) {
        throw NumericalError("subset constraint infeasible: domain " + std::to_string(d) + " has " +
                             std::to_string(n1d[d]) + " file-1 records but only " + std::to_string(n2d[d]) +
                             " file-2 records");
      }
    }
    prior_ = CPrior::point_mass(f1.size(), max_links);
  }
  if (prior_.p_t.size() != max_links + 1) {
    throw std::invalid_argument("CPrior: p_t must have min(N1, N2) + 1 entries");
  }
  log_counts_ = log_configuration_counts(n1d, n2d);
  cols_per_domain_ = n2d;

  domain_cols_.assign(n_domains_, {});
  buckets_.assign(n_domains_, std::vector<std::vector<std::vector<int>>>(h_));
  for (int d = 0; d < n_domains_; ++d) {
    for (int l = 0; l < h_; ++l) buckets_[d][l].assign(k_[l] + 1, {});
  }
  for (int c = 0; c < f2.size(); ++c) {
    const int d = f2.domain[c];
    domain_cols_[d].push_back(c);
    for (int l = 0; l < h_; ++l) {
      const int w = f2.keys(c, l);
      if (!is_missing(w)) buckets_[d][l][w].push_back(c);
    }
  }

  // Starting parameters: smoothed empirical frequencies, nu = 0.9 unless fixed.
  params_.nu = hyper_.fixed_nu ? *hyper_.fixed_nu : Vector::Constant(h_, 0.9);
  if (params_.nu.size() != h_) throw std::invalid_argument("fixed_nu has the wrong length");
  params_.theta.resize(h_);
  std::vector<int> mode(h_, 1);
  for (int l = 0; l < h_; ++l) {
    Vector counts = Vector::Constant(k_[l], hyper_.theta_alpha);
    for (const RecordFile* f : {&f1, &f2}) {
      for (int i = 0; i < f->size(); ++i) {
        const int w = f->keys(i, l);
        if (!is_missing(w)) counts(w - 1) += 1.0;
      }
    }
    Eigen::Index arg = 0;
    counts.maxCoeff(&arg);
    mode[l] = static_cast<int>(arg) + 1;
    params_.theta[l] = counts / counts.sum();
  }
  rebuild_theta_cdf();

  row_to_col_.assign(f1.size(), -1);
  col_to_row_.assign(f2.size(), -1);
  linked_rows_.reset(n_domains_, f1.size());
  free_rows_.reset(n_domains_, f1.size());
  free_cols_.reset(n_domains_, f2.size());
  links_per_domain_.assign(n_domains_, 0);
  for (int r = 0; r < f1.size(); ++r) free_rows_.add(f1.domain[r], r);
  for (int c = 0; c < f2.size(); ++c) free_cols_.add(f2.domain[c], c);

  true1_ = f1.keys;
  true2_ = f2.keys;
  for (int l = 0; l < h_; ++l) {
    for (int r = 0; r < f1.size(); ++r) {
      if (is_missing(true1_(r, l))) true1_(r, l) = mode[l];
    }
    for (int c = 0; c < f2.size(); ++c) {
      if (is_missing(true2_(c, l))) true2_(c, l) = mode[l];
    }
  }
  initialise_links();
  gibbs_true_values(rng);
}

void LinkageSampler::initialise_links() {
  // Greedy start: each row takes the free column with most agreeing fields.
  std::vector<int> agree(f2_.size(), 0);
  std::vector<int> touched;
  for (int r = 0; r < f1_.size(); ++r) {
    const int d = f1_.domain[r];
    int present = 0;
    for (int l = 0; l < h_; ++l) {
      const int w = f1_.keys(r, l);
      if (is_missing(w)) continue;
      ++present;
      for (int c : buckets_[d][l][w]) {
        if (agree[c]++ == 0) touched.push_back(c);
      }
    }
    int best = -1, best_score = 0;
    for (int c : touched) {
      if (col_to_row_[c] >= 0) continue;
      if (agree[c] > best_score || (agree[c] == best_score && c < best)) {
        best = c;
        best_score = agree[c];
      }
    }
    for (int c : touched) agree[c] = 0;
    touched.clear();
    if (options_.constrained_subset) {
      if (best < 0) {
        for (int c : domain_cols_[d]) {
          if (col_to_row_[c] < 0) {
            best = c;
            break;
          }
        }
      }
      do_link(r, best);
    } else if (best >= 0 && best_score == present && log_prior_links(n_links_ + 1) > kNegInf) {
      do_link(r, best);
    }
  }
  for (int r = 0; r < f1_.size(); ++r) {
    const int c = row_to_col_[r];
    if (c >= 0) true2_.row(c) = true1_.row(r);
  }
}

void LinkageSampler::set_params(HitMissParams params) {
  params_ = std::move(params);
  rebuild_theta_cdf();
}

void LinkageSampler::set_links(const std::vector<int>& row_to_col, Rng& rng) {
  if (static_cast<int>(row_to_col.size()) != n1()) throw std::invalid_argument("set_links: wrong length");
  for (int r = 0; r < n1(); ++r) {
    if (row_to_col_[r] >= 0) do_unlink(r);
  }
  for (int r = 0; r < n1(); ++r) {
    const int c = row_to_col[r];
    if (c < 0) {
      if (options_.constrained_subset) throw std::invalid_argument("set_links: subset sampler needs every row linked");
      continue;
    }
    if (c >= n2() || col_to_row_[c] >= 0 || f1_.domain[r] != f2_.domain[c]) {
      throw std::invalid_argument("set_links: mapping is not one-to-one within domains");
    }
    do_link(r, c);
  }
  gibbs_true_values(rng);
}

void LinkageSampler::rebuild_theta_cdf() {
  theta_cdf_.resize(h_);
  for (int l = 0; l < h_; ++l) {
    const Vector& t = params_.theta[l];
    theta_cdf_[l].resize(t.size());
    double acc = 0.0;
    for (Eigen::Index s = 0; s < t.size(); ++s) {
      acc += t(s);
      theta_cdf_[l][s] = acc;
    }
  }
}

// ---------------------------------------------------------------------------
// State mutation
// ---------------------------------------------------------------------------

void LinkageSampler::mark_dirty(int row) {
  if (recording_ && !dirty_flag_[row]) {
    dirty_flag_[row] = 1;
    dirty_.push_back(row);
  }
}

void LinkageSampler::do_link(int row, int col) {
  const int d = f1_.domain[row];
  row_to_col_[row] = col;
  col_to_row_[col] = row;
  free_rows_.remove(d, row);
  free_cols_.remove(d, col);
  linked_rows_.add(d, row);
  ++links_per_domain_[d];
  ++n_links_;
  mark_dirty(row);
}

void LinkageSampler::do_unlink(int row) {
  const int d = f1_.domain[row];
  const int col = row_to_col_[row];
  row_to_col_[row] = -1;
  col_to_row_[col] = -1;
  linked_rows_.remove(d, row);
  free_rows_.add(d, row);
  free_cols_.add(d, col);
  --links_per_domain_[d];
  --n_links_;
  mark_dirty(row);
}

MatchMatrix LinkageSampler::current() const {
  MatchMatrix out(f1_.domain, f2_.domain);
  for (int r = 0; r < n1(); ++r) {
    if (row_to_col_[r] >= 0) out.link(r, row_to_col_[r]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood pieces
// ---------------------------------------------------------------------------

double LinkageSampler::log_single(int file, int record) const {
  const RecordFile& f = file == 1 ? f1_ : f2_;
  double out = 0.0;
  for (int l = 0; l < h_; ++l) {
    const int w = f.keys(record, l);
    if (is_missing(w)) continue;
    const double nu = params_.nu(l);
    out += std::log(nu * params_.theta[l](w - 1) + (1.0 - nu) / k_[l]);
  }
  return out;
}

double LinkageSampler::log_pair(int row, int col) const {
  double out = 0.0;
  for (int l = 0; l < h_; ++l) {
    const int a = f1_.keys(row, l);
    const int b = f2_.keys(col, l);
    const double nu = params_.nu(l);
    const double c = (1.0 - nu) / k_[l];
    const Vector& th = params_.theta[l];
    if (is_missing(a) && is_missing(b)) continue;
    if (is_missing(a) || is_missing(b)) {
      const int w = is_missing(a) ? b : a;
      out += std::log(nu * th(w - 1) + c);
      continue;
    }
    double v = nu * c * (th(a - 1) + th(b - 1)) + c * c;
    if (a == b) v += nu * nu * th(a - 1);
    out += std::log(v);
  }
  return out;
}

double LinkageSampler::log_prior_links(int t) const {
  if (t < 0 || t >= prior_.p_t.size() || !(prior_.p_t(t) > 0.0)) return kNegInf;
  return std::log(prior_.p_t(t)) - log_counts_(t);
}

// ---------------------------------------------------------------------------
// True-value draws
// ---------------------------------------------------------------------------

int LinkageSampler::draw_from_theta_excluding(int field, int ex_a, int ex_b, Rng& rng) const {
  const auto& cdf = theta_cdf_[field];
  const double top = cdf.back();
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double u = rng.uniform() * top;
    const int s = static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) + 1;
    const int v = std::min(s, k_[field]);
    if (v != ex_a && v != ex_b) return v;
  }
  std::vector<double> w(k_[field]);
  for (int s = 1; s <= k_[field]; ++s) w[s - 1] = (s == ex_a || s == ex_b) ? 0.0 : params_.theta[field](s - 1);
  return static_cast<int>(rng.categorical(w)) + 1;
}

int LinkageSampler::draw_true_value(int field, int obs_a, int obs_b, Rng& rng) const {
  const double nu = params_.nu(field);
  const double c = (1.0 - nu) / k_[field];
  const Vector& th = params_.theta[field];
  if (is_missing(obs_a)) std::swap(obs_a, obs_b);
  if (is_missing(obs_a)) return draw_from_theta_excluding(field, kMissing, kMissing, rng);
  const int present = is_missing(obs_b) ? 1 : 2;
  const int cand_b = (present == 2 && obs_b != obs_a) ? obs_b : kMissing;

  auto mass = [&](int s) {
    double m = th(s - 1) * (nu * (obs_a == s) + c);
    if (present == 2) m *= nu * (obs_b == s) + c;
    return m;
  };
  const double ma = mass(obs_a);
  const double mb = is_missing(cand_b) ? 0.0 : mass(cand_b);
  const double rest_theta = std::max(0.0, 1.0 - th(obs_a - 1) - (is_missing(cand_b) ? 0.0 : th(cand_b - 1)));
  const double rest = rest_theta * (present == 2 ? c * c : c);
  const double u = rng.uniform() * (ma + mb + rest);
  if (u < ma) return obs_a;
  if (u < ma + mb) return cand_b;
  return draw_from_theta_excluding(field, obs_a, cand_b, rng);
}

void LinkageSampler::redraw_pair(int row, int col, Rng& rng) {
  for (int l = 0; l < h_; ++l) {
    const int v = draw_true_value(l, f1_.keys(row, l), f2_.keys(col, l), rng);
    true1_(row, l) = v;
    true2_(col, l) = v;
  }
}

void LinkageSampler::redraw_single(int file, int record, Rng& rng) {
  const RecordFile& f = file == 1 ? f1_ : f2_;
  KeyMatrix& t = file == 1 ? true1_ : true2_;
  for (int l = 0; l < h_; ++l) t(record, l) = draw_true_value(l, f.keys(record, l), kMissing, rng);
}

void LinkageSampler::gibbs_true_values(Rng& rng) {
  for (int r = 0; r < n1(); ++r) {
    if (row_to_col_[r] >= 0) {
      redraw_pair(r, row_to_col_[r], rng);
    } else {
      redraw_single(1, r, rng);
    }
  }
  for (int c = 0; c < n2(); ++c) {
    if (col_to_row_[c] < 0) redraw_single(2, c, rng);
  }
}

void LinkageSampler::gibbs_nu(Rng& rng) {
  if (hyper_.fixed_nu) return;
  for (int l = 0; l < h_; ++l) {
    const double nu = params_.nu(l);
    const double c = (1.0 - nu) / k_[l];
    const double p_hit = nu / (nu + c);
    double hits = 0.0, misses = 0.0;
    auto tally = [&](int obs, int truth) {
      if (is_missing(obs)) return;
      if (obs == truth && rng.uniform() < p_hit) {
        hits += 1.0;
      } else {
        misses += 1.0;
      }
    };
    for (int r = 0; r < n1(); ++r) tally(f1_.keys(r, l), true1_(r, l));
    for (int c2 = 0; c2 < n2(); ++c2) tally(f2_.keys(c2, l), true2_(c2, l));
    params_.nu(l) = std::clamp(rng.beta(hyper_.nu_a + hits, hyper_.nu_b + misses), 1e-12, 1.0 - 1e-12);
  }
}

void LinkageSampler::gibbs_theta(Rng& rng) {
  for (int l = 0; l < h_; ++l) {
    Vector alpha = Vector::Constant(k_[l], hyper_.theta_alpha);
    for (int r = 0; r < n1(); ++r) alpha(true1_(r, l) - 1) += 1.0;
    for (int c = 0; c < n2(); ++c) {
      if (col_to_row_[c] < 0) alpha(true2_(c, l) - 1) += 1.0;
    }
    Vector t = rng.dirichlet(alpha);
    t = t.cwiseMax(1e-300);
    params_.theta[l] = t / t.sum();
  }
  rebuild_theta_cdf();
}

// ---------------------------------------------------------------------------
// C moves
// ---------------------------------------------------------------------------

int LinkageSampler::propose_column(int row, Rng& rng) const {
  const int d = f1_.domain[row];
  if (rng.uniform() < options_.weights.uniform_share) {
    const int u = free_cols_.size(d);
    return u == 0 ? -1 : free_cols_.at(d, static_cast<int>(rng.index(u)));
  }
  const int l = static_cast<int>(rng.index(h_));
  const int w = f1_.keys(row, l);
  if (!is_missing(w) && !buckets_[d][l][w].empty()) {
    const auto& b = buckets_[d][l][w];
    return b[rng.index(b.size())];
  }
  const auto& all = domain_cols_[d];
  return all.empty() ? -1 : all[rng.index(all.size())];
}

double LinkageSampler::column_proposal_prob(int row, int col, int free_cols) const {
  const int d = f1_.domain[row];
  const double rho = options_.weights.uniform_share;
  double q = free_cols > 0 ? rho / free_cols : 0.0;
  double informed = 0.0;
  for (int l = 0; l < h_; ++l) {
    const int w = f1_.keys(row, l);
    if (!is_missing(w) && !buckets_[d][l][w].empty()) {
      if (f2_.keys(col, l) == w) informed += 1.0 / static_cast<double>(buckets_[d][l][w].size());
    } else {
      informed += 1.0 / static_cast<double>(domain_cols_[d].size());
    }
  }
  return q + (1.0 - rho) * informed / h_;
}

int LinkageSampler::random_free_row(Rng& rng) const {
  int idx = static_cast<int>(rng.index(free_rows_.total()));
  for (int d = 0; d < n_domains_; ++d) {
    if (idx < free_rows_.size(d)) return free_rows_.at(d, idx);
    idx -= free_rows_.size(d);
  }
  return -1;
}

namespace {
int random_linked_row(const std::vector<int>& links_per_domain, int total, Rng& rng, auto&& at) {
  int idx = static_cast<int>(rng.index(total));
  for (std::size_t d = 0; d < links_per_domain.size(); ++d) {
    if (idx < links_per_domain[d]) return at(static_cast<int>(d), idx);
    idx -= links_per_domain[d];
  }
  return -1;
}
}  // namespace

bool LinkageSampler::move_add(Rng& rng, const PairScorer* scorer) {
  const int free_rows = free_rows_.total();
  if (free_rows == 0) return false;
  const int row = random_free_row(rng);
  const int d = f1_.domain[row];
  const int u = free_cols_.size(d);
  if (u == 0) return false;
  const int col = propose_column(row, rng);
  if (col < 0 || col_to_row_[col] >= 0) return false;
  const double prior = log_prior_links(n_links_ + 1) - log_prior_links(n_links_);
  if (!std::isfinite(prior)) return false;
  const MoveWeights& w = options_.weights;
  double log_alpha = log_pair(row, col) - log_single(1, row) - log_single(2, col) + prior;
  if (scorer) log_alpha += scorer->log_weight(row, col);
  log_alpha += std::log(w.remove / (n_links_ + 1)) -
               std::log(w.add * column_proposal_prob(row, col, u) / free_rows);
  if (std::log(rng.uniform_pos()) >= log_alpha) return false;
  do_link(row, col);
  redraw_pair(row, col, rng);
  return true;
}

bool LinkageSampler::move_remove(Rng& rng, const PairScorer* scorer) {
  if (n_links_ == 0) return false;
  const int row = random_linked_row(links_per_domain_, n_links_, rng,
                                    [&](int d, int i) { return linked_rows_.at(d, i); });
  const int col = row_to_col_[row];
  const int d = f1_.domain[row];
  const double prior = log_prior_links(n_links_ - 1) - log_prior_links(n_links_);
  if (!std::isfinite(prior)) return false;
  const MoveWeights& w = options_.weights;
  double log_alpha = log_single(1, row) + log_single(2, col) - log_pair(row, col) + prior;
  if (scorer) log_alpha -= scorer->log_weight(row, col);
  const double q_rev = w.add * column_proposal_prob(row, col, free_cols_.size(d) + 1) / (free_rows_.total() + 1);
  log_alpha += std::log(q_rev) - std::log(w.remove / n_links_);
  if (std::log(rng.uniform_pos()) >= log_alpha) return false;
  do_unlink(row);
  redraw_single(1, row, rng);
  redraw_single(2, col, rng);
  return true;
}

bool LinkageSampler::move_swap(Rng& rng, const PairScorer* scorer) {
  if (n_links_ < 2) return false;
  const int r1 = random_linked_row(links_per_domain_, n_links_, rng,
                                   [&](int d, int i) { return linked_rows_.at(d, i); });
  const int d = f1_.domain[r1];
  const int td = linked_rows_.size(d);
  if (td < 2) return false;
  int r2 = r1;
  while (r2 == r1) r2 = linked_rows_.at(d, static_cast<int>(rng.index(td)));
  const int c1 = row_to_col_[r1];
  const int c2 = row_to_col_[r2];
  double log_alpha = log_pair(r1, c2) + log_pair(r2, c1) - log_pair(r1, c1) - log_pair(r2, c2);
  if (scorer) {
    log_alpha += scorer->log_weight(r1, c2) + scorer->log_weight(r2, c1) - scorer->log_weight(r1, c1) -
                 scorer->log_weight(r2, c2);
  }
  if (std::log(rng.uniform_pos()) >= log_alpha) return false;
  do_unlink(r1);
  do_unlink(r2);
  do_link(r1, c2);
  do_link(r2, c1);
  redraw_pair(r1, c2, rng);
  redraw_pair(r2, c1, rng);
  return true;
}

bool LinkageSampler::move_reassign(Rng& rng, const PairScorer* scorer) {
  if (n_links_ == 0) return false;
  const int row = random_linked_row(links_per_domain_, n_links_, rng,
                                    [&](int d, int i) { return linked_rows_.at(d, i); });
  const int d = f1_.domain[row];
  const int u = free_cols_.size(d);
  if (u == 0) return false;
  const int old_col = row_to_col_[row];
  const int new_col = propose_column(row, rng);
  if (new_col < 0 || col_to_row_[new_col] >= 0) return false;
  double log_alpha = log_pair(row, new_col) + log_single(2, old_col) - log_pair(row, old_col) - log_single(2, new_col);
  if (scorer) log_alpha += scorer->log_weight(row, new_col) - scorer->log_weight(row, old_col);
  log_alpha += std::log(column_proposal_prob(row, old_col, u)) - std::log(column_proposal_prob(row, new_col, u));
  if (std::log(rng.uniform_pos()) >= log_alpha) return false;
  do_unlink(row);
  do_link(row, new_col);
  redraw_pair(row, new_col, rng);
  redraw_single(2, old_col, rng);
  return true;
}

bool LinkageSampler::propose_move(Rng& rng, const PairScorer* scorer) {
  ++proposals_;
  bool ok = false;
  const MoveWeights& w = options_.weights;
  const double u = rng.uniform();
  if (options_.constrained_subset) {
    ok = u < w.constrained_swap ? move_swap(rng, scorer) : move_reassign(rng, scorer);
  } else {
    const double total = w.add + w.remove + w.swap;
    if (u * total < w.add) {
      ok = move_add(rng, scorer);
    } else if (u * total < w.add + w.remove) {
      ok = move_remove(rng, scorer);
    } else {
      ok = move_swap(rng, scorer);
    }
  }
  if (ok) ++accepted_;
  return ok;
}

void LinkageSampler::sweep(Rng& rng, const PairScorer* scorer) {
  const int moves = options_.moves_per_sweep > 0 ? options_.moves_per_sweep : std::max(1, n1());
  for (int i = 0; i < moves; ++i) propose_move(rng, scorer);
  gibbs_true_values(rng);
  gibbs_nu(rng);
  gibbs_theta(rng);
}

// ---------------------------------------------------------------------------
// Draw bookkeeping
// ---------------------------------------------------------------------------

void LinkageSampler::begin_recording() {
  recording_ = true;
  n_recorded_ = 0;
  snapshot_ = row_to_col_;
  since_.assign(n1(), 0);
  dirty_flag_.assign(n1(), 0);
  dirty_.clear();
  link_mass_.clear();
  draws_.clear();
  nu_trace_.clear();
  theta_trace_.clear();
  t_trace_.clear();
}

void LinkageSampler::record_draw() {
  if (!recording_) begin_recording();
  for (int r : dirty_) {
    dirty_flag_[r] = 0;
    if (snapshot_[r] == row_to_col_[r]) continue;
    if (snapshot_[r] >= 0) link_mass_[Link{r, snapshot_[r]}] += n_recorded_ - since_[r];
    snapshot_[r] = row_to_col_[r];
    since_[r] = n_recorded_;
  }
  dirty_.clear();
  ++n_recorded_;
  if (options_.store_draws) draws_.push_back(row_to_col_);
  nu_trace_.push_back(params_.nu);
  t_trace_.push_back(n_links_);
  if (options_.store_theta_trace) {
    Vector all(std::accumulate(k_.begin(), k_.end(), 0));
    Eigen::Index off = 0;
    for (int l = 0; l < h_; ++l) {
      all.segment(off, k_[l]) = params_.theta[l];
      off += k_[l];
    }
    theta_trace_.push_back(std::move(all));
  }
}

LinkagePosterior LinkageSampler::finish() const {
  LinkagePosterior out;
  out.n1 = n1();
  out.n2 = n2();
  out.domain1 = f1_.domain;
  out.domain2 = f2_.domain;
  out.n_recorded = n_recorded_;
  out.acceptance_rate = acceptance_rate();
  if (n_recorded_ > 0) {
    auto mass = link_mass_;
    // Pending changes after the last draw are not part of any draw.
    for (int r = 0; r < n1(); ++r) {
      if (snapshot_[r] >= 0) mass[Link{r, snapshot_[r]}] += n_recorded_ - since_[r];
    }
    for (const auto& [link, m] : mass) {
      if (m > 0) out.pair_probs.push_back({link, m / n_recorded_});
    }
    std::sort(out.pair_probs.begin(), out.pair_probs.end(),
              [](const ScoredLink& a, const ScoredLink& b) { return a.link < b.link; });
  }
  out.draws = draws_;
  out.t_trace = t_trace_;
  out.nu_trace.resize(static_cast<Eigen::Index>(nu_trace_.size()), h_);
  for (std::size_t i = 0; i < nu_trace_.size(); ++i) out.nu_trace.row(static_cast<Eigen::Index>(i)) = nu_trace_[i].transpose();
  if (!theta_trace_.empty()) {
    out.theta_trace.resize(static_cast<Eigen::Index>(theta_trace_.size()), theta_trace_.front().size());
    for (std::size_t i = 0; i < theta_trace_.size(); ++i) {
      out.theta_trace.row(static_cast<Eigen::Index>(i)) = theta_trace_[i].transpose();
    }
  }
  return out;
}

LinkagePosterior run_mcmc(const RecordFile& f1, const RecordFile& f2, const std::vector<int>& cardinalities,
                          const CPrior& prior, const LinkageHyper& hyper, const McmcOptions& options) {
  if (options.n_draws < 1 || options.n_burn < 0 || options.thin < 1) {
    throw std::invalid_argument("run_mcmc: need n_draws >= 1, n_burn >= 0, thin >= 1");
  }
  Rng rng(options.seed);
  LinkageSampler sampler(f1, f2, cardinalities, prior, hyper, options, rng);
  for (int i = 0; i < options.n_burn; ++i) sampler.sweep(rng);
  sampler.begin_recording();
  for (int i = 0; i < options.n_draws; ++i) {
    for (int t = 0; t < options.thin; ++t) sampler.sweep(rng);
    sampler.record_draw();
  }
  return sampler.finish();
}

MatchMatrix point_estimate(const LinkagePosterior& posterior, double threshold) {
  return decide_links(posterior.pair_probs, posterior.domain1, posterior.domain2, threshold);
}

}  // namespace linksae
