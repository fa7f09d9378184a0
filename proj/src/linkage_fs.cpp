#include "linksae/linkage_fs.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace linksae {

namespace {

std::vector<std::vector<int>> group_by_domain(const RecordFile& f, int n_domains) {
  std::vector<std::vector<int>> out(n_domains);
  for (int i = 0; i < f.size(); ++i) out[f.domain[i]].push_back(i);
  return out;
}

double log_sum_exp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

double clamp_prob(double p) { return std::clamp(p, kFsClamp, 1.0 - kFsClamp); }

}  // namespace

std::vector<std::pair<std::uint32_t, double>> ComparisonSet::pattern_counts() const {
  std::map<std::uint32_t, double> counts;
  for (const auto& c : pairs) counts[c.pattern] += 1.0;
  return {counts.begin(), counts.end()};
}

ComparisonSet build_comparisons(const RecordFile& f1, const RecordFile& f2, std::span<const int> key_fields) {
  std::vector<int> fields(key_fields.begin(), key_fields.end());
  if (fields.empty()) {
    fields.resize(f1.n_keys());
    std::iota(fields.begin(), fields.end(), 0);
  }
  if (fields.size() > 32) throw std::invalid_argument("build_comparisons: at most 32 key fields");
  for (int l : fields) {
    if (l < 0 || l >= f1.n_keys() || l >= f2.n_keys()) {
      throw std::invalid_argument("build_comparisons: key field index out of range");
    }
  }
  const int n_domains = std::max(count_domains(f1.domain, f2.domain), std::max(f1.n_domains, f2.n_domains));
  const auto blocks1 = group_by_domain(f1, n_domains);
  const auto blocks2 = group_by_domain(f2, n_domains);

  ComparisonSet out;
  out.n_fields = static_cast<int>(fields.size());
  std::size_t total = 0;
  for (int d = 0; d < n_domains; ++d) total += blocks1[d].size() * blocks2[d].size();
  out.pairs.reserve(total);
  for (int d = 0; d < n_domains; ++d) {
    for (int j : blocks1[d]) {
      for (int jp : blocks2[d]) {
        std::uint32_t pattern = 0;
        for (std::size_t l = 0; l < fields.size(); ++l) {
          const int a = f1.keys(j, fields[l]);
          const int b = f2.keys(jp, fields[l]);
          if (!is_missing(a) && a == b) pattern |= (1u << l);
        }
        out.pairs.push_back({j, jp, pattern});
      }
    }
  }
  return out;
}

FsModel default_fs_init(int n_fields, int n1, int n2, std::size_t n_pairs) {
  FsModel m;
  m.m = Vector::Constant(n_fields, 0.9);
  m.u = Vector::Constant(n_fields, 0.1);
  m.zeta = n_pairs == 0 ? 0.5 : clamp_prob(static_cast<double>(std::min(n1, n2)) / static_cast<double>(n_pairs));
  return m;
}

FsModel fit_em(std::span<const std::pair<std::uint32_t, double>> counts, FsModel model, double tol, int max_iter) {
  if (counts.empty()) throw std::invalid_argument("fit_em: no comparisons");
  if (!(tol > 0.0)) throw std::invalid_argument("fit_em: tol must be positive");
  const auto h = model.m.size();
  model.degenerate = counts.size() == 1;
  model.loglik_trace.clear();
  model.converged = false;
  model.zeta = clamp_prob(model.zeta);
  model.m = model.m.unaryExpr(&clamp_prob);
  model.u = model.u.unaryExpr(&clamp_prob);

  for (int iter = 0; iter < max_iter; ++iter) {
    double ll = 0.0, total = 0.0, match_mass = 0.0;
    Vector m_num = Vector::Zero(h), u_num = Vector::Zero(h);
    double unmatch_mass = 0.0;
    for (const auto& [pattern, c] : counts) {
      double lm = std::log(model.zeta), lu = std::log1p(-model.zeta);
      for (Eigen::Index l = 0; l < h; ++l) {
        const bool q = (pattern >> l) & 1u;
        lm += q ? std::log(model.m(l)) : std::log1p(-model.m(l));
        lu += q ? std::log(model.u(l)) : std::log1p(-model.u(l));
      }
      const double lse = log_sum_exp(lm, lu);
      const double g = std::exp(lm - lse);
      ll += c * lse;
      total += c;
      match_mass += c * g;
      unmatch_mass += c * (1.0 - g);
      for (Eigen::Index l = 0; l < h; ++l) {
        if ((pattern >> l) & 1u) {
          m_num(l) += c * g;
          u_num(l) += c * (1.0 - g);
        }
      }
    }
    model.loglik_trace.push_back(ll);
    model.iterations = iter + 1;
    if (iter > 0) {
      const double prev = model.loglik_trace[model.loglik_trace.size() - 2];
      if (std::abs(ll - prev) <= tol * std::max(std::abs(prev), 1e-300)) {
        model.converged = true;
        break;
      }
    }
    model.zeta = clamp_prob(match_mass / total);
    for (Eigen::Index l = 0; l < h; ++l) {
      model.m(l) = clamp_prob(match_mass > 0 ? m_num(l) / match_mass : kFsClamp);
      model.u(l) = clamp_prob(unmatch_mass > 0 ? u_num(l) / unmatch_mass : kFsClamp);
    }
  }
  return model;
}

FsModel fit_em(const ComparisonSet& comparisons, FsModel init, double tol, int max_iter) {
  const auto counts = comparisons.pattern_counts();
  return fit_em(std::span<const std::pair<std::uint32_t, double>>(counts), std::move(init), tol, max_iter);
}

double log_likelihood_ratio(std::uint32_t pattern, const FsModel& model) {
  double out = 0.0;
  for (Eigen::Index l = 0; l < model.m.size(); ++l) {
    if ((pattern >> l) & 1u) {
      out += std::log(model.m(l)) - std::log(model.u(l));
    } else {
      out += std::log1p(-model.m(l)) - std::log1p(-model.u(l));
    }
  }
  return out;
}

double posterior_match_prob_log(double log_psi, double zeta) {
  // zeta psi / (1 - zeta + zeta psi) = 1 / (1 + exp(log(1-zeta) - log zeta - log psi))
  const double z = std::log1p(-zeta) - std::log(zeta) - log_psi;
  return z > 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

std::vector<ScoredLink> score_pairs(const ComparisonSet& comparisons, const FsModel& model, double min_score) {
  std::map<std::uint32_t, double> cache;
  std::vector<ScoredLink> out;
  for (const auto& c : comparisons.pairs) {
    auto it = cache.find(c.pattern);
    if (it == cache.end()) {
      it = cache.emplace(c.pattern, posterior_match_prob_log(log_likelihood_ratio(c.pattern, model), model.zeta)).first;
    }
    if (it->second >= min_score) out.push_back({{c.row, c.col}, it->second});
  }
  return out;
}

MatchMatrix decide_links(std::vector<ScoredLink> scored, const std::vector<int>& domain1,
                         const std::vector<int>& domain2, double threshold) {
  std::erase_if(scored, [&](const ScoredLink& s) { return s.score < threshold; });
  std::sort(scored.begin(), scored.end(), [](const ScoredLink& a, const ScoredLink& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.link < b.link;
  });
  MatchMatrix out(domain1, domain2);
  for (const auto& s : scored) {
    if (out.can_link(s.link.row, s.link.col)) out.link(s.link.row, s.link.col);
  }
  return out;
}

FsRun run_fellegi_sunter(const RecordFile& f1, const RecordFile& f2, const FsRunOptions& options) {
  const ComparisonSet comparisons = build_comparisons(f1, f2, options.key_fields);
  if (comparisons.pairs.empty()) throw std::invalid_argument("run_fellegi_sunter: no within-domain pairs");
  FsModel init = default_fs_init(comparisons.n_fields, f1.size(), f2.size(), comparisons.pairs.size());
  FsModel model = fit_em(comparisons, std::move(init), options.tol, options.max_iter);
  auto scored = score_pairs(comparisons, model, options.threshold);
  MatchMatrix matches = decide_links(scored, f1.domain, f2.domain, options.threshold);
  std::vector<ScoredLink> declared;
  for (const auto& s : scored) {
    if (matches.contains(s.link.row, s.link.col)) declared.push_back(s);
  }
  std::sort(declared.begin(), declared.end(), [](const auto& a, const auto& b) { return a.link < b.link; });
  return {std::move(model), std::move(matches), std::move(declared), comparisons.pairs.size()};
}

}  // namespace linksae
