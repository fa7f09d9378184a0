#include "linksae/config.hpp"

#include "linksae/json_util.hpp"

#include <charconv>
#include <fstream>

namespace linksae {

using nlohmann::json;

namespace {

const char* estimator_key(Estimator e) {
  switch (e) {
    case Estimator::A: return "A";
    case Estimator::B: return "B";
    case Estimator::C: return "C";
    case Estimator::D: return "D";
    case Estimator::AStar: return "A_star";
    case Estimator::CStar: return "C_star";
    case Estimator::E: return "E";
    case Estimator::F: return "F";
    case Estimator::SampleMean: return "sample_mean";
  }
  return "?";
}

std::uint64_t seed_from(const json& v) {
  if (!v.is_number_unsigned()) throw ConfigError("seed must be an unsigned 64-bit integer");
  return v.get<std::uint64_t>();
}

void parse_population(const json& j, PopulationSpec& p) {
  require_known_keys(j,
                     {"domain_sizes", "keys", "unique_keys", "beta0", "beta1", "sigma_u", "sigma_e", "income_log_mean",
                      "income_log_sd", "domain_log_mean_sd", "typo_prob", "missing_prob"},
                     "population");
  p.domain_sizes = get_or(j, "domain_sizes", p.domain_sizes);
  if (j.contains("keys")) {
    p.keys.clear();
    for (const json& k : j.at("keys")) {
      require_known_keys(k, {"name", "cardinality"}, "population.keys");
      p.keys.push_back({get_or<std::string>(k, "name", ""), get_or(k, "cardinality", 0), true});
    }
  }
  p.unique_keys = get_or(j, "unique_keys", p.unique_keys);
  p.beta0 = get_or(j, "beta0", p.beta0);
  p.beta1 = get_or(j, "beta1", p.beta1);
  p.sigma_u = get_or(j, "sigma_u", p.sigma_u);
  p.sigma_e = get_or(j, "sigma_e", p.sigma_e);
  p.income_log_mean = get_or(j, "income_log_mean", p.income_log_mean);
  p.income_log_sd = get_or(j, "income_log_sd", p.income_log_sd);
  p.domain_log_mean_sd = get_or(j, "domain_log_mean_sd", p.domain_log_mean_sd);
  p.typo_prob = get_or(j, "typo_prob", p.typo_prob);
  p.missing_prob = get_or(j, "missing_prob", p.missing_prob);
}

void parse_sae_prior(const json& j, SaePrior& p) {
  require_known_keys(j, {"a_e", "b_e", "sigma_u_prior", "upper", "a_u", "b_u"}, "sae_prior");
  p.a_e = get_or(j, "a_e", p.a_e);
  p.b_e = get_or(j, "b_e", p.b_e);
  const std::string kind = get_or<std::string>(j, "sigma_u_prior", "gelman");
  if (kind == "gelman") {
    p.sigma_u_prior = SigmaUPrior::Gelman;
  } else if (kind == "inv_gamma") {
    p.sigma_u_prior = SigmaUPrior::InvGamma;
  } else {
    throw ConfigError("sae_prior.sigma_u_prior must be 'gelman' or 'inv_gamma'");
  }
  p.upper = get_or(j, "upper", p.upper);
  p.a_u = get_or(j, "a_u", p.a_u);
  p.b_u = get_or(j, "b_u", p.b_u);
  if (p.a_e <= 0 || p.b_e <= 0 || p.a_u <= 0 || p.b_u <= 0 || p.upper < 0) {
    throw ConfigError("sae_prior: hyperparameters must be positive");
  }
}

void require_positive(int v, const char* name) {
  if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  require_known_keys(j,
                     {"seed", "output_dir", "threads", "population", "simulation", "estimators", "bayes",
                      "linkage_prior", "sae_prior"},
                     "config");
  RunConfig c;
  if (j.contains("seed")) c.seed = seed_from(j.at("seed"));
  if (j.contains("output_dir")) c.output_dir = get_or<std::string>(j, "output_dir", "");
  HarnessOptions& h = c.harness;
  h.threads = get_or(j, "threads", h.threads);
  if (h.threads < 0) throw ConfigError("threads must be >= 0");
  if (j.contains("population")) parse_population(j.at("population"), c.population);
  validate_spec(c.population);
  if (j.contains("simulation")) {
    const json& s = j.at("simulation");
    require_known_keys(s, {"replications", "n_sample", "fs_threshold"}, "simulation");
    h.replications = get_or(s, "replications", h.replications);
    h.n_sample = get_or(s, "n_sample", h.n_sample);
    h.fs_threshold = get_or(s, "fs_threshold", h.fs_threshold);
  }
  require_positive(h.replications, "simulation.replications");
  require_positive(h.n_sample, "simulation.n_sample");
  if (j.contains("estimators")) {
    const json& e = j.at("estimators");
    require_known_keys(e, {"A", "B", "C", "D", "A_star", "C_star", "E", "F", "sample_mean"}, "estimators");
    for (Estimator est : kAllEstimators) {
      h.estimators.set(est, get_or(e, estimator_key(est), h.estimators.enabled(est)));
    }
  }
  if (j.contains("bayes")) {
    const json& b = j.at("bayes");
    require_known_keys(b,
                       {"sae_burn", "sae_draws", "link_burn", "link_draws", "link_thin", "inner_sweeps",
                        "feedback_burn", "feedback_draws"},
                       "bayes");
    h.sae_burn = get_or(b, "sae_burn", h.sae_burn);
    h.sae_draws = get_or(b, "sae_draws", h.sae_draws);
    h.link_burn = get_or(b, "link_burn", h.link_burn);
    h.link_draws = get_or(b, "link_draws", h.link_draws);
    h.nonfeedback.thin = get_or(b, "link_thin", h.nonfeedback.thin);
    h.nonfeedback.inner_sweeps = get_or(b, "inner_sweeps", h.nonfeedback.inner_sweeps);
    h.feedback_burn = get_or(b, "feedback_burn", h.feedback_burn);
    h.feedback_draws = get_or(b, "feedback_draws", h.feedback_draws);
  }
  if (h.sae_burn < 0 || h.link_burn < 0 || h.feedback_burn < 0) throw ConfigError("bayes: burn-in must be >= 0");
  require_positive(h.sae_draws, "bayes.sae_draws");
  require_positive(h.link_draws, "bayes.link_draws");
  require_positive(h.nonfeedback.thin, "bayes.link_thin");
  require_positive(h.nonfeedback.inner_sweeps, "bayes.inner_sweeps");
  require_positive(h.feedback_draws, "bayes.feedback_draws");
  if (j.contains("linkage_prior")) {
    const json& l = j.at("linkage_prior");
    require_known_keys(l, {"nu_a", "nu_b", "theta_alpha"}, "linkage_prior");
    h.hyper.nu_a = get_or(l, "nu_a", h.hyper.nu_a);
    h.hyper.nu_b = get_or(l, "nu_b", h.hyper.nu_b);
    h.hyper.theta_alpha = get_or(l, "theta_alpha", h.hyper.theta_alpha);
    if (h.hyper.nu_a <= 0 || h.hyper.nu_b <= 0 || h.hyper.theta_alpha <= 0) {
      throw ConfigError("linkage_prior: hyperparameters must be positive");
    }
  }
  if (j.contains("sae_prior")) parse_sae_prior(j.at("sae_prior"), h.prior);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "': " + e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path.string() + "': " + e.what());
  }
}

json to_json(const RunConfig& c) {
  const PopulationSpec& p = c.population;
  const HarnessOptions& h = c.harness;
  json keys = json::array();
  for (const KeyField& k : p.keys) keys.push_back({{"name", k.name}, {"cardinality", k.cardinality}});
  json est = json::object();
  for (Estimator e : kAllEstimators) est[estimator_key(e)] = h.estimators.enabled(e);
  json j = {
      {"seed", c.seed},
      {"threads", h.threads},
      {"population",
       {{"domain_sizes", p.domain_sizes},
        {"keys", keys},
        {"unique_keys", p.unique_keys},
        {"beta0", p.beta0},
        {"beta1", p.beta1},
        {"sigma_u", p.sigma_u},
        {"sigma_e", p.sigma_e},
        {"income_log_mean", p.income_log_mean},
        {"income_log_sd", p.income_log_sd},
        {"domain_log_mean_sd", p.domain_log_mean_sd},
        {"typo_prob", p.typo_prob},
        {"missing_prob", p.missing_prob}}},
      {"simulation", {{"replications", h.replications}, {"n_sample", h.n_sample}, {"fs_threshold", h.fs_threshold}}},
      {"estimators", est},
      {"bayes",
       {{"sae_burn", h.sae_burn},
        {"sae_draws", h.sae_draws},
        {"link_burn", h.link_burn},
        {"link_draws", h.link_draws},
        {"link_thin", h.nonfeedback.thin},
        {"inner_sweeps", h.nonfeedback.inner_sweeps},
        {"feedback_burn", h.feedback_burn},
        {"feedback_draws", h.feedback_draws}}},
      {"linkage_prior", {{"nu_a", h.hyper.nu_a}, {"nu_b", h.hyper.nu_b}, {"theta_alpha", h.hyper.theta_alpha}}},
      {"sae_prior",
       {{"a_e", h.prior.a_e},
        {"b_e", h.prior.b_e},
        {"sigma_u_prior", h.prior.sigma_u_prior == SigmaUPrior::Gelman ? "gelman" : "inv_gamma"},
        {"upper", h.prior.upper},
        {"a_u", h.prior.a_u},
        {"b_u", h.prior.b_u}}},
  };
  if (c.output_dir) j["output_dir"] = *c.output_dir;
  return j;
}

std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError("seed '" + text + "' is not an unsigned 64-bit integer");
  }
  return v;
}

}  // namespace linksae
