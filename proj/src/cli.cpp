#include "linksae/cli.hpp"

#include "linksae/config.hpp"
#include "linksae/errors.hpp"
#include "linksae/linkage_bayes.hpp"
#include "linksae/linkage_fs.hpp"
#include "linksae/record_io.hpp"
#include "linksae/report.hpp"
#include "linksae/sae_bayes.hpp"
#include "linksae/sae_core.hpp"
#include "linksae/sae_linked.hpp"
#include "linksae/simharness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace linksae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "linksae 0.1.0";

struct Common {
  std::string out;
  std::string config;
  std::string seed;
  int threads = -1;
};

struct Context {
  std::string subcommand;
  std::vector<std::string> args;  // without the output directory
  RunConfig config;
  fs::path out_dir;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  if (!fs::is_regular_file(path)) throw IoError("input file '" + path + "' does not exist");
}

Context make_context(const std::string& sub, const Common& c, const std::vector<std::string>& args) {
  Context ctx;
  ctx.subcommand = sub;
  ctx.args = args;
  if (!c.config.empty()) {
    require_file(c.config, "config");
    ctx.config = load_run_config(c.config);
  }
  if (!c.seed.empty()) ctx.config.seed = parse_seed(c.seed);
  if (c.threads >= 0) ctx.config.harness.threads = c.threads;
  std::string dir = "linksae-out";
  if (ctx.config.output_dir) dir = *ctx.config.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) dir = env;
  if (!c.out.empty()) dir = c.out;
  ctx.out_dir = dir;
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec || !fs::is_directory(ctx.out_dir)) throw IoError("cannot create output directory '" + dir + "'");
  return ctx;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_manifest(const Context& ctx, const json& extra = json::object()) {
  json m = {{"tool", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"subcommand", ctx.subcommand},
            {"arguments", ctx.args},
            {"seed", ctx.config.seed},
            {"config", to_json(ctx.config)}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_json(ctx.out_dir / "manifest.json", m);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct LinkInputs {
  FileSchema schema;
  RecordPair pair;
};

LinkInputs read_inputs(const std::string& file1, const std::string& file2, const std::string& schema_path,
                       const std::string& keys) {
  require_file(file1, "file1");
  require_file(file2, "file2");
  require_file(schema_path, "schema");
  LinkInputs in;
  in.schema = read_schema(schema_path);
  if (!keys.empty()) in.schema = in.schema.select_keys(split_list(keys));
  in.pair = read_record_pair(file1, file2, in.schema);
  return in;
}

std::vector<int> cardinalities(const FileSchema& schema) {
  std::vector<int> out;
  for (const auto& k : schema.keys) out.push_back(k.field.cardinality);
  return out;
}

std::vector<int> row_map(const std::vector<ScoredLink>& links, int n1) {
  std::vector<int> out(n1, -1);
  for (const auto& l : links) out[l.link.row] = l.link.col;
  return out;
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Population table: domain, N_d, then one mean per covariate column.
struct PopulationTable {
  Vector size;
  Matrix xbar;  // D x (1 + p), leading intercept
};

PopulationTable read_population(const std::string& path, const DomainIndex& domains, int p) {
  require_file(path, "population");
  const CsvTable t = read_csv(path);
  if (static_cast<int>(t.header.size()) != 2 + p) {
    throw ConfigError("population file '" + path + "': expected domain, N_d and " + std::to_string(p) +
                      " covariate means");
  }
  PopulationTable out{Vector::Constant(domains.size(), -1.0), Matrix::Zero(domains.size(), 1 + p)};
  out.xbar.col(0).setOnes();
  for (const auto& row : t.rows) {
    if (!domains.contains(row[0])) continue;  // domain absent from both files
    const int d = domains.index(row[0]);
    try {
      out.size(d) = std::stod(row[1]);
      for (int j = 0; j < p; ++j) out.xbar(d, 1 + j) = std::stod(row[2 + j]);
    } catch (const std::exception&) {
      throw ConfigError("population file '" + path + "': non-numeric entry for domain " + row[0]);
    }
  }
  for (int d = 0; d < domains.size(); ++d) {
    if (out.size(d) < 0) throw ConfigError("population file '" + path + "' lacks domain " + domains.label(d));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct FsArgs {
  std::string file1, file2, schema, keys, truth;
  double threshold = 0.5;
  double tol = 1e-6;
  int max_iter = 1000;
};

void cmd_link_fs(const Context& ctx, const FsArgs& a) {
  const LinkInputs in = read_inputs(a.file1, a.file2, a.schema, a.keys);
  FsRunOptions opt;
  opt.threshold = a.threshold;
  opt.tol = a.tol;
  opt.max_iter = a.max_iter;
  const FsRun run = run_fellegi_sunter(in.pair.file1, in.pair.file2, opt);
  write_pair_list(ctx.out_dir / "pairs.csv", run.declared, in.pair.file1, in.pair.file2);
  json s = {{"iterations", run.model.iterations},
            {"converged", run.model.converged},
            {"degenerate", run.model.degenerate},
            {"m", vec_json(run.model.m)},
            {"u", vec_json(run.model.u)},
            {"zeta", run.model.zeta},
            {"final_loglik", run.model.loglik_trace.empty() ? 0.0 : run.model.loglik_trace.back()},
            {"comparisons", run.n_comparisons},
            {"declared_links", run.declared.size()},
            {"threshold", a.threshold}};
  if (!a.truth.empty()) {
    require_file(a.truth, "truth");
    const TruthDeck truth = read_truth_deck(a.truth, in.pair.file1, in.pair.file2);
    const LinkErrorRates r = link_error_rates(run.matches, truth);
    s["false_link_rate"] = r.false_link_rate;
    s["missed_link_rate"] = r.missed_link_rate;
  }
  write_json(ctx.out_dir / "fs_summary.json", s);
  write_manifest(ctx);
}

struct BayesLinkArgs {
  std::string file1, file2, schema, keys, truth;
  int burn = 5000, draws = 10000, thin = 1;
  bool subset = false;
  double min_prob = 0.01;
};

void write_traces(const fs::path& path, const LinkagePosterior& post, const FileSchema& schema) {
  std::ostringstream out;
  out << "draw,links";
  for (const auto& k : schema.keys) out << ",nu_" << k.field.name;
  out << '\n';
  for (int i = 0; i < post.nu_trace.rows(); ++i) {
    out << i + 1 << ',' << post.t_trace[i];
    for (Eigen::Index l = 0; l < post.nu_trace.cols(); ++l) out << ',' << format_number(post.nu_trace(i, l));
    out << '\n';
  }
  write_text(path, out.str());
}

void cmd_link_bayes(const Context& ctx, const BayesLinkArgs& a) {
  const LinkInputs in = read_inputs(a.file1, a.file2, a.schema, a.keys);
  const RecordFile& f1 = in.pair.file1;
  const RecordFile& f2 = in.pair.file2;
  McmcOptions mc;
  mc.n_burn = a.burn;
  mc.n_draws = a.draws;
  mc.thin = a.thin;
  mc.seed = ctx.config.seed;
  mc.constrained_subset = a.subset;
  const int max_links = std::min(f1.size(), f2.size());
  const CPrior prior = a.subset ? CPrior::point_mass(f1.size(), max_links) : CPrior::uniform(max_links);
  const LinkagePosterior post = run_mcmc(f1, f2, cardinalities(in.schema), prior, ctx.config.harness.hyper, mc);
  std::vector<ScoredLink> probs;
  for (const auto& p : post.pair_probs) {
    if (p.score >= a.min_prob) probs.push_back(p);
  }
  write_pair_list(ctx.out_dir / "pair_probs.csv", probs, f1, f2);
  const MatchMatrix point = point_estimate(post);
  std::vector<ScoredLink> links;
  for (const Link& l : point.links()) links.push_back({l, post.prob(l.row, l.col)});
  write_pair_list(ctx.out_dir / "links.csv", links, f1, f2);
  write_traces(ctx.out_dir / "traces.csv", post, in.schema);
  json s = {{"draws", post.n_recorded},
            {"acceptance_rate", post.acceptance_rate},
            {"point_estimate_links", links.size()},
            {"subset_constraint", a.subset}};
  if (!a.truth.empty()) {
    require_file(a.truth, "truth");
    const LinkErrorRates r = link_error_rates(point, read_truth_deck(a.truth, f1, f2));
    s["false_link_rate"] = r.false_link_rate;
    s["missed_link_rate"] = r.missed_link_rate;
  }
  write_json(ctx.out_dir / "bayes_summary.json", s);
  write_manifest(ctx);
}

struct SaeArgs {
  std::string file1, file2, schema, links, population, lambda_file, audit_file;
  bool adjusted = false;
  std::string strategy = "nonfeedback";
  int burn = 1000, draws = 2000, thin = 10, inner = 100, link_burn = 1000;
  double sae_weight = 1.0;
};

struct SaeInputs {
  LinkInputs in;
  PopulationTable pop;
};

SaeInputs read_sae_inputs(const SaeArgs& a) {
  SaeInputs s{read_inputs(a.file1, a.file2, a.schema, ""), {}};
  const RecordFile& f1 = s.in.pair.file1;
  const RecordFile& f2 = s.in.pair.file2;
  if (!f1.y) throw ConfigError("file1 lacks the response column '" + s.in.schema.response_column + "'");
  if (!f2.x) throw ConfigError("file2 lacks the covariate columns");
  s.pop = read_population(a.population, s.in.pair.domains, static_cast<int>(f2.x->cols()));
  return s;
}

void write_coefficients(const fs::path& path, const std::vector<std::string>& names,
                        const std::vector<std::pair<std::string, Vector>>& columns) {
  std::ostringstream out;
  out << "coefficient";
  for (const auto& [n, _] : columns) out << ',' << n;
  out << '\n';
  for (std::size_t j = 0; j < names.size(); ++j) {
    out << names[j];
    for (const auto& [_, v] : columns) out << ',' << format_number(v(static_cast<Eigen::Index>(j)));
    out << '\n';
  }
  write_text(path, out.str());
}

void cmd_sae_fit(const Context& ctx, const SaeArgs& a) {
  const SaeInputs s = read_sae_inputs(a);
  const RecordFile& f1 = s.in.pair.file1;
  const RecordFile& f2 = s.in.pair.file2;
  const DomainIndex& dom = s.in.pair.domains;
  require_file(a.links, "links");
  const auto pairs = read_pair_list(a.links, f1, f2);
  const UnitSample sample = assemble_linked(f1, f2, row_map(pairs, f1.size()), s.pop.size, s.pop.xbar);
  const DomainSums sums = domain_sums(sample);
  std::ostringstream table;
  json summary;
  if (!a.adjusted) {
    const MixedFit fit = fit_ml(sample);
    table << "domain,n_d,N_d,estimate,g1,g2,g3,mse\n";
    for (int d = 0; d < dom.size(); ++d) {
      table << dom.label(d) << ',' << sums.n(d) << ',' << format_number(sample.pop_size(d)) << ','
            << format_number(fit.area_pred(d)) << ',' << format_number(fit.mse.g1(d)) << ','
            << format_number(fit.mse.g2(d)) << ',' << format_number(fit.mse.g3(d)) << ','
            << format_number(fit.mse.mse(d)) << '\n';
    }
    write_coefficients(ctx.out_dir / "coefficients.csv", sample.covariate_names,
                       {{"estimate", fit.beta}, {"se", fit.beta_cov.diagonal().cwiseSqrt()}});
    summary = {{"sigma2_u", fit.sigma2_u},       {"sigma2_e", fit.sigma2_e},
               {"iterations", fit.iterations},   {"converged", fit.converged},
               {"sigma2_u_at_floor", fit.sigma2_u_at_floor}, {"g3_available", fit.mse.g3_available},
               {"linked_units", sample.n()}};
  } else {
    if (a.lambda_file.empty() == a.audit_file.empty()) {
      throw ConfigError("--adjusted needs exactly one of --lambda-file and --audit-file");
    }
    MatchMatrix links(f1, f2);
    for (const auto& p : pairs) links.link(p.link.row, p.link.col);
    LinkErrorSpec spec;
    if (!a.audit_file.empty()) {
      require_file(a.audit_file, "audit-file");
      spec = estimate_lambda(links, read_truth_deck(a.audit_file, f1, f2), dom.size());
    } else {
      require_file(a.lambda_file, "lambda-file");
      const CsvTable t = read_csv(a.lambda_file);
      Vector lambda = Vector::Constant(dom.size(), -1.0);
      for (const auto& row : t.rows) {
        if (row.size() != 2) throw ConfigError("lambda file: expected columns domain,lambda");
        try {
          lambda(dom.index(row[0])) = std::stod(row[1]);
        } catch (const std::invalid_argument&) {
          throw ConfigError("lambda file: non-numeric lambda for domain " + row[0]);
        }
      }
      for (int d = 0; d < dom.size(); ++d) {
        if (lambda(d) < 0) throw ConfigError("lambda file lacks domain " + dom.label(d));
      }
      spec = make_link_error_spec(lambda, sums.n);
    }
    const AdjustedFit fit = fit_adjusted(sample, spec);
    table << "domain,n_d,N_d,lambda,estimate\n";
    for (int d = 0; d < dom.size(); ++d) {
      table << dom.label(d) << ',' << sums.n(d) << ',' << format_number(sample.pop_size(d)) << ','
            << format_number(spec.lambda(d)) << ',' << format_number(fit.area_pred(d)) << '\n';
    }
    write_coefficients(ctx.out_dir / "coefficients.csv", sample.covariate_names,
                       {{"ratio", fit.beta_r}, {"blue", fit.beta_blue}, {"se", fit.beta_cov.diagonal().cwiseSqrt()}});
    summary = {{"sigma2_u", fit.sigma2_u},     {"sigma2_e", fit.sigma2_e},    {"iterations", fit.iterations},
               {"converged", fit.converged}, {"linked_units", sample.n()}};
  }
  write_text(ctx.out_dir / "area_estimates.csv", table.str());
  write_json(ctx.out_dir / "sae_summary.json", summary);
  write_manifest(ctx);
}

void write_posterior(const fs::path& path, const SaePosterior& post, const std::vector<std::string>& names,
                     const DomainIndex& dom) {
  std::ostringstream out;
  out << "draw";
  for (const auto& n : names) out << ',' << n;
  out << ",sigma2_e,sigma2_u";
  for (int d = 0; d < dom.size(); ++d) out << ",mu_" << dom.label(d);
  out << '\n';
  for (int i = 0; i < post.n_draws(); ++i) {
    out << i + 1;
    for (Eigen::Index j = 0; j < post.beta.cols(); ++j) out << ',' << format_number(post.beta(i, j));
    out << ',' << format_number(post.sigma2_e(i)) << ',' << format_number(post.sigma2_u(i));
    for (Eigen::Index d = 0; d < post.mu.cols(); ++d) out << ',' << format_number(post.mu(i, d));
    out << '\n';
  }
  write_text(path, out.str());
}

void cmd_sae_bayes(const Context& ctx, const SaeArgs& a) {
  const SaeInputs s = read_sae_inputs(a);
  const RecordFile& f1 = s.in.pair.file1;
  const RecordFile& f2 = s.in.pair.file2;
  const HarnessOptions& h = ctx.config.harness;
  SaePosterior post;
  std::optional<LinkagePosterior> linkage;
  std::vector<std::string> names = {"intercept"};
  for (const auto& c : f2.covariate_names) names.push_back(c);
  if (a.strategy == "fixed-C") {
    require_file(a.links, "links");
    const auto pairs = read_pair_list(a.links, f1, f2);
    const UnitSample sample = assemble_linked(f1, f2, row_map(pairs, f1.size()), s.pop.size, s.pop.xbar);
    post = gibbs_sae(sample, h.prior, a.burn, a.draws, ctx.config.seed);
  } else if (a.strategy == "nonfeedback" || a.strategy == "feedback") {
    McmcOptions mc;
    mc.n_burn = a.link_burn;
    mc.n_draws = a.draws;
    mc.seed = ctx.config.seed;
    BayesLinkedResult r;
    if (a.strategy == "nonfeedback") {
      r = run_nonfeedback(f1, f2, cardinalities(s.in.schema), h.hyper, mc, s.pop.size, s.pop.xbar, h.prior,
                          NonFeedbackOptions{a.inner, a.thin});
    } else {
      mc.thin = a.thin;
      FeedbackOptions fo;
      fo.sae_weight = a.sae_weight;
      r = run_feedback(f1, f2, cardinalities(s.in.schema), h.hyper, mc, s.pop.size, s.pop.xbar, h.prior, fo);
    }
    post = std::move(r.sae);
    linkage = std::move(r.linkage);
  } else {
    throw ConfigError("--strategy must be feedback, nonfeedback or fixed-C");
  }
  write_posterior(ctx.out_dir / "posterior_draws.csv", post, names, s.in.pair.domains);
  json summary = {{"strategy", a.strategy},
                  {"draws", post.n_draws()},
                  {"beta_mean", vec_json(post.beta_mean())},
                  {"beta_sd", vec_json(post.beta_sd())},
                  {"sigma2_e_mean", post.sigma2_e.mean()},
                  {"sigma2_u_mean", post.sigma2_u.mean()},
                  {"propriety_warning", post.propriety_warning}};
  if (linkage) {
    write_pair_list(ctx.out_dir / "pair_probs.csv", linkage->pair_probs, f1, f2);
    summary["linkage_acceptance_rate"] = linkage->acceptance_rate;
  }
  write_json(ctx.out_dir / "sae_bayes_summary.json", summary);
  write_manifest(ctx);
}

std::string replication_table(const ReplicationReport& rep) {
  std::ostringstream out;
  out << "replication,estimator,ok,intercept,slope,failure\n";
  for (std::size_t r = 0; r < rep.runs.size(); ++r) {
    for (const EstimatorRow& row : rep.rows) {
      const EstimateCell& c = rep.runs[r].cells[static_cast<int>(row.estimator)];
      out << r + 1 << ',' << estimator_name(row.estimator) << ',' << (c.ok ? 1 : 0) << ','
          << (c.coef.size() > 0 ? format_number(c.coef(0)) : "NA") << ','
          << (c.coef.size() > 1 ? format_number(c.coef(1)) : "NA") << ',';
      std::string f = c.failure;
      for (char& ch : f) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      out << f << '\n';
    }
  }
  return out.str();
}

void cmd_simulate(const Context& ctx) {
  const ReplicationReport rep =
      run_replications(ctx.config.population, ctx.config.harness, ctx.config.seed);
  write_report_csv(ctx.out_dir, rep);
  write_text(ctx.out_dir / "replications.csv", replication_table(rep));
  write_text(ctx.out_dir / "report.txt", format_tables(to_tables(rep)));
  write_manifest(ctx);
}

FileSchema generated_schema(const KeySchema& keys) {
  FileSchema s;
  for (const KeyField& k : keys) {
    KeyColumn c;
    c.field = k;
    c.column = k.name;
    if (k.name == "gender" && k.cardinality == 2) c.levels = {"M", "F"};
    if (k.name == "year") c.min_value = 1920;
    s.keys.push_back(c);
  }
  s.covariate_columns = {"income"};
  s.response_column = "consumption";
  return s;
}

void cmd_generate(const Context& ctx) {
  const Population pop = generate_population(ctx.config.population, derive_seed(ctx.config.seed, 0));
  Rng rng(derive_seed(ctx.config.seed, 1));
  const std::vector<int> idx = srswor(pop.perturbed_file.size(), ctx.config.harness.n_sample, rng);
  RecordFile sample;
  sample.n_domains = pop.perturbed_file.n_domains;
  sample.keys.resize(static_cast<Eigen::Index>(idx.size()), pop.perturbed_file.keys.cols());
  sample.y = Vector(static_cast<Eigen::Index>(idx.size()));
  std::vector<Link> truth;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const int unit = idx[k];
    sample.ids.push_back(pop.perturbed_file.ids[unit]);
    sample.keys.row(static_cast<Eigen::Index>(k)) = pop.perturbed_file.keys.row(unit);
    sample.domain.push_back(pop.perturbed_file.domain[unit]);
    (*sample.y)(static_cast<Eigen::Index>(k)) = (*pop.perturbed_file.y)(unit);
    truth.push_back({static_cast<int>(k), pop.truth.links()[unit].col});
  }
  std::vector<std::string> labels;
  for (int d = 0; d < pop.register_file.n_domains; ++d) labels.push_back("Area" + std::to_string(d + 1));
  const DomainIndex dom(labels);
  const FileSchema schema = generated_schema(pop.keys);
  write_schema(ctx.out_dir / "schema.json", schema);
  write_record_file(ctx.out_dir / "register.csv", pop.register_file, schema, dom, "");
  write_record_file(ctx.out_dir / "sample.csv", sample, schema, dom, "consumption");
  write_truth_deck(ctx.out_dir / "truth.csv", TruthDeck(truth), sample, pop.register_file);
  std::ostringstream p;
  p << "domain,N_d,xbar_income\n";
  for (int d = 0; d < dom.size(); ++d) {
    p << dom.label(d) << ',' << format_number(pop.pop_size(d)) << ',' << format_number(pop.pop_xbar(d, 1)) << '\n';
  }
  write_text(ctx.out_dir / "population.csv", p.str());
  std::ostringstream m;
  m << "domain,true_mean\n";
  for (int d = 0; d < dom.size(); ++d) m << dom.label(d) << ',' << format_number(pop.area_mean(d)) << '\n';
  write_text(ctx.out_dir / "area_truth.csv", m.str());
  write_manifest(ctx);
}

int fail(std::ostream& err, const char* kind, const std::string& message, int code) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Record linkage and small-area estimation with linkage uncertainty", "linksae"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Common common;
  auto add_common = [&](CLI::App* sub, bool with_config) {
    sub->add_option("--out", common.out, "Output directory (overrides config and environment)");
    sub->add_option("--seed", common.seed, "Unsigned 64-bit seed");
    sub->add_option("--threads", common.threads, "Worker thread cap (0: all cores)");
    if (with_config) sub->add_option("--config", common.config, "JSON run configuration");
  };

  FsArgs fs_args;
  CLI::App* link_fs = app.add_subcommand("link-fs", "Fellegi-Sunter linkage with EM");
  add_common(link_fs, false);
  link_fs->add_option("--file1", fs_args.file1, "First record file")->required();
  link_fs->add_option("--file2", fs_args.file2, "Second record file")->required();
  link_fs->add_option("--schema", fs_args.schema, "Schema sidecar (JSON)")->required();
  link_fs->add_option("--keys", fs_args.keys, "Comma-separated key fields (default: all)");
  link_fs->add_option("--threshold", fs_args.threshold, "Posterior match probability threshold");
  link_fs->add_option("--tol", fs_args.tol, "EM relative log-likelihood tolerance");
  link_fs->add_option("--max-iter", fs_args.max_iter, "EM iteration cap");
  link_fs->add_option("--truth", fs_args.truth, "Truth deck for error rates");

  BayesLinkArgs bl;
  CLI::App* link_bayes = app.add_subcommand("link-bayes", "Bayesian linkage by MCMC");
  add_common(link_bayes, true);
  link_bayes->add_option("--file1", bl.file1, "First record file")->required();
  link_bayes->add_option("--file2", bl.file2, "Second record file")->required();
  link_bayes->add_option("--schema", bl.schema, "Schema sidecar (JSON)")->required();
  link_bayes->add_option("--keys", bl.keys, "Comma-separated key fields (default: all)");
  link_bayes->add_option("--burn", bl.burn, "Burn-in sweeps");
  link_bayes->add_option("--draws", bl.draws, "Retained draws");
  link_bayes->add_option("--thin", bl.thin, "Sweeps per retained draw");
  link_bayes->add_flag("--subset", bl.subset, "Every file-1 record has a partner in file 2");
  link_bayes->add_option("--min-prob", bl.min_prob, "Smallest pair probability written");
  link_bayes->add_option("--truth", bl.truth, "Truth deck for error rates");

  SaeArgs fit_args;
  CLI::App* sae_fit = app.add_subcommand("sae-fit", "EBLUP on linked data, naive or adjusted");
  add_common(sae_fit, false);
  sae_fit->add_option("--file1", fit_args.file1, "Records carrying the response")->required();
  sae_fit->add_option("--file2", fit_args.file2, "Records carrying the covariates")->required();
  sae_fit->add_option("--schema", fit_args.schema, "Schema sidecar (JSON)")->required();
  sae_fit->add_option("--links", fit_args.links, "Pair list id1,id2,score")->required();
  sae_fit->add_option("--population", fit_args.population, "domain,N_d,xbar_1..xbar_p")->required();
  sae_fit->add_flag("--adjusted", fit_args.adjusted, "Adjust for exchangeable linkage errors");
  sae_fit->add_option("--lambda-file", fit_args.lambda_file, "domain,lambda");
  sae_fit->add_option("--audit-file", fit_args.audit_file, "Audited true pairs id1,id2");

  SaeArgs bayes_args;
  CLI::App* sae_bayes = app.add_subcommand("sae-bayes", "Hierarchical Bayes small-area model");
  add_common(sae_bayes, true);
  sae_bayes->add_option("--strategy", bayes_args.strategy, "feedback | nonfeedback | fixed-C");
  sae_bayes->add_option("--file1", bayes_args.file1, "Records carrying the response")->required();
  sae_bayes->add_option("--file2", bayes_args.file2, "Records carrying the covariates")->required();
  sae_bayes->add_option("--schema", bayes_args.schema, "Schema sidecar (JSON)")->required();
  sae_bayes->add_option("--population", bayes_args.population, "domain,N_d,xbar_1..xbar_p")->required();
  sae_bayes->add_option("--links", bayes_args.links, "Pair list (fixed-C)");
  sae_bayes->add_option("--burn", bayes_args.burn, "SAE burn-in (fixed-C)");
  sae_bayes->add_option("--draws", bayes_args.draws, "Retained draws");
  sae_bayes->add_option("--link-burn", bayes_args.link_burn, "Linkage burn-in sweeps");
  sae_bayes->add_option("--thin", bayes_args.thin, "Linkage sweeps per retained draw");
  sae_bayes->add_option("--inner", bayes_args.inner, "SAE sweeps per linkage draw (nonfeedback)");
  sae_bayes->add_option("--sae-weight", bayes_args.sae_weight, "Weight of the regression term (feedback)");

  CLI::App* simulate = app.add_subcommand("simulate", "Replicated simulation study");
  add_common(simulate, true);
  simulate->get_option("--config")->required();

  CLI::App* generate = app.add_subcommand("generate", "Write one synthetic population, sample and schema");
  add_common(generate, true);

  std::string report_dir;
  CLI::App* report = app.add_subcommand("report", "Print the tables of a finished simulate run");
  report->add_option("--dir", report_dir, "simulate output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return fail(err, "usage", e.what(), kExitUsage);
  }

  // Arguments for the manifest, minus the output directory.
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out") {
      ++i;
      continue;
    }
    if (a.rfind("--out=", 0) == 0) continue;
    args.push_back(a);
  }

  try {
    if (*report) {
      out << format_tables(read_report_csv(report_dir));
      return kExitOk;
    }
    CLI::App* sub = app.get_subcommands().front();
    const bool has_config = sub != link_fs && sub != sae_fit;
    const Context ctx = make_context(sub->get_name(), common, args);
    (void)has_config;
    if (*link_fs) cmd_link_fs(ctx, fs_args);
    if (*link_bayes) cmd_link_bayes(ctx, bl);
    if (*sae_fit) cmd_sae_fit(ctx, fit_args);
    if (*sae_bayes) cmd_sae_bayes(ctx, bayes_args);
    if (*simulate) cmd_simulate(ctx);
    if (*generate) cmd_generate(ctx);
  } catch (const ConfigError& e) {
    return fail(err, "config", e.what(), kExitConfig);
  } catch (const IoError& e) {
    return fail(err, "io", e.what(), kExitIo);
  } catch (const NumericalError& e) {
    return fail(err, "numerical", e.what(), kExitNumerical);
  } catch (const std::invalid_argument& e) {
    return fail(err, "config", e.what(), kExitConfig);
  } catch (const std::exception& e) {
    return fail(err, "numerical", e.what(), kExitNumerical);
  }
  return kExitOk;
}

}  // namespace linksae
