#include "linksae/report.hpp"

#include "linksae/errors.hpp"
#include "linksae/record_io.hpp"

#include <fstream>
#include <sstream>

namespace linksae {

namespace {

std::string num(double v) { return format_number(v, 6); }

std::string at_or_na(const Vector& v, Eigen::Index i) {
  return i < v.size() ? num(v(i)) : std::string("NA");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

ReportTables to_tables(const ReplicationReport& report) {
  ReportTables t;
  t.coefficients.push_back({"Population",
                            {num(report.beta_truth(0)), "NA", num(report.beta_truth(1)), "NA", "NA", "NA"}});
  for (const EstimatorRow& r : report.rows) {
    const std::string name = estimator_name(r.estimator);
    if (r.estimator != Estimator::SampleMean) {
      t.coefficients.push_back({name,
                                {at_or_na(r.coef_mean, 0), at_or_na(r.coef_sd, 0), at_or_na(r.coef_mean, 1),
                                 at_or_na(r.coef_sd, 1), at_or_na(r.mean_post_sd, 0), at_or_na(r.mean_post_sd, 1)}});
    }
    t.accuracy.push_back(
        {name, {num(r.arb), num(r.sd), num(r.mse), std::to_string(r.n_ok), std::to_string(r.n_failed)}});
  }
  t.linkage.emplace_back("replications", std::to_string(report.replications));
  t.linkage.emplace_back("n_sample", std::to_string(report.n_sample));
  t.linkage.emplace_back("fs_false_link_rate", num(report.fs_false_rate));
  t.linkage.emplace_back("fs_missed_link_rate", num(report.fs_missed_rate));
  t.linkage.emplace_back("fs_declared_links", num(report.fs_declared));
  t.linkage.emplace_back("fs_unlinked_rate", num(report.fs_unlinked_rate));
  if (report.bayes_false_rate) {
    t.linkage.emplace_back("bayes_false_link_rate", num(*report.bayes_false_rate));
    t.linkage.emplace_back("bayes_missed_link_rate", num(*report.bayes_missed_rate));
    t.linkage.emplace_back("bayes_declared_links", num(*report.bayes_declared));
  }
  return t;
}

void write_report_csv(const std::filesystem::path& dir, const ReplicationReport& report) {
  const ReportTables t = to_tables(report);
  {
    auto out = open_out(dir / "coefficients.csv");
    out << "estimator,intercept,sd_intercept,slope,sd_slope,posterior_sd_intercept,posterior_sd_slope\n";
    for (const auto& r : t.coefficients) {
      out << r.name;
      for (const auto& v : r.values) out << ',' << v;
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "accuracy.csv");
    out << "estimator,arb,sd,mse,ok,failed\n";
    for (const auto& r : t.accuracy) {
      out << r.name;
      for (const auto& v : r.values) out << ',' << v;
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "linkage.csv");
    out << "quantity,value\n";
    for (const auto& [k, v] : t.linkage) out << k << ',' << v << '\n';
  }
  {
    auto out = open_out(dir / "domains.csv");
    out << "estimator,domain,truth,mean_prediction,sd,mse\n";
    for (const EstimatorRow& r : report.rows) {
      for (Eigen::Index d = 0; d < report.area_truth.size(); ++d) {
        out << estimator_name(r.estimator) << ',' << d + 1 << ',' << num(report.area_truth(d)) << ','
            << at_or_na(r.pred_mean, d) << ',' << at_or_na(r.domain_sd, d) << ',' << at_or_na(r.domain_mse, d)
            << '\n';
      }
    }
  }
}

ReportTables read_report_csv(const std::filesystem::path& dir) {
  for (const char* f : {"coefficients.csv", "accuracy.csv", "linkage.csv"}) {
    if (!std::filesystem::exists(dir / f)) throw IoError("missing '" + (dir / f).string() + "'");
  }
  ReportTables t;
  for (const auto& row : read_csv(dir / "coefficients.csv").rows) {
    if (row.size() != 7) throw ConfigError("coefficients.csv: expected 7 columns");
    t.coefficients.push_back({row[0], {row.begin() + 1, row.end()}});
  }
  for (const auto& row : read_csv(dir / "accuracy.csv").rows) {
    if (row.size() != 6) throw ConfigError("accuracy.csv: expected 6 columns");
    t.accuracy.push_back({row[0], {row.begin() + 1, row.end()}});
  }
  for (const auto& row : read_csv(dir / "linkage.csv").rows) {
    if (row.size() != 2) throw ConfigError("linkage.csv: expected 2 columns");
    t.linkage.emplace_back(row[0], row[1]);
  }
  return t;
}

namespace {

void table(std::ostringstream& out, const std::vector<std::string>& header,
           const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << (c == 0 ? "" : "  ");
      if (c == 0) {
        out << cells[c] << std::string(width[c] - cells[c].size(), ' ');
      } else {
        out << std::string(width[c] - cells[c].size(), ' ') << cells[c];
      }
    }
    out << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  out << std::string(total - 2, '-') << '\n';
  for (const auto& r : rows) line(r);
}

}  // namespace

std::string format_tables(const ReportTables& t) {
  std::ostringstream out;
  out << "Regression coefficients (mean and SD over replications)\n\n";
  std::vector<std::vector<std::string>> rows;
  bool any_post = false;
  for (const auto& r : t.coefficients) {
    any_post = any_post || r.values[4] != "NA";
    rows.push_back({r.name == "Population" ? r.name : "Estimates " + r.name, r.values[0],
                    r.values[1], r.values[2], r.values[3]});
  }
  table(out, {"Estimates", "Intercept", "Sd Intercept", "Slope", "Sd Slope"}, rows);
  if (any_post) {
    out << "\nPosterior SD of the coefficients (averaged over replications)\n\n";
    rows.clear();
    for (const auto& r : t.coefficients) {
      if (r.values[4] != "NA") rows.push_back({"Estimates " + r.name, r.values[4], r.values[5]});
    }
    table(out, {"Estimates", "Intercept", "Slope"}, rows);
  }
  out << "\nArea predictions\n\n";
  rows.clear();
  for (const auto& r : t.accuracy) {
    const std::string name = r.name == "Sample mean" ? r.name : "Estimates " + r.name;
    rows.push_back({name, r.values[0], r.values[1], r.values[2], r.values[3], r.values[4]});
  }
  table(out, {"Estimates", "ARB", "SD", "MSE", "ok", "failed"}, rows);
  out << "\nLinkage\n\n";
  rows.clear();
  for (const auto& [k, v] : t.linkage) rows.push_back({k, v});
  table(out, {"quantity", "value"}, rows);
  return out.str();
}

}  // namespace linksae
