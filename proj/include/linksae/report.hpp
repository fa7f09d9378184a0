#pragma once

#include "linksae/simharness.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace linksae {

/// Flat, string-valued view of a replication report; what the CSV files hold.
struct ReportTables {
  struct Coef {
    std::string name;
    std::vector<std::string> values;  // intercept, sd intercept, slope, sd slope, posterior sd x2
  };
  struct Accuracy {
    std::string name;
    std::vector<std::string> values;  // arb, sd, mse, ok, failed
  };
  std::vector<Coef> coefficients;
  std::vector<Accuracy> accuracy;
  std::vector<std::pair<std::string, std::string>> linkage;
};

ReportTables to_tables(const ReplicationReport& report);

/// coefficients.csv, accuracy.csv, domains.csv and linkage.csv in `dir`.
void write_report_csv(const std::filesystem::path& dir, const ReplicationReport& report);
ReportTables read_report_csv(const std::filesystem::path& dir);

/// Text tables: coefficients with their spread over replications, then
/// ARB / SD / MSE of the area predictions, then the linkage operating point.
std::string format_tables(const ReportTables& tables);

}  // namespace linksae
