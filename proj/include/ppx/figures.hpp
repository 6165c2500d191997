#pragma once

#include <filesystem>
#include <string>

namespace ppx {

/// Grouped box plot of block RMSE per dataset, read from a `cv_results.csv`.
/// Datasets appear in file order; whiskers span min to max.
std::string render_rmse_boxplot(const std::filesystem::path& cv_results_csv);

/// Target and CPS reconstructions over time, read from `cps.csv` with the
/// legend correlations taken from `cps_skill.csv`.
std::string render_cps_overlay(const std::filesystem::path& cps_csv, const std::filesystem::path& cps_skill_csv);

}  // namespace ppx
