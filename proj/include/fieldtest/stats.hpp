#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fieldtest/types.hpp"

namespace fieldtest {

/// Classical test theory summary of one response matrix.
struct CttTable {
    std::vector<std::string> item_ids;
    VectorXd proportion_correct;
    std::vector<std::optional<double>> item_total_r;
    bool corrected = true;
    std::optional<double> cronbach_alpha;
    double mean_score = 0.0; // mean proportion-correct score per examinee
    double sd_score = 0.0;   // population SD of the same
};

/// Bias/RMSE/Spearman for one statistic. Bias and RMSE are absent for the
/// CTT rows; a field is also absent when it is undefined on the data.
struct StatComparison {
    std::string statistic;
    std::optional<double> bias;
    std::optional<double> rmse;
    std::optional<double> spearman;
    std::size_t n = 0;
    std::vector<std::string> missing_ids;
};

struct ComparisonSummary {
    std::vector<StatComparison> rows;
    std::vector<std::string> excluded_ids;

    const StatComparison& at(const std::string& statistic) const;
};

struct Descriptives {
    double mean = 0.0;
    double sd = 0.0; // sample (n - 1) SD; 0 when n == 1
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t n = 0;
};

Descriptives describe(const Eigen::Ref<const VectorXd>& x);

struct ReportItemRow {
    std::string item_id;
    bool excluded = false;
    double a_reference = 0.0, a_candidate = 0.0;
    double b_reference = 0.0, b_candidate = 0.0;
    std::optional<double> proportion_correct_reference, proportion_correct_candidate;
    std::optional<double> item_total_r_reference, item_total_r_candidate;
};

/// Side-by-side calibration report: per-item table, comparison summary and
/// descriptive rows for each side ("reference", "candidate").
struct Report {
    std::vector<ReportItemRow> per_item;
    ComparisonSummary summary;
    std::map<std::string, std::map<std::string, Descriptives>> descriptives;
    std::map<std::string, double> test_level; // mean score, sd, alpha per side
};

void to_json(nlohmann::json& j, const StatComparison& s);
void from_json(const nlohmann::json& j, StatComparison& s);
void to_json(nlohmann::json& j, const ComparisonSummary& s);
void from_json(const nlohmann::json& j, ComparisonSummary& s);
void to_json(nlohmann::json& j, const Descriptives& d);
void from_json(const nlohmann::json& j, Descriptives& d);
void to_json(nlohmann::json& j, const Report& r);
void from_json(const nlohmann::json& j, Report& r);
void to_json(nlohmann::json& j, const CttTable& t);
void from_json(const nlohmann::json& j, CttTable& t);

VectorXd proportion_correct(const ResponseMatrix& responses);

/// Pearson correlation of each item with the rest score (corrected) or the
/// total score. Items with zero variance, or a constant comparison score, are empty.
std::vector<std::optional<double>> item_total_correlation(const ResponseMatrix& responses,
                                                          bool corrected = true);

/// k/(k-1) * (1 - sum of item variances / total variance), population variances.
double cronbach_alpha(const ResponseMatrix& responses);

CttTable ctt_table(const ResponseMatrix& responses, bool corrected = true);

/// mean(est - ref)
double bias(const Eigen::Ref<const VectorXd>& est, const Eigen::Ref<const VectorXd>& ref);
/// sqrt(mean((est - ref)^2))
double rmse(const Eigen::Ref<const VectorXd>& est, const Eigen::Ref<const VectorXd>& ref);

double pearson(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& y);

/// Average ranks (1-based); ties share the mean of the ranks they span.
VectorXd average_ranks(const Eigen::Ref<const VectorXd>& x);

double spearman(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& y);

/// Compares a candidate calibration against a reference one; bias is
/// candidate minus reference. CTT tables are optional.
ComparisonSummary compare_calibrations(const ParamSet& reference, const ParamSet& candidate,
                                       const CttTable* ctt_reference, const CttTable* ctt_candidate,
                                       const Eigen::Ref<const VectorXd>& thetas_reference,
                                       const Eigen::Ref<const VectorXd>& thetas_candidate,
                                       const std::vector<std::string>& exclude);

Report build_report(const ParamSet& reference, const ParamSet& candidate,
                    const CttTable* ctt_reference, const CttTable* ctt_candidate,
                    const Eigen::Ref<const VectorXd>& thetas_reference,
                    const Eigen::Ref<const VectorXd>& thetas_candidate,
                    const std::vector<std::string>& exclude);

} // namespace fieldtest
