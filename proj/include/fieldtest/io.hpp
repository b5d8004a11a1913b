#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fieldtest/simulate.hpp"
#include "fieldtest/stats.hpp"
#include "fieldtest/types.hpp"

namespace fieldtest::io {

namespace fs = std::filesystem;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);
double parse_double(const std::string& text, const std::string& context);

ItemBank read_item_bank(const fs::path& path);
void write_item_bank(const fs::path& path, const ItemBank& bank);

/// Long CSV `examinee_id,item_id,option_index,prob`, examinee-major, bank order.
void write_option_probs(const fs::path& path, const OptionProbMatrix& m);
/// Rows must be grouped by examinee and cover every option of every listed item.
/// Item order follows the bank.
OptionProbMatrix read_option_probs(const fs::path& path, const ItemBank& bank);

/// Sidecar CSV `examinee_id,retention`.
void write_retention(const fs::path& path, const std::vector<std::string>& examinee_ids,
                     const Eigen::Ref<const VectorXd>& retention);
/// Values ordered to match `examinee_ids`; every id must be present.
VectorXd read_retention(const fs::path& path, const std::vector<std::string>& examinee_ids);

/// Long CSV `examinee_id,item_id,chosen,scored`.
void write_responses(const fs::path& path, const ResponseMatrix& r);
ResponseMatrix read_responses(const fs::path& path, const ItemBank& bank);

/// CSV `item_id,a,b`.
void write_params(const fs::path& path, const ParamSet& params);
ParamSet read_params(const fs::path& path);

/// CSV `mean,sd`, one row.
void write_group(const fs::path& path, const GroupDist& group);
GroupDist read_group(const fs::path& path);

/// CSV `examinee_id,theta,se`; se may be empty.
void write_abilities(const fs::path& path, const std::vector<AbilityEstimate>& abilities);
std::vector<AbilityEstimate> read_abilities(const fs::path& path);

/// CSV `examinee_id,retention,theta_true`.
void write_profiles(const fs::path& path, const std::vector<ExamineeProfile>& profiles);
std::vector<ExamineeProfile> read_profiles(const fs::path& path);

void write_ctt(const fs::path& path, const CttTable& table);
CttTable read_ctt(const fs::path& path);

void write_report(const fs::path& path, const Report& report);
Report read_report(const fs::path& path);

void write_json(const fs::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const fs::path& path);

EngineConfig read_config(const fs::path& path);

} // namespace fieldtest::io
