#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fieldtest/irt.hpp"
#include "fieldtest/simulate.hpp"
#include "fieldtest/stats.hpp"
#include "fieldtest/types.hpp"

namespace fieldtest {

inline constexpr const char* kToolVersion = "0.1.0";

/// Provenance record written next to every command's outputs.
struct RunManifest {
    EngineConfig config;
    std::string subcommand;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    std::string timestamp;
    std::string tool_version = kToolVersion;
};

void to_json(nlohmann::json& j, const RunManifest& m);
std::string utc_timestamp();
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

/// Each stage draws from its own stream derived from the run seed, so a
/// chain of subcommands and the monolithic run consume identical streams.
enum class Stage : std::uint64_t { population = 1, sample = 2, reference_thetas = 3, reference_responses = 4 };
std::uint64_t stage_seed(std::uint64_t seed, Stage stage);

struct SimulationOutput {
    std::vector<ExamineeProfile> profiles;
    OptionProbMatrix probs;
};

SimulationOutput cmd_simulate(const ItemBank& bank, const ParamSet& ref_params, const EngineConfig& config,
                              const SurrogateConfig& surrogate = {});

ResponseMatrix cmd_sample(const OptionProbMatrix& probs, const ItemBank& bank, std::uint64_t seed);

struct ReferenceData {
    VectorXd thetas;
    ResponseMatrix responses;
};

/// Reference examinees with theta ~ N(0, 1) answering under the reference parameters.
ReferenceData cmd_generate_reference(const ItemBank& bank, const ParamSet& params, const EngineConfig& config);

struct Calibration {
    ParamSet params;
    GroupDist group;
    /// Per-target group estimates of the anchored procedure, in item order.
    std::vector<GroupDist> item_groups;
    std::vector<bool> converged;
    bool anchored = false;
};

/// Anchored one-item-at-a-time calibration when `anchors` is given, free fit otherwise.
/// The anchored group is the mean of the per-target estimates.
Calibration cmd_fit(const ResponseMatrix& responses, const EngineConfig& config, const ParamSet* anchors);

std::vector<AbilityEstimate> cmd_score(const ResponseMatrix& responses, const ParamSet& params,
                                       const EngineConfig& config);

CttTable cmd_ctt(const ResponseMatrix& responses, bool corrected);

struct ReportInputs {
    ParamSet reference_params;
    ParamSet candidate_params;
    std::optional<CttTable> reference_ctt;
    std::optional<CttTable> candidate_ctt;
    std::vector<AbilityEstimate> reference_abilities;
    std::vector<AbilityEstimate> candidate_abilities;
    std::vector<std::string> exclude;
};

Report cmd_compare(const ReportInputs& inputs);

/// Score per examinee against retained proportion (requires retention).
void write_score_by_retention(const std::filesystem::path& path, const ResponseMatrix& responses);
/// Item response functions of both calibrations on theta = -4..4 step 0.1.
void write_item_response_functions(const std::filesystem::path& path, const ParamSet& reference,
                                   const ParamSet& candidate, double d);
/// Paired ability estimates under both calibrations.
void write_theta_pairs(const std::filesystem::path& path, const std::vector<AbilityEstimate>& reference,
                       const std::vector<AbilityEstimate>& candidate);

/// Report plus plot tables. Adds corr(theta candidate, zeroed proportion)
/// to the test-level block when `candidate_responses` carries retention.
Report cmd_report(const ReportInputs& inputs, const ResponseMatrix* candidate_responses, double d,
                  const std::filesystem::path& out_dir);

struct PipelineOptions {
    EngineConfig config;
    SurrogateConfig surrogate;
    std::vector<std::string> exclude;
    bool corrected_item_total = true;
};

/// Full run: simulate, sample, anchored calibration, scoring, CTT for both
/// sides, report and plot tables, all written under `out_dir`.
Report run_pipeline(const ItemBank& bank, const ParamSet& ref_params, const PipelineOptions& options,
                    const std::filesystem::path& out_dir);

} // namespace fieldtest
