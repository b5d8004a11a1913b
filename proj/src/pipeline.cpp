#include "fieldtest/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "fieldtest/io.hpp"

namespace fieldtest {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const RunManifest& m)
{
    j = nlohmann::json{{"config", m.config},
                       {"subcommand", m.subcommand},
                       {"inputs", m.inputs},
                       {"outputs", m.outputs},
                       {"timestamp", m.timestamp},
                       {"tool_version", m.tool_version}};
}

std::string utc_timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const fs::path& path, const RunManifest& manifest)
{
    io::write_json(path, nlohmann::json(manifest));
}

std::uint64_t stage_seed(std::uint64_t seed, Stage stage)
{
    // splitmix64 finalizer over (seed, stage)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(stage);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

SimulationOutput cmd_simulate(const ItemBank& bank, const ParamSet& ref_params, const EngineConfig& config,
                              const SurrogateConfig& surrogate)
{
    config.validate();
    SimulationOutput out;
    out.profiles = gen_population(static_cast<std::size_t>(config.n_examinees),
                                  stage_seed(config.seed, Stage::population), surrogate);
    out.probs = surrogate_option_probs(out.profiles, bank, ref_params, config.scaling_d, surrogate);
    return out;
}

ResponseMatrix cmd_sample(const OptionProbMatrix& probs, const ItemBank& bank, std::uint64_t seed)
{
    return sample_responses(probs, bank, stage_seed(seed, Stage::sample));
}

ReferenceData cmd_generate_reference(const ItemBank& bank, const ParamSet& params, const EngineConfig& config)
{
    config.validate();
    ReferenceData out;
    out.thetas = draw_thetas(static_cast<std::size_t>(config.n_examinees), GroupDist{0.0, 1.0},
                             stage_seed(config.seed, Stage::reference_thetas));
    out.responses = gen_responses_2pl(out.thetas, bank, params, config.scaling_d,
                                      stage_seed(config.seed, Stage::reference_responses));
    return out;
}

Calibration cmd_fit(const ResponseMatrix& responses, const EngineConfig& config, const ParamSet* anchors)
{
    Calibration out;
    if (!anchors) {
        FitResult fit = fit_2pl_mml(responses, config);
        out.params = std::move(fit.params);
        out.group = fit.group;
        out.converged.assign(out.params.size(), fit.converged);
        return out;
    }
    out.anchored = true;
    double mean = 0.0, sd = 0.0;
    for (const auto& fit : fit_anchored_all(responses, *anchors, config)) {
        out.params.push_back(fit.params);
        out.item_groups.push_back(fit.group);
        out.converged.push_back(fit.converged);
        mean += fit.group.mean;
        sd += fit.group.sd;
    }
    const double k = double(out.params.size());
    out.group = GroupDist{mean / k, sd / k};
    return out;
}

std::vector<AbilityEstimate> cmd_score(const ResponseMatrix& responses, const ParamSet& params,
                                       const EngineConfig& config)
{
    config.validate();
    return score_all(responses, params, config);
}

CttTable cmd_ctt(const ResponseMatrix& responses, bool corrected)
{
    return ctt_table(responses, corrected);
}

namespace {

VectorXd aligned_thetas(const std::vector<AbilityEstimate>& reference, const std::vector<AbilityEstimate>& candidate,
                        VectorXd& reference_out)
{
    if (reference.size() != candidate.size())
        throw ValidationError("ability files list different numbers of examinees");
    VectorXd cand(static_cast<Eigen::Index>(candidate.size()));
    reference_out.resize(cand.size());
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        if (reference[i].examinee_id != candidate[i].examinee_id)
            throw ValidationError("ability files disagree on examinee order at '" + candidate[i].examinee_id + "'");
        reference_out(Eigen::Index(i)) = reference[i].theta;
        cand(Eigen::Index(i)) = candidate[i].theta;
    }
    return cand;
}

} // namespace

Report cmd_compare(const ReportInputs& inputs)
{
    VectorXd ref;
    VectorXd cand = aligned_thetas(inputs.reference_abilities, inputs.candidate_abilities, ref);
    return build_report(inputs.reference_params, inputs.candidate_params,
                        inputs.reference_ctt ? &*inputs.reference_ctt : nullptr,
                        inputs.candidate_ctt ? &*inputs.candidate_ctt : nullptr, ref, cand, inputs.exclude);
}

void write_score_by_retention(const fs::path& path, const ResponseMatrix& responses)
{
    if (!responses.retention) throw ValidationError("score-by-retention table needs per-examinee retention");
    const VectorXd score = responses.scored_real().rowwise().mean();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << "examinee_id,retention,zeroed,score\n";
    for (Eigen::Index i = 0; i < score.size(); ++i) {
        const double r = (*responses.retention)(i);
        out << responses.examinee_ids[static_cast<std::size_t>(i)] << ',' << io::format_double(r) << ','
            << io::format_double(1.0 - r) << ',' << io::format_double(score(i)) << '\n';
    }
}

void write_item_response_functions(const fs::path& path, const ParamSet& reference, const ParamSet& candidate,
                                   double d)
{
    std::vector<std::string> ids;
    for (const auto& p : reference) ids.push_back(p.item_id);
    const ParamSet cand = align_params(candidate, ids);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << "item_id,theta,p_reference,p_candidate\n";
    for (std::size_t j = 0; j < ids.size(); ++j) {
        for (int k = -40; k <= 40; ++k) {
            const double theta = k / 10.0;
            out << ids[j] << ',' << io::format_double(theta) << ','
                << io::format_double(prob_2pl(theta, reference[j].a, reference[j].b, d)) << ','
                << io::format_double(prob_2pl(theta, cand[j].a, cand[j].b, d)) << '\n';
        }
    }
}

void write_theta_pairs(const fs::path& path, const std::vector<AbilityEstimate>& reference,
                       const std::vector<AbilityEstimate>& candidate)
{
    VectorXd ref;
    VectorXd cand = aligned_thetas(reference, candidate, ref);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << "examinee_id,theta_reference,theta_candidate\n";
    for (std::size_t i = 0; i < candidate.size(); ++i)
        out << candidate[i].examinee_id << ',' << io::format_double(ref(Eigen::Index(i))) << ','
            << io::format_double(cand(Eigen::Index(i))) << '\n';
}

Report cmd_report(const ReportInputs& inputs, const ResponseMatrix* candidate_responses, double d,
                  const fs::path& out_dir)
{
    fs::create_directories(out_dir);
    Report report = cmd_compare(inputs);
    if (candidate_responses && candidate_responses->retention && !inputs.candidate_abilities.empty()) {
        if (candidate_responses->examinee_ids.size() != inputs.candidate_abilities.size())
            throw ValidationError("candidate responses and abilities list different examinees");
        const VectorXd zeroed = 1.0 - candidate_responses->retention->array();
        report.test_level["candidate_theta_zeroed_r"] = pearson(thetas_of(inputs.candidate_abilities), zeroed);
        const VectorXd score = candidate_responses->scored_real().rowwise().mean();
        report.test_level["candidate_score_zeroed_r"] = pearson(score, zeroed);
        write_score_by_retention(out_dir / "score_by_retention.csv", *candidate_responses);
    }
    write_item_response_functions(out_dir / "item_response_functions.csv", inputs.reference_params,
                                  inputs.candidate_params, d);
    if (!inputs.candidate_abilities.empty())
        write_theta_pairs(out_dir / "theta_pairs.csv", inputs.reference_abilities, inputs.candidate_abilities);
    io::write_report(out_dir / "report.json", report);
    return report;
}

Report run_pipeline(const ItemBank& bank, const ParamSet& ref_params, const PipelineOptions& options,
                    const fs::path& out_dir)
{
    const EngineConfig& config = options.config;
    config.validate();
    bank.validate();
    fs::create_directories(out_dir);

    SimulationOutput sim = cmd_simulate(bank, ref_params, config, options.surrogate);
    io::write_option_probs(out_dir / "option_probs.csv", sim.probs);
    io::write_retention(out_dir / "retention.csv", sim.probs.examinee_ids, *sim.probs.retention);
    io::write_profiles(out_dir / "profiles.csv", sim.profiles);

    ResponseMatrix responses = cmd_sample(sim.probs, bank, config.seed);
    io::write_responses(out_dir / "responses.csv", responses);

    ReferenceData reference = cmd_generate_reference(bank, ref_params, config);
    io::write_responses(out_dir / "reference_responses.csv", reference.responses);

    Calibration cal = cmd_fit(responses, config, &ref_params);
    io::write_params(out_dir / "candidate_params.csv", cal.params);
    io::write_group(out_dir / "candidate_group.csv", cal.group);

    ReportInputs inputs;
    inputs.reference_params = align_params(ref_params, responses.item_ids);
    inputs.candidate_params = cal.params;
    inputs.reference_abilities = cmd_score(responses, inputs.reference_params, config);
    inputs.candidate_abilities = cmd_score(responses, cal.params, config);
    io::write_abilities(out_dir / "abilities_reference.csv", inputs.reference_abilities);
    io::write_abilities(out_dir / "abilities_candidate.csv", inputs.candidate_abilities);

    inputs.reference_ctt = cmd_ctt(reference.responses, options.corrected_item_total);
    inputs.candidate_ctt = cmd_ctt(responses, options.corrected_item_total);
    io::write_ctt(out_dir / "ctt_reference.json", *inputs.reference_ctt);
    io::write_ctt(out_dir / "ctt_candidate.json", *inputs.candidate_ctt);
    inputs.exclude = options.exclude;

    Report report = cmd_report(inputs, &responses, config.scaling_d, out_dir);

    RunManifest manifest;
    manifest.config = config;
    manifest.subcommand = "run";
    manifest.timestamp = utc_timestamp();
    for (const auto& entry : fs::directory_iterator(out_dir))
        if (entry.path().filename() != "manifest.json")
            manifest.outputs[entry.path().filename().string()] = entry.path().string();
    write_manifest(out_dir / "manifest.json", manifest);
    return report;
}

} // namespace fieldtest
