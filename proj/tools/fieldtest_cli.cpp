// fieldtest: command line driver for the field-testing pipeline.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fieldtest/io.hpp"
#include "fieldtest/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fieldtest;

namespace {

struct ConfigFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> n_examinees;
    std::optional<double> scaling_d;
    std::optional<double> prior_var;
    std::optional<int> quad_points;
    std::optional<double> quad_range;
    std::optional<int> max_iter;
    std::optional<double> tol;

    void attach(CLI::App* app)
    {
        app->add_option("--config", config_path, "JSON config mirroring the engine settings")->check(CLI::ExistingFile);
        app->add_option("--seed", seed, "Run seed");
        app->add_option("--n-examinees", n_examinees, "Number of simulated examinees (default 5000)");
        app->add_option("--scaling-d", scaling_d, "Logistic scaling constant D (default 1.7)");
        app->add_option("--prior-var", prior_var, "MAP prior variance (default 100)");
        app->add_option("--quad-points", quad_points, "Quadrature nodes (default 61)");
        app->add_option("--quad-range", quad_range, "Quadrature half-width (default 6)");
        app->add_option("--max-iter", max_iter, "EM iteration cap (default 500)");
        app->add_option("--tol", tol, "EM convergence tolerance (default 1e-4)");
    }

    EngineConfig resolve() const
    {
        EngineConfig c = config_path.empty() ? EngineConfig{} : io::read_config(config_path);
        if (seed) c.seed = *seed;
        if (n_examinees) c.n_examinees = *n_examinees;
        if (scaling_d) c.scaling_d = *scaling_d;
        if (prior_var) c.prior_variance = *prior_var;
        if (quad_points) c.quad_points = *quad_points;
        if (quad_range) c.quad_range = *quad_range;
        if (max_iter) c.max_em_iter = *max_iter;
        if (tol) c.em_tol = *tol;
        c.validate();
        return c;
    }
};

struct SurrogateFlags {
    SurrogateConfig s;

    void attach(CLI::App* app)
    {
        app->add_option("--alpha", s.alpha, "Surrogate intercept")->capture_default_str();
        app->add_option("--beta", s.beta, "Surrogate slope on retention")->capture_default_str();
        app->add_option("--sigma-eps", s.sigma_eps, "Surrogate ability noise SD")->capture_default_str();
        app->add_option("--guess-floor", s.guess_floor, "Floor on the keyed-option probability")->capture_default_str();
    }
};

bool parse_bool(const std::string& text)
{
    if (text == "true") return true;
    if (text == "false") return false;
    throw ValidationError("expected true or false, got '" + text + "'");
}

RunManifest manifest_for(const std::string& cmd, const EngineConfig& config)
{
    RunManifest m;
    m.subcommand = cmd;
    m.config = config;
    m.timestamp = utc_timestamp();
    return m;
}

fs::path manifest_path(const fs::path& primary)
{
    return fs::path(primary.string() + ".manifest.json");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Field-test multiple-choice items with simulated examinees and 2PL calibration"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    ConfigFlags cfg;
    SurrogateFlags sur;
    std::string bank_path, params_path, ref_params_path, cand_params_path, probs_path, retention_path;
    std::string responses_path, anchors_path, out_path, out2_path, out3_path, out_dir;
    std::string ref_ctt_path, cand_ctt_path, ref_abil_path, cand_abil_path;
    std::vector<std::string> exclude;
    std::string corrected_text = "true";
    std::size_t n_items = 29;

    auto* make_bank = app.add_subcommand("make-bank", "Write a synthetic bank and reference parameters");
    make_bank->add_option("--items", n_items, "Number of items")->capture_default_str();
    make_bank->add_option("--bank-out", out_path, "Item bank JSON")->required();
    make_bank->add_option("--params-out", out2_path, "Reference parameters CSV")->required();
    cfg.attach(make_bank);

    auto* simulate = app.add_subcommand("simulate", "Simulate examinees and their option probabilities");
    simulate->add_option("--bank", bank_path)->required()->check(CLI::ExistingFile);
    simulate->add_option("--ref-params", ref_params_path)->required()->check(CLI::ExistingFile);
    simulate->add_option("--probs-out", out_path)->required();
    simulate->add_option("--retention-out", out2_path)->required();
    simulate->add_option("--profiles-out", out3_path);
    cfg.attach(simulate);
    sur.attach(simulate);

    auto* sample = app.add_subcommand("sample", "Draw one response per cell from option probabilities");
    sample->add_option("--bank", bank_path)->required()->check(CLI::ExistingFile);
    sample->add_option("--probs", probs_path)->required()->check(CLI::ExistingFile);
    sample->add_option("--retention", retention_path)->check(CLI::ExistingFile);
    sample->add_option("--out", out_path)->required();
    cfg.attach(sample);

    auto* reference = app.add_subcommand("reference", "Generate reference responses, theta ~ N(0,1)");
    reference->add_option("--bank", bank_path)->required()->check(CLI::ExistingFile);
    reference->add_option("--params", params_path)->required()->check(CLI::ExistingFile);
    reference->add_option("--out", out_path)->required();
    cfg.attach(reference);

    auto* fit = app.add_subcommand("fit", "Calibrate 2PL parameters (anchored with --anchors)");
    fit->add_option("--bank", bank_path)->required()->check(CLI::ExistingFile);
    fit->add_option("--responses", responses_path)->required()->check(CLI::ExistingFile);
    fit->add_option("--anchors", anchors_path, "Fix all other items at these values, one target at a time")
        ->check(CLI::ExistingFile);
    fit->add_option("--params-out", out_path)->required();
    fit->add_option("--group-out", out2_path)->required();
    cfg.attach(fit);

    auto* score = app.add_subcommand("score", "MAP ability estimates");
    score->add_option("--bank", bank_path)->required()->check(CLI::ExistingFile);
    score->add_option("--responses", responses_path)->required()->check(CLI::ExistingFile);
    score->add_option("--params", params_path)->required()->check(CLI::ExistingFile);
    score->add_option("--out", out_path)->required();
    cfg.attach(score);

    auto* ctt = app.add_subcommand("ctt", "Classical test statistics");
    ctt->add_option("--bank", bank_path)->required()->check(CLI::ExistingFile);
    ctt->add_option("--responses", responses_path)->required()->check(CLI::ExistingFile);
    ctt->add_option("--corrected-item-total", corrected_text, "true|false")->capture_default_str();
    ctt->add_option("--out", out_path)->required();
    cfg.attach(ctt);

    auto add_compare_inputs = [&](CLI::App* sub) {
        sub->add_option("--ref-params", ref_params_path)->required()->check(CLI::ExistingFile);
        sub->add_option("--cand-params", cand_params_path)->required()->check(CLI::ExistingFile);
        sub->add_option("--ref-ctt", ref_ctt_path)->check(CLI::ExistingFile);
        sub->add_option("--cand-ctt", cand_ctt_path)->check(CLI::ExistingFile);
        sub->add_option("--ref-abilities", ref_abil_path)->check(CLI::ExistingFile);
        sub->add_option("--cand-abilities", cand_abil_path)->check(CLI::ExistingFile);
        sub->add_option("--exclude", exclude, "Item ids left out of the comparison")->delimiter(',');
        cfg.attach(sub);
    };

    auto* compare = app.add_subcommand("compare", "Compare a candidate calibration with a reference one");
    add_compare_inputs(compare);
    compare->add_option("--out", out_path)->required();

    auto* report = app.add_subcommand("report", "Report JSON plus plot-data CSVs");
    add_compare_inputs(report);
    report->add_option("--bank", bank_path)->check(CLI::ExistingFile);
    report->add_option("--responses", responses_path, "Candidate responses (for the score-by-retention table)")
        ->check(CLI::ExistingFile);
    report->add_option("--retention", retention_path)->check(CLI::ExistingFile);
    report->add_option("--out-dir", out_dir)->required();

    auto* run = app.add_subcommand("run", "Full pipeline into one directory");
    run->add_option("--bank", bank_path)->required()->check(CLI::ExistingFile);
    run->add_option("--ref-params", ref_params_path)->required()->check(CLI::ExistingFile);
    run->add_option("--exclude", exclude)->delimiter(',');
    run->add_option("--corrected-item-total", corrected_text, "true|false")->capture_default_str();
    run->add_option("--out-dir", out_dir)->required();
    cfg.attach(run);
    sur.attach(run);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const EngineConfig config = cfg.resolve();
        RunManifest manifest = manifest_for(app.get_subcommands().front()->get_name(), config);
        auto note_in = [&](const char* key, const std::string& path) {
            if (!path.empty()) manifest.inputs[key] = path;
        };
        auto note_out = [&](const char* key, const std::string& path) {
            if (!path.empty()) manifest.outputs[key] = path;
        };
        fs::path primary;

        if (*make_bank) {
            SyntheticBank s = field_test_bank(n_items, config.seed);
            io::write_item_bank(out_path, s.bank);
            io::write_params(out2_path, s.params);
            note_out("bank", out_path);
            note_out("params", out2_path);
            primary = out_path;
        } else if (*simulate) {
            const ItemBank bank = io::read_item_bank(bank_path);
            SimulationOutput sim = cmd_simulate(bank, io::read_params(ref_params_path), config, sur.s);
            io::write_option_probs(out_path, sim.probs);
            io::write_retention(out2_path, sim.probs.examinee_ids, *sim.probs.retention);
            if (!out3_path.empty()) io::write_profiles(out3_path, sim.profiles);
            note_in("bank", bank_path);
            note_in("ref_params", ref_params_path);
            note_out("probs", out_path);
            note_out("retention", out2_path);
            note_out("profiles", out3_path);
            primary = out_path;
        } else if (*sample) {
            const ItemBank bank = io::read_item_bank(bank_path);
            OptionProbMatrix probs = io::read_option_probs(probs_path, bank);
            if (!retention_path.empty()) probs.retention = io::read_retention(retention_path, probs.examinee_ids);
            io::write_responses(out_path, cmd_sample(probs, bank, config.seed));
            note_in("bank", bank_path);
            note_in("probs", probs_path);
            note_in("retention", retention_path);
            note_out("responses", out_path);
            primary = out_path;
        } else if (*reference) {
            const ItemBank bank = io::read_item_bank(bank_path);
            ReferenceData ref = cmd_generate_reference(bank, io::read_params(params_path), config);
            io::write_responses(out_path, ref.responses);
            note_in("bank", bank_path);
            note_in("params", params_path);
            note_out("responses", out_path);
            primary = out_path;
        } else if (*fit) {
            const ItemBank bank = io::read_item_bank(bank_path);
            const ResponseMatrix responses = io::read_responses(responses_path, bank);
            std::optional<ParamSet> anchors;
            if (!anchors_path.empty()) anchors = io::read_params(anchors_path);
            Calibration cal = cmd_fit(responses, config, anchors ? &*anchors : nullptr);
            io::write_params(out_path, cal.params);
            io::write_group(out2_path, cal.group);
            for (std::size_t j = 0; j < cal.converged.size(); ++j)
                if (!cal.converged[j])
                    std::cerr << "warning: estimation: item '" << cal.params[j].item_id << "' did not converge\n";
            note_in("bank", bank_path);
            note_in("responses", responses_path);
            note_in("anchors", anchors_path);
            note_out("params", out_path);
            note_out("group", out2_path);
            primary = out_path;
        } else if (*score) {
            const ItemBank bank = io::read_item_bank(bank_path);
            const ResponseMatrix responses = io::read_responses(responses_path, bank);
            io::write_abilities(out_path, cmd_score(responses, io::read_params(params_path), config));
            note_in("bank", bank_path);
            note_in("responses", responses_path);
            note_in("params", params_path);
            note_out("abilities", out_path);
            primary = out_path;
        } else if (*ctt) {
            const ItemBank bank = io::read_item_bank(bank_path);
            io::write_ctt(out_path, cmd_ctt(io::read_responses(responses_path, bank), parse_bool(corrected_text)));
            note_in("bank", bank_path);
            note_in("responses", responses_path);
            note_out("ctt", out_path);
            primary = out_path;
        } else if (*compare || *report) {
            ReportInputs inputs;
            inputs.reference_params = io::read_params(ref_params_path);
            inputs.candidate_params = io::read_params(cand_params_path);
            if (!ref_ctt_path.empty()) inputs.reference_ctt = io::read_ctt(ref_ctt_path);
            if (!cand_ctt_path.empty()) inputs.candidate_ctt = io::read_ctt(cand_ctt_path);
            if (ref_abil_path.empty() != cand_abil_path.empty())
                throw ValidationError("--ref-abilities and --cand-abilities must be given together");
            if (!ref_abil_path.empty()) {
                inputs.reference_abilities = io::read_abilities(ref_abil_path);
                inputs.candidate_abilities = io::read_abilities(cand_abil_path);
            }
            inputs.exclude = exclude;
            note_in("ref_params", ref_params_path);
            note_in("cand_params", cand_params_path);
            note_in("ref_ctt", ref_ctt_path);
            note_in("cand_ctt", cand_ctt_path);
            note_in("ref_abilities", ref_abil_path);
            note_in("cand_abilities", cand_abil_path);
            if (*compare) {
                io::write_report(out_path, cmd_compare(inputs));
                note_out("report", out_path);
                primary = out_path;
            } else {
                std::optional<ResponseMatrix> responses;
                if (!responses_path.empty()) {
                    if (bank_path.empty()) throw ValidationError("--responses needs --bank");
                    responses = io::read_responses(responses_path, io::read_item_bank(bank_path));
                    if (!retention_path.empty())
                        responses->retention = io::read_retention(retention_path, responses->examinee_ids);
                }
                cmd_report(inputs, responses ? &*responses : nullptr, config.scaling_d, out_dir);
                note_in("bank", bank_path);
                note_in("responses", responses_path);
                note_in("retention", retention_path);
                note_out("dir", out_dir);
                primary = fs::path(out_dir) / "report.json";
            }
        } else if (*run) {
            PipelineOptions options;
            options.config = config;
            options.surrogate = sur.s;
            options.exclude = exclude;
            options.corrected_item_total = parse_bool(corrected_text);
            run_pipeline(io::read_item_bank(bank_path), io::read_params(ref_params_path), options, out_dir);
            return 0; // run_pipeline writes its own manifest
        }
        write_manifest(manifest_path(primary), manifest);
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
