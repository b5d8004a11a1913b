#include "fieldtest/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace fieldtest {

namespace {

std::optional<double> opt_from_json(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

nlohmann::json opt_to_json(const std::optional<double>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

void require_same_length(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& y)
{
    if (x.size() != y.size())
        throw ValidationError("length mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    if (x.size() < 1) throw ValidationError("empty input");
}

double population_variance(const Eigen::Ref<const VectorXd>& x)
{
    return (x.array() - x.mean()).square().mean();
}

std::optional<double> pearson_or_empty(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& y)
{
    VectorXd dx = x.array() - x.mean();
    VectorXd dy = y.array() - y.mean();
    double sxx = dx.squaredNorm();
    double syy = dy.squaredNorm();
    if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
    return dx.dot(dy) / std::sqrt(sxx * syy);
}

std::optional<double> spearman_or_empty(const VectorXd& x, const VectorXd& y)
{
    if (x.size() < 2) return std::nullopt;
    return pearson_or_empty(average_ranks(x), average_ranks(y));
}

} // namespace

const StatComparison& ComparisonSummary::at(const std::string& statistic) const
{
    for (const auto& row : rows)
        if (row.statistic == statistic) return row;
    throw ValidationError("no comparison row for '" + statistic + "'");
}

Descriptives describe(const Eigen::Ref<const VectorXd>& x)
{
    if (x.size() == 0) throw ValidationError("cannot describe an empty vector");
    Descriptives d;
    d.n = static_cast<std::size_t>(x.size());
    d.mean = x.mean();
    d.sd = x.size() > 1 ? std::sqrt((x.array() - d.mean).square().sum() / double(x.size() - 1)) : 0.0;
    std::vector<double> sorted(x.data(), x.data() + x.size());
    std::sort(sorted.begin(), sorted.end());
    std::size_t n = sorted.size();
    d.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    d.min = sorted.front();
    d.max = sorted.back();
    return d;
}

VectorXd proportion_correct(const ResponseMatrix& responses)
{
    if (responses.n_examinees() == 0) throw ValidationError("response matrix has no examinees");
    return responses.scored_real().colwise().mean().transpose();
}

std::vector<std::optional<double>> item_total_correlation(const ResponseMatrix& responses, bool corrected)
{
    MatrixXd u = responses.scored_real();
    VectorXd total = u.rowwise().sum();
    std::vector<std::optional<double>> out;
    out.reserve(static_cast<std::size_t>(u.cols()));
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
        VectorXd other = corrected ? VectorXd(total - u.col(j)) : total;
        out.push_back(pearson_or_empty(u.col(j), other));
    }
    return out;
}

double cronbach_alpha(const ResponseMatrix& responses)
{
    const auto k = responses.n_items();
    if (k < 2) throw ValidationError("cronbach alpha needs at least 2 items");
    if (responses.n_examinees() == 0) throw ValidationError("response matrix has no examinees");
    MatrixXd u = responses.scored_real();
    double item_var = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) item_var += population_variance(u.col(j));
    double total_var = population_variance(u.rowwise().sum());
    if (!(total_var > 0.0)) throw ValidationError("total score variance is zero");
    return double(k) / double(k - 1) * (1.0 - item_var / total_var);
}

CttTable ctt_table(const ResponseMatrix& responses, bool corrected)
{
    CttTable t;
    t.item_ids = responses.item_ids;
    t.corrected = corrected;
    t.proportion_correct = proportion_correct(responses);
    t.item_total_r = item_total_correlation(responses, corrected);
    try {
        t.cronbach_alpha = cronbach_alpha(responses);
    } catch (const ValidationError&) {
        t.cronbach_alpha.reset();
    }
    VectorXd score = responses.scored_real().rowwise().mean();
    t.mean_score = score.mean();
    t.sd_score = std::sqrt(population_variance(score));
    return t;
}

double bias(const Eigen::Ref<const VectorXd>& est, const Eigen::Ref<const VectorXd>& ref)
{
    require_same_length(est, ref);
    return (est - ref).mean();
}

double rmse(const Eigen::Ref<const VectorXd>& est, const Eigen::Ref<const VectorXd>& ref)
{
    require_same_length(est, ref);
    return std::sqrt((est - ref).array().square().mean());
}

double pearson(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& y)
{
    require_same_length(x, y);
    auto r = pearson_or_empty(x, y);
    if (!r) throw ValidationError("correlation undefined for a constant vector");
    return *r;
}

VectorXd average_ranks(const Eigen::Ref<const VectorXd>& x)
{
    const auto n = x.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return x(l) < x(r); });
    VectorXd ranks(n);
    for (Eigen::Index start = 0; start < n;) {
        Eigen::Index end = start + 1;
        while (end < n && x(order[end]) == x(order[start])) ++end;
        double rank = 0.5 * double(start + 1 + end);
        for (Eigen::Index k = start; k < end; ++k) ranks(order[k]) = rank;
        start = end;
    }
    return ranks;
}

double spearman(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& y)
{
    require_same_length(x, y);
    if (x.size() < 2) throw ValidationError("spearman needs at least 2 pairs");
    auto r = pearson_or_empty(average_ranks(x), average_ranks(y));
    if (!r) throw ValidationError("spearman undefined for a constant vector");
    return *r;
}

namespace {

struct AlignedItems {
    std::vector<std::string> ids;          // compared items, reference order
    std::vector<std::string> excluded_ids; // as recorded
    ParamSet reference;
    ParamSet candidate;
};

AlignedItems align_items(const ParamSet& reference, const ParamSet& candidate,
                         const std::vector<std::string>& exclude)
{
    std::set<std::string> known;
    for (const auto& p : reference) known.insert(p.item_id);
    std::set<std::string> excluded;
    AlignedItems out;
    for (const auto& id : exclude) {
        if (!known.count(id)) throw ValidationError("excluded item '" + id + "' is not in the reference calibration");
        if (excluded.insert(id).second) out.excluded_ids.push_back(id);
    }
    std::set<std::string> candidate_ids;
    for (const auto& p : candidate) candidate_ids.insert(p.item_id);
    for (const auto& p : reference) {
        if (excluded.count(p.item_id)) continue;
        out.ids.push_back(p.item_id);
    }
    for (const auto& id : candidate_ids)
        if (!excluded.count(id) && !known.count(id))
            throw ValidationError("item '" + id + "' is in the candidate calibration only");
    if (out.ids.empty()) throw ValidationError("no items left to compare after exclusion");
    out.reference = align_params(reference, out.ids);
    out.candidate = align_params(candidate, out.ids);
    return out;
}

StatComparison compare_values(const std::string& name, const VectorXd& ref, const VectorXd& cand,
                              bool with_bias)
{
    StatComparison s;
    s.statistic = name;
    s.n = static_cast<std::size_t>(ref.size());
    if (with_bias) {
        s.bias = bias(cand, ref);
        s.rmse = rmse(cand, ref);
    }
    s.spearman = spearman_or_empty(ref, cand);
    return s;
}

std::optional<double> ctt_value(const CttTable& t, const std::string& id, bool item_total)
{
    for (std::size_t j = 0; j < t.item_ids.size(); ++j) {
        if (t.item_ids[j] != id) continue;
        if (item_total) return t.item_total_r[j];
        return t.proportion_correct(static_cast<Eigen::Index>(j));
    }
    return std::nullopt;
}

StatComparison compare_ctt(const std::string& name, const std::vector<std::string>& ids,
                           const CttTable& ref, const CttTable& cand, bool item_total)
{
    std::vector<double> r, c;
    StatComparison s;
    s.statistic = name;
    for (const auto& id : ids) {
        auto rv = ctt_value(ref, id, item_total);
        auto cv = ctt_value(cand, id, item_total);
        if (rv && cv) {
            r.push_back(*rv);
            c.push_back(*cv);
        } else {
            s.missing_ids.push_back(id);
        }
    }
    s.n = r.size();
    s.spearman = spearman_or_empty(Eigen::Map<VectorXd>(r.data(), Eigen::Index(r.size())),
                                   Eigen::Map<VectorXd>(c.data(), Eigen::Index(c.size())));
    return s;
}

} // namespace

ComparisonSummary compare_calibrations(const ParamSet& reference, const ParamSet& candidate,
                                       const CttTable* ctt_reference, const CttTable* ctt_candidate,
                                       const Eigen::Ref<const VectorXd>& thetas_reference,
                                       const Eigen::Ref<const VectorXd>& thetas_candidate,
                                       const std::vector<std::string>& exclude)
{
    AlignedItems items = align_items(reference, candidate, exclude);
    ComparisonSummary out;
    out.excluded_ids = items.excluded_ids;
    if (thetas_reference.size() != thetas_candidate.size())
        throw ValidationError("ability vectors differ in length");
    if (thetas_reference.size() > 0)
        out.rows.push_back(compare_values("theta", thetas_reference, thetas_candidate, true));
    out.rows.push_back(compare_values("a", discriminations(items.reference), discriminations(items.candidate), true));
    out.rows.push_back(compare_values("b", difficulties(items.reference), difficulties(items.candidate), true));
    if (ctt_reference && ctt_candidate) {
        out.rows.push_back(compare_ctt("proportion_correct", items.ids, *ctt_reference, *ctt_candidate, false));
        out.rows.push_back(compare_ctt("item_total_r", items.ids, *ctt_reference, *ctt_candidate, true));
    }
    return out;
}

Report build_report(const ParamSet& reference, const ParamSet& candidate,
                    const CttTable* ctt_reference, const CttTable* ctt_candidate,
                    const Eigen::Ref<const VectorXd>& thetas_reference,
                    const Eigen::Ref<const VectorXd>& thetas_candidate,
                    const std::vector<std::string>& exclude)
{
    Report report;
    report.summary = compare_calibrations(reference, candidate, ctt_reference, ctt_candidate,
                                          thetas_reference, thetas_candidate, exclude);
    std::set<std::string> excluded(report.summary.excluded_ids.begin(), report.summary.excluded_ids.end());
    std::vector<std::string> ids;
    for (const auto& p : reference) ids.push_back(p.item_id);
    ParamSet cand = align_params(candidate, ids);

    for (std::size_t j = 0; j < ids.size(); ++j) {
        ReportItemRow row;
        row.item_id = ids[j];
        row.excluded = excluded.count(ids[j]) > 0;
        row.a_reference = reference[j].a;
        row.b_reference = reference[j].b;
        row.a_candidate = cand[j].a;
        row.b_candidate = cand[j].b;
        if (ctt_reference) {
            row.proportion_correct_reference = ctt_value(*ctt_reference, ids[j], false);
            row.item_total_r_reference = ctt_value(*ctt_reference, ids[j], true);
        }
        if (ctt_candidate) {
            row.proportion_correct_candidate = ctt_value(*ctt_candidate, ids[j], false);
            row.item_total_r_candidate = ctt_value(*ctt_candidate, ids[j], true);
        }
        report.per_item.push_back(std::move(row));
    }

    auto describe_side = [&](const std::string& side, const ParamSet& params, const CttTable* ctt,
                             const Eigen::Ref<const VectorXd>& thetas) {
        auto& block = report.descriptives[side];
        if (thetas.size() > 0) block["theta"] = describe(thetas);
        block["a"] = describe(discriminations(params));
        block["b"] = describe(difficulties(params));
        if (!ctt) return;
        block["proportion_correct"] = describe(ctt->proportion_correct);
        std::vector<double> itr;
        for (const auto& v : ctt->item_total_r)
            if (v) itr.push_back(*v);
        if (!itr.empty())
            block["item_total_r"] = describe(Eigen::Map<VectorXd>(itr.data(), Eigen::Index(itr.size())));
        report.test_level[side + "_mean_score"] = ctt->mean_score;
        report.test_level[side + "_sd_score"] = ctt->sd_score;
        if (ctt->cronbach_alpha) report.test_level[side + "_cronbach_alpha"] = *ctt->cronbach_alpha;
    };
    describe_side("reference", reference, ctt_reference, thetas_reference);
    describe_side("candidate", cand, ctt_candidate, thetas_candidate);
    return report;
}

void to_json(nlohmann::json& j, const StatComparison& s)
{
    j = nlohmann::json{{"statistic", s.statistic},
                       {"bias", opt_to_json(s.bias)},
                       {"rmse", opt_to_json(s.rmse)},
                       {"spearman", opt_to_json(s.spearman)},
                       {"n", s.n},
                       {"missing_ids", s.missing_ids}};
}

void from_json(const nlohmann::json& j, StatComparison& s)
{
    s.statistic = j.at("statistic").get<std::string>();
    s.bias = opt_from_json(j, "bias");
    s.rmse = opt_from_json(j, "rmse");
    s.spearman = opt_from_json(j, "spearman");
    s.n = j.at("n").get<std::size_t>();
    s.missing_ids = j.value("missing_ids", std::vector<std::string>{});
}

void to_json(nlohmann::json& j, const ComparisonSummary& s)
{
    j = nlohmann::json{{"statistics", s.rows}, {"excluded_ids", s.excluded_ids}};
}

void from_json(const nlohmann::json& j, ComparisonSummary& s)
{
    s.rows = j.at("statistics").get<std::vector<StatComparison>>();
    s.excluded_ids = j.at("excluded_ids").get<std::vector<std::string>>();
}

void to_json(nlohmann::json& j, const Descriptives& d)
{
    j = nlohmann::json{{"mean", d.mean}, {"sd", d.sd}, {"median", d.median},
                       {"min", d.min},   {"max", d.max}, {"n", d.n}};
}

void from_json(const nlohmann::json& j, Descriptives& d)
{
    d.mean = j.at("mean").get<double>();
    d.sd = j.at("sd").get<double>();
    d.median = j.at("median").get<double>();
    d.min = j.at("min").get<double>();
    d.max = j.at("max").get<double>();
    d.n = j.at("n").get<std::size_t>();
}

void to_json(nlohmann::json& j, const Report& r)
{
    nlohmann::json items = nlohmann::json::array();
    for (const auto& row : r.per_item) {
        items.push_back({{"item_id", row.item_id},
                         {"excluded", row.excluded},
                         {"a", {{"reference", row.a_reference}, {"candidate", row.a_candidate}}},
                         {"b", {{"reference", row.b_reference}, {"candidate", row.b_candidate}}},
                         {"proportion_correct",
                          {{"reference", opt_to_json(row.proportion_correct_reference)},
                           {"candidate", opt_to_json(row.proportion_correct_candidate)}}},
                         {"item_total_r",
                          {{"reference", opt_to_json(row.item_total_r_reference)},
                           {"candidate", opt_to_json(row.item_total_r_candidate)}}}});
    }
    j = nlohmann::json{{"per_item", items},
                       {"summary", r.summary},
                       {"descriptives", r.descriptives},
                       {"test_level", r.test_level}};
}

void from_json(const nlohmann::json& j, Report& r)
{
    r.per_item.clear();
    for (const auto& it : j.at("per_item")) {
        ReportItemRow row;
        row.item_id = it.at("item_id").get<std::string>();
        row.excluded = it.at("excluded").get<bool>();
        row.a_reference = it.at("a").at("reference").get<double>();
        row.a_candidate = it.at("a").at("candidate").get<double>();
        row.b_reference = it.at("b").at("reference").get<double>();
        row.b_candidate = it.at("b").at("candidate").get<double>();
        row.proportion_correct_reference = opt_from_json(it.at("proportion_correct"), "reference");
        row.proportion_correct_candidate = opt_from_json(it.at("proportion_correct"), "candidate");
        row.item_total_r_reference = opt_from_json(it.at("item_total_r"), "reference");
        row.item_total_r_candidate = opt_from_json(it.at("item_total_r"), "candidate");
        r.per_item.push_back(std::move(row));
    }
    r.summary = j.at("summary").get<ComparisonSummary>();
    r.descriptives = j.at("descriptives").get<std::map<std::string, std::map<std::string, Descriptives>>>();
    r.test_level = j.value("test_level", std::map<std::string, double>{});
}

void to_json(nlohmann::json& j, const CttTable& t)
{
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t k = 0; k < t.item_ids.size(); ++k)
        items.push_back({{"item_id", t.item_ids[k]},
                         {"proportion_correct", t.proportion_correct(Eigen::Index(k))},
                         {"item_total_r", opt_to_json(t.item_total_r[k])}});
    j = nlohmann::json{{"items", items},
                       {"corrected", t.corrected},
                       {"cronbach_alpha", opt_to_json(t.cronbach_alpha)},
                       {"mean_score", t.mean_score},
                       {"sd_score", t.sd_score}};
}

void from_json(const nlohmann::json& j, CttTable& t)
{
    const auto& items = j.at("items");
    t.item_ids.clear();
    t.item_total_r.clear();
    t.proportion_correct.resize(Eigen::Index(items.size()));
    for (std::size_t k = 0; k < items.size(); ++k) {
        t.item_ids.push_back(items[k].at("item_id").get<std::string>());
        t.proportion_correct(Eigen::Index(k)) = items[k].at("proportion_correct").get<double>();
        t.item_total_r.push_back(opt_from_json(items[k], "item_total_r"));
    }
    t.corrected = j.at("corrected").get<bool>();
    t.cronbach_alpha = opt_from_json(j, "cronbach_alpha");
    t.mean_score = j.at("mean_score").get<double>();
    t.sd_score = j.at("sd_score").get<double>();
}

} // namespace fieldtest
