#include "fieldtest/types.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace fieldtest {

std::vector<std::string> ItemBank::item_ids() const
{
    std::vector<std::string> ids;
    ids.reserve(items.size());
    for (const auto& item : items) ids.push_back(item.id);
    return ids;
}

int ItemBank::index_of(const std::string& id) const
{
    for (std::size_t j = 0; j < items.size(); ++j)
        if (items[j].id == id) return static_cast<int>(j);
    return -1;
}

void ItemBank::validate() const
{
    if (items.empty()) throw ValidationError("item bank is empty");
    std::unordered_set<std::string> seen;
    for (const auto& item : items) {
        if (item.id.empty()) throw ValidationError("item with empty id");
        if (!seen.insert(item.id).second)
            throw ValidationError("duplicate item id '" + item.id + "'");
        if (item.options.size() < 2)
            throw ValidationError("item '" + item.id + "' has fewer than 2 options");
        for (const auto& opt : item.options)
            if (opt.empty()) throw ValidationError("item '" + item.id + "' has an empty option");
        if (item.key < 0 || item.key >= item.n_options())
            throw ValidationError("item '" + item.id + "' key " + std::to_string(item.key) +
                                  " out of range for " + std::to_string(item.n_options()) + " options");
    }
}

OptionProbMatrix OptionProbMatrix::shaped_for(const ItemBank& bank, std::vector<std::string> examinee_ids)
{
    OptionProbMatrix m;
    m.examinee_ids = std::move(examinee_ids);
    m.item_ids = bank.item_ids();
    int width = 0;
    for (const auto& item : bank.items) {
        m.offsets.push_back(width);
        m.n_options.push_back(item.n_options());
        width += item.n_options();
    }
    m.probs = MatrixXd::Zero(static_cast<Eigen::Index>(m.examinee_ids.size()), width);
    return m;
}

void OptionProbMatrix::validate(const ItemBank& bank) const
{
    if (offsets.size() != item_ids.size() || n_options.size() != item_ids.size())
        throw ValidationError("option-probability layout does not match its item list");
    if (probs.rows() != static_cast<Eigen::Index>(examinee_ids.size()))
        throw ValidationError("option-probability row count does not match examinee list");
    if (retention && retention->size() != probs.rows())
        throw ValidationError("retention vector length does not match examinee count");
    for (std::size_t j = 0; j < item_ids.size(); ++j) {
        int bj = bank.index_of(item_ids[j]);
        if (bj < 0) throw ValidationError("item '" + item_ids[j] + "' is not in the bank");
        if (bank.items[bj].n_options() != n_options[j])
            throw ValidationError("item '" + item_ids[j] + "' option count mismatch with bank");
    }
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        for (std::size_t j = 0; j < item_ids.size(); ++j) {
            auto v = cell(i, static_cast<Eigen::Index>(j));
            if (!v.allFinite() || (v.array() < 0.0).any())
                throw ValidationError("examinee '" + examinee_ids[i] + "' item '" + item_ids[j] +
                                      "': negative or non-finite probability");
            if (std::abs(v.sum() - 1.0) > 1e-6)
                throw ValidationError("examinee '" + examinee_ids[i] + "' item '" + item_ids[j] +
                                      "': probabilities sum to " + std::to_string(v.sum()));
        }
    }
    if (retention) {
        for (Eigen::Index i = 0; i < retention->size(); ++i) {
            double r = (*retention)(i);
            if (!(r >= 0.0 && r <= 1.0))
                throw ValidationError("examinee '" + examinee_ids[i] + "': retention outside [0,1]");
        }
    }
}

void ResponseMatrix::rescore(const ItemBank& bank)
{
    scored.resize(chosen.rows(), chosen.cols());
    for (Eigen::Index j = 0; j < chosen.cols(); ++j) {
        int bj = bank.index_of(item_ids[j]);
        if (bj < 0) throw ValidationError("item '" + item_ids[j] + "' is not in the bank");
        scored.col(j) = (chosen.col(j).array() == bank.items[bj].key).cast<int>();
    }
}

void ResponseMatrix::validate(const ItemBank& bank) const
{
    if (chosen.rows() != static_cast<Eigen::Index>(examinee_ids.size()) ||
        chosen.cols() != static_cast<Eigen::Index>(item_ids.size()) ||
        scored.rows() != chosen.rows() || scored.cols() != chosen.cols())
        throw ValidationError("response matrix dimensions are inconsistent");
    if (retention && retention->size() != chosen.rows())
        throw ValidationError("retention vector length does not match examinee count");
    for (Eigen::Index j = 0; j < chosen.cols(); ++j) {
        int bj = bank.index_of(item_ids[j]);
        if (bj < 0) throw ValidationError("item '" + item_ids[j] + "' is not in the bank");
        const Item& item = bank.items[bj];
        for (Eigen::Index i = 0; i < chosen.rows(); ++i) {
            int c = chosen(i, j);
            if (c < 0 || c >= item.n_options())
                throw ValidationError("examinee '" + examinee_ids[i] + "' item '" + item.id +
                                      "': chosen option out of range");
            if (scored(i, j) != (c == item.key ? 1 : 0))
                throw ValidationError("examinee '" + examinee_ids[i] + "' item '" + item.id +
                                      "': scored value disagrees with chosen option and key");
        }
    }
}

ParamSet align_params(const ParamSet& params, const std::vector<std::string>& item_ids)
{
    std::unordered_map<std::string, const ItemParams2PL*> by_id;
    for (const auto& p : params) by_id[p.item_id] = &p;
    ParamSet out;
    out.reserve(item_ids.size());
    for (const auto& id : item_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError("no parameters for item '" + id + "'");
        out.push_back(*it->second);
    }
    return out;
}

VectorXd discriminations(const ParamSet& params)
{
    VectorXd a(static_cast<Eigen::Index>(params.size()));
    for (std::size_t j = 0; j < params.size(); ++j) a(j) = params[j].a;
    return a;
}

VectorXd difficulties(const ParamSet& params)
{
    VectorXd b(static_cast<Eigen::Index>(params.size()));
    for (std::size_t j = 0; j < params.size(); ++j) b(j) = params[j].b;
    return b;
}

void GroupDist::validate() const
{
    if (!std::isfinite(mean)) throw ValidationError("group mean is not finite");
    if (!(sd > 0.0) || !std::isfinite(sd)) throw ValidationError("group sd must be positive and finite");
}

void EngineConfig::validate() const
{
    if (!(scaling_d > 0.0)) throw ValidationError("scaling_d must be positive");
    if (quad_points < 11 || quad_points % 2 == 0) throw ValidationError("quad_points must be odd and >= 11");
    if (!(quad_range > 0.0)) throw ValidationError("quad_range must be positive");
    if (max_em_iter < 1) throw ValidationError("max_em_iter must be positive");
    if (!(em_tol > 0.0)) throw ValidationError("em_tol must be positive");
    if (!(a_min > 0.0) || !(a_max > a_min)) throw ValidationError("a_bounds must satisfy 0 < a_min < a_max");
    if (!(b_max > b_min)) throw ValidationError("b_bounds must satisfy b_min < b_max");
    if (!(prior_variance > 0.0)) throw ValidationError("prior_variance must be positive");
    if (n_examinees < 1) throw ValidationError("n_examinees must be positive");
}

void to_json(nlohmann::json& j, const EngineConfig& c)
{
    j = nlohmann::json{{"seed", c.seed},
                       {"scaling_d", c.scaling_d},
                       {"quad_points", c.quad_points},
                       {"quad_range", c.quad_range},
                       {"max_em_iter", c.max_em_iter},
                       {"em_tol", c.em_tol},
                       {"a_bounds", {c.a_min, c.a_max}},
                       {"b_bounds", {c.b_min, c.b_max}},
                       {"prior_variance", c.prior_variance},
                       {"n_examinees", c.n_examinees}};
}

void from_json(const nlohmann::json& j, EngineConfig& c)
{
    if (!j.is_object()) throw ParseError("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "scaling_d") c.scaling_d = value.get<double>();
        else if (key == "quad_points") c.quad_points = value.get<int>();
        else if (key == "quad_range") c.quad_range = value.get<double>();
        else if (key == "max_em_iter") c.max_em_iter = value.get<int>();
        else if (key == "em_tol") c.em_tol = value.get<double>();
        else if (key == "a_bounds") { c.a_min = value.at(0).get<double>(); c.a_max = value.at(1).get<double>(); }
        else if (key == "b_bounds") { c.b_min = value.at(0).get<double>(); c.b_max = value.at(1).get<double>(); }
        else if (key == "prior_variance") c.prior_variance = value.get<double>();
        else if (key == "n_examinees") c.n_examinees = value.get<int>();
        else throw ParseError("unknown config key '" + key + "'");
    }
}

} // namespace fieldtest
