#include "fieldtest/simulate.hpp"

#include <cmath>
#include <cstdio>

#include <boost/math/special_functions/erf.hpp>

#include "fieldtest/irt.hpp"

namespace fieldtest {

namespace {

// Standard normal quantile.
double normal_quantile(double p)
{
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

VectorXd standardized(VectorXd x)
{
    if (x.size() < 2) return VectorXd::Zero(x.size());
    x.array() -= x.mean();
    return x / std::sqrt(x.squaredNorm() / double(x.size() - 1));
}

int uniform_index(Rng& rng, int n)
{
    return std::min(n - 1, static_cast<int>(uniform01(rng) * n));
}

} // namespace

void SurrogateConfig::validate() const
{
    if (!(beta > 0.0)) throw ValidationError("surrogate beta must be positive");
    if (!(sigma_eps >= 0.0)) throw ValidationError("surrogate sigma_eps must be non-negative");
    if (!(guess_floor >= 0.0 && guess_floor <= 1.0)) throw ValidationError("guess_floor must lie in [0, 1]");
}

std::string examinee_id(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "e%05zu", index + 1);
    return buf;
}

std::vector<ExamineeProfile> gen_population(std::size_t n, std::uint64_t seed, const SurrogateConfig& surrogate)
{
    surrogate.validate();
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<ExamineeProfile> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ExamineeProfile p;
        p.id = examinee_id(i);
        p.retention = uniform01(rng);
        p.theta_true = surrogate.alpha + surrogate.beta * p.retention + surrogate.sigma_eps * noise(rng);
        out.push_back(std::move(p));
    }
    return out;
}

OptionProbMatrix surrogate_option_probs(const std::vector<ExamineeProfile>& profiles, const ItemBank& bank,
                                        const ParamSet& params_ref, double d, const SurrogateConfig& surrogate)
{
    surrogate.validate();
    const ParamSet params = align_params(params_ref, bank.item_ids());
    std::vector<std::string> ids;
    ids.reserve(profiles.size());
    for (const auto& p : profiles) ids.push_back(p.id);
    OptionProbMatrix m = OptionProbMatrix::shaped_for(bank, std::move(ids));
    m.retention = VectorXd(static_cast<Eigen::Index>(profiles.size()));

    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        (*m.retention)(row) = profiles[i].retention;
        for (std::size_t j = 0; j < bank.size(); ++j) {
            const Item& item = bank.items[j];
            double correct = prob_2pl(profiles[i].theta_true, params[j].a, params[j].b, d);
            correct = std::max(correct, surrogate.guess_floor);
            auto cell = m.cell(row, static_cast<Eigen::Index>(j));
            cell.setConstant((1.0 - correct) / double(item.n_options() - 1));
            cell(item.key) = correct;
        }
    }
    return m;
}

VectorXd draw_thetas(std::size_t n, const GroupDist& group, std::uint64_t seed)
{
    group.validate();
    Rng rng(seed);
    std::normal_distribution<double> normal(group.mean, group.sd);
    VectorXd t(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = normal(rng);
    return t;
}

ResponseMatrix gen_responses_2pl(const Eigen::Ref<const VectorXd>& thetas, const ItemBank& bank,
                                 const ParamSet& params, double d, std::uint64_t seed)
{
    const ParamSet aligned = align_params(params, bank.item_ids());
    const auto n = thetas.size();
    const auto k = static_cast<Eigen::Index>(bank.size());
    ResponseMatrix r;
    r.item_ids = bank.item_ids();
    for (Eigen::Index i = 0; i < n; ++i) r.examinee_ids.push_back(examinee_id(static_cast<std::size_t>(i)));
    r.chosen.resize(n, k);
    r.scored.resize(n, k);

    Rng rng(seed);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const Item& item = bank.items[static_cast<std::size_t>(j)];
            const auto& p = aligned[static_cast<std::size_t>(j)];
            if (uniform01(rng) < prob_2pl(thetas(i), p.a, p.b, d)) {
                r.chosen(i, j) = item.key;
                r.scored(i, j) = 1;
            } else {
                int pick = uniform_index(rng, item.n_options() - 1);
                r.chosen(i, j) = pick >= item.key ? pick + 1 : pick;
                r.scored(i, j) = 0;
            }
        }
    }
    return r;
}

ResponseMatrix sample_responses(const OptionProbMatrix& probs, const ItemBank& bank, std::uint64_t seed)
{
    probs.validate(bank);
    ResponseMatrix r;
    r.examinee_ids = probs.examinee_ids;
    r.item_ids = probs.item_ids;
    r.retention = probs.retention;
    const auto n = static_cast<Eigen::Index>(probs.n_examinees());
    const auto k = static_cast<Eigen::Index>(probs.n_items());
    r.chosen.resize(n, k);

    Rng rng(seed);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const auto v = probs.cell(i, j);
            const double u = uniform01(rng);
            double cum = 0.0;
            int pick = -1;
            for (Eigen::Index o = 0; o < v.size(); ++o) {
                cum += v(o);
                if (u < cum) {
                    pick = static_cast<int>(o);
                    break;
                }
            }
            // Rounding left u above the last partial sum: take the last option with mass.
            if (pick < 0)
                for (Eigen::Index o = v.size() - 1; o >= 0 && pick < 0; --o)
                    if (v(o) > 0.0) pick = static_cast<int>(o);
            r.chosen(i, j) = pick;
        }
    }
    r.rescore(bank);
    return r;
}

SyntheticBank field_test_bank(std::size_t n_items, std::uint64_t seed)
{
    if (n_items == 0) throw ValidationError("synthetic bank needs at least one item");
    const auto k = static_cast<Eigen::Index>(n_items);
    VectorXd z(k);
    for (Eigen::Index j = 0; j < k; ++j) z(j) = normal_quantile((double(j) + 0.5) / double(k));
    z = standardized(z);

    // Shifted lognormal with log-scale SD 0.6475 matches the skew of the
    // human difficulties (median below mean, long right tail).
    const VectorXd skewed = standardized((0.6475 * z.array()).exp().matrix());
    VectorXd a = (0.66 + 0.26 * z.array()).max(0.19).matrix();
    VectorXd b = (0.05 + 0.83 * skewed.array()).matrix();

    Rng rng(seed);
    for (Eigen::Index j = k - 1; j > 0; --j) {
        Eigen::Index swap_with = uniform_index(rng, static_cast<int>(j + 1));
        std::swap(b(j), b(swap_with));
    }

    SyntheticBank out;
    out.bank.metadata = {{"source", "synthetic"}, {"generator", "field_test_bank"}, {"seed", seed}};
    for (Eigen::Index j = 0; j < k; ++j) {
        char id[32];
        std::snprintf(id, sizeof id, "item%02ld", static_cast<long>(j + 1));
        Item item;
        item.id = id;
        item.stem = std::string("Synthetic item ") + std::to_string(j + 1);
        item.options = {"Option A", "Option B", "Option C", "Option D"};
        item.key = uniform_index(rng, 4);
        out.bank.items.push_back(item);
        out.params.push_back({item.id, a(j), b(j)});
    }
    return out;
}

} // namespace fieldtest
