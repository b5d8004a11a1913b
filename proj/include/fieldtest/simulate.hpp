#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fieldtest/types.hpp"

namespace fieldtest {

/// Links retained vocabulary to ability: theta = alpha + beta * retention + Normal(0, sigma_eps^2).
/// With retention ~ U(0,1) the defaults give mean(theta) = -0.29, SD(theta) ~ 1.07
/// and corr(theta, 1 - retention) ~ -0.86.
struct SurrogateConfig {
    double alpha = -1.89;
    double beta = 3.2;
    double sigma_eps = 0.548;
    /// Lower bound on the correct-option probability; 0 leaves the 2PL untouched.
    double guess_floor = 0.0;

    void validate() const;
};

struct ExamineeProfile {
    std::string id;
    double retention = 1.0;
    double theta_true = 0.0;
};

/// The single random stream used by every generator.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Examinee ids "e00001", "e00002", ... (zero padded to at least 5 digits).
std::string examinee_id(std::size_t index);

/// Draws n profiles. Per examinee, in order: retention ~ U(0,1), then the noise term.
std::vector<ExamineeProfile> gen_population(std::size_t n, std::uint64_t seed,
                                            const SurrogateConfig& surrogate = {});

/// Option probabilities for one examinee: the keyed option gets the 2PL
/// probability at theta_true (floored at guess_floor); distractors share the rest equally.
OptionProbMatrix surrogate_option_probs(const std::vector<ExamineeProfile>& profiles, const ItemBank& bank,
                                        const ParamSet& params_ref, double d,
                                        const SurrogateConfig& surrogate = {});

/// Abilities drawn iid from `group`.
VectorXd draw_thetas(std::size_t n, const GroupDist& group, std::uint64_t seed);

/// Scored cells are Bernoulli(P_2PL); chosen is the key on success and a
/// uniformly drawn distractor otherwise. Cells are consumed examinee-major.
ResponseMatrix gen_responses_2pl(const Eigen::Ref<const VectorXd>& thetas, const ItemBank& bank,
                                 const ParamSet& params, double d, std::uint64_t seed);

/// One inverse-CDF draw per cell, examinee-major in bank order.
ResponseMatrix sample_responses(const OptionProbMatrix& probs, const ItemBank& bank, std::uint64_t seed);

struct SyntheticBank {
    ItemBank bank;
    ParamSet params;
};

/// A synthetic bank whose 2PL parameters follow the human calibration
/// moments (a: mean .66, SD .26; b: mean .05, SD .83, right skewed), with
/// four placeholder options per item and seeded keys and pairings.
SyntheticBank field_test_bank(std::size_t n_items, std::uint64_t seed);

} // namespace fieldtest
