#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fieldtest/types.hpp"

namespace fieldtest {

/// Logistic function. The negative half is evaluated as 1 - logistic(-z),
/// which is exact there, so logistic(z) + logistic(-z) == 1 bitwise.
template <class Scalar>
Scalar logistic(Scalar z)
{
    using std::exp;
    if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
    return Scalar(1) - Scalar(1) / (Scalar(1) + exp(z));
}

/// log(logistic(z)) without overflow or cancellation.
template <class Scalar>
Scalar log_logistic(Scalar z)
{
    using std::exp;
    using std::log1p;
    if (z >= Scalar(0)) return -log1p(exp(-z));
    return z - log1p(exp(z));
}

/// 2PL response function 1 / (1 + exp(-D a (theta - b))).
template <class Scalar>
Scalar prob_2pl(Scalar theta, Scalar a, Scalar b, Scalar d)
{
    return logistic((d * a) * (theta - b));
}

/// Elementwise 2PL over an array of abilities.
template <class Derived>
auto prob_2pl(const Eigen::ArrayBase<Derived>& theta, typename Derived::Scalar a,
              typename Derived::Scalar b, typename Derived::Scalar d)
{
    using Scalar = typename Derived::Scalar;
    const Scalar slope = d * a;
    return theta.unaryExpr([slope, b](Scalar t) { return logistic(slope * (t - b)); });
}

/// Bernoulli log-likelihood of one examinee's pattern at `theta`.
/// Entries of `pattern` are 0/1; negative entries are unanswered and skipped.
template <class Scalar>
Scalar loglik(const Eigen::Ref<const VectorXi>& pattern, const Eigen::Ref<const vec_type<Scalar>>& a,
              const Eigen::Ref<const vec_type<Scalar>>& b, Scalar d, Scalar theta)
{
    Scalar sum(0);
    for (Eigen::Index j = 0; j < pattern.size(); ++j) {
        if (pattern(j) < 0) continue;
        Scalar z = (d * a(j)) * (theta - b(j));
        sum += pattern(j) ? log_logistic(z) : log_logistic(-z);
    }
    return sum;
}

struct QuadratureGrid {
    VectorXd nodes;
    VectorXd weights;
};

/// Equally spaced nodes on [-quad_range, quad_range]; weights proportional to
/// the normal density under `group`, normalized to sum to 1.
QuadratureGrid make_quadrature(const EngineConfig& config, const GroupDist& group);

/// Normalized normal weights for `group` on fixed `nodes`.
VectorXd normal_weights(const Eigen::Ref<const VectorXd>& nodes, const GroupDist& group);

/// Expected complete-data log-likelihood of one item given posterior counts:
/// sum_q r_q log P_q + (n_q - r_q) log(1 - P_q).
class ItemObjective {
public:
    ItemObjective(VectorXd nodes, VectorXd correct, VectorXd total, double d);

    double value(double a, double b) const;
    /// Gradient with respect to (a, b).
    Eigen::Vector2d gradient(double a, double b) const;

    const VectorXd& nodes() const { return nodes_; }
    const VectorXd& correct() const { return correct_; }
    const VectorXd& total() const { return total_; }
    double scaling() const { return d_; }

private:
    VectorXd nodes_;
    VectorXd correct_;
    VectorXd total_;
    double d_;
};

struct ItemBounds {
    double a_min = 0.01, a_max = 5.0;
    double b_min = -10.0, b_max = 25.0;

    static ItemBounds from(const EngineConfig& c) { return {c.a_min, c.a_max, c.b_min, c.b_max}; }
};

/// Bounded maximization of an ItemObjective from `start`; never decreases the objective.
/// Newton steps in slope/intercept form with step halving, then single-coordinate
/// steps when the bounds block the joint step.
ItemParams2PL maximize_item(const ItemObjective& objective, const ItemParams2PL& start,
                            const ItemBounds& bounds, int max_iter = 25);

struct FitResult {
    ParamSet params;
    GroupDist group;
    double loglik = 0.0;
    int n_iter = 0;
    bool converged = false;
    /// Marginal log-likelihood before each M-step.
    std::vector<double> loglik_trace;
};

/// Marginal maximum likelihood 2PL fit by EM over a quadrature grid. The
/// latent group is fixed at N(0, 1), which identifies the scale.
/// Throws EstimationError on an all-0 or all-1 item column.
FitResult fit_2pl_mml(const ResponseMatrix& responses, const EngineConfig& config);

struct AnchoredFit {
    ItemParams2PL params;
    GroupDist group;
    double loglik = 0.0;
    int n_iter = 0;
    bool converged = false;
    std::vector<double> loglik_trace;
};

/// EM in which only `target_item_id` and the group mean/SD move; every other
/// item is held at its anchor value. Anchors must cover all non-target items.
AnchoredFit fit_anchored_item(const ResponseMatrix& responses, const ParamSet& anchors,
                              const std::string& target_item_id, const EngineConfig& config);

/// Runs fit_anchored_item once per item, each against the original anchors.
std::vector<AnchoredFit> fit_anchored_all(const ResponseMatrix& responses, const ParamSet& anchors,
                                          const EngineConfig& config);

struct MapResult {
    double theta = 0.0;
    double se = 0.0;
    int n_iter = 0;
    bool used_grid = false;
};

/// Posterior mode under N(prior_mean, prior_variance). Safeguarded Newton on
/// [-40, 40] with a grid search fallback.
MapResult map_score(const Eigen::Ref<const VectorXi>& pattern, const Eigen::Ref<const VectorXd>& a,
                    const Eigen::Ref<const VectorXd>& b, double d, double prior_mean, double prior_variance);

/// MAP score of every examinee with the prior N(0, config.prior_variance).
std::vector<AbilityEstimate> score_all(const ResponseMatrix& responses, const ParamSet& params,
                                       const EngineConfig& config);

VectorXd thetas_of(const std::vector<AbilityEstimate>& estimates);

} // namespace fieldtest
