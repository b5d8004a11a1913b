#include "fieldtest/irt.hpp"

#include <algorithm>
#include <limits>

#include <Eigen/Dense>

namespace fieldtest {

namespace {

constexpr double kThetaLimit = 40.0;

// log P and log(1 - P) of every item at every node, items by rows.
struct TraceLogs {
    MatrixXd log_p;
    MatrixXd log_q;
};

TraceLogs trace_logs(const ParamSet& params, const std::vector<Eigen::Index>& items,
                     const VectorXd& nodes, double d)
{
    TraceLogs t;
    const auto k = static_cast<Eigen::Index>(items.size());
    t.log_p.resize(k, nodes.size());
    t.log_q.resize(k, nodes.size());
    for (Eigen::Index r = 0; r < k; ++r) {
        const auto& p = params[static_cast<std::size_t>(items[r])];
        for (Eigen::Index q = 0; q < nodes.size(); ++q) {
            double z = (d * p.a) * (nodes(q) - p.b);
            t.log_p(r, q) = log_logistic(z);
            t.log_q(r, q) = log_logistic(-z);
        }
    }
    return t;
}

MatrixXd columns(const MatrixXd& m, const std::vector<Eigen::Index>& cols)
{
    MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(Eigen::Index(k)) = m.col(cols[k]);
    return out;
}

struct EmOutcome {
    double loglik = 0.0;
    int n_iter = 0;
    bool converged = false;
    std::vector<double> trace;
};

// Marginal log-likelihood and normalized posterior (N x Q) from per-node log-likelihoods.
double posterior_from(MatrixXd& log_lik, const VectorXd& weights)
{
    const VectorXd log_w = weights.array().log();
    log_lik.rowwise() += log_w.transpose();
    const VectorXd row_max = log_lik.rowwise().maxCoeff();
    log_lik.colwise() -= row_max;
    log_lik = log_lik.array().exp();
    const VectorXd row_sum = log_lik.rowwise().sum();
    log_lik.array().colwise() /= row_sum.array();
    return (row_max.array() + row_sum.array().log()).sum();
}

// Generalized EM: each M-step never decreases the expected complete-data
// log-likelihood, so the marginal log-likelihood is non-decreasing.
EmOutcome run_em(const MatrixXd& scored, ParamSet& params, const std::vector<Eigen::Index>& free_items,
                 GroupDist& group, bool estimate_group, const EngineConfig& config)
{
    const double d = config.scaling_d;
    const VectorXd nodes = make_quadrature(config, GroupDist{}).nodes;
    const ItemBounds bounds = ItemBounds::from(config);

    std::vector<Eigen::Index> fixed_items;
    for (Eigen::Index j = 0; j < scored.cols(); ++j)
        if (std::find(free_items.begin(), free_items.end(), j) == free_items.end()) fixed_items.push_back(j);

    MatrixXd fixed_part = MatrixXd::Zero(scored.rows(), nodes.size());
    if (!fixed_items.empty()) {
        const MatrixXd u = columns(scored, fixed_items);
        const TraceLogs logs = trace_logs(params, fixed_items, nodes, d);
        fixed_part.noalias() += u * logs.log_p;
        fixed_part.noalias() += (1.0 - u.array()).matrix() * logs.log_q;
    }
    const MatrixXd u_free = columns(scored, free_items);
    const MatrixXd w_free = (1.0 - u_free.array()).matrix();

    auto e_step = [&](MatrixXd& posterior) {
        const TraceLogs logs = trace_logs(params, free_items, nodes, d);
        posterior = fixed_part;
        posterior.noalias() += u_free * logs.log_p;
        posterior.noalias() += w_free * logs.log_q;
        return posterior_from(posterior, normal_weights(nodes, group));
    };

    EmOutcome out;
    MatrixXd posterior;
    for (int iter = 1; iter <= config.max_em_iter; ++iter) {
        out.trace.push_back(e_step(posterior));
        out.n_iter = iter;

        const VectorXd total = posterior.colwise().sum().transpose();
        const MatrixXd correct = u_free.transpose() * posterior; // free items x Q

        double change = 0.0;
        for (std::size_t k = 0; k < free_items.size(); ++k) {
            auto& p = params[static_cast<std::size_t>(free_items[k])];
            ItemObjective objective(nodes, correct.row(Eigen::Index(k)).transpose(), total, d);
            ItemParams2PL next = maximize_item(objective, p, bounds);
            change = std::max({change, std::abs(next.a - p.a), std::abs(next.b - p.b)});
            p.a = next.a;
            p.b = next.b;
        }
        if (estimate_group) {
            const double n = total.sum();
            const double mean = total.dot(nodes) / n;
            const double var = total.dot((nodes.array() - mean).square().matrix()) / n;
            GroupDist next{mean, std::sqrt(var)};
            change = std::max({change, std::abs(next.mean - group.mean), std::abs(next.sd - group.sd)});
            group = next;
        }
        if (change <= config.em_tol) {
            out.converged = true;
            break;
        }
    }
    out.loglik = e_step(posterior);
    return out;
}

void require_variation(const MatrixXd& scored, Eigen::Index j, const std::string& id)
{
    const double s = scored.col(j).sum();
    if (s <= 0.0 || s >= double(scored.rows()))
        throw EstimationError("item '" + id + "' is degenerate (all responses " + (s <= 0.0 ? "0" : "1") + ")");
}

ItemParams2PL default_start(const MatrixXd& scored, Eigen::Index j, const std::string& id,
                            const EngineConfig& config)
{
    const double p = std::clamp(scored.col(j).mean(), 1e-3, 1.0 - 1e-3);
    ItemParams2PL start;
    start.item_id = id;
    start.a = std::clamp(1.7 / config.scaling_d, config.a_min, config.a_max);
    start.b = std::clamp(-0.7 * std::log(p / (1.0 - p)), config.b_min, config.b_max);
    return start;
}

} // namespace

VectorXd normal_weights(const Eigen::Ref<const VectorXd>& nodes, const GroupDist& group)
{
    group.validate();
    VectorXd w = (-0.5 * ((nodes.array() - group.mean) / group.sd).square()).exp();
    return w / w.sum();
}

QuadratureGrid make_quadrature(const EngineConfig& config, const GroupDist& group)
{
    QuadratureGrid grid;
    grid.nodes = VectorXd::LinSpaced(config.quad_points, -config.quad_range, config.quad_range);
    grid.weights = normal_weights(grid.nodes, group);
    return grid;
}

ItemObjective::ItemObjective(VectorXd nodes, VectorXd correct, VectorXd total, double d)
    : nodes_(std::move(nodes)), correct_(std::move(correct)), total_(std::move(total)), d_(d)
{
    if (correct_.size() != nodes_.size() || total_.size() != nodes_.size())
        throw ValidationError("item objective: node and count vectors differ in length");
}

double ItemObjective::value(double a, double b) const
{
    double sum = 0.0;
    for (Eigen::Index q = 0; q < nodes_.size(); ++q) {
        double z = (d_ * a) * (nodes_(q) - b);
        sum += correct_(q) * log_logistic(z) + (total_(q) - correct_(q)) * log_logistic(-z);
    }
    return sum;
}

Eigen::Vector2d ItemObjective::gradient(double a, double b) const
{
    double residual = 0.0, residual_x = 0.0;
    for (Eigen::Index q = 0; q < nodes_.size(); ++q) {
        double p = prob_2pl(nodes_(q), a, b, d_);
        double e = correct_(q) - total_(q) * p;
        residual += e;
        residual_x += e * (nodes_(q) - b);
    }
    return {d_ * residual_x, -d_ * a * residual};
}

ItemParams2PL maximize_item(const ItemObjective& objective, const ItemParams2PL& start,
                            const ItemBounds& bounds, int max_iter)
{
    const VectorXd& x = objective.nodes();
    const VectorXd& r = objective.correct();
    const VectorXd& n = objective.total();
    const double d = objective.scaling();

    auto clamp_a = [&](double a) { return std::clamp(a, bounds.a_min, bounds.a_max); };
    auto clamp_b = [&](double b) { return std::clamp(b, bounds.b_min, bounds.b_max); };

    ItemParams2PL cur = start;
    cur.a = clamp_a(cur.a);
    cur.b = clamp_b(cur.b);
    double f = objective.value(cur.a, cur.b);

    // Backtracking along `propose(t)`; accepts the first strict improvement.
    auto search = [&](auto propose) {
        double t = 1.0;
        for (int k = 0; k < 40; ++k, t *= 0.5) {
            auto [a, b] = propose(t);
            if (!std::isfinite(a) || !std::isfinite(b)) continue;
            double fn = objective.value(a, b);
            if (fn > f) {
                cur.a = a;
                cur.b = b;
                f = fn;
                return true;
            }
        }
        return false;
    };

    for (int iter = 0; iter < max_iter; ++iter) {
        const double a0 = cur.a, b0 = cur.b;

        // Slope/intercept form z = d (a x + c) is concave in (a, c).
        double g_a = 0.0, g_c = 0.0, h_aa = 0.0, h_ac = 0.0, h_cc = 0.0;
        double g_b1 = 0.0, h_bb1 = 0.0, g_a1 = 0.0, h_aa1 = 0.0;
        for (Eigen::Index q = 0; q < x.size(); ++q) {
            double p = prob_2pl(x(q), cur.a, cur.b, d);
            double e = r(q) - n(q) * p;
            double w = n(q) * p * (1.0 - p);
            double xc = x(q) - cur.b;
            g_a += e * x(q);
            g_c += e;
            h_aa += w * x(q) * x(q);
            h_ac += w * x(q);
            h_cc += w;
            g_a1 += e * xc;
            h_aa1 += w * xc * xc;
        }
        g_b1 = -d * cur.a * g_c;
        h_bb1 = d * d * cur.a * cur.a * h_cc;
        g_a *= d;
        g_c *= d;
        g_a1 *= d;
        h_aa1 *= d * d;
        Eigen::Matrix2d info;
        info << h_aa, h_ac, h_ac, h_cc;
        info *= d * d;
        info.diagonal().array() += 1e-12 * (1.0 + info.trace());
        const Eigen::Vector2d step = info.ldlt().solve(Eigen::Vector2d(g_a, g_c));
        const double c0 = -cur.a * cur.b;

        bool moved = search([&](double t) {
            double a = clamp_a(a0 + t * step(0));
            double c = c0 + t * step(1);
            return std::pair{a, clamp_b(-c / a)};
        });
        if (!moved && h_bb1 > 0.0)
            moved = search([&](double t) { return std::pair{a0, clamp_b(b0 + t * g_b1 / h_bb1)}; });
        if (!moved && h_aa1 > 0.0)
            moved = search([&](double t) { return std::pair{clamp_a(a0 + t * g_a1 / h_aa1), b0}; });
        if (!moved) break;
        if (std::max(std::abs(cur.a - a0), std::abs(cur.b - b0)) < 1e-10) break;
    }
    return cur;
}

FitResult fit_2pl_mml(const ResponseMatrix& responses, const EngineConfig& config)
{
    config.validate();
    const auto n_items = responses.n_items();
    if (n_items < 2) throw EstimationError("free calibration needs at least 2 items");
    const MatrixXd scored = responses.scored_real();

    FitResult result;
    std::vector<Eigen::Index> free_items;
    for (Eigen::Index j = 0; j < n_items; ++j) {
        const auto& id = responses.item_ids[static_cast<std::size_t>(j)];
        require_variation(scored, j, id);
        result.params.push_back(default_start(scored, j, id, config));
        free_items.push_back(j);
    }
    result.group = GroupDist{0.0, 1.0};
    EmOutcome em = run_em(scored, result.params, free_items, result.group, false, config);
    result.loglik = em.loglik;
    result.n_iter = em.n_iter;
    result.converged = em.converged;
    result.loglik_trace = std::move(em.trace);
    return result;
}

AnchoredFit fit_anchored_item(const ResponseMatrix& responses, const ParamSet& anchors,
                              const std::string& target_item_id, const EngineConfig& config)
{
    config.validate();
    const MatrixXd scored = responses.scored_real();
    const auto it = std::find(responses.item_ids.begin(), responses.item_ids.end(), target_item_id);
    if (it == responses.item_ids.end())
        throw ValidationError("target item '" + target_item_id + "' is not in the response matrix");
    const auto target = static_cast<Eigen::Index>(it - responses.item_ids.begin());
    require_variation(scored, target, target_item_id);

    ParamSet params;
    for (Eigen::Index j = 0; j < responses.n_items(); ++j) {
        const auto& id = responses.item_ids[static_cast<std::size_t>(j)];
        auto found = std::find_if(anchors.begin(), anchors.end(), [&](const auto& p) { return p.item_id == id; });
        if (j == target) {
            ItemParams2PL start = default_start(scored, j, id, config);
            if (found != anchors.end()) {
                start.a = std::clamp(found->a, config.a_min, config.a_max);
                start.b = std::clamp(found->b, config.b_min, config.b_max);
            }
            params.push_back(start);
        } else {
            if (found == anchors.end()) throw ValidationError("no anchor parameters for item '" + id + "'");
            params.push_back(*found);
        }
    }

    AnchoredFit fit;
    fit.group = GroupDist{0.0, 1.0};
    EmOutcome em = run_em(scored, params, {target}, fit.group, true, config);
    fit.params = params[static_cast<std::size_t>(target)];
    fit.loglik = em.loglik;
    fit.n_iter = em.n_iter;
    fit.converged = em.converged;
    fit.loglik_trace = std::move(em.trace);
    return fit;
}

std::vector<AnchoredFit> fit_anchored_all(const ResponseMatrix& responses, const ParamSet& anchors,
                                          const EngineConfig& config)
{
    std::vector<AnchoredFit> fits;
    fits.reserve(responses.item_ids.size());
    for (const auto& id : responses.item_ids) fits.push_back(fit_anchored_item(responses, anchors, id, config));
    return fits;
}

MapResult map_score(const Eigen::Ref<const VectorXi>& pattern, const Eigen::Ref<const VectorXd>& a,
                    const Eigen::Ref<const VectorXd>& b, double d, double prior_mean, double prior_variance)
{
    if (a.size() != pattern.size() || b.size() != pattern.size())
        throw ValidationError("response pattern and item parameters differ in length");
    if (!(prior_variance > 0.0)) throw ValidationError("prior variance must be positive");

    auto objective = [&](double theta) {
        double diff = theta - prior_mean;
        return loglik<double>(pattern, a, b, d, theta) - 0.5 * diff * diff / prior_variance;
    };
    auto derivatives = [&](double theta) {
        double g = -(theta - prior_mean) / prior_variance;
        double h = -1.0 / prior_variance;
        for (Eigen::Index j = 0; j < pattern.size(); ++j) {
            if (pattern(j) < 0) continue;
            double p = prob_2pl(theta, a(j), b(j), d);
            double slope = d * a(j);
            g += slope * (pattern(j) - p);
            h -= slope * slope * p * (1.0 - p);
        }
        return std::pair{g, h};
    };

    MapResult out;
    double theta = std::clamp(prior_mean, -kThetaLimit, kThetaLimit);
    double f = objective(theta);
    bool converged = false;
    for (int iter = 1; iter <= 100 && !converged; ++iter) {
        out.n_iter = iter;
        auto [g, h] = derivatives(theta);
        if (g == 0.0) {
            converged = true;
            break;
        }
        const double step = -g / h;
        double t = 1.0;
        bool moved = false;
        for (int k = 0; k < 60; ++k, t *= 0.5) {
            double next = std::clamp(theta + t * step, -kThetaLimit, kThetaLimit);
            double fn = objective(next);
            if (fn >= f) {
                converged = std::abs(next - theta) < 1e-12;
                theta = next;
                f = fn;
                moved = true;
                break;
            }
        }
        if (!moved) converged = true;
    }
    if (!converged) {
        out.used_grid = true;
        double best = -kThetaLimit, best_f = -std::numeric_limits<double>::infinity();
        for (double t = -kThetaLimit; t <= kThetaLimit; t += 1e-3) {
            double ft = objective(t);
            if (ft > best_f) {
                best_f = ft;
                best = t;
            }
        }
        theta = best;
    }
    out.theta = theta;
    out.se = 1.0 / std::sqrt(-derivatives(theta).second);
    return out;
}

std::vector<AbilityEstimate> score_all(const ResponseMatrix& responses, const ParamSet& params,
                                       const EngineConfig& config)
{
    const ParamSet aligned = align_params(params, responses.item_ids);
    const VectorXd a = discriminations(aligned);
    const VectorXd b = difficulties(aligned);
    std::vector<AbilityEstimate> out;
    out.reserve(static_cast<std::size_t>(responses.n_examinees()));
    for (Eigen::Index i = 0; i < responses.n_examinees(); ++i) {
        const VectorXi pattern = responses.scored.row(i).transpose();
        MapResult m = map_score(pattern, a, b, config.scaling_d, 0.0, config.prior_variance);
        out.push_back({responses.examinee_ids[static_cast<std::size_t>(i)], m.theta, m.se});
    }
    return out;
}

VectorXd thetas_of(const std::vector<AbilityEstimate>& estimates)
{
    VectorXd t(static_cast<Eigen::Index>(estimates.size()));
    for (std::size_t i = 0; i < estimates.size(); ++i) t(Eigen::Index(i)) = estimates[i].theta;
    return t;
}

} // namespace fieldtest
