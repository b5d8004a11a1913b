#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace fieldtest {

template <class Scalar, int Rows = Eigen::Dynamic, int Cols = Eigen::Dynamic>
using mat_type = Eigen::Matrix<Scalar, Rows, Cols>;

template <class Scalar, int Rows = Eigen::Dynamic>
using vec_type = Eigen::Matrix<Scalar, Rows, 1>;

using MatrixXd = mat_type<double>;
using MatrixXi = mat_type<int>;
using VectorXd = vec_type<double>;
using VectorXi = vec_type<int>;

// Errors carry a short machine-readable kind so the CLI can emit one-line diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error("parse", what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

class EstimationError : public Error {
public:
    explicit EstimationError(const std::string& what) : Error("estimation", what) {}
};

/// A multiple-choice item. `key` is the 0-based index of the correct option.
struct Item {
    std::string id;
    std::string stem;
    std::vector<std::string> options;
    int key = 0;

    int n_options() const { return static_cast<int>(options.size()); }
};

/// Ordered item collection; item order is the column order of every matrix.
struct ItemBank {
    std::vector<Item> items;
    nlohmann::json metadata = nlohmann::json::object();

    std::size_t size() const { return items.size(); }
    std::vector<std::string> item_ids() const;
    /// Index of `id` in the bank, or -1.
    int index_of(const std::string& id) const;
    /// Throws ValidationError naming the first offending item.
    void validate() const;
};

/// Per-examinee, per-item option probabilities. Row i holds every item's
/// vector back to back; item j occupies columns [offsets[j], offsets[j] + n_options_j).
struct OptionProbMatrix {
    std::vector<std::string> examinee_ids;
    std::vector<std::string> item_ids;
    std::vector<int> offsets;
    std::vector<int> n_options;
    MatrixXd probs;
    std::optional<VectorXd> retention;

    std::size_t n_examinees() const { return examinee_ids.size(); }
    std::size_t n_items() const { return item_ids.size(); }

    /// Allocates a zero-filled matrix laid out for `bank`.
    static OptionProbMatrix shaped_for(const ItemBank& bank, std::vector<std::string> examinee_ids);

    auto cell(Eigen::Index examinee, Eigen::Index item) const {
        return probs.row(examinee).segment(offsets[item], n_options[item]);
    }
    auto cell(Eigen::Index examinee, Eigen::Index item) {
        return probs.row(examinee).segment(offsets[item], n_options[item]);
    }

    /// Checks shapes against `bank` and that every vector is a distribution (sum 1 within 1e-6).
    void validate(const ItemBank& bank) const;
};

/// Chosen options and 0/1 scores, examinee-major. Every cell is observed.
struct ResponseMatrix {
    std::vector<std::string> examinee_ids;
    std::vector<std::string> item_ids;
    MatrixXi chosen;
    MatrixXi scored;
    std::optional<VectorXd> retention;

    Eigen::Index n_examinees() const { return chosen.rows(); }
    Eigen::Index n_items() const { return chosen.cols(); }

    /// scored as a real matrix, convenient for products.
    MatrixXd scored_real() const { return scored.cast<double>(); }

    /// Recomputes `scored` from `chosen` and the bank's keys.
    void rescore(const ItemBank& bank);
    /// Checks dimensions and that scored == (chosen == key) in every cell.
    void validate(const ItemBank& bank) const;
};

struct ItemParams2PL {
    std::string item_id;
    double a = 1.0;
    double b = 0.0;
};

using ParamSet = std::vector<ItemParams2PL>;

/// Orders `params` to match `item_ids`; throws ValidationError on a missing id.
ParamSet align_params(const ParamSet& params, const std::vector<std::string>& item_ids);
VectorXd discriminations(const ParamSet& params);
VectorXd difficulties(const ParamSet& params);

struct GroupDist {
    double mean = 0.0;
    double sd = 1.0;

    void validate() const;
};

struct AbilityEstimate {
    std::string examinee_id;
    double theta = 0.0;
    std::optional<double> se;
};

struct EngineConfig {
    std::uint64_t seed = 20220915;
    double scaling_d = 1.7;
    int quad_points = 61;
    double quad_range = 6.0;
    int max_em_iter = 500;
    double em_tol = 1e-4;
    double a_min = 0.01;
    double a_max = 5.0;
    double b_min = -10.0;
    double b_max = 25.0;
    double prior_variance = 100.0;
    int n_examinees = 5000;

    void validate() const;
};

void to_json(nlohmann::json& j, const EngineConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, EngineConfig& c);

} // namespace fieldtest
