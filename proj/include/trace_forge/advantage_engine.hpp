#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace trace_forge {

inline constexpr double kDefaultEpsilon = 1e-8;
inline constexpr double kDefaultLambda = 0.3;

/// Dense row-major matrix; rows index trajectories, columns anchors.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::vector<double> row(std::size_t r) const;
    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Rewards of one group of G trajectories for the same problem: a G x n
/// step matrix and G terminal rewards.
struct GroupRewards {
    Matrix step;
    std::vector<double> final;

    std::size_t G() const noexcept { return step.rows(); }
    std::size_t n() const noexcept { return step.cols(); }

    /// Trajectories may realize different anchor counts (branches); shorter
    /// rows are padded with zeros up to the longest.
    static GroupRewards from_ragged(const std::vector<std::vector<double>>& step, std::vector<double> final);
};

struct AdvantageMatrix {
    Matrix group;
    Matrix intra;
    Matrix combined;
    std::vector<double> final;
    double lambda = kDefaultLambda;
    double epsilon = kDefaultEpsilon;
};

/// Per-anchor z-score across the group (population std, + epsilon in the
/// denominator). Constant columns give exactly zero. Throws GroupTooSmall.
Matrix group_advantage(const GroupRewards& rewards, double epsilon = kDefaultEpsilon);

/// r_i * (1 + mean of the later rewards of the same trajectory); the last
/// anchor keeps r_n.
Matrix intra_advantage(const GroupRewards& rewards);

/// group + lambda * intra. Throws ShapeMismatch.
Matrix combine(const Matrix& group, const Matrix& intra, double lambda = kDefaultLambda);

/// Z-score of the terminal rewards. Throws GroupTooSmall.
std::vector<double> final_advantage(const std::vector<double>& final, double epsilon = kDefaultEpsilon);

AdvantageMatrix compute_advantages(const GroupRewards& rewards, double lambda = kDefaultLambda,
                                   double epsilon = kDefaultEpsilon);

/// Log-probabilities for the surrogate. Per-anchor matrices are G x n; the
/// sequence vectors have length G and default to the row sums of the
/// per-anchor matrices when left empty.
struct PolicyLogProbs {
    Matrix logp_new;
    Matrix logp_old;
    Matrix logp_ref;
    std::vector<double> seq_logp_new;
    std::vector<double> seq_logp_old;
    std::vector<double> seq_logp_ref;
    /// Exact KL(pi_theta || pi_ref) when the full distributions are known.
    std::optional<double> exact_kl;
};

struct SurrogateLosses {
    double l_step = 0.0;
    double l_final = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

/// l_step = -(1/G) sum_g sum_i ratio_ig * A_ig, l_final = -(1/G) sum_g
/// seq_ratio_g * A_final_g, kl = exact value or the mean of
/// seq_logp_new - seq_logp_ref; total is their sum. Throws ShapeMismatch or
/// NonFinite.
SurrogateLosses surrogate_losses(const AdvantageMatrix& adv, const PolicyLogProbs& logp);

}  // namespace trace_forge
