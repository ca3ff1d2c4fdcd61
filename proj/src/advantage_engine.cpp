#include "trace_forge/advantage_engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trace_forge/errors.hpp"

namespace trace_forge {
namespace {

void require_finite(const std::vector<double>& values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NonFinite(std::string(what) + " contains a non-finite value");
    }
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeMismatch(std::string(what) + " is " + shape(m) + ", expected " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }
}

std::vector<double> zscore(const std::vector<double>& x, double epsilon) {
    const std::size_t g = x.size();
    std::vector<double> out(g, 0.0);
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); })) return out;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(g));
    for (std::size_t i = 0; i < g; ++i) out[i] = (x[i] - mean) / (sd + epsilon);
    return out;
}

std::vector<double> row_sums(const Matrix& m) {
    std::vector<double> s(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) s[r] += m(r, c);
    }
    return s;
}

}  // namespace

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    Matrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw ShapeMismatch("ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), m.data_.begin() + static_cast<std::ptrdiff_t>(r * cols));
    }
    return m;
}

std::vector<double> Matrix::row(std::size_t r) const {
    return {data_.begin() + static_cast<std::ptrdiff_t>(r * cols_),
            data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols_)};
}

GroupRewards GroupRewards::from_ragged(const std::vector<std::vector<double>>& step, std::vector<double> final) {
    if (step.size() != final.size()) throw ShapeMismatch("step rows and final rewards differ in count");
    std::size_t n = 0;
    for (const auto& r : step) n = std::max(n, r.size());
    GroupRewards g;
    g.step = Matrix(step.size(), n);
    for (std::size_t r = 0; r < step.size(); ++r) {
        for (std::size_t c = 0; c < step[r].size(); ++c) g.step(r, c) = step[r][c];
    }
    g.final = std::move(final);
    return g;
}

Matrix group_advantage(const GroupRewards& rewards, double epsilon) {
    const std::size_t G = rewards.G();
    if (G < 2) throw GroupTooSmall(G);
    require_finite(rewards.step.data(), "step rewards");
    Matrix out(G, rewards.n());
    std::vector<double> column(G);
    for (std::size_t i = 0; i < rewards.n(); ++i) {
        for (std::size_t g = 0; g < G; ++g) column[g] = rewards.step(g, i);
        const auto z = zscore(column, epsilon);
        for (std::size_t g = 0; g < G; ++g) out(g, i) = z[g];
    }
    return out;
}

Matrix intra_advantage(const GroupRewards& rewards) {
    const std::size_t n = rewards.n();
    Matrix out(rewards.G(), n);
    for (std::size_t g = 0; g < rewards.G(); ++g) {
        double later = 0.0;  // sum of r_{i+1..n}
        for (std::size_t i = n; i-- > 0;) {
            const double r = rewards.step(g, i);
            const std::size_t remaining = n - 1 - i;
            const double future = remaining == 0 ? 0.0 : later / static_cast<double>(remaining);
            out(g, i) = r * (1.0 + future);
            later += r;
        }
    }
    return out;
}

Matrix combine(const Matrix& group, const Matrix& intra, double lambda) {
    require_shape(intra, group.rows(), group.cols(), "intra advantage");
    if (lambda < 0.0 || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be finite and >= 0");
    Matrix out(group.rows(), group.cols());
    for (std::size_t r = 0; r < group.rows(); ++r) {
        for (std::size_t c = 0; c < group.cols(); ++c) out(r, c) = group(r, c) + lambda * intra(r, c);
    }
    return out;
}

std::vector<double> final_advantage(const std::vector<double>& final, double epsilon) {
    if (final.size() < 2) throw GroupTooSmall(final.size());
    require_finite(final, "final rewards");
    return zscore(final, epsilon);
}

AdvantageMatrix compute_advantages(const GroupRewards& rewards, double lambda, double epsilon) {
    if (rewards.final.size() != rewards.G()) throw ShapeMismatch("final rewards do not match the group size");
    AdvantageMatrix a;
    a.group = group_advantage(rewards, epsilon);
    a.intra = intra_advantage(rewards);
    a.combined = combine(a.group, a.intra, lambda);
    a.final = final_advantage(rewards.final, epsilon);
    a.lambda = lambda;
    a.epsilon = epsilon;
    return a;
}

SurrogateLosses surrogate_losses(const AdvantageMatrix& adv, const PolicyLogProbs& lp) {
    const std::size_t G = adv.combined.rows();
    const std::size_t n = adv.combined.cols();
    if (G == 0) throw ShapeMismatch("empty group");
    require_shape(lp.logp_new, G, n, "logp_new");
    require_shape(lp.logp_old, G, n, "logp_old");
    require_shape(lp.logp_ref, G, n, "logp_ref");
    if (adv.final.size() != G) throw ShapeMismatch("final advantage length differs from the group size");
    const auto seq_new = lp.seq_logp_new.empty() ? row_sums(lp.logp_new) : lp.seq_logp_new;
    const auto seq_old = lp.seq_logp_old.empty() ? row_sums(lp.logp_old) : lp.seq_logp_old;
    const auto seq_ref = lp.seq_logp_ref.empty() ? row_sums(lp.logp_ref) : lp.seq_logp_ref;
    if (seq_new.size() != G || seq_old.size() != G || seq_ref.size() != G) {
        throw ShapeMismatch("sequence log-probabilities differ from the group size");
    }
    require_finite(adv.combined.data(), "advantages");
    require_finite(adv.final, "final advantages");
    require_finite(lp.logp_new.data(), "logp_new");
    require_finite(lp.logp_old.data(), "logp_old");
    require_finite(lp.logp_ref.data(), "logp_ref");
    require_finite(seq_new, "seq_logp_new");
    require_finite(seq_old, "seq_logp_old");
    require_finite(seq_ref, "seq_logp_ref");
    if (lp.exact_kl && !std::isfinite(*lp.exact_kl)) throw NonFinite("exact_kl is not finite");

    SurrogateLosses out;
    const double inv_g = 1.0 / static_cast<double>(G);
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t i = 0; i < n; ++i) {
            out.l_step -= inv_g * std::exp(lp.logp_new(g, i) - lp.logp_old(g, i)) * adv.combined(g, i);
        }
        out.l_final -= inv_g * std::exp(seq_new[g] - seq_old[g]) * adv.final[g];
    }
    if (lp.exact_kl) {
        out.kl = *lp.exact_kl;
    } else {
        for (std::size_t g = 0; g < G; ++g) out.kl += inv_g * (seq_new[g] - seq_ref[g]);
    }
    out.total = out.l_step + out.l_final + out.kl;
    if (!std::isfinite(out.total)) throw NonFinite("surrogate loss overflowed");
    return out;
}

}  // namespace trace_forge
