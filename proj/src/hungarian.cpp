#include "ivl/losses.hpp"

#include <limits>
#include <stdexcept>

namespace ivl {

namespace {

// Potential-based Hungarian algorithm; requires rows <= cols. Returns, for
// each row, its assigned column.
std::vector<Index> solve(const RowMatrix& a) {
    const Index n = a.rows(), m = a.cols();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
    std::vector<Index> p(static_cast<std::size_t>(m) + 1, 0);    // column -> row (1-based)
    std::vector<Index> way(static_cast<std::size_t>(m) + 1, 0);

    for (Index i = 1; i <= n; ++i) {
        p[0] = i;
        Index j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const Index i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const Index j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<Index> row_to_col(static_cast<std::size_t>(n), -1);
    for (Index j = 1; j <= m; ++j) {
        if (p[static_cast<std::size_t>(j)] > 0) {
            row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
        }
    }
    return row_to_col;
}

}  // namespace

MatchAssignment hungarian_match(const RowMatrix& cost) {
    if (!cost.allFinite()) {
        throw NumericError("hungarian_match: non-finite costs");
    }
    MatchAssignment out;
    const Index n_pred = cost.rows(), n_gt = cost.cols();
    if (n_gt == 0) {
        for (Index i = 0; i < n_pred; ++i) out.unmatched_predictions.push_back(i);
        return out;
    }
    if (n_pred == 0) return out;

    if (n_pred <= n_gt) {
        const std::vector<Index> assign = solve(cost);
        for (Index i = 0; i < n_pred; ++i) {
            out.pairs.emplace_back(i, assign[static_cast<std::size_t>(i)]);
        }
    } else {
        const std::vector<Index> assign = solve(cost.transpose());
        std::vector<char> matched(static_cast<std::size_t>(n_pred), 0);
        for (Index j = 0; j < n_gt; ++j) {
            const Index i = assign[static_cast<std::size_t>(j)];
            out.pairs.emplace_back(i, j);
            matched[static_cast<std::size_t>(i)] = 1;
        }
        // keep prediction-major order in pairs
        std::sort(out.pairs.begin(), out.pairs.end());
        for (Index i = 0; i < n_pred; ++i) {
            if (!matched[static_cast<std::size_t>(i)]) out.unmatched_predictions.push_back(i);
        }
    }
    return out;
}

}  // namespace ivl
