#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlc/catalog.hpp"
#include "mlc/error.hpp"

namespace mlc {

struct Standardized {
    Matrix z;
    std::vector<double> mean;
    std::vector<double> sd;
    std::vector<bool> degenerate;
};

/// Column-wise z-scores with the n-1 convention. Zero-variance columns become 0 and are flagged.
inline Standardized standardize(const Matrix& X) {
    if (X.rows() < 2) fail("standardize: need at least 2 rows");
    const double n = static_cast<double>(X.rows());
    Standardized s;
    s.z.resize(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        double m = X.col(c).mean();
        double ss = (X.col(c).array() - m).square().sum();
        double sd = std::sqrt(ss / (n - 1.0));
        bool deg = !(sd > 1e-300) || sd <= 1e-12 * std::max(1.0, std::abs(m));
        s.mean.push_back(m);
        s.sd.push_back(deg ? 0.0 : sd);
        s.degenerate.push_back(deg);
        if (deg) s.z.col(c).setZero();
        else s.z.col(c) = (X.col(c).array() - m) / sd;
    }
    return s;
}

struct LoadingMatrix {
    Matrix loadings;                          // d_raw x I
    int factor_count = 0;
    std::vector<double> explained_variance;   // eigenvalue shares, before rotation
    bool rotated = false;
    bool sparsified = false;
    std::vector<double> varimax_history;      // criterion after each sweep (index 0 = before rotation)
};

/// Principal-axis extraction on the correlation matrix of standardized data.
inline LoadingMatrix fit_loadings(const Matrix& Z, int factor_count) {
    const Eigen::Index n = Z.rows(), p = Z.cols();
    if (factor_count < 1) fail("factor_count must be >= 1");
    if (factor_count > std::min<Eigen::Index>(n - 1, p))
        fail("factor_count " + std::to_string(factor_count) + " exceeds min(rows-1, columns) = " +
             std::to_string(std::min<Eigen::Index>(n - 1, p)));
    Matrix R = (Z.transpose() * Z) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(R);
    if (es.info() != Eigen::Success) fail_numeric("eigen-decomposition failed");
    Vector ev = es.eigenvalues();   // ascending
    Matrix V = es.eigenvectors();
    std::vector<Eigen::Index> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return ev(a) > ev(b); });
    double total = 0, top = std::max(ev.maxCoeff(), 0.0);
    for (Eigen::Index k = 0; k < p; ++k) total += std::max(ev(k), 0.0);
    int rank = 0;
    for (Eigen::Index k = 0; k < p; ++k)
        if (ev(k) > 1e-10 * std::max(top, 1.0)) ++rank;
    if (rank < factor_count)
        throw Error(ErrorKind::numeric, "correlation matrix has rank " + std::to_string(rank) +
                                            ", below factor_count " + std::to_string(factor_count) +
                                            " (achievable rank " + std::to_string(rank) + ")");
    LoadingMatrix L;
    L.factor_count = factor_count;
    L.loadings.resize(p, factor_count);
    for (int k = 0; k < factor_count; ++k) {
        Eigen::Index idx = order[k];
        Vector v = V.col(idx);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;   // deterministic eigenvector sign
        L.loadings.col(k) = v * std::sqrt(std::max(ev(idx), 0.0));
        L.explained_variance.push_back(total > 0 ? std::max(ev(idx), 0.0) / total : 0.0);
    }
    return L;
}

/// Raw varimax criterion: sum over factors of the variance of squared loadings.
inline double varimax_criterion(const Matrix& L) {
    const double p = static_cast<double>(L.rows());
    double v = 0;
    for (Eigen::Index k = 0; k < L.cols(); ++k) {
        Eigen::ArrayXd sq = L.col(k).array().square();
        v += sq.square().sum() / p - std::pow(sq.sum() / p, 2);
    }
    return v;
}

struct RefineConfig {
    double threshold = 0.0;
    int max_per_row = 0;          // 0 = keep all
    bool rotate = true;
    bool kaiser = true;           // row-normalise before rotating
    int max_sweeps = 500;
    double tol = 1e-12;
};

/// Varimax by pairwise plane rotations, then thresholding and per-row top-k.
inline LoadingMatrix refine_loadings(const LoadingMatrix& in, const RefineConfig& cfg) {
    if (!(cfg.threshold >= 0 && cfg.threshold < 1)) fail("threshold must lie in [0,1)");
    const int I = in.factor_count;
    const int keep = cfg.max_per_row <= 0 ? I : cfg.max_per_row;
    if (keep < 1) fail("max_per_row must be >= 1");
    LoadingMatrix out = in;
    Matrix L = in.loadings;
    const Eigen::Index p = L.rows();

    if (cfg.rotate && I >= 2) {
        Vector h = L.rowwise().norm();
        if (cfg.kaiser)
            for (Eigen::Index r = 0; r < p; ++r)
                if (h(r) > 0) L.row(r) /= h(r);
        const double pd = static_cast<double>(p);
        out.varimax_history = {varimax_criterion(L)};
        for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
            double max_angle = 0;
            for (int j = 0; j < I - 1; ++j)
                for (int k = j + 1; k < I; ++k) {
                    double A = 0, B = 0, C = 0, D = 0;
                    for (Eigen::Index r = 0; r < p; ++r) {
                        double u = L(r, j) * L(r, j) - L(r, k) * L(r, k);
                        double v = 2 * L(r, j) * L(r, k);
                        A += u;
                        B += v;
                        C += u * u - v * v;
                        D += 2 * u * v;
                    }
                    double phi = 0.25 * std::atan2(D - 2 * A * B / pd, C - (A * A - B * B) / pd);
                    if (std::abs(phi) < 1e-15) continue;
                    max_angle = std::max(max_angle, std::abs(phi));
                    double cs = std::cos(phi), sn = std::sin(phi);
                    for (Eigen::Index r = 0; r < p; ++r) {
                        double xj = L(r, j), xk = L(r, k);
                        L(r, j) = xj * cs + xk * sn;
                        L(r, k) = -xj * sn + xk * cs;
                    }
                }
            out.varimax_history.push_back(varimax_criterion(L));
            if (max_angle < cfg.tol) break;
        }
        if (cfg.kaiser)
            for (Eigen::Index r = 0; r < p; ++r) L.row(r) *= h(r);
        out.rotated = true;
    }

    if (cfg.threshold > 0 || keep < I) {
        for (Eigen::Index r = 0; r < p; ++r) {
            bool had = L.row(r).cwiseAbs().maxCoeff() > 0;
            std::vector<int> idx(I);
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return std::abs(L(r, a)) > std::abs(L(r, b)); });
            for (int pos = 0; pos < I; ++pos) {
                int c = idx[pos];
                if (pos >= keep || std::abs(L(r, c)) < cfg.threshold) L(r, c) = 0.0;
            }
            if (had && L.row(r).cwiseAbs().maxCoeff() == 0)
                fail("sparsification zeroed every loading in row " + std::to_string(r));
        }
        out.sparsified = true;
    }
    out.loadings = L;
    return out;
}

struct ExtractConfig {
    int factor_count = 2;
    RefineConfig refine;
    bool bypass = false;   // raw capabilities are already the measures
};

struct MeasureSet {
    std::vector<std::string> model_ids;
    Matrix measures;                  // n x I in [0,1]
    ScalerParams scaler;              // per-factor score range
    LoadingMatrix loading_matrix;
    std::vector<double> column_mean;  // standardisation of raw columns
    std::vector<double> column_sd;
    bool bypass = false;

    int dim() const { return static_cast<int>(measures.cols()); }
    Vector row(std::size_t i) const { return measures.row(static_cast<Eigen::Index>(i)).transpose(); }
    std::optional<std::size_t> find(const std::string& id) const {
        for (std::size_t i = 0; i < model_ids.size(); ++i)
            if (model_ids[i] == id) return i;
        return std::nullopt;
    }
};

inline double pearson(const Vector& a, const Vector& b) {
    Eigen::ArrayXd x = a.array() - a.mean(), y = b.array() - b.mean();
    double den = std::sqrt(x.square().sum() * y.square().sum());
    return den > 0 ? (x * y).sum() / den : 0.0;
}

/// Least-squares factor scores F = Z L (L^T L)^+.
inline Matrix factor_scores(const Matrix& Z, const Matrix& L) {
    Matrix G = L.transpose() * L;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(G);
    return Z * L * cod.pseudoInverse();
}

/// Permutation-stable row order used internally (sorted by model_id).
inline std::vector<std::size_t> id_order(const Catalog& cat) {
    std::vector<std::size_t> idx(cat.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return cat.models[a].model_id < cat.models[b].model_id; });
    return idx;
}

inline MeasureSet extract_measures(const Catalog& cat, const ExtractConfig& cfg) {
    cat.validate();
    MeasureSet ms;
    for (const auto& m : cat.models) ms.model_ids.push_back(m.model_id);
    const Matrix X0 = cat.capability_matrix();

    if (cfg.bypass) {
        if ((X0.array() < 0).any() || (X0.array() > 1).any())
            fail("bypass mode needs raw capabilities inside [0,1]");
        const auto p = X0.cols();
        ms.bypass = true;
        ms.measures = X0;
        ms.scaler.min.assign(p, 0.0);
        ms.scaler.max.assign(p, 1.0);
        ms.scaler.degenerate.assign(p, false);
        ms.loading_matrix.loadings = Matrix::Identity(p, p);
        ms.loading_matrix.factor_count = static_cast<int>(p);
        ms.loading_matrix.explained_variance.assign(p, 1.0 / static_cast<double>(p));
        ms.column_mean.assign(p, 0.0);
        ms.column_sd.assign(p, 1.0);
        return ms;
    }

    auto order = id_order(cat);
    Matrix X(X0.rows(), X0.cols());
    for (std::size_t r = 0; r < order.size(); ++r) X.row(r) = X0.row(order[r]);

    Standardized st = standardize(X);
    LoadingMatrix L = fit_loadings(st.z, cfg.factor_count);
    L = refine_loadings(L, cfg.refine);
    Matrix F = factor_scores(st.z, L.loadings);

    for (int k = 0; k < L.factor_count; ++k) {
        Eigen::Index anchor = 0;
        L.loadings.col(k).cwiseAbs().maxCoeff(&anchor);
        if (pearson(X.col(anchor), F.col(k)) < 0) {
            F.col(k) = -F.col(k);
            L.loadings.col(k) = -L.loadings.col(k);
        }
    }
    auto [scaled, params] = minmax_scale(F);
    ms.measures.resize(scaled.rows(), scaled.cols());
    for (std::size_t r = 0; r < order.size(); ++r) ms.measures.row(order[r]) = scaled.row(r);
    ms.scaler = params;
    ms.loading_matrix = L;
    ms.column_mean = st.mean;
    ms.column_sd = st.sd;
    return ms;
}

inline std::string format_measures_csv(const MeasureSet& ms) {
    std::string out = "model_id";
    for (int k = 0; k < ms.dim(); ++k) out += ",C" + std::to_string(k + 1);
    out += "\n";
    for (std::size_t i = 0; i < ms.model_ids.size(); ++i) {
        out += csv::quote(ms.model_ids[i]);
        for (int k = 0; k < ms.dim(); ++k) out += "," + csv::format_real(ms.measures(i, k));
        out += "\n";
    }
    return out;
}

} // namespace mlc
