#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlc/catalog.hpp"
#include "mlc/error.hpp"
#include "mlc/measures.hpp"

namespace mlc {

inline double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    double e = std::exp(t);
    return e / (1.0 + e);
}

enum class UtilityKind { linear_logistic, tree_ensemble, linear_score };

inline const char* to_string(UtilityKind k) {
    switch (k) {
    case UtilityKind::linear_logistic: return "linear_logistic";
    case UtilityKind::tree_ensemble: return "tree_ensemble";
    default: return "linear_score";
    }
}

inline UtilityKind parse_utility_kind(const std::string& s) {
    if (s == "linear_logistic") return UtilityKind::linear_logistic;
    if (s == "tree_ensemble") return UtilityKind::tree_ensemble;
    if (s == "linear_score") return UtilityKind::linear_score;
    fail("unknown utility kind '" + s + "'");
}

struct TreeNode {
    int feature = -1;   // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;   // nodes[0] is the root

    double eval(const Vector& x) const {
        int k = 0;
        while (nodes[k].feature >= 0) k = x(nodes[k].feature) <= nodes[k].threshold ? nodes[k].left : nodes[k].right;
        return nodes[k].value;
    }
};

/// Context-group utility. linear_logistic: sigma(alpha + beta.x); tree_ensemble: sigma(intercept +
/// lr * sum trees); linear_score: normalized_weights.x (the normalized linear index).
struct UtilityModel {
    UtilityKind kind = UtilityKind::linear_logistic;
    double intercept = 0.0;
    Vector coefficients;
    std::vector<Tree> trees;
    double learning_rate = 0.1;
    Vector normalized_weights;
    bool converged = true;
    bool flagged = false;   // degenerate fit (no usable split, no signal, ...)

    int dim() const { return static_cast<int>(normalized_weights.size()); }

    double link(const Vector& x) const {
        if (x.size() != normalized_weights.size()) fail("utility: dimension mismatch");
        switch (kind) {
        case UtilityKind::linear_logistic: return intercept + coefficients.dot(x);
        case UtilityKind::tree_ensemble: {
            double s = 0;
            for (const auto& t : trees) s += t.eval(x);
            return intercept + learning_rate * s;
        }
        default: return normalized_weights.dot(x);
        }
    }

    double predict(const Vector& x) const {
        double t = link(x);
        return kind == UtilityKind::linear_score ? t : sigmoid(t);
    }

    bool is_linear() const { return kind != UtilityKind::tree_ensemble; }
};

inline Vector normalize_weights(const Vector& v) {
    Vector w = v.cwiseAbs();
    double s = w.sum();
    if (!(s > 0)) return Vector::Constant(v.size(), 1.0 / static_cast<double>(v.size()));
    return w / s;
}

inline UtilityModel linear_score_model(const Vector& weights) {
    UtilityModel m;
    m.kind = UtilityKind::linear_score;
    m.coefficients = weights;
    m.normalized_weights = normalize_weights(weights);
    return m;
}

inline double predict(const UtilityModel& m, const Vector& x) { return m.predict(x); }

// ---------------------------------------------------------------------------
// labels

/// y = 1 iff score > the user's mean score. Users whose scores are all equal are appended to `flat_users`.
inline std::vector<int> binarize_within_user(const std::vector<std::string>& user, const std::vector<double>& score,
                                             std::vector<std::string>* flat_users = nullptr) {
    if (user.size() != score.size()) fail("binarize_within_user: length mismatch");
    std::map<std::string, std::pair<double, std::size_t>> acc;
    std::map<std::string, std::pair<double, double>> range;
    for (std::size_t i = 0; i < user.size(); ++i) {
        if (!std::isfinite(score[i])) fail("binarize_within_user: missing score at record " + std::to_string(i));
        auto& a = acc[user[i]];
        a.first += score[i];
        a.second += 1;
        auto it = range.find(user[i]);
        if (it == range.end()) range[user[i]] = {score[i], score[i]};
        else it->second = {std::min(it->second.first, score[i]), std::max(it->second.second, score[i])};
    }
    std::vector<int> y(user.size());
    for (std::size_t i = 0; i < user.size(); ++i) {
        auto& a = acc[user[i]];
        y[i] = score[i] > a.first / static_cast<double>(a.second) ? 1 : 0;
    }
    if (flat_users)
        for (auto& [u, r] : range)
            if (r.first == r.second) flat_users->push_back(u);
    return y;
}

/// y = 1 iff score reaches the maximum attainable score.
inline std::vector<int> binarize_full_marks(const std::vector<double>& score, double max_score) {
    std::vector<int> y;
    for (double s : score) y.push_back(s >= max_score - 1e-9 ? 1 : 0);
    return y;
}

/// Fills missing labels from scores. `user_key` names the context column identifying the user;
/// empty means full-marks labelling with the observed maximum score.
inline void label_outcomes(std::vector<OutcomeRecord>& recs, const std::string& user_key) {
    std::vector<std::size_t> idx;
    std::vector<std::string> users;
    std::vector<double> scores;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].label) continue;
        if (!recs[i].score) fail("record " + recs[i].interaction_id + " has neither label nor score");
        idx.push_back(i);
        scores.push_back(*recs[i].score);
        if (!user_key.empty()) {
            auto it = recs[i].context.find(user_key);
            if (it == recs[i].context.end()) fail("record " + recs[i].interaction_id + " lacks '" + user_key + "'");
            users.push_back(it->second);
        }
    }
    if (idx.empty()) return;
    std::vector<int> y;
    if (user_key.empty()) y = binarize_full_marks(scores, *std::max_element(scores.begin(), scores.end()));
    else y = binarize_within_user(users, scores);
    for (std::size_t k = 0; k < idx.size(); ++k) recs[idx[k]].label = y[k];
}

struct LabeledData {
    Matrix X;
    std::vector<int> y;
};

struct GroupedOutcomes {
    std::map<std::string, LabeledData> groups;
    std::string grouping_key;
};

inline GroupedOutcomes group_contexts(const std::vector<OutcomeRecord>& recs, const MeasureSet& ms,
                                      const std::string& key) {
    GroupedOutcomes g;
    g.grouping_key = key;
    std::map<std::string, std::vector<std::pair<std::size_t, int>>> rows;
    for (const auto& r : recs) {
        auto mi = ms.find(r.model_id);
        if (!mi) fail("interaction " + r.interaction_id + ": unknown model_id '" + r.model_id + "'");
        if (!r.label) fail("interaction " + r.interaction_id + " has no label");
        std::string gid = "all";
        if (!key.empty()) {
            auto it = r.context.find(key);
            if (it == r.context.end()) fail("interaction " + r.interaction_id + " lacks grouping key '" + key + "'");
            gid = it->second;
        }
        rows[gid].emplace_back(*mi, *r.label);
    }
    for (auto& [gid, v] : rows) {
        LabeledData d;
        d.X.resize(static_cast<Eigen::Index>(v.size()), ms.dim());
        for (std::size_t k = 0; k < v.size(); ++k) {
            d.X.row(k) = ms.measures.row(v[k].first);
            d.y.push_back(v[k].second);
        }
        g.groups[gid] = std::move(d);
    }
    return g;
}

inline void require_both_classes(const std::vector<int>& y) {
    std::size_t pos = 0;
    for (int v : y) {
        if (v != 0 && v != 1) fail("labels must be 0/1");
        pos += static_cast<std::size_t>(v);
    }
    if (pos == 0 || pos == y.size()) fail("both classes must be present");
}

// ---------------------------------------------------------------------------
// logistic regression

struct LogisticConfig {
    double l2 = 1e-4;
    int max_iterations = 100;
    double grad_tol = 1e-8;   // per observation; the gradient is a sum over rows
};

/// Penalised log-likelihood  sum[y t - log(1+e^t)] - l2/2 |beta|^2  and its gradient (intercept first).
inline double logistic_objective(const Matrix& X, const std::vector<int>& y, double alpha, const Vector& beta,
                                 double l2, Vector* grad = nullptr) {
    const Eigen::Index n = X.rows(), p = X.cols();
    double f = -0.5 * l2 * beta.squaredNorm();
    if (grad) {
        grad->setZero(p + 1);
        grad->tail(p) = -l2 * beta;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        double t = alpha + X.row(i).dot(beta);
        double lse = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
        f += y[i] * t - lse;
        if (grad) {
            double r = y[i] - sigmoid(t);
            (*grad)(0) += r;
            grad->tail(p) += r * X.row(i).transpose();
        }
    }
    return f;
}

/// Newton-Raphson (IRLS) with step halving.
inline UtilityModel fit_logistic(const Matrix& X, const std::vector<int>& y, const LogisticConfig& cfg = {}) {
    if (X.rows() != static_cast<Eigen::Index>(y.size()) || X.rows() == 0) fail("fit_logistic: bad inputs");
    require_both_classes(y);
    if (!(cfg.l2 >= 0)) fail("l2 penalty must be >= 0");
    const Eigen::Index n = X.rows(), p = X.cols();
    Matrix A(n, p + 1);
    A.col(0).setOnes();
    A.rightCols(p) = X;
    Vector theta = Vector::Zero(p + 1), g;
    double f = logistic_objective(X, y, 0.0, theta.tail(p), cfg.l2, &g);
    UtilityModel m;
    m.kind = UtilityKind::linear_logistic;
    m.converged = false;
    const double gtol = cfg.grad_tol * std::max<double>(1.0, static_cast<double>(n));
    for (int it = 0; it < cfg.max_iterations; ++it) {
        if (g.norm() <= gtol) { m.converged = true; break; }
        Vector w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double pi = sigmoid(A.row(i).dot(theta));
            w(i) = std::max(pi * (1 - pi), 1e-12);
        }
        Matrix H = A.transpose() * w.asDiagonal() * A;
        for (Eigen::Index k = 1; k <= p; ++k) H(k, k) += cfg.l2;
        Vector step = H.ldlt().solve(g);
        double t = 1.0;
        bool ok = false;
        for (int bt = 0; bt < 50; ++bt) {
            Vector cand = theta + t * step;
            Vector gc;
            double fc = logistic_objective(X, y, cand(0), cand.tail(p), cfg.l2, &gc);
            // near the optimum the sum can round down on a good step, so accept ties that shrink the gradient
            bool tie = fc >= f - 1e-13 * std::abs(f) && gc.norm() < g.norm();
            if (fc >= f || tie) { theta = cand; f = fc; g = gc; ok = true; break; }
            t *= 0.5;
        }
        if (!ok) break;
    }
    if (!m.converged && g.norm() <= gtol) m.converged = true;
    m.intercept = theta(0);
    m.coefficients = theta.tail(p);
    m.normalized_weights = normalize_weights(m.coefficients);
    m.flagged = !(m.coefficients.cwiseAbs().sum() > 0);
    return m;
}

// ---------------------------------------------------------------------------
// boosted trees

struct BoostConfig {
    int trees = 200;
    int max_depth = 3;
    double learning_rate = 0.1;
    int min_leaf = 20;
};

namespace detail {

struct Builder {
    const Matrix& X;
    const std::vector<double>& grad;   // negative gradient y - p
    const std::vector<double>& hess;   // p (1 - p)
    const std::vector<std::vector<std::size_t>>& sorted;   // per-feature row order
    const BoostConfig& cfg;
    std::vector<double>& gain;
    Tree tree;

    int leaf(const std::vector<char>& in, double G, double H) {
        (void)in;
        TreeNode n;
        n.value = H > 1e-12 ? G / H : 0.0;
        tree.nodes.push_back(n);
        return static_cast<int>(tree.nodes.size()) - 1;
    }

    int build(std::vector<char>& in, std::size_t count, int depth) {
        double G = 0, H = 0, S2 = 0;
        for (std::size_t i = 0; i < in.size(); ++i)
            if (in[i]) { G += grad[i]; H += hess[i]; S2 += grad[i] * grad[i]; }
        if (depth >= cfg.max_depth || count < 2 * static_cast<std::size_t>(cfg.min_leaf)) return leaf(in, G, H);
        // best least-squares split of the negative gradient
        double best = 0;
        int bf = -1;
        double bt = 0;
        const double base = G * G / static_cast<double>(count);
        for (Eigen::Index f = 0; f < X.cols(); ++f) {
            double gl = 0;
            std::size_t nl = 0;
            const auto& ord = sorted[f];
            std::size_t prev = ord.size();
            for (std::size_t k = 0; k < ord.size(); ++k) {
                std::size_t i = ord[k];
                if (!in[i]) continue;
                if (prev != ord.size() && nl >= static_cast<std::size_t>(cfg.min_leaf) &&
                    count - nl >= static_cast<std::size_t>(cfg.min_leaf) && X(i, f) > X(prev, f)) {
                    double gr = G - gl;
                    double sse_gain = gl * gl / static_cast<double>(nl) +
                                      gr * gr / static_cast<double>(count - nl) - base;
                    if (sse_gain > best + 1e-12) {
                        best = sse_gain;
                        bf = static_cast<int>(f);
                        bt = 0.5 * (X(i, f) + X(prev, f));
                    }
                }
                gl += grad[i];
                ++nl;
                prev = i;
            }
        }
        (void)S2;
        if (bf < 0) return leaf(in, G, H);
        gain[bf] += best;
        std::vector<char> left(in.size(), 0), right(in.size(), 0);
        std::size_t nl = 0;
        for (std::size_t i = 0; i < in.size(); ++i)
            if (in[i]) {
                if (X(i, bf) <= bt) { left[i] = 1; ++nl; }
                else right[i] = 1;
            }
        tree.nodes.push_back(TreeNode{bf, bt, -1, -1, 0.0});
        int self = static_cast<int>(tree.nodes.size()) - 1;
        int l = build(left, nl, depth + 1);
        int r = build(right, count - nl, depth + 1);
        tree.nodes[self].left = l;
        tree.nodes[self].right = r;
        return self;
    }
};

inline double log_loss(const std::vector<int>& y, const std::vector<double>& f) {
    double L = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        double t = f[i];
        double lse = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
        L += lse - y[i] * t;
    }
    return L;
}

} // namespace detail

/// Gradient boosting on logistic loss. Trees are fit to the negative gradient by least squares;
/// leaf values are Newton steps. A round that would raise the training loss is shrunk until it does not.
inline UtilityModel fit_boosted_trees(const Matrix& X, const std::vector<int>& y, const BoostConfig& cfg = {},
                                      std::vector<double>* loss_history = nullptr) {
    if (X.rows() != static_cast<Eigen::Index>(y.size()) || X.rows() == 0) fail("fit_boosted_trees: bad inputs");
    require_both_classes(y);
    if (cfg.trees < 0 || cfg.max_depth < 1 || cfg.min_leaf < 1 || !(cfg.learning_rate > 0))
        fail("invalid boosting config");
    const std::size_t n = y.size();
    UtilityModel m;
    m.kind = UtilityKind::tree_ensemble;
    m.learning_rate = cfg.learning_rate;
    double pos = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    m.intercept = std::log(pos / (1 - pos));

    std::vector<std::vector<std::size_t>> sorted(X.cols());
    for (Eigen::Index f = 0; f < X.cols(); ++f) {
        sorted[f].resize(n);
        std::iota(sorted[f].begin(), sorted[f].end(), 0);
        std::stable_sort(sorted[f].begin(), sorted[f].end(), [&](auto a, auto b) { return X(a, f) < X(b, f); });
    }
    std::vector<double> F(n, m.intercept), grad(n), hess(n), gain(X.cols(), 0.0);
    double loss = detail::log_loss(y, F);
    if (loss_history) loss_history->push_back(loss);
    for (int k = 0; k < cfg.trees; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            double p = sigmoid(F[i]);
            grad[i] = y[i] - p;
            hess[i] = p * (1 - p);
        }
        std::vector<double> round_gain(X.cols(), 0.0);
        detail::Builder b{X, grad, hess, sorted, cfg, round_gain, {}};
        std::vector<char> all(n, 1);
        b.build(all, n, 0);
        Tree t = std::move(b.tree);
        if (t.nodes.size() == 1) break;   // no admissible split left
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = t.eval(X.row(i).transpose());
        double scale = 1.0, cand_loss = loss;
        std::vector<double> Fc(n);
        for (int s = 0; s < 40; ++s) {
            for (std::size_t i = 0; i < n; ++i) Fc[i] = F[i] + cfg.learning_rate * scale * out[i];
            cand_loss = detail::log_loss(y, Fc);
            if (cand_loss <= loss) break;
            scale *= 0.5;
        }
        if (cand_loss > loss) break;
        for (auto& node : t.nodes) node.value *= scale;
        F = Fc;
        loss = cand_loss;
        if (loss_history) loss_history->push_back(loss);
        for (std::size_t f = 0; f < gain.size(); ++f) gain[f] += round_gain[f];
        m.trees.push_back(std::move(t));
    }
    Vector g(static_cast<Eigen::Index>(gain.size()));
    for (std::size_t f = 0; f < gain.size(); ++f) g(f) = gain[f];
    m.flagged = m.trees.empty();
    m.normalized_weights = normalize_weights(g);
    m.coefficients = Vector::Zero(X.cols());
    return m;
}

// ---------------------------------------------------------------------------
// evaluation

/// Mann-Whitney AUC with ties counted one half, via average ranks.
inline double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) fail("auc: length mismatch");
    require_both_classes(labels);
    const std::size_t n = labels.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    double rank_sum = 0, npos = 0;
    for (std::size_t k = 0; k < n;) {
        std::size_t j = k;
        while (j < n && scores[idx[j]] == scores[idx[k]]) ++j;
        double r = 0.5 * static_cast<double>(k + 1 + j);   // mean of ranks k+1..j
        for (std::size_t q = k; q < j; ++q)
            if (labels[idx[q]] == 1) { rank_sum += r; npos += 1; }
        k = j;
    }
    double nneg = static_cast<double>(n) - npos;
    return (rank_sum - npos * (npos + 1) / 2) / (npos * nneg);
}

/// Stratified random split; returns (train, test) row indices in ascending order.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_split(const std::vector<int>& y, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0 && test_fraction < 1)) fail("test fraction must lie in (0,1)");
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> train, test;
    for (int cls : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] == cls) idx.push_back(i);
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng() % i);
            std::swap(idx[i - 1], idx[j]);
        }
        auto k = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
        train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

inline LabeledData subset(const LabeledData& d, const std::vector<std::size_t>& rows) {
    LabeledData o;
    o.X.resize(static_cast<Eigen::Index>(rows.size()), d.X.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        o.X.row(k) = d.X.row(rows[k]);
        o.y.push_back(d.y[rows[k]]);
    }
    return o;
}

inline double model_auc(const UtilityModel& m, const LabeledData& d) {
    std::vector<double> s;
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) s.push_back(m.link(d.X.row(i).transpose()));
    return auc(d.y, s);
}

enum class Estimator { logistic, trees };

struct UtilityConfig {
    Estimator estimator = Estimator::logistic;
    LogisticConfig logistic;
    BoostConfig boost;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct FittedUtility {
    UtilityModel model;
    double train_auc = 0.5;
    double test_auc = 0.5;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
};

/// One model per group, fit on a stratified train split; AUCs on both splits.
inline std::map<std::string, FittedUtility> fit_group_utilities(const GroupedOutcomes& g, const UtilityConfig& cfg) {
    std::map<std::string, FittedUtility> out;
    for (const auto& [gid, data] : g.groups) {
        auto [tr, te] = stratified_split(data.y, cfg.test_fraction, cfg.seed);
        LabeledData train = subset(data, tr), test = subset(data, te);
        FittedUtility f;
        f.model = cfg.estimator == Estimator::logistic ? fit_logistic(train.X, train.y, cfg.logistic)
                                                       : fit_boosted_trees(train.X, train.y, cfg.boost);
        f.train_auc = model_auc(f.model, train);
        auto pos = std::accumulate(test.y.begin(), test.y.end(), 0);
        f.test_auc = (pos > 0 && pos < static_cast<int>(test.y.size())) ? model_auc(f.model, test) : 0.5;
        f.n_train = tr.size();
        f.n_test = te.size();
        out[gid] = std::move(f);
    }
    return out;
}

} // namespace mlc
