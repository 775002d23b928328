#include "mirenc/retrieval.hpp"

#include "mirenc/error.hpp"
#include "mirenc/log.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace mirenc {

double mahalanobis_distance(const Eigen::MatrixXd& W, const Eigen::VectorXd& q, const Eigen::VectorXd& r)
{
    require(W.rows() == W.cols() && W.rows() == q.size() && q.size() == r.size(),
            "mahalanobis_distance: dimension mismatch");
    const Eigen::VectorXd diff = q - r;
    const double form = diff.dot(W * diff);
    if (form < -1e-8) fail(ErrorKind::numerical, "mahalanobis_distance: metric is not positive semidefinite (quadratic form " +
                                                     std::to_string(form) + ")");
    return std::sqrt(std::max(form, 0.0));
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& W)
{
    const Eigen::MatrixXd sym = 0.5 * (W + W.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) fail(ErrorKind::numerical, "project_psd: eigendecomposition failed");
    const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd out = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

namespace {

double squared_distance(const Eigen::MatrixXd& W, const Eigen::VectorXd& diff)
{
    return std::max(diff.dot(W * diff), 0.0);
}

} // namespace

QueryAuc query_auc(const Eigen::MatrixXd& W, const Eigen::MatrixXd& queries, const Eigen::MatrixXd& db,
                   const Eigen::MatrixXi& relevance)
{
    require(relevance.rows() == queries.cols() && relevance.cols() == db.cols(), "query_auc: relevance shape mismatch");
    require(W.rows() == queries.rows() && W.rows() == db.rows(), "query_auc: dimension mismatch");
    QueryAuc out;
    std::vector<double> aucs;
    std::vector<double> scores(static_cast<std::size_t>(db.cols()));
    std::vector<int> labels(static_cast<std::size_t>(db.cols()));
    for (Eigen::Index i = 0; i < queries.cols(); ++i) {
        for (Eigen::Index j = 0; j < db.cols(); ++j) {
            scores[static_cast<std::size_t>(j)] = -squared_distance(W, queries.col(i) - db.col(j));
            labels[static_cast<std::size_t>(j)] = relevance(i, j) != 0 ? 1 : 0;
        }
        const auto auc = auc_score(scores, labels);
        if (!auc) {
            ++out.queries_skipped;
            continue;
        }
        aucs.push_back(*auc);
    }
    out.queries_used = static_cast<int>(aucs.size());
    if (!aucs.empty()) {
        // order-independent sum
        std::sort(aucs.begin(), aucs.end());
        out.mean_auc = std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
    }
    return out;
}

Metric IdentityMetricTrainer::train(const Eigen::MatrixXd& train, const Eigen::MatrixXi&, const Eigen::MatrixXd&,
                                    const Eigen::MatrixXi&) const
{
    Metric m;
    m.W = Eigen::MatrixXd::Identity(train.rows(), train.rows());
    return m;
}

Eigen::MatrixXd HingeMetricTrainer::fit(const Eigen::MatrixXd& train, const Eigen::MatrixXi& rel_train,
                                        double slack) const
{
    const Eigen::Index m = train.rows();
    const Eigen::Index n = train.cols();
    require(rel_train.rows() == n && rel_train.cols() == n, "train_metric: relevance must be n x n over train songs");
    require(slack > 0.0, "train_metric: slack must be positive", ErrorKind::config);
    Eigen::MatrixXd W = Eigen::MatrixXd::Identity(m, m);
    if (settings_.steps <= 0) return W;

    std::vector<int> queries;
    std::vector<std::vector<int>> relevant(static_cast<std::size_t>(n)), irrelevant(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            (rel_train(i, j) ? relevant : irrelevant)[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
        }
        if (!relevant[static_cast<std::size_t>(i)].empty() && !irrelevant[static_cast<std::size_t>(i)].empty())
            queries.push_back(static_cast<int>(i));
    }
    require(!queries.empty(), "train_metric: no query has both a relevant and an irrelevant training song",
            ErrorKind::insufficient_data);

    // typical squared distance sets the step scale
    double scale = 0.0;
    long long pairs = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            scale += (train.col(i) - train.col(j)).squaredNorm();
            ++pairs;
        }
    scale = pairs > 0 ? scale / static_cast<double>(pairs) : 1.0;
    if (!(scale > 0.0)) scale = 1.0;

    // Dividing the objective by C keeps the step size bounded across the grid.
    const double shrink = 1.0 / slack;
    const double eta0 = 0.5 / (shrink + scale);
    std::mt19937_64 rng(settings_.seed ^ static_cast<std::uint64_t>(std::llround(std::log10(slack) * 1000.0) + 7919));
    std::uniform_int_distribution<std::size_t> pick_query(0, queries.size() - 1);
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(m, m);
    Eigen::MatrixXd grad(m, m);
    for (int t = 1; t <= settings_.steps; ++t) {
        grad.setZero();
        for (int b = 0; b < settings_.triplets_per_step; ++b) {
            const auto q = static_cast<std::size_t>(queries[pick_query(rng)]);
            const auto& rel = relevant[q];
            const auto& irr = irrelevant[q];
            const int rp = rel[std::uniform_int_distribution<std::size_t>(0, rel.size() - 1)(rng)];
            const int rn = irr[std::uniform_int_distribution<std::size_t>(0, irr.size() - 1)(rng)];
            const Eigen::VectorXd a = train.col(static_cast<Eigen::Index>(q)) - train.col(rp);
            const Eigen::VectorXd c = train.col(static_cast<Eigen::Index>(q)) - train.col(rn);
            if (1.0 + squared_distance(W, a) - squared_distance(W, c) > 0.0) {
                grad.noalias() += a * a.transpose();
                grad.noalias() -= c * c.transpose();
            }
        }
        grad /= static_cast<double>(settings_.triplets_per_step);
        grad.noalias() += shrink * (W - identity);
        W = project_psd(W - (eta0 / std::sqrt(static_cast<double>(t))) * grad);
    }
    return W;
}

Metric HingeMetricTrainer::train(const Eigen::MatrixXd& train, const Eigen::MatrixXi& rel_train,
                                 const Eigen::MatrixXd& val, const Eigen::MatrixXi& rel_val) const
{
    require(!settings_.slack_grid.empty() || settings_.keep_identity_candidate, "train_metric: empty slack grid",
            ErrorKind::config);
    require(val.cols() > 0, "train_metric: validation set is empty", ErrorKind::insufficient_data);
    const Eigen::Index m = train.rows();
    Metric best;
    double best_auc = -1.0;
    if (settings_.keep_identity_candidate) {
        best.W = Eigen::MatrixXd::Identity(m, m);
        best_auc = query_auc(best.W, val, train, rel_val).mean_auc;
    }
    for (double c : settings_.slack_grid) {
        Eigen::MatrixXd W = fit(train, rel_train, c);
        const double auc = query_auc(W, val, train, rel_val).mean_auc;
        if (auc > best_auc) {
            best_auc = auc;
            best.W = std::move(W);
            best.slack = c;
        }
    }
    return best;
}

std::vector<QbeSplit> make_qbe_splits(const std::vector<std::string>& artists, int n_splits, std::uint64_t seed)
{
    require(n_splits >= 1, "qbe: need at least one split", ErrorKind::config);
    const std::set<std::string> distinct(artists.begin(), artists.end());
    require(distinct.size() >= 3, "qbe: need at least three artists", ErrorKind::insufficient_data);
    std::vector<QbeSplit> splits;
    for (int s = 0; s < n_splits; ++s) {
        std::vector<std::string> names(distinct.begin(), distinct.end());
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(s) * 0x9E3779B97F4A7C15ULL);
        std::shuffle(names.begin(), names.end(), rng);
        const std::size_t n = names.size();
        const std::size_t n_test = std::max<std::size_t>(1, n / 5);
        const std::size_t n_val = std::max<std::size_t>(1, n / 5);
        std::map<std::string, int> role; // 0 train, 1 validation, 2 test
        for (std::size_t i = 0; i < n; ++i) role[names[i]] = i < n_test ? 2 : (i < n_test + n_val ? 1 : 0);
        QbeSplit split;
        for (std::size_t i = 0; i < artists.size(); ++i) {
            const int r = role[artists[i]];
            (r == 0 ? split.train : r == 1 ? split.validation : split.test).push_back(static_cast<int>(i));
        }
        splits.push_back(std::move(split));
    }
    return splits;
}

int default_reduced_dim(Eigen::Index k)
{
    if (k <= 128) return 64;
    if (k <= 256) return 96;
    return 128;
}

namespace {

Eigen::MatrixXi sub_relevance(const Eigen::MatrixXi& rel, const std::vector<int>& rows, const std::vector<int>& cols)
{
    Eigen::MatrixXi out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rel(rows[i], cols[j]);
    return out;
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& v, const std::vector<int>& idx)
{
    Eigen::MatrixXd out(v.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = v.col(idx[i]);
    return out;
}

} // namespace

QbeReport qbe_evaluate(const Eigen::MatrixXd& vectors, const Eigen::MatrixXi& relevance,
                       const std::vector<QbeSplit>& splits, const MetricTrainer& trainer, const QbeSettings& settings,
                       std::vector<Metric>* trained)
{
    const Eigen::Index n = vectors.cols();
    require(relevance.rows() == n && relevance.cols() == n, "qbe: relevance must be songs x songs");
    require(vectors.allFinite(), "qbe: non-finite song vectors", ErrorKind::numerical);
    require(!splits.empty(), "qbe: no splits", ErrorKind::config);
    const int m = settings.reduced_dim > 0 ? settings.reduced_dim : default_reduced_dim(vectors.rows());

    QbeReport report;
    for (const QbeSplit& split : splits) {
        require(!split.train.empty() && !split.test.empty(), "qbe: split needs train and test songs",
                ErrorKind::insufficient_data);
        const Eigen::MatrixXd train_raw = columns(vectors, split.train);
        const PcaProjector pca = PcaProjector::fit_at_most(train_raw, m);
        const Eigen::MatrixXd train = pca.project(train_raw);
        const Eigen::MatrixXd val = pca.project(columns(vectors, split.validation));
        const Eigen::MatrixXd test = pca.project(columns(vectors, split.test));

        Metric metric = trainer.train(train, sub_relevance(relevance, split.train, split.train), val,
                                      sub_relevance(relevance, split.validation, split.train));
        metric.reducer = pca;
        const QueryAuc q = query_auc(metric.W, test, train, sub_relevance(relevance, split.test, split.train));
        if (q.queries_skipped > 0)
            log_info("qbe: skipped " + std::to_string(q.queries_skipped) + " queries without relevant train songs");
        require(q.queries_used > 0, "qbe: no test query has a relevant train song", ErrorKind::insufficient_data);
        report.skipped_queries += q.queries_skipped;
        report.split_auc.push_back(q.mean_auc);
        if (trained) trained->push_back(std::move(metric));
    }
    report.mean_auc =
        std::accumulate(report.split_auc.begin(), report.split_auc.end(), 0.0) / static_cast<double>(report.split_auc.size());
    return report;
}

} // namespace mirenc
