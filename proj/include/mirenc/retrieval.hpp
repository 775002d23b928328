#ifndef MIRENC_RETRIEVAL_HPP
#define MIRENC_RETRIEVAL_HPP

#include "mirenc/features.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mirenc {

// ---- ranking measures -------------------------------------------------------

struct RankMetrics {
    std::optional<double> auc; // empty for single-class lists
    double p_at_10 = 0.0;
    double ap = 0.0;
};

/// Metrics of a list already in ranked order (best first), no ties.
RankMetrics rank_metrics(const std::vector<int>& ranked_labels);

/// Ranks by descending score; equal scores keep their input order (callers
/// pass items in canonical song-id order). AUC counts tied pairs as 1/2.
RankMetrics score_metrics(const std::vector<double>& scores, const std::vector<int>& labels);

/// Midrank AUC only; empty when either class is missing.
std::optional<double> auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

// ---- query by tag -----------------------------------------------------------

struct TagHyper {
    double reg = 1.0;       // weight of the L2 penalty
    double fn_weight = 1.0; // loss multiplier on positive examples
    double fp_weight = 1.0; // loss multiplier on negative examples
};

struct TagModel {
    std::string tag;
    Eigen::VectorXd weights;
    double bias = 0.0;
    TagHyper hyper;
    int iterations = 0;
    bool converged = false;
};

struct LogisticSettings {
    double grad_tol = 1e-5;
    int max_iter = 100;
};

/// Minimizes sum_i c_i log(1 + exp(-y_i (w.x_i + b))) + reg/2 ||w||^2 with
/// c_i = fn_weight on positives and fp_weight on negatives. `x` holds one
/// example per column; `labels` are 0/1. Newton's method with backtracking.
TagModel train_tag_model(const std::string& tag, const Eigen::MatrixXd& x, const std::vector<int>& labels,
                         const TagHyper& hyper, const LogisticSettings& settings = {},
                         const TagModel* warm_start = nullptr);

double predict_tag(const TagModel& model, const Eigen::VectorXd& v);

/// Likelihoods divided by their sum.
Eigen::VectorXd smn_normalize(const Eigen::VectorXd& likelihoods);

/// Same normalization from log-likelihoods; stays exact when sigmoids saturate.
Eigen::VectorXd smn_from_log(const Eigen::VectorXd& log_likelihoods);

/// log sigma(w.v + b).
double log_predict_tag(const TagModel& model, const Eigen::VectorXd& v);

/// Cartesian grid over (reg, fn, fp); with `dedupe`, triples that are positive
/// multiples of an earlier one (same minimizer) are dropped.
std::vector<TagHyper> hyper_grid(const std::vector<double>& values, bool dedupe = true);

struct QbtData {
    std::vector<std::string> song_ids;
    std::vector<std::string> artists; // per song
    std::vector<int> folds;           // per song, 0-based
    std::vector<std::string> tags;
    Eigen::MatrixXi labels;           // songs x tags, 0/1
};

struct QbtSettings {
    std::vector<double> grid = {0.1, 1.0, 10.0, 100.0};
    bool dedupe_grid = true;
    int inner_folds = 3;
    /// When set, skips model selection and uses this triple for every tag.
    std::optional<TagHyper> fixed_hyper;
    LogisticSettings logistic;
    std::uint64_t seed = 0;
};

struct QbtTagResult {
    int fold = 0;
    std::string tag;
    RankMetrics metrics;
    TagHyper chosen;
};

struct QbtFoldResult {
    int fold = 0;
    double auc = 0.0;
    double p_at_10 = 0.0;
    double map = 0.0;
    int tags_scored = 0;
};

struct QbtReport {
    std::vector<QbtTagResult> per_tag;
    std::vector<QbtFoldResult> per_fold;
    double auc = 0.0;
    double p_at_10 = 0.0;
    double map = 0.0;
};

/// `vectors` has one column per song, in the order of data.song_ids.
QbtReport qbt_evaluate(const Eigen::MatrixXd& vectors, const QbtData& data, const QbtSettings& settings);

/// Artist-disjoint assignment of songs to `n_folds` folds, balanced by song count.
std::vector<int> artist_folds(const std::vector<std::string>& artists, int n_folds, std::uint64_t seed);

// ---- query by example -------------------------------------------------------

struct Metric {
    Eigen::MatrixXd W;                  // m x m, PSD
    std::optional<PcaProjector> reducer; // maps song vectors to m dims
    double slack = 0.0;                  // selected trade-off, 0 for the identity
};

/// sqrt((q - r)^T W (q - r)); throws ErrorKind::numerical when the quadratic
/// form is below -1e-8.
double mahalanobis_distance(const Eigen::MatrixXd& W, const Eigen::VectorXd& q, const Eigen::VectorXd& r);

/// Nearest PSD matrix in Frobenius norm (symmetrize, clip negative eigenvalues).
Eigen::MatrixXd project_psd(const Eigen::MatrixXd& W);

/// Mean per-query AUC of ranking `db` columns by ascending distance under W.
/// relevance(i, j) says whether db column j is relevant to query column i.
/// Queries without a relevant (or without an irrelevant) item are skipped.
struct QueryAuc {
    double mean_auc = 0.0;
    int queries_used = 0;
    int queries_skipped = 0;
};
QueryAuc query_auc(const Eigen::MatrixXd& W, const Eigen::MatrixXd& queries, const Eigen::MatrixXd& db,
                   const Eigen::MatrixXi& relevance);

struct MetricSettings {
    std::vector<double> slack_grid = {1e-2, 1e-1, 1, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8};
    int steps = 150;
    int triplets_per_step = 64;
    bool keep_identity_candidate = true;
    std::uint64_t seed = 0;
};

/// Pluggable metric learner over already-reduced vectors.
class MetricTrainer {
public:
    virtual ~MetricTrainer() = default;
    /// train: m x n_tr; rel_train: n_tr x n_tr. val: m x n_val with
    /// rel_val: n_val x n_tr (relevance of train songs to validation queries).
    virtual Metric train(const Eigen::MatrixXd& train, const Eigen::MatrixXi& rel_train, const Eigen::MatrixXd& val,
                         const Eigen::MatrixXi& rel_val) const = 0;
    virtual std::string name() const = 0;
};

class IdentityMetricTrainer : public MetricTrainer {
public:
    Metric train(const Eigen::MatrixXd& train, const Eigen::MatrixXi& rel_train, const Eigen::MatrixXd& val,
                 const Eigen::MatrixXi& rel_val) const override;
    std::string name() const override { return "identity"; }
};

/// Projected stochastic subgradient descent on
///   1/2 ||W - I||_F^2 + C * mean max(0, 1 + d2(q, r+) - d2(q, r-))
/// over sampled triplets, with W projected onto the PSD cone every step. C is
/// selected on validation AUC.
class HingeMetricTrainer : public MetricTrainer {
public:
    explicit HingeMetricTrainer(MetricSettings settings = {}) : settings_(std::move(settings)) {}
    Metric train(const Eigen::MatrixXd& train, const Eigen::MatrixXi& rel_train, const Eigen::MatrixXd& val,
                 const Eigen::MatrixXi& rel_val) const override;
    /// Fixed-slack fit without selection.
    Eigen::MatrixXd fit(const Eigen::MatrixXd& train, const Eigen::MatrixXi& rel_train, double slack) const;
    std::string name() const override { return "hinge"; }
    const MetricSettings& settings() const { return settings_; }

private:
    MetricSettings settings_;
};

struct QbeSplit {
    std::vector<int> train;
    std::vector<int> validation;
    std::vector<int> test;
};

/// Artist-disjoint train/validation/test splits (roughly 60/20/20 by artist).
std::vector<QbeSplit> make_qbe_splits(const std::vector<std::string>& artists, int n_splits, std::uint64_t seed);

/// Reduced dimension for a codebook size: 128->64, 256->96, 512->128, 1024->128.
int default_reduced_dim(Eigen::Index k);

struct QbeSettings {
    int reduced_dim = 0; // 0: default_reduced_dim(vector dimension)
};

struct QbeReport {
    std::vector<double> split_auc;
    double mean_auc = 0.0;
    int skipped_queries = 0;
};

/// For each split: PCA fitted on train vectors, metric trained by `trainer`,
/// then every test song queries the train songs. When `trained` is given it
/// receives the metric (with its reducer) of every split.
QbeReport qbe_evaluate(const Eigen::MatrixXd& vectors, const Eigen::MatrixXi& relevance,
                       const std::vector<QbeSplit>& splits, const MetricTrainer& trainer,
                       const QbeSettings& settings = {}, std::vector<Metric>* trained = nullptr);

} // namespace mirenc

#endif
