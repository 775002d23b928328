#include "mirenc/retrieval.hpp"

#include "mirenc/error.hpp"
#include "mirenc/log.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

namespace mirenc {

namespace {

double softplus(double z)
{
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z)
{
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace

// ---- ranking measures -------------------------------------------------------

RankMetrics rank_metrics(const std::vector<int>& ranked_labels)
{
    RankMetrics m;
    const std::size_t n = ranked_labels.size();
    if (n == 0) return m;
    const std::size_t top = std::min<std::size_t>(10, n);
    long long pos_seen = 0, top_hits = 0, concordant = 0, negatives = 0;
    double precision_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (ranked_labels[i]) {
            ++pos_seen;
            precision_sum += static_cast<double>(pos_seen) / static_cast<double>(i + 1);
            if (i < top) ++top_hits;
        } else {
            ++negatives;
            concordant += pos_seen; // every positive ranked above this negative
        }
    }
    m.p_at_10 = static_cast<double>(top_hits) / static_cast<double>(top);
    m.ap = pos_seen > 0 ? precision_sum / static_cast<double>(pos_seen) : 0.0;
    if (pos_seen > 0 && negatives > 0)
        m.auc = static_cast<double>(concordant) / (static_cast<double>(pos_seen) * static_cast<double>(negatives));
    return m;
}

std::optional<double> auc_score(const std::vector<double>& scores, const std::vector<int>& labels)
{
    require(scores.size() == labels.size(), "auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    long long pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            if (labels[order[t]]) {
                pos_rank_sum += midrank;
                ++pos;
            }
        i = j + 1;
    }
    const long long neg = static_cast<long long>(n) - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    const double p = static_cast<double>(pos);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

RankMetrics score_metrics(const std::vector<double>& scores, const std::vector<int>& labels)
{
    require(scores.size() == labels.size(), "rank metrics: scores and labels differ in length");
    for (double s : scores) require(std::isfinite(s), "rank metrics: non-finite score", ErrorKind::numerical);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<int> ranked(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) ranked[i] = labels[order[i]] ? 1 : 0;
    RankMetrics m = rank_metrics(ranked);
    m.auc = auc_score(scores, labels);
    return m;
}

// ---- tag models ---------------------------------------------------------------

namespace {

struct NewtonSystem {
    const Eigen::MatrixXd& x; // p x n
    const Eigen::MatrixXd* gram = nullptr; // n x n, x^T x, only for the dual path
    double reg;
};

// Solves [M, x h; (x h)^T, sum h] [dw; db] = -[gw; gb] with M = x diag(h) x^T + reg I.
void newton_direction(const NewtonSystem& sys, const Eigen::VectorXd& h, const Eigen::VectorXd& gw, double gb,
                      Eigen::VectorXd& dw, double& db)
{
    const Eigen::MatrixXd& x = sys.x;
    const Eigen::Index p = x.rows();
    const Eigen::Index n = x.cols();
    const Eigen::VectorXd xh = x * h;
    const double c = h.sum();

    Eigen::VectorXd u, a;
    if (p <= n || sys.gram == nullptr) {
        Eigen::MatrixXd m = x * h.asDiagonal() * x.transpose();
        m.diagonal().array() += sys.reg;
        const Eigen::LLT<Eigen::MatrixXd> llt(m);
        u = llt.solve(xh);
        a = llt.solve(gw);
    } else {
        // Woodbury: M^-1 v = (v - x S K^-1 S x^T v) / reg with S = sqrt(h), K = reg I + S G S.
        const Eigen::VectorXd s = h.cwiseSqrt();
        Eigen::MatrixXd k = s.asDiagonal() * (*sys.gram) * s.asDiagonal();
        k.diagonal().array() += sys.reg;
        const Eigen::LLT<Eigen::MatrixXd> llt(k);
        const auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
            const Eigen::VectorXd t = s.cwiseProduct(x.transpose() * v);
            return (v - x * s.cwiseProduct(llt.solve(t))) / sys.reg;
        };
        u = apply(xh);
        a = apply(gw);
    }
    const double schur = c - xh.dot(u);
    if (schur > 1e-12 * std::max(c, 1.0)) {
        db = (-gb + xh.dot(a)) / schur;
    } else {
        db = c > 0.0 ? -gb / (c + 1e-12) : -gb;
    }
    dw = -a - u * db;
}

} // namespace

TagModel train_tag_model(const std::string& tag, const Eigen::MatrixXd& x, const std::vector<int>& labels,
                         const TagHyper& hyper, const LogisticSettings& settings, const TagModel* warm_start)
{
    const Eigen::Index p = x.rows();
    const Eigen::Index n = x.cols();
    require(static_cast<std::size_t>(n) == labels.size(), "train_tag_model: one label per example required");
    require(x.allFinite(), "train_tag_model: non-finite features for tag " + tag, ErrorKind::numerical);
    require(hyper.reg > 0.0 && hyper.fn_weight > 0.0 && hyper.fp_weight > 0.0,
            "train_tag_model: hyperparameters must be positive", ErrorKind::config);
    const auto positives = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
    require(positives >= 1 && positives < n, "train_tag_model: tag " + tag + " needs both positive and negative examples",
            ErrorKind::insufficient_data);

    Eigen::VectorXd target(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool pos = labels[static_cast<std::size_t>(i)] != 0;
        target[i] = pos ? 1.0 : 0.0;
        weight[i] = pos ? hyper.fn_weight : hyper.fp_weight;
    }

    TagModel model;
    model.tag = tag;
    model.hyper = hyper;
    model.weights = Eigen::VectorXd::Zero(p);
    if (warm_start != nullptr && warm_start->weights.size() == p) {
        model.weights = warm_start->weights;
        model.bias = warm_start->bias;
    }

    const auto objective = [&](const Eigen::VectorXd& w, double b) {
        const Eigen::VectorXd s = (x.transpose() * w).array() + b;
        double f = 0.5 * hyper.reg * w.squaredNorm();
        for (Eigen::Index i = 0; i < n; ++i) f += weight[i] * softplus(target[i] > 0.5 ? -s[i] : s[i]);
        return f;
    };

    Eigen::MatrixXd gram;
    if (p > n) gram = x.transpose() * x;
    const NewtonSystem sys{x, p > n ? &gram : nullptr, hyper.reg};

    double f = objective(model.weights, model.bias);
    Eigen::VectorXd dw;
    for (int it = 0; it < settings.max_iter; ++it) {
        const Eigen::VectorXd s = (x.transpose() * model.weights).array() + model.bias;
        Eigen::VectorXd prob(n), h(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            prob[i] = sigmoid(s[i]);
            h[i] = weight[i] * prob[i] * (1.0 - prob[i]);
        }
        const Eigen::VectorXd resid = weight.cwiseProduct(prob - target);
        const Eigen::VectorXd gw = x * resid + hyper.reg * model.weights;
        const double gb = resid.sum();
        const double gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
        model.iterations = it;
        if (gnorm <= settings.grad_tol) {
            model.converged = true;
            return model;
        }

        double db = 0.0;
        newton_direction(sys, h, gw, gb, dw, db);
        double slope = gw.dot(dw) + gb * db;
        if (!(slope < 0.0) || !dw.allFinite() || !std::isfinite(db)) {
            // fall back to steepest descent
            dw = -gw;
            db = -gb;
            slope = -(gnorm * gnorm);
        }
        double step = 1.0;
        double f_new = objective(model.weights + step * dw, model.bias + step * db);
        while (f_new > f + 1e-4 * step * slope && step > 1e-12) {
            step *= 0.5;
            f_new = objective(model.weights + step * dw, model.bias + step * db);
        }
        if (!(f_new <= f)) break; // no further progress possible at double precision
        model.weights += step * dw;
        model.bias += step * db;
        f = f_new;
    }

    // final gradient check
    const Eigen::VectorXd s = (x.transpose() * model.weights).array() + model.bias;
    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i) resid[i] = weight[i] * (sigmoid(s[i]) - target[i]);
    const Eigen::VectorXd gw = x * resid + hyper.reg * model.weights;
    model.converged = std::sqrt(gw.squaredNorm() + resid.sum() * resid.sum()) <= settings.grad_tol;
    if (!model.converged)
        log_warning("train_tag_model: tag " + tag + " stopped before reaching the gradient tolerance");
    return model;
}

double predict_tag(const TagModel& model, const Eigen::VectorXd& v)
{
    require(v.size() == model.weights.size(), "predict_tag: dimension mismatch");
    return sigmoid(model.weights.dot(v) + model.bias);
}

double log_predict_tag(const TagModel& model, const Eigen::VectorXd& v)
{
    require(v.size() == model.weights.size(), "predict_tag: dimension mismatch");
    return -softplus(-(model.weights.dot(v) + model.bias));
}

Eigen::VectorXd smn_from_log(const Eigen::VectorXd& log_likelihoods)
{
    require(log_likelihoods.size() > 0, "smn_normalize: empty input");
    const double top = log_likelihoods.maxCoeff();
    require(std::isfinite(top), "smn_normalize: all likelihoods are zero or non-finite", ErrorKind::numerical);
    return smn_normalize((log_likelihoods.array() - top).exp().matrix());
}

Eigen::VectorXd smn_normalize(const Eigen::VectorXd& likelihoods)
{
    require(likelihoods.size() > 0, "smn_normalize: empty input");
    require((likelihoods.array() >= 0.0).all() && likelihoods.allFinite(),
            "smn_normalize: likelihoods must be finite and non-negative", ErrorKind::numerical);
    const double total = likelihoods.sum();
    require(total > 0.0, "smn_normalize: all likelihoods are zero", ErrorKind::numerical);
    return likelihoods / total;
}

std::vector<TagHyper> hyper_grid(const std::vector<double>& values, bool dedupe)
{
    require(!values.empty(), "hyper_grid: empty value list", ErrorKind::config);
    for (double v : values) require(v > 0.0, "hyper_grid: values must be positive", ErrorKind::config);
    std::vector<TagHyper> grid;
    std::set<std::tuple<long long, long long>> seen;
    for (double reg : values)
        for (double fn : values)
            for (double fp : values) {
                if (dedupe) {
                    // Scaling all three by the same factor leaves the minimizer unchanged.
                    const auto key = std::make_tuple(std::llround(std::log(fn / reg) * 1e6),
                                                     std::llround(std::log(fp / reg) * 1e6));
                    if (!seen.insert(key).second) continue;
                }
                grid.push_back({reg, fn, fp});
            }
    return grid;
}

std::vector<int> artist_folds(const std::vector<std::string>& artists, int n_folds, std::uint64_t seed)
{
    require(n_folds >= 2, "artist_folds: need at least 2 folds", ErrorKind::config);
    std::map<std::string, int> songs_per_artist;
    for (const auto& a : artists) ++songs_per_artist[a];
    require(static_cast<int>(songs_per_artist.size()) >= n_folds,
            "artist_folds: fewer artists than folds", ErrorKind::insufficient_data);
    std::vector<std::string> names;
    for (const auto& [name, count] : songs_per_artist) names.push_back(name);
    std::mt19937_64 rng(seed);
    std::shuffle(names.begin(), names.end(), rng);

    std::vector<int> load(static_cast<std::size_t>(n_folds), 0);
    std::map<std::string, int> fold_of;
    for (const auto& name : names) {
        const auto f = static_cast<int>(std::min_element(load.begin(), load.end()) - load.begin());
        fold_of[name] = f;
        load[static_cast<std::size_t>(f)] += songs_per_artist[name];
    }
    std::vector<int> folds;
    folds.reserve(artists.size());
    for (const auto& a : artists) folds.push_back(fold_of[a]);
    return folds;
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& vectors, const std::vector<int>& idx)
{
    Eigen::MatrixXd out(vectors.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = vectors.col(idx[i]);
    return out;
}

std::vector<int> gather_labels(const Eigen::MatrixXi& labels, const std::vector<int>& idx, Eigen::Index tag)
{
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(labels(i, tag) != 0 ? 1 : 0);
    return out;
}

bool has_both(const std::vector<int>& labels)
{
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    return pos > 0 && pos < static_cast<long>(labels.size());
}

TagHyper select_hyper(const Eigen::MatrixXd& vectors, const QbtData& data, const std::vector<int>& train,
                      Eigen::Index tag, const std::vector<TagHyper>& grid, const QbtSettings& settings)
{
    std::vector<std::string> train_artists;
    for (int i : train) train_artists.push_back(data.artists[static_cast<std::size_t>(i)]);
    std::set<std::string> distinct(train_artists.begin(), train_artists.end());
    if (static_cast<int>(distinct.size()) < settings.inner_folds) return TagHyper{};
    const std::vector<int> inner = artist_folds(train_artists, settings.inner_folds,
                                                settings.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(tag + 1)));

    std::vector<double> auc_sum(grid.size(), 0.0);
    int usable = 0;
    for (int f = 0; f < settings.inner_folds; ++f) {
        std::vector<int> fit_idx, held_idx;
        for (std::size_t i = 0; i < train.size(); ++i) (inner[i] == f ? held_idx : fit_idx).push_back(train[i]);
        const std::vector<int> fit_labels = gather_labels(data.labels, fit_idx, tag);
        const std::vector<int> held_labels = gather_labels(data.labels, held_idx, tag);
        if (!has_both(fit_labels) || !has_both(held_labels)) continue;
        ++usable;
        const Eigen::MatrixXd fit_x = gather(vectors, fit_idx);
        const Eigen::MatrixXd held_x = gather(vectors, held_idx);
        std::optional<TagModel> previous;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            TagModel m = train_tag_model(data.tags[static_cast<std::size_t>(tag)], fit_x, fit_labels, grid[g],
                                         settings.logistic, previous ? &*previous : nullptr);
            std::vector<double> scores(held_idx.size());
            for (std::size_t i = 0; i < held_idx.size(); ++i)
                scores[i] = m.weights.dot(held_x.col(static_cast<Eigen::Index>(i))) + m.bias;
            auc_sum[g] += auc_score(scores, held_labels).value_or(0.5);
            previous = std::move(m);
        }
    }
    if (usable == 0) return TagHyper{};
    const auto best = std::max_element(auc_sum.begin(), auc_sum.end()) - auc_sum.begin(); // first maximum
    return grid[static_cast<std::size_t>(best)];
}

} // namespace

QbtReport qbt_evaluate(const Eigen::MatrixXd& vectors, const QbtData& data, const QbtSettings& settings)
{
    const auto n = static_cast<Eigen::Index>(data.song_ids.size());
    require(vectors.cols() == n, "qbt: one vector per song required");
    require(data.artists.size() == data.song_ids.size() && data.folds.size() == data.song_ids.size(),
            "qbt: artists and folds must cover every song");
    require(data.labels.rows() == n && data.labels.cols() == static_cast<Eigen::Index>(data.tags.size()),
            "qbt: label matrix must be songs x tags");
    require(vectors.allFinite(), "qbt: non-finite song vectors", ErrorKind::numerical);
    require(settings.inner_folds >= 2, "qbt: inner folds must be at least 2", ErrorKind::config);

    // Canonical song order: by id.
    std::vector<int> canon(static_cast<std::size_t>(n));
    std::iota(canon.begin(), canon.end(), 0);
    std::sort(canon.begin(), canon.end(), [&](int a, int b) {
        return data.song_ids[static_cast<std::size_t>(a)] < data.song_ids[static_cast<std::size_t>(b)];
    });

    const int n_folds = *std::max_element(data.folds.begin(), data.folds.end()) + 1;
    for (int f : data.folds) require(f >= 0, "qbt: fold ids must be non-negative", ErrorKind::config);
    {
        std::map<std::string, int> fold_of_artist;
        for (std::size_t i = 0; i < data.artists.size(); ++i) {
            const auto [it, inserted] = fold_of_artist.emplace(data.artists[i], data.folds[i]);
            require(inserted || it->second == data.folds[i],
                    "qbt: artist " + data.artists[i] + " appears in more than one fold", ErrorKind::config);
        }
    }

    const std::vector<TagHyper> grid = hyper_grid(settings.grid, settings.dedupe_grid);
    const auto n_tags = static_cast<Eigen::Index>(data.tags.size());

    QbtReport report;
    for (int fold = 0; fold < n_folds; ++fold) {
        std::vector<int> train, test;
        for (int i : canon) (data.folds[static_cast<std::size_t>(i)] == fold ? test : train).push_back(i);
        if (test.empty()) continue;
        const Eigen::MatrixXd train_x = gather(vectors, train);

        // log-likelihood of every tag for every test song
        Eigen::MatrixXd lik(static_cast<Eigen::Index>(test.size()), n_tags);
        std::vector<TagHyper> chosen(static_cast<std::size_t>(n_tags));
        for (Eigen::Index t = 0; t < n_tags; ++t) {
            const std::vector<int> train_labels = gather_labels(data.labels, train, t);
            if (!has_both(train_labels)) {
                const double prior = static_cast<double>(std::count(train_labels.begin(), train_labels.end(), 1)) /
                                     static_cast<double>(train_labels.size());
                lik.col(t).setConstant(std::log(prior));
                log_info("qbt: tag " + data.tags[static_cast<std::size_t>(t)] + " has a single class in training fold " +
                         std::to_string(fold) + ", using its prior");
                continue;
            }
            const TagHyper hyper = settings.fixed_hyper ? *settings.fixed_hyper
                                                        : select_hyper(vectors, data, train, t, grid, settings);
            chosen[static_cast<std::size_t>(t)] = hyper;
            const TagModel model =
                train_tag_model(data.tags[static_cast<std::size_t>(t)], train_x, train_labels, hyper, settings.logistic);
            for (std::size_t i = 0; i < test.size(); ++i)
                lik(static_cast<Eigen::Index>(i), t) = log_predict_tag(model, vectors.col(test[i]));
        }
        for (Eigen::Index i = 0; i < lik.rows(); ++i) lik.row(i) = smn_from_log(lik.row(i).transpose()).transpose();

        QbtFoldResult fr;
        fr.fold = fold;
        int auc_count = 0;
        for (Eigen::Index t = 0; t < n_tags; ++t) {
            const std::vector<int> labels = gather_labels(data.labels, test, t);
            if (std::count(labels.begin(), labels.end(), 1) == 0) {
                log_info("qbt: tag " + data.tags[static_cast<std::size_t>(t)] + " has no positives in test fold " +
                         std::to_string(fold) + ", excluded");
                continue;
            }
            std::vector<double> scores(test.size());
            for (std::size_t i = 0; i < test.size(); ++i) scores[i] = lik(static_cast<Eigen::Index>(i), t);
            const RankMetrics m = score_metrics(scores, labels);
            report.per_tag.push_back({fold, data.tags[static_cast<std::size_t>(t)], m, chosen[static_cast<std::size_t>(t)]});
            if (m.auc) {
                fr.auc += *m.auc;
                ++auc_count;
            }
            fr.p_at_10 += m.p_at_10;
            fr.map += m.ap;
            ++fr.tags_scored;
        }
        if (fr.tags_scored == 0) continue;
        fr.auc = auc_count > 0 ? fr.auc / auc_count : 0.5;
        fr.p_at_10 /= fr.tags_scored;
        fr.map /= fr.tags_scored;
        report.per_fold.push_back(fr);
    }
    require(!report.per_fold.empty(), "qbt: no fold had a scorable tag", ErrorKind::insufficient_data);
    for (const auto& fr : report.per_fold) {
        report.auc += fr.auc;
        report.p_at_10 += fr.p_at_10;
        report.map += fr.map;
    }
    const auto folds_used = static_cast<double>(report.per_fold.size());
    report.auc /= folds_used;
    report.p_at_10 /= folds_used;
    report.map /= folds_used;
    return report;
}

} // namespace mirenc
