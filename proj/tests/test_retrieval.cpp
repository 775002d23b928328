#include "doctest.h"

#include "mirenc/error.hpp"
#include "mirenc/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

using namespace mirenc;

namespace {

// Exhaustive pair enumeration; ties count 1/2.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y)
{
    double good = 0.0, total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] && !y[j]) {
                total += 1.0;
                good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
    return good / total;
}

Eigen::MatrixXd gaussian(int rows, int cols, std::mt19937_64& rng, double sigma = 1.0)
{
    std::normal_distribution<double> n(0.0, sigma);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
    return m;
}

// Gradient of the class-weighted objective, evaluated directly.
double gradient_norm(const TagModel& m, const Eigen::MatrixXd& x, const std::vector<int>& y)
{
    Eigen::VectorXd gw = m.hyper.reg * m.weights;
    double gb = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-(m.weights.dot(x.col(i)) + m.bias)));
        const double c = y[static_cast<std::size_t>(i)] ? m.hyper.fn_weight : m.hyper.fp_weight;
        const double r = c * (p - (y[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
        gw += r * x.col(i);
        gb += r;
    }
    return std::sqrt(gw.squaredNorm() + gb * gb);
}

struct Planted {
    Eigen::MatrixXd vectors;
    QbtData data;
};

// Songs whose tag is carried by a dominant coordinate.
Planted planted_corpus(int n_artists, int songs_per_artist, int n_tags, double signal, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> tag_pick(0, n_tags - 1);
    const int n = n_artists * songs_per_artist;
    Planted p;
    p.vectors = gaussian(n_tags + 4, n, rng, 0.3);
    p.data.labels = Eigen::MatrixXi::Zero(n, n_tags);
    for (int t = 0; t < n_tags; ++t) p.data.tags.push_back("tag" + std::to_string(t));
    for (int i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "s%04d", i);
        p.data.song_ids.emplace_back(id);
        p.data.artists.push_back("a" + std::to_string(i / songs_per_artist));
        const int t = tag_pick(rng);
        p.data.labels(i, t) = 1;
        p.vectors(t, i) += signal;
    }
    p.data.folds = artist_folds(p.data.artists, 5, seed);
    return p;
}

} // namespace

TEST_CASE("worked ranking example against pair enumeration")
{
    const RankMetrics m = rank_metrics({1, 0, 1, 0});
    REQUIRE(m.auc.has_value());
    CHECK(*m.auc == doctest::Approx(pairwise_auc({4, 3, 2, 1}, {1, 0, 1, 0})));
    CHECK(*m.auc == doctest::Approx(0.75));
    CHECK(m.ap == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(m.p_at_10 == doctest::Approx(0.5)); // short list divides by its length

    const RankMetrics perfect = rank_metrics({1, 1, 0, 0, 0});
    CHECK(*perfect.auc == 1.0);
    CHECK(perfect.ap == 1.0);

    CHECK_FALSE(rank_metrics({1, 1}).auc.has_value());
    CHECK(rank_metrics({1, 1}).ap == 1.0);

    std::vector<int> long_list(30, 0);
    long_list[0] = long_list[5] = long_list[12] = 1;
    CHECK(rank_metrics(long_list).p_at_10 == doctest::Approx(0.2));
}

TEST_CASE("tie-aware AUC matches enumeration and is monotone-invariant")
{
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> coarse(0, 5);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(40);
        std::vector<int> y(40);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = coarse(rng);
            y[i] = coin(rng);
        }
        y[0] = 1;
        y[1] = 0;
        const double oracle = pairwise_auc(s, y);
        CHECK(*auc_score(s, y) == doctest::Approx(oracle).epsilon(1e-12));
        std::vector<double> t(s.size());
        std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3.0 * v) - 7.0; });
        CHECK(*score_metrics(t, y).auc == *score_metrics(s, y).auc);
    }
}

TEST_CASE("random scores give chance AUC")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u;
    std::vector<double> s(10000);
    std::vector<int> y(10000);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = u(rng);
        y[i] = i % 2 == 0;
    }
    const double auc = *auc_score(s, y);
    CHECK(auc >= 0.48);
    CHECK(auc <= 0.52);
}

TEST_CASE("sigmoid prediction")
{
    TagModel m;
    m.weights = Eigen::Vector2d(1.0, -1.0);
    CHECK(predict_tag(m, Eigen::Vector2d(0.3, 0.1)) == doctest::Approx(1.0 / (1.0 + std::exp(-0.2))).epsilon(1e-12));
    CHECK(predict_tag(m, Eigen::Vector2d(0.3, 0.1)) == doctest::Approx(0.5498).epsilon(1e-4));
    m.weights.setZero();
    CHECK(predict_tag(m, Eigen::Vector2d(5, 5)) == 0.5);
    m.weights << 100, 0;
    CHECK(predict_tag(m, Eigen::Vector2d(10, 0)) == doctest::Approx(1.0));
    CHECK(predict_tag(m, Eigen::Vector2d(-10, 0)) < 1e-40);
    CHECK(log_predict_tag(m, Eigen::Vector2d(-10, 0)) == doctest::Approx(-1000.0));
}

TEST_CASE("semantic multinomial")
{
    CHECK(smn_normalize(Eigen::Vector2d(0.2, 0.2)).isApprox(Eigen::Vector2d(0.5, 0.5)));
    CHECK(smn_normalize(Eigen::Vector3d(0, 1, 0)) == Eigen::Vector3d(0, 1, 0));
    CHECK(smn_normalize(Eigen::Vector3d(0.1, 0.3, 0.6)).isApprox(Eigen::Vector3d(0.1, 0.3, 0.6), 1e-12));
    CHECK_THROWS_AS(smn_normalize(Eigen::Vector2d::Zero()), Error);
    const Eigen::Vector3d lik(0.05, 0.7, 0.2);
    for (double alpha : {0.5, 3.0, 1e4}) CHECK((smn_normalize(alpha * lik) - smn_normalize(lik)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(smn_normalize(lik).sum() - 1.0) < 1e-8);
    CHECK((smn_from_log(lik.array().log().matrix()) - smn_normalize(lik)).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::VectorXd tiny = smn_from_log(Eigen::Vector2d(-2000.0, -2000.0 + std::log(3.0)));
    CHECK(tiny(0) == doctest::Approx(0.25));
}

TEST_CASE("hyperparameter grid with scale de-duplication")
{
    CHECK(hyper_grid({0.1, 1, 10, 100}, false).size() == 64);
    const auto grid = hyper_grid({0.1, 1, 10, 100});
    CHECK(grid.size() == 37);
    std::set<std::pair<long long, long long>> ratios;
    for (const auto& h : grid)
        ratios.emplace(std::llround(std::log10(h.fn_weight / h.reg) * 100), std::llround(std::log10(h.fp_weight / h.reg) * 100));
    CHECK(ratios.size() == grid.size());
}

TEST_CASE("separable data trains to perfect AUC and tight gradient")
{
    std::mt19937_64 rng(3);
    Eigen::MatrixXd x = gaussian(3, 200, rng, 0.5);
    std::vector<int> y(200);
    for (int i = 0; i < 200; ++i) {
        y[static_cast<std::size_t>(i)] = i < 100;
        x(0, i) += i < 100 ? 2.0 : -2.0;
    }
    const TagModel m = train_tag_model("t", x, y, {0.1, 1.0, 1.0});
    CHECK(m.converged);
    CHECK(gradient_norm(m, x, y) <= 1e-5);
    std::vector<double> s(200);
    for (int i = 0; i < 200; ++i) s[static_cast<std::size_t>(i)] = predict_tag(m, x.col(i));
    CHECK(*auc_score(s, y) == 1.0);
}

TEST_CASE("heavy regularization predicts the class-weighted prior")
{
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd x = gaussian(5, 90, rng);
    std::vector<int> y(90, 0);
    for (int i = 0; i < 30; ++i) y[static_cast<std::size_t>(i)] = 1;
    const TagHyper h{1e6, 2.0, 1.0};
    const TagModel m = train_tag_model("t", x, y, h);
    CHECK(m.weights.norm() < 1e-4);
    const double prior = 2.0 * 30 / (2.0 * 30 + 1.0 * 60);
    for (int i = 0; i < 90; ++i) CHECK(std::abs(predict_tag(m, x.col(i)) - prior) < 1e-3);
}

TEST_CASE("logistic direction matches the equal-covariance Bayes direction")
{
    std::mt19937_64 rng(5);
    Eigen::Matrix2d cov;
    cov << 1.0, 0.6, 0.6, 2.0;
    const Eigen::Matrix2d chol = cov.llt().matrixL();
    const Eigen::Vector2d mu0(0.0, 0.0), mu1(1.0, 0.5);
    const int n = 10000;
    Eigen::MatrixXd x(2, n);
    std::vector<int> y(static_cast<std::size_t>(n));
    std::normal_distribution<double> n01;
    for (int i = 0; i < n; ++i) {
        const bool pos = i % 2 == 0;
        y[static_cast<std::size_t>(i)] = pos;
        x.col(i) = (pos ? mu1 : mu0) + chol * Eigen::Vector2d(n01(rng), n01(rng));
    }
    const TagModel m = train_tag_model("t", x, y, {0.1, 1.0, 1.0});
    const Eigen::Vector2d bayes = cov.inverse() * (mu1 - mu0);
    const double cosine = m.weights.normalized().dot(bayes.normalized());
    const double degrees = std::acos(std::min(1.0, cosine)) * 180.0 / std::numbers::pi;
    CHECK(degrees < 5.0);
}

TEST_CASE("wide data goes through the low-rank Newton path")
{
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd x = gaussian(60, 25, rng);
    std::vector<int> y(25);
    for (int i = 0; i < 25; ++i) y[static_cast<std::size_t>(i)] = i % 3 == 0;
    for (const TagHyper& h : {TagHyper{0.1, 1, 1}, TagHyper{10, 100, 0.1}, TagHyper{100, 0.1, 10}}) {
        const TagModel m = train_tag_model("t", x, y, h);
        CHECK(m.converged);
        CHECK(gradient_norm(m, x, y) <= 1e-5);
    }
}

TEST_CASE("tag training rejects bad input")
{
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 3);
    CHECK_THROWS_AS(train_tag_model("t", x, {1, 1, 1}, {}), Error);
    x(0, 0) = std::nan("");
    try {
        train_tag_model("t", x, {1, 0, 1}, {});
        FAIL("expected failure");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numerical);
    }
}

TEST_CASE("artist folds are disjoint and balanced")
{
    std::vector<std::string> artists;
    for (int a = 0; a < 40; ++a)
        for (int s = 0; s < 5; ++s) artists.push_back("artist" + std::to_string(a));
    const auto folds = artist_folds(artists, 5, 9);
    std::map<std::string, std::set<int>> seen;
    std::vector<int> count(5, 0);
    for (std::size_t i = 0; i < artists.size(); ++i) {
        seen[artists[i]].insert(folds[i]);
        ++count[static_cast<std::size_t>(folds[i])];
    }
    for (const auto& [a, f] : seen) CHECK(f.size() == 1);
    for (int c : count) CHECK(c == 40);
    CHECK(artist_folds(artists, 5, 9) == folds);
}

TEST_CASE("identical song vectors give exactly chance AUC")
{
    Planted p = planted_corpus(20, 4, 4, 0.0, 10);
    p.vectors.setConstant(0.25);
    QbtSettings s;
    s.fixed_hyper = TagHyper{};
    const QbtReport r = qbt_evaluate(p.vectors, p.data, s);
    for (const auto& t : r.per_tag) CHECK(*t.metrics.auc == 0.5);
    CHECK(r.auc == 0.5);
}

TEST_CASE("planted tag coordinates are retrieved and scrambling destroys them")
{
    Planted p = planted_corpus(40, 5, 6, 1.5, 11);
    QbtSettings s;
    s.grid = {0.1, 10};
    const QbtReport r = qbt_evaluate(p.vectors, p.data, s);
    CHECK(r.map > 0.9);
    CHECK(r.per_fold.size() == 5);

    double auc = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<int> perm(200);
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(seed);
        std::shuffle(perm.begin(), perm.end(), rng);
        QbtData scrambled = p.data;
        for (int i = 0; i < 200; ++i) scrambled.labels.row(i) = p.data.labels.row(perm[static_cast<std::size_t>(i)]);
        auc += qbt_evaluate(p.vectors, scrambled, s).auc / 5.0;
    }
    CHECK(auc > 0.44);
    CHECK(auc < 0.56);
}

TEST_CASE("qbt refuses folds that split an artist")
{
    Planted p = planted_corpus(10, 2, 2, 1.0, 12);
    p.data.folds[0] = (p.data.folds[1] + 1) % 5;
    CHECK_THROWS_AS(qbt_evaluate(p.vectors, p.data, {}), Error);
}

TEST_CASE("qbt is deterministic")
{
    Planted p = planted_corpus(20, 4, 3, 1.0, 13);
    QbtSettings s;
    s.grid = {1, 10};
    const QbtReport a = qbt_evaluate(p.vectors, p.data, s);
    const QbtReport b = qbt_evaluate(p.vectors, p.data, s);
    CHECK(a.auc == b.auc);
    CHECK(a.map == b.map);
    CHECK(a.p_at_10 == b.p_at_10);
}

TEST_CASE("mahalanobis distance")
{
    const Eigen::Vector2d q(1.0, 2.0), r(0.0, 1.0);
    CHECK(mahalanobis_distance(Eigen::Matrix2d::Identity(), q, r) == doctest::Approx((q - r).norm()));
    CHECK(mahalanobis_distance(Eigen::Matrix2d::Identity(), q, q) == 0.0);
    Eigen::Matrix2d w;
    w << 4, 0, 0, 1;
    CHECK(mahalanobis_distance(w, q, r) == doctest::Approx(std::sqrt(5.0)));
    CHECK(mahalanobis_distance(w, q, r) == mahalanobis_distance(w, r, q));
    w << -1, 0, 0, 1;
    CHECK_THROWS_AS(mahalanobis_distance(w, Eigen::Vector2d(1, 0), Eigen::Vector2d::Zero()), Error);

    std::mt19937_64 rng(14);
    const Eigen::MatrixXd P = gaussian(3, 6, rng);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::VectorXd a = gaussian(6, 1, rng), b = gaussian(6, 1, rng);
        CHECK(std::abs(mahalanobis_distance(P.transpose() * P, a, b) - (P * a - P * b).norm()) < 1e-6);
    }
}

TEST_CASE("psd projection")
{
    std::mt19937_64 rng(15);
    const Eigen::MatrixXd a = gaussian(8, 8, rng);
    const Eigen::MatrixXd w = project_psd(a);
    CHECK((w - w.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(w).eigenvalues().minCoeff() > -1e-8);
    const Eigen::MatrixXd spd = a * a.transpose();
    CHECK((project_psd(spd) - spd).cwiseAbs().maxCoeff() < 1e-9);
}

namespace {

struct Clustered {
    Eigen::MatrixXd vectors;
    Eigen::MatrixXi relevance;
    std::vector<std::string> artists;
};

Clustered clustered(int clusters, int artists_per_cluster, int songs_per_artist, double spread, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const int dim = 10;
    const Eigen::MatrixXd centers = gaussian(dim, clusters, rng, 3.0);
    const int n = clusters * artists_per_cluster * songs_per_artist;
    Clustered c;
    c.vectors.resize(dim, n);
    std::vector<int> cluster_of(static_cast<std::size_t>(n));
    int i = 0;
    for (int k = 0; k < clusters; ++k)
        for (int a = 0; a < artists_per_cluster; ++a)
            for (int s = 0; s < songs_per_artist; ++s, ++i) {
                c.vectors.col(i) = centers.col(k) + gaussian(dim, 1, rng, spread);
                cluster_of[static_cast<std::size_t>(i)] = k;
                c.artists.push_back("c" + std::to_string(k) + "a" + std::to_string(a));
            }
    c.relevance.resize(n, n);
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y) c.relevance(x, y) = cluster_of[static_cast<std::size_t>(x)] == cluster_of[static_cast<std::size_t>(y)];
    return c;
}

} // namespace

TEST_CASE("identity metric on well separated clusters")
{
    const Clustered c = clustered(6, 5, 4, 0.3, 16);
    const auto splits = make_qbe_splits(c.artists, 3, 1);
    QbeSettings s;
    s.reduced_dim = 8;
    const QbeReport r = qbe_evaluate(c.vectors, c.relevance, splits, IdentityMetricTrainer{}, s);
    CHECK(r.mean_auc > 0.95);

    // shuffled relevance
    std::vector<int> perm(static_cast<std::size_t>(c.vectors.cols()));
    std::iota(perm.begin(), perm.end(), 0);
    double auc = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed);
        std::shuffle(perm.begin(), perm.end(), rng);
        Eigen::MatrixXi shuffled(c.relevance.rows(), c.relevance.cols());
        for (Eigen::Index x = 0; x < shuffled.rows(); ++x)
            for (Eigen::Index y = 0; y < shuffled.cols(); ++y)
                shuffled(x, y) = c.relevance(perm[static_cast<std::size_t>(x)], perm[static_cast<std::size_t>(y)]);
        auc += qbe_evaluate(c.vectors, shuffled, splits, IdentityMetricTrainer{}, s).mean_auc / 5.0;
    }
    CHECK(auc >= 0.45);
    CHECK(auc <= 0.55);
}

TEST_CASE("query AUC is invariant to database order")
{
    const Clustered c = clustered(4, 3, 3, 1.5, 17);
    const Eigen::MatrixXd q = c.vectors.leftCols(9);
    const Eigen::MatrixXd db = c.vectors.rightCols(27);
    const Eigen::MatrixXi rel = c.relevance.block(0, 9, 9, 27);
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd w = project_psd(gaussian(10, 10, rng));
    const double base = query_auc(w, q, db, rel).mean_auc;
    std::vector<int> perm(27), qperm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::iota(qperm.begin(), qperm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::shuffle(qperm.begin(), qperm.end(), rng);
    Eigen::MatrixXd db2(db.rows(), 27), q2(q.rows(), 9);
    Eigen::MatrixXi rel2(9, 27);
    for (int j = 0; j < 27; ++j) db2.col(j) = db.col(perm[static_cast<std::size_t>(j)]);
    for (int i = 0; i < 9; ++i) q2.col(i) = q.col(qperm[static_cast<std::size_t>(i)]);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 27; ++j) rel2(i, j) = rel(qperm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    CHECK(query_auc(w, q2, db2, rel2).mean_auc == base);
}

TEST_CASE("metric training")
{
    std::mt19937_64 rng(18);
    const int n = 120, dim = 5;
    Eigen::MatrixXd x = gaussian(dim, n, rng);
    // relevance decided by proximity in coordinate 0 only
    Eigen::MatrixXi rel(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) rel(i, j) = std::abs(x(0, i) - x(0, j)) < 0.3;

    MetricSettings zero;
    zero.steps = 0;
    CHECK(HingeMetricTrainer(zero).fit(x, rel, 1.0) == Eigen::MatrixXd::Identity(dim, dim));

    MetricSettings s;
    s.steps = 200;
    const Eigen::MatrixXd w = HingeMetricTrainer(s).fit(x, rel, 100.0);
    for (int i = 1; i < dim; ++i) CHECK(w(0, 0) > w(i, i));
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(w).eigenvalues().minCoeff() > -1e-8);

    Eigen::MatrixXi none = Eigen::MatrixXi::Zero(n, n);
    CHECK_THROWS_AS(HingeMetricTrainer(s).fit(x, none, 1.0), Error);
}

TEST_CASE("learned metric does no harm on Euclidean clusters")
{
    const Clustered c = clustered(6, 5, 4, 1.5, 19);
    const auto splits = make_qbe_splits(c.artists, 3, 2);
    QbeSettings s;
    s.reduced_dim = 8;
    MetricSettings ms;
    ms.slack_grid = {1e-2, 1, 1e2, 1e4};
    const double identity = qbe_evaluate(c.vectors, c.relevance, splits, IdentityMetricTrainer{}, s).mean_auc;
    const double learned = qbe_evaluate(c.vectors, c.relevance, splits, HingeMetricTrainer(ms), s).mean_auc;
    CHECK(learned >= identity - 0.01);
}

TEST_CASE("qbe splits are artist disjoint")
{
    std::vector<std::string> artists;
    for (int a = 0; a < 20; ++a)
        for (int s = 0; s < 3; ++s) artists.push_back("a" + std::to_string(a));
    for (const auto& split : make_qbe_splits(artists, 4, 5)) {
        std::set<std::string> tr, te, va;
        for (int i : split.train) tr.insert(artists[static_cast<std::size_t>(i)]);
        for (int i : split.validation) va.insert(artists[static_cast<std::size_t>(i)]);
        for (int i : split.test) te.insert(artists[static_cast<std::size_t>(i)]);
        for (const auto& a : te) {
            CHECK(tr.count(a) == 0);
            CHECK(va.count(a) == 0);
        }
        for (const auto& a : va) CHECK(tr.count(a) == 0);
        CHECK(split.train.size() + split.validation.size() + split.test.size() == artists.size());
    }
    CHECK(default_reduced_dim(128) == 64);
    CHECK(default_reduced_dim(256) == 96);
    CHECK(default_reduced_dim(512) == 128);
    CHECK(default_reduced_dim(1024) == 128);
}
