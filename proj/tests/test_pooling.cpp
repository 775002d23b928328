#include "doctest.h"

#include "mirenc/error.hpp"
#include "mirenc/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace mirenc;

namespace {

Eigen::MatrixXd uniform(int rows, int cols, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    return m;
}

CodeMatrix one_hot_columns(int k, const std::vector<int>& picks)
{
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(picks.size()));
    for (std::size_t t = 0; t < picks.size(); ++t) m(picks[t], static_cast<Eigen::Index>(t)) = 1.0;
    return CodeMatrix(CodeMatrix::Sparse(m.sparseView()));
}

} // namespace

TEST_CASE("mean pooling")
{
    Eigen::VectorXd c(3);
    c << 0.1, -0.4, 2.0;
    const Eigen::MatrixXd same = c.replicate(1, 7);
    CHECK((mean_pool(CodeMatrix(same)) - c).cwiseAbs().maxCoeff() < 1e-15);

    const Eigen::VectorXd hist = mean_pool(one_hot_columns(6, {1, 1, 2, 3}));
    Eigen::VectorXd expect(6);
    expect << 0, 0.5, 0.25, 0.25, 0, 0;
    CHECK(hist == expect);

    std::mt19937_64 rng(1);
    const Eigen::MatrixXd m = uniform(8, 100, rng);
    const Eigen::VectorXd got = mean_pool(CodeMatrix(m));
    for (int i = 0; i < 8; ++i) {
        double acc = 0.0;
        for (int t = 0; t < 100; ++t) acc += m(i, t);
        CHECK(std::abs(got(i) - acc / 100.0) < 1e-6);
    }
    CHECK((mean_pool(CodeMatrix(CodeMatrix::Sparse(m.sparseView()))) - got).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("max-abs pooling keeps the sign")
{
    Eigen::MatrixXd row(1, 3);
    row << 0.2, -0.9, 0.5;
    CHECK(max_abs_pool(CodeMatrix(row))(0) == -0.9);

    Eigen::MatrixXd tie(1, 3);
    tie << 0.5, -0.5, 0.5;
    CHECK(max_abs_pool(CodeMatrix(tie))(0) == 0.5);
    tie << -0.5, 0.5, 0.1;
    CHECK(max_abs_pool(CodeMatrix(tie))(0) == -0.5);

    Eigen::MatrixXd col(3, 1);
    col << 1, -2, 0;
    CHECK(max_abs_pool(CodeMatrix(col)) == Eigen::VectorXd(col.col(0)));

    std::mt19937_64 rng(2);
    const Eigen::MatrixXd m = uniform(8, 50, rng);
    const Eigen::VectorXd got = max_abs_pool(CodeMatrix(m));
    const Eigen::VectorXd got_sparse = max_abs_pool(CodeMatrix(CodeMatrix::Sparse(m.sparseView())));
    for (int i = 0; i < 8; ++i) {
        double best = 0.0;
        for (int t = 0; t < 50; ++t)
            if (std::abs(m(i, t)) > std::abs(best)) best = m(i, t);
        CHECK(got(i) == best);
        CHECK(got_sparse(i) == best);
    }
}

TEST_CASE("sparse max-abs pooling with negative-only rows")
{
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 4);
    m(0, 2) = -0.3;
    const Eigen::VectorXd v = max_abs_pool(CodeMatrix(CodeMatrix::Sparse(m.sparseView())));
    CHECK(v(0) == -0.3);
    CHECK(v(1) == 0.0);
}

TEST_CASE("pooling is permutation invariant and k-dimensional")
{
    std::mt19937_64 rng(3);
    for (int t : {1, 5, 300}) {
        Eigen::MatrixXd m = uniform(10, t, rng);
        std::vector<int> perm(static_cast<std::size_t>(t));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Eigen::MatrixXd shuffled(10, t);
        for (int j = 0; j < t; ++j) shuffled.col(j) = m.col(perm[static_cast<std::size_t>(j)]);
        const Eigen::VectorXd a = mean_pool(CodeMatrix(m));
        CHECK(a.size() == 10);
        CHECK((a - mean_pool(CodeMatrix(shuffled))).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(max_abs_pool(CodeMatrix(m)) == max_abs_pool(CodeMatrix(shuffled)));
    }
}

TEST_CASE("ppk transform")
{
    const Eigen::VectorXd uni = ppk_transform(Eigen::VectorXd::Constant(16, 1.0 / 16));
    CHECK((uni.array() - 0.25).abs().maxCoeff() < 1e-12);
    CHECK(std::abs(uni.norm() - 1.0) < 1e-6);

    Eigen::VectorXd hot = Eigen::VectorXd::Zero(5);
    hot(2) = 1.0;
    CHECK(ppk_transform(hot) == hot);

    const Eigen::VectorXd p = ppk_transform(Eigen::Vector2d(0.25, 0.75));
    CHECK(p(0) == doctest::Approx(0.5));
    CHECK(p(1) == doctest::Approx(std::sqrt(0.75)));
    const Eigen::Vector2d q(0.6, 0.4);
    const double kernel = std::sqrt(0.25 * 0.6) + std::sqrt(0.75 * 0.4);
    CHECK(p.dot(ppk_transform(q)) == doctest::Approx(kernel).epsilon(1e-12));

    CHECK_THROWS_AS(ppk_transform(Eigen::Vector2d(-0.1, 1.1)), Error);
    CHECK_THROWS_AS(ppk_transform(Eigen::Vector2d(0.2, 0.2)), Error);
}

TEST_CASE("ppk maps random simplex points onto the sphere")
{
    std::mt19937_64 rng(4);
    std::exponential_distribution<double> e(1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        Eigen::VectorXd v(12);
        for (auto& x : v) x = e(rng);
        v /= v.sum();
        const Eigen::VectorXd out = ppk_transform(v);
        CHECK(std::abs(out.norm() - 1.0) < 1e-6);
        CHECK(out.minCoeff() >= 0.0);
    }
}

TEST_CASE("pool_song enforces the ppk scope")
{
    const CodeMatrix vq = one_hot_columns(4, {0, 1, 1, 3});
    const SongVector sv = pool_song("s1", vq, PoolingKind::mean, true, EncoderMethod::vq);
    CHECK(sv.song_id == "s1");
    CHECK(sv.ppk);
    CHECK(std::abs(sv.values.norm() - 1.0) < 1e-6);

    const SongVector hist = pool_song("s1", vq, PoolingKind::mean, false, EncoderMethod::vq);
    CHECK(std::abs(hist.values.sum() - 1.0) < 1e-6);

    CHECK_THROWS_AS(pool_song("s", vq, PoolingKind::max_abs, true, EncoderMethod::vq), Error);
    CHECK_THROWS_AS(pool_song("s", vq, PoolingKind::mean, true, EncoderMethod::lasso), Error);
    CHECK(parse_pooling("max-abs") == PoolingKind::max_abs);
    CHECK(parse_pooling(to_string(PoolingKind::mean)) == PoolingKind::mean);
}
