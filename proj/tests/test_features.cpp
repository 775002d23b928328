#include "doctest.h"

#include "mirenc/error.hpp"
#include "mirenc/features.hpp"
#include "mirenc/log.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

using namespace mirenc;

namespace {

constexpr double pi = std::numbers::pi;

// Independent filterbank: HTK mel, unnormalized triangles on the 1025 DFT bins.
Eigen::MatrixXd reference_filterbank()
{
    const auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    const auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    const int bins = 1025;
    std::vector<double> edges(36);
    for (int i = 0; i < 36; ++i) edges[static_cast<std::size_t>(i)] = hz(mel(11025.0) * i / 35.0);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(34, bins);
    for (int j = 0; j < 34; ++j) {
        const double lo = edges[static_cast<std::size_t>(j)], mid = edges[static_cast<std::size_t>(j + 1)],
                     hi = edges[static_cast<std::size_t>(j + 2)];
        for (int b = 0; b < bins; ++b) {
            const double f = b * 22050.0 / 2048.0;
            if (f > lo && f < mid) w(j, b) = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi) w(j, b) = (hi - f) / (hi - mid);
        }
    }
    return w;
}

Eigen::VectorXd naive_magnitude(const std::vector<double>& x)
{
    const std::size_t n = x.size();
    Eigen::VectorXd mag(static_cast<Eigen::Index>(n / 2 + 1));
    for (std::size_t k = 0; k <= n / 2; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += x[i] * std::polar(1.0, -2.0 * pi * static_cast<double>(k * i % n) / n);
        mag(static_cast<Eigen::Index>(k)) = std::abs(acc);
    }
    return mag;
}

std::vector<double> hann_sine(double freq, double amp = 1.0)
{
    std::vector<double> frame(2048);
    for (int i = 0; i < 2048; ++i)
        frame[static_cast<std::size_t>(i)] = amp * std::sin(2 * pi * freq * i / 22050.0) * (0.5 - 0.5 * std::cos(2 * pi * i / 2047.0));
    return frame;
}

Eigen::VectorXd naive_dct(const Eigen::VectorXd& x, int keep)
{
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd out(keep);
    for (int k = 0; k < keep; ++k) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += x(i) * std::cos(pi * (i + 0.5) * k / n);
        out(k) = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    }
    return out;
}

Eigen::MatrixXd gaussian(int rows, int cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n01(rng);
    return m;
}

} // namespace

TEST_CASE("filterbank matches an independent construction")
{
    const MelFilterbank bank;
    const Eigen::MatrixXd ref = reference_filterbank();
    REQUIRE(bank.weights().rows() == 34);
    REQUIRE(bank.weights().cols() == 1025);
    CHECK((bank.weights() - ref).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(MelFilterbank::mel_to_hz(MelFilterbank::hz_to_mel(1234.5)) == doctest::Approx(1234.5));
}

TEST_CASE("silent frame hits the log floor")
{
    const std::vector<double> zeros(2048, 0.0);
    const Eigen::VectorXd m = mel_spectrum(zeros);
    for (Eigen::Index j = 0; j < m.size(); ++j) CHECK(m(j) == doctest::Approx(std::log(kLogFloor)));
}

TEST_CASE("sine at a mel center peaks in that bin")
{
    const MelFilterbank bank;
    for (int target : {5, 10, 20}) {
        const auto frame = hann_sine(bank.center_frequency(target));
        const Eigen::VectorXd ours = mel_spectrum(frame, bank);
        Eigen::Index arg = 0;
        ours.maxCoeff(&arg);
        CHECK(arg == target);

        // oracle: explicit filterbank times naive DFT
        const Eigen::VectorXd oracle = (reference_filterbank() * naive_magnitude(frame)).array().unaryExpr(
            [](double v) { return std::log(kLogFloor + v); });
        Eigen::Index oracle_arg = 0;
        oracle.maxCoeff(&oracle_arg);
        CHECK(oracle_arg == target);
        CHECK((ours - oracle).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("doubling the frame adds log 2")
{
    const auto a = hann_sine(1000.0, 0.3);
    auto b = a;
    for (auto& v : b) v *= 2.0;
    const Eigen::VectorXd ma = mel_spectrum(a), mb = mel_spectrum(b);
    for (Eigen::Index j = 0; j < ma.size(); ++j)
        if (ma(j) > std::log(0.1)) CHECK(std::abs(mb(j) - ma(j) - std::log(2.0)) < 1e-9);
}

TEST_CASE("mel spectrum is invariant to time reversal under a symmetric window")
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01;
    const auto window = make_window(WindowKind::hann, 2048);
    std::vector<double> raw(2048);
    for (auto& v : raw) v = n01(rng);
    std::vector<double> fwd(2048), rev(2048);
    for (std::size_t i = 0; i < 2048; ++i) {
        fwd[i] = raw[i] * window[i];
        rev[i] = raw[2047 - i] * window[i];
    }
    CHECK((mel_spectrum(fwd) - mel_spectrum(rev)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("mfcc of constants, zeros and a single cosine")
{
    const Eigen::VectorXd c = mfcc(Eigen::VectorXd::Constant(34, 2.5));
    REQUIRE(c.size() == 13);
    CHECK(c(0) == doctest::Approx(2.5 * std::sqrt(34.0)));
    for (int i = 1; i < 13; ++i) CHECK(std::abs(c(i)) < 1e-12);

    CHECK(mfcc(Eigen::VectorXd::Zero(34)).isZero());

    Eigen::VectorXd cosine(34);
    for (int n = 0; n < 34; ++n) cosine(n) = std::cos(pi * (n + 0.5) * 3 / 34);
    const Eigen::VectorXd got = mfcc(cosine);
    const Eigen::VectorXd oracle = naive_dct(cosine, 13);
    CHECK((got - oracle).cwiseAbs().maxCoeff() < 1e-9);
    for (int i = 0; i < 13; ++i) CHECK(std::abs(got(i) - (i == 3 ? std::sqrt(17.0) : 0.0)) < 1e-9);
}

TEST_CASE("dct matrix is orthonormal")
{
    const Eigen::MatrixXd d = dct_matrix(34);
    const Eigen::VectorXd x = gaussian(34, 1, 9);
    CHECK((d.transpose() * (d * x) - x).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((d * d.transpose() - Eigen::MatrixXd::Identity(34, 34)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("deltas with edge replication")
{
    Eigen::MatrixXd sq(1, 4);
    sq << 0, 1, 4, 9;
    const Eigen::MatrixXd out = add_deltas(sq);
    REQUIRE(out.rows() == 3);
    Eigen::RowVectorXd d(4);
    d << 0.5, 2, 4, 2.5;
    CHECK((out.row(1) - d).cwiseAbs().maxCoeff() < 1e-15);
    // second derivative: delta applied to the first delta
    Eigen::RowVectorXd dd(4);
    dd << 0.75, 1.75, 0.25, -0.75;
    CHECK((out.row(2) - dd).cwiseAbs().maxCoeff() < 1e-15);

    Eigen::MatrixXd ramp(2, 8);
    for (int t = 0; t < 8; ++t) {
        ramp(0, t) = t;
        ramp(1, t) = 7.0;
    }
    const Eigen::MatrixXd r = add_deltas(ramp);
    for (int t = 2; t < 6; ++t) {
        CHECK(r(2, t) == 1.0);
        CHECK(r(4, t) == 0.0);
    }
    CHECK(r.row(3).isZero());
    CHECK(r.row(5).isZero());

    CHECK_THROWS_AS(add_deltas(Eigen::MatrixXd::Zero(3, 2)), Error);
}

TEST_CASE("standardizer")
{
    Eigen::MatrixXd pool(1, 2);
    pool << 1, 3;
    const Standardizer s = Standardizer::fit(pool);
    CHECK(s.mean(0) == 2.0);
    CHECK(s.stddev(0) == 1.0);
    const Eigen::MatrixXd out = s.apply(pool);
    CHECK(out(0, 0) == -1.0);
    CHECK(out(0, 1) == 1.0);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    Eigen::MatrixXd uni(3, 1000);
    for (Eigen::Index j = 0; j < uni.cols(); ++j)
        for (Eigen::Index i = 0; i < uni.rows(); ++i) uni(i, j) = u(rng);
    const Eigen::MatrixXd z = Standardizer::fit(uni).apply(uni);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        // two-pass oracle
        double mean = 0.0;
        for (Eigen::Index j = 0; j < z.cols(); ++j) mean += z(i, j);
        mean /= static_cast<double>(z.cols());
        double var = 0.0;
        for (Eigen::Index j = 0; j < z.cols(); ++j) var += (z(i, j) - mean) * (z(i, j) - mean);
        var /= static_cast<double>(z.cols());
        CHECK(std::abs(mean) < 1e-8);
        CHECK(std::abs(var - 1.0) < 1e-6);
        CHECK(var >= 0.99);
        CHECK(var <= 1.01);
    }

    // re-fitting on standardized data is the identity
    const Eigen::MatrixXd again = Standardizer::fit(z).apply(z);
    CHECK((again - z).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("constant dimension is floored and reported")
{
    std::vector<std::string> warnings;
    auto previous = set_log_sink([&](LogLevel level, std::string_view msg) {
        if (level == LogLevel::warning) warnings.emplace_back(msg);
    });
    Eigen::MatrixXd pool(2, 4);
    pool << 1, 2, 3, 4, 5, 5, 5, 5;
    const Standardizer s = Standardizer::fit(pool);
    set_log_sink(previous);
    CHECK(s.stddev(1) == kStdFloor);
    REQUIRE(s.floored_dims.size() == 1);
    CHECK(s.floored_dims[0] == 1);
    CHECK_FALSE(warnings.empty());
    CHECK(s.apply(pool).allFinite());
}

TEST_CASE("pca on a line")
{
    Eigen::MatrixXd pool(2, 200);
    for (int j = 0; j < 200; ++j) pool(0, j) = pool(1, j) = (j - 99.5) / 50.0;
    const PcaProjector pca = PcaProjector::fit(pool, 1);
    CHECK(std::abs(pca.projection(0, 0) - 1.0 / std::sqrt(2.0)) < 1e-9);
    CHECK(std::abs(pca.projection(0, 1) - 1.0 / std::sqrt(2.0)) < 1e-9);

    const Eigen::MatrixXd centered = pool.colwise() - pool.rowwise().mean();
    const double total = (centered * centered.transpose()).trace() / 199.0;
    CHECK(pca.eigenvalues(0) / total > 0.999);

    try {
        PcaProjector::fit(pool, 2);
        FAIL("expected rank error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::rank_deficient);
        CHECK(std::string(e.what()).find('1') != std::string::npos);
    }
}

TEST_CASE("full pca is orthogonal and decorrelating")
{
    const Eigen::MatrixXd pool = Standardizer::fit(gaussian(6, 500, 8)).apply(gaussian(6, 500, 8));
    const PcaProjector pca = PcaProjector::fit(pool, 6);
    const Eigen::MatrixXd& p = pca.projection;
    CHECK((p * p.transpose() - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((p.transpose() * p * pool - pool).cwiseAbs().maxCoeff() < 1e-6);

    const Eigen::MatrixXd y = pca.project(pool);
    const Eigen::MatrixXd yc = y.colwise() - y.rowwise().mean();
    Eigen::MatrixXd cov = yc * yc.transpose() / 499.0;
    for (int i = 0; i < 6; ++i) {
        if (i > 0) CHECK(pca.eigenvalues(i) <= pca.eigenvalues(i - 1));
        for (int j = 0; j < 6; ++j)
            if (i != j) CHECK(std::abs(cov(i, j)) < 1e-5);
        // sign convention
        Eigen::Index arg = 0;
        p.row(i).cwiseAbs().maxCoeff(&arg);
        CHECK(p(i, arg) > 0.0);
    }
}

TEST_CASE("pca recovers a known diagonal covariance")
{
    const int n = 100000;
    Eigen::MatrixXd pool = gaussian(5, n, 21);
    Eigen::VectorXd truth(5);
    truth << 5, 4, 3, 2, 1;
    for (int i = 0; i < 5; ++i) pool.row(i) *= std::sqrt(truth(i));
    const PcaProjector pca = PcaProjector::fit(pool, 5);

    // oracle: eigendecomposition of the exact covariance is the diagonal itself
    for (int i = 0; i < 5; ++i) CHECK(std::abs(pca.eigenvalues(i) - truth(i)) / truth(i) < 0.05);
}

TEST_CASE("every kind yields three frames from 4096 samples")
{
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n01;
    AudioClip clip;
    clip.sample_rate = kPipelineRate;
    clip.samples.resize(4096);
    for (auto& v : clip.samples) v = 0.1 * n01(rng);

    for (FeatureKind kind : {FeatureKind::mfs, FeatureKind::mfcc, FeatureKind::mfcc_d, FeatureKind::mfs_d,
                             FeatureKind::mfs_d_pc}) {
        const FeatureKind raw = raw_kind_for(kind);
        // fit on a pool big enough for PCA
        Eigen::MatrixXd pool = gaussian(feature_dim(raw), 400, 7 + static_cast<int>(kind));
        const FeaturePipeline pipe = FeaturePipeline::fit(kind, pool);
        const FrameMatrix fm = pipe.extract(clip);
        CHECK(fm.frames() == 3);
        CHECK(fm.dim() == feature_dim(kind));
        CHECK(fm.kind == kind);
        CHECK(fm.data.allFinite());
    }
    CHECK(feature_dim(FeatureKind::mfs_d_pc) == 39);
    CHECK(feature_dim(FeatureKind::mfcc_d) == 39);
    CHECK(feature_dim(FeatureKind::mfs_d) == 102);
}

TEST_CASE("frame matrix rejects a wrong dimension")
{
    CHECK_THROWS_AS(FrameMatrix(Eigen::MatrixXd::Zero(38, 4), FeatureKind::mfcc_d), Error);
    CHECK_THROWS_AS(FrameMatrix(Eigen::MatrixXd::Zero(39, 0), FeatureKind::mfcc_d), Error);
    CHECK(parse_feature_kind(to_string(FeatureKind::mfs_d_pc)) == FeatureKind::mfs_d_pc);
}
