#include "mirenc/features.hpp"

#include "mirenc/error.hpp"
#include "mirenc/log.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>

namespace mirenc {

const char* to_string(FeatureKind kind)
{
    switch (kind) {
    case FeatureKind::mfs: return "MFS";
    case FeatureKind::mfcc: return "MFCC";
    case FeatureKind::mfcc_d: return "MFCC_D";
    case FeatureKind::mfs_d: return "MFS_D";
    case FeatureKind::mfs_d_pc: return "MFS_D_PC";
    }
    return "?";
}

FeatureKind parse_feature_kind(const std::string& name)
{
    for (FeatureKind k : {FeatureKind::mfs, FeatureKind::mfcc, FeatureKind::mfcc_d, FeatureKind::mfs_d,
                          FeatureKind::mfs_d_pc}) {
        if (name == to_string(k)) return k;
    }
    fail(ErrorKind::config, "unknown feature kind '" + name + "'");
}

int feature_dim(FeatureKind kind)
{
    switch (kind) {
    case FeatureKind::mfs: return kMelBins;
    case FeatureKind::mfcc: return kCepstralCoeffs;
    case FeatureKind::mfcc_d: return 3 * kCepstralCoeffs;
    case FeatureKind::mfs_d: return 3 * kMelBins;
    case FeatureKind::mfs_d_pc: return 3 * kCepstralCoeffs;
    }
    return 0;
}

FrameMatrix::FrameMatrix(Eigen::MatrixXd values, FeatureKind k) : data(std::move(values)), kind(k)
{
    require(data.rows() == feature_dim(kind),
            std::string("FrameMatrix of kind ") + to_string(kind) + " needs " + std::to_string(feature_dim(kind)) +
                " rows, got " + std::to_string(data.rows()));
    require(data.cols() > 0, "FrameMatrix needs at least one frame", ErrorKind::empty_input);
}

double MelFilterbank::hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelFilterbank::mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(int n_fft, int n_mels, double sample_rate, double f_min, double f_max)
    : n_fft_(n_fft), sample_rate_(sample_rate)
{
    require(n_fft > 0 && n_mels > 0, "filterbank sizes must be positive");
    require(0.0 <= f_min && f_min < f_max && f_max <= sample_rate / 2.0, "filterbank band must lie in [0, Nyquist]");

    const int n_bins = n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(f_min);
    const double mel_hi = hz_to_mel(f_max);
    std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
    for (int i = 0; i < n_mels + 2; ++i)
        edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));

    weights_ = Eigen::MatrixXd::Zero(n_mels, n_bins);
    centers_hz_.resize(static_cast<std::size_t>(n_mels));
    for (int j = 0; j < n_mels; ++j) {
        const double lo = edges[static_cast<std::size_t>(j)];
        const double mid = edges[static_cast<std::size_t>(j + 1)];
        const double hi = edges[static_cast<std::size_t>(j + 2)];
        centers_hz_[static_cast<std::size_t>(j)] = mid;
        for (int b = 0; b < n_bins; ++b) {
            const double f = b * sample_rate / n_fft;
            double w = 0.0;
            if (f >= lo && f <= mid) w = (f - lo) / (mid - lo);
            else if (f > mid && f <= hi) w = (hi - f) / (hi - mid);
            weights_(j, b) = w;
        }
        require(weights_.row(j).sum() > 0.0,
                "mel filter " + std::to_string(j) + " covers no DFT bin; use a larger n_fft", ErrorKind::config);
    }
}

Eigen::VectorXd magnitude_spectrum(std::span<const double> frame)
{
    thread_local Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> in(frame.begin(), frame.end());
    std::vector<std::complex<double>> out;
    fft.fwd(out, in);
    Eigen::VectorXd mag(static_cast<Eigen::Index>(frame.size() / 2 + 1));
    for (Eigen::Index i = 0; i < mag.size(); ++i) mag[i] = std::abs(out[static_cast<std::size_t>(i)]);
    return mag;
}

Eigen::VectorXd mel_spectrum(std::span<const double> frame, const MelFilterbank& bank)
{
    require(static_cast<int>(frame.size()) == bank.n_fft(),
            "mel_spectrum: frame length " + std::to_string(frame.size()) + " != n_fft " + std::to_string(bank.n_fft()));
    const Eigen::VectorXd energies = bank.weights() * magnitude_spectrum(frame);
    return (energies.array() + kLogFloor).log().matrix();
}

Eigen::VectorXd mel_spectrum(std::span<const double> frame)
{
    static const MelFilterbank bank;
    return mel_spectrum(frame, bank);
}

Eigen::MatrixXd dct_matrix(int n)
{
    require(n > 0, "dct size must be positive");
    Eigen::MatrixXd basis(n, n);
    for (int i = 0; i < n; ++i) {
        const double scale = std::sqrt((i == 0 ? 1.0 : 2.0) / n);
        for (int j = 0; j < n; ++j) basis(i, j) = scale * std::cos(std::numbers::pi * (j + 0.5) * i / n);
    }
    return basis;
}

Eigen::VectorXd mfcc(const Eigen::VectorXd& mfs)
{
    require(mfs.size() == kMelBins, "mfcc: expected a 34-bin mel spectrum");
    static const Eigen::MatrixXd basis = dct_matrix(kMelBins).topRows(kCepstralCoeffs);
    return basis * mfs;
}

namespace {

Eigen::MatrixXd central_difference(const Eigen::MatrixXd& x)
{
    const Eigen::Index T = x.cols();
    Eigen::MatrixXd dx(x.rows(), T);
    for (Eigen::Index t = 0; t < T; ++t) {
        const Eigen::Index prev = t == 0 ? 0 : t - 1;
        const Eigen::Index next = t + 1 == T ? T - 1 : t + 1;
        dx.col(t) = 0.5 * (x.col(next) - x.col(prev));
    }
    return dx;
}

} // namespace

Eigen::MatrixXd add_deltas(const Eigen::MatrixXd& feats)
{
    require(feats.cols() >= 3, "add_deltas: need at least 3 frames, got " + std::to_string(feats.cols()),
            ErrorKind::insufficient_data);
    const Eigen::Index d = feats.rows();
    const Eigen::MatrixXd delta = central_difference(feats);
    Eigen::MatrixXd out(3 * d, feats.cols());
    out.topRows(d) = feats;
    out.middleRows(d, d) = delta;
    out.bottomRows(d) = central_difference(delta);
    return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& pool)
{
    require(pool.cols() >= 2, "fit_standardizer: need at least 2 samples", ErrorKind::insufficient_data);
    require(pool.allFinite(), "fit_standardizer: non-finite values in pool", ErrorKind::numerical);
    Standardizer s;
    s.mean = pool.rowwise().mean();
    const Eigen::MatrixXd centered = pool.colwise() - s.mean;
    // Population statistics: the fitted pool itself maps to variance exactly 1.
    const double denom = static_cast<double>(pool.cols());
    s.stddev = (centered.array().square().rowwise().sum() / denom).sqrt().matrix();
    for (Eigen::Index i = 0; i < s.stddev.size(); ++i) {
        if (!(s.stddev[i] > kStdFloor)) {
            s.stddev[i] = kStdFloor;
            s.floored_dims.push_back(static_cast<int>(i));
            log_warning("standardizer: dimension " + std::to_string(i) + " is constant, std floored at 1e-8");
        }
    }
    return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& feats) const
{
    require(feats.rows() == mean.size(), "standardizer dimension mismatch");
    return (feats.colwise() - mean).array().colwise() / stddev.array();
}

namespace {

PcaProjector fit_pca(const Eigen::MatrixXd& pool, int p, bool clamp_to_rank)
{
    const Eigen::Index d = pool.rows();
    require(p >= 1 && p <= d, "fit_pca: output dimension must be in [1, d]");
    require(pool.cols() >= 2, "fit_pca: need at least 2 samples", ErrorKind::insufficient_data);
    require(pool.allFinite(), "fit_pca: non-finite values in pool", ErrorKind::numerical);

    const Eigen::VectorXd mean = pool.rowwise().mean();
    const Eigen::MatrixXd centered = pool.colwise() - mean;
    const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(pool.cols() - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) fail(ErrorKind::numerical, "fit_pca: eigendecomposition failed");

    // Eigen returns ascending eigenvalues.
    const Eigen::VectorXd& values = eig.eigenvalues();
    const double top = std::max(values[d - 1], 0.0);
    const double tol = top * 1e-10;
    int rank = 0;
    for (Eigen::Index i = 0; i < d; ++i)
        if (values[i] > tol && values[i] > 0.0) ++rank;
    if (clamp_to_rank && p > rank) {
        require(rank >= 1, "fit_pca: pool has zero variance", ErrorKind::rank_deficient);
        log_info("fit_pca: reducing to " + std::to_string(rank) + " components, the rank of the pool");
        p = rank;
    }
    if (p > rank)
        fail(ErrorKind::rank_deficient, "fit_pca: requested " + std::to_string(p) +
                                            " components but the pool covariance has rank " + std::to_string(rank));

    PcaProjector pca;
    pca.projection.resize(p, d);
    pca.eigenvalues.resize(p);
    for (int r = 0; r < p; ++r) {
        Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - r);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        pca.projection.row(r) = v.transpose();
        pca.eigenvalues[r] = values[d - 1 - r];
    }
    return pca;
}

} // namespace

PcaProjector PcaProjector::fit(const Eigen::MatrixXd& pool, int p)
{
    return fit_pca(pool, p, false);
}

PcaProjector PcaProjector::fit_at_most(const Eigen::MatrixXd& pool, int p)
{
    return fit_pca(pool, std::min<int>(p, static_cast<int>(pool.rows())), true);
}

FeatureKind raw_kind_for(FeatureKind kind)
{
    return kind == FeatureKind::mfs_d_pc ? FeatureKind::mfs_d : kind;
}

Eigen::MatrixXd extract_raw(const AudioClip& clip, FeatureKind base_kind, const FrameWindow& win)
{
    require(base_kind != FeatureKind::mfs_d_pc, "extract_raw: MFS_D_PC needs a fitted pipeline");
    require(clip.sample_rate == kPipelineRate, "extract_raw: clip must be at 22050 Hz, got " +
                                                   std::to_string(clip.sample_rate));
    static const MelFilterbank bank;
    const auto frames = frame_stream(clip, win);
    const auto T = static_cast<Eigen::Index>(frames.size());

    const bool cepstral = base_kind == FeatureKind::mfcc || base_kind == FeatureKind::mfcc_d;
    Eigen::MatrixXd base(cepstral ? kCepstralCoeffs : kMelBins, T);
    for (Eigen::Index t = 0; t < T; ++t) {
        Eigen::VectorXd mfs = mel_spectrum(frames[static_cast<std::size_t>(t)], bank);
        base.col(t) = cepstral ? mfcc(mfs) : mfs;
    }
    if (base_kind == FeatureKind::mfcc_d || base_kind == FeatureKind::mfs_d) return add_deltas(base);
    return base;
}

FeaturePipeline::FeaturePipeline(FeatureKind kind, Standardizer standardizer, std::optional<PcaProjector> pca)
    : kind_(kind), standardizer_(std::move(standardizer)), pca_(std::move(pca))
{
    require(standardizer_.dim() == feature_dim(raw_kind_for(kind_)), "feature pipeline: standardizer dimension mismatch");
    if (kind_ == FeatureKind::mfs_d_pc) {
        require(pca_.has_value(), "feature pipeline: MFS_D_PC requires a PCA projector");
        require(pca_->input_dim() == feature_dim(FeatureKind::mfs_d) && pca_->output_dim() == feature_dim(kind_),
                "feature pipeline: PCA projector has the wrong shape");
    } else {
        require(!pca_.has_value(), "feature pipeline: PCA only applies to MFS_D_PC");
    }
}

FeaturePipeline FeaturePipeline::fit(FeatureKind kind, const Eigen::MatrixXd& raw_pool)
{
    Standardizer s = Standardizer::fit(raw_pool);
    if (kind != FeatureKind::mfs_d_pc) return FeaturePipeline(kind, std::move(s));
    PcaProjector pca = PcaProjector::fit(s.apply(raw_pool), feature_dim(kind));
    return FeaturePipeline(kind, std::move(s), std::move(pca));
}

FrameMatrix FeaturePipeline::transform(const Eigen::MatrixXd& raw) const
{
    Eigen::MatrixXd z = standardizer_.apply(raw);
    if (pca_) z = pca_->project(z);
    return FrameMatrix(std::move(z), kind_);
}

FrameMatrix FeaturePipeline::extract(const AudioClip& clip, const FrameWindow& win) const
{
    return transform(extract_raw(clip, raw_kind_for(kind_), win));
}

} // namespace mirenc
