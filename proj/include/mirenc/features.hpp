#ifndef MIRENC_FEATURES_HPP
#define MIRENC_FEATURES_HPP

#include "mirenc/ingest.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mirenc {

inline constexpr int kMelBins = 34;
inline constexpr int kCepstralCoeffs = 13;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kStdFloor = 1e-8;

enum class FeatureKind { mfs, mfcc, mfcc_d, mfs_d, mfs_d_pc };

const char* to_string(FeatureKind kind);
FeatureKind parse_feature_kind(const std::string& name);

/// Row count a FrameMatrix of this kind must have.
int feature_dim(FeatureKind kind);

/// d x T matrix of per-frame features, one column per frame.
struct FrameMatrix {
    Eigen::MatrixXd data;
    FeatureKind kind = FeatureKind::mfs;

    FrameMatrix() = default;
    FrameMatrix(Eigen::MatrixXd values, FeatureKind k);

    Eigen::Index dim() const { return data.rows(); }
    Eigen::Index frames() const { return data.cols(); }
};

/// Triangular HTK-mel filterbank over the non-negative DFT bins.
class MelFilterbank {
public:
    explicit MelFilterbank(int n_fft = kFrameLength, int n_mels = kMelBins,
                           double sample_rate = kPipelineRate, double f_min = 0.0,
                           double f_max = kPipelineRate / 2.0);

    const Eigen::MatrixXd& weights() const { return weights_; } // n_mels x (n_fft/2 + 1)
    double center_frequency(int mel_bin) const { return centers_hz_[static_cast<std::size_t>(mel_bin)]; }
    int n_fft() const { return n_fft_; }
    int n_mels() const { return static_cast<int>(weights_.rows()); }
    double sample_rate() const { return sample_rate_; }

    static double hz_to_mel(double hz);
    static double mel_to_hz(double mel);

private:
    int n_fft_;
    double sample_rate_;
    Eigen::MatrixXd weights_;
    std::vector<double> centers_hz_;
};

/// Magnitude of the non-negative-frequency DFT bins of a frame.
Eigen::VectorXd magnitude_spectrum(std::span<const double> frame);

/// log(eps + W |DFT(frame)|) for an already-windowed frame.
Eigen::VectorXd mel_spectrum(std::span<const double> frame, const MelFilterbank& bank);
Eigen::VectorXd mel_spectrum(std::span<const double> frame);

/// Orthonormal DCT-II basis, row i holding the i-th cosine.
Eigen::MatrixXd dct_matrix(int n);

/// First 13 orthonormal DCT-II coefficients of a 34-bin log mel spectrum.
Eigen::VectorXd mfcc(const Eigen::VectorXd& mfs);

/// Stacks [x; dx; ddx] with central differences and replicated edges.
/// Requires at least 3 frames.
Eigen::MatrixXd add_deltas(const Eigen::MatrixXd& feats);

/// Per-dimension z-scoring fitted on a d x N pool.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
    std::vector<int> floored_dims; // dimensions whose std hit kStdFloor

    static Standardizer fit(const Eigen::MatrixXd& pool);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& feats) const;
    Eigen::Index dim() const { return mean.size(); }
};

/// Top-p principal directions of a pool; rows of `projection` are
/// orthonormal and ordered by descending variance. Projection does not
/// re-center, it expects standardized inputs.
struct PcaProjector {
    Eigen::MatrixXd projection; // p x d
    Eigen::VectorXd eigenvalues; // p, descending

    /// Throws ErrorKind::rank_deficient when p exceeds the numerical rank of
    /// the pool covariance.
    static PcaProjector fit(const Eigen::MatrixXd& pool, int p);
    /// Like fit, but lowers p to the numerical rank instead of failing.
    static PcaProjector fit_at_most(const Eigen::MatrixXd& pool, int p);

    Eigen::MatrixXd project(const Eigen::MatrixXd& feats) const { return projection * feats; }
    Eigen::Index input_dim() const { return projection.cols(); }
    Eigen::Index output_dim() const { return projection.rows(); }
};

/// Unstandardized features straight from audio: MFS, MFCC, MFCC_D or MFS_D.
Eigen::MatrixXd extract_raw(const AudioClip& clip, FeatureKind base_kind,
                            const FrameWindow& win = {});

/// Kind of raw features that feed the fitted transform for `kind`.
FeatureKind raw_kind_for(FeatureKind kind);

/// Fitted standardization (+ PCA for MFS_D_PC) turning raw features into the
/// final FrameMatrix of a given kind.
class FeaturePipeline {
public:
    FeaturePipeline(FeatureKind kind, Standardizer standardizer, std::optional<PcaProjector> pca = {});

    /// Fits on a raw d x N pool of the matching raw kind.
    static FeaturePipeline fit(FeatureKind kind, const Eigen::MatrixXd& raw_pool);

    FrameMatrix transform(const Eigen::MatrixXd& raw) const;
    FrameMatrix extract(const AudioClip& clip, const FrameWindow& win = {}) const;

    FeatureKind kind() const { return kind_; }
    const Standardizer& standardizer() const { return standardizer_; }
    const std::optional<PcaProjector>& pca() const { return pca_; }

private:
    FeatureKind kind_;
    Standardizer standardizer_;
    std::optional<PcaProjector> pca_;
};

} // namespace mirenc

#endif
