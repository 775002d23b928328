#ifndef MIRENC_ENCODERS_HPP
#define MIRENC_ENCODERS_HPP

#include "mirenc/codebook.hpp"
#include "mirenc/features.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <string>
#include <optional>
#include <variant>
#include <vector>

namespace mirenc {

/// `none` passes low-level features straight to pooling (the no-encoding baseline).
enum class EncoderMethod { lasso, vq, cs, none };

const char* to_string(EncoderMethod method);
EncoderMethod parse_encoder_method(const std::string& name);

struct EncoderConfig {
    EncoderMethod method = EncoderMethod::vq;
    double param = 1.0; // lambda, tau or theta depending on method

    static EncoderConfig lasso(double lambda) { return {EncoderMethod::lasso, lambda}; }
    static EncoderConfig vq(int tau) { return {EncoderMethod::vq, static_cast<double>(tau)}; }
    static EncoderConfig cs(double theta) { return {EncoderMethod::cs, theta}; }
    static EncoderConfig none() { return {EncoderMethod::none, 0.0}; }

    int tau() const { return static_cast<int>(param); }

    /// Checks lambda > 0, integer 1 <= tau <= k, 0 <= theta < 1.
    void validate(Eigen::Index k) const;

    /// e.g. "VQ:8", "LASSO:0.1", "CS:0.4", "NONE".
    std::string id() const;
};

/// Stopping rule follows the combined absolute/relative primal-dual residual test.
struct AdmmSettings {
    double rho = 1.0;
    double abs_tol = 1e-4;
    double rel_tol = 1e-3;
    int max_iter = 500;
    /// Re-solve on the final support and keep the result when it satisfies
    /// the optimality conditions.
    bool polish = true;

    void validate() const;
};

struct LassoResult {
    Eigen::VectorXd code;
    bool converged = false;
    int iterations = 0;
};

/// ADMM solver for argmin 0.5||x - Dc||^2 + lambda ||c||_1 with
/// (D^T D + rho I)^{-1} computed once per codebook.
class LassoSolver {
public:
    LassoSolver(const Codebook& codebook, AdmmSettings settings = {});

    LassoResult solve(const Eigen::VectorXd& x, double lambda) const;

    const AdmmSettings& settings() const { return settings_; }

private:
    LassoResult polish(const Eigen::VectorXd& x, const Eigen::VectorXd& q, LassoResult admm, double lambda) const;
    double kkt_violation(const Eigen::VectorXd& q, const Eigen::VectorXd& c, double lambda) const;
    Eigen::VectorXd coordinate_descent(const Eigen::VectorXd& q, Eigen::VectorXd c, double lambda) const;

    Eigen::MatrixXd atoms_;
    Eigen::MatrixXd gram_;           // D^T D
    Eigen::MatrixXd system_inverse_; // (D^T D + rho I)^{-1}
    AdmmSettings settings_;
};

LassoResult lasso_encode(const Codebook& codebook, const Eigen::VectorXd& x, double lambda,
                         const AdmmSettings& settings = {});

/// 0.5||x - Dc||^2 + lambda ||c||_1.
double lasso_objective(const Eigen::MatrixXd& atoms, const Eigen::VectorXd& x, const Eigen::VectorXd& c,
                       double lambda);

/// Indices of the tau codewords nearest to x in Euclidean distance, in
/// ascending index order. Equal distances resolve to the lower index.
std::vector<Eigen::Index> vq_select(const Codebook& codebook, const Eigen::VectorXd& x, int tau);

/// Top-tau code: 1/tau on the selected codewords, 0 elsewhere.
Eigen::VectorXd vq_encode(const Codebook& codebook, const Eigen::VectorXd& x, int tau);

/// sign(s) * max(|s| - theta, 0) elementwise.
Eigen::VectorXd shrink(const Eigen::VectorXd& v, double theta);

/// shrink(D^T x / ||x||, theta). A zero frame encodes to the zero vector.
Eigen::VectorXd cs_encode(const Codebook& codebook, const Eigen::VectorXd& x, double theta);

/// k x T codes, dense or column-compressed sparse.
class CodeMatrix {
public:
    enum class Storage : std::uint8_t { dense = 0, sparse = 1 };
    using Sparse = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

    CodeMatrix() = default;
    explicit CodeMatrix(Eigen::MatrixXd dense);
    explicit CodeMatrix(Sparse sparse);

    Storage storage() const { return std::holds_alternative<Sparse>(data_) ? Storage::sparse : Storage::dense; }
    Eigen::Index codes() const;
    Eigen::Index frames() const;

    const Eigen::MatrixXd& dense() const { return std::get<Eigen::MatrixXd>(data_); }
    const Sparse& sparse() const { return std::get<Sparse>(data_); }

    Eigen::MatrixXd to_dense() const;
    Eigen::VectorXd column(Eigen::Index t) const;
    std::vector<Eigen::Index> nnz_per_column() const;
    double mean_nnz() const;
    bool all_finite() const;

private:
    std::variant<Eigen::MatrixXd, Sparse> data_;
};

/// Encodes every frame of a song against one codebook; caches what can be
/// shared across frames and songs (atom norms, the ADMM system inverse).
class SongEncoder {
public:
    SongEncoder(const Codebook& codebook, EncoderConfig config, AdmmSettings settings = {});

    /// Column t equals the per-frame encoder applied to frame t.
    CodeMatrix encode(const FrameMatrix& frames) const { return encode(frames.data); }
    CodeMatrix encode(const Eigen::MatrixXd& frames) const;

    const EncoderConfig& config() const { return config_; }

    /// Frames whose ADMM solve hit max_iter in the most recent encode() call.
    int unconverged_frames() const { return unconverged_; }

private:
    const Codebook& codebook_;
    EncoderConfig config_;
    std::optional<LassoSolver> lasso_;
    mutable int unconverged_ = 0;
};

CodeMatrix encode_song(const Codebook& codebook, const FrameMatrix& frames, const EncoderConfig& config,
                       const AdmmSettings& settings = {});
CodeMatrix encode_song(const Codebook& codebook, const Eigen::MatrixXd& frames, const EncoderConfig& config,
                       const AdmmSettings& settings = {});

} // namespace mirenc

#endif
