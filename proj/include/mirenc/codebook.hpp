#ifndef MIRENC_CODEBOOK_HPP
#define MIRENC_CODEBOOK_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace mirenc {

inline constexpr double kUnitNormTolerance = 1e-6;

struct CodebookMeta {
    std::string algorithm;  // "kmeans", "vq", "lasso", "random", ...
    double train_param = 0; // tau or lambda used while training
    std::uint64_t seed = 0;
    int epochs = 0;
};

/// d x k dictionary whose columns (codewords) have unit L2 norm.
class Codebook {
public:
    Codebook() = default;

    /// Throws ErrorKind::numerical if any column is non-finite or is not
    /// unit-norm within kUnitNormTolerance.
    Codebook(Eigen::MatrixXd atoms, CodebookMeta meta);

    /// Normalizes each column first; zero columns are rejected.
    static Codebook from_unnormalized(Eigen::MatrixXd atoms, CodebookMeta meta);

    const Eigen::MatrixXd& atoms() const { return atoms_; }
    Eigen::Index dim() const { return atoms_.rows(); }
    Eigen::Index size() const { return atoms_.cols(); }
    const CodebookMeta& meta() const { return meta_; }

    /// Largest |norm - 1| over columns.
    double max_norm_error() const;

private:
    Eigen::MatrixXd atoms_;
    CodebookMeta meta_;
};

} // namespace mirenc

#endif
