#ifndef MIRENC_POOLING_HPP
#define MIRENC_POOLING_HPP

#include "mirenc/encoders.hpp"

#include <Eigen/Dense>

#include <string>

namespace mirenc {

enum class PoolingKind { mean, max_abs };

const char* to_string(PoolingKind kind);
PoolingKind parse_pooling(const std::string& name);

/// One k-dimensional vector per song.
struct SongVector {
    std::string song_id;
    Eigen::VectorXd values;
    PoolingKind pooling = PoolingKind::mean;
    bool ppk = false;
};

/// Row means over frames.
Eigen::VectorXd mean_pool(const CodeMatrix& codes);

/// Per row, the signed entry of largest magnitude (earliest frame on ties).
Eigen::VectorXd max_abs_pool(const CodeMatrix& codes);

/// Entrywise square root of a codeword histogram, mapping the simplex onto
/// the positive orthant of the unit sphere. Requires non-negative entries
/// summing to 1 within 1e-4; the result is rescaled to unit norm.
Eigen::VectorXd ppk_transform(const Eigen::VectorXd& histogram);

/// PPK is only defined for mean-pooled VQ codes.
SongVector pool_song(std::string song_id, const CodeMatrix& codes, PoolingKind pooling, bool ppk,
                     EncoderMethod method);

} // namespace mirenc

#endif
