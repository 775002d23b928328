#include "mirenc/pooling.hpp"

#include "mirenc/error.hpp"

#include <cmath>

namespace mirenc {

const char* to_string(PoolingKind kind)
{
    return kind == PoolingKind::mean ? "mean" : "max_abs";
}

PoolingKind parse_pooling(const std::string& name)
{
    if (name == "mean") return PoolingKind::mean;
    if (name == "max_abs" || name == "max-abs" || name == "maxabs") return PoolingKind::max_abs;
    fail(ErrorKind::config, "unknown pooling '" + name + "'");
}

Eigen::VectorXd mean_pool(const CodeMatrix& codes)
{
    require(codes.frames() >= 1, "mean_pool: need at least one frame", ErrorKind::empty_input);
    const double inv_t = 1.0 / static_cast<double>(codes.frames());
    if (codes.storage() == CodeMatrix::Storage::dense) return codes.dense().rowwise().sum() * inv_t;

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(codes.codes());
    const auto& m = codes.sparse();
    for (Eigen::Index t = 0; t < m.outerSize(); ++t)
        for (CodeMatrix::Sparse::InnerIterator it(m, t); it; ++it) sum[it.row()] += it.value();
    return sum * inv_t;
}

Eigen::VectorXd max_abs_pool(const CodeMatrix& codes)
{
    require(codes.frames() >= 1, "max_abs_pool: need at least one frame", ErrorKind::empty_input);
    Eigen::VectorXd best = Eigen::VectorXd::Zero(codes.codes());
    if (codes.storage() == CodeMatrix::Storage::dense) {
        const Eigen::MatrixXd& m = codes.dense();
        best = m.col(0);
        for (Eigen::Index t = 1; t < m.cols(); ++t)
            for (Eigen::Index j = 0; j < m.rows(); ++j)
                if (std::abs(m(j, t)) > std::abs(best[j])) best[j] = m(j, t);
        return best;
    }
    // Implicit zeros never beat a stored entry, so a forward scan keeps the earliest maximum.
    const auto& m = codes.sparse();
    for (Eigen::Index t = 0; t < m.outerSize(); ++t)
        for (CodeMatrix::Sparse::InnerIterator it(m, t); it; ++it)
            if (std::abs(it.value()) > std::abs(best[it.row()])) best[it.row()] = it.value();
    return best;
}

Eigen::VectorXd ppk_transform(const Eigen::VectorXd& histogram)
{
    require(histogram.size() > 0, "ppk_transform: empty histogram", ErrorKind::empty_input);
    require((histogram.array() >= 0.0).all(), "ppk_transform: negative entry; PPK needs a codeword histogram");
    const double total = histogram.sum();
    require(std::abs(total - 1.0) <= 1e-4, "ppk_transform: histogram sums to " + std::to_string(total) + ", not 1");
    Eigen::VectorXd out = histogram.cwiseSqrt();
    return out / out.norm();
}

SongVector pool_song(std::string song_id, const CodeMatrix& codes, PoolingKind pooling, bool ppk,
                     EncoderMethod method)
{
    SongVector v;
    v.song_id = std::move(song_id);
    v.pooling = pooling;
    v.ppk = ppk;
    v.values = pooling == PoolingKind::mean ? mean_pool(codes) : max_abs_pool(codes);
    if (ppk) {
        require(pooling == PoolingKind::mean && method == EncoderMethod::vq,
                "PPK applies only to mean-pooled VQ histograms", ErrorKind::config);
        v.values = ppk_transform(v.values);
    }
    return v;
}

} // namespace mirenc
