#ifndef MIRENC_DICTIONARY_HPP
#define MIRENC_DICTIONARY_HPP

#include "mirenc/codebook.hpp"
#include "mirenc/encoders.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>

namespace mirenc {

struct KMeansSettings {
    int batch_size = 256;
    int passes = 10;
};

/// Mini-batch k-means over the columns of `stream` (d x N), seeded with
/// k-means++; centroids are L2-normalized at the end. Throws
/// ErrorKind::insufficient_data if the stream has fewer than k distinct vectors.
Codebook kmeans_init(const Eigen::MatrixXd& stream, int k, std::uint64_t seed, const KMeansSettings& settings = {});

struct DictTrainSettings {
    int batch_size = 256;
    int epochs = 5;
    double delta = 1e-8; // floor on A_jj in the column update
    AdmmSettings admm;
    /// Called after every epoch with the current dictionary.
    std::function<void(int epoch, const Codebook&)> on_epoch;
};

/// Sufficient statistics of the online update: A = sum C C^T, B = sum X C^T.
struct TrainerState {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::VectorXd epoch_usage; // sum of squared codes per atom in the current epoch
    long long samples_seen = 0;
    int batch_size = 256;
    std::uint64_t seed = 0;
};

/// Online dictionary learning: encode a mini-batch with the current codebook,
/// accumulate the statistics, then sweep block-coordinate column updates
/// D_j <- normalize(D_j + (B_j - D A_j) / max(A_jj, delta)).
class OnlineDictionaryTrainer {
public:
    OnlineDictionaryTrainer(Codebook initial, EncoderConfig encoder, DictTrainSettings settings, std::uint64_t seed);

    /// One mini-batch (d x b).
    void step(const Eigen::MatrixXd& batch);

    /// One shuffled pass over the stream, then dead-atom re-seeding.
    void run_epoch(const Eigen::MatrixXd& stream);

    Codebook codebook() const;
    const Eigen::MatrixXd& atoms() const { return atoms_; }
    const TrainerState& state() const { return state_; }
    int epochs_run() const { return epochs_; }
    int reseeded_atoms() const { return reseeded_; }

private:
    CodeMatrix encode_batch(const Eigen::MatrixXd& batch) const;
    void reseed_dead_atoms(const Eigen::MatrixXd& stream);

    Eigen::MatrixXd atoms_;
    EncoderConfig encoder_;
    DictTrainSettings settings_;
    TrainerState state_;
    std::mt19937_64 rng_;
    CodebookMeta meta_;
    int epochs_ = 0;
    int reseeded_ = 0;
};

/// Trains from a given initial codebook.
Codebook dict_train(const Eigen::MatrixXd& stream, Codebook initial, const EncoderConfig& encoder,
                    const DictTrainSettings& settings, std::uint64_t seed);

/// kmeans_init followed by online dictionary learning.
Codebook dict_train(const Eigen::MatrixXd& stream, int k, const EncoderConfig& encoder,
                    const DictTrainSettings& settings, std::uint64_t seed);

/// Mean of ||x - D c||^2 over the columns of `held_out`, codes from `encoder`.
double reconstruction_error(const Codebook& codebook, const Eigen::MatrixXd& held_out, const EncoderConfig& encoder,
                            const AdmmSettings& admm = {});

} // namespace mirenc

#endif
