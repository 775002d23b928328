#include "mirenc/dictionary.hpp"

#include "mirenc/error.hpp"
#include "mirenc/log.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace mirenc {

namespace {

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, std::mt19937_64& rng)
{
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

Eigen::Index nearest_center(const Eigen::MatrixXd& centers, const Eigen::VectorXd& x)
{
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < centers.cols(); ++j) {
        const double d = (centers.col(j) - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

// k-means++ over the listed columns; returns fewer than k centers when the
// candidates hold fewer than k distinct vectors.
std::vector<Eigen::Index> kmeanspp(const Eigen::MatrixXd& stream, const std::vector<Eigen::Index>& candidates, int k,
                                   std::mt19937_64& rng)
{
    const std::size_t n = candidates.size();
    std::vector<Eigen::Index> chosen;
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    Eigen::Index next = candidates[first(rng)];
    while (true) {
        chosen.push_back(next);
        if (static_cast<int>(chosen.size()) == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], (stream.col(candidates[i]) - stream.col(next)).squaredNorm());
            total += dist[i];
        }
        if (!(total > 0.0)) break;
        std::uniform_real_distribution<double> pick(0.0, total);
        double target = pick(rng);
        std::size_t i = 0;
        for (; i + 1 < n; ++i) {
            if (dist[i] <= 0.0) continue;
            target -= dist[i];
            if (target <= 0.0) break;
        }
        while (dist[i] <= 0.0) --i; // landed past the last positive weight
        next = candidates[i];
    }
    return chosen;
}

} // namespace

Codebook kmeans_init(const Eigen::MatrixXd& stream, int k, std::uint64_t seed, const KMeansSettings& settings)
{
    const Eigen::Index n = stream.cols();
    require(k >= 1, "kmeans_init: k must be positive");
    require(settings.batch_size >= 1 && settings.passes >= 1, "kmeans_init: batch size and passes must be positive");
    require(n >= k, "kmeans_init: stream has " + std::to_string(n) + " vectors, need at least k = " + std::to_string(k),
            ErrorKind::insufficient_data);
    require(stream.allFinite(), "kmeans_init: non-finite training vectors", ErrorKind::numerical);

    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> order = shuffled_indices(n, rng);
    const auto sample = static_cast<std::size_t>(std::min<Eigen::Index>(n, std::max<Eigen::Index>(16LL * k, 4096)));
    std::vector<Eigen::Index> candidates(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sample));
    std::vector<Eigen::Index> seeds = kmeanspp(stream, candidates, k, rng);
    if (static_cast<int>(seeds.size()) < k && sample < static_cast<std::size_t>(n)) seeds = kmeanspp(stream, order, k, rng);
    if (static_cast<int>(seeds.size()) < k)
        fail(ErrorKind::insufficient_data, "kmeans_init: stream has fewer than k = " + std::to_string(k) +
                                               " distinct vectors");

    Eigen::MatrixXd centers(stream.rows(), k);
    for (int j = 0; j < k; ++j) centers.col(j) = stream.col(seeds[static_cast<std::size_t>(j)]);

    // Per-center learning rate 1/count (Sculley's mini-batch k-means).
    std::vector<long long> counts(static_cast<std::size_t>(k), 0);
    std::vector<Eigen::Index> assign(static_cast<std::size_t>(settings.batch_size));
    for (int pass = 0; pass < settings.passes; ++pass) {
        order = shuffled_indices(n, rng);
        for (Eigen::Index start = 0; start < n; start += settings.batch_size) {
            const Eigen::Index end = std::min<Eigen::Index>(n, start + settings.batch_size);
            for (Eigen::Index i = start; i < end; ++i)
                assign[static_cast<std::size_t>(i - start)] = nearest_center(centers, stream.col(order[static_cast<std::size_t>(i)]));
            for (Eigen::Index i = start; i < end; ++i) {
                const Eigen::Index c = assign[static_cast<std::size_t>(i - start)];
                const double eta = 1.0 / static_cast<double>(++counts[static_cast<std::size_t>(c)]);
                centers.col(c) = (1.0 - eta) * centers.col(c) + eta * stream.col(order[static_cast<std::size_t>(i)]);
            }
        }
    }

    std::uniform_int_distribution<Eigen::Index> any(0, n - 1);
    for (int j = 0; j < k; ++j) {
        double norm = centers.col(j).norm();
        for (int attempt = 0; !(norm > 0.0) && attempt < 1000; ++attempt) {
            centers.col(j) = stream.col(any(rng));
            norm = centers.col(j).norm();
        }
        require(norm > 0.0, "kmeans_init: cannot normalize a zero centroid", ErrorKind::numerical);
        centers.col(j) /= norm;
    }
    return Codebook(std::move(centers), CodebookMeta{"kmeans", 0.0, seed, settings.passes});
}

OnlineDictionaryTrainer::OnlineDictionaryTrainer(Codebook initial, EncoderConfig encoder, DictTrainSettings settings,
                                                 std::uint64_t seed)
    : atoms_(initial.atoms()), encoder_(encoder), settings_(std::move(settings)), rng_(seed)
{
    require(encoder_.method == EncoderMethod::vq || encoder_.method == EncoderMethod::lasso,
            "dict_train: training encoder must be VQ or LASSO", ErrorKind::config);
    encoder_.validate(atoms_.cols());
    require(settings_.batch_size >= 1 && settings_.epochs >= 0 && settings_.delta > 0.0,
            "dict_train: invalid training settings", ErrorKind::config);
    const Eigen::Index k = atoms_.cols();
    state_.A = Eigen::MatrixXd::Zero(k, k);
    state_.B = Eigen::MatrixXd::Zero(atoms_.rows(), k);
    state_.epoch_usage = Eigen::VectorXd::Zero(k);
    state_.batch_size = settings_.batch_size;
    state_.seed = seed;
    meta_ = CodebookMeta{encoder_.method == EncoderMethod::vq ? "vq" : "lasso", encoder_.param, seed, 0};
}

CodeMatrix OnlineDictionaryTrainer::encode_batch(const Eigen::MatrixXd& batch) const
{
    const Codebook current(atoms_, meta_);
    if (encoder_.method == EncoderMethod::vq) return encode_song(current, batch, encoder_);
    const LassoSolver solver(current, settings_.admm);
    Eigen::MatrixXd codes(atoms_.cols(), batch.cols());
    for (Eigen::Index i = 0; i < batch.cols(); ++i) codes.col(i) = solver.solve(batch.col(i), encoder_.param).code;
    return CodeMatrix(std::move(codes));
}

void OnlineDictionaryTrainer::step(const Eigen::MatrixXd& batch)
{
    require(batch.rows() == atoms_.rows(), "dict_train: batch dimension mismatch");
    if (batch.cols() == 0) return;
    const CodeMatrix codes = encode_batch(batch);
    if (codes.storage() == CodeMatrix::Storage::sparse) {
        const CodeMatrix::Sparse& c = codes.sparse();
        const CodeMatrix::Sparse ct = c.transpose();
        state_.A += Eigen::MatrixXd(c * ct);
        state_.B.noalias() += batch * ct;
        for (Eigen::Index t = 0; t < c.outerSize(); ++t)
            for (CodeMatrix::Sparse::InnerIterator it(c, t); it; ++it) state_.epoch_usage[it.row()] += it.value() * it.value();
    } else {
        const Eigen::MatrixXd& c = codes.dense();
        state_.A.noalias() += c * c.transpose();
        state_.B.noalias() += batch * c.transpose();
        state_.epoch_usage += c.rowwise().squaredNorm();
    }
    state_.samples_seen += batch.cols();

    for (Eigen::Index j = 0; j < atoms_.cols(); ++j) {
        const double denom = std::max(state_.A(j, j), settings_.delta);
        Eigen::VectorXd updated = atoms_.col(j) + (state_.B.col(j) - atoms_ * state_.A.col(j)) / denom;
        const double norm = updated.norm();
        if (norm > 0.0 && std::isfinite(norm)) atoms_.col(j) = updated / norm;
    }
}

void OnlineDictionaryTrainer::reseed_dead_atoms(const Eigen::MatrixXd& stream)
{
    std::uniform_int_distribution<Eigen::Index> any(0, stream.cols() - 1);
    for (Eigen::Index j = 0; j < atoms_.cols(); ++j) {
        if (state_.epoch_usage[j] >= settings_.delta) continue;
        Eigen::VectorXd candidate = stream.col(any(rng_));
        for (int attempt = 0; !(candidate.norm() > 0.0) && attempt < 1000; ++attempt) candidate = stream.col(any(rng_));
        if (!(candidate.norm() > 0.0)) continue;
        atoms_.col(j) = candidate / candidate.norm();
        state_.A.row(j).setZero();
        state_.A.col(j).setZero();
        state_.B.col(j).setZero();
        ++reseeded_;
        log_info("dict_train: re-seeded unused atom " + std::to_string(j) + " after epoch " + std::to_string(epochs_));
    }
}

void OnlineDictionaryTrainer::run_epoch(const Eigen::MatrixXd& stream)
{
    require(stream.cols() > 0, "dict_train: empty training stream", ErrorKind::empty_input);
    state_.epoch_usage.setZero();
    const std::vector<Eigen::Index> order = shuffled_indices(stream.cols(), rng_);
    Eigen::MatrixXd batch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(settings_.batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(settings_.batch_size));
        batch.resize(stream.rows(), static_cast<Eigen::Index>(end - start));
        for (std::size_t i = start; i < end; ++i) batch.col(static_cast<Eigen::Index>(i - start)) = stream.col(order[i]);
        step(batch);
    }
    ++epochs_;
    reseed_dead_atoms(stream);
    if (!atoms_.allFinite()) fail(ErrorKind::numerical, "dict_train: non-finite atoms after epoch " + std::to_string(epochs_));
    if (settings_.on_epoch) settings_.on_epoch(epochs_, codebook());
}

Codebook OnlineDictionaryTrainer::codebook() const
{
    CodebookMeta meta = meta_;
    meta.epochs = epochs_;
    return Codebook(atoms_, meta);
}

Codebook dict_train(const Eigen::MatrixXd& stream, Codebook initial, const EncoderConfig& encoder,
                    const DictTrainSettings& settings, std::uint64_t seed)
{
    require(stream.rows() == initial.dim(), "dict_train: stream dimension does not match the initial codebook");
    require(stream.allFinite(), "dict_train: non-finite training vectors", ErrorKind::numerical);
    OnlineDictionaryTrainer trainer(std::move(initial), encoder, settings, seed);
    for (int e = 0; e < settings.epochs; ++e) trainer.run_epoch(stream);
    return trainer.codebook();
}

Codebook dict_train(const Eigen::MatrixXd& stream, int k, const EncoderConfig& encoder,
                    const DictTrainSettings& settings, std::uint64_t seed)
{
    Codebook init = kmeans_init(stream, k, seed);
    return dict_train(stream, std::move(init), encoder, settings, seed + 1);
}

double reconstruction_error(const Codebook& codebook, const Eigen::MatrixXd& held_out, const EncoderConfig& encoder,
                            const AdmmSettings& admm)
{
    require(held_out.cols() > 0, "reconstruction_error: empty batch", ErrorKind::empty_input);
    const CodeMatrix codes = encode_song(codebook, held_out, encoder, admm);
    return (held_out - codebook.atoms() * codes.to_dense()).colwise().squaredNorm().mean();
}

} // namespace mirenc
