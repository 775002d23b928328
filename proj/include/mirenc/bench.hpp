#ifndef MIRENC_BENCH_HPP
#define MIRENC_BENCH_HPP

#include "mirenc/config.hpp"
#include "mirenc/encoders.hpp"
#include "mirenc/storage.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace mirenc {

struct BenchRow {
    std::string method; // LASSO, VQ, CS
    int k = 0;
    double param = 0.0;
    double mean_seconds = 0.0; // per song of the measured set
    double std_seconds = 0.0;
    double seconds_per_frame = 0.0;
    int n_songs = 0;
    long long frames = 0;
    int repetitions = 1; // encodes per timed measurement
};

struct BenchReport {
    std::vector<BenchRow> rows; // method-major, then ascending k
    std::string environment;
};

struct BenchPlan {
    std::vector<int> ks = {128, 256, 512, 1024};
    std::vector<EncoderConfig> methods; // each timed on every k
    int min_ticks = 100;
    /// LASSO songs are timed on at most this many songs and frames per song.
    int lasso_songs = 3;
    long long lasso_frames = 215;
};

/// Pins the calling thread to the CPU it is running on; returns a
/// description for the report (or why pinning failed).
std::string pin_to_one_cpu();

/// Seconds per tick of the steady clock, measured.
double timer_resolution();

/// Times SongEncoder::encode per song for every (method, k), each with a
/// k-means codebook fitted on `codebook_pool`. The encoder is built outside
/// the timed region and one warm-up encode is discarded. A measurement that
/// spans fewer than min_ticks clock ticks is repeated with twice as many
/// encodes until it does.
BenchReport bench_encoding(const std::vector<Eigen::MatrixXd>& songs, const Eigen::MatrixXd& codebook_pool,
                           const BenchPlan& plan, std::uint64_t seed);

/// Renders the bench corpus described by config.bench and extracts
/// standardized features of config.feature_kind.
std::vector<Eigen::MatrixXd> bench_corpus(const PipelineConfig& config);

/// Least-squares slope of log(seconds_per_frame) against log(k) for one method.
double complexity_exponent(const BenchReport& report, const std::string& method);

CsvTable bench_table(const BenchReport& report);
/// Whitespace-separated columns "k <method>..." of seconds per frame.
std::string bench_gnuplot(const BenchReport& report);

} // namespace mirenc

#endif
