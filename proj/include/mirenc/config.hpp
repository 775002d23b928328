#ifndef MIRENC_CONFIG_HPP
#define MIRENC_CONFIG_HPP

#include "mirenc/encoders.hpp"
#include "mirenc/features.hpp"
#include "mirenc/pooling.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mirenc {

struct CorpusConfig {
    int n_songs = 200;
    int n_tags = 10;
    int n_artists = 40;
    int n_clusters = 8;
    double song_seconds = 10.0;
    int pool_clips = 60;          // extra clips used only for fitting features and dictionaries
    double float_stereo_share = 0.25; // fraction of clips written as 44.1 kHz float stereo
};

struct DictionaryConfig {
    int k = 128;
    /// "auto": LASSO(1) codebook for LASSO encoding, VQ(1) otherwise.
    std::string train_method = "auto";
    double train_param = 1.0;
    int epochs = 5;
    int batch_size = 256;
    int pool_size = 100000; // cap on training vectors
};

struct QbtConfig {
    int folds = 5;
    int inner_folds = 3;
    std::vector<double> grid = {0.1, 1.0, 10.0, 100.0};
    bool scramble = false;
};

struct QbeConfig {
    int splits = 10;
    int reduced_dim = 0; // 0: chosen from k
    std::string metric = "hinge";
    int steps = 150;
    int triplets_per_step = 64;
    bool scramble = false;
};

struct BenchConfig {
    int songs = 50;
    double song_seconds = 180.0;
    std::vector<int> ks = {128, 256, 512, 1024};
    double lasso_lambda = 0.5;
    int vq_tau = 8;
    double cs_theta = 0.3;
    int lasso_songs = 3;         // LASSO is timed on a smaller slice of the same corpus
    double lasso_song_seconds = 10.0;
    int min_ticks = 100;
};

struct PipelineConfig {
    std::uint64_t seed = 1;
    std::filesystem::path out = "out";
    CorpusConfig corpus;
    FeatureKind feature_kind = FeatureKind::mfcc_d;
    WindowKind window = WindowKind::hann;
    DictionaryConfig dictionary;
    EncoderConfig encoder = EncoderConfig::vq(8);
    PoolingKind pooling = PoolingKind::mean;
    bool ppk = false;
    QbtConfig qbt;
    QbeConfig qbe;
    BenchConfig bench;

    /// Range checks across sections; throws ErrorKind::config.
    void validate() const;

    /// Encoder used while training the codebook.
    EncoderConfig dictionary_encoder() const;

    /// e.g. "MFCC_D_k128_VQ:8_mean" with "_ppk" appended when set.
    std::string representation_id() const;
};

/// key = value with [sections]; unknown keys are rejected.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& text, const std::string& source = "<string>");

/// Canonical text form, round-trips through parse_config.
std::string format_config(const PipelineConfig& config);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);
std::string hex64(std::uint64_t v);

enum class Stage { synth, features, dictionary, encode, pool, qbt, qbe, bench };
const char* to_string(Stage stage);

/// Settings that influence one stage's output, as sorted key=value pairs.
std::map<std::string, std::string> stage_settings(const PipelineConfig& config, Stage stage);

/// FNV-1a over the upstream stage hash followed by the stage's sorted
/// key=value pairs, so a change anywhere upstream changes every hash below it.
std::string stage_hash(const PipelineConfig& config, Stage stage);

/// Root seed expanded per stage.
std::uint64_t stage_seed(const PipelineConfig& config, Stage stage);

} // namespace mirenc

#endif
