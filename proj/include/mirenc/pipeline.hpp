#ifndef MIRENC_PIPELINE_HPP
#define MIRENC_PIPELINE_HPP

#include "mirenc/bench.hpp"
#include "mirenc/config.hpp"
#include "mirenc/retrieval.hpp"
#include "mirenc/storage.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mirenc {

/// Everything the retrieval stages need from the corpus CSVs, songs in
/// ascending id order.
struct CorpusIndex {
    std::vector<std::string> song_ids;
    std::vector<std::string> artists;
    std::vector<int> clusters;
    std::vector<std::string> tags;
    Eigen::MatrixXi labels;    // songs x tags
    std::vector<int> folds;    // QbT fold per song
    Eigen::MatrixXi relevance; // songs x songs, symmetric, zero diagonal
    std::vector<QbeSplit> qbe_splits;
    std::vector<std::string> pool_ids;

    Eigen::Index size() const { return static_cast<Eigen::Index>(song_ids.size()); }
};

CorpusIndex load_corpus(const std::filesystem::path& dir);

/// Row permutation of a songs x tags label matrix.
Eigen::MatrixXi scramble_labels(const Eigen::MatrixXi& labels, std::uint64_t seed);
/// Relabels songs of a relevance matrix by a random permutation.
Eigen::MatrixXi scramble_relevance(const Eigen::MatrixXi& relevance, std::uint64_t seed);

/// Stage runner over one output directory:
///   corpus/                    synthesized audio and CSVs
///   features/<kind>/           CBST, CBPC, songs/*.cbmf, pool/*.cbmf
///   dictionary/<kind>_k<k>_<train encoder>.cbdk
///   codes/<encoding id>/*.cbcm
///   vectors/<representation id>.cbsv (+ .csv)
///   metrics/<representation id>/split_NN.cbmw
///   reports/*.csv
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    const PipelineConfig& config() const { return config_; }

    void synth() const;
    void features() const;
    void train_dict() const;
    void encode() const;
    void pool() const;
    QbtReport qbt(std::optional<std::uint64_t> scramble_seed = std::nullopt) const;
    QbeReport qbe(std::optional<std::uint64_t> scramble_seed = std::nullopt) const;

    /// Encoder runtime grid; writes reports/bench.csv and reports/bench.dat.
    BenchReport bench() const;

    /// synth through qbe, skipping nothing.
    void run_all() const;

    /// Song vectors in corpus order, one column per song.
    Eigen::MatrixXd song_matrix(const CorpusIndex& corpus) const;

    std::filesystem::path corpus_dir() const;
    std::filesystem::path features_dir() const;
    std::filesystem::path codebook_path() const;
    std::filesystem::path codes_dir() const;
    std::filesystem::path vectors_path() const;
    std::filesystem::path metrics_dir() const;
    std::filesystem::path reports_dir() const;

    /// Lineage an artifact of `stage` written under this config carries.
    Lineage lineage(Stage stage) const;

private:
    std::string encoding_id() const;

    PipelineConfig config_;
};

/// (representation_id, measure, fold, value) rows.
CsvTable results_table();
void add_result(CsvTable& table, const std::string& rep, const std::string& measure, const std::string& fold, double value);

} // namespace mirenc

#endif
