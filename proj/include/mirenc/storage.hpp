#ifndef MIRENC_STORAGE_HPP
#define MIRENC_STORAGE_HPP

#include "mirenc/codebook.hpp"
#include "mirenc/encoders.hpp"
#include "mirenc/features.hpp"
#include "mirenc/pooling.hpp"
#include "mirenc/retrieval.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mirenc {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Provenance carried by every binary artifact as a JSON trailer. Always
/// holds "stage" and "config_hash"; stages add what they need to re-check
/// (feature kind, representation id, upstream hashes).
using Lineage = std::map<std::string, std::string>;

template <typename T>
struct Artifact {
    T value;
    Lineage lineage;
};

/// Throws ErrorKind::version_mismatch listing every key of `expected` whose
/// value differs from (or is missing in) `found`.
void verify_lineage(const Lineage& expected, const Lineage& found, const std::filesystem::path& source);

/// Write to a sibling temp file, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Containers: 4-byte magic, u32 version, shape fields, little-endian f32
// payload, then u32 length + UTF-8 JSON (metadata and lineage).

void write_frame_matrix(const std::filesystem::path& path, const FrameMatrix& frames, Lineage lineage);
Artifact<FrameMatrix> read_frame_matrix(const std::filesystem::path& path);

void write_standardizer(const std::filesystem::path& path, const Standardizer& s, Lineage lineage);
Artifact<Standardizer> read_standardizer(const std::filesystem::path& path);

void write_pca(const std::filesystem::path& path, const PcaProjector& pca, Lineage lineage);
Artifact<PcaProjector> read_pca(const std::filesystem::path& path);

void write_codebook(const std::filesystem::path& path, const Codebook& codebook, Lineage lineage);
Artifact<Codebook> read_codebook(const std::filesystem::path& path);

void write_codes(const std::filesystem::path& path, const CodeMatrix& codes, Lineage lineage);
Artifact<CodeMatrix> read_codes(const std::filesystem::path& path);

void write_song_vectors(const std::filesystem::path& path, const std::vector<SongVector>& vectors, Lineage lineage);
Artifact<std::vector<SongVector>> read_song_vectors(const std::filesystem::path& path);

void write_metric(const std::filesystem::path& path, const Metric& metric, Lineage lineage);
Artifact<Metric> read_metric(const std::filesystem::path& path);

// ---- CSV --------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws ErrorKind::config when absent.
    std::size_t column(const std::string& name) const;
};

/// Comma separated, double-quote escaping, header row required.
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Shortest round-trip decimal form.
std::string format_number(double v);
double parse_number(const std::string& text, const std::string& context);

/// song_id, v_1..v_k
void write_song_vectors_csv(const std::filesystem::path& path, const std::vector<SongVector>& vectors);

} // namespace mirenc

#endif
