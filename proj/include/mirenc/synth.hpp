#ifndef MIRENC_SYNTH_HPP
#define MIRENC_SYNTH_HPP

#include "mirenc/config.hpp"
#include "mirenc/ingest.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mirenc {

/// Harmonic source with three spectral bumps, all energy below 5 kHz.
struct Timbre {
    double f0 = 200.0;
    std::array<double, 3> centers{};
    std::array<double, 3> widths{};
};

/// Every timbre the generator can draw from.
struct TimbreBank {
    std::vector<std::vector<Timbre>> tags;     // per tag family, its variants
    std::vector<std::vector<Timbre>> clusters; // per cluster palette
    std::vector<Timbre> background;

    static TimbreBank make(int n_tags, int n_clusters, std::uint64_t seed);
};

struct ClipPlan {
    std::string id;
    std::string artist;   // empty for pool clips
    int cluster = 0;
    std::vector<int> tags; // ascending
    bool float_stereo = false;
    std::uint64_t seed = 0;
};

struct CorpusPlan {
    std::vector<std::string> tag_names;
    std::vector<ClipPlan> songs;
    std::vector<ClipPlan> pool;
};

CorpusPlan plan_corpus(const CorpusConfig& config, std::uint64_t seed);

/// Mono rendering at `sample_rate` of `seconds` of audio: consecutive
/// 0.25-0.5 s segments, each voiced by a tag timbre (55%), a cluster
/// timbre (25%) or a background timbre (20%), with 10 ms fades and a low
/// white-noise floor.
std::vector<double> render_clip(const ClipPlan& clip, const TimbreBank& bank, double seconds, int sample_rate);

/// Writes audio/, pool/, songs.csv, annotations.csv, relevance.csv,
/// splits.csv (QbT folds) and qbe_splits.csv under `dir`.
void synth_corpus(const PipelineConfig& config, const std::filesystem::path& dir);

} // namespace mirenc

#endif
