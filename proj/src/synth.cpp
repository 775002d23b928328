#include "mirenc/synth.hpp"

#include "mirenc/error.hpp"
#include "mirenc/log.hpp"
#include "mirenc/retrieval.hpp"
#include "mirenc/storage.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

namespace mirenc {

namespace fs = std::filesystem;

namespace {

constexpr double kMaxPartialHz = 5000.0;

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index)
{
    return splitmix64(seed ^ splitmix64(index + 0x51ed2701ULL));
}

Timbre random_timbre(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> f0(150.0, 400.0);
    std::uniform_real_distribution<double> log_center(std::log(250.0), std::log(4500.0));
    std::uniform_real_distribution<double> width(90.0, 260.0);
    Timbre t;
    t.f0 = f0(rng);
    for (int i = 0; i < 3; ++i) {
        t.centers[static_cast<std::size_t>(i)] = std::exp(log_center(rng));
        t.widths[static_cast<std::size_t>(i)] = width(rng);
    }
    std::sort(t.centers.begin(), t.centers.end());
    return t;
}

// Same spectral envelope, nudged formants and a fresh pitch.
Timbre variant_of(const Timbre& base, std::mt19937_64& rng)
{
    std::normal_distribution<double> jitter(0.0, 0.05);
    std::uniform_real_distribution<double> f0(150.0, 400.0);
    Timbre t = base;
    t.f0 = f0(rng);
    for (double& c : t.centers) c = std::clamp(c * std::exp(jitter(rng)), 200.0, 4800.0);
    return t;
}

std::vector<Timbre> family(std::size_t n, std::mt19937_64& rng)
{
    const Timbre base = random_timbre(rng);
    std::vector<Timbre> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(variant_of(base, rng));
    return out;
}

// Unit-power harmonic amplitudes under the formant envelope.
std::vector<double> harmonic_amplitudes(const Timbre& t)
{
    std::vector<double> amps;
    for (int h = 1; h * t.f0 < kMaxPartialHz; ++h) {
        double a = 0.0;
        for (std::size_t f = 0; f < 3; ++f) {
            const double z = (h * t.f0 - t.centers[f]) / t.widths[f];
            a += std::exp(-0.5 * z * z);
        }
        amps.push_back(a + 1e-3);
    }
    double power = 0.0;
    for (double a : amps) power += a * a;
    for (double& a : amps) a /= std::sqrt(power);
    return amps;
}

void render_segment(const Timbre& t, double gain, int sample_rate, std::mt19937_64& rng, double* out, std::size_t n)
{
    const std::vector<double> amps = harmonic_amplitudes(t);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const std::size_t fade = std::min<std::size_t>(n / 2, static_cast<std::size_t>(0.01 * sample_rate));
    std::vector<double> seg(n, 0.0);
    for (std::size_t h = 0; h < amps.size(); ++h) {
        const double omega = 2.0 * std::numbers::pi * static_cast<double>(h + 1) * t.f0 / sample_rate;
        const std::complex<double> step = std::polar(1.0, omega);
        std::complex<double> z = std::polar(amps[h], phase(rng));
        for (std::size_t i = 0; i < n; ++i) {
            seg[i] += z.imag();
            z *= step;
            // keep the recurrence on its circle
            if ((i & 1023) == 1023) z *= amps[h] / std::abs(z);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double env = 1.0;
        if (i < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(fade));
        if (n - 1 - i < fade)
            env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(n - 1 - i) / static_cast<double>(fade)));
        out[i] += gain * env * seg[i];
    }
}

std::string padded(const char* prefix, int i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%03d", prefix, i);
    return buf;
}

} // namespace

TimbreBank TimbreBank::make(int n_tags, int n_clusters, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    TimbreBank bank;
    for (int t = 0; t < n_tags; ++t) bank.tags.push_back(family(4, rng));
    for (int c = 0; c < n_clusters; ++c) bank.clusters.push_back(family(4, rng));
    for (int b = 0; b < 16; ++b) bank.background.push_back(random_timbre(rng));
    return bank;
}

CorpusPlan plan_corpus(const CorpusConfig& config, std::uint64_t seed)
{
    std::mt19937_64 rng(sub_seed(seed, 1));
    CorpusPlan plan;
    for (int t = 0; t < config.n_tags; ++t) plan.tag_names.push_back(padded("tag", t));

    std::vector<int> clusters(static_cast<std::size_t>(config.n_songs));
    for (int i = 0; i < config.n_songs; ++i) clusters[static_cast<std::size_t>(i)] = i % config.n_clusters;
    std::shuffle(clusters.begin(), clusters.end(), rng);

    std::uniform_int_distribution<int> n_tags(1, std::min(3, config.n_tags));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<int> all_tags(static_cast<std::size_t>(config.n_tags));
    std::iota(all_tags.begin(), all_tags.end(), 0);

    const auto draw_tags = [&]() {
        std::vector<int> pick = all_tags;
        std::shuffle(pick.begin(), pick.end(), rng);
        pick.resize(static_cast<std::size_t>(n_tags(rng)));
        std::sort(pick.begin(), pick.end());
        return pick;
    };

    const int per_artist = (config.n_songs + config.n_artists - 1) / config.n_artists;
    for (int i = 0; i < config.n_songs; ++i) {
        ClipPlan c;
        c.id = padded("song", i);
        c.artist = padded("artist", i / per_artist);
        c.cluster = clusters[static_cast<std::size_t>(i)];
        c.tags = draw_tags();
        c.float_stereo = unit(rng) < config.float_stereo_share;
        c.seed = sub_seed(seed, 1000 + static_cast<std::uint64_t>(i));
        plan.songs.push_back(std::move(c));
    }
    std::uniform_int_distribution<int> any_cluster(0, config.n_clusters - 1);
    for (int i = 0; i < config.pool_clips; ++i) {
        ClipPlan c;
        c.id = padded("pool", i);
        c.cluster = any_cluster(rng);
        c.tags = draw_tags();
        c.float_stereo = unit(rng) < config.float_stereo_share;
        c.seed = sub_seed(seed, 500000 + static_cast<std::uint64_t>(i));
        plan.pool.push_back(std::move(c));
    }
    return plan;
}

std::vector<double> render_clip(const ClipPlan& clip, const TimbreBank& bank, double seconds, int sample_rate)
{
    require(!clip.tags.empty(), "render_clip: clip needs at least one tag");
    std::mt19937_64 rng(clip.seed);
    const std::size_t total = static_cast<std::size_t>(std::llround(seconds * sample_rate));
    std::vector<double> out(total, 0.0);
    std::uniform_real_distribution<double> seg_len(0.25, 0.5), unit(0.0, 1.0), gain(0.08, 0.16);
    std::uniform_int_distribution<std::size_t> variant(0, 3), bg(0, bank.background.size() - 1);
    std::uniform_int_distribution<std::size_t> which_tag(0, clip.tags.size() - 1);

    std::size_t pos = 0;
    while (pos < total) {
        const std::size_t n = std::min(total - pos, static_cast<std::size_t>(seg_len(rng) * sample_rate));
        const double u = unit(rng);
        const Timbre* t = nullptr;
        if (u < 0.55)
            t = &bank.tags[static_cast<std::size_t>(clip.tags[which_tag(rng)])][variant(rng)];
        else if (u < 0.80)
            t = &bank.clusters[static_cast<std::size_t>(clip.cluster)][variant(rng)];
        else
            t = &bank.background[bg(rng)];
        render_segment(*t, gain(rng), sample_rate, rng, out.data() + pos, n);
        pos += n;
    }
    std::normal_distribution<double> noise(0.0, 0.002);
    for (double& v : out) v += noise(rng);
    return out;
}

namespace {

void write_clip(const ClipPlan& clip, const TimbreBank& bank, double seconds, const fs::path& path)
{
    if (clip.float_stereo) {
        const std::vector<double> mono = render_clip(clip, bank, seconds, 44100);
        std::vector<double> left(mono), right(mono);
        for (double& v : left) v *= 1.1;
        for (double& v : right) v *= 0.9;
        write_file_atomic(path, encode_wav({left, right}, 44100, WavEncoding::float32));
    } else {
        write_file_atomic(path, encode_wav({render_clip(clip, bank, seconds, kPipelineRate)}, kPipelineRate,
                                           WavEncoding::pcm16));
    }
}

} // namespace

void synth_corpus(const PipelineConfig& config, const fs::path& dir)
{
    config.validate();
    const std::uint64_t seed = stage_seed(config, Stage::synth);
    const CorpusPlan plan = plan_corpus(config.corpus, seed);
    const TimbreBank bank = TimbreBank::make(config.corpus.n_tags, config.corpus.n_clusters, sub_seed(seed, 2));

    for (const ClipPlan& c : plan.songs) write_clip(c, bank, config.corpus.song_seconds, dir / "audio" / (c.id + ".wav"));
    for (const ClipPlan& c : plan.pool) write_clip(c, bank, config.corpus.song_seconds, dir / "pool" / (c.id + ".wav"));

    CsvTable songs{{"song_id", "artist", "cluster"}, {}};
    CsvTable annotations{{"song_id", "tag"}, {}};
    for (const ClipPlan& c : plan.songs) {
        songs.rows.push_back({c.id, c.artist, std::to_string(c.cluster)});
        for (int t : c.tags) annotations.rows.push_back({c.id, plan.tag_names[static_cast<std::size_t>(t)]});
    }
    write_csv(dir / "songs.csv", songs);
    write_csv(dir / "annotations.csv", annotations);

    CsvTable relevance{{"song_id_a", "song_id_b", "relevant"}, {}};
    for (std::size_t a = 0; a < plan.songs.size(); ++a)
        for (std::size_t b = a + 1; b < plan.songs.size(); ++b)
            relevance.rows.push_back({plan.songs[a].id, plan.songs[b].id,
                                      plan.songs[a].cluster == plan.songs[b].cluster ? "1" : "0"});
    write_csv(dir / "relevance.csv", relevance);

    std::vector<std::string> artists;
    for (const ClipPlan& c : plan.songs) artists.push_back(c.artist);
    const std::vector<int> folds = artist_folds(artists, config.qbt.folds, sub_seed(seed, 3));
    CsvTable splits{{"song_id", "fold"}, {}};
    for (std::size_t i = 0; i < plan.songs.size(); ++i) splits.rows.push_back({plan.songs[i].id, std::to_string(folds[i])});
    write_csv(dir / "splits.csv", splits);

    const std::vector<QbeSplit> qbe = make_qbe_splits(artists, config.qbe.splits, sub_seed(seed, 4));
    CsvTable qbe_csv{{"split", "song_id", "role"}, {}};
    for (std::size_t s = 0; s < qbe.size(); ++s) {
        const auto add = [&](const std::vector<int>& idx, const char* role) {
            for (int i : idx) qbe_csv.rows.push_back({std::to_string(s), plan.songs[static_cast<std::size_t>(i)].id, role});
        };
        add(qbe[s].train, "train");
        add(qbe[s].validation, "validation");
        add(qbe[s].test, "test");
    }
    write_csv(dir / "qbe_splits.csv", qbe_csv);

    write_text_atomic(dir / "lineage.csv", "stage,config_hash\nsynth," + stage_hash(config, Stage::synth) + "\n");
    log_info("synth: wrote " + std::to_string(plan.songs.size()) + " songs and " + std::to_string(plan.pool.size()) +
             " pool clips to " + dir.string());
}

} // namespace mirenc
