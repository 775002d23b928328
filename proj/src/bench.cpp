#include "mirenc/bench.hpp"

#include "mirenc/dictionary.hpp"
#include "mirenc/error.hpp"
#include "mirenc/features.hpp"
#include "mirenc/log.hpp"
#include "mirenc/synth.hpp"

#include <sched.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace mirenc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

volatile double g_sink = 0.0;

} // namespace

std::string pin_to_one_cpu()
{
    const int cpu = sched_getcpu();
    if (cpu < 0) return "unpinned (sched_getcpu failed)";
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(cpu, &set);
    if (sched_setaffinity(0, sizeof set, &set) != 0) return "unpinned (sched_setaffinity failed)";
    return "single thread pinned to cpu " + std::to_string(cpu);
}

double timer_resolution()
{
    double best = 1.0;
    for (int i = 0; i < 200; ++i) {
        const auto a = Clock::now();
        auto b = Clock::now();
        while (b == a) b = Clock::now();
        best = std::min(best, std::chrono::duration<double>(b - a).count());
    }
    return best;
}

BenchReport bench_encoding(const std::vector<Eigen::MatrixXd>& songs, const Eigen::MatrixXd& codebook_pool,
                           const BenchPlan& plan, std::uint64_t seed)
{
    require(!songs.empty(), "bench: no songs", ErrorKind::empty_input);
    require(!plan.methods.empty() && !plan.ks.empty(), "bench: empty method or k grid", ErrorKind::config);
    BenchReport report;
    report.environment = pin_to_one_cpu();
    const double tick = timer_resolution();
    const double min_span = plan.min_ticks * tick;
    report.environment += "; timer tick " + format_number(tick) + " s";

    std::vector<Eigen::MatrixXd> lasso_songs;
    for (std::size_t i = 0; i < songs.size() && static_cast<int>(i) < plan.lasso_songs; ++i)
        lasso_songs.push_back(songs[i].leftCols(std::min<Eigen::Index>(songs[i].cols(), plan.lasso_frames)));

    for (const EncoderConfig& method : plan.methods) {
        for (int k : plan.ks) {
            const Codebook codebook = kmeans_init(codebook_pool, k, seed + static_cast<std::uint64_t>(k));
            method.validate(k);
            const std::vector<Eigen::MatrixXd>& set = method.method == EncoderMethod::lasso ? lasso_songs : songs;
            const SongEncoder encoder(codebook, method);
            g_sink = g_sink + static_cast<double>(encoder.encode(set.front()).frames()); // warm-up

            BenchRow row;
            row.method = to_string(method.method);
            row.k = k;
            row.param = method.param;
            row.n_songs = static_cast<int>(set.size());
            std::vector<double> per_song;
            double total = 0.0;
            for (const Eigen::MatrixXd& song : set) {
                int reps = row.repetitions;
                double elapsed = 0.0;
                for (;;) {
                    const auto t0 = Clock::now();
                    for (int r = 0; r < reps; ++r) g_sink = g_sink + static_cast<double>(encoder.encode(song).frames());
                    elapsed = seconds_since(t0);
                    if (elapsed >= min_span) break;
                    reps *= 2;
                }
                row.repetitions = std::max(row.repetitions, reps);
                per_song.push_back(elapsed / reps);
                total += elapsed / reps;
                row.frames += song.cols();
            }
            row.mean_seconds = total / static_cast<double>(per_song.size());
            double var = 0.0;
            for (double t : per_song) var += (t - row.mean_seconds) * (t - row.mean_seconds);
            row.std_seconds = per_song.size() > 1 ? std::sqrt(var / static_cast<double>(per_song.size() - 1)) : 0.0;
            row.seconds_per_frame = total / static_cast<double>(row.frames);
            log_info("bench: " + row.method + " k=" + std::to_string(k) + " " + format_number(row.mean_seconds) + " s/song");
            report.rows.push_back(row);
        }
    }
    return report;
}

std::vector<Eigen::MatrixXd> bench_corpus(const PipelineConfig& config)
{
    const std::uint64_t seed = stage_seed(config, Stage::bench);
    const TimbreBank bank = TimbreBank::make(config.corpus.n_tags, config.corpus.n_clusters, seed);
    std::mt19937_64 rng(seed ^ 0xbe9c4ULL);
    std::uniform_int_distribution<int> tag(0, config.corpus.n_tags - 1), cluster(0, config.corpus.n_clusters - 1);

    const FrameWindow win{kFrameLength, kHopLength, config.window};
    const FeatureKind raw_kind = raw_kind_for(config.feature_kind);
    std::vector<Eigen::MatrixXd> raw;
    Eigen::Index total = 0;
    for (int i = 0; i < config.bench.songs; ++i) {
        ClipPlan clip;
        clip.id = "bench" + std::to_string(i);
        clip.cluster = cluster(rng);
        clip.tags = {tag(rng)};
        clip.seed = splitmix64(seed + static_cast<std::uint64_t>(i) + 1);
        AudioClip audio{render_clip(clip, bank, config.bench.song_seconds, kPipelineRate), kPipelineRate, clip.id};
        raw.push_back(extract_raw(audio, raw_kind, win));
        total += raw.back().cols();
    }
    Eigen::MatrixXd stacked(raw.front().rows(), total);
    Eigen::Index at = 0;
    for (const auto& m : raw) {
        stacked.middleCols(at, m.cols()) = m;
        at += m.cols();
    }
    const FeaturePipeline transform = FeaturePipeline::fit(config.feature_kind, stacked);
    std::vector<Eigen::MatrixXd> out;
    for (const auto& m : raw) out.push_back(transform.transform(m).data);
    return out;
}

double complexity_exponent(const BenchReport& report, const std::string& method)
{
    std::vector<double> x, y;
    for (const BenchRow& r : report.rows)
        if (r.method == method) {
            x.push_back(std::log(static_cast<double>(r.k)));
            y.push_back(std::log(r.seconds_per_frame));
        }
    require(x.size() >= 2, "complexity_exponent: need at least two k values for " + method, ErrorKind::insufficient_data);
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

CsvTable bench_table(const BenchReport& report)
{
    CsvTable t{{"method", "k", "param", "mean_seconds", "std_seconds", "seconds_per_frame", "n_songs", "frames",
                "repetitions", "environment"},
               {}};
    for (const BenchRow& r : report.rows)
        t.rows.push_back({r.method, std::to_string(r.k), format_number(r.param), format_number(r.mean_seconds),
                          format_number(r.std_seconds), format_number(r.seconds_per_frame), std::to_string(r.n_songs),
                          std::to_string(r.frames), std::to_string(r.repetitions), report.environment});
    return t;
}

std::string bench_gnuplot(const BenchReport& report)
{
    std::vector<std::string> methods;
    std::vector<int> ks;
    for (const BenchRow& r : report.rows) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
        if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
    }
    std::sort(ks.begin(), ks.end());
    std::ostringstream out;
    out << "# seconds per frame; " << report.environment << "\n# k";
    for (const auto& m : methods) out << ' ' << m;
    out << '\n';
    for (int k : ks) {
        out << k;
        for (const auto& m : methods) {
            const auto it = std::find_if(report.rows.begin(), report.rows.end(),
                                         [&](const BenchRow& r) { return r.k == k && r.method == m; });
            out << ' ' << (it == report.rows.end() ? std::string("NaN") : format_number(it->seconds_per_frame));
        }
        out << '\n';
    }
    return out.str();
}

} // namespace mirenc
