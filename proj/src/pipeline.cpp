#include "mirenc/pipeline.hpp"

#include "mirenc/dictionary.hpp"
#include "mirenc/error.hpp"
#include "mirenc/ingest.hpp"
#include "mirenc/log.hpp"
#include "mirenc/pooling.hpp"
#include "mirenc/synth.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace mirenc {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> sorted_stems(const fs::path& dir, const std::string& ext)
{
    if (!fs::is_directory(dir)) fail(ErrorKind::io, "missing directory " + dir.string() + ", run the upstream stage");
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::string two_digits(std::size_t i)
{
    return (i < 10 ? "0" : "") + std::to_string(i);
}

int parse_int(const std::string& text, const std::string& context)
{
    const double v = parse_number(text, context);
    if (v != std::floor(v)) fail(ErrorKind::config, context + ": expected an integer, got " + text);
    return static_cast<int>(v);
}

} // namespace

// ---- corpus -----------------------------------------------------------------

CorpusIndex load_corpus(const fs::path& dir)
{
    CorpusIndex c;
    const CsvTable songs = read_csv(dir / "songs.csv");
    std::vector<std::size_t> order(songs.rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t id_col = songs.column("song_id"), artist_col = songs.column("artist"),
                      cluster_col = songs.column("cluster");
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return songs.rows[a][id_col] < songs.rows[b][id_col]; });
    std::map<std::string, Eigen::Index> index;
    for (std::size_t i : order) {
        const auto& row = songs.rows[i];
        if (!index.emplace(row[id_col], static_cast<Eigen::Index>(c.song_ids.size())).second)
            fail(ErrorKind::config, "songs.csv: duplicate song id " + row[id_col]);
        c.song_ids.push_back(row[id_col]);
        c.artists.push_back(row[artist_col]);
        c.clusters.push_back(parse_int(row[cluster_col], "songs.csv cluster"));
    }
    require(!c.song_ids.empty(), dir.string() + ": corpus has no songs", ErrorKind::empty_input);
    const auto song = [&](const std::string& id, const char* file) {
        const auto it = index.find(id);
        if (it == index.end()) fail(ErrorKind::config, std::string(file) + ": unknown song id " + id);
        return it->second;
    };

    const CsvTable ann = read_csv(dir / "annotations.csv");
    std::set<std::string> tag_set;
    for (const auto& row : ann.rows) tag_set.insert(row[ann.column("tag")]);
    c.tags.assign(tag_set.begin(), tag_set.end());
    c.labels = Eigen::MatrixXi::Zero(c.size(), static_cast<Eigen::Index>(c.tags.size()));
    for (const auto& row : ann.rows) {
        const auto t = std::lower_bound(c.tags.begin(), c.tags.end(), row[ann.column("tag")]) - c.tags.begin();
        c.labels(song(row[ann.column("song_id")], "annotations.csv"), t) = 1;
    }

    const CsvTable splits = read_csv(dir / "splits.csv");
    c.folds.assign(c.song_ids.size(), -1);
    for (const auto& row : splits.rows)
        c.folds[static_cast<std::size_t>(song(row[splits.column("song_id")], "splits.csv"))] =
            parse_int(row[splits.column("fold")], "splits.csv fold");
    for (std::size_t i = 0; i < c.folds.size(); ++i)
        if (c.folds[i] < 0) fail(ErrorKind::config, "splits.csv: no fold for " + c.song_ids[i]);

    const CsvTable rel = read_csv(dir / "relevance.csv");
    c.relevance = Eigen::MatrixXi::Zero(c.size(), c.size());
    for (const auto& row : rel.rows) {
        const Eigen::Index a = song(row[rel.column("song_id_a")], "relevance.csv");
        const Eigen::Index b = song(row[rel.column("song_id_b")], "relevance.csv");
        const int v = parse_int(row[rel.column("relevant")], "relevance.csv relevant");
        if (v != 0 && v != 1) fail(ErrorKind::config, "relevance.csv: relevance must be 0 or 1");
        if (a == b) continue;
        c.relevance(a, b) = v;
        c.relevance(b, a) = v;
    }

    const CsvTable qbe = read_csv(dir / "qbe_splits.csv");
    for (const auto& row : qbe.rows) {
        const int s = parse_int(row[qbe.column("split")], "qbe_splits.csv split");
        if (s < 0) fail(ErrorKind::config, "qbe_splits.csv: negative split");
        if (static_cast<std::size_t>(s) >= c.qbe_splits.size()) c.qbe_splits.resize(static_cast<std::size_t>(s) + 1);
        const int i = static_cast<int>(song(row[qbe.column("song_id")], "qbe_splits.csv"));
        const std::string& role = row[qbe.column("role")];
        QbeSplit& split = c.qbe_splits[static_cast<std::size_t>(s)];
        if (role == "train") split.train.push_back(i);
        else if (role == "validation") split.validation.push_back(i);
        else if (role == "test") split.test.push_back(i);
        else fail(ErrorKind::config, "qbe_splits.csv: unknown role " + role);
    }
    for (QbeSplit& s : c.qbe_splits) {
        std::sort(s.train.begin(), s.train.end());
        std::sort(s.validation.begin(), s.validation.end());
        std::sort(s.test.begin(), s.test.end());
    }

    if (fs::is_directory(dir / "pool")) c.pool_ids = sorted_stems(dir / "pool", ".wav");
    return c;
}

Eigen::MatrixXi scramble_labels(const Eigen::MatrixXi& labels, std::uint64_t seed)
{
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(labels.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXi out(labels.rows(), labels.cols());
    for (Eigen::Index i = 0; i < labels.rows(); ++i) out.row(i) = labels.row(perm[static_cast<std::size_t>(i)]);
    return out;
}

Eigen::MatrixXi scramble_relevance(const Eigen::MatrixXi& relevance, std::uint64_t seed)
{
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(relevance.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXi out(relevance.rows(), relevance.cols());
    for (Eigen::Index i = 0; i < relevance.rows(); ++i)
        for (Eigen::Index j = 0; j < relevance.cols(); ++j)
            out(i, j) = relevance(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    return out;
}

CsvTable results_table()
{
    return {{"representation_id", "measure", "fold", "value"}, {}};
}

void add_result(CsvTable& table, const std::string& rep, const std::string& measure, const std::string& fold, double value)
{
    table.rows.push_back({rep, measure, fold, format_number(value)});
}

// ---- pipeline ---------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config))
{
    config_.validate();
}

fs::path Pipeline::corpus_dir() const { return config_.out / "corpus"; }
fs::path Pipeline::features_dir() const { return config_.out / "features" / to_string(config_.feature_kind); }
fs::path Pipeline::codebook_path() const
{
    return config_.out / "dictionary" /
           (std::string(to_string(config_.feature_kind)) + "_k" + std::to_string(config_.dictionary.k) + "_" +
            config_.dictionary_encoder().id() + ".cbdk");
}
fs::path Pipeline::codes_dir() const { return config_.out / "codes" / encoding_id(); }
fs::path Pipeline::vectors_path() const { return config_.out / "vectors" / (config_.representation_id() + ".cbsv"); }
fs::path Pipeline::metrics_dir() const { return config_.out / "metrics" / config_.representation_id(); }
fs::path Pipeline::reports_dir() const { return config_.out / "reports"; }

std::string Pipeline::encoding_id() const
{
    if (config_.encoder.method == EncoderMethod::none) return std::string(to_string(config_.feature_kind)) + "_NONE";
    return std::string(to_string(config_.feature_kind)) + "_k" + std::to_string(config_.dictionary.k) + "_" +
           config_.encoder.id();
}

Lineage Pipeline::lineage(Stage stage) const
{
    return {{"stage", to_string(stage)}, {"config_hash", stage_hash(config_, stage)}};
}

void Pipeline::synth() const
{
    synth_corpus(config_, corpus_dir());
}

void Pipeline::features() const
{
    const CsvTable lin = read_csv(corpus_dir() / "lineage.csv");
    require(!lin.rows.empty(), "corpus lineage.csv is empty", ErrorKind::version_mismatch);
    verify_lineage(lineage(Stage::synth), {{"stage", lin.rows[0][0]}, {"config_hash", lin.rows[0][1]}},
                   corpus_dir() / "lineage.csv");
    const CorpusIndex corpus = load_corpus(corpus_dir());
    require(!corpus.pool_ids.empty(), "features: the corpus has no pool clips to fit on", ErrorKind::insufficient_data);

    const FrameWindow win{kFrameLength, kHopLength, config_.window};
    const FeatureKind raw_kind = raw_kind_for(config_.feature_kind);
    std::vector<Eigen::MatrixXd> pool_raw;
    Eigen::Index total = 0;
    for (const std::string& id : corpus.pool_ids) {
        pool_raw.push_back(extract_raw(ingest_file(corpus_dir() / "pool" / (id + ".wav")), raw_kind, win));
        total += pool_raw.back().cols();
    }
    Eigen::MatrixXd stacked(pool_raw.front().rows(), total);
    Eigen::Index at = 0;
    for (const auto& m : pool_raw) {
        stacked.middleCols(at, m.cols()) = m;
        at += m.cols();
    }

    // persist, then continue with what a later reader would see
    const FeaturePipeline fitted = FeaturePipeline::fit(config_.feature_kind, stacked);
    const fs::path dir = features_dir();
    const Lineage lin_out = lineage(Stage::features);
    write_standardizer(dir / "transform.cbst", fitted.standardizer(), lin_out);
    if (fitted.pca()) write_pca(dir / "transform.cbpc", *fitted.pca(), lin_out);
    std::optional<PcaProjector> pca;
    if (fitted.pca()) pca = read_pca(dir / "transform.cbpc").value;
    const FeaturePipeline transform(config_.feature_kind, read_standardizer(dir / "transform.cbst").value, pca);

    for (std::size_t i = 0; i < corpus.pool_ids.size(); ++i)
        write_frame_matrix(dir / "pool" / (corpus.pool_ids[i] + ".cbmf"), transform.transform(pool_raw[i]), lin_out);
    for (const std::string& id : corpus.song_ids) {
        const AudioClip clip = ingest_file(corpus_dir() / "audio" / (id + ".wav"));
        write_frame_matrix(dir / "songs" / (id + ".cbmf"), transform.extract(clip, win), lin_out);
    }
    log_info("features: " + std::to_string(corpus.song_ids.size()) + " songs, " + std::to_string(total) +
             " pool frames, kind " + to_string(config_.feature_kind));
}

void Pipeline::train_dict() const
{
    const fs::path dir = features_dir() / "pool";
    const Lineage expected = lineage(Stage::features);
    std::vector<Eigen::MatrixXd> parts;
    Eigen::Index total = 0;
    for (const std::string& id : sorted_stems(dir, ".cbmf")) {
        auto a = read_frame_matrix(dir / (id + ".cbmf"));
        verify_lineage(expected, a.lineage, dir / (id + ".cbmf"));
        total += a.value.frames();
        parts.push_back(std::move(a.value.data));
    }
    require(!parts.empty(), "train-dict: no pool features in " + dir.string(), ErrorKind::insufficient_data);
    Eigen::MatrixXd stream(parts.front().rows(), total);
    Eigen::Index at = 0;
    for (const auto& m : parts) {
        stream.middleCols(at, m.cols()) = m;
        at += m.cols();
    }

    const std::uint64_t seed = stage_seed(config_, Stage::dictionary);
    if (stream.cols() > config_.dictionary.pool_size) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(stream.cols()));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        std::mt19937_64 rng(seed ^ 0x706f6f6cULL);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(config_.dictionary.pool_size));
        std::sort(idx.begin(), idx.end());
        Eigen::MatrixXd sub(stream.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = stream.col(idx[i]);
        stream = std::move(sub);
    }

    DictTrainSettings settings;
    settings.batch_size = config_.dictionary.batch_size;
    settings.epochs = config_.dictionary.epochs;
    double worst_norm = 0.0;
    settings.on_epoch = [&worst_norm](int epoch, const Codebook& cb) {
        worst_norm = std::max(worst_norm, cb.max_norm_error());
        log_info("train-dict: epoch " + std::to_string(epoch) + " max |norm - 1| " + format_number(cb.max_norm_error()));
    };
    const Codebook cb = dict_train(stream, config_.dictionary.k, config_.dictionary_encoder(), settings, seed);
    worst_norm = std::max(worst_norm, cb.max_norm_error());
    Lineage lin = lineage(Stage::dictionary);
    lin["feature_kind"] = to_string(config_.feature_kind);
    lin["training_vectors"] = std::to_string(stream.cols());
    lin["max_epoch_norm_error"] = format_number(worst_norm);
    write_codebook(codebook_path(), cb, lin);
}

void Pipeline::encode() const
{
    const CorpusIndex corpus = load_corpus(corpus_dir());
    const fs::path feat = features_dir() / "songs";
    const Lineage expected_features = lineage(Stage::features);
    const Lineage out_lineage = lineage(Stage::encode);

    std::optional<Codebook> codebook;
    std::optional<SongEncoder> encoder;
    if (config_.encoder.method != EncoderMethod::none) {
        auto cb = read_codebook(codebook_path());
        verify_lineage(lineage(Stage::dictionary), cb.lineage, codebook_path());
        codebook = std::move(cb.value);
        config_.encoder.validate(codebook->size());
        encoder.emplace(*codebook, config_.encoder);
    }
    int unconverged = 0;
    for (const std::string& id : corpus.song_ids) {
        auto frames = read_frame_matrix(feat / (id + ".cbmf"));
        verify_lineage(expected_features, frames.lineage, feat / (id + ".cbmf"));
        if (encoder) {
            const CodeMatrix codes = encoder->encode(frames.value);
            unconverged += encoder->unconverged_frames();
            write_codes(codes_dir() / (id + ".cbcm"), codes, out_lineage);
        } else {
            write_codes(codes_dir() / (id + ".cbcm"), CodeMatrix(frames.value.data), out_lineage);
        }
    }
    if (unconverged > 0)
        log_warning("encode: " + std::to_string(unconverged) + " frames stopped at the ADMM iteration cap");
}

void Pipeline::pool() const
{
    const CorpusIndex corpus = load_corpus(corpus_dir());
    const Lineage expected = lineage(Stage::encode);
    std::vector<SongVector> vectors;
    for (const std::string& id : corpus.song_ids) {
        const fs::path path = codes_dir() / (id + ".cbcm");
        auto codes = read_codes(path);
        verify_lineage(expected, codes.lineage, path);
        vectors.push_back(pool_song(id, codes.value, config_.pooling, config_.ppk, config_.encoder.method));
    }
    Lineage lin = lineage(Stage::pool);
    lin["representation_id"] = config_.representation_id();
    write_song_vectors(vectors_path(), vectors, lin);
    fs::path csv = vectors_path();
    csv.replace_extension(".csv");
    write_song_vectors_csv(csv, vectors);
}

Eigen::MatrixXd Pipeline::song_matrix(const CorpusIndex& corpus) const
{
    auto table = read_song_vectors(vectors_path());
    Lineage expected = lineage(Stage::pool);
    expected["representation_id"] = config_.representation_id();
    verify_lineage(expected, table.lineage, vectors_path());
    std::map<std::string, const SongVector*> by_id;
    for (const SongVector& v : table.value) by_id[v.song_id] = &v;
    require(!table.value.empty(), vectors_path().string() + ": empty song vector table", ErrorKind::empty_input);
    Eigen::MatrixXd out(table.value.front().values.size(), corpus.size());
    for (Eigen::Index i = 0; i < corpus.size(); ++i) {
        const auto it = by_id.find(corpus.song_ids[static_cast<std::size_t>(i)]);
        if (it == by_id.end())
            fail(ErrorKind::version_mismatch, vectors_path().string() + ": no vector for " +
                                                  corpus.song_ids[static_cast<std::size_t>(i)]);
        out.col(i) = it->second->values;
    }
    return out;
}

QbtReport Pipeline::qbt(std::optional<std::uint64_t> scramble_seed) const
{
    const CorpusIndex corpus = load_corpus(corpus_dir());
    const Eigen::MatrixXd vectors = song_matrix(corpus);
    if (!scramble_seed && config_.qbt.scramble) scramble_seed = stage_seed(config_, Stage::qbt) ^ 0x5c4a3b1eULL;

    QbtData data{corpus.song_ids, corpus.artists, corpus.folds, corpus.tags, corpus.labels};
    if (scramble_seed) data.labels = scramble_labels(corpus.labels, *scramble_seed);
    QbtSettings settings;
    settings.grid = config_.qbt.grid;
    settings.inner_folds = config_.qbt.inner_folds;
    settings.seed = stage_seed(config_, Stage::qbt);
    const QbtReport report = qbt_evaluate(vectors, data, settings);

    const std::string rep = config_.representation_id();
    CsvTable results = results_table();
    for (const QbtFoldResult& f : report.per_fold) {
        add_result(results, rep, "auc", std::to_string(f.fold), f.auc);
        add_result(results, rep, "p_at_10", std::to_string(f.fold), f.p_at_10);
        add_result(results, rep, "map", std::to_string(f.fold), f.map);
    }
    add_result(results, rep, "auc", "mean", report.auc);
    add_result(results, rep, "p_at_10", "mean", report.p_at_10);
    add_result(results, rep, "map", "mean", report.map);

    CsvTable tags{{"representation_id", "fold", "tag", "auc", "p_at_10", "ap", "reg", "fn_weight", "fp_weight"}, {}};
    for (const QbtTagResult& t : report.per_tag)
        tags.rows.push_back({rep, std::to_string(t.fold), t.tag, t.metrics.auc ? format_number(*t.metrics.auc) : "",
                             format_number(t.metrics.p_at_10), format_number(t.metrics.ap), format_number(t.chosen.reg),
                             format_number(t.chosen.fn_weight), format_number(t.chosen.fp_weight)});
    const std::string suffix = rep + (scramble_seed ? "_scrambled" : "") + ".csv";
    write_csv(reports_dir() / ("qbt_" + suffix), results);
    write_csv(reports_dir() / ("qbt_tags_" + suffix), tags);
    return report;
}

QbeReport Pipeline::qbe(std::optional<std::uint64_t> scramble_seed) const
{
    const CorpusIndex corpus = load_corpus(corpus_dir());
    const Eigen::MatrixXd vectors = song_matrix(corpus);
    if (!scramble_seed && config_.qbe.scramble) scramble_seed = stage_seed(config_, Stage::qbe) ^ 0x5c4a3b1eULL;
    const Eigen::MatrixXi relevance = scramble_seed ? scramble_relevance(corpus.relevance, *scramble_seed) : corpus.relevance;
    require(!corpus.qbe_splits.empty(), "qbe: corpus has no splits", ErrorKind::config);

    MetricSettings ms;
    ms.steps = config_.qbe.steps;
    ms.triplets_per_step = config_.qbe.triplets_per_step;
    ms.seed = stage_seed(config_, Stage::qbe);
    const HingeMetricTrainer hinge(ms);
    const IdentityMetricTrainer identity;
    const MetricTrainer& trainer = config_.qbe.metric == "identity" ? static_cast<const MetricTrainer&>(identity) : hinge;

    QbeSettings settings;
    settings.reduced_dim = config_.qbe.reduced_dim;
    std::vector<Metric> metrics;
    const QbeReport report = qbe_evaluate(vectors, relevance, corpus.qbe_splits, trainer, settings, &metrics);

    const std::string rep = config_.representation_id();
    const std::string tag = scramble_seed ? "_scrambled" : "";
    Lineage lin = lineage(Stage::qbe);
    lin["representation_id"] = rep;
    lin["trainer"] = trainer.name();
    for (std::size_t s = 0; s < metrics.size(); ++s)
        write_metric(metrics_dir() / ("split_" + two_digits(s) + tag + ".cbmw"), metrics[s], lin);

    CsvTable results = results_table();
    for (std::size_t s = 0; s < report.split_auc.size(); ++s) add_result(results, rep, "auc", std::to_string(s), report.split_auc[s]);
    add_result(results, rep, "auc", "mean", report.mean_auc);
    add_result(results, rep, "skipped_queries", "all", report.skipped_queries);
    write_csv(reports_dir() / ("qbe_" + rep + "_" + trainer.name() + tag + ".csv"), results);
    return report;
}

BenchReport Pipeline::bench() const
{
    const std::vector<Eigen::MatrixXd> songs = bench_corpus(config_);
    const std::uint64_t seed = stage_seed(config_, Stage::bench);

    // codebooks are fitted on a sample of the bench frames
    Eigen::Index total = 0;
    for (const auto& s : songs) total += s.cols();
    std::vector<std::pair<std::size_t, Eigen::Index>> where;
    for (std::size_t i = 0; i < songs.size(); ++i)
        for (Eigen::Index t = 0; t < songs[i].cols(); ++t) where.emplace_back(i, t);
    std::mt19937_64 rng(seed);
    std::shuffle(where.begin(), where.end(), rng);
    where.resize(std::min<std::size_t>(where.size(), 20000));
    std::sort(where.begin(), where.end());
    Eigen::MatrixXd pool(songs.front().rows(), static_cast<Eigen::Index>(where.size()));
    for (std::size_t j = 0; j < where.size(); ++j) pool.col(static_cast<Eigen::Index>(j)) = songs[where[j].first].col(where[j].second);

    BenchPlan plan;
    plan.ks = config_.bench.ks;
    plan.methods = {EncoderConfig::cs(config_.bench.cs_theta), EncoderConfig::vq(config_.bench.vq_tau),
                    EncoderConfig::lasso(config_.bench.lasso_lambda)};
    plan.min_ticks = config_.bench.min_ticks;
    plan.lasso_songs = config_.bench.lasso_songs;
    plan.lasso_frames = std::max<long long>(
        1, (std::llround(config_.bench.lasso_song_seconds * kPipelineRate) - kFrameLength) / kHopLength + 1);
    const BenchReport report = bench_encoding(songs, pool, plan, seed);
    write_csv(reports_dir() / "bench.csv", bench_table(report));
    write_text_atomic(reports_dir() / "bench.dat", bench_gnuplot(report));
    return report;
}

void Pipeline::run_all() const
{
    synth();
    features();
    if (config_.encoder.method != EncoderMethod::none) train_dict();
    encode();
    pool();
    qbt();
    qbe();
}

} // namespace mirenc
