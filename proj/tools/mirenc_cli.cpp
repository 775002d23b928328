#include "mirenc/error.hpp"
#include "mirenc/log.hpp"
#include "mirenc/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>

using namespace mirenc;

namespace {

int exit_code(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument: return 2;
    case ErrorKind::numerical: return 4;
    default: return 3;
    }
}

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> k;
    std::optional<std::string> method;
    std::optional<double> param;
    std::optional<std::string> pooling;
    bool ppk = false;
    std::optional<std::string> out;
    bool verbose = false;
};

PipelineConfig resolve(const Overrides& o)
{
    PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_config(o.config);
    try {
        if (o.seed) c.seed = *o.seed;
        if (o.k) c.dictionary.k = *o.k;
        if (o.method) {
            c.encoder.method = parse_encoder_method(*o.method);
            if (!o.param && c.encoder.method == EncoderMethod::none) c.encoder.param = 0.0;
        }
        if (o.param) c.encoder.param = *o.param;
        if (o.pooling) c.pooling = parse_pooling(*o.pooling);
        if (o.ppk) c.ppk = true;
        if (o.out) c.out = *o.out;
    } catch (const Error& e) {
        fail(ErrorKind::config, e.what());
    }
    c.validate();
    return c;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Codebook-based music representations: synthesis, features, encoding, pooling, retrieval, timing"};
    app.require_subcommand(1);
    Overrides o;
    app.add_option("--config", o.config, "INI config file")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "root seed");
    app.add_option("--k", o.k, "codebook size");
    app.add_option("--method", o.method, "encoder: lasso, vq, cs or none");
    app.add_option("--param", o.param, "lambda, tau or theta");
    app.add_option("--pooling", o.pooling, "mean or max_abs");
    app.add_flag("--ppk", o.ppk, "PPK transform (mean-pooled VQ only)");
    app.add_option("--out", o.out, "output directory");
    app.add_flag("-v,--verbose", o.verbose, "log progress to stderr");

    bool scramble = false;
    std::string metric;
    auto* synth = app.add_subcommand("synth", "synthesize the corpus");
    auto* features = app.add_subcommand("features", "fit the feature transform and extract frame matrices");
    auto* train = app.add_subcommand("train-dict", "train the codebook");
    auto* encode = app.add_subcommand("encode", "encode every song");
    auto* pool = app.add_subcommand("pool", "pool codes into song vectors");
    auto* qbt = app.add_subcommand("qbt", "query-by-tag evaluation");
    qbt->add_flag("--scramble", scramble, "scramble song labels (chance level)");
    auto* qbe = app.add_subcommand("qbe", "query-by-example evaluation");
    qbe->add_flag("--scramble", scramble, "scramble song relevance (chance level)");
    qbe->add_option("--metric", metric, "hinge or identity");
    auto* bench = app.add_subcommand("bench", "encoder runtime grid");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (o.verbose)
        set_log_sink([](LogLevel level, std::string_view msg) {
            std::cerr << (level == LogLevel::warning ? "warning: " : "") << msg << '\n';
        });

    try {
        PipelineConfig config = resolve(o);
        if (!metric.empty()) {
            config.qbe.metric = metric;
            config.validate();
        }
        if (scramble) {
            config.qbt.scramble = config.qbt.scramble || qbt->parsed();
            config.qbe.scramble = config.qbe.scramble || qbe->parsed();
        }
        const Pipeline p(config);
        if (synth->parsed()) {
            p.synth();
            std::cout << "synth: " << p.corpus_dir().string() << '\n';
        } else if (features->parsed()) {
            p.features();
            std::cout << "features: " << p.features_dir().string() << '\n';
        } else if (train->parsed()) {
            p.train_dict();
            std::cout << "train-dict: " << p.codebook_path().string() << '\n';
        } else if (encode->parsed()) {
            p.encode();
            std::cout << "encode: " << p.codes_dir().string() << '\n';
        } else if (pool->parsed()) {
            p.pool();
            std::cout << "pool: " << p.vectors_path().string() << '\n';
        } else if (qbt->parsed()) {
            const QbtReport r = p.qbt();
            std::cout << "qbt " << config.representation_id() << (config.qbt.scramble ? " (scrambled)" : "")
                      << ": auc " << r.auc << " p@10 " << r.p_at_10 << " map " << r.map << '\n';
        } else if (qbe->parsed()) {
            const QbeReport r = p.qbe();
            std::cout << "qbe " << config.representation_id() << " " << config.qbe.metric
                      << (config.qbe.scramble ? " (scrambled)" : "") << ": auc " << r.mean_auc << '\n';
        } else if (bench->parsed()) {
            const BenchReport r = p.bench();
            for (const BenchRow& row : r.rows)
                std::cout << row.method << " k=" << row.k << " " << row.mean_seconds << " s/song\n";
            for (const char* m : {"CS", "VQ", "LASSO"})
                std::cout << "exponent " << m << " " << complexity_exponent(r, m) << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
