#include "mirenc/config.hpp"

#include "mirenc/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <optional>
#include <functional>
#include <sstream>

namespace mirenc {

namespace {

std::string num(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) fail(ErrorKind::config, key + ": not a number: '" + text + "'");
    return v;
}

long long to_int(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    long long v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) fail(ErrorKind::config, key + ": not an integer: '" + text + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& text)
{
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    fail(ErrorKind::config, key + ": expected true/false, got '" + text + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& text, F parse_one)
{
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(static_cast<T>(parse_one(key, item)));
    if (out.empty()) fail(ErrorKind::config, key + ": empty list");
    return out;
}

template <typename T>
std::string join(const std::vector<T>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + num(static_cast<double>(v[i]));
    return out;
}

const char* window_name(WindowKind w)
{
    return w == WindowKind::hann ? "hann" : "rectangular";
}

WindowKind parse_window(const std::string& s)
{
    if (s == "hann") return WindowKind::hann;
    if (s == "rectangular") return WindowKind::rectangular;
    fail(ErrorKind::config, "features.window: expected hann or rectangular, got '" + s + "'");
}

struct Field {
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

// Every recognized key, in section.key form.
const std::map<std::string, Field>& fields()
{
    using C = PipelineConfig;
    using S = const std::string&;
    static const std::map<std::string, Field> table = {
        {"run.seed", {[](C& c, S v) { c.seed = static_cast<std::uint64_t>(to_int("run.seed", v)); },
                      [](const C& c) { return std::to_string(c.seed); }}},
        {"run.out", {[](C& c, S v) { c.out = trim(v); }, [](const C& c) { return c.out.string(); }}},

        {"corpus.n_songs", {[](C& c, S v) { c.corpus.n_songs = static_cast<int>(to_int("corpus.n_songs", v)); },
                            [](const C& c) { return std::to_string(c.corpus.n_songs); }}},
        {"corpus.n_tags", {[](C& c, S v) { c.corpus.n_tags = static_cast<int>(to_int("corpus.n_tags", v)); },
                           [](const C& c) { return std::to_string(c.corpus.n_tags); }}},
        {"corpus.n_artists", {[](C& c, S v) { c.corpus.n_artists = static_cast<int>(to_int("corpus.n_artists", v)); },
                              [](const C& c) { return std::to_string(c.corpus.n_artists); }}},
        {"corpus.n_clusters", {[](C& c, S v) { c.corpus.n_clusters = static_cast<int>(to_int("corpus.n_clusters", v)); },
                               [](const C& c) { return std::to_string(c.corpus.n_clusters); }}},
        {"corpus.song_seconds", {[](C& c, S v) { c.corpus.song_seconds = to_double("corpus.song_seconds", v); },
                                 [](const C& c) { return num(c.corpus.song_seconds); }}},
        {"corpus.pool_clips", {[](C& c, S v) { c.corpus.pool_clips = static_cast<int>(to_int("corpus.pool_clips", v)); },
                               [](const C& c) { return std::to_string(c.corpus.pool_clips); }}},
        {"corpus.float_stereo_share",
         {[](C& c, S v) { c.corpus.float_stereo_share = to_double("corpus.float_stereo_share", v); },
          [](const C& c) { return num(c.corpus.float_stereo_share); }}},

        {"features.kind", {[](C& c, S v) { c.feature_kind = parse_feature_kind(trim(v)); },
                           [](const C& c) { return std::string(to_string(c.feature_kind)); }}},
        {"features.window", {[](C& c, S v) { c.window = parse_window(trim(v)); },
                             [](const C& c) { return std::string(window_name(c.window)); }}},

        {"dictionary.k", {[](C& c, S v) { c.dictionary.k = static_cast<int>(to_int("dictionary.k", v)); },
                          [](const C& c) { return std::to_string(c.dictionary.k); }}},
        {"dictionary.train_method", {[](C& c, S v) { c.dictionary.train_method = trim(v); },
                                     [](const C& c) { return c.dictionary.train_method; }}},
        {"dictionary.train_param",
         {[](C& c, S v) { c.dictionary.train_param = to_double("dictionary.train_param", v); },
          [](const C& c) { return num(c.dictionary.train_param); }}},
        {"dictionary.epochs", {[](C& c, S v) { c.dictionary.epochs = static_cast<int>(to_int("dictionary.epochs", v)); },
                               [](const C& c) { return std::to_string(c.dictionary.epochs); }}},
        {"dictionary.batch_size",
         {[](C& c, S v) { c.dictionary.batch_size = static_cast<int>(to_int("dictionary.batch_size", v)); },
          [](const C& c) { return std::to_string(c.dictionary.batch_size); }}},
        {"dictionary.pool_size",
         {[](C& c, S v) { c.dictionary.pool_size = static_cast<int>(to_int("dictionary.pool_size", v)); },
          [](const C& c) { return std::to_string(c.dictionary.pool_size); }}},

        {"encoder.method", {[](C& c, S v) { c.encoder.method = parse_encoder_method(trim(v)); },
                            [](const C& c) { return std::string(to_string(c.encoder.method)); }}},
        {"encoder.param", {[](C& c, S v) { c.encoder.param = to_double("encoder.param", v); },
                           [](const C& c) { return num(c.encoder.param); }}},

        {"pooling.kind", {[](C& c, S v) { c.pooling = parse_pooling(trim(v)); },
                          [](const C& c) { return std::string(to_string(c.pooling)); }}},
        {"pooling.ppk", {[](C& c, S v) { c.ppk = to_bool("pooling.ppk", v); },
                         [](const C& c) { return std::string(c.ppk ? "true" : "false"); }}},

        {"qbt.folds", {[](C& c, S v) { c.qbt.folds = static_cast<int>(to_int("qbt.folds", v)); },
                       [](const C& c) { return std::to_string(c.qbt.folds); }}},
        {"qbt.inner_folds", {[](C& c, S v) { c.qbt.inner_folds = static_cast<int>(to_int("qbt.inner_folds", v)); },
                             [](const C& c) { return std::to_string(c.qbt.inner_folds); }}},
        {"qbt.grid", {[](C& c, S v) { c.qbt.grid = to_list<double>("qbt.grid", v, to_double); },
                      [](const C& c) { return join(c.qbt.grid); }}},
        {"qbt.scramble", {[](C& c, S v) { c.qbt.scramble = to_bool("qbt.scramble", v); },
                          [](const C& c) { return std::string(c.qbt.scramble ? "true" : "false"); }}},

        {"qbe.splits", {[](C& c, S v) { c.qbe.splits = static_cast<int>(to_int("qbe.splits", v)); },
                        [](const C& c) { return std::to_string(c.qbe.splits); }}},
        {"qbe.reduced_dim", {[](C& c, S v) { c.qbe.reduced_dim = static_cast<int>(to_int("qbe.reduced_dim", v)); },
                             [](const C& c) { return std::to_string(c.qbe.reduced_dim); }}},
        {"qbe.metric", {[](C& c, S v) { c.qbe.metric = trim(v); }, [](const C& c) { return c.qbe.metric; }}},
        {"qbe.steps", {[](C& c, S v) { c.qbe.steps = static_cast<int>(to_int("qbe.steps", v)); },
                       [](const C& c) { return std::to_string(c.qbe.steps); }}},
        {"qbe.triplets_per_step",
         {[](C& c, S v) { c.qbe.triplets_per_step = static_cast<int>(to_int("qbe.triplets_per_step", v)); },
          [](const C& c) { return std::to_string(c.qbe.triplets_per_step); }}},
        {"qbe.scramble", {[](C& c, S v) { c.qbe.scramble = to_bool("qbe.scramble", v); },
                          [](const C& c) { return std::string(c.qbe.scramble ? "true" : "false"); }}},

        {"bench.songs", {[](C& c, S v) { c.bench.songs = static_cast<int>(to_int("bench.songs", v)); },
                         [](const C& c) { return std::to_string(c.bench.songs); }}},
        {"bench.song_seconds", {[](C& c, S v) { c.bench.song_seconds = to_double("bench.song_seconds", v); },
                                [](const C& c) { return num(c.bench.song_seconds); }}},
        {"bench.ks", {[](C& c, S v) { c.bench.ks = to_list<int>("bench.ks", v, to_int); },
                      [](const C& c) { return join(c.bench.ks); }}},
        {"bench.lasso_lambda", {[](C& c, S v) { c.bench.lasso_lambda = to_double("bench.lasso_lambda", v); },
                                [](const C& c) { return num(c.bench.lasso_lambda); }}},
        {"bench.vq_tau", {[](C& c, S v) { c.bench.vq_tau = static_cast<int>(to_int("bench.vq_tau", v)); },
                          [](const C& c) { return std::to_string(c.bench.vq_tau); }}},
        {"bench.cs_theta", {[](C& c, S v) { c.bench.cs_theta = to_double("bench.cs_theta", v); },
                            [](const C& c) { return num(c.bench.cs_theta); }}},
        {"bench.lasso_songs", {[](C& c, S v) { c.bench.lasso_songs = static_cast<int>(to_int("bench.lasso_songs", v)); },
                               [](const C& c) { return std::to_string(c.bench.lasso_songs); }}},
        {"bench.lasso_song_seconds",
         {[](C& c, S v) { c.bench.lasso_song_seconds = to_double("bench.lasso_song_seconds", v); },
          [](const C& c) { return num(c.bench.lasso_song_seconds); }}},
        {"bench.min_ticks", {[](C& c, S v) { c.bench.min_ticks = static_cast<int>(to_int("bench.min_ticks", v)); },
                             [](const C& c) { return std::to_string(c.bench.min_ticks); }}},
    };
    return table;
}

void check(bool cond, const std::string& what)
{
    if (!cond) fail(ErrorKind::config, what);
}

} // namespace

void PipelineConfig::validate() const
{
    check(corpus.n_songs >= 10, "corpus.n_songs must be at least 10");
    check(corpus.n_tags >= 2, "corpus.n_tags must be at least 2");
    check(corpus.n_clusters >= 2, "corpus.n_clusters must be at least 2");
    check(corpus.n_artists >= std::max(qbt.folds, 5) && corpus.n_artists <= corpus.n_songs,
          "corpus.n_artists must lie in [max(qbt.folds, 5), n_songs]");
    check(corpus.song_seconds >= 1.0, "corpus.song_seconds must be at least 1");
    check(corpus.pool_clips >= 1, "corpus.pool_clips must be positive");
    check(corpus.float_stereo_share >= 0.0 && corpus.float_stereo_share <= 1.0,
          "corpus.float_stereo_share must lie in [0, 1]");
    check(dictionary.k >= 1, "dictionary.k must be positive");
    check(dictionary.epochs >= 0 && dictionary.batch_size >= 1 && dictionary.pool_size >= dictionary.k,
          "dictionary: epochs >= 0, batch_size >= 1 and pool_size >= k required");
    check(dictionary.train_method == "auto" || dictionary.train_method == "vq" || dictionary.train_method == "lasso",
          "dictionary.train_method must be auto, vq or lasso");
    try {
        if (encoder.method != EncoderMethod::none) encoder.validate(dictionary.k);
        dictionary_encoder().validate(dictionary.k);
    } catch (const Error& e) {
        fail(ErrorKind::config, e.what());
    }
    check(!ppk || (encoder.method == EncoderMethod::vq && pooling == PoolingKind::mean),
          "pooling.ppk needs VQ encoding with mean pooling");
    check(qbt.folds >= 2 && qbt.inner_folds >= 2, "qbt.folds and qbt.inner_folds must be at least 2");
    for (double g : qbt.grid) check(g > 0.0, "qbt.grid values must be positive");
    check(qbe.splits >= 1 && qbe.reduced_dim >= 0 && qbe.steps >= 0 && qbe.triplets_per_step >= 1,
          "qbe: splits >= 1, reduced_dim >= 0, steps >= 0, triplets_per_step >= 1 required");
    check(qbe.metric == "hinge" || qbe.metric == "identity", "qbe.metric must be hinge or identity");
    check(bench.songs >= 1 && bench.lasso_songs >= 1 && bench.song_seconds > 0.1 && bench.lasso_song_seconds > 0.1,
          "bench: need at least one song of positive length");
    for (int k : bench.ks) check(k >= bench.vq_tau, "bench.ks entries must be at least bench.vq_tau");
    check(bench.min_ticks >= 1, "bench.min_ticks must be positive");
}

EncoderConfig PipelineConfig::dictionary_encoder() const
{
    if (dictionary.train_method == "lasso") return EncoderConfig::lasso(dictionary.train_param);
    if (dictionary.train_method == "vq") return EncoderConfig::vq(static_cast<int>(dictionary.train_param));
    return encoder.method == EncoderMethod::lasso ? EncoderConfig::lasso(1.0) : EncoderConfig::vq(1);
}

std::string PipelineConfig::representation_id() const
{
    const int k = encoder.method == EncoderMethod::none ? feature_dim(feature_kind) : dictionary.k;
    std::string id = std::string(to_string(feature_kind)) + "_k" + std::to_string(k) + "_" + encoder.id() + "_" +
                     to_string(pooling);
    if (ppk) id += "_ppk";
    return id;
}

PipelineConfig parse_config(const std::string& text, const std::string& source)
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(ErrorKind::config, source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    PipelineConfig config;
    const auto& table = fields();
    for (const auto& [section, body] : tree) {
        if (body.empty()) fail(ErrorKind::config, source + ": key '" + section + "' outside a section");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            const auto it = table.find(full);
            if (it == table.end()) fail(ErrorKind::config, source + ": unknown key '" + full + "'");
            try {
                it->second.set(config, value.data());
            } catch (const Error& e) {
                fail(ErrorKind::config, source + ": " + e.what());
            }
        }
    }
    config.validate();
    return config;
}

PipelineConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string format_config(const PipelineConfig& config)
{
    std::string out, section;
    for (const auto& [full, field] : fields()) {
        const auto dot = full.find('.');
        const std::string s = full.substr(0, dot);
        if (s != section) {
            out += (section.empty() ? "" : "\n") + std::string("[") + s + "]\n";
            section = s;
        }
        out += full.substr(dot + 1) + " = " + field.get(config) + "\n";
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed)
{
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string hex64(std::uint64_t v)
{
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

const char* to_string(Stage stage)
{
    switch (stage) {
    case Stage::synth: return "synth";
    case Stage::features: return "features";
    case Stage::dictionary: return "train-dict";
    case Stage::encode: return "encode";
    case Stage::pool: return "pool";
    case Stage::qbt: return "qbt";
    case Stage::qbe: return "qbe";
    case Stage::bench: return "bench";
    }
    return "?";
}

namespace {

std::vector<std::string> stage_keys(const PipelineConfig& c, Stage stage)
{
    switch (stage) {
    case Stage::synth:
        return {"run.seed", "corpus.n_songs", "corpus.n_tags", "corpus.n_artists", "corpus.n_clusters",
                "corpus.song_seconds", "corpus.pool_clips", "corpus.float_stereo_share"};
    case Stage::features: return {"features.kind", "features.window"};
    case Stage::dictionary:
        return {"dictionary.k", "dictionary.epochs", "dictionary.batch_size", "dictionary.pool_size"};
    case Stage::encode: return {"encoder.method", "encoder.param"};
    case Stage::pool: return {"pooling.kind", "pooling.ppk"};
    case Stage::qbt: return {"qbt.folds", "qbt.inner_folds", "qbt.grid", "qbt.scramble"};
    case Stage::qbe:
        return {"qbe.splits", "qbe.reduced_dim", "qbe.metric", "qbe.steps", "qbe.triplets_per_step", "qbe.scramble"};
    case Stage::bench:
        return {"run.seed", "features.kind", "features.window", "bench.songs", "bench.song_seconds", "bench.ks",
                "bench.lasso_lambda", "bench.vq_tau", "bench.cs_theta", "bench.lasso_songs",
                "bench.lasso_song_seconds", "bench.min_ticks"};
    }
    (void)c;
    return {};
}

std::optional<Stage> upstream(const PipelineConfig& c, Stage stage)
{
    switch (stage) {
    case Stage::synth: return std::nullopt;
    case Stage::features: return Stage::synth;
    case Stage::dictionary: return Stage::features;
    case Stage::encode: return c.encoder.method == EncoderMethod::none ? Stage::features : Stage::dictionary;
    case Stage::pool: return Stage::encode;
    case Stage::qbt: return Stage::pool;
    case Stage::qbe: return Stage::pool;
    case Stage::bench: return std::nullopt;
    }
    return std::nullopt;
}

} // namespace

std::map<std::string, std::string> stage_settings(const PipelineConfig& config, Stage stage)
{
    std::map<std::string, std::string> out;
    for (const std::string& key : stage_keys(config, stage)) out[key] = fields().at(key).get(config);
    if (stage == Stage::dictionary) out["dictionary.encoder"] = config.dictionary_encoder().id();
    return out;
}

std::string stage_hash(const PipelineConfig& config, Stage stage)
{
    std::string text = std::string("stage=") + to_string(stage) + "\n";
    if (const auto up = upstream(config, stage)) text += "upstream=" + stage_hash(config, *up) + "\n";
    for (const auto& [k, v] : stage_settings(config, stage)) text += k + "=" + v + "\n";
    return hex64(fnv1a64(text));
}

std::uint64_t stage_seed(const PipelineConfig& config, Stage stage)
{
    return splitmix64(config.seed ^ fnv1a64(to_string(stage)));
}

} // namespace mirenc
