#include "doctest.h"

#include "mirenc/config.hpp"
#include "mirenc/error.hpp"

using namespace mirenc;

namespace {

ErrorKind kind_of(const std::string& text)
{
    try {
        parse_config(text);
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected a config error");
    return ErrorKind::io;
}

} // namespace

TEST_CASE("hash primitives match their reference vectors")
{
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("defaults validate and the canonical text round-trips")
{
    const PipelineConfig defaults;
    CHECK_NOTHROW(defaults.validate());
    const std::string text = format_config(defaults);
    const PipelineConfig back = parse_config(text);
    CHECK(format_config(back) == text);
    CHECK(back.representation_id() == "MFCC_D_k128_VQ:8_mean");
}

TEST_CASE("sections override defaults")
{
    const PipelineConfig c = parse_config("[run]\nseed = 7\n[dictionary]\nk = 256\n[encoder]\nmethod = lasso\nparam = 0.5\n"
                                          "[pooling]\nkind = max_abs\n[qbt]\ngrid = 1, 10\n");
    CHECK(c.seed == 7);
    CHECK(c.dictionary.k == 256);
    CHECK(c.encoder.method == EncoderMethod::lasso);
    CHECK(c.encoder.param == 0.5);
    CHECK(c.pooling == PoolingKind::max_abs);
    CHECK(c.qbt.grid == std::vector<double>{1.0, 10.0});
    CHECK(c.dictionary_encoder().id() == EncoderConfig::lasso(1.0).id());
}

TEST_CASE("bad configs are config errors")
{
    CHECK(kind_of("[run]\nbogus = 1\n") == ErrorKind::config);
    CHECK(kind_of("[dictionary]\nk = many\n") == ErrorKind::config);
    CHECK(kind_of("[encoder]\nmethod = vq\nparam = 500\n") == ErrorKind::config);
    CHECK(kind_of("[encoder]\nmethod = cs\nparam = 0.5\n[pooling]\nppk = true\n") == ErrorKind::config);
    CHECK(kind_of("[qbe]\nmetric = mlr\n") == ErrorKind::config);
    CHECK(kind_of("[features]\nkind = chroma\n") == ErrorKind::config);
    CHECK(kind_of("[run\nseed = 1\n") == ErrorKind::config);
}

TEST_CASE("stage hashes chain downstream only")
{
    const PipelineConfig base;
    PipelineConfig other = base;
    other.encoder = EncoderConfig::vq(4);
    CHECK(stage_hash(base, Stage::features) == stage_hash(other, Stage::features));
    CHECK(stage_hash(base, Stage::dictionary) == stage_hash(other, Stage::dictionary));
    CHECK(stage_hash(base, Stage::encode) != stage_hash(other, Stage::encode));
    CHECK(stage_hash(base, Stage::qbt) != stage_hash(other, Stage::qbt));

    other = base;
    other.feature_kind = FeatureKind::mfs_d_pc;
    CHECK(stage_hash(base, Stage::synth) == stage_hash(other, Stage::synth));
    for (Stage s : {Stage::features, Stage::dictionary, Stage::encode, Stage::pool, Stage::qbt, Stage::qbe})
        CHECK(stage_hash(base, s) != stage_hash(other, s));

    other = base;
    other.qbe.steps = 10;
    CHECK(stage_hash(base, Stage::qbt) == stage_hash(other, Stage::qbt));
    CHECK(stage_hash(base, Stage::qbe) != stage_hash(other, Stage::qbe));

    // output location is not part of any result
    other = base;
    other.out = "/elsewhere";
    for (Stage s : {Stage::synth, Stage::qbe, Stage::bench}) CHECK(stage_hash(base, s) == stage_hash(other, s));
}

TEST_CASE("stage seeds differ per stage and follow the root seed")
{
    PipelineConfig a, b;
    b.seed = 2;
    CHECK(stage_seed(a, Stage::synth) != stage_seed(a, Stage::dictionary));
    CHECK(stage_seed(a, Stage::synth) != stage_seed(b, Stage::synth));
    CHECK(stage_seed(a, Stage::qbt) == stage_seed(PipelineConfig{}, Stage::qbt));
}
