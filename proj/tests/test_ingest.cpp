#include "doctest.h"

#include "mirenc/error.hpp"
#include "mirenc/ingest.hpp"

#include <cmath>
#include <complex>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>

using namespace mirenc;

namespace {

std::filesystem::path temp_path(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / "mirenc_test_ingest";
    std::filesystem::create_directories(dir);
    return dir / name;
}

ErrorKind error_kind_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an mirenc::Error");
    return ErrorKind::io;
}

// Naive DFT power at every bin up to Nyquist.
std::vector<double> dft_power(const std::vector<double>& x)
{
    const std::size_t n = x.size();
    std::vector<double> power(n / 2 + 1);
    for (std::size_t k = 0; k < power.size(); ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / n);
        power[k] = std::norm(acc);
    }
    return power;
}

std::vector<std::uint8_t> riff(const std::vector<std::uint8_t>& fmt, const std::vector<std::uint8_t>& data)
{
    std::vector<std::uint8_t> out = {'R', 'I', 'F', 'F', 0, 0, 0, 0, 'W', 'A', 'V', 'E', 'f', 'm', 't', ' '};
    const auto u32 = [&out](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    u32(static_cast<std::uint32_t>(fmt.size()));
    out.insert(out.end(), fmt.begin(), fmt.end());
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    u32(static_cast<std::uint32_t>(data.size()));
    out.insert(out.end(), data.begin(), data.end());
    return out;
}

std::vector<std::uint8_t> pcm_fmt(std::uint16_t format, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits)
{
    const std::uint32_t block = channels * bits / 8;
    const std::uint32_t byte_rate = rate * block;
    return {static_cast<std::uint8_t>(format), static_cast<std::uint8_t>(format >> 8),
            static_cast<std::uint8_t>(channels), 0,
            static_cast<std::uint8_t>(rate), static_cast<std::uint8_t>(rate >> 8), static_cast<std::uint8_t>(rate >> 16), 0,
            static_cast<std::uint8_t>(byte_rate), static_cast<std::uint8_t>(byte_rate >> 8),
            static_cast<std::uint8_t>(byte_rate >> 16), static_cast<std::uint8_t>(byte_rate >> 24),
            static_cast<std::uint8_t>(block), 0, static_cast<std::uint8_t>(bits), 0};
}

} // namespace

TEST_CASE("stereo float file is averaged sample-wise")
{
    const auto path = temp_path("stereo.wav");
    write_wav(path, {{1.0, 0.0}, {0.0, 1.0}}, 44100, WavEncoding::float32);
    const AudioClip clip = load_audio(path);
    CHECK(clip.sample_rate == 44100);
    REQUIRE(clip.samples.size() == 2);
    CHECK(clip.samples[0] == 0.5);
    CHECK(clip.samples[1] == 0.5);
    CHECK(clip.source_id == "stereo");
}

TEST_CASE("16-bit integers are scaled by 2^15")
{
    const std::vector<std::uint8_t> data = {0xFF, 0x7F, 0x00, 0x80, 0x00, 0x00};
    const AudioClip clip = decode_wav(riff(pcm_fmt(1, 1, 22050, 16), data), "pcm16");
    REQUIRE(clip.samples.size() == 3);
    CHECK(clip.samples[0] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-12));
    CHECK(clip.samples[1] == -1.0);
    CHECK(clip.samples[2] == 0.0);
}

TEST_CASE("8-bit unsigned and 24-bit signed samples decode with the 2^(N-1) convention")
{
    const AudioClip u8 = decode_wav(riff(pcm_fmt(1, 1, 8000, 8), {0, 128, 255}), "u8");
    CHECK(u8.samples[0] == -1.0);
    CHECK(u8.samples[1] == 0.0);
    CHECK(u8.samples[2] == doctest::Approx(127.0 / 128.0));

    const AudioClip s24 = decode_wav(riff(pcm_fmt(1, 1, 8000, 24), {0xFF, 0xFF, 0x7F, 0x00, 0x00, 0x80}), "s24");
    CHECK(s24.samples[0] == doctest::Approx(8388607.0 / 8388608.0).epsilon(1e-12));
    CHECK(s24.samples[1] == -1.0);
}

TEST_CASE("a three second 44.1 kHz mono file keeps its rate and length")
{
    const auto path = temp_path("three_seconds.wav");
    write_wav(path, {std::vector<double>(3 * 44100, 0.25)}, 44100);
    const AudioClip clip = load_audio(path);
    CHECK(clip.sample_rate == 44100);
    CHECK(clip.samples.size() == 132300);
}

TEST_CASE("load errors are distinguishable")
{
    CHECK(error_kind_of([] { load_audio(temp_path("does_not_exist.wav")); }) == ErrorKind::io);

    const std::vector<std::uint8_t> junk = {'O', 'g', 'g', 'S', 0, 0, 0, 0, 0, 0, 0, 0};
    CHECK(error_kind_of([&] { decode_wav(junk, "junk"); }) == ErrorKind::unsupported_format);

    CHECK(error_kind_of([] { decode_wav(riff(pcm_fmt(1, 1, 8000, 16), {}), "empty"); }) == ErrorKind::empty_input);
    CHECK(error_kind_of([] { decode_wav(riff(pcm_fmt(1, 3, 8000, 16), {0, 0, 0, 0, 0, 0}), "3ch"); }) ==
          ErrorKind::unsupported_format);
    // mu-law
    CHECK(error_kind_of([] { decode_wav(riff(pcm_fmt(7, 1, 8000, 8), {1, 2}), "ulaw"); }) ==
          ErrorKind::unsupported_format);

    auto truncated = riff(pcm_fmt(1, 1, 8000, 16), {1, 2, 3, 4});
    truncated.resize(truncated.size() - 2);
    CHECK(error_kind_of([&] { decode_wav(truncated, "truncated"); }) == ErrorKind::io);
}

TEST_CASE("downmix is linear in the input gain")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    std::vector<double> left(257), right(257);
    for (std::size_t i = 0; i < left.size(); ++i) {
        left[i] = amp(rng);
        right[i] = amp(rng);
    }
    const auto base = decode_wav(encode_wav({left, right}, 22050, WavEncoding::float32), "base");
    for (double alpha : {0.5, 0.25, 0.125}) {
        std::vector<double> l2(left), r2(right);
        for (auto& v : l2) v *= alpha;
        for (auto& v : r2) v *= alpha;
        const auto scaled = decode_wav(encode_wav({l2, r2}, 22050, WavEncoding::float32), "scaled");
        for (std::size_t i = 0; i < left.size(); ++i) CHECK(scaled.samples[i] == doctest::Approx(alpha * base.samples[i]));
    }
}

TEST_CASE("resample length and identity")
{
    AudioClip clip{std::vector<double>(44100, 0.1), 44100, "x"};
    const AudioClip half = resample(clip, 22050);
    CHECK(half.sample_rate == 22050);
    CHECK(half.samples.size() == 22050);

    AudioClip native{std::vector<double>{0.1, -0.2, 0.3}, 22050, "y"};
    const AudioClip same = resample(native, 22050);
    CHECK(same.samples == native.samples);

    AudioClip odd{std::vector<double>(1001, 0.0), 48000, "z"};
    CHECK(resample(odd, 22050).samples.size() == static_cast<std::size_t>(std::llround(1001.0 * 22050 / 48000)));
}

TEST_CASE("resampling keeps a 1 kHz sine at 1 kHz with under 1% sideband energy")
{
    // 0.2 s at 44.1 kHz holds exactly 200 periods, so both DFTs are leakage free.
    const int n = 8820;
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.resize(n);
    for (int i = 0; i < n; ++i) clip.samples[static_cast<std::size_t>(i)] = 0.5 * std::sin(2 * std::numbers::pi * 1000.0 * i / 44100.0);

    const auto in_power = dft_power(clip.samples);
    const auto in_peak = std::max_element(in_power.begin(), in_power.end()) - in_power.begin();
    CHECK(static_cast<double>(in_peak) * 44100.0 / n == doctest::Approx(1000.0));

    const AudioClip out = resample(clip, 22050);
    REQUIRE(out.samples.size() == 4410);
    const auto power = dft_power(out.samples);
    const auto peak = std::max_element(power.begin(), power.end()) - power.begin();
    CHECK(static_cast<double>(peak) * 22050.0 / 4410 == doctest::Approx(1000.0));

    double total = 0.0;
    for (double p : power) total += p;
    const double main_lobe = power[static_cast<std::size_t>(peak)];
    CHECK((total - main_lobe) / total < 0.01);
}

TEST_CASE("resampling a constant signal yields the same constant")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> level(-1.0, 1.0);
    for (int source : {8000, 16000, 32000, 44100, 48000, 96000}) {
        const double c = level(rng);
        AudioClip clip{std::vector<double>(3000, c), source, "dc"};
        const AudioClip out = resample(clip, kPipelineRate);
        for (double v : out.samples) CHECK(std::abs(v - c) < 1e-3);
    }
}

TEST_CASE("frame_stream counts, offsets and the short-clip error")
{
    FrameWindow rect{kFrameLength, kHopLength, WindowKind::rectangular};
    AudioClip ramp;
    ramp.sample_rate = kPipelineRate;
    ramp.samples.resize(4096);
    for (std::size_t i = 0; i < ramp.samples.size(); ++i) ramp.samples[i] = static_cast<double>(i);

    const auto frames = frame_stream(ramp, rect);
    REQUIRE(frames.size() == 3);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        CHECK(frames[t].size() == 2048);
        CHECK(frames[t][0] == static_cast<double>(t * 1024));
    }

    ramp.samples.resize(2048);
    CHECK(frame_stream(ramp, rect).size() == 1);

    ramp.samples.resize(2047);
    CHECK_THROWS_AS(frame_stream(ramp, rect), Error);

    ramp.samples.resize(10000);
    CHECK(frame_stream(ramp, rect).size() == (10000 - 2048) / 1024 + 1);
}

TEST_CASE("successive frames start exactly one hop apart")
{
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> len(2048, 20000);
    FrameWindow rect{kFrameLength, kHopLength, WindowKind::rectangular};
    for (int trial = 0; trial < 20; ++trial) {
        AudioClip clip;
        clip.sample_rate = kPipelineRate;
        clip.samples.resize(static_cast<std::size_t>(len(rng)));
        for (std::size_t i = 0; i < clip.samples.size(); ++i) clip.samples[i] = static_cast<double>(i);
        const auto frames = frame_stream(clip, rect);
        for (std::size_t t = 1; t < frames.size(); ++t) CHECK(frames[t][0] - frames[t - 1][0] == 1024.0);
    }
}

TEST_CASE("window must overlap by half")
{
    CHECK_THROWS_AS((FrameWindow{2048, 512, WindowKind::hann}.validate()), Error);
    const auto hann = make_window(WindowKind::hann, 2048);
    CHECK(hann.front() == doctest::Approx(0.0));
    CHECK(hann.back() == doctest::Approx(0.0));
    for (std::size_t i = 0; i < hann.size(); ++i) CHECK(hann[i] == doctest::Approx(hann[hann.size() - 1 - i]));
}
