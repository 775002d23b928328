#include "mirenc/ingest.hpp"

#include "mirenc/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

namespace mirenc {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t read_u32(const std::uint8_t* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag)
{
    out.insert(out.end(), tag, tag + 4);
}

double decode_sample(const std::uint8_t* p, std::uint16_t format, int bits)
{
    if (format == kFormatFloat) {
        float f;
        std::uint32_t raw = read_u32(p);
        std::memcpy(&f, &raw, sizeof f);
        return static_cast<double>(f);
    }
    switch (bits) {
    case 8:
        return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
        return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
        std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (v & 0x800000) v -= 0x1000000;
        return v / 8388608.0;
    }
    case 32:
        return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
    default:
        fail(ErrorKind::unsupported_format, "unsupported PCM bit depth " + std::to_string(bits));
    }
}

// Zeroth-order modified Bessel function of the first kind (power series).
double bessel_i0(double x)
{
    double sum = 1.0, term = 1.0;
    const double half_sq = 0.25 * x * x;
    for (int k = 1; k < 64; ++k) {
        term *= half_sq / (static_cast<double>(k) * k);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

constexpr int kResampleTaps = 64;
constexpr double kKaiserBeta = 8.6;
constexpr double kRolloff = 0.95;

} // namespace

void FrameWindow::validate() const
{
    require(frame_length > 0 && hop > 0, "frame length and hop must be positive");
    require(frame_length == 2 * hop, "frames must overlap by exactly half (hop == frame_length / 2)");
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id)
{
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        fail(ErrorKind::unsupported_format, source_id + ": not a RIFF/WAVE file");
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    const std::uint8_t* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        const std::uint32_t size = read_u32(chunk + 4);
        const std::size_t body = pos + 8;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16 || body + size > bytes.size())
                fail(ErrorKind::io, source_id + ": truncated fmt chunk");
            const std::uint8_t* f = bytes.data() + body;
            format = read_u16(f);
            channels = read_u16(f + 2);
            rate = read_u32(f + 4);
            bits = read_u16(f + 14);
            if (format == kFormatExtensible) {
                if (size < 26) fail(ErrorKind::unsupported_format, source_id + ": short extensible fmt");
                format = read_u16(f + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt) fail(ErrorKind::unsupported_format, source_id + ": data chunk before fmt");
            if (body + size > bytes.size()) fail(ErrorKind::io, source_id + ": truncated data chunk");
            data = bytes.data() + body;
            data_size = size;
            break;
        }
        pos = body + size + (size & 1u);
    }

    if (!have_fmt) fail(ErrorKind::unsupported_format, source_id + ": missing fmt chunk");
    if (data == nullptr) fail(ErrorKind::unsupported_format, source_id + ": missing data chunk");
    if (format != kFormatPcm && format != kFormatFloat)
        fail(ErrorKind::unsupported_format, source_id + ": codec " + std::to_string(format) + " not supported");
    if (format == kFormatFloat && bits != 32)
        fail(ErrorKind::unsupported_format, source_id + ": only 32-bit float is supported");
    if (format == kFormatPcm && bits != 8 && bits != 16 && bits != 24 && bits != 32)
        fail(ErrorKind::unsupported_format, source_id + ": unsupported bit depth " + std::to_string(bits));
    if (channels < 1 || channels > 2)
        fail(ErrorKind::unsupported_format, source_id + ": " + std::to_string(channels) + " channels not supported");
    if (rate == 0) fail(ErrorKind::unsupported_format, source_id + ": zero sample rate");

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t n = data_size / frame_bytes;
    if (n == 0) fail(ErrorKind::empty_input, source_id + ": no audio frames");

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.source_id = std::move(source_id);
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = data + i * frame_bytes;
        if (channels == 1) {
            clip.samples[i] = decode_sample(p, format, bits);
        } else {
            const double left = decode_sample(p, format, bits);
            const double right = decode_sample(p + bytes_per_sample, format, bits);
            clip.samples[i] = 0.5 * (left + right);
        }
    }
    return clip;
}

AudioClip load_audio(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::io, "read error on " + path.string());
    return decode_wav(bytes, path.stem().string());
}

std::vector<std::uint8_t> encode_wav(const std::vector<std::vector<double>>& channels,
                                     int sample_rate, WavEncoding encoding)
{
    require(!channels.empty() && channels.size() <= 2, "encode_wav: 1 or 2 channels required");
    require(sample_rate > 0, "encode_wav: sample rate must be positive");
    const std::size_t n = channels.front().size();
    for (const auto& ch : channels) require(ch.size() == n, "encode_wav: channel lengths differ");

    const std::uint16_t nch = static_cast<std::uint16_t>(channels.size());
    const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
    const std::uint32_t block = nch * bits / 8;
    const std::uint32_t data_size = static_cast<std::uint32_t>(n * block);

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_size);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
    put_u16(out, nch);
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate) * block);
    put_u16(out, static_cast<std::uint16_t>(block));
    put_u16(out, bits);
    put_tag(out, "data");
    put_u32(out, data_size);

    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& ch : channels) {
            if (encoding == WavEncoding::pcm16) {
                const double scaled = std::round(ch[i] * 32768.0);
                const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
                put_u16(out, static_cast<std::uint16_t>(v));
            } else {
                const float f = static_cast<float>(ch[i]);
                std::uint32_t raw;
                std::memcpy(&raw, &f, sizeof raw);
                put_u32(out, raw);
            }
        }
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const std::vector<std::vector<double>>& channels,
               int sample_rate, WavEncoding encoding)
{
    const auto bytes = encode_wav(channels, sample_rate, encoding);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate)
{
    require(!clip.samples.empty(), "resample: empty clip");
    require(clip.sample_rate > 0 && target_rate > 0, "resample: rates must be positive");
    if (clip.sample_rate == target_rate) return clip;

    const long long g = std::gcd(clip.sample_rate, target_rate);
    const long long up = target_rate / g;
    const long long down = clip.sample_rate / g;
    const long long n_in = static_cast<long long>(clip.samples.size());
    const long long n_out = (2 * n_in * up + down) / (2 * down);

    // Cutoff relative to the input Nyquist frequency.
    const double cutoff = kRolloff * std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
    constexpr int half = kResampleTaps / 2;
    const double i0_beta = bessel_i0(kKaiserBeta);

    // One row of taps per output phase; each row sums to one so DC passes unchanged.
    std::vector<double> table(static_cast<std::size_t>(up) * kResampleTaps);
    for (long long phase = 0; phase < up; ++phase) {
        const double frac = static_cast<double>(phase) / static_cast<double>(up);
        double* row = table.data() + phase * kResampleTaps;
        double sum = 0.0;
        for (int j = 0; j < kResampleTaps; ++j) {
            const double t = static_cast<double>(j - half + 1) - frac;
            const double x = cutoff * t;
            const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
            const double r = t / half;
            const double kaiser = std::abs(r) >= 1.0 ? 0.0 : bessel_i0(kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
            row[j] = cutoff * sinc * kaiser;
            sum += row[j];
        }
        for (int j = 0; j < kResampleTaps; ++j) row[j] /= sum;
    }

    AudioClip out;
    out.sample_rate = target_rate;
    out.source_id = clip.source_id;
    out.samples.resize(static_cast<std::size_t>(n_out));
    for (long long n = 0; n < n_out; ++n) {
        const long long num = n * down;
        const long long base = num / up;
        const long long phase = num % up;
        const double* row = table.data() + phase * kResampleTaps;
        double acc = 0.0;
        for (int j = 0; j < kResampleTaps; ++j) {
            const long long idx = std::clamp(base + j - half + 1, 0LL, n_in - 1);
            acc += row[j] * clip.samples[static_cast<std::size_t>(idx)];
        }
        out.samples[static_cast<std::size_t>(n)] = acc;
    }
    return out;
}

std::vector<double> make_window(WindowKind kind, int length)
{
    require(length > 0, "window length must be positive");
    std::vector<double> w(static_cast<std::size_t>(length), 1.0);
    if (kind == WindowKind::hann && length > 1) {
        for (int i = 0; i < length; ++i)
            w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (length - 1));
    }
    return w;
}

std::vector<std::vector<double>> frame_stream(const AudioClip& clip, const FrameWindow& win)
{
    win.validate();
    const std::size_t len = clip.samples.size();
    const auto frame_len = static_cast<std::size_t>(win.frame_length);
    const auto hop = static_cast<std::size_t>(win.hop);
    if (len < frame_len)
        fail(ErrorKind::insufficient_data, clip.source_id + ": clip shorter than one frame (" +
                                               std::to_string(len) + " < " + std::to_string(frame_len) + ")");

    const std::vector<double> window = make_window(win.window_kind, win.frame_length);
    const std::size_t count = (len - frame_len) / hop + 1;
    std::vector<std::vector<double>> frames(count, std::vector<double>(frame_len));
    for (std::size_t t = 0; t < count; ++t) {
        const double* src = clip.samples.data() + t * hop;
        for (std::size_t i = 0; i < frame_len; ++i) frames[t][i] = src[i] * window[i];
    }
    return frames;
}

AudioClip ingest_file(const std::filesystem::path& path)
{
    return resample(load_audio(path), kPipelineRate);
}

} // namespace mirenc
