#ifndef MIRENC_INGEST_HPP
#define MIRENC_INGEST_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mirenc {

inline constexpr int kPipelineRate = 22050;
inline constexpr int kFrameLength = 2048;
inline constexpr int kHopLength = 1024;

/// Single-channel audio with amplitudes nominally in [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;
    std::string source_id;
};

enum class WindowKind { hann, rectangular };

struct FrameWindow {
    int frame_length = kFrameLength;
    int hop = kHopLength;
    WindowKind window_kind = WindowKind::hann;

    /// Throws unless hop is exactly half the frame length.
    void validate() const;
};

/// Reads a RIFF/WAVE file holding 8/16/24/32-bit integer PCM or 32-bit
/// float samples with one or two channels. Stereo is averaged to mono and
/// N-bit integers are scaled by 2^(N-1). The clip keeps its original rate.
///
/// Errors: ErrorKind::io when the file cannot be opened or is truncated,
/// ErrorKind::unsupported_format for other codecs/layouts, and
/// ErrorKind::empty_input when the data chunk holds no frames.
AudioClip load_audio(const std::filesystem::path& path);

/// Same decoder over an in-memory RIFF image.
AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id);

enum class WavEncoding { pcm16, float32 };

/// Encodes interleaved channel data as a canonical 44-byte-header WAV.
std::vector<std::uint8_t> encode_wav(const std::vector<std::vector<double>>& channels,
                                     int sample_rate, WavEncoding encoding = WavEncoding::pcm16);

void write_wav(const std::filesystem::path& path,
               const std::vector<std::vector<double>>& channels, int sample_rate,
               WavEncoding encoding = WavEncoding::pcm16);

/// Band-limited rational resampling (64-tap Kaiser-windowed sinc, polyphase).
/// Output length is round(n * target / source). Clips already at the target
/// rate are returned unchanged.
AudioClip resample(const AudioClip& clip, int target_rate);

/// Window coefficients of the given length; Hann is the symmetric variant.
std::vector<double> make_window(WindowKind kind, int length);

/// Splits a clip into floor((n - L) / hop) + 1 windowed frames. Frame t
/// starts at sample t * hop; any trailing partial frame is dropped.
std::vector<std::vector<double>> frame_stream(const AudioClip& clip, const FrameWindow& win);

/// load_audio + resample to the pipeline rate.
AudioClip ingest_file(const std::filesystem::path& path);

} // namespace mirenc

#endif
