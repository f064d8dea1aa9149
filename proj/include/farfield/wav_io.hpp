#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "farfield/error.hpp"
#include "farfield/wave.hpp"

namespace farfield {

enum class WavEncoding { int16, float32 };

enum class WavDefect { malformed_header, unsupported_encoding, truncated_data };

inline const char* to_string(WavDefect d) {
    switch (d) {
        case WavDefect::malformed_header: return "malformed header";
        case WavDefect::unsupported_encoding: return "unsupported encoding";
        case WavDefect::truncated_data: return "truncated data";
    }
    return "?";
}

class WavError : public FormatError {
public:
    WavError(WavDefect defect, const std::string& detail)
        : FormatError(std::string("wav: ") + to_string(defect) + ": " + detail), defect_(defect) {}
    WavDefect defect() const noexcept { return defect_; }

private:
    WavDefect defect_;
};

struct WavWriteReport {
    /// Samples outside [-1, 1] that were saturated by the int16 encoder.
    std::size_t clamped = 0;
};

namespace detail {

inline std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
    return std::memcmp(b.data() + at, tag, 4) == 0;
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

/// Parses a RIFF/WAVE image held in memory.
inline MultichannelWave decode_wav(std::span<const std::uint8_t> bytes) {
    using namespace detail;
    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE"))
        throw WavError(WavDefect::malformed_header, "missing RIFF/WAVE signature");
    const std::size_t riff_end = static_cast<std::size_t>(read_u32(bytes, 4)) + 8;

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
    std::uint32_t rate = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::size_t size = read_u32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        if (tag_is(bytes, pos, "fmt ")) {
            if (size < 16 || body + size > bytes.size())
                throw WavError(WavDefect::malformed_header, "fmt chunk too short");
            format = read_u16(bytes, body);
            channels = read_u16(bytes, body + 2);
            rate = read_u32(bytes, body + 4);
            block_align = read_u16(bytes, body + 12);
            bits = read_u16(bytes, body + 14);
            if (format == kFormatExtensible) {
                if (size < 40) throw WavError(WavDefect::malformed_header, "extensible fmt chunk too short");
                format = read_u16(bytes, body + 24);
            }
            have_fmt = true;
        } else if (tag_is(bytes, pos, "data")) {
            if (!have_fmt) throw WavError(WavDefect::malformed_header, "data chunk before fmt chunk");
            const bool pcm16 = format == kFormatPcm && bits == 16;
            const bool f32 = format == kFormatFloat && bits == 32;
            if (!pcm16 && !f32)
                throw WavError(WavDefect::unsupported_encoding,
                               "format tag " + std::to_string(format) + " with " + std::to_string(bits) +
                                   " bits per sample");
            if (channels == 0 || rate == 0)
                throw WavError(WavDefect::malformed_header, "zero channels or zero sample rate");
            const std::size_t width = bits / 8;
            if (block_align != channels * width)
                throw WavError(WavDefect::malformed_header, "block align does not match channel layout");
            if (body + size > bytes.size())
                throw WavError(WavDefect::truncated_data, "data chunk declares " + std::to_string(size) +
                                                              " bytes but only " +
                                                              std::to_string(bytes.size() - body) + " remain");
            if (body + size > riff_end)
                throw WavError(WavDefect::truncated_data, "RIFF size ends before the data chunk does");
            if (size % block_align != 0)
                throw WavError(WavDefect::truncated_data, "data size is not a whole number of frames");

            const std::size_t frames = size / block_align;
            MultichannelWave w;
            w.sample_rate = static_cast<int>(rate);
            w.channels.assign(channels, std::vector<double>(frames));
            for (std::size_t n = 0; n < frames; ++n) {
                for (std::size_t c = 0; c < channels; ++c) {
                    const std::size_t at = body + n * block_align + c * width;
                    double v;
                    if (pcm16) {
                        v = static_cast<std::int16_t>(read_u16(bytes, at)) / 32768.0;
                    } else {
                        const std::uint32_t raw = read_u32(bytes, at);
                        float f;
                        std::memcpy(&f, &raw, sizeof f);
                        v = f;
                    }
                    if (!std::isfinite(v))
                        throw WavError(WavDefect::unsupported_encoding, "non-finite float sample");
                    w.channels[c][n] = v;
                }
            }
            return w;
        }
        pos = body + size + (size & 1);
    }
    throw WavError(WavDefect::malformed_header, have_fmt ? "no data chunk" : "no fmt chunk");
}

inline MultichannelWave read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

/// Serializes interleaved PCM. report, when given, receives the int16
/// clamp count.
inline std::vector<std::uint8_t> encode_wav(const MultichannelWave& wave, WavEncoding enc,
                                            WavWriteReport* report = nullptr) {
    using namespace detail;
    wave.validate();
    const std::size_t C = wave.num_channels();
    const std::size_t N = wave.num_samples();
    const std::size_t width = enc == WavEncoding::int16 ? 2 : 4;
    const std::size_t data_size = N * C * width;
    const std::size_t fmt_size = enc == WavEncoding::int16 ? 16 : 18;

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, static_cast<std::uint32_t>(4 + 8 + fmt_size + 8 + data_size));
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(out, static_cast<std::uint32_t>(fmt_size));
    put_u16(out, enc == WavEncoding::int16 ? kFormatPcm : kFormatFloat);
    put_u16(out, static_cast<std::uint16_t>(C));
    put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(wave.sample_rate * C * width));
    put_u16(out, static_cast<std::uint16_t>(C * width));
    put_u16(out, static_cast<std::uint16_t>(8 * width));
    if (fmt_size == 18) put_u16(out, 0);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, static_cast<std::uint32_t>(data_size));

    std::size_t clamped = 0;
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const double v = wave.channels[c][n];
            if (enc == WavEncoding::int16) {
                if (v > 1.0 || v < -1.0) ++clamped;
                const double scaled = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
                put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
            } else {
                const float f = static_cast<float>(v);
                std::uint32_t raw;
                std::memcpy(&raw, &f, sizeof raw);
                put_u32(out, raw);
            }
        }
    }
    if (report) report->clamped = clamped;
    return out;
}

inline WavWriteReport write_wav(const MultichannelWave& wave, const std::string& path, WavEncoding enc) {
    WavWriteReport report;
    const auto bytes = encode_wav(wave, enc, &report);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
    return report;
}

}  // namespace farfield
