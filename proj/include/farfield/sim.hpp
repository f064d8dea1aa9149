#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "farfield/dsp_util.hpp"
#include "farfield/error.hpp"
#include "farfield/segments.hpp"
#include "farfield/wav_io.hpp"
#include "farfield/wave.hpp"

namespace farfield {

inline constexpr double kSpeedOfSound = 343.0;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
    bool operator==(const Vec3&) const = default;
};

inline double distance(const Vec3& a, const Vec3& b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

enum class SourceKind { speech, sinusoid, file };

struct SourceSpec {
    /// Speaker id used by the schedule.
    std::string name;
    Vec3 position;
    SourceKind kind = SourceKind::speech;
    double gain_db = 0.0;
    double frequency_hz = 440.0;
    std::string path;
};

struct RoomSpec {
    bool reverberant = false;
    /// Time for the tail to decay by 60 dB.
    double decay_s = 0.5;
};

struct SceneSpec {
    std::string session = "sim";
    double duration_s = 10.0;
    std::uint64_t seed = 0;
    RoomSpec room;
    std::vector<Vec3> mics;
    std::vector<SourceSpec> sources;
    /// Activity of each named source. A source without entries plays for
    /// the whole scene and is absent from the ground truth.
    SegmentList schedule;
    /// Spatially uncorrelated noise level, dB relative to a unit-RMS source.
    std::optional<double> noise_db;
    /// Extra per-mic sensor noise, dB; empty or one per mic.
    std::vector<std::optional<double>> mic_noise_db;
    /// Per-mic start offsets in samples (positive = channel delayed).
    std::vector<long> mic_offsets;
};

/// A scene JSON field failed validation; pointer() is its JSON pointer.
class SceneSpecError : public FormatError {
public:
    SceneSpecError(std::string pointer, const std::string& what)
        : FormatError(pointer + ": " + what), pointer_(std::move(pointer)) {}
    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

struct RenderResult {
    MultichannelWave mixture;
    /// Per-source images at every mic, in source order.
    std::vector<MultichannelWave> images;
    MultichannelWave noise;
    SegmentList truth;
};

namespace detail {

/// splitmix64 stream; identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double normal() {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
    std::optional<double> spare_;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    Rng r(seed ^ (a * 0x9E3779B97F4A7C15ull) ^ (b * 0xD1B54A32D192ED03ull));
    r.next();
    return r.next();
}

inline void normalize_rms(std::vector<double>& x) {
    double e = 0.0;
    for (double v : x) e += v * v;
    if (e <= 0.0) return;
    const double g = 1.0 / std::sqrt(e / static_cast<double>(x.size()));
    for (double& v : x) v *= g;
}

/// Pink noise (Kellet filter on white Gaussian noise) under a syllabic
/// ~4 Hz envelope with random per-syllable amplitude. Unit RMS.
inline std::vector<double> speech_like(std::size_t n, int rate, Rng& rng) {
    std::vector<double> x(n);
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = rng.normal();
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        x[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
    }
    std::size_t pos = 0;
    while (pos < n) {
        const double period_s = 0.25 * (0.7 + 0.6 * rng.uniform());
        const auto len = std::max<std::size_t>(1, static_cast<std::size_t>(period_s * rate));
        const double amp = 0.3 + 0.7 * rng.uniform();
        for (std::size_t i = 0; i < len && pos + i < n; ++i) {
            const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / len);
            x[pos + i] *= 0.05 + amp * hann;
        }
        pos += len;
    }
    normalize_rms(x);
    return x;
}

/// 0/1 gate following the source's schedule with 5 ms raised-cosine edges
/// placed inside each segment.
inline std::vector<double> schedule_gate(const SegmentList& sched, const std::string& name, std::size_t n, int rate) {
    const auto mine = sched.for_speaker(name);
    if (mine.empty()) return std::vector<double>(n, 1.0);
    std::vector<double> g(n, 0.0);
    const double ramp = 0.005 * rate;
    for (const auto& s : mine.entries) {
        const auto a = static_cast<std::size_t>(std::clamp(std::ceil(s.onset * rate), 0.0, static_cast<double>(n)));
        const auto b = static_cast<std::size_t>(std::clamp(std::ceil(s.end() * rate), 0.0, static_cast<double>(n)));
        for (std::size_t i = a; i < b; ++i) {
            const double d = std::min(static_cast<double>(i - a), static_cast<double>(b - 1 - i));
            const double v = d >= ramp ? 1.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * d / ramp);
            g[i] = std::max(g[i], v);
        }
    }
    return g;
}

/// Sparse +-1 pulses (about 2000 per second) under an exponential decay
/// reaching -60 dB at decay_s; unit energy.
inline std::vector<double> velvet_tail(double decay_s, int rate, Rng& rng) {
    const auto len = static_cast<std::size_t>(decay_s * rate);
    std::vector<double> h(len, 0.0);
    const double spacing = rate / 2000.0;
    for (double p = 0.0; p < static_cast<double>(len); p += spacing) {
        const auto i = static_cast<std::size_t>(p + rng.uniform() * spacing);
        if (i >= len) break;
        const double t = static_cast<double>(i) / rate;
        h[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * std::exp(-6.907755278982137 * t / decay_s);
    }
    double e = 0.0;
    for (double v : h) e += v * v;
    if (e > 0.0)
        for (double& v : h) v /= std::sqrt(e);
    return h;
}

}  // namespace detail

/// Renders a scene: propagation delay at 343 m/s, 1/r attenuation, an
/// optional reverberant tail, uncorrelated noise and per-mic start offsets.
/// The same spec and seed always give bitwise-identical output.
inline RenderResult render(const SceneSpec& spec, int sample_rate) {
    require(sample_rate > 0, "sample rate must be positive");
    if (spec.mics.empty()) throw SceneSpecError("/mics", "need at least one microphone");
    if (spec.sources.empty()) throw SceneSpecError("/sources", "need at least one source");
    if (!(spec.duration_s > 0.0)) throw SceneSpecError("/duration_s", "duration must be positive");
    if (!spec.mic_offsets.empty() && spec.mic_offsets.size() != spec.mics.size())
        throw SceneSpecError("/mic_offsets", "need one offset per mic");
    if (!spec.mic_noise_db.empty() && spec.mic_noise_db.size() != spec.mics.size())
        throw SceneSpecError("/mic_noise_db", "need one level per mic");
    std::set<std::string> names;
    for (std::size_t s = 0; s < spec.sources.size(); ++s) {
        if (spec.sources[s].name.empty() || !names.insert(spec.sources[s].name).second)
            throw SceneSpecError("/sources/" + std::to_string(s) + "/name", "source names must be unique and non-empty");
        for (std::size_t m = 0; m < spec.mics.size(); ++m)
            if (distance(spec.sources[s].position, spec.mics[m]) < 1e-3)
                throw SceneSpecError("/sources/" + std::to_string(s) + "/position",
                                     "source coincides with mic " + std::to_string(m));
    }
    for (std::size_t i = 0; i < spec.schedule.entries.size(); ++i) {
        const auto& e = spec.schedule.entries[i];
        const std::string ptr = "/schedule/" + std::to_string(i);
        if (!names.count(e.speaker)) throw SceneSpecError(ptr + "/speaker", "unknown source '" + e.speaker + "'");
        if (e.onset < 0.0 || !(e.duration > 0.0) || e.end() > spec.duration_s + 1e-9)
            throw SceneSpecError(ptr, "segment must lie within the scene duration");
    }

    const auto N = static_cast<std::size_t>(std::llround(spec.duration_s * sample_rate));
    const std::size_t M = spec.mics.size();
    RenderResult out;
    out.truth = spec.schedule;
    for (auto& e : out.truth.entries) e.session = spec.session;
    out.truth.sort();

    for (std::size_t s = 0; s < spec.sources.size(); ++s) {
        const auto& src = spec.sources[s];
        detail::Rng rng(detail::mix_seed(spec.seed, s + 1));
        std::vector<double> dry;
        switch (src.kind) {
            case SourceKind::speech: dry = detail::speech_like(N, sample_rate, rng); break;
            case SourceKind::sinusoid: {
                dry.resize(N);
                const double phase = 2.0 * std::numbers::pi * rng.uniform();
                for (std::size_t i = 0; i < N; ++i)
                    dry[i] = std::sqrt(2.0) *
                             std::sin(2.0 * std::numbers::pi * src.frequency_hz * static_cast<double>(i) / sample_rate +
                                      phase);
                break;
            }
            case SourceKind::file: {
                const auto w = read_wav(src.path);
                if (w.sample_rate != sample_rate)
                    throw SceneSpecError("/sources/" + std::to_string(s) + "/path",
                                         "file sample rate " + std::to_string(w.sample_rate) + " differs from " +
                                             std::to_string(sample_rate));
                dry.assign(N, 0.0);
                const auto& ch = w.channels.front();
                for (std::size_t i = 0; i < N && !ch.empty(); ++i) dry[i] = ch[i % ch.size()];
                detail::normalize_rms(dry);
                break;
            }
        }
        const double gain = std::pow(10.0, src.gain_db / 20.0);
        const auto gate = detail::schedule_gate(spec.schedule, src.name, N, sample_rate);
        for (std::size_t i = 0; i < N; ++i) dry[i] *= gain * gate[i];

        MultichannelWave image;
        image.sample_rate = sample_rate;
        for (std::size_t m = 0; m < M; ++m) {
            const double r = distance(src.position, spec.mics[m]);
            auto ch = fractional_delay(dry, r / kSpeedOfSound * sample_rate);
            for (double& v : ch) v /= r;
            if (spec.room.reverberant) {
                detail::Rng trng(detail::mix_seed(spec.seed, 1000 + s, m + 1));
                auto tail = detail::velvet_tail(spec.room.decay_s, sample_rate, trng);
                // tail starts 2.5 ms after the direct path
                std::vector<double> kernel(static_cast<std::size_t>(0.0025 * sample_rate), 0.0);
                kernel.insert(kernel.end(), tail.begin(), tail.end());
                const auto wet = fft_convolve(ch, kernel);
                for (std::size_t i = 0; i < N; ++i) ch[i] += wet[i];
            }
            image.channels.push_back(std::move(ch));
        }
        out.images.push_back(std::move(image));
    }

    out.noise.sample_rate = sample_rate;
    out.noise.channels.assign(M, std::vector<double>(N, 0.0));
    for (std::size_t m = 0; m < M; ++m) {
        detail::Rng nrng(detail::mix_seed(spec.seed, 0xA0000 + m));
        double level = 0.0;
        if (spec.noise_db) level += std::pow(10.0, *spec.noise_db / 10.0);
        if (!spec.mic_noise_db.empty() && spec.mic_noise_db[m]) level += std::pow(10.0, *spec.mic_noise_db[m] / 10.0);
        if (level <= 0.0) continue;
        const double amp = std::sqrt(level);
        for (double& v : out.noise.channels[m]) v = amp * nrng.normal();
    }

    if (!spec.mic_offsets.empty()) {
        auto shift = [&](std::vector<double>& ch, long off) {
            std::vector<double> y(ch.size(), 0.0);
            for (std::size_t i = 0; i < ch.size(); ++i) {
                const long src = static_cast<long>(i) - off;
                if (src >= 0 && src < static_cast<long>(ch.size())) y[i] = ch[static_cast<std::size_t>(src)];
            }
            ch = std::move(y);
        };
        for (std::size_t m = 0; m < M; ++m) {
            for (auto& img : out.images) shift(img.channels[m], spec.mic_offsets[m]);
            shift(out.noise.channels[m], spec.mic_offsets[m]);
        }
    }

    out.mixture.sample_rate = sample_rate;
    out.mixture.channels.assign(M, std::vector<double>(N, 0.0));
    for (std::size_t m = 0; m < M; ++m) {
        auto& mix = out.mixture.channels[m];
        for (const auto& img : out.images)
            for (std::size_t i = 0; i < N; ++i) mix[i] += img.channels[m][i];
        for (std::size_t i = 0; i < N; ++i) mix[i] += out.noise.channels[m][i];
    }
    return out;
}

/// Scale-invariant SNR in dB after mean removal, clamped to [-60, 60].
inline double si_snr(std::span<const double> estimate, std::span<const double> target) {
    require(estimate.size() == target.size(), "si_snr needs equal lengths");
    const double n = static_cast<double>(target.size());
    double me = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) me += estimate[i], mt += target[i];
    me /= n;
    mt /= n;
    double tt = 0.0, et = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        tt += (target[i] - mt) * (target[i] - mt);
        et += (estimate[i] - me) * (target[i] - mt);
    }
    if (!(tt > 0.0)) throw ProcessingError("si_snr undefined for a silent target");
    const double alpha = et / tt;
    double ps = 0.0, pr = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double proj = alpha * (target[i] - mt);
        const double res = (estimate[i] - me) - proj;
        ps += proj * proj;
        pr += res * res;
    }
    if (!(pr > 0.0)) return 60.0;
    if (!(ps > 0.0)) return -60.0;
    return std::clamp(10.0 * std::log10(ps / pr), -60.0, 60.0);
}

namespace detail {

inline Vec3 parse_vec3(const nlohmann::json& j, const std::string& ptr) {
    if (!j.is_array() || j.size() != 3) throw SceneSpecError(ptr, "expected [x, y, z]");
    Vec3 v;
    double* f[3] = {&v.x, &v.y, &v.z};
    for (std::size_t i = 0; i < 3; ++i) {
        if (!j[i].is_number()) throw SceneSpecError(ptr + "/" + std::to_string(i), "expected a number");
        *f[i] = j[i].get<double>();
    }
    return v;
}

inline void reject_unknown(const nlohmann::json& j, const std::string& ptr, std::initializer_list<const char*> keys) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys) known = known || it.key() == k;
        if (!known) throw SceneSpecError(ptr + "/" + it.key(), "unknown field");
    }
}

inline double number_at(const nlohmann::json& j, const char* key, const std::string& ptr) {
    if (!j.at(key).is_number()) throw SceneSpecError(ptr + "/" + key, "expected a number");
    return j.at(key).get<double>();
}

}  // namespace detail

/// Parses and validates a scene document. Errors carry the JSON pointer of
/// the offending field.
inline SceneSpec parse_scene_spec(const nlohmann::json& j) {
    if (!j.is_object()) throw SceneSpecError("", "scene spec must be a JSON object");
    detail::reject_unknown(j, "", {"session", "duration_s", "seed", "room", "mics", "sources", "schedule",
                                   "noise_db", "mic_noise_db", "mic_offsets"});
    SceneSpec s;
    if (j.contains("session")) {
        if (!j["session"].is_string() || j["session"].get<std::string>().empty())
            throw SceneSpecError("/session", "expected a non-empty string");
        s.session = j["session"].get<std::string>();
    }
    if (!j.contains("duration_s")) throw SceneSpecError("/duration_s", "required");
    s.duration_s = detail::number_at(j, "duration_s", "");
    if (!(s.duration_s > 0.0)) throw SceneSpecError("/duration_s", "must be positive");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer()) throw SceneSpecError("/seed", "expected an integer");
        s.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("room")) {
        const auto& r = j["room"];
        if (!r.is_object()) throw SceneSpecError("/room", "expected an object");
        detail::reject_unknown(r, "/room", {"type", "decay_s"});
        const std::string type = r.value("type", "anechoic");
        if (type == "reverb") {
            s.room.reverberant = true;
            if (r.contains("decay_s")) s.room.decay_s = detail::number_at(r, "decay_s", "/room");
            if (!(s.room.decay_s > 0.0)) throw SceneSpecError("/room/decay_s", "must be positive");
        } else if (type != "anechoic") {
            throw SceneSpecError("/room/type", "expected 'anechoic' or 'reverb'");
        }
    }
    if (!j.contains("mics") || !j["mics"].is_array() || j["mics"].empty())
        throw SceneSpecError("/mics", "need a non-empty array of positions");
    for (std::size_t i = 0; i < j["mics"].size(); ++i)
        s.mics.push_back(detail::parse_vec3(j["mics"][i], "/mics/" + std::to_string(i)));
    if (!j.contains("sources") || !j["sources"].is_array() || j["sources"].empty())
        throw SceneSpecError("/sources", "need a non-empty array of sources");
    for (std::size_t i = 0; i < j["sources"].size(); ++i) {
        const auto& js = j["sources"][i];
        const std::string ptr = "/sources/" + std::to_string(i);
        if (!js.is_object()) throw SceneSpecError(ptr, "expected an object");
        detail::reject_unknown(js, ptr, {"name", "position", "kind", "gain_db", "frequency_hz", "path"});
        SourceSpec src;
        if (!js.contains("name") || !js["name"].is_string()) throw SceneSpecError(ptr + "/name", "required string");
        src.name = js["name"].get<std::string>();
        if (!js.contains("position")) throw SceneSpecError(ptr + "/position", "required");
        src.position = detail::parse_vec3(js["position"], ptr + "/position");
        const std::string kind = js.value("kind", "speech");
        if (kind == "speech") src.kind = SourceKind::speech;
        else if (kind == "sinusoid") src.kind = SourceKind::sinusoid;
        else if (kind == "file") src.kind = SourceKind::file;
        else throw SceneSpecError(ptr + "/kind", "expected speech, sinusoid or file");
        if (js.contains("gain_db")) src.gain_db = detail::number_at(js, "gain_db", ptr);
        if (js.contains("frequency_hz")) src.frequency_hz = detail::number_at(js, "frequency_hz", ptr);
        if (src.kind == SourceKind::file) {
            if (!js.contains("path") || !js["path"].is_string()) throw SceneSpecError(ptr + "/path", "required for file sources");
            src.path = js["path"].get<std::string>();
        }
        s.sources.push_back(std::move(src));
    }
    if (j.contains("schedule")) {
        if (!j["schedule"].is_array()) throw SceneSpecError("/schedule", "expected an array");
        for (std::size_t i = 0; i < j["schedule"].size(); ++i) {
            const auto& e = j["schedule"][i];
            const std::string ptr = "/schedule/" + std::to_string(i);
            if (!e.is_object()) throw SceneSpecError(ptr, "expected an object");
            detail::reject_unknown(e, ptr, {"speaker", "onset", "duration"});
            if (!e.contains("speaker") || !e["speaker"].is_string()) throw SceneSpecError(ptr + "/speaker", "required string");
            if (!e.contains("onset")) throw SceneSpecError(ptr + "/onset", "required");
            if (!e.contains("duration")) throw SceneSpecError(ptr + "/duration", "required");
            s.schedule.entries.push_back(
                {s.session, e["speaker"].get<std::string>(), detail::number_at(e, "onset", ptr), detail::number_at(e, "duration", ptr)});
        }
        s.schedule.sort();
    }
    if (j.contains("noise_db") && !j["noise_db"].is_null()) s.noise_db = detail::number_at(j, "noise_db", "");
    if (j.contains("mic_noise_db")) {
        if (!j["mic_noise_db"].is_array()) throw SceneSpecError("/mic_noise_db", "expected an array");
        for (std::size_t i = 0; i < j["mic_noise_db"].size(); ++i) {
            const auto& v = j["mic_noise_db"][i];
            if (v.is_null()) s.mic_noise_db.emplace_back();
            else if (v.is_number()) s.mic_noise_db.emplace_back(v.get<double>());
            else throw SceneSpecError("/mic_noise_db/" + std::to_string(i), "expected a number or null");
        }
    }
    if (j.contains("mic_offsets")) {
        if (!j["mic_offsets"].is_array()) throw SceneSpecError("/mic_offsets", "expected an array");
        for (std::size_t i = 0; i < j["mic_offsets"].size(); ++i) {
            if (!j["mic_offsets"][i].is_number_integer())
                throw SceneSpecError("/mic_offsets/" + std::to_string(i), "expected an integer");
            s.mic_offsets.push_back(j["mic_offsets"][i].get<long>());
        }
    }
    return s;
}

}  // namespace farfield

namespace farfield {

/// Turn-taking schedule: speakers alternate with turns of 2-8 s separated
/// by pauses of 0.3-1.5 s; every fourth change overlaps by up to 0.3 s.
inline SegmentList random_conversation(const std::vector<std::string>& speakers, double duration_s,
                                       std::uint64_t seed, const std::string& session = "sim") {
    require(!speakers.empty(), "conversation needs at least one speaker");
    detail::Rng rng(detail::mix_seed(seed, 0xC0));
    SegmentList out;
    double t = 0.5 + rng.uniform();
    std::size_t who = 0, turn = 0;
    while (true) {
        const double len = 2.0 + 6.0 * rng.uniform();
        if (t + len > duration_s - 0.5) break;
        out.entries.push_back({session, speakers[who], t, len});
        double gap = 0.3 + 1.2 * rng.uniform();
        if (++turn % 4 == 0) gap = -0.3 * rng.uniform();
        t += len + gap;
        if (speakers.size() > 1) who = (who + 1 + static_cast<std::size_t>(rng.next() % (speakers.size() - 1))) % speakers.size();
    }
    out.sort();
    return out;
}

}  // namespace farfield
