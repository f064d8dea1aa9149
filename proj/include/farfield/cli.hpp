#pragma once

// Batch command line: one subcommand per processing stage, RTTM and WAV
// files between stages. run() is the whole program minus argv handling so it
// can be driven from tests.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "farfield/farfield.hpp"

namespace farfield::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 2;
inline constexpr int kExitProcessing = 3;
inline constexpr int kExitUsage = 64;

/// Bad flag values or config documents; maps to the usage exit code.
class UsageError : public Error {
public:
    using Error::Error;
};

struct PipelineConfig {
    StftConfig stft{};
    WavEncoding wav_encoding = WavEncoding::float32;

    int sync_reference = 0;
    double sync_max_lag_s = 2.0;

    SelectionPolicy policy = SelectionPolicy::ev_top_80pct;
    std::size_t group_size = 5;

    BeamformerKind beamformer = BeamformerKind::mvdr;
    double context_s = 15.0;
    std::size_t gss_iterations = 20;

    RectifyConfig rectify{};
    std::size_t stages = 2;

    double collar_s = 0.25;
    int sample_rate = 16000;

    /// I/O paths; empty means "not given".
    struct Paths {
        std::string in, out, rttm, ref, hyp, spec, out_prefix, out_dir, channels, lags, probs;
    } io;

    void validate() const {
        stft.validate();
        rectify.validate();
        require(sync_reference >= 0, "sync.reference must be >= 0");
        require(sync_max_lag_s > 0.0, "sync.max_lag_s must be positive");
        require(group_size >= 1, "select.group_size must be >= 1");
        require(context_s >= 0.0, "enhance.context_s must be >= 0");
        require(gss_iterations >= 1, "enhance.iterations must be >= 1");
        require(stages >= 1, "rectify.stages must be >= 1");
        require(collar_s >= 0.0, "score.collar must be >= 0");
        require(sample_rate > 0, "simulate.sample_rate must be positive");
    }
};

inline nlohmann::ordered_json to_json(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    j["stft"] = {{"window_length", c.stft.window_length},
                 {"hop", c.stft.hop},
                 {"fft_size", c.stft.fft_size},
                 {"window", to_string(c.stft.window)}};
    j["wav_encoding"] = c.wav_encoding == WavEncoding::float32 ? "float32" : "int16";
    j["sync"] = {{"reference", c.sync_reference}, {"max_lag_s", c.sync_max_lag_s}};
    j["select"] = {{"policy", to_string(c.policy)}, {"group_size", c.group_size}};
    j["enhance"] = {{"beamformer", to_string(c.beamformer)},
                    {"context_s", c.context_s},
                    {"iterations", c.gss_iterations}};
    const auto& r = c.rectify;
    j["rectify"] = {{"window_s", r.window_s},
                    {"shift_s", r.shift_s},
                    {"threshold", r.threshold},
                    {"median_frames", r.median_frames},
                    {"min_segment_s", r.min_segment_s},
                    {"min_gap_s", r.min_gap_s},
                    {"em_iterations", r.em_iterations},
                    {"activity_floor", r.activity_floor},
                    {"stages", c.stages}};
    j["score"] = {{"collar", c.collar_s}};
    j["simulate"] = {{"sample_rate", c.sample_rate}};
    j["io"] = {{"in", c.io.in},       {"out", c.io.out},
               {"rttm", c.io.rttm},   {"ref", c.io.ref},
               {"hyp", c.io.hyp},     {"spec", c.io.spec},
               {"out_prefix", c.io.out_prefix}, {"out_dir", c.io.out_dir},
               {"channels", c.io.channels}, {"lags", c.io.lags},
               {"probs", c.io.probs}};
    return j;
}

namespace detail {

/// Every key of `user` must exist in `defaults` with a value of the same
/// JSON kind; nested objects are checked recursively.
inline void check_keys(const nlohmann::json& user, const nlohmann::ordered_json& defaults, const std::string& ptr) {
    if (!user.is_object()) throw UsageError("config" + (ptr.empty() ? std::string() : " " + ptr) + ": expected an object");
    for (const auto& [key, value] : user.items()) {
        const std::string p = ptr + "/" + key;
        if (!defaults.contains(key)) throw UsageError("config: unknown key " + p);
        const auto& d = defaults.at(key);
        if (d.is_object()) {
            check_keys(value, d, p);
        } else if (d.is_number() != value.is_number() || d.is_string() != value.is_string()) {
            throw UsageError("config " + p + ": expected a " + (d.is_number() ? "number" : "string"));
        } else if (d.is_number_integer() && !value.is_number_integer()) {
            throw UsageError("config " + p + ": expected an integer");
        } else if (d.is_number_unsigned() && value.is_number_integer() && value.get<long long>() < 0) {
            throw UsageError("config " + p + ": must be >= 0");
        }
    }
}

inline PipelineConfig from_json(const nlohmann::ordered_json& j) {
    PipelineConfig c;
    const auto& s = j.at("stft");
    c.stft.window_length = s.at("window_length").get<std::size_t>();
    c.stft.hop = s.at("hop").get<std::size_t>();
    c.stft.fft_size = s.at("fft_size").get<std::size_t>();
    c.stft.window = window_from_string(s.at("window").get<std::string>());
    const auto enc = j.at("wav_encoding").get<std::string>();
    if (enc != "float32" && enc != "int16") throw UsageError("config /wav_encoding: expected float32 or int16");
    c.wav_encoding = enc == "int16" ? WavEncoding::int16 : WavEncoding::float32;
    c.sync_reference = j.at("sync").at("reference").get<int>();
    c.sync_max_lag_s = j.at("sync").at("max_lag_s").get<double>();
    c.policy = policy_from_string(j.at("select").at("policy").get<std::string>());
    c.group_size = j.at("select").at("group_size").get<std::size_t>();
    c.beamformer = beamformer_from_string(j.at("enhance").at("beamformer").get<std::string>());
    c.context_s = j.at("enhance").at("context_s").get<double>();
    c.gss_iterations = j.at("enhance").at("iterations").get<std::size_t>();
    const auto& r = j.at("rectify");
    c.rectify.window_s = r.at("window_s").get<double>();
    c.rectify.shift_s = r.at("shift_s").get<double>();
    c.rectify.threshold = r.at("threshold").get<double>();
    c.rectify.median_frames = r.at("median_frames").get<std::size_t>();
    c.rectify.min_segment_s = r.at("min_segment_s").get<double>();
    c.rectify.min_gap_s = r.at("min_gap_s").get<double>();
    c.rectify.em_iterations = r.at("em_iterations").get<std::size_t>();
    c.rectify.activity_floor = r.at("activity_floor").get<double>();
    c.stages = r.at("stages").get<std::size_t>();
    c.collar_s = j.at("score").at("collar").get<double>();
    c.sample_rate = j.at("simulate").at("sample_rate").get<int>();
    const auto& io = j.at("io");
    auto path = [&](const char* k) { return io.at(k).get<std::string>(); };
    c.io = {path("in"),  path("out"),        path("rttm"),    path("ref"),      path("hyp"),  path("spec"),
            path("out_prefix"), path("out_dir"), path("channels"), path("lags"), path("probs")};
    return c;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline nlohmann::json parse_json_file(const std::string& path) {
    const std::string text = read_text(path);
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("'" + path + "' is not valid JSON");
    return j;
}

}  // namespace detail

/// Defaults, overlaid with the JSON document at `path` when non-empty.
inline PipelineConfig load_config(const std::string& path) {
    PipelineConfig base;
    if (path.empty()) return base;
    const nlohmann::json user = detail::parse_json_file(path);
    auto merged = to_json(base);
    detail::check_keys(user, merged, "");
    merged.merge_patch(nlohmann::ordered_json(user));
    PipelineConfig c;
    try {
        c = detail::from_json(merged);
        c.validate();
    } catch (const PreconditionError& e) {
        throw UsageError("config '" + path + "': " + e.what());
    }
    return c;
}

namespace detail {

inline std::string require_path(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required ") + flag);
    return value;
}

inline void write_json(const std::string& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

/// Channel set from a `select` output document.
inline std::vector<int> channels_from_plan(const std::string& path, std::size_t available, int* reference) {
    const auto j = parse_json_file(path);
    if (!j.is_object() || !j.contains("channels") || !j["channels"].is_array())
        throw FormatError("'" + path + "' has no 'channels' array");
    std::vector<int> ch;
    for (const auto& v : j["channels"]) {
        if (!v.is_number_integer()) throw FormatError("'" + path + "': channels must be integers");
        const int c = v.get<int>();
        if (c < 0 || static_cast<std::size_t>(c) >= available)
            throw PreconditionError("channel " + std::to_string(c) + " out of range for " +
                                    std::to_string(available) + "-channel input");
        ch.push_back(c);
    }
    if (ch.empty()) throw PreconditionError("'" + path + "' selects no channels");
    if (reference) {
        *reference = 0;
        if (j.contains("reference") && j["reference"].is_number_integer()) {
            const auto it = std::find(ch.begin(), ch.end(), j["reference"].get<int>());
            if (it != ch.end()) *reference = static_cast<int>(it - ch.begin());
        }
    }
    return ch;
}

inline std::string stem_without_ext(const std::string& path) {
    std::filesystem::path p(path);
    return (p.parent_path() / p.stem()).string();
}

inline std::string segment_file_name(const Segment& s) {
    const auto ms = [](double t) { return std::to_string(std::llround(t * 1000.0)); };
    return s.session + "-" + s.speaker + "-" + ms(s.onset) + "-" + ms(s.end()) + ".wav";
}

}  // namespace detail

namespace detail {

inline int cmd_sync(const PipelineConfig& c, std::ostream& out) {
    const std::string in = require_path(c.io.in, "--in");
    const std::string dst = require_path(c.io.out, "--out");
    const MultichannelWave wave = read_wav(in);
    require(static_cast<std::size_t>(c.sync_reference) < wave.num_channels(),
            "reference channel " + std::to_string(c.sync_reference) + " out of range");
    std::size_t max_lag = static_cast<std::size_t>(std::llround(c.sync_max_lag_s * wave.sample_rate));
    if (wave.num_samples() > 0) max_lag = std::min(max_lag, wave.num_samples() - 1);
    const SyncResult r = synchronize(wave, static_cast<std::size_t>(c.sync_reference), max_lag);
    write_wav(r.wave, dst, c.wav_encoding);
    nlohmann::ordered_json lags = nlohmann::ordered_json::array();
    for (const auto& l : r.lags)
        lags.push_back({{"channel", l.channel}, {"lag_samples", l.lag}, {"peak", l.peak_correlation}});
    const std::string lag_path = c.io.lags.empty() ? stem_without_ext(dst) + ".lags.json" : c.io.lags;
    write_json(lag_path, lags);
    out << lags.dump() << "\n";
    return kExitOk;
}

inline int cmd_select(const PipelineConfig& c, std::ostream& out) {
    const MultichannelWave wave = read_wav(require_path(c.io.in, "--in"));
    const std::string dst = require_path(c.io.out, "--out");
    if (wave.num_channels() < 2) throw PreconditionError("need >= 2 channels for channel selection");
    const StftTensor x = stft(wave, c.stft);
    const ChannelRanking ranking = ev_scores(x);
    SubarrayPlan plan = partition_subarrays(ranking, c.group_size);
    if (!c.io.rttm.empty()) {
        const SegmentList segs = read_rttm(c.io.rttm);
        const ActivityMatrix act = segments_to_activity(segs, x.frame_rate(), x.frames);
        plan = score_subarrays(std::move(plan), x, act);
    } else if (c.policy != SelectionPolicy::ev_top_80pct) {
        throw UsageError("policy " + to_string(c.policy) + " needs --rttm to score subarrays");
    }
    const std::vector<int> chosen = select_channels(plan, ranking, c.policy);

    nlohmann::ordered_json j;
    j["ranking"] = {{"order", ranking.order}, {"scores", ranking.scores}, {"silent", ranking.silent}};
    j["plan"] = {{"group_size", plan.group_size},
                 {"subarrays", plan.subarrays},
                 {"sinr_db", plan.sinr_db},
                 {"order", plan.order}};
    j["policy"] = to_string(c.policy);
    j["channels"] = chosen;
    j["reference"] = best_ev_channel(chosen, ranking);
    write_json(dst, j);
    out << "selected " << chosen.size() << " of " << wave.num_channels() << " channels\n";
    return kExitOk;
}

inline int cmd_enhance(const PipelineConfig& c, const std::vector<std::string>& speakers, std::ostream& out) {
    const MultichannelWave wave = read_wav(require_path(c.io.in, "--in"));
    const SegmentList segs = read_rttm(require_path(c.io.rttm, "--rttm"));
    const std::string dir = require_path(c.io.out_dir, "--out-dir");
    if (segs.empty()) throw ProcessingError("RTTM has no segments to enhance");
    int reference = 0;
    std::vector<int> channels;
    if (!c.io.channels.empty()) {
        channels = channels_from_plan(c.io.channels, wave.num_channels(), &reference);
    } else {
        channels.resize(wave.num_channels());
        std::iota(channels.begin(), channels.end(), 0);
    }
    const StftTensor x = stft(wave.select(channels), c.stft);
    GssOptions opt;
    opt.context_s = c.context_s;
    opt.iterations = c.gss_iterations;
    opt.beamformer = c.beamformer;
    opt.reference = reference;

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
    const auto targets = speakers.empty() ? segs.speakers() : speakers;
    std::size_t written = 0;
    for (const auto& spk : targets) {
        for (const auto& e : gss_enhance_segments(x, segs, spk, opt)) {
            write_wav(e.audio, (std::filesystem::path(dir) / segment_file_name(e.segment)).string(),
                      c.wav_encoding);
            ++written;
        }
    }
    out << "wrote " << written << " segment files to " << dir << "\n";
    return kExitOk;
}

inline int cmd_rectify(const PipelineConfig& c, std::ostream& out) {
    MultichannelWave wave = read_wav(require_path(c.io.in, "--in"));
    SegmentList current = read_rttm(require_path(c.io.rttm, "--rttm"));
    const std::string dst = require_path(c.io.out, "--out");
    if (!c.io.channels.empty()) wave = wave.select(channels_from_plan(c.io.channels, wave.num_channels(), nullptr));
    RectifyConfig rc = c.rectify;
    rc.stft = c.stft;
    RectifyResult r;
    for (std::size_t s = 0; s < c.stages; ++s) {
        if (current.empty()) throw ProcessingError("stage " + std::to_string(s + 1) + " has an empty input segmentation");
        r = rectify(wave, current, rc);
        current = r.segments;
        out << "stage " << (s + 1) << ": " << current.size() << " segments\n";
    }
    save_rttm(current, dst);
    if (!c.io.probs.empty()) save_frame_probabilities(r.probabilities, c.io.probs);
    return kExitOk;
}

inline int cmd_score(const PipelineConfig& c, std::ostream& out) {
    const SegmentList ref = read_rttm(require_path(c.io.ref, "--ref"));
    const SegmentList hyp = read_rttm(require_path(c.io.hyp, "--hyp"));
    const DerReport r = der(ref, hyp, c.collar_s);
    nlohmann::ordered_json j;
    j["collar"] = c.collar_s;
    j["scored_speech_s"] = r.scored_speech_s;
    j["miss_s"] = r.miss_s;
    j["miss_pct"] = r.miss_pct;
    j["false_alarm_s"] = r.false_alarm_s;
    j["false_alarm_pct"] = r.false_alarm_pct;
    j["speaker_error_s"] = r.speaker_error_s;
    j["speaker_error_pct"] = r.speaker_error_pct;
    j["der"] = r.der;
    j["mapping"] = r.mapping;
    out << j.dump(2) << "\n";
    return kExitOk;
}

inline int cmd_simulate(const PipelineConfig& c, std::ostream& out) {
    const nlohmann::json spec_json = parse_json_file(require_path(c.io.spec, "--spec"));
    const std::string prefix = require_path(c.io.out_prefix, "--out-prefix");
    const SceneSpec spec = parse_scene_spec(spec_json);
    const RenderResult r = render(spec, c.sample_rate);
    const auto parent = std::filesystem::path(prefix).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
        if (ec) throw IoError("cannot create '" + parent.string() + "': " + ec.message());
    }
    write_wav(r.mixture, prefix + ".wav", c.wav_encoding);
    for (std::size_t s = 0; s < r.images.size(); ++s)
        write_wav(r.images[s], prefix + "-" + spec.sources[s].name + ".wav", c.wav_encoding);
    save_rttm(r.truth, prefix + ".rttm");
    out << "rendered " << spec.mics.size() << " channels, " << spec.sources.size() << " sources to " << prefix
        << ".wav\n";
    return kExitOk;
}

}  // namespace detail

/// Runs one command line (without the program name). Returns the exit code;
/// diagnostics go to `err`, command output to `out`.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-channel far-field front-end: sync, channel selection, GSS enhancement, "
                 "diarization rectification, DER scoring and scene simulation"};
    app.require_subcommand(1);

    // Flags land in these; only flags that were given override the config.
    PipelineConfig f;
    std::string config_path;
    std::vector<std::string> speakers;
    std::string policy, bf, encoding;
    std::vector<std::pair<CLI::Option*, std::function<void(PipelineConfig&)>>> overrides;
    auto bind = [&](CLI::App* sub, auto&& name, auto& var, const char* help, auto apply) {
        CLI::Option* o = sub->add_option(name, var, help);
        overrides.emplace_back(o, apply);
        return o;
    };
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "PipelineConfig JSON; explicit flags take precedence");
        bind(sub, "--wav-encoding", encoding, "float32 or int16 for written WAVs", [&](PipelineConfig& c) {
            if (encoding != "float32" && encoding != "int16") throw UsageError("--wav-encoding: expected float32 or int16");
            c.wav_encoding = encoding == "int16" ? WavEncoding::int16 : WavEncoding::float32;
        });
    };
    auto stft_flags = [&](CLI::App* sub) {
        bind(sub, "--stft-window", f.stft.window_length, "STFT window length", [&](PipelineConfig& c) {
            c.stft.window_length = f.stft.window_length;
        });
        bind(sub, "--stft-hop", f.stft.hop, "STFT hop", [&](PipelineConfig& c) { c.stft.hop = f.stft.hop; });
        bind(sub, "--fft-size", f.stft.fft_size, "FFT size", [&](PipelineConfig& c) { c.stft.fft_size = f.stft.fft_size; });
    };
    auto path_flag = [&](CLI::App* sub, const char* name, std::string PipelineConfig::Paths::*member, const char* help) {
        bind(sub, name, f.io.*member, help, [&f, member](PipelineConfig& c) { c.io.*member = f.io.*member; });
    };

    auto* sync = app.add_subcommand("sync", "align channels to a reference by cross-correlation");
    common(sync);
    path_flag(sync, "--in", &PipelineConfig::Paths::in, "input WAV");
    path_flag(sync, "--out", &PipelineConfig::Paths::out, "aligned output WAV");
    path_flag(sync, "--lags", &PipelineConfig::Paths::lags, "lag report JSON (default <out stem>.lags.json)");
    bind(sync, "--ref", f.sync_reference, "reference channel",
         [&](PipelineConfig& c) { c.sync_reference = f.sync_reference; });
    bind(sync, "--max-lag-s", f.sync_max_lag_s, "largest lag searched, seconds",
         [&](PipelineConfig& c) { c.sync_max_lag_s = f.sync_max_lag_s; });

    auto* select = app.add_subcommand("select", "rank channels by envelope variance and pick a channel set");
    common(select);
    stft_flags(select);
    path_flag(select, "--in", &PipelineConfig::Paths::in, "input WAV");
    path_flag(select, "--rttm", &PipelineConfig::Paths::rttm, "speaker activity for subarray SINR scoring");
    path_flag(select, "--out", &PipelineConfig::Paths::out, "plan JSON");
    bind(select, "--policy", policy, "single, front50 or ev80",
         [&](PipelineConfig& c) { c.policy = policy_from_string(policy); });
    bind(select, "--k", f.group_size, "channels per subarray", [&](PipelineConfig& c) { c.group_size = f.group_size; });

    auto* enhance = app.add_subcommand("enhance", "guided source separation of annotated segments");
    common(enhance);
    stft_flags(enhance);
    path_flag(enhance, "--in", &PipelineConfig::Paths::in, "input WAV");
    path_flag(enhance, "--rttm", &PipelineConfig::Paths::rttm, "diarization RTTM");
    path_flag(enhance, "--channels", &PipelineConfig::Paths::channels, "plan JSON from select");
    path_flag(enhance, "--out-dir", &PipelineConfig::Paths::out_dir, "directory for per-segment WAVs");
    enhance->add_option("--speaker", speakers, "target speaker (repeatable; default all)");
    bind(enhance, "--bf", bf, "mvdr or gevd", [&](PipelineConfig& c) { c.beamformer = beamformer_from_string(bf); });
    bind(enhance, "--context-s", f.context_s, "context on each side of a segment, seconds",
         [&](PipelineConfig& c) { c.context_s = f.context_s; });
    bind(enhance, "--iterations", f.gss_iterations, "EM iterations",
         [&](PipelineConfig& c) { c.gss_iterations = f.gss_iterations; });

    auto* rect = app.add_subcommand("rectify", "refine a diarization with sliding-window spatial clustering");
    common(rect);
    stft_flags(rect);
    path_flag(rect, "--in", &PipelineConfig::Paths::in, "input WAV");
    path_flag(rect, "--rttm", &PipelineConfig::Paths::rttm, "initial diarization RTTM");
    path_flag(rect, "--out", &PipelineConfig::Paths::out, "rectified RTTM");
    path_flag(rect, "--channels", &PipelineConfig::Paths::channels, "plan JSON from select (default all channels)");
    path_flag(rect, "--probs", &PipelineConfig::Paths::probs, "dump final frame probabilities (float32 + .json)");
    bind(rect, "--window-s", f.rectify.window_s, "window length, seconds",
         [&](PipelineConfig& c) { c.rectify.window_s = f.rectify.window_s; });
    bind(rect, "--shift-s", f.rectify.shift_s, "window shift, seconds",
         [&](PipelineConfig& c) { c.rectify.shift_s = f.rectify.shift_s; });
    bind(rect, "--stages", f.stages, "rectification passes, each fed by the previous",
         [&](PipelineConfig& c) { c.stages = f.stages; });
    bind(rect, "--threshold", f.rectify.threshold, "speech probability threshold",
         [&](PipelineConfig& c) { c.rectify.threshold = f.rectify.threshold; });
    bind(rect, "--em-iterations", f.rectify.em_iterations, "EM iterations per window",
         [&](PipelineConfig& c) { c.rectify.em_iterations = f.rectify.em_iterations; });

    auto* score = app.add_subcommand("score", "diarization error rate of a hypothesis RTTM");
    common(score);
    path_flag(score, "--ref", &PipelineConfig::Paths::ref, "reference RTTM");
    path_flag(score, "--hyp", &PipelineConfig::Paths::hyp, "hypothesis RTTM");
    bind(score, "--collar", f.collar_s, "no-score collar around reference boundaries, seconds",
         [&](PipelineConfig& c) { c.collar_s = f.collar_s; });

    auto* sim = app.add_subcommand("simulate", "render a scene JSON to WAV and RTTM");
    common(sim);
    path_flag(sim, "--spec", &PipelineConfig::Paths::spec, "scene JSON");
    path_flag(sim, "--out-prefix", &PipelineConfig::Paths::out_prefix, "output path prefix");
    bind(sim, "--sample-rate", f.sample_rate, "sample rate, Hz", [&](PipelineConfig& c) { c.sample_rate = f.sample_rate; });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        PipelineConfig cfg;
        try {
            cfg = load_config(config_path);
        } catch (const FormatError& e) {
            throw UsageError(e.what());
        }
        try {
            for (auto& [opt, apply] : overrides)
                if (opt->count() > 0) apply(cfg);
            cfg.validate();
        } catch (const PreconditionError& e) {
            throw UsageError(e.what());
        }
        if (sync->parsed()) return detail::cmd_sync(cfg, out);
        if (select->parsed()) return detail::cmd_select(cfg, out);
        if (enhance->parsed()) return detail::cmd_enhance(cfg, speakers, out);
        if (rect->parsed()) return detail::cmd_rectify(cfg, out);
        if (score->parsed()) return detail::cmd_score(cfg, out);
        if (sim->parsed()) return detail::cmd_simulate(cfg, out);
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitProcessing;
    } catch (const std::bad_alloc&) {
        err << "error: out of memory\n";
        return kExitProcessing;
    }
}

}  // namespace farfield::cli
