#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "farfield/error.hpp"

namespace farfield {

/// Synchronized multi-channel audio. Samples are nominally in [-1, 1];
/// values outside that range are allowed in memory and are clamped only
/// when written as 16-bit PCM.
struct MultichannelWave {
    int sample_rate = 16000;
    std::vector<std::vector<double>> channels;

    MultichannelWave() = default;
    MultichannelWave(int rate, std::vector<std::vector<double>> data)
        : sample_rate(rate), channels(std::move(data)) {}

    std::size_t num_channels() const { return channels.size(); }
    std::size_t num_samples() const { return channels.empty() ? 0 : channels.front().size(); }
    double duration_s() const { return static_cast<double>(num_samples()) / sample_rate; }

    /// Throws PreconditionError naming the first violated invariant.
    void validate() const {
        require(sample_rate > 0, "sample rate must be positive");
        require(!channels.empty(), "wave must have at least one channel");
        const std::size_t n = channels.front().size();
        for (std::size_t c = 0; c < channels.size(); ++c) {
            require(channels[c].size() == n, "channel " + std::to_string(c) + " has " +
                                                 std::to_string(channels[c].size()) +
                                                 " samples, expected " + std::to_string(n));
            for (double v : channels[c])
                require(std::isfinite(v), "channel " + std::to_string(c) + " has a non-finite sample");
        }
    }

    static MultichannelWave mono(int rate, std::vector<double> samples) {
        MultichannelWave w;
        w.sample_rate = rate;
        w.channels.push_back(std::move(samples));
        return w;
    }

    MultichannelWave channel(std::size_t c) const {
        require(c < channels.size(), "channel index out of range");
        return mono(sample_rate, channels[c]);
    }

    /// Copy of the listed channels, in the listed order.
    MultichannelWave select(const std::vector<int>& indices) const {
        MultichannelWave w;
        w.sample_rate = sample_rate;
        for (int c : indices) {
            require(c >= 0 && static_cast<std::size_t>(c) < channels.size(),
                    "channel index " + std::to_string(c) + " out of range");
            w.channels.push_back(channels[static_cast<std::size_t>(c)]);
        }
        return w;
    }

    /// Samples [begin, end) of every channel; end is clipped to the length.
    MultichannelWave slice(std::size_t begin, std::size_t end) const {
        MultichannelWave w;
        w.sample_rate = sample_rate;
        end = std::min(end, num_samples());
        begin = std::min(begin, end);
        for (const auto& ch : channels)
            w.channels.emplace_back(ch.begin() + static_cast<std::ptrdiff_t>(begin),
                                    ch.begin() + static_cast<std::ptrdiff_t>(end));
        return w;
    }
};

}  // namespace farfield
