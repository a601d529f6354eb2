#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prograde/common.hpp"
#include "prograde/network.hpp"

namespace prograde {

enum class Phase { kStabilize, kFade };

struct ProgressionState {
    std::uint64_t images_shown = 0;
    int resolution = 4;
    Phase phase = Phase::kStabilize;
    double alpha = 1.0;
    std::uint64_t phase_length = 800000;
};

struct ScheduleConfig {
    std::uint64_t phase_length = 800000;  // 600k in the reduced configuration
    int max_resolution = 64;
    bool progressive = true;
    std::map<int, int> minibatch_overrides;  // resolution -> size
};

inline int listed_doublings(const ScheduleConfig& cfg) {
    int n = 0, r = 4;
    while (r < cfg.max_resolution) { r *= 2; ++n; }
    return n;
}

/// Pure function of the real-images-shown counter: the first phase_length
/// images stabilize at 4x4, then fade and stabilize phases of phase_length
/// images alternate, doubling the resolution at each fade start. Clamps to a
/// terminal stabilize phase at max resolution.
inline ProgressionState state_at(std::uint64_t images_shown, const ScheduleConfig& cfg) {
    check(cfg.phase_length > 0, "schedule: phase_length must be positive");
    ProgressionState st;
    st.images_shown = images_shown;
    st.phase_length = cfg.phase_length;
    if (!cfg.progressive) {
        st.resolution = cfg.max_resolution;
        return st;
    }
    const std::uint64_t phase_index = images_shown / cfg.phase_length;
    if (phase_index == 0) return st;  // 4x4 stabilize

    int resolution = 4;
    for (std::uint64_t p = (phase_index + 1) / 2; p > 0 && resolution < cfg.max_resolution; --p)
        resolution *= 2;
    st.resolution = resolution;

    // Fade phases are the odd-indexed ones, unless the doubling has already
    // clamped at max resolution (then the tail is one long stabilize).
    const std::uint64_t phases_to_max = 2 * static_cast<std::uint64_t>(listed_doublings(cfg)) ;
    if (phase_index % 2 == 1 && phase_index <= phases_to_max) {
        st.phase = Phase::kFade;
        st.alpha = static_cast<double>(images_shown - phase_index * cfg.phase_length) /
                   static_cast<double>(cfg.phase_length);
    }
    return st;
}

/// Per-resolution minibatch sizes: 16 through 128x128, then 14, 6, 3.
inline int minibatch_size_for(int resolution, const ScheduleConfig& cfg = {}) {
    check(is_power_of_two(resolution) && resolution >= 4 && resolution <= 1024,
          "minibatch_size_for: bad resolution " + std::to_string(resolution));
    auto it = cfg.minibatch_overrides.find(resolution);
    if (it != cfg.minibatch_overrides.end()) return it->second;
    if (resolution <= 128) return 16;
    if (resolution == 256) return 14;
    if (resolution == 512) return 6;
    return 3;
}

/// Images shown once the schedule has fully played out (every fade/stabilize
/// pair plus the initial stabilize).
inline std::uint64_t schedule_total_images(const ScheduleConfig& cfg) {
    return cfg.phase_length * (1 + 2 * static_cast<std::uint64_t>(listed_doublings(cfg)));
}

/// Append-only progress records for throughput analysis (images shown vs
/// wall-clock). The counter must be monotone; equal values are allowed.
class ThroughputLog {
  public:
    struct Record {
        std::uint64_t images_shown;
        double seconds;
    };

    void add(std::uint64_t images_shown, double seconds) {
        if (!records_.empty() && images_shown < records_.back().images_shown)
            raise("throughput_log: images_shown regressed from " + std::to_string(records_.back().images_shown) +
                  " to " + std::to_string(images_shown));
        records_.push_back({images_shown, seconds});
    }

    const std::vector<Record>& records() const { return records_; }

    std::string csv() const {
        std::string out = "images_shown,seconds\n";
        for (const auto& r : records_)
            out += std::to_string(r.images_shown) + "," + std::to_string(r.seconds) + "\n";
        return out;
    }

  private:
    std::vector<Record> records_;
};

}  // namespace prograde
