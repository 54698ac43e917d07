#pragma once

#include "scdd/markov_source.hpp"
#include "scdd/schedule.hpp"
#include "scdd/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace scdd {

struct SourceSpec {
    std::string kind = "sticky"; // sticky | uniform | constant | file
    double zipf = 1.0;
    double stickiness = 0.15;
    int token = 0;
    std::string path;

    MarkovSource build(int K) const;
};

struct RunConfig {
    NoiseSchedule schedule;
    int T = 1000;
    int L = 8;
    TrainConfig train;
    std::uint64_t seed = 0;
    int mc_passes = 4;
    int train_size = 20000;
    int val_size = 256;
    bool use_ema = false;

    std::vector<int> sample_steps{8, 16, 32, 64};
    std::optional<double> nucleus_p;
    int sample_count = 128;

    SourceSpec source;

    std::vector<double> ablate_pu{0.05, 0.1, 0.2};
    std::vector<double> ablate_tpeak{0.25, 0.75};
    long ablate_steps = 4000;
    int ablate_curve_steps = 64;
    int ablate_traces = 512;

    // Throws InvalidArgument / InvalidSchedule on any inconsistency.
    void validate() const;
};

// `key = value` lines, `#` starts a comment. Lists are comma-separated.
// Unknown keys, duplicate keys and malformed values throw ParseError.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

} // namespace scdd
