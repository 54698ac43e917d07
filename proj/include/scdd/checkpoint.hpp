#pragma once

#include "scdd/denoiser.hpp"
#include "scdd/schedule.hpp"

#include <filesystem>
#include <iosfwd>

namespace scdd {

// Adam moments and the parameter EMA.
struct OptimizerState {
    DenoiserParams m1;
    DenoiserParams m2;
    DenoiserParams ema;
    long step_count = 0;

    // Zero moments, EMA seeded with `params`.
    static OptimizerState init(const DenoiserParams& params);
    bool operator==(const OptimizerState&) const = default;
};

struct Checkpoint {
    NoiseSchedule schedule;
    int T = 1000;
    long step = 0;
    DenoiserParams params;
    OptimizerState optimizer;
};

inline constexpr const char* kCheckpointHeader = "SCDD-CKPT v1";

// Text format: header line, schedule line, step line, then one block per tensor
// ("tensor <name> <rows> <cols>" followed by the row-major values at 17 significant digits).
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws ParseError on a missing file, wrong header, or malformed content.
Checkpoint load_checkpoint(const std::filesystem::path& path);

bool bit_equal(const Checkpoint& a, const Checkpoint& b);

} // namespace scdd
