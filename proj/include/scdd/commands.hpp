#pragma once

#include "scdd/checkpoint.hpp"
#include "scdd/config.hpp"
#include "scdd/markov_source.hpp"
#include "scdd/sampler.hpp"
#include "scdd/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace scdd {

// Independent generator for a named purpose derived from the run seed.
Rng derived_stream(std::uint64_t seed, std::uint64_t tag);

namespace stream {
inline constexpr std::uint64_t kTrainCorpus = 1;
inline constexpr std::uint64_t kValCorpus = 2;
inline constexpr std::uint64_t kTraining = 3;
inline constexpr std::uint64_t kSampling = 4;
inline constexpr std::uint64_t kEvaluation = 5;
inline constexpr std::uint64_t kAblation = 6;
} // namespace stream

struct Corpora {
    MarkovSource source;
    std::vector<std::vector<Token>> train;
    std::vector<std::vector<Token>> val;
};

Corpora make_corpora(const RunConfig& cfg);

Checkpoint run_training(const RunConfig& cfg, const NoiseSchedule& schedule, long steps, const Corpora& corpora,
                        std::uint64_t stream_tag = stream::kTraining, const TrainLogFn& log = {});

// Raw parameters unless cfg.use_ema.
MlpDenoiser model_from(const RunConfig& cfg, const Checkpoint& ckpt);

struct EvalMetrics {
    double val_ppl = 0.0;
    double nelbo_per_token = 0.0;
    double gen_ppl = 0.0;
    double unigram_entropy = 0.0;
    double entropy_rate = 0.0;
    double sequence_entropy = 0.0;
};

EvalMetrics evaluate_model(const RunConfig& cfg, const Checkpoint& ckpt, const Corpora& corpora);

struct SweepRow {
    int N = 0;
    double p_u = 0.0;
    double correction_rate = 0.0;
    double correction_rate_per_step = 0.0;
};

std::vector<SampleTrace> sample_traces(const Denoiser& denoiser, const NoiseSchedule& schedule, int N, int L,
                                       int count, std::optional<double> nucleus_p, Rng& rng);
SweepRow summarize_traces(std::span<const SampleTrace> traces, int N, double p_u);

struct TpeakCurve {
    double t_peak = 0.0;
    std::vector<std::pair<int, double>> curve;
    double mean_correction_step = 0.0; // in units of the step count, 0 when no corrections
    long corrections = 0;
};

struct AblationResult {
    std::vector<SweepRow> rows; // every (p_u, N) pair
    std::vector<TpeakCurve> curves;
};

using ProgressFn = std::function<void(const std::string&)>;

// Trains one GiddAligned model per ablate_pu and one PeakShifted model per ablate_tpeak
// (at the configured p_u), then samples the correction metrics.
AblationResult run_ablation(const RunConfig& cfg, const Corpora& corpora, const ProgressFn& progress = {});

void write_train_csv_header(std::ostream& out);
void write_train_csv_row(std::ostream& out, const TrainLogRow& row);
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);
void write_curve_csv(std::ostream& out, std::span<const std::pair<int, double>> curve);
void write_eval_csv(std::ostream& out, const EvalMetrics& m);

struct CommandOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> checkpoint;
    std::filesystem::path out = ".";
    std::optional<std::uint64_t> seed;
};

// Exit codes: 0 success, 1 failed check or runtime failure, 2 usage or validation error.
int run_command(const std::string& name, const CommandOptions& opts, std::ostream& out, std::ostream& err);

int cmd_verify(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out);
int cmd_sample(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
               std::ostream& out);
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
             std::ostream& out);
int cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& out);

} // namespace scdd
