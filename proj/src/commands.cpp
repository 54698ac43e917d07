#include "scdd/commands.hpp"

#include "scdd/error.hpp"
#include "scdd/objective.hpp"
#include "scdd/verification.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>

namespace scdd {

namespace fs = std::filesystem;

Rng derived_stream(std::uint64_t seed, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    return Rng(seq);
}

Corpora make_corpora(const RunConfig& cfg) {
    Corpora c{cfg.source.build(cfg.train.dims.K), {}, {}};
    Rng train_rng = derived_stream(cfg.seed, stream::kTrainCorpus);
    Rng val_rng = derived_stream(cfg.seed, stream::kValCorpus);
    c.train = generate_corpus(c.source, cfg.L, cfg.train_size, train_rng);
    c.val = generate_corpus(c.source, cfg.L, cfg.val_size, val_rng);
    return c;
}

Checkpoint run_training(const RunConfig& cfg, const NoiseSchedule& schedule, long steps, const Corpora& corpora,
                        std::uint64_t stream_tag, const TrainLogFn& log) {
    TrainConfig tc = cfg.train;
    tc.steps = steps;
    Rng rng = derived_stream(cfg.seed, stream_tag);
    return train(tc, schedule, cfg.T, corpora.train, rng, log);
}

MlpDenoiser model_from(const RunConfig& cfg, const Checkpoint& ckpt) {
    return MlpDenoiser(cfg.use_ema ? ckpt.optimizer.ema : ckpt.params);
}

std::vector<SampleTrace> sample_traces(const Denoiser& denoiser, const NoiseSchedule& schedule, int N, int L,
                                       int count, std::optional<double> nucleus_p, Rng& rng) {
    const TimeGrid grid = discretize(schedule, N);
    std::vector<SampleTrace> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        out.push_back(sample(denoiser, grid, L, rng, nucleus_p));
    }
    return out;
}

SweepRow summarize_traces(std::span<const SampleTrace> traces, int N, double p_u) {
    if (traces.empty()) {
        throw InvalidArgument("summarize_traces: no traces");
    }
    SweepRow row{N, p_u, 0.0, 0.0};
    for (const auto& tr : traces) {
        row.correction_rate += correction_rate(tr);
        row.correction_rate_per_step += correction_rate_per_step(tr, N);
    }
    row.correction_rate /= static_cast<double>(traces.size());
    row.correction_rate_per_step /= static_cast<double>(traces.size());
    return row;
}

EvalMetrics evaluate_model(const RunConfig& cfg, const Checkpoint& ckpt, const Corpora& corpora) {
    const MlpDenoiser model = model_from(cfg, ckpt);
    const TimeGrid grid = discretize(ckpt.schedule, ckpt.T);
    Rng eval_rng = derived_stream(cfg.seed, stream::kEvaluation);
    Rng sample_rng = derived_stream(cfg.seed, stream::kSampling);

    EvalMetrics m;
    m.val_ppl = validation_perplexity(model, grid, corpora.val, cfg.mc_passes, eval_rng);
    m.nelbo_per_token = std::log(m.val_ppl);
    const auto traces = sample_traces(model, ckpt.schedule, ckpt.T, cfg.L, cfg.sample_count, cfg.nucleus_p, sample_rng);
    std::vector<std::vector<Token>> generated;
    generated.reserve(traces.size());
    for (const auto& tr : traces) {
        generated.push_back(tr.final_seq);
    }
    m.gen_ppl = exact_oracle_ppl(corpora.source, generated);
    m.unigram_entropy = unigram_entropy(generated, corpora.source.K);
    m.entropy_rate = corpora.source.entropy_rate;
    m.sequence_entropy = corpora.source.sequence_entropy(cfg.L);
    return m;
}

namespace {

double mean_step(const std::vector<std::pair<int, double>>& curve) {
    // Mean of the step distribution whose CDF is `curve`.
    double mean = 0.0, prev = 0.0;
    for (const auto& [step, frac] : curve) {
        mean += step * (frac - prev);
        prev = frac;
    }
    return mean;
}

} // namespace

AblationResult run_ablation(const RunConfig& cfg, const Corpora& corpora, const ProgressFn& progress) {
    AblationResult res;
    Rng rng = derived_stream(cfg.seed, stream::kAblation);
    std::uint64_t tag = 100;
    for (double p_u : cfg.ablate_pu) {
        const NoiseSchedule schedule = NoiseSchedule::gidd_aligned(p_u, cfg.schedule.shape);
        if (progress) {
            progress("training p_u=" + std::to_string(p_u));
        }
        const Checkpoint ckpt = run_training(cfg, schedule, cfg.ablate_steps, corpora, tag++);
        const MlpDenoiser model = model_from(cfg, ckpt);
        for (int N : cfg.sample_steps) {
            const auto traces = sample_traces(model, schedule, N, cfg.L, cfg.ablate_traces, cfg.nucleus_p, rng);
            res.rows.push_back(summarize_traces(traces, N, p_u));
        }
    }
    for (double tp : cfg.ablate_tpeak) {
        const NoiseSchedule schedule = NoiseSchedule::peak_shifted(cfg.schedule.p_u, tp, cfg.schedule.shape);
        if (progress) {
            progress("training t_peak=" + std::to_string(tp));
        }
        const Checkpoint ckpt = run_training(cfg, schedule, cfg.ablate_steps, corpora, tag++);
        const MlpDenoiser model = model_from(cfg, ckpt);
        const auto traces =
            sample_traces(model, schedule, cfg.ablate_curve_steps, cfg.L, cfg.ablate_traces, cfg.nucleus_p, rng);
        TpeakCurve c;
        c.t_peak = tp;
        c.curve = pooled_correction_curve(traces);
        c.mean_correction_step = mean_step(c.curve) / cfg.ablate_curve_steps;
        for (const auto& tr : traces) {
            c.corrections += static_cast<long>(tr.corrections.size());
        }
        res.curves.push_back(std::move(c));
    }
    return res;
}

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

std::string tag_name(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

} // namespace

void write_train_csv_header(std::ostream& out) {
    out << "step,reconstruction,diffusion,total,ppl\n";
}

void write_train_csv_row(std::ostream& out, const TrainLogRow& row) {
    out << row.step << ',' << num(row.per_token.reconstruction) << ',' << num(row.per_token.diffusion) << ','
        << num(row.per_token.total) << ',' << num(row.ppl) << '\n';
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
    out << "N,p_u,correction_rate,correction_rate_per_step\n";
    for (const auto& r : rows) {
        out << r.N << ',' << num(r.p_u) << ',' << num(r.correction_rate) << ',' << num(r.correction_rate_per_step)
            << '\n';
    }
}

void write_curve_csv(std::ostream& out, std::span<const std::pair<int, double>> curve) {
    out << "step,cumulative_fraction\n";
    for (const auto& [step, frac] : curve) {
        out << step << ',' << num(frac) << '\n';
    }
}

void write_eval_csv(std::ostream& out, const EvalMetrics& m) {
    out << "val_ppl,gen_ppl,unigram_entropy,nelbo_per_token,entropy_rate,sequence_entropy\n";
    out << num(m.val_ppl) << ',' << num(m.gen_ppl) << ',' << num(m.unigram_entropy) << ',' << num(m.nelbo_per_token)
        << ',' << num(m.entropy_rate) << ',' << num(m.sequence_entropy) << '\n';
}

int cmd_verify(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
    const auto results = run_verification(cfg.schedule, cfg.seed);
    auto csv = open_out(out_dir / "verification.csv");
    write_verification_csv(csv, results);
    write_verification_summary(out, results);
    int failed = 0;
    for (const auto& r : results) {
        if (!r.pass) {
            err << "check failed: " << r.name << '\n';
            ++failed;
        }
    }
    out << results.size() << " checks, " << failed << " failed\n";
    return failed == 0 ? 0 : 1;
}

int cmd_train(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
    const Corpora corpora = make_corpora(cfg);
    auto csv = open_out(out_dir / "train_loss.csv");
    write_train_csv_header(csv);
    const Checkpoint ckpt = run_training(cfg, cfg.schedule, cfg.train.steps, corpora, stream::kTraining,
                                         [&](const TrainLogRow& row) {
                                             write_train_csv_row(csv, row);
                                             out << "step " << row.step << "  nelbo/token " << num(row.per_token.total)
                                                 << "  ppl " << num(row.ppl) << '\n';
                                         });
    save_checkpoint(out_dir / "checkpoint.txt", ckpt);
    out << "wrote " << (out_dir / "checkpoint.txt").string() << '\n';
    return 0;
}

int cmd_sample(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const MlpDenoiser model = model_from(cfg, ckpt);
    Rng rng = derived_stream(cfg.seed, stream::kSampling);
    std::vector<SweepRow> rows;
    for (int N : cfg.sample_steps) {
        const auto traces = sample_traces(model, ckpt.schedule, N, cfg.L, cfg.sample_count, cfg.nucleus_p, rng);
        auto tf = open_out(out_dir / ("traces_N" + std::to_string(N) + ".txt"));
        for (std::size_t i = 0; i < traces.size(); ++i) {
            if (i) {
                tf << '\n';
            }
            write_trace(tf, traces[i]);
        }
        auto cf = open_out(out_dir / ("cumulative_N" + std::to_string(N) + ".csv"));
        write_curve_csv(cf, pooled_correction_curve(traces));
        rows.push_back(summarize_traces(traces, N, ckpt.schedule.p_u));
        out << "N=" << N << "  correction_rate " << num(rows.back().correction_rate) << "  per step "
            << num(rows.back().correction_rate_per_step) << '\n';
    }
    auto csv = open_out(out_dir / "corrections.csv");
    write_sweep_csv(csv, rows);
    return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    if (ckpt.params.dims.K != cfg.train.dims.K) {
        throw InvalidArgument("checkpoint K does not match the config");
    }
    const Corpora corpora = make_corpora(cfg);
    const EvalMetrics m = evaluate_model(cfg, ckpt, corpora);
    auto csv = open_out(out_dir / "eval.csv");
    write_eval_csv(csv, m);
    out << "val_ppl " << num(m.val_ppl) << "  gen_ppl " << num(m.gen_ppl) << "  unigram_entropy "
        << num(m.unigram_entropy) << "  (source entropy rate " << num(m.entropy_rate) << ")\n";
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
    const Corpora corpora = make_corpora(cfg);
    const AblationResult res = run_ablation(cfg, corpora, [&](const std::string& msg) { out << msg << '\n'; });
    auto csv = open_out(out_dir / "ablation_corrections.csv");
    write_sweep_csv(csv, res.rows);
    for (const auto& c : res.curves) {
        auto cf = open_out(out_dir / ("cumulative_tpeak_" + tag_name(c.t_peak) + ".csv"));
        write_curve_csv(cf, c.curve);
        out << "t_peak=" << c.t_peak << "  corrections " << c.corrections << "  mean step fraction "
            << num(c.mean_correction_step) << '\n';
    }
    for (const auto& r : res.rows) {
        out << "p_u=" << r.p_u << " N=" << r.N << "  per step " << num(r.correction_rate_per_step) << '\n';
    }
    return 0;
}

int run_command(const std::string& name, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        if (name != "verify" && name != "train" && name != "sample" && name != "eval" && name != "ablate") {
            err << "unknown command '" << name << "'\n";
            return 2;
        }
        RunConfig cfg = opts.config.empty() ? RunConfig{} : load_config(opts.config);
        if (opts.seed) {
            cfg.seed = *opts.seed;
        }
        cfg.validate();
        fs::create_directories(opts.out);
        if (name == "verify") {
            return cmd_verify(cfg, opts.out, out, err);
        }
        if (name == "train") {
            return cmd_train(cfg, opts.out, out);
        }
        if (name == "ablate") {
            return cmd_ablate(cfg, opts.out, out);
        }
        if (!opts.checkpoint) {
            err << name << " requires --checkpoint\n";
            return 2;
        }
        if (!fs::exists(*opts.checkpoint)) {
            err << "checkpoint not found: " << opts.checkpoint->string() << '\n';
            return 2;
        }
        return name == "sample" ? cmd_sample(cfg, *opts.checkpoint, opts.out, out)
                                : cmd_eval(cfg, *opts.checkpoint, opts.out, out);
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidSchedule& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace scdd
