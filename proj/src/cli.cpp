#include "ltx/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ltx/checkpoint.hpp"
#include "ltx/corpus.hpp"
#include "ltx/diagnostics.hpp"
#include "ltx/generate.hpp"
#include "ltx/trainer.hpp"

namespace ltx::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

RunConfig CommonArgs::load() const {
    RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
    cfg.apply_overrides(overrides);
    return cfg;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path);
    out << text;
}

TokenizerSpec load_tokenizer_spec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("tokenizer: cannot open " + path);
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError("tokenizer: bad json in " + path + ": " + e.what());
    }
    TokenizerSpec spec;
    spec.alphabet = j.at("alphabet").get<std::string>();
    if (j.contains("specials")) {
        for (int r = 0; r < kNumRoles; ++r) {
            const char* name = role_name(static_cast<Role>(r));
            if (j.at("specials").contains(name)) {
                spec.specials[r] = j.at("specials").at(name).get<std::string>();
            }
        }
    }
    if (j.contains("sentence_end")) spec.sentence_end = j.at("sentence_end").get<std::string>();
    return spec;
}

struct LoadedModel {
    ModelBundle bundle;
    std::optional<LatentProjector> projector;
    std::optional<TokenizerSpec> tokenizer;
};

LoadedModel load_model(const std::string& base_path) {
    const Checkpoint ckpt = load_checkpoint(base_path);
    LoadedModel lm;
    lm.bundle = bundle_from_checkpoint(ckpt);
    lm.projector = projector_from_checkpoint(ckpt);
    lm.tokenizer = ckpt.tokenizer;
    return lm;
}

// `projector.mode` = auto | analytic | learned.
LatentProjector resolve_projector(RunConfig& cfg, const LoadedModel& lm) {
    const std::string mode = cfg.get_str("projector.mode", "auto");
    if (mode == "analytic") return build_analytic_projector(lm.bundle);
    if (mode == "learned") {
        if (!lm.projector || lm.projector->mode != ProjectorMode::learned) {
            throw ConfigError("projector.mode=learned but the checkpoint has no learned projector");
        }
        return *lm.projector;
    }
    if (mode != "auto") throw ConfigError("projector.mode must be auto, analytic, or learned");
    if (lm.projector && lm.projector->mode == ProjectorMode::learned) return *lm.projector;
    return build_analytic_projector(lm.bundle);
}

struct Prompt {
    std::string id;
    std::string text;
    std::vector<int> token_ids;  // used when non-empty
    std::string target;          // optional, drives the sweep accuracy proxy
};

std::vector<Prompt> read_prompts_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("prompts: cannot open " + path);
    std::vector<Prompt> prompts;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        try {
            const ordered_json j = ordered_json::parse(line);
            Prompt p;
            p.id = j.contains("id") ? j.at("id").get<std::string>()
                                    : std::to_string(prompts.size());
            if (j.contains("token_ids")) {
                p.token_ids = j.at("token_ids").get<std::vector<int>>();
            } else {
                p.text = j.at("prompt").get<std::string>();
            }
            if (j.contains("target")) p.target = j.at("target").get<std::string>();
            prompts.push_back(std::move(p));
        } catch (const std::exception& e) {
            throw DataError("prompts: bad line " + path + ":" + std::to_string(lineno) + ": " +
                            e.what());
        }
    }
    if (prompts.empty()) throw InputError("prompts: no prompts in " + path);
    return prompts;
}

std::vector<int> prompt_tokens(const Prompt& p, const Tokenizer* tokenizer) {
    if (!p.token_ids.empty()) return p.token_ids;
    if (!tokenizer) {
        throw ConfigError("prompt '" + p.id +
                          "' is text but the checkpoint carries no tokenizer");
    }
    return tokenizer->encode(p.text);
}

void run_pool(int workers, size_t n, const std::function<void(size_t)>& work) {
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    int width = workers > 0 ? workers : (hw > 0 ? hw : 1);
    width = std::min<int>(width, static_cast<int>(n));
    if (width <= 1) {
        for (size_t i = 0; i < n; ++i) work(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> threads;
    threads.reserve(width);
    for (int w = 0; w < width; ++w) {
        threads.emplace_back([&]() {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= n) return;
                work(i);
            }
        });
    }
    for (auto& t : threads) t.join();
}

}  // namespace

int cmd_prep(const PrepArgs& args) {
    RunConfig cfg = args.common.load();
    const uint64_t seed = cfg.seed();
    fs::create_directories(args.out_dir);

    std::optional<TokenizerSpec> tok_spec;
    int max_seq_len = 0;
    if (!args.model_path.empty()) {
        const LoadedModel lm = load_model(args.model_path);
        if (!lm.tokenizer) throw ConfigError("prep: checkpoint has no tokenizer");
        tok_spec = lm.tokenizer;
        max_seq_len = lm.bundle.config.max_seq_len;
    } else if (!args.tokenizer_path.empty()) {
        tok_spec = load_tokenizer_spec(args.tokenizer_path);
    } else {
        tok_spec = TokenizerSpec::toy();
    }
    const Tokenizer tokenizer(*tok_spec);
    if (max_seq_len == 0) {
        max_seq_len = static_cast<int>(cfg.get_long("model.max_seq_len", 512));
    }
    const int cap = static_cast<int>(cfg.get_long("corpus.latent_cap", 128));

    SourceReadResult source = read_source_jsonl(args.source_path);
    std::vector<std::string> errors = source.errors;

    if (args.curriculum) {
        const auto order = curriculum_order(source.records, seed);
        std::vector<SourceRecord> reordered;
        reordered.reserve(source.records.size());
        for (size_t i : order) reordered.push_back(std::move(source.records[i]));
        source.records = std::move(reordered);
    }

    std::vector<RenderedExample> rendered;
    std::vector<SourceRecord> rendered_sources;
    for (const auto& rec : source.records) {
        try {
            rendered.push_back(render_example(rec, tokenizer, cap, max_seq_len));
            rendered_sources.push_back(rec);
        } catch (const Error& e) {
            errors.push_back(e.what());  // render errors already name the record
        }
    }

    const std::string corpus_path = (fs::path(args.out_dir) / "corpus.jsonl").string();
    write_rendered_jsonl(corpus_path, rendered);
    if (!rendered.empty()) {
        const CorpusStats stats = corpus_stats(rendered, rendered_sources);
        write_text((fs::path(args.out_dir) / "stats.txt").string(), format_stats_report(stats));
    }

    if (!args.teacher_model_path.empty()) {
        const LoadedModel teacher = load_model(args.teacher_model_path);
        if (teacher.bundle.config.vocab_size != tokenizer.vocab_size()) {
            throw ConfigError("prep: teacher vocabulary does not match the tokenizer");
        }
        const int k = static_cast<int>(cfg.get_long("train.teacher_k", 128));
        std::map<std::string, std::vector<TeacherPosition>> sidecar;
        for (const auto& r : rendered) {
            sidecar[r.record_id] = precompute_teacher(teacher.bundle, r.teacher_ref_tokens,
                                                      r.teacher_ref_boundary, k);
        }
        write_teacher_sidecar((fs::path(args.out_dir) / "teacher_sidecar.jsonl").string(),
                              sidecar);
    }

    write_text((fs::path(args.out_dir) / "effective_config.txt").string(), cfg.echo_text());
    for (const auto& e : errors) std::cerr << "error: " << e << "\n";
    std::cerr << "prep: rendered " << rendered.size() << " of " << source.records.size()
              << " records (" << errors.size() << " errors)\n";
    return errors.empty() ? 0 : static_cast<int>(ErrorKind::data);
}

int cmd_train(const TrainArgs& args) {
    RunConfig cfg = args.common.load();
    const uint64_t seed = cfg.seed();
    fs::create_directories(args.out_dir);

    ModelBundle bundle;
    LatentProjector projector;
    std::optional<TokenizerSpec> tok_spec;
    std::optional<Checkpoint> resume_ckpt;
    if (!args.resume_path.empty()) {
        resume_ckpt = load_checkpoint(args.resume_path);
        bundle = bundle_from_checkpoint(*resume_ckpt);
        auto proj = projector_from_checkpoint(*resume_ckpt);
        if (!proj || proj->mode != ProjectorMode::learned) {
            throw ConfigError("resume: checkpoint has no learned projector");
        }
        projector = *proj;
        tok_spec = resume_ckpt->tokenizer;
    } else if (!args.model_path.empty()) {
        const LoadedModel lm = load_model(args.model_path);
        bundle = lm.bundle;
        projector = (lm.projector && lm.projector->mode == ProjectorMode::learned)
                        ? *lm.projector
                        : init_learned_projector(bundle.config.hidden_dim, seed);
        tok_spec = lm.tokenizer;
    } else {
        tok_spec = args.tokenizer_path.empty() ? TokenizerSpec::toy()
                                               : load_tokenizer_spec(args.tokenizer_path);
        const Tokenizer tokenizer(*tok_spec);
        bundle = init_toy_bundle(cfg.model_config(tokenizer), seed);
        projector = init_learned_projector(bundle.config.hidden_dim, seed);
    }

    const int pad_id = static_cast<int>(Role::latent_pad);
    TrainConfig train_cfg = cfg.train_config(bundle.config, pad_id);

    const std::vector<RenderedExample> corpus = read_rendered_jsonl(args.corpus_path);
    if (corpus.empty()) throw InputError("train: empty corpus " + args.corpus_path);
    const long n = static_cast<long>(corpus.size());
    const long steps_per_epoch = (n + train_cfg.batch_size - 1) / train_cfg.batch_size;
    const long planned_steps = args.epochs * steps_per_epoch;
    if (train_cfg.total_steps == 0) {
        train_cfg.total_steps = static_cast<int>(planned_steps);
        cfg.set("train.total_steps", std::to_string(planned_steps));
    }

    // Teacher distributions: precomputed sidecar, or computed now from the
    // initial (untrained) weights, which stay frozen as the teacher.
    std::vector<std::optional<TeacherDistribution>> teachers(corpus.size());
    if (train_cfg.lambda_kl > 0.0) {
        std::map<std::string, std::vector<TeacherPosition>> sidecar;
        if (!args.teacher_sidecar_path.empty()) {
            sidecar = read_teacher_sidecar(args.teacher_sidecar_path);
        } else if (resume_ckpt) {
            throw ConfigError(
                "resume: pass --teacher-sidecar from the original run (recomputing from trained "
                "weights would change the teacher)");
        } else {
            const int k = static_cast<int>(cfg.get_long("train.teacher_k", 128));
            for (const auto& r : corpus) {
                sidecar[r.record_id] =
                    precompute_teacher(bundle, r.teacher_ref_tokens, r.teacher_ref_boundary, k);
            }
            write_teacher_sidecar((fs::path(args.out_dir) / "teacher_sidecar.jsonl").string(),
                                  sidecar);
        }
        for (size_t i = 0; i < corpus.size(); ++i) {
            auto it = sidecar.find(corpus[i].record_id);
            if (it == sidecar.end()) {
                throw DataError("train: sidecar is missing record " + corpus[i].record_id);
            }
            teachers[i] = teacher_for_example(it->second, corpus[i].offset_map);
        }
    }

    Trainer trainer(std::move(bundle), std::move(projector), train_cfg);
    if (resume_ckpt) trainer.import_state(*resume_ckpt);

    const long checkpoint_interval = cfg.get_long("train.checkpoint_interval", 0);
    std::ostringstream log;
    log << "step\tlr\tce_noncot\tce_cot\tce_total\tkl\thalt_raw\tgate_alpha\thalt_effective"
           "\ttotal\tema_ce\n";

    auto save = [&](const std::string& name) {
        const TokenizerSpec* ts = tok_spec ? &*tok_spec : nullptr;
        Checkpoint ckpt = make_checkpoint(trainer.model(), &trainer.projector(), ts);
        trainer.export_state(ckpt);
        save_checkpoint((fs::path(args.out_dir) / name).string(), ckpt);
    };

    char buf[360];
    for (long step = trainer.step_count() + 1; step <= planned_steps; ++step) {
        const long b = step - 1;
        const long epoch = b / steps_per_epoch;
        const long slot = b % steps_per_epoch;
        std::vector<long> perm(n);
        for (long i = 0; i < n; ++i) perm[i] = i;
        CounterRng rng(derive_seed(seed, "data-order", static_cast<uint64_t>(epoch)));
        for (long i = n; i > 1; --i) {
            std::swap(perm[i - 1], perm[rng.below(static_cast<uint64_t>(i))]);
        }
        std::vector<const TrainingExample*> batch;
        std::vector<const TeacherDistribution*> batch_teachers;
        for (long i = slot * train_cfg.batch_size;
             i < std::min<long>(n, (slot + 1) * train_cfg.batch_size); ++i) {
            batch.push_back(&corpus[perm[i]].example);
            batch_teachers.push_back(teachers[perm[i]] ? &*teachers[perm[i]] : nullptr);
        }
        const LossReport r = trainer.step(batch, batch_teachers);
        std::snprintf(buf, sizeof(buf),
                      "%ld\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", step,
                      learning_rate(train_cfg, step), r.ce_noncot, r.ce_cot, r.ce_total, r.kl,
                      r.halt_raw, r.gate_alpha, r.halt_effective, r.total, r.ema_ce);
        log << buf;
        if (checkpoint_interval > 0 && step % checkpoint_interval == 0) {
            save("checkpoint_step" + std::to_string(step));
        }
    }

    save("checkpoint_final");
    write_text((fs::path(args.out_dir) / "loss_log.tsv").string(), log.str());
    write_text((fs::path(args.out_dir) / "effective_config.txt").string(), cfg.echo_text());
    std::cerr << "train: finished at step " << trainer.step_count() << "\n";
    return 0;
}

int cmd_generate(const GenerateArgs& args) {
    RunConfig cfg = args.common.load();
    const uint64_t seed = cfg.seed();
    const std::string mode = args.mode.empty() ? cfg.get_str("mode", "latent") : args.mode;
    if (mode != "cot" && mode != "latent" && mode != "trained") {
        throw ConfigError("generate: mode must be cot, latent, or trained");
    }

    const LoadedModel lm = load_model(args.model_path);
    std::optional<Tokenizer> tokenizer;
    if (lm.tokenizer) tokenizer.emplace(*lm.tokenizer);
    const LatentProjector projector = resolve_projector(cfg, lm);
    const SwitchConfig switch_cfg = cfg.switch_config(lm.bundle.config);
    const SamplerConfig sampler_base = cfg.sampler_config(seed);

    GenerateOptions options;
    options.log_hidden = args.log_hidden || cfg.get_bool("log_hidden", false);
    options.log_entropy = args.log_entropy || cfg.get_bool("log_entropy", false);
    options.trained_adaptive_fallback = cfg.get_bool("trained_adaptive_fallback", false);

    const std::vector<Prompt> prompts = read_prompts_jsonl(args.prompts_path);
    std::vector<int> sentence_ids;
    if (tokenizer) sentence_ids = tokenizer->sentence_end_ids();

    struct Slot {
        std::optional<GenerationTrace> trace;
        std::optional<GenerationTrace> paired;
        std::string error;
        int error_code = 0;
    };
    std::vector<Slot> slots(prompts.size());

    const int workers = static_cast<int>(cfg.get_long("workers", 0));
    run_pool(workers, prompts.size(), [&](size_t i) {
        Slot& slot = slots[i];
        try {
            const std::vector<int> tokens =
                prompt_tokens(prompts[i], tokenizer ? &*tokenizer : nullptr);
            SamplerConfig sampler = sampler_base;
            sampler.seed = derive_seed(seed, "prompt", i);
            const auto t0 = std::chrono::steady_clock::now();
            GenerationTrace trace;
            if (mode == "cot") {
                trace = generate_cot(lm.bundle, sampler, tokens, options);
            } else if (mode == "latent") {
                trace = generate_latent(lm.bundle, projector, switch_cfg, sampler, tokens,
                                        options);
            } else {
                trace = generate_trained(lm.bundle, projector, switch_cfg, sampler, tokens,
                                         options);
            }
            if (args.timings) {
                trace.duration_ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count();
            }
            trace.id = prompts[i].id;
            trace.config_echo["sentence_end_ids"] = sentence_ids;
            if (!prompts[i].target.empty()) trace.config_echo["target"] = prompts[i].target;
            slot.trace = std::move(trace);
            if (args.paired_cot && mode != "cot") {
                GenerationTrace cot = generate_cot(lm.bundle, sampler, tokens, options);
                cot.id = prompts[i].id;
                cot.config_echo["sentence_end_ids"] = sentence_ids;
                slot.paired = std::move(cot);
            }
        } catch (const Error& e) {
            slot.error = e.what();
            slot.error_code = e.exit_code();
        } catch (const std::exception& e) {
            slot.error = e.what();
            slot.error_code = 1;
        }
    });

    std::ofstream out(args.out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("generate: cannot write " + args.out_path);
    std::ofstream paired_out;
    if (args.paired_cot && mode != "cot") {
        paired_out.open(args.out_path + ".paired_cot.jsonl", std::ios::binary | std::ios::trunc);
    }
    int exit_code = 0;
    for (size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].trace) {
            out << trace_to_json(*slots[i].trace).dump() << "\n";
            if (slots[i].paired) paired_out << trace_to_json(*slots[i].paired).dump() << "\n";
        } else {
            const ordered_json err{{"id", prompts[i].id}, {"error", slots[i].error}};
            out << err.dump() << "\n";
            exit_code = std::max(exit_code, slots[i].error_code);
            std::cerr << "error: prompt " << prompts[i].id << ": " << slots[i].error << "\n";
        }
    }
    write_text(args.out_path + ".config.txt", cfg.echo_text());
    return exit_code;
}

int cmd_sweep(const SweepArgs& args) {
    RunConfig cfg = args.common.load();
    const uint64_t seed = cfg.seed();
    if (args.kind != "fixed" && args.kind != "entropy") {
        throw InputError("sweep: kind must be fixed or entropy");
    }

    const LoadedModel lm = load_model(args.model_path);
    std::optional<Tokenizer> tokenizer;
    if (lm.tokenizer) tokenizer.emplace(*lm.tokenizer);
    const LatentProjector projector = resolve_projector(cfg, lm);
    const SwitchConfig switch_base = cfg.switch_config(lm.bundle.config);
    const SamplerConfig sampler_base = cfg.sampler_config(seed);
    const std::vector<Prompt> prompts = read_prompts_jsonl(args.prompts_path);

    auto run_tasks = [&](const SwitchConfig& sw) {
        std::vector<SweepTaskResult> results;
        for (size_t i = 0; i < prompts.size(); ++i) {
            SamplerConfig sampler = sampler_base;
            sampler.seed = derive_seed(seed, "prompt", i);
            const std::vector<int> tokens =
                prompt_tokens(prompts[i], tokenizer ? &*tokenizer : nullptr);
            const GenerationTrace trace =
                generate_latent(lm.bundle, projector, sw, sampler, tokens, {});
            SweepTaskResult r;
            r.total_tokens = trace.total_tokens;
            r.latent_steps = trace.switch_step;
            if (!prompts[i].target.empty() && tokenizer) {
                const std::string text = tokenizer->decode(trace.explicit_token_ids);
                r.correct = text.find(prompts[i].target) != std::string::npos ? 1.0 : 0.0;
            } else {
                r.correct = std::nan("");
            }
            results.push_back(r);
        }
        return results;
    };

    std::vector<SweepRow> rows;
    std::string param_name;
    std::istringstream grid(args.grid);
    std::string item;
    if (args.kind == "fixed") {
        param_name = "budget";
        std::vector<int> budgets;
        while (std::getline(grid, item, ',')) {
            if (!item.empty()) budgets.push_back(std::stoi(item));
        }
        rows = sweep_fixed_budgets(budgets, [&](int budget) {
            SwitchConfig sw = switch_base;
            sw.mode = SwitchMode::fixed;
            sw.fixed_steps = budget;
            return run_tasks(sw);
        });
    } else {
        param_name = "threshold";
        std::vector<double> thresholds;
        while (std::getline(grid, item, ',')) {
            if (!item.empty()) thresholds.push_back(std::stod(item));
        }
        rows = sweep_entropy_thresholds(thresholds, [&](double tau) {
            SwitchConfig sw = switch_base;
            sw.mode = SwitchMode::adaptive;
            sw.entropy_threshold = tau;
            return run_tasks(sw);
        });
    }

    std::ostringstream out;
    out << "# config: " << cfg.echo().dump() << "\n";
    out << format_sweep_table(rows, param_name);
    write_text(args.out_path, out.str());
    return 0;
}

int cmd_analyze(const AnalyzeArgs& args) {
    RunConfig cfg = args.common.load();
    const std::vector<GenerationTrace> traces = read_traces_jsonl(args.traces_path);
    if (traces.empty()) throw InputError("analyze: no traces in " + args.traces_path);

    std::string table;
    if (args.which == "fig3") {
        bool any_explicit = false;
        for (const auto& t : traces) any_explicit |= !t.explicit_entropies.empty();
        if (!any_explicit) {
            throw InputError(
                "analyze fig3: traces carry no explicit entropies; re-run generation with "
                "--log-entropy");
        }
        std::vector<int> sentence_ids;
        for (const auto& t : traces) {
            if (t.config_echo.contains("sentence_end_ids")) {
                sentence_ids = t.config_echo.at("sentence_end_ids").get<std::vector<int>>();
                break;
            }
        }
        const int bins = static_cast<int>(cfg.get_long("analyze.bins", 100));
        table = format_entropy_profile(aggregate_entropy(traces, bins, sentence_ids));
    } else if (args.which == "fig7") {
        table = format_step_boxes(per_step_entropy_distribution(traces));
    } else if (args.which == "fig4") {
        const int k = static_cast<int>(cfg.get_long("analyze.pca_components", 6));
        const int max_explicit = static_cast<int>(cfg.get_long("analyze.pca_max_explicit", 256));
        table = format_pca_table(pca_project_traces(traces, k, max_explicit));
    } else {
        throw InputError("analyze: which must be fig3, fig7, or fig4");
    }
    write_text(args.out_path, table);
    return 0;
}

}  // namespace ltx::cli
