#include "ltx/cli.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ltx/corpus.hpp"
#include "ltx/generate.hpp"

using namespace ltx;
using namespace ltx::cli;
namespace fs = std::filesystem;

namespace {

struct Workspace {
    fs::path root;
    Workspace() {
        root = fs::temp_directory_path() / ("ltx_cli_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
    }
    std::string path(const std::string& rel) const { return (root / rel).string(); }
    void write(const std::string& rel, const std::string& text) const {
        fs::create_directories((root / rel).parent_path());
        std::ofstream out(root / rel, std::ios::binary | std::ios::trunc);
        out << text;
    }
    std::string read(const std::string& rel) const {
        std::ifstream in(root / rel, std::ios::binary);
        REQUIRE(in);
        return std::string(std::istreambuf_iterator<char>(in), {});
    }
};

const std::vector<std::string> kSmallModel = {
    "model.hidden_dim=16", "model.num_layers=1",   "model.num_heads=2",
    "model.ffn_dim=32",    "model.max_seq_len=256", "sampler.max_new_tokens=8",
    "switch.max_latent_steps=8"};

std::string source_lines() {
    return
        R"({"record_id":"a","problem":"add 1 2","intuition":"use sums","short_cot":"1+2=3.","answer":"3","difficulty":"easy"})"
        "\n"
        R"({"record_id":"b","problem":"copy xy","intuition":"repeat it","short_cot":"copy.","answer":"xy","difficulty":"medium"})"
        "\n"
        R"({"record_id":"c","problem":"add 2 2","intuition":"double up","short_cot":"2+2=4.","answer":"4","difficulty":"hard","original_cot_len":12})"
        "\n";
}

std::string prompt_lines() {
    std::string out;
    for (int i = 0; i < 10; ++i) {
        out += R"({"id":"p)" + std::to_string(i) + R"(","prompt":"add )" + std::to_string(i) +
               R"( 1","target":"3"})" + "\n";
    }
    return out;
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

PrepArgs prep_args(const Workspace& ws) {
    PrepArgs a;
    a.source_path = ws.path("source.jsonl");
    a.out_dir = ws.path("prep");
    a.common.overrides = kSmallModel;
    return a;
}

TrainArgs train_args(const Workspace& ws, const std::string& out, long epochs) {
    TrainArgs a;
    a.corpus_path = ws.path("prep/corpus.jsonl");
    a.out_dir = ws.path(out);
    a.epochs = epochs;
    a.common.overrides = kSmallModel;
    return a;
}

}  // namespace

TEST_CASE("cli pipeline end to end") {
    Workspace ws;
    ws.write("source.jsonl", source_lines());
    ws.write("prompts.jsonl", prompt_lines());

    // -- prep ------------------------------------------------------------
    REQUIRE(cmd_prep(prep_args(ws)) == 0);
    const std::string corpus = ws.read("prep/corpus.jsonl");
    CHECK(count_lines(corpus) == 3);
    const std::string stats = ws.read("prep/stats.txt");
    CHECK(stats.find("examples: 3") != std::string::npos);
    CHECK(fs::exists(ws.path("prep/effective_config.txt")));

    // -- train, zero epochs: initial checkpoint + empty log ----------------
    REQUIRE(cmd_train(train_args(ws, "train0", 0)) == 0);
    CHECK(fs::exists(ws.path("train0/checkpoint_final.manifest")));
    CHECK(fs::exists(ws.path("train0/checkpoint_final.blob")));
    const std::string empty_log = ws.read("train0/loss_log.tsv");
    CHECK(count_lines(empty_log) == 1);  // header only
    CHECK(empty_log.find("step\tlr\tce_noncot") == 0);
    // teacher sidecar computed from the frozen initial weights
    CHECK(fs::exists(ws.path("train0/teacher_sidecar.jsonl")));

    const std::string model = ws.path("train0/checkpoint_final");

    // -- generate: cot vs zero-budget latent share every token -------------
    GenerateArgs gen;
    gen.model_path = model;
    gen.prompts_path = ws.path("prompts.jsonl");
    gen.out_path = ws.path("traces_cot.jsonl");
    gen.mode = "cot";
    gen.common.overrides = kSmallModel;
    REQUIRE(cmd_generate(gen) == 0);

    GenerateArgs gen0 = gen;
    gen0.mode = "latent";
    gen0.out_path = ws.path("traces_latent0.jsonl");
    gen0.common.overrides = kSmallModel;
    gen0.common.overrides.push_back("switch.mode=fixed");
    gen0.common.overrides.push_back("switch.fixed_steps=0");
    REQUIRE(cmd_generate(gen0) == 0);

    const auto cot_traces = read_traces_jsonl(ws.path("traces_cot.jsonl"));
    const auto latent0 = read_traces_jsonl(ws.path("traces_latent0.jsonl"));
    REQUIRE(cot_traces.size() == 10);
    REQUIRE(latent0.size() == 10);
    for (size_t i = 0; i < 10; ++i) {
        CHECK(cot_traces[i].id == "p" + std::to_string(i));  // input order
        CHECK(latent0[i].explicit_token_ids == cot_traces[i].explicit_token_ids);
        CHECK(latent0[i].total_tokens == cot_traces[i].total_tokens);
    }

    // -- determinism: rerun is byte-identical ------------------------------
    GenerateArgs gen_rerun = gen0;
    gen_rerun.out_path = ws.path("traces_latent0_rerun.jsonl");
    REQUIRE(cmd_generate(gen_rerun) == 0);
    CHECK(ws.read("traces_latent0.jsonl") == ws.read("traces_latent0_rerun.jsonl"));

    // -- generate with logs, then analyze all three figures ----------------
    GenerateArgs gen_logged = gen;
    gen_logged.mode = "latent";
    gen_logged.out_path = ws.path("traces_logged.jsonl");
    gen_logged.log_hidden = true;
    gen_logged.log_entropy = true;
    gen_logged.common.overrides.push_back("switch.mode=fixed");
    gen_logged.common.overrides.push_back("switch.fixed_steps=4");
    REQUIRE(cmd_generate(gen_logged) == 0);

    AnalyzeArgs an;
    an.traces_path = ws.path("traces_logged.jsonl");
    an.which = "fig7";
    an.out_path = ws.path("fig7.tsv");
    REQUIRE(cmd_analyze(an) == 0);
    CHECK(ws.read("fig7.tsv").find("step\tcount\tmedian") == 0);

    an.which = "fig3";
    an.out_path = ws.path("fig3.tsv");
    REQUIRE(cmd_analyze(an) == 0);
    CHECK(ws.read("fig3.tsv").find("bin\tlo\thi") == 0);

    an.which = "fig4";
    an.out_path = ws.path("fig4.tsv");
    REQUIRE(cmd_analyze(an) == 0);
    CHECK(ws.read("fig4.tsv").find("# explained_variance_ratio:") == 0);

    // fig3 without entropy logs names the missing flag
    an.traces_path = ws.path("traces_cot.jsonl");
    an.which = "fig3";
    an.out_path = ws.path("fig3_missing.tsv");
    try {
        cmd_analyze(an);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("--log-entropy") != std::string::npos);
    }

    // -- sweep --------------------------------------------------------------
    SweepArgs sweep;
    sweep.kind = "fixed";
    sweep.grid = "0,2,4";
    sweep.model_path = model;
    sweep.prompts_path = ws.path("prompts.jsonl");
    sweep.out_path = ws.path("sweep_fixed.tsv");
    sweep.common.overrides = kSmallModel;
    REQUIRE(cmd_sweep(sweep) == 0);
    const std::string table = ws.read("sweep_fixed.tsv");
    CHECK(table.find("budget\taccuracy\tmean_total_tokens\tmean_latent_steps") !=
          std::string::npos);
    CHECK(count_lines(table) == 5);  // config line + header + 3 rows

    SweepArgs esweep = sweep;
    esweep.kind = "entropy";
    esweep.grid = "0.5,2.0,3.5";
    esweep.out_path = ws.path("sweep_entropy.tsv");
    REQUIRE(cmd_sweep(esweep) == 0);
    const std::string etable = ws.read("sweep_entropy.tsv");
    CHECK(etable.find("threshold\t") != std::string::npos);
    // mean latent steps is nondecreasing in the threshold: the rollout is
    // unchanged up to the exit, so each trace can only switch later
    {
        std::istringstream ss(etable);
        std::string line;
        std::getline(ss, line);  // config comment
        std::getline(ss, line);  // header
        double prev = -1.0;
        int rows = 0;
        while (std::getline(ss, line)) {
            std::string f;
            std::vector<std::string> cols;
            std::istringstream row(line);
            while (std::getline(row, f, '\t')) cols.push_back(f);
            REQUIRE(cols.size() == 4);
            const double mean_latent = std::stod(cols[3]);
            CHECK(mean_latent >= prev);
            prev = mean_latent;
            ++rows;
        }
        CHECK(rows == 3);
    }
}

TEST_CASE("cli prep reports per-record failures and keeps going") {
    Workspace ws;
    std::string src = source_lines();
    src += R"({"record_id":"huge","problem":")" + std::string(400, 'a') +
           R"(","intuition":"x","short_cot":"y","answer":"z","difficulty":"easy"})" "\n";
    ws.write("source.jsonl", src);
    PrepArgs args = prep_args(ws);
    args.common.overrides.push_back("model.max_seq_len=64");
    const int rc = cmd_prep(args);
    CHECK(rc == static_cast<int>(ErrorKind::data));
    CHECK(count_lines(ws.read("prep/corpus.jsonl")) == 3);

    // empty source is an input error
    ws.write("empty.jsonl", "");
    PrepArgs empty_args = prep_args(ws);
    empty_args.source_path = ws.path("empty.jsonl");
    CHECK_THROWS_AS(cmd_prep(empty_args), InputError);
}

TEST_CASE("cli train runs, checkpoints, and resumes deterministically") {
    Workspace ws;
    ws.write("source.jsonl", source_lines());
    REQUIRE(cmd_prep(prep_args(ws)) == 0);

    auto with_train_cfg = [&](TrainArgs a) {
        a.common.overrides.push_back("train.batch_size=2");
        a.common.overrides.push_back("train.lr_peak=1e-3");
        a.common.overrides.push_back("train.lr_floor=1e-4");
        a.common.overrides.push_back("train.checkpoint_interval=2");
        a.common.overrides.push_back("train.total_steps=8");
        return a;
    };

    // 3 records, batch 2 -> 2 steps per epoch; 4 epochs -> 8 steps
    REQUIRE(cmd_train(with_train_cfg(train_args(ws, "full", 4))) == 0);
    const std::string full_log = ws.read("full/loss_log.tsv");
    CHECK(count_lines(full_log) == 9);  // header + 8 steps
    CHECK(fs::exists(ws.path("full/checkpoint_step4.manifest")));

    // resume from step 4 and replay the rest
    TrainArgs resume = with_train_cfg(train_args(ws, "resumed", 4));
    resume.resume_path = ws.path("full/checkpoint_step4");
    resume.teacher_sidecar_path = ws.path("full/teacher_sidecar.jsonl");
    REQUIRE(cmd_train(resume) == 0);
    const std::string resumed_log = ws.read("resumed/loss_log.tsv");
    CHECK(count_lines(resumed_log) == 5);  // header + steps 5..8

    // the resumed rows equal the uninterrupted rows for steps 5..8
    auto rows_from = [](const std::string& log, int skip) {
        std::vector<std::string> rows;
        std::istringstream ss(log);
        std::string line;
        int i = 0;
        while (std::getline(ss, line)) {
            if (i++ > skip) rows.push_back(line);
        }
        return rows;
    };
    const auto tail_full = rows_from(full_log, 4);      // skip header + steps 1..4
    const auto tail_resumed = rows_from(resumed_log, 0);  // skip header
    REQUIRE(tail_full.size() == tail_resumed.size());
    for (size_t i = 0; i < tail_full.size(); ++i) CHECK(tail_full[i] == tail_resumed[i]);

    // training actually reduced the loss on this tiny corpus
    const auto first_row = rows_from(full_log, 0).front();
    const auto last_row = rows_from(full_log, 0).back();
    const auto total_of = [](const std::string& row) {
        std::istringstream ss(row);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        return std::stod(fields[9]);
    };
    CHECK(total_of(last_row) < total_of(first_row));
}

TEST_CASE("cli generate records per-prompt capacity errors and continues") {
    Workspace ws;
    ws.write("source.jsonl", source_lines());
    REQUIRE(cmd_prep(prep_args(ws)) == 0);
    REQUIRE(cmd_train(train_args(ws, "train0", 0)) == 0);

    std::string prompts = R"({"id":"ok","prompt":"add 1 2"})" "\n";
    prompts += R"({"id":"too-long","prompt":")" + std::string(300, 'a') + R"("})" "\n";
    prompts += R"({"id":"ok2","prompt":"add 2 2"})" "\n";
    ws.write("prompts.jsonl", prompts);

    GenerateArgs gen;
    gen.model_path = ws.path("train0/checkpoint_final");
    gen.prompts_path = ws.path("prompts.jsonl");
    gen.out_path = ws.path("traces.jsonl");
    gen.mode = "latent";
    gen.common.overrides = kSmallModel;
    const int rc = cmd_generate(gen);
    CHECK(rc == static_cast<int>(ErrorKind::capacity));

    const std::string lines = ws.read("traces.jsonl");
    CHECK(count_lines(lines) == 3);
    CHECK(lines.find("\"error\"") != std::string::npos);
    // readers skip the error record
    CHECK(read_traces_jsonl(ws.path("traces.jsonl")).size() == 2);
}

TEST_CASE("run config parsing") {
    Workspace ws;
    ws.write("run.cfg", "# comment\nseed = 7\nsampler.top_k = 5\n\nmode = cot\n");
    RunConfig cfg = RunConfig::from_file(ws.path("run.cfg"));
    CHECK(cfg.seed() == 7);
    CHECK(cfg.get_long("sampler.top_k", 20) == 5);
    CHECK(cfg.get_str("mode", "latent") == "cot");
    cfg.apply_overrides({"sampler.top_k=9"});
    CHECK(cfg.get_long("sampler.top_k", 20) == 9);
    // defaults materialize into the echo
    cfg.get_double("sampler.temperature", 0.6);
    const std::string echo = cfg.echo_text();
    CHECK(echo.find("sampler.temperature = ") != std::string::npos);
    CHECK(echo.find("seed = 7") != std::string::npos);

    CHECK_THROWS_AS(cfg.apply_overrides({"nonsense"}), ConfigError);
    ws.write("bad.cfg", "key_without_equals\n");
    CHECK_THROWS_AS(RunConfig::from_file(ws.path("bad.cfg")), ConfigError);
}

TEST_CASE("cli generate: paired baseline, timings, and trained mode") {
    Workspace ws;
    ws.write("source.jsonl", source_lines());
    ws.write("prompts.jsonl", prompt_lines());
    REQUIRE(cmd_prep(prep_args(ws)) == 0);
    REQUIRE(cmd_train(train_args(ws, "train0", 0)) == 0);
    const std::string model = ws.path("train0/checkpoint_final");

    GenerateArgs gen;
    gen.model_path = model;
    gen.prompts_path = ws.path("prompts.jsonl");
    gen.out_path = ws.path("paired.jsonl");
    gen.mode = "latent";
    gen.paired_cot = true;
    gen.common.overrides = kSmallModel;
    gen.common.overrides.push_back("switch.mode=fixed");
    gen.common.overrides.push_back("switch.fixed_steps=0");
    REQUIRE(cmd_generate(gen) == 0);
    const auto latent = read_traces_jsonl(ws.path("paired.jsonl"));
    const auto paired = read_traces_jsonl(ws.path("paired.jsonl.paired_cot.jsonl"));
    REQUIRE(latent.size() == paired.size());
    for (size_t i = 0; i < latent.size(); ++i) {
        CHECK(latent[i].explicit_token_ids == paired[i].explicit_token_ids);  // shared seed
    }

    GenerateArgs timed = gen;
    timed.paired_cot = false;
    timed.timings = true;
    timed.out_path = ws.path("timed.jsonl");
    REQUIRE(cmd_generate(timed) == 0);
    for (const auto& t : read_traces_jsonl(ws.path("timed.jsonl"))) {
        CHECK(t.duration_ms >= 0.0);
    }

    GenerateArgs trained = gen;
    trained.paired_cot = false;
    trained.mode = "trained";
    trained.out_path = ws.path("trained.jsonl");
    trained.common.overrides.push_back("projector.mode=learned");
    REQUIRE(cmd_generate(trained) == 0);
    const auto trained_traces = read_traces_jsonl(ws.path("trained.jsonl"));
    REQUIRE(trained_traces.size() == 10);
    for (const auto& t : trained_traces) {
        CHECK(t.mode == "trained");
        CHECK(t.switch_step >= 1);
        CHECK(t.total_tokens ==
              t.switch_step + static_cast<int>(t.explicit_token_ids.size()));
    }
}

TEST_CASE("cli prep: curriculum ordering is applied") {
    Workspace ws;
    // hard first in the file; curriculum must put easy first
    std::string src =
        R"({"record_id":"h1","problem":"p","intuition":"plan","short_cot":"c","answer":"x","difficulty":"hard"})"
        "\n"
        R"({"record_id":"e1","problem":"p","intuition":"plan","short_cot":"c","answer":"x","difficulty":"easy"})"
        "\n";
    ws.write("source.jsonl", src);
    PrepArgs args = prep_args(ws);
    args.curriculum = true;
    REQUIRE(cmd_prep(args) == 0);
    const auto rendered = read_rendered_jsonl(ws.path("prep/corpus.jsonl"));
    REQUIRE(rendered.size() == 2);
    CHECK(rendered[0].record_id == "e1");
    CHECK(rendered[1].record_id == "h1");
}

TEST_CASE("cli generate: worker width never changes the bytes") {
    Workspace ws;
    ws.write("source.jsonl", source_lines());
    ws.write("prompts.jsonl", prompt_lines());
    REQUIRE(cmd_prep(prep_args(ws)) == 0);
    REQUIRE(cmd_train(train_args(ws, "train0", 0)) == 0);

    auto generate_with = [&](int workers, const std::string& out) {
        GenerateArgs gen;
        gen.model_path = ws.path("train0/checkpoint_final");
        gen.prompts_path = ws.path("prompts.jsonl");
        gen.out_path = ws.path(out);
        gen.mode = "latent";
        gen.common.overrides = kSmallModel;
        gen.common.overrides.push_back("workers=" + std::to_string(workers));
        REQUIRE(cmd_generate(gen) == 0);
    };
    generate_with(1, "serial.jsonl");
    generate_with(4, "pooled.jsonl");
    CHECK(ws.read("serial.jsonl") == ws.read("pooled.jsonl"));
}
