#include "ltx/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ltx/rng.hpp"

namespace ltx {

using nlohmann::ordered_json;

namespace {

std::string trimmed(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::pair<int, int>> mask_to_runs(const std::vector<uint8_t>& mask) {
    std::vector<std::pair<int, int>> runs;
    int start = -1;
    for (size_t i = 0; i <= mask.size(); ++i) {
        const bool on = i < mask.size() && mask[i];
        if (on && start < 0) start = static_cast<int>(i);
        if (!on && start >= 0) {
            runs.emplace_back(start, static_cast<int>(i) - start);
            start = -1;
        }
    }
    return runs;
}

std::vector<uint8_t> runs_to_mask(const std::vector<std::pair<int, int>>& runs, size_t n) {
    std::vector<uint8_t> mask(n, 0);
    for (const auto& [start, len] : runs) {
        if (start < 0 || len < 0 || static_cast<size_t>(start) + len > n) {
            throw DataError("corpus: mask run out of range");
        }
        for (int i = 0; i < len; ++i) mask[start + i] = 1;
    }
    return mask;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void SourceRecord::validate() const {
    if (trimmed(record_id).empty()) throw DataError("record: empty record_id");
    auto require = [&](const std::string& field, const char* name) {
        if (trimmed(field).empty()) {
            throw DataError("record " + record_id + ": empty " + name);
        }
    };
    require(problem, "problem");
    require(intuition, "intuition");
    require(short_cot, "short_cot");
    require(answer, "answer");
    if (difficulty != "easy" && difficulty != "medium" && difficulty != "hard") {
        throw DataError("record " + record_id + ": difficulty must be easy|medium|hard");
    }
    if (original_cot_len && *original_cot_len <= 0) {
        throw DataError("record " + record_id + ": original_cot_len must be positive");
    }
}

int assign_latent_budget(int intuition_token_len, int cap) {
    if (intuition_token_len < 1) throw DataError("budget: intuition length must be >= 1");
    if (cap < 1) throw InputError("budget: cap must be >= 1");
    const int rounded = static_cast<int>(std::floor(intuition_token_len / 2.0 + 0.5));
    return std::clamp(rounded, 1, cap);
}

RenderedExample render_example(const SourceRecord& record, const Tokenizer& tokenizer, int cap,
                               int max_seq_len) {
    record.validate();
    const int open_id = tokenizer.role_id(Role::latent_open);
    const int close_id = tokenizer.role_id(Role::latent_close);
    const int think_open_id = tokenizer.role_id(Role::think_open);
    const int think_close_id = tokenizer.role_id(Role::think_close);
    const int eom_id = tokenizer.role_id(Role::end_of_message);
    const int pad_id = tokenizer.role_id(Role::latent_pad);

    const std::vector<int> prompt = tokenizer.encode(record.problem);
    const std::vector<int> intuition = tokenizer.encode(record.intuition);
    const std::vector<int> cot = tokenizer.encode(record.short_cot);
    const std::vector<int> answer = tokenizer.encode(record.answer);
    const int m = assign_latent_budget(static_cast<int>(intuition.size()), cap);

    RenderedExample out;
    out.record_id = record.record_id;
    TrainingExample& ex = out.example;

    auto push = [&](int tok) { ex.token_ids.push_back(tok); };
    for (int t : prompt) push(t);
    const int latent_open_pos = static_cast<int>(ex.token_ids.size());
    push(open_id);
    for (int i = 0; i < m; ++i) push(pad_id);
    const int latent_close_pos = static_cast<int>(ex.token_ids.size());
    push(close_id);
    const int think_open_pos = static_cast<int>(ex.token_ids.size());
    push(think_open_id);
    for (int t : cot) push(t);
    const int think_close_pos = static_cast<int>(ex.token_ids.size());
    push(think_close_id);
    for (int t : answer) push(t);
    const int answer_end_pos = static_cast<int>(ex.token_ids.size());  // exclusive
    push(eom_id);

    const size_t n = ex.token_ids.size();
    if (static_cast<int>(n) > max_seq_len) {
        throw CapacityError("record " + record.record_id + ": rendered length " +
                            std::to_string(n) + " exceeds max_seq_len " +
                            std::to_string(max_seq_len));
    }

    ex.labels.assign(n, kIgnoreLabel);
    ex.mask_latent_interior.assign(n, 0);
    ex.mask_latent_all.assign(n, 0);
    ex.mask_cot_interior.assign(n, 0);
    ex.mask_noncot_supervised.assign(n, 0);
    ex.mask_kl_positions.assign(n, 0);
    ex.halt_targets.assign(n, 0);
    ex.n_latent_steps = m;

    for (int i = latent_open_pos + 1; i < latent_close_pos; ++i) {
        ex.mask_latent_interior[i] = 1;
        ex.mask_latent_all[i] = 1;
    }
    ex.mask_latent_all[latent_close_pos] = 1;
    ex.halt_targets[latent_close_pos] = 1;

    // Supervised response: boundary tokens, think tags, CoT, answer, terminal.
    ex.mask_noncot_supervised[latent_open_pos] = 1;
    ex.mask_noncot_supervised[latent_close_pos] = 1;
    ex.mask_noncot_supervised[think_open_pos] = 1;
    for (int i = think_open_pos + 1; i < think_close_pos; ++i) ex.mask_cot_interior[i] = 1;
    ex.mask_noncot_supervised[think_close_pos] = 1;
    for (int i = think_close_pos + 1; i < answer_end_pos; ++i) ex.mask_noncot_supervised[i] = 1;
    ex.mask_noncot_supervised[answer_end_pos] = 1;  // end_of_message

    for (size_t i = 0; i < n; ++i) {
        if (ex.mask_cot_interior[i] || ex.mask_noncot_supervised[i]) {
            ex.labels[i] = ex.token_ids[i];
        }
    }

    // KL positions mirror the teacher continuation: think_open .. answer end.
    for (int i = think_open_pos; i < answer_end_pos; ++i) {
        ex.mask_kl_positions[i] = 1;
        out.offset_map.emplace_back(i, i - think_open_pos);
    }

    const TeacherReference ref = build_teacher_reference(record, tokenizer);
    out.teacher_ref_tokens = ref.tokens;
    out.teacher_ref_boundary = ref.continuation_boundary;
    if (static_cast<int>(ref.tokens.size()) - ref.continuation_boundary !=
        static_cast<int>(out.offset_map.size())) {
        throw DataError("record " + record.record_id + ": teacher continuation misaligned");
    }

    out.compression_ratio =
        record.original_cot_len
            ? static_cast<double>(cot.size()) / static_cast<double>(*record.original_cot_len)
            : std::nan("");

    ex.validate();
    return out;
}

TeacherReference build_teacher_reference(const SourceRecord& record, const Tokenizer& tokenizer) {
    record.validate();
    TeacherReference ref;
    const std::vector<int> prompt = tokenizer.encode(record.problem);
    const std::vector<int> intuition = tokenizer.encode(record.intuition);
    const std::vector<int> cot = tokenizer.encode(record.short_cot);
    const std::vector<int> answer = tokenizer.encode(record.answer);
    ref.tokens = prompt;
    ref.tokens.insert(ref.tokens.end(), intuition.begin(), intuition.end());
    ref.continuation_boundary = static_cast<int>(ref.tokens.size());
    ref.tokens.push_back(tokenizer.role_id(Role::think_open));
    ref.tokens.insert(ref.tokens.end(), cot.begin(), cot.end());
    ref.tokens.push_back(tokenizer.role_id(Role::think_close));
    ref.tokens.insert(ref.tokens.end(), answer.begin(), answer.end());
    return ref;
}

Histogram build_histogram(const std::vector<double>& values, int bins) {
    Histogram h;
    if (values.empty() || bins < 1) return h;
    h.lo = *std::min_element(values.begin(), values.end());
    h.hi = *std::max_element(values.begin(), values.end());
    h.counts.assign(bins, 0);
    const double span = h.hi - h.lo;
    for (double v : values) {
        int b = span > 0.0 ? static_cast<int>((v - h.lo) / span * bins) : 0;
        b = std::clamp(b, 0, bins - 1);
        ++h.counts[b];
    }
    return h;
}

CorpusStats corpus_stats(const std::vector<RenderedExample>& rendered,
                         const std::vector<SourceRecord>& sources) {
    if (rendered.empty()) throw InputError("corpus_stats: empty corpus");
    if (rendered.size() != sources.size()) {
        throw InputError("corpus_stats: rendered/source size mismatch");
    }
    CorpusStats s;
    s.count = static_cast<long>(rendered.size());
    std::vector<double> ratios, latents, cot_lens;
    for (size_t i = 0; i < rendered.size(); ++i) {
        ++s.difficulty_counts[sources[i].difficulty];
        latents.push_back(rendered[i].example.n_latent_steps);
        long cot_tokens = 0;
        for (size_t p = 0; p < rendered[i].example.length(); ++p) {
            cot_tokens += rendered[i].example.mask_cot_interior[p] ? 1 : 0;
        }
        cot_lens.push_back(static_cast<double>(cot_tokens));
        if (!std::isnan(rendered[i].compression_ratio)) {
            ratios.push_back(rendered[i].compression_ratio);
            ++s.records_with_ratio;
        }
    }
    double sum = 0.0;
    for (double r : ratios) sum += r;
    s.ratio_mean = ratios.empty() ? std::nan("") : sum / ratios.size();
    s.ratio_median = median_of(ratios);
    sum = 0.0;
    for (double l : latents) sum += l;
    s.latent_mean = sum / latents.size();
    s.latent_median = median_of(latents);
    s.latent_steps_hist = build_histogram(latents);
    s.cot_token_hist = build_histogram(cot_lens);
    s.ratio_hist = build_histogram(ratios);
    return s;
}

static void format_histogram(std::ostringstream& out, const char* name, const Histogram& h) {
    out << name << " histogram";
    if (h.counts.empty()) {
        out << ": (no data)\n";
        return;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), " [%.6g, %.6g]:", h.lo, h.hi);
    out << buf;
    for (long c : h.counts) out << " " << c;
    out << "\n";
}

std::string format_stats_report(const CorpusStats& s) {
    std::ostringstream out;
    out << "examples: " << s.count << "\n";
    out << "difficulty shares:\n";
    for (const auto& [name, count] : s.difficulty_counts) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "  %s: %ld (%.1f%%)\n", name.c_str(), count,
                      100.0 * static_cast<double>(count) / static_cast<double>(s.count));
        out << buf;
    }
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "compression ratio: mean %.6g median %.6g (over %ld records)\n", s.ratio_mean,
                  s.ratio_median, s.records_with_ratio);
    out << buf;
    std::snprintf(buf, sizeof(buf), "latent steps: mean %.6g median %.6g\n", s.latent_mean,
                  s.latent_median);
    out << buf;
    format_histogram(out, "latent steps", s.latent_steps_hist);
    format_histogram(out, "cot tokens", s.cot_token_hist);
    format_histogram(out, "compression ratio", s.ratio_hist);
    return out.str();
}

std::vector<size_t> curriculum_order(const std::vector<SourceRecord>& records, uint64_t seed) {
    std::vector<std::vector<size_t>> buckets(3);
    for (size_t i = 0; i < records.size(); ++i) {
        const std::string& d = records[i].difficulty;
        buckets[d == "easy" ? 0 : d == "medium" ? 1 : 2].push_back(i);
    }
    std::vector<size_t> order;
    for (size_t b = 0; b < buckets.size(); ++b) {
        CounterRng rng(derive_seed(seed, "curriculum", b));
        auto& bucket = buckets[b];
        for (size_t i = bucket.size(); i > 1; --i) {
            std::swap(bucket[i - 1], bucket[rng.below(i)]);
        }
        order.insert(order.end(), bucket.begin(), bucket.end());
    }
    return order;
}

// -- IO -----------------------------------------------------------------------

SourceReadResult read_source_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("source: cannot open " + path);
    SourceReadResult out;
    std::string line;
    size_t lineno = 0;
    bool any = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (trimmed(line).empty()) continue;
        any = true;
        try {
            const ordered_json j = ordered_json::parse(line);
            SourceRecord r;
            r.record_id = j.at("record_id").get<std::string>();
            r.problem = j.at("problem").get<std::string>();
            r.intuition = j.at("intuition").get<std::string>();
            r.short_cot = j.at("short_cot").get<std::string>();
            r.answer = j.at("answer").get<std::string>();
            r.difficulty = j.at("difficulty").get<std::string>();
            if (j.contains("original_cot_len") && !j.at("original_cot_len").is_null()) {
                r.original_cot_len = j.at("original_cot_len").get<long>();
            }
            r.validate();
            out.records.push_back(std::move(r));
        } catch (const std::exception& e) {
            out.errors.push_back(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!any) throw InputError("source: no records in " + path);
    return out;
}

void write_rendered_jsonl(const std::string& path, const std::vector<RenderedExample>& rendered) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("corpus: cannot write " + path);
    for (const auto& r : rendered) {
        const TrainingExample& ex = r.example;
        ordered_json j;
        j["schema_version"] = 1;
        j["record_id"] = r.record_id;
        j["token_ids"] = ex.token_ids;
        j["labels"] = ex.labels;
        j["n_latent_steps"] = ex.n_latent_steps;
        j["mask_latent_interior"] = mask_to_runs(ex.mask_latent_interior);
        j["mask_latent_all"] = mask_to_runs(ex.mask_latent_all);
        j["mask_cot_interior"] = mask_to_runs(ex.mask_cot_interior);
        j["mask_noncot_supervised"] = mask_to_runs(ex.mask_noncot_supervised);
        j["mask_kl_positions"] = mask_to_runs(ex.mask_kl_positions);
        int halt_pos = -1;
        for (size_t i = 0; i < ex.halt_targets.size(); ++i) {
            if (ex.halt_targets[i]) halt_pos = static_cast<int>(i);
        }
        j["halt_target_pos"] = halt_pos;
        j["offset_map"] = r.offset_map;
        if (std::isnan(r.compression_ratio)) {
            j["compression_ratio"] = nullptr;
        } else {
            j["compression_ratio"] = r.compression_ratio;
        }
        j["teacher_ref_tokens"] = r.teacher_ref_tokens;
        j["teacher_ref_boundary"] = r.teacher_ref_boundary;
        out << j.dump() << "\n";
    }
}

std::vector<RenderedExample> read_rendered_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("corpus: cannot open " + path);
    std::vector<RenderedExample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trimmed(line).empty()) continue;
        try {
            const ordered_json j = ordered_json::parse(line);
            RenderedExample r;
            r.record_id = j.at("record_id").get<std::string>();
            TrainingExample& ex = r.example;
            ex.token_ids = j.at("token_ids").get<std::vector<int>>();
            ex.labels = j.at("labels").get<std::vector<int>>();
            ex.n_latent_steps = j.at("n_latent_steps").get<int>();
            const size_t n = ex.token_ids.size();
            using Runs = std::vector<std::pair<int, int>>;
            ex.mask_latent_interior = runs_to_mask(j.at("mask_latent_interior").get<Runs>(), n);
            ex.mask_latent_all = runs_to_mask(j.at("mask_latent_all").get<Runs>(), n);
            ex.mask_cot_interior = runs_to_mask(j.at("mask_cot_interior").get<Runs>(), n);
            ex.mask_noncot_supervised =
                runs_to_mask(j.at("mask_noncot_supervised").get<Runs>(), n);
            ex.mask_kl_positions = runs_to_mask(j.at("mask_kl_positions").get<Runs>(), n);
            ex.halt_targets.assign(n, 0);
            const int halt_pos = j.at("halt_target_pos").get<int>();
            if (halt_pos < 0 || halt_pos >= static_cast<int>(n)) {
                throw DataError("halt_target_pos out of range");
            }
            ex.halt_targets[halt_pos] = 1;
            r.offset_map = j.at("offset_map").get<Runs>();
            if (j.at("compression_ratio").is_null()) {
                r.compression_ratio = std::nan("");
            } else {
                r.compression_ratio = j.at("compression_ratio").get<double>();
            }
            r.teacher_ref_tokens = j.at("teacher_ref_tokens").get<std::vector<int>>();
            r.teacher_ref_boundary = j.at("teacher_ref_boundary").get<int>();
            ex.validate();
            out.push_back(std::move(r));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw DataError("corpus: bad line " + path + ":" + std::to_string(lineno) + ": " +
                            e.what());
        }
    }
    return out;
}

void write_teacher_sidecar(const std::string& path,
                           const std::map<std::string, std::vector<TeacherPosition>>& by_record) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("sidecar: cannot write " + path);
    for (const auto& [record_id, positions] : by_record) {
        ordered_json entries = ordered_json::array();
        for (size_t p = 0; p < positions.size(); ++p) {
            entries.push_back({{"pos", p},
                               {"ids", positions[p].ids},
                               {"probs", positions[p].probs},
                               {"tail_mass", positions[p].tail_mass}});
        }
        ordered_json j{{"record_id", record_id}, {"positions", std::move(entries)}};
        out << j.dump() << "\n";
    }
}

std::map<std::string, std::vector<TeacherPosition>> read_teacher_sidecar(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("sidecar: cannot open " + path);
    std::map<std::string, std::vector<TeacherPosition>> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trimmed(line).empty()) continue;
        try {
            const ordered_json j = ordered_json::parse(line);
            const std::string id = j.at("record_id").get<std::string>();
            std::vector<TeacherPosition> positions;
            for (const auto& e : j.at("positions")) {
                const size_t pos = e.at("pos").get<size_t>();
                if (pos != positions.size()) throw DataError("sidecar positions out of order");
                TeacherPosition tp;
                tp.ids = e.at("ids").get<std::vector<int>>();
                tp.probs = e.at("probs").get<std::vector<double>>();
                tp.tail_mass = e.at("tail_mass").get<double>();
                tp.validate();
                positions.push_back(std::move(tp));
            }
            out[id] = std::move(positions);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw DataError("sidecar: bad line " + path + ":" + std::to_string(lineno) + ": " +
                            e.what());
        }
    }
    return out;
}

}  // namespace ltx
