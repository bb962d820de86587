#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ltx/tokenizer.hpp"
#include "ltx/train_example.hpp"

namespace ltx {

struct SourceRecord {
    std::string record_id;
    std::string problem;
    std::string intuition;   // distilled high-level plan
    std::string short_cot;
    std::string answer;
    std::string difficulty;  // easy | medium | hard
    std::optional<long> original_cot_len;  // tokens, for compression stats

    void validate() const;
};

// m = clamp(round(L / 2), 1, cap), round half up.
int assign_latent_budget(int intuition_token_len, int cap);

struct RenderedExample {
    TrainingExample example;
    std::string record_id;
    // student KL position -> teacher continuation position, a bijection
    std::vector<std::pair<int, int>> offset_map;
    double compression_ratio = 0.0;  // NaN when the original length is unknown
    std::vector<int> teacher_ref_tokens;
    int teacher_ref_boundary = 0;    // continuation starts here
};

// Renders the two-part response template
//   prompt, latent_open, m placeholders, latent_close, think_open, CoT,
//   think_close, answer, end_of_message
// with labels, the five supervision masks, the halt target at the
// latent_close position, and the teacher-reference alignment.
RenderedExample render_example(const SourceRecord& record, const Tokenizer& tokenizer, int cap,
                               int max_seq_len);

struct TeacherReference {
    std::vector<int> tokens;          // problem + intuition, then the continuation
    int continuation_boundary = 0;    // index of the first continuation token
};

// Latent-free reference conversation: problem and intuition as input,
// think_open + CoT + think_close + answer as the continuation to match.
TeacherReference build_teacher_reference(const SourceRecord& record, const Tokenizer& tokenizer);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<long> counts;
};

Histogram build_histogram(const std::vector<double>& values, int bins = 10);

struct CorpusStats {
    long count = 0;
    std::map<std::string, long> difficulty_counts;
    long records_with_ratio = 0;
    double ratio_mean = 0.0;
    double ratio_median = 0.0;
    double latent_mean = 0.0;
    double latent_median = 0.0;
    Histogram latent_steps_hist;
    Histogram cot_token_hist;
    Histogram ratio_hist;
};

CorpusStats corpus_stats(const std::vector<RenderedExample>& rendered,
                         const std::vector<SourceRecord>& sources);
std::string format_stats_report(const CorpusStats& stats);

// Curriculum ordering: difficulty buckets easy, medium, hard in order, with a
// seeded shuffle inside each bucket.
std::vector<size_t> curriculum_order(const std::vector<SourceRecord>& records, uint64_t seed);

// -- line-delimited IO --------------------------------------------------------

struct SourceReadResult {
    std::vector<SourceRecord> records;
    std::vector<std::string> errors;  // one message per bad line
};
SourceReadResult read_source_jsonl(const std::string& path);

void write_rendered_jsonl(const std::string& path, const std::vector<RenderedExample>& rendered);
std::vector<RenderedExample> read_rendered_jsonl(const std::string& path);

void write_teacher_sidecar(const std::string& path,
                           const std::map<std::string, std::vector<TeacherPosition>>& by_record);
std::map<std::string, std::vector<TeacherPosition>> read_teacher_sidecar(const std::string& path);

}  // namespace ltx
