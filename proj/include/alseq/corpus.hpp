#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace alseq {

enum class TagScheme { iob1, iob2 };

const char* to_string(TagScheme s);
TagScheme tag_scheme_from_string(const std::string& s);

struct Token {
    std::string surface;
    std::string pos;       // empty when the corpus has no POS column
    std::string gold_tag;  // "O", "B-X" or "I-X"

    bool operator==(const Token&) const = default;
};

struct Sentence {
    int id = -1;  // unique within its corpus
    std::vector<Token> tokens;

    std::size_t size() const { return tokens.size(); }
    bool operator==(const Sentence&) const = default;
};

/// Label inventory. Index 0 is always "O"; the remaining labels are sorted so
/// tag ids are a pure function of the label set.
struct TagSet {
    TagScheme scheme = TagScheme::iob2;
    std::vector<std::string> labels;
    std::vector<std::string> entity_types;  // sorted, unique

    static TagSet from_labels(std::vector<std::string> labels, TagScheme scheme);

    std::size_t size() const { return labels.size(); }
    /// -1 when the label is unknown.
    int index_of(const std::string& label) const;

    bool operator==(const TagSet&) const = default;
};

struct Span {
    std::string entity_type;
    int start = 0;  // token positions, inclusive
    int end = 0;

    bool operator==(const Span&) const = default;
    bool operator<(const Span& o) const {
        if (start != o.start) return start < o.start;
        if (end != o.end) return end < o.end;
        return entity_type < o.entity_type;
    }
};

struct Corpus {
    std::vector<Sentence> sentences;
    TagSet tagset;
    std::size_t token_count = 0;

    bool operator==(const Corpus&) const = default;
};

/// 0-based column positions inside a whitespace-separated CoNLL row.
struct ColumnMap {
    int columns = 2;   // expected column count per row
    int surface = 0;
    int pos = -1;      // -1: corpus has no POS column
    int tag = 1;
};

Corpus parse_conll(std::istream& in, const ColumnMap& cols, TagScheme scheme);
Corpus parse_conll(const std::filesystem::path& path, const ColumnMap& cols, TagScheme scheme);

/// One sentence per block, one token per line, single-space separated,
/// POS column included only when some token carries one.
void write_conll(const Corpus& corpus, std::ostream& out);

/// Spans under the scheme's reading with lenient repair: a continuation tag
/// with no compatible open span opens a new one instead of failing.
std::vector<Span> extract_spans(std::span<const std::string> tags, TagScheme scheme);

/// Inverse encoding (always IOB2). Spans must be non-overlapping and inside
/// [0, length).
std::vector<std::string> spans_to_iob2(std::span<const Span> spans, int length);

/// Strict scheme violation, reported by the corpus validator.
struct SchemeViolation {
    int sentence_id = 0;
    int position = 0;
    std::string tag;
    std::string reason;
};

std::vector<SchemeViolation> find_scheme_violations(const Corpus& corpus);

/// Synthetic NER-style corpus generator. Entity surface forms are capitalized
/// pseudo-words with type-characteristic suffixes; fillers are lowercase and
/// Zipf-distributed; a small capitalized confusable pool plus random
/// annotation dropout keep the task noisy enough that margins stay
/// informative.
struct SynthSpec {
    int entity_types = 5;
    int vocabulary = 600;        // total distinct surface forms
    int min_sentence_len = 4;
    int max_sentence_len = 12;
    int sentences = 2000;
    std::uint64_t seed = 0;
};

Corpus synth_corpus(const SynthSpec& spec);

}  // namespace alseq
