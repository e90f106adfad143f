#include "alseq/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "alseq/error.hpp"
#include "alseq/rng.hpp"

namespace alseq {

const char* to_string(TagScheme s) {
    return s == TagScheme::iob1 ? "iob1" : "iob2";
}

TagScheme tag_scheme_from_string(const std::string& s) {
    if (s == "iob1") return TagScheme::iob1;
    if (s == "iob2") return TagScheme::iob2;
    throw ConfigError("unknown tag scheme '" + s + "' (expected iob1 or iob2)");
}

namespace {

// "O" | "B-<type>" | "I-<type>", nonempty type
bool valid_tag(const std::string& tag) {
    if (tag == "O") return true;
    if (tag.size() < 3) return false;
    if (tag[0] != 'B' && tag[0] != 'I') return false;
    return tag[1] == '-';
}

std::string tag_type(const std::string& tag) { return tag.substr(2); }

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

bool blank_line(const std::string& line) {
    return std::all_of(line.begin(), line.end(),
                       [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

}  // namespace

TagSet TagSet::from_labels(std::vector<std::string> labels, TagScheme scheme) {
    std::set<std::string> uniq;
    std::set<std::string> types;
    for (const auto& l : labels) {
        if (!valid_tag(l))
            throw DataError("invalid tag label '" + l + "'");
        uniq.insert(l);
        if (l != "O") types.insert(tag_type(l));
    }
    if (types.empty())
        throw DataError("tag set has no entity labels (corpus is all-O)");

    TagSet ts;
    ts.scheme = scheme;
    ts.labels.push_back("O");
    for (const auto& l : uniq)
        if (l != "O") ts.labels.push_back(l);
    ts.entity_types.assign(types.begin(), types.end());
    return ts;
}

int TagSet::index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    return -1;
}

Corpus parse_conll(std::istream& in, const ColumnMap& cols, TagScheme scheme) {
    if (cols.columns < 1)
        throw ConfigError("column_map: columns must be >= 1");
    auto check_col = [&](int c, const char* name) {
        if (c < 0 || c >= cols.columns)
            throw ConfigError(std::string("column_map: ") + name + " column out of range");
    };
    check_col(cols.surface, "surface");
    check_col(cols.tag, "tag");
    if (cols.pos != -1) check_col(cols.pos, "pos");

    Corpus corpus;
    std::vector<std::string> labels;
    Sentence current;
    int line_no = 0;
    std::string line;

    auto flush = [&]() {
        if (!current.tokens.empty()) {
            current.id = static_cast<int>(corpus.sentences.size());
            corpus.token_count += current.tokens.size();
            corpus.sentences.push_back(std::move(current));
            current = Sentence{};
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank_line(line)) {
            flush();
            continue;
        }
        auto fields = split_fields(line);
        if (!fields.empty() && fields[0] == "-DOCSTART-") continue;  // document marker
        if (static_cast<int>(fields.size()) != cols.columns)
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(cols.columns) + " columns, got " +
                            std::to_string(fields.size()));

        Token tok;
        tok.surface = fields[static_cast<std::size_t>(cols.surface)];
        if (cols.pos != -1) tok.pos = fields[static_cast<std::size_t>(cols.pos)];
        tok.gold_tag = fields[static_cast<std::size_t>(cols.tag)];
        if (!valid_tag(tok.gold_tag))
            throw DataError("line " + std::to_string(line_no) + ": malformed tag '" +
                            tok.gold_tag + "'");
        labels.push_back(tok.gold_tag);
        current.tokens.push_back(std::move(tok));
    }
    flush();

    if (corpus.sentences.empty())
        throw DataError("corpus contains no sentences");
    corpus.tagset = TagSet::from_labels(std::move(labels), scheme);
    return corpus;
}

Corpus parse_conll(const std::filesystem::path& path, const ColumnMap& cols, TagScheme scheme) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open corpus file: " + path.string());
    try {
        return parse_conll(in, cols, scheme);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_conll(const Corpus& corpus, std::ostream& out) {
    bool has_pos = false;
    for (const auto& s : corpus.sentences)
        for (const auto& t : s.tokens)
            if (!t.pos.empty()) { has_pos = true; break; }

    bool first = true;
    for (const auto& s : corpus.sentences) {
        if (!first) out << '\n';
        first = false;
        for (const auto& t : s.tokens) {
            out << t.surface;
            if (has_pos) out << ' ' << (t.pos.empty() ? "_" : t.pos);
            out << ' ' << t.gold_tag << '\n';
        }
    }
}

// Both schemes share one lenient automaton: a continuation without a
// compatible open span opens a new one, a boundary tag closes and reopens.
// Differences between IOB1 and IOB2 only exist for *strict* validation,
// which find_scheme_violations handles.
std::vector<Span> extract_spans(std::span<const std::string> tags, TagScheme) {
    std::vector<Span> spans;
    int open_start = -1;
    std::string open_type;

    auto close = [&](int end_pos) {
        if (open_start >= 0) {
            spans.push_back({open_type, open_start, end_pos});
            open_start = -1;
        }
    };

    for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
        const std::string& t = tags[static_cast<std::size_t>(i)];
        if (t == "O") {
            close(i - 1);
            continue;
        }
        if (!valid_tag(t))
            throw DataError("invalid tag '" + t + "' at position " + std::to_string(i));
        const std::string type = tag_type(t);
        if (t[0] == 'I' && open_start >= 0 && open_type == type)
            continue;  // extend
        close(i - 1);
        open_start = i;
        open_type = type;
    }
    close(static_cast<int>(tags.size()) - 1);
    return spans;
}

std::vector<std::string> spans_to_iob2(std::span<const Span> spans, int length) {
    std::vector<std::string> tags(static_cast<std::size_t>(length), "O");
    for (const auto& sp : spans) {
        if (sp.start < 0 || sp.end >= length || sp.start > sp.end)
            throw DataError("span [" + std::to_string(sp.start) + "," +
                            std::to_string(sp.end) + "] out of range for length " +
                            std::to_string(length));
        for (int i = sp.start; i <= sp.end; ++i) {
            if (tags[static_cast<std::size_t>(i)] != "O")
                throw DataError("overlapping spans at position " + std::to_string(i));
            tags[static_cast<std::size_t>(i)] =
                (i == sp.start ? "B-" : "I-") + sp.entity_type;
        }
    }
    return tags;
}

std::vector<SchemeViolation> find_scheme_violations(const Corpus& corpus) {
    std::vector<SchemeViolation> out;
    for (const auto& s : corpus.sentences) {
        for (int i = 0; i < static_cast<int>(s.tokens.size()); ++i) {
            const std::string& t = s.tokens[static_cast<std::size_t>(i)].gold_tag;
            if (t == "O") continue;
            const std::string type = tag_type(t);
            const std::string* prev =
                i > 0 ? &s.tokens[static_cast<std::size_t>(i - 1)].gold_tag : nullptr;
            auto prev_same_type = [&]() {
                return prev && *prev != "O" && tag_type(*prev) == type;
            };
            if (corpus.tagset.scheme == TagScheme::iob2) {
                // I-X must continue a same-type span
                if (t[0] == 'I' && !prev_same_type())
                    out.push_back({s.id, i, t, "continuation without open span"});
            } else {
                // B-X only marks the boundary between adjacent same-type spans
                if (t[0] == 'B' && !prev_same_type())
                    out.push_back({s.id, i, t, "boundary marker without preceding same-type span"});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

const char* kTypeNames[] = {"PER", "LOC", "ORG", "MISC", "GPE", "EVT", "FAC", "PRD"};

std::string type_name(int t) {
    if (t < 8) return kTypeNames[t];
    return "TYPE" + std::to_string(t);
}

// Type-characteristic suffixes; appended to most entity names so suffix
// features carry real (but imperfect) signal.
const char* kTypeSuffix[] = {"ov", "ia", "ium", "ix", "esh", "or", "al", "un"};

std::string make_word(Rng& rng) {
    static const char* consonants = "bdfgklmnprstvz";
    static const char* vowels = "aeiou";
    const int syllables = rng.uniform_int(2, 3);
    std::string w;
    for (int s = 0; s < syllables; ++s) {
        w += consonants[rng.below(14)];
        w += vowels[rng.below(5)];
    }
    return w;
}

std::string capitalize(std::string w) {
    if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    return w;
}

// Cumulative-weight sampler (Zipf-style long tails).
struct WeightedPicker {
    std::vector<double> cum;
    double total = 0;

    explicit WeightedPicker(std::size_t n, double exponent) {
        cum.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            total += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
            cum.push_back(total);
        }
    }

    std::size_t pick(Rng& rng) const {
        const double u = rng.uniform() * total;
        return static_cast<std::size_t>(
            std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    }
};

}  // namespace

Corpus synth_corpus(const SynthSpec& spec) {
    if (spec.entity_types < 1)
        throw ConfigError("synthetic corpus: entity_types must be >= 1");
    if (spec.sentences < 1)
        throw ConfigError("synthetic corpus: sentences must be >= 1");
    if (spec.min_sentence_len < 1 || spec.max_sentence_len < spec.min_sentence_len)
        throw ConfigError("synthetic corpus: invalid sentence length range");
    if (spec.vocabulary < spec.entity_types + 1)
        throw ConfigError("synthetic corpus: vocabulary (" + std::to_string(spec.vocabulary) +
                          ") too small for " + std::to_string(spec.entity_types) +
                          " entity types");

    const int types = spec.entity_types;
    const int names_per_type =
        std::clamp(spec.vocabulary / (3 * types), 1, 24);
    const int confusables =
        std::min(12, std::max(0, spec.vocabulary - names_per_type * types - 8));
    const int fillers = spec.vocabulary - names_per_type * types - confusables;

    // Generation knobs. Fixed here rather than exposed on SyntheticSpec: tuned so
    // uncertainty-driven acquisition has headroom over random selection
    // without making the task trivial.
    const double p_no_entity = 0.35;       // sentence carries no mention at all
    const double p_entity_start = 0.18;    // per-token chance to open a mention
    const double p_suffix = 0.75;          // entity name carries its type suffix
    const double p_drop_annotation = 0.05; // mention emitted with O tags
    const double p_confusable = 0.05;      // filler slot drawn from capitalized pool

    Rng rng(spec.seed);

    // Vocabulary: uniqueness on the lowercased final form so identity
    // features never alias across roles.
    std::set<std::string> used;
    auto fresh = [&](const std::string& candidate) {
        std::string low = candidate;
        for (auto& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return used.insert(low).second;
    };

    std::vector<std::vector<std::string>> lexicon(static_cast<std::size_t>(types));
    for (int t = 0; t < types; ++t) {
        while (static_cast<int>(lexicon[static_cast<std::size_t>(t)].size()) < names_per_type) {
            std::string w = make_word(rng);
            if (rng.bernoulli(p_suffix)) w += kTypeSuffix[t % 8];
            w = capitalize(w);
            if (fresh(w)) lexicon[static_cast<std::size_t>(t)].push_back(w);
        }
    }
    std::vector<std::string> confusable_pool;
    while (static_cast<int>(confusable_pool.size()) < confusables) {
        std::string w = capitalize(make_word(rng));
        if (fresh(w)) confusable_pool.push_back(w);
    }
    std::vector<std::string> filler_pool;
    while (static_cast<int>(filler_pool.size()) < fillers) {
        std::string w = make_word(rng);
        if (fresh(w)) filler_pool.push_back(w);
    }

    const WeightedPicker filler_picker(filler_pool.size(), 1.0);
    const WeightedPicker name_picker(static_cast<std::size_t>(names_per_type), 0.8);
    const WeightedPicker type_picker(static_cast<std::size_t>(types), 1.0);
    const WeightedPicker confusable_picker(confusable_pool.size(), 1.0);

    Corpus corpus;
    for (int si = 0; si < spec.sentences; ++si) {
        Sentence sent;
        sent.id = si;
        const int n = rng.uniform_int(spec.min_sentence_len, spec.max_sentence_len);
        const bool entity_free = rng.bernoulli(p_no_entity);
        int i = 0;
        while (i < n) {
            if (!entity_free && rng.bernoulli(p_entity_start)) {
                const int t = static_cast<int>(type_picker.pick(rng));
                int len = 1;
                const double u = rng.uniform();
                if (u > 0.60) len = 2;
                if (u > 0.90) len = 3;
                len = std::min(len, n - i);
                const bool dropped = rng.bernoulli(p_drop_annotation);
                for (int k = 0; k < len; ++k) {
                    Token tok;
                    tok.surface =
                        lexicon[static_cast<std::size_t>(t)][name_picker.pick(rng)];
                    tok.gold_tag = dropped ? "O"
                                           : (k == 0 ? "B-" : "I-") + type_name(t);
                    sent.tokens.push_back(std::move(tok));
                }
                i += len;
            } else {
                Token tok;
                if (!confusable_pool.empty() && rng.bernoulli(p_confusable))
                    tok.surface = confusable_pool[confusable_picker.pick(rng)];
                else
                    tok.surface = filler_pool[filler_picker.pick(rng)];
                tok.gold_tag = "O";
                sent.tokens.push_back(std::move(tok));
                ++i;
            }
        }
        corpus.token_count += sent.tokens.size();
        corpus.sentences.push_back(std::move(sent));
    }

    // Label inventory is the generator's full type set, not the realized
    // one, so the tag set is stable across sizes and seeds.
    std::vector<std::string> labels{"O"};
    for (int t = 0; t < types; ++t) {
        labels.push_back("B-" + type_name(t));
        labels.push_back("I-" + type_name(t));
    }
    corpus.tagset = TagSet::from_labels(std::move(labels), TagScheme::iob2);
    return corpus;
}

}  // namespace alseq
