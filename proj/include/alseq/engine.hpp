#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alseq/corpus.hpp"
#include "alseq/crf.hpp"
#include "alseq/neural.hpp"
#include "alseq/records.hpp"
#include "alseq/strategies.hpp"

namespace alseq {

struct ModelSpec {
    enum class Kind { crf, neural };
    Kind kind = Kind::crf;
    CrfOptions crf;
    NeuralOptions neural;

    bool operator==(const ModelSpec&) const = default;
    nlohmann::json to_json() const;
    static ModelSpec from_json(const nlohmann::json& j);
};

struct CorpusSpec {
    enum class Kind { files, synthetic };
    Kind kind = Kind::synthetic;
    // files
    std::string train_path, test_path;
    ColumnMap columns;
    TagScheme scheme = TagScheme::iob2;
    // synthetic (synth.sentences = train size; test generated on top)
    SynthSpec synth;
    int test_sentences = 500;

    nlohmann::json to_json() const;
    static CorpusSpec from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
    CorpusSpec corpus;
    ModelSpec acquisition;
    ModelSpec successor;  // input may omit it; resolved form always carries it
    Strategy strategy = Strategy::random;
    McConfig mc;
    double seed_fraction = 0.02;
    double step_fraction = 0.02;
    int iterations = 24;
    double dev_fraction = 0.25;
    int repeats = 1;
    std::uint64_t base_seed = 0;
    std::string output_dir = "runs";

    /// Throws ConfigError naming the offending field.
    void validate() const;
    /// Canonical resolved form: every field present, mc normalized.
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    /// Fingerprint of the experiment identity: canonical form minus
    /// base_seed, repeats and output_dir (those don't change what a single
    /// run computes).
    std::string hash() const;
};

/// The only gate to train-pool gold labels. Models never see Token::gold_tag;
/// tags enter training exclusively through reveal(), and the counter is the
/// audit trail.
class AnnotationStore {
public:
    AnnotationStore(const Corpus& corpus, const TagSet& tagset);

    /// Tag ids of one sentence; revealing twice is an error.
    std::vector<int> reveal(int sentence_id);
    bool revealed(int sentence_id) const;
    long reveal_count() const { return reveals_; }

private:
    std::vector<std::vector<int>> tag_ids_;
    std::vector<char> revealed_flags_;
    long reveals_ = 0;
};

/// Train/test pair over one shared tag set.
struct ExperimentData {
    Corpus train;
    Corpus test;
    TagSet tagset;
};

ExperimentData load_experiment_data(const CorpusSpec& spec);

RunRecord run_single(const ExperimentConfig& config, std::uint64_t run_seed,
                     const ExperimentData& data);

struct ExperimentResult {
    std::vector<RunRecord> records;  // one per repeat, seed order
    LearningCurve curve;
    int reused = 0;  // records loaded from disk instead of recomputed
};

using LogFn = std::function<void(const std::string&)>;

/// Runs repeats with seeds base_seed .. base_seed+repeats-1, persisting each
/// record to <output_dir>/<hash>/<seed>.json plus config.json and curve.csv.
/// Existing records are reused unless force is set. thread_count: >0 fixed,
/// 0 hardware concurrency, <0 consult AL_SEQTAG_THREADS (default 1).
ExperimentResult run_experiment(const ExperimentConfig& config, bool force = false,
                                const LogFn& log = {}, int thread_count = -1);

int resolve_thread_count(int requested, int repeats);

}  // namespace alseq
