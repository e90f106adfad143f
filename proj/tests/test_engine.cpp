#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "alseq/engine.hpp"
#include "alseq/error.hpp"

using namespace alseq;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.corpus.kind = CorpusSpec::Kind::synthetic;
    cfg.corpus.synth.entity_types = 3;
    cfg.corpus.synth.vocabulary = 150;
    cfg.corpus.synth.sentences = 40;
    cfg.corpus.synth.seed = 77;
    cfg.corpus.test_sentences = 12;
    cfg.acquisition.kind = ModelSpec::Kind::crf;
    cfg.acquisition.crf.l1 = 0.05;
    cfg.acquisition.crf.l2 = 0.05;
    cfg.acquisition.crf.max_iterations = 40;
    cfg.successor = cfg.acquisition;
    cfg.strategy = Strategy::mnlp;
    cfg.seed_fraction = 0.1;
    cfg.step_fraction = 0.1;
    cfg.iterations = 3;
    return cfg;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("experiment config round trips through its canonical json") {
    ExperimentConfig cfg = small_config();
    cfg.acquisition.kind = ModelSpec::Kind::neural;
    cfg.acquisition.neural.hash_bits = 9;
    cfg.acquisition.neural.epochs = 5;
    cfg.successor.kind = ModelSpec::Kind::crf;
    cfg.strategy = Strategy::vr;
    cfg.mc = {McConfig::Variant::all, 5};
    cfg.base_seed = 11;
    cfg.repeats = 2;
    cfg.output_dir = "elsewhere";

    const auto j = cfg.to_json();
    const ExperimentConfig back = ExperimentConfig::from_json(j);
    CHECK(back.to_json().dump() == j.dump());
    CHECK(back.acquisition.kind == ModelSpec::Kind::neural);
    CHECK(back.acquisition.neural.hash_bits == 9);
    CHECK(back.successor.kind == ModelSpec::Kind::crf);
    CHECK(back.strategy == Strategy::vr);
    CHECK(back.mc.variant == McConfig::Variant::all);
    CHECK(back.mc.passes == 5);
    CHECK(back.base_seed == 11);
    CHECK(back.hash() == cfg.hash());
}

TEST_CASE("config parsing applies defaults and names bad fields") {
    const nlohmann::json minimal = {{"corpus", {{"type", "synthetic"}}},
                                    {"acquisition", {{"type", "crf"}}}};
    const ExperimentConfig cfg = ExperimentConfig::from_json(minimal);
    CHECK(cfg.strategy == Strategy::random);
    CHECK(cfg.iterations == 24);
    CHECK(cfg.seed_fraction == 0.02);
    CHECK(cfg.step_fraction == 0.02);
    CHECK(cfg.successor.kind == cfg.acquisition.kind);
    CHECK(cfg.successor == cfg.acquisition);
    CHECK(cfg.mc.variant == McConfig::Variant::none);

    // mc on a non-bayesian strategy is normalized away
    nlohmann::json with_mc = minimal;
    with_mc["strategy"] = "lc";
    with_mc["mc"] = {{"variant", "word"}, {"passes", 10}};
    CHECK(ExperimentConfig::from_json(with_mc).mc.variant == McConfig::Variant::none);

    nlohmann::json bad = minimal;
    bad["typo_field"] = 1;
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(bad),
                         doctest::Contains("typo_field"), ConfigError);

    bad = minimal;
    bad.erase("corpus");
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(bad), doctest::Contains("corpus"),
                         ConfigError);

    bad = minimal;
    bad.erase("acquisition");
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(bad), doctest::Contains("acquisition"),
                         ConfigError);

    bad = minimal;
    bad["iterations"] = "five";
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(bad), doctest::Contains("iterations"),
                         ConfigError);

    bad = minimal;
    bad["strategy"] = "margin";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);

    bad = minimal;
    bad["acquisition"] = {{"type", "svm"}};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
}

TEST_CASE("config validation names the offending field") {
    ExperimentConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());

    cfg.seed_fraction = 1.5;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("seed_fraction"), ConfigError);

    cfg = small_config();
    cfg.iterations = 0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("iterations"), ConfigError);

    cfg = small_config();
    cfg.seed_fraction = 0.5;
    cfg.step_fraction = 0.1;
    cfg.iterations = 6;  // schedule would pass 100% of the pool
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = small_config();
    cfg.strategy = Strategy::vr;  // no mc block
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("mc"), ConfigError);

    cfg.mc = {McConfig::Variant::all, 1};
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("passes"), ConfigError);

    cfg.mc.passes = 5;  // crf acquisition cannot serve vr
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("neural"), ConfigError);

    cfg = small_config();
    cfg.output_dir = "";
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("output_dir"), ConfigError);
}

TEST_CASE("config hash tracks experiment identity only") {
    const ExperimentConfig base = small_config();
    ExperimentConfig other = base;
    other.base_seed = 99;
    other.repeats = 7;
    other.output_dir = "elsewhere";
    CHECK(other.hash() == base.hash());

    other = base;
    other.acquisition.crf.l2 = 0.2;
    CHECK(other.hash() != base.hash());

    other = base;
    other.strategy = Strategy::lc;
    CHECK(other.hash() != base.hash());

    other = base;
    other.corpus.synth.seed = 78;
    CHECK(other.hash() != base.hash());
}

TEST_CASE("annotation store reveals each sentence once") {
    SynthSpec spec;
    spec.entity_types = 2;
    spec.vocabulary = 80;
    spec.sentences = 6;
    spec.seed = 3;
    const Corpus corpus = synth_corpus(spec);
    AnnotationStore store(corpus, corpus.tagset);

    CHECK(store.reveal_count() == 0);
    CHECK_FALSE(store.revealed(0));
    const auto tags = store.reveal(0);
    REQUIRE(tags.size() == corpus.sentences[0].size());
    for (std::size_t i = 0; i < tags.size(); ++i)
        CHECK(tags[i] == corpus.tagset.index_of(corpus.sentences[0].tokens[i].gold_tag));
    CHECK(store.revealed(0));
    CHECK(store.reveal_count() == 1);

    CHECK_THROWS_AS(store.reveal(0), RuntimeError);
    CHECK_THROWS_AS(store.reveal(-1), RuntimeError);
    CHECK_THROWS_AS(store.reveal(static_cast<int>(corpus.sentences.size())), RuntimeError);
    CHECK(store.reveal_count() == 1);

    // a gold tag outside the shared tag set is a data problem, caught up front
    Corpus mismatched;
    Sentence s;
    s.id = 0;
    s.tokens.push_back({"Mija", "", "B-PER"});
    mismatched.sentences.push_back(s);
    const TagSet narrow = TagSet::from_labels({"O", "B-LOC"}, TagScheme::iob2);
    CHECK_THROWS_AS(AnnotationStore(mismatched, narrow), DataError);
}

TEST_CASE("synthetic experiment data splits into train and test") {
    CorpusSpec spec;
    spec.kind = CorpusSpec::Kind::synthetic;
    spec.synth.entity_types = 3;
    spec.synth.vocabulary = 150;
    spec.synth.sentences = 30;
    spec.synth.seed = 5;
    spec.test_sentences = 8;

    const ExperimentData data = load_experiment_data(spec);
    REQUIRE(data.train.sentences.size() == 30);
    REQUIRE(data.test.sentences.size() == 8);
    for (int i = 0; i < 30; ++i) CHECK(data.train.sentences[static_cast<std::size_t>(i)].id == i);
    for (int i = 0; i < 8; ++i) CHECK(data.test.sentences[static_cast<std::size_t>(i)].id == i);

    CHECK(data.tagset.labels == data.train.tagset.labels);
    CHECK(data.tagset.labels == data.test.tagset.labels);

    std::size_t train_tokens = 0, test_tokens = 0;
    for (const auto& s : data.train.sentences) train_tokens += s.size();
    for (const auto& s : data.test.sentences) test_tokens += s.size();
    CHECK(data.train.token_count == train_tokens);
    CHECK(data.test.token_count == test_tokens);

    // deterministic: the same spec yields byte-identical sentences
    const ExperimentData again = load_experiment_data(spec);
    REQUIRE(again.train.sentences.size() == data.train.sentences.size());
    for (std::size_t i = 0; i < data.train.sentences.size(); ++i)
        for (std::size_t t = 0; t < data.train.sentences[i].size(); ++t) {
            CHECK(again.train.sentences[i].tokens[t].surface ==
                  data.train.sentences[i].tokens[t].surface);
            CHECK(again.train.sentences[i].tokens[t].gold_tag ==
                  data.train.sentences[i].tokens[t].gold_tag);
        }
}

TEST_CASE("file experiment data shares the union tag set") {
    TempDir tmp("alseq_engine_files_test");
    const fs::path train_path = tmp.path / "train.conll";
    const fs::path test_path = tmp.path / "test.conll";
    std::ofstream(train_path) << "Mija B-PER\nwon O\n\n";
    std::ofstream(test_path) << "Parla B-LOC\n\n";

    CorpusSpec spec;
    spec.kind = CorpusSpec::Kind::files;
    spec.train_path = train_path.string();
    spec.test_path = test_path.string();

    const ExperimentData data = load_experiment_data(spec);
    CHECK(data.tagset.labels == std::vector<std::string>{"O", "B-LOC", "B-PER"});
    CHECK(data.train.tagset.labels == data.tagset.labels);
    CHECK(data.test.tagset.labels == data.tagset.labels);
    CHECK(data.train.sentences.size() == 1);
    CHECK(data.test.sentences.size() == 1);

    spec.test_path = (tmp.path / "missing.conll").string();
    CHECK_THROWS_AS(load_experiment_data(spec), DataError);
}

TEST_CASE("a single run follows the token schedule") {
    const ExperimentConfig cfg = small_config();
    const ExperimentData data = load_experiment_data(cfg.corpus);
    const RunRecord rec = run_single(cfg, 1, data);

    CHECK(rec.config_hash == cfg.hash());
    CHECK(rec.run_seed == 1);
    CHECK(rec.total_train_tokens == static_cast<long>(data.train.token_count));
    CHECK_FALSE(rec.truncated);
    REQUIRE(rec.entries.size() == static_cast<std::size_t>(cfg.iterations) + 1);

    const double total = static_cast<double>(rec.total_train_tokens);
    std::set<int> seen;
    long labeled_tokens = 0;
    for (std::size_t k = 0; k < rec.entries.size(); ++k) {
        const auto& e = rec.entries[k];
        CHECK(e.iteration == static_cast<int>(k));
        // every selection is fresh and in range
        CHECK(!e.selected_ids.empty());
        for (int id : e.selected_ids) {
            CHECK(id >= 0);
            CHECK(id < static_cast<int>(data.train.sentences.size()));
            CHECK(seen.insert(id).second);
            labeled_tokens +=
                static_cast<long>(data.train.sentences[static_cast<std::size_t>(id)].size());
        }
        CHECK(e.labeled_token_count == labeled_tokens);
        // the schedule target is always covered (sentence-atomic overshoot)
        const double target = (cfg.seed_fraction + cfg.step_fraction * static_cast<double>(k)) *
                              total;
        CHECK(e.labeled_token_count >= static_cast<long>(std::ceil(target)));
        CHECK(e.train_seconds > 0.0);
        if (k == 0)
            CHECK(e.query_seconds == 0.0);
        else
            CHECK(e.query_seconds > 0.0);
        CHECK(e.successor_f1.f1 >= 0.0);
        CHECK(e.successor_f1.f1 <= 1.0);
    }
    // matched acquisition and successor specs share one model per iteration
    for (const auto& e : rec.entries)
        CHECK(e.acquisition_f1.f1 == e.successor_f1.f1);
}

TEST_CASE("runs are deterministic in the seed") {
    const ExperimentConfig cfg = small_config();
    const ExperimentData data = load_experiment_data(cfg.corpus);
    const RunRecord a = run_single(cfg, 4, data);
    const RunRecord b = run_single(cfg, 4, data);
    const RunRecord c = run_single(cfg, 5, data);
    CHECK(a.deterministic_json().dump() == b.deterministic_json().dump());
    CHECK(a.deterministic_json().dump() != c.deterministic_json().dump());
}

TEST_CASE("pool exhaustion truncates the schedule") {
    ExperimentConfig cfg = small_config();
    cfg.corpus.synth.sentences = 6;
    cfg.corpus.test_sentences = 3;
    cfg.seed_fraction = 0.1;
    cfg.step_fraction = 0.04;
    cfg.iterations = 20;
    const ExperimentData data = load_experiment_data(cfg.corpus);

    const RunRecord rec = run_single(cfg, 0, data);
    CHECK(rec.truncated);
    CHECK(rec.entries.size() < static_cast<std::size_t>(cfg.iterations) + 1);
    CHECK(rec.entries.back().labeled_token_count == rec.total_train_tokens);
}

TEST_CASE("mismatched successor is trained and scored separately") {
    ExperimentConfig cfg = small_config();
    cfg.corpus.synth.sentences = 20;
    cfg.corpus.test_sentences = 6;
    cfg.iterations = 1;
    cfg.seed_fraction = 0.15;
    cfg.step_fraction = 0.15;
    cfg.successor.kind = ModelSpec::Kind::neural;
    cfg.successor.neural.hash_bits = 7;
    cfg.successor.neural.embedding_dim = 6;
    cfg.successor.neural.hidden_dim = 8;
    cfg.successor.neural.epochs = 3;

    const ExperimentData data = load_experiment_data(cfg.corpus);
    const RunRecord a = run_single(cfg, 2, data);
    const RunRecord b = run_single(cfg, 2, data);
    CHECK(a.deterministic_json().dump() == b.deterministic_json().dump());
    for (const auto& e : a.entries) {
        CHECK(e.successor_f1.f1 >= 0.0);
        CHECK(e.successor_f1.f1 <= 1.0);
    }
}

TEST_CASE("bayesian acquisition drives a full run") {
    ExperimentConfig cfg;
    cfg.corpus.synth.entity_types = 2;
    cfg.corpus.synth.vocabulary = 120;
    cfg.corpus.synth.sentences = 24;
    cfg.corpus.synth.seed = 9;
    cfg.corpus.test_sentences = 6;
    cfg.acquisition.kind = ModelSpec::Kind::neural;
    cfg.acquisition.neural.hash_bits = 7;
    cfg.acquisition.neural.embedding_dim = 6;
    cfg.acquisition.neural.hidden_dim = 8;
    cfg.acquisition.neural.epochs = 3;
    cfg.successor = cfg.acquisition;
    cfg.strategy = Strategy::vr;
    cfg.mc = {McConfig::Variant::word, 3};
    cfg.seed_fraction = 0.15;
    cfg.step_fraction = 0.15;
    cfg.iterations = 2;

    const ExperimentData data = load_experiment_data(cfg.corpus);
    const RunRecord rec = run_single(cfg, 0, data);
    REQUIRE(rec.entries.size() == 3);
    CHECK(rec.entries[1].query_seconds > 0.0);
}

TEST_CASE("experiment runner persists, reuses and rebuilds records") {
    TempDir tmp("alseq_engine_runner_test");
    ExperimentConfig cfg = small_config();
    cfg.corpus.synth.sentences = 30;
    cfg.corpus.test_sentences = 8;
    cfg.iterations = 2;
    cfg.acquisition.crf.max_iterations = 30;
    cfg.successor = cfg.acquisition;
    cfg.repeats = 2;
    cfg.base_seed = 5;
    cfg.output_dir = (tmp.path / "runs").string();

    std::vector<std::string> log;
    const auto logger = [&](const std::string& m) { log.push_back(m); };

    const ExperimentResult first = run_experiment(cfg, false, logger, 1);
    REQUIRE(first.records.size() == 2);
    CHECK(first.reused == 0);
    CHECK(first.records[0].run_seed == 5);
    CHECK(first.records[1].run_seed == 6);
    REQUIRE(first.curve.points.size() == 3);
    CHECK(first.curve.repeats == 2);

    const fs::path dir = fs::path(cfg.output_dir) / cfg.hash();
    CHECK(fs::exists(dir / "config.json"));
    CHECK(fs::exists(dir / "5.json"));
    CHECK(fs::exists(dir / "6.json"));
    CHECK(fs::exists(dir / "curve.csv"));

    bool completed_logged = false;
    for (const auto& m : log) completed_logged |= m.find("completed seed 5") != std::string::npos;
    CHECK(completed_logged);

    log.clear();
    const ExperimentResult second = run_experiment(cfg, false, logger, 1);
    CHECK(second.reused == 2);
    CHECK(second.records[0].deterministic_json().dump() ==
          first.records[0].deterministic_json().dump());
    bool skip_logged = false;
    for (const auto& m : log) skip_logged |= m.find("skipped (cached)") != std::string::npos;
    CHECK(skip_logged);

    const ExperimentResult forced = run_experiment(cfg, true, logger, 1);
    CHECK(forced.reused == 0);
    CHECK(forced.records[1].deterministic_json().dump() ==
          first.records[1].deterministic_json().dump());

    // unreadable cache is a data error, not a silent recompute
    std::ofstream(dir / "5.json") << "{ not json";
    CHECK_THROWS_AS(run_experiment(cfg, false, logger, 1), DataError);

    // a record from some other experiment cannot satisfy this one
    nlohmann::json j = forced.records[0].to_json();
    j["config_hash"] = "0123456789abcdef";
    std::ofstream(dir / "5.json") << j.dump();
    CHECK_THROWS_WITH_AS(run_experiment(cfg, false, logger, 1),
                         doctest::Contains("different config"), DataError);
}

TEST_CASE("thread count resolution clamps and reads the environment") {
    CHECK(resolve_thread_count(4, 2) == 2);
    CHECK(resolve_thread_count(4, 8) == 4);
    CHECK(resolve_thread_count(1, 100) == 1);
    CHECK(resolve_thread_count(7, 0) == 1);

    unsetenv("AL_SEQTAG_THREADS");
    CHECK(resolve_thread_count(-1, 8) == 1);

    setenv("AL_SEQTAG_THREADS", "3", 1);
    CHECK(resolve_thread_count(-1, 8) == 3);
    CHECK(resolve_thread_count(-1, 2) == 2);

    setenv("AL_SEQTAG_THREADS", "abc", 1);
    CHECK_THROWS_AS(resolve_thread_count(-1, 8), ConfigError);
    setenv("AL_SEQTAG_THREADS", "-2", 1);
    CHECK_THROWS_AS(resolve_thread_count(-1, 8), ConfigError);

    setenv("AL_SEQTAG_THREADS", "0", 1);
    const int hw = resolve_thread_count(-1, 4);
    CHECK(hw >= 1);
    CHECK(hw <= 4);

    const int zero_req = resolve_thread_count(0, 4);
    CHECK(zero_req >= 1);
    CHECK(zero_req <= 4);

    unsetenv("AL_SEQTAG_THREADS");
}
