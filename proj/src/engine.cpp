#include "alseq/engine.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <thread>

#include "alseq/error.hpp"
#include "alseq/hash.hpp"

namespace alseq {

namespace {

// sub-stream roles within one run
enum : std::uint64_t { kRoleSeedSelect = 1, kRoleSplit = 2, kRoleTrain = 3, kRoleQuery = 4 };

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const char* context) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            throw ConfigError(std::string("config: unknown key '") + key + "' in " + context);
    }
}

double get_num(const nlohmann::json& j, const char* key, double def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number())
        throw ConfigError(std::string("config field '") + key + "' must be a number");
    return j.at(key).get<double>();
}

int get_int(const nlohmann::json& j, const char* key, int def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number_integer())
        throw ConfigError(std::string("config field '") + key + "' must be an integer");
    return j.at(key).get<int>();
}

std::uint64_t get_u64(const nlohmann::json& j, const char* key, std::uint64_t def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number_integer())
        throw ConfigError(std::string("config field '") + key + "' must be an integer");
    return j.at(key).get<std::uint64_t>();
}

bool get_bool(const nlohmann::json& j, const char* key, bool def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_boolean())
        throw ConfigError(std::string("config field '") + key + "' must be a boolean");
    return j.at(key).get<bool>();
}

std::string get_str(const nlohmann::json& j, const char* key, const std::string& def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_string())
        throw ConfigError(std::string("config field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

std::string require_str(const nlohmann::json& j, const char* key, const char* context) {
    if (!j.contains(key))
        throw ConfigError(std::string("config: missing '") + key + "' in " + context);
    if (!j.at(key).is_string())
        throw ConfigError(std::string("config field '") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

}  // namespace

nlohmann::json ModelSpec::to_json() const {
    if (kind == Kind::crf)
        return {{"type", "crf"},
                {"l1", crf.l1},
                {"l2", crf.l2},
                {"max_iterations", crf.max_iterations}};
    return {{"type", "neural"},
            {"hash_bits", neural.hash_bits},
            {"embedding_dim", neural.embedding_dim},
            {"hidden_dim", neural.hidden_dim},
            {"window", neural.window},
            {"p_word", neural.p_word},
            {"p_locked", neural.p_locked},
            {"p_last", neural.p_last},
            {"epochs", neural.epochs},
            {"learning_rate", neural.learning_rate},
            {"base_batch", neural.base_batch},
            {"use_dev", neural.use_dev}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ConfigError("model spec must be an object");
    const std::string type = require_str(j, "type", "model spec");
    ModelSpec ms;
    if (type == "crf") {
        require_keys(j, {"type", "l1", "l2", "max_iterations"}, "crf model spec");
        ms.kind = Kind::crf;
        ms.crf.l1 = get_num(j, "l1", ms.crf.l1);
        ms.crf.l2 = get_num(j, "l2", ms.crf.l2);
        ms.crf.max_iterations = get_int(j, "max_iterations", ms.crf.max_iterations);
    } else if (type == "neural") {
        require_keys(j,
                     {"type", "hash_bits", "embedding_dim", "hidden_dim", "window", "p_word",
                      "p_locked", "p_last", "epochs", "learning_rate", "base_batch", "use_dev"},
                     "neural model spec");
        ms.kind = Kind::neural;
        ms.neural.hash_bits = get_int(j, "hash_bits", ms.neural.hash_bits);
        ms.neural.embedding_dim = get_int(j, "embedding_dim", ms.neural.embedding_dim);
        ms.neural.hidden_dim = get_int(j, "hidden_dim", ms.neural.hidden_dim);
        ms.neural.window = get_int(j, "window", ms.neural.window);
        ms.neural.p_word = get_num(j, "p_word", ms.neural.p_word);
        ms.neural.p_locked = get_num(j, "p_locked", ms.neural.p_locked);
        ms.neural.p_last = get_num(j, "p_last", ms.neural.p_last);
        ms.neural.epochs = get_int(j, "epochs", ms.neural.epochs);
        ms.neural.learning_rate = get_num(j, "learning_rate", ms.neural.learning_rate);
        ms.neural.base_batch = get_int(j, "base_batch", ms.neural.base_batch);
        ms.neural.use_dev = get_bool(j, "use_dev", ms.neural.use_dev);
    } else {
        throw ConfigError("unknown model type '" + type + "' (expected crf or neural)");
    }
    return ms;
}

nlohmann::json CorpusSpec::to_json() const {
    if (kind == Kind::synthetic)
        return {{"type", "synthetic"},
                {"entity_types", synth.entity_types},
                {"vocabulary", synth.vocabulary},
                {"min_sentence_len", synth.min_sentence_len},
                {"max_sentence_len", synth.max_sentence_len},
                {"train_sentences", synth.sentences},
                {"test_sentences", test_sentences},
                {"seed", synth.seed}};
    return {{"type", "files"},
            {"train_path", train_path},
            {"test_path", test_path},
            {"scheme", std::string(to_string(scheme))},
            {"columns", columns.columns},
            {"surface_col", columns.surface},
            {"pos_col", columns.pos},
            {"tag_col", columns.tag}};
}

CorpusSpec CorpusSpec::from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ConfigError("corpus spec must be an object");
    const std::string type = require_str(j, "type", "corpus spec");
    CorpusSpec cs;
    if (type == "synthetic") {
        require_keys(j,
                     {"type", "entity_types", "vocabulary", "min_sentence_len",
                      "max_sentence_len", "train_sentences", "test_sentences", "seed"},
                     "synthetic corpus spec");
        cs.kind = Kind::synthetic;
        cs.synth.entity_types = get_int(j, "entity_types", cs.synth.entity_types);
        cs.synth.vocabulary = get_int(j, "vocabulary", cs.synth.vocabulary);
        cs.synth.min_sentence_len = get_int(j, "min_sentence_len", cs.synth.min_sentence_len);
        cs.synth.max_sentence_len = get_int(j, "max_sentence_len", cs.synth.max_sentence_len);
        cs.synth.sentences = get_int(j, "train_sentences", cs.synth.sentences);
        cs.test_sentences = get_int(j, "test_sentences", cs.test_sentences);
        cs.synth.seed = get_u64(j, "seed", cs.synth.seed);
    } else if (type == "files") {
        require_keys(j,
                     {"type", "train_path", "test_path", "scheme", "columns", "surface_col",
                      "pos_col", "tag_col"},
                     "files corpus spec");
        cs.kind = Kind::files;
        cs.train_path = require_str(j, "train_path", "files corpus spec");
        cs.test_path = require_str(j, "test_path", "files corpus spec");
        cs.scheme = tag_scheme_from_string(get_str(j, "scheme", "iob2"));
        cs.columns.columns = get_int(j, "columns", 2);
        cs.columns.surface = get_int(j, "surface_col", 0);
        cs.columns.pos = get_int(j, "pos_col", -1);
        cs.columns.tag = get_int(j, "tag_col", 1);
    } else {
        throw ConfigError("unknown corpus type '" + type + "' (expected files or synthetic)");
    }
    return cs;
}

nlohmann::json ExperimentConfig::to_json() const {
    return {{"corpus", corpus.to_json()},
            {"acquisition", acquisition.to_json()},
            {"successor", successor.to_json()},
            {"strategy", std::string(to_string(strategy))},
            {"mc", {{"variant", std::string(to_string(mc.variant))}, {"passes", mc.passes}}},
            {"seed_fraction", seed_fraction},
            {"step_fraction", step_fraction},
            {"iterations", iterations},
            {"dev_fraction", dev_fraction},
            {"repeats", repeats},
            {"base_seed", base_seed},
            {"output_dir", output_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ConfigError("config must be a JSON object");
    require_keys(j,
                 {"corpus", "acquisition", "successor", "strategy", "mc", "seed_fraction",
                  "step_fraction", "iterations", "dev_fraction", "repeats", "base_seed",
                  "output_dir"},
                 "experiment config");
    if (!j.contains("corpus"))
        throw ConfigError("config: missing 'corpus'");
    if (!j.contains("acquisition"))
        throw ConfigError("config: missing 'acquisition'");

    ExperimentConfig cfg;
    cfg.corpus = CorpusSpec::from_json(j.at("corpus"));
    cfg.acquisition = ModelSpec::from_json(j.at("acquisition"));
    cfg.successor =
        j.contains("successor") ? ModelSpec::from_json(j.at("successor")) : cfg.acquisition;
    cfg.strategy = strategy_from_string(get_str(j, "strategy", "random"));
    if (j.contains("mc")) {
        const auto& m = j.at("mc");
        require_keys(m, {"variant", "passes"}, "mc block");
        cfg.mc.variant = mc_variant_from_string(get_str(m, "variant", "none"));
        cfg.mc.passes = get_int(m, "passes", 0);
    }
    if (cfg.strategy != Strategy::vr && cfg.strategy != Strategy::bald)
        cfg.mc = McConfig{};  // normalize: only vr/bald consume it
    cfg.seed_fraction = get_num(j, "seed_fraction", cfg.seed_fraction);
    cfg.step_fraction = get_num(j, "step_fraction", cfg.step_fraction);
    cfg.iterations = get_int(j, "iterations", cfg.iterations);
    cfg.dev_fraction = get_num(j, "dev_fraction", cfg.dev_fraction);
    cfg.repeats = get_int(j, "repeats", cfg.repeats);
    cfg.base_seed = get_u64(j, "base_seed", cfg.base_seed);
    cfg.output_dir = get_str(j, "output_dir", cfg.output_dir);
    return cfg;
}

void ExperimentConfig::validate() const {
    if (!(seed_fraction > 0.0 && seed_fraction < 1.0))
        throw ConfigError("seed_fraction must be in (0, 1)");
    if (!(step_fraction > 0.0 && step_fraction < 1.0))
        throw ConfigError("step_fraction must be in (0, 1)");
    if (!(dev_fraction >= 0.0 && dev_fraction < 1.0))
        throw ConfigError("dev_fraction must be in [0, 1)");
    if (iterations < 1)
        throw ConfigError("iterations must be >= 1");
    if (repeats < 1)
        throw ConfigError("repeats must be >= 1");
    if (seed_fraction + static_cast<double>(iterations) * step_fraction > 1.0 + 1e-12)
        throw ConfigError("seed_fraction + iterations * step_fraction must not exceed 1");
    if (output_dir.empty())
        throw ConfigError("output_dir must not be empty");
    const bool bayesian = strategy == Strategy::vr || strategy == Strategy::bald;
    if (bayesian) {
        if (mc.variant == McConfig::Variant::none)
            throw ConfigError(std::string("strategy '") + to_string(strategy) +
                              "' requires an mc block");
        if (mc.passes < 2)
            throw ConfigError("mc.passes must be >= 2");
        if (acquisition.kind != ModelSpec::Kind::neural)
            throw ConfigError(std::string("strategy '") + to_string(strategy) +
                              "' requires a neural acquisition model");
    }
    if (corpus.kind == CorpusSpec::Kind::synthetic) {
        if (corpus.synth.sentences < 2)
            throw ConfigError("corpus.train_sentences must be >= 2");
        if (corpus.test_sentences < 1)
            throw ConfigError("corpus.test_sentences must be >= 1");
    } else {
        if (corpus.train_path.empty())
            throw ConfigError("corpus.train_path must not be empty");
        if (corpus.test_path.empty())
            throw ConfigError("corpus.test_path must not be empty");
    }
}

std::string ExperimentConfig::hash() const {
    nlohmann::json j = to_json();
    j.erase("base_seed");   // run identity, not experiment identity
    j.erase("repeats");
    j.erase("output_dir");
    return hex64(fnv1a64(j.dump()));
}

AnnotationStore::AnnotationStore(const Corpus& corpus, const TagSet& tagset) {
    tag_ids_.reserve(corpus.sentences.size());
    for (const auto& s : corpus.sentences) {
        std::vector<int> ids;
        ids.reserve(s.tokens.size());
        for (const auto& t : s.tokens) {
            const int id = tagset.index_of(t.gold_tag);
            if (id < 0)
                throw DataError("gold tag '" + t.gold_tag + "' not in the shared tag set");
            ids.push_back(id);
        }
        tag_ids_.push_back(std::move(ids));
    }
    revealed_flags_.assign(tag_ids_.size(), 0);
}

std::vector<int> AnnotationStore::reveal(int sentence_id) {
    if (sentence_id < 0 || sentence_id >= static_cast<int>(tag_ids_.size()))
        throw RuntimeError("reveal: sentence id " + std::to_string(sentence_id) +
                           " out of range");
    auto& flag = revealed_flags_[static_cast<std::size_t>(sentence_id)];
    if (flag)
        throw RuntimeError("sentence " + std::to_string(sentence_id) + " revealed twice");
    flag = 1;
    ++reveals_;
    return tag_ids_[static_cast<std::size_t>(sentence_id)];
}

bool AnnotationStore::revealed(int sentence_id) const {
    return sentence_id >= 0 && sentence_id < static_cast<int>(revealed_flags_.size()) &&
           revealed_flags_[static_cast<std::size_t>(sentence_id)] != 0;
}

ExperimentData load_experiment_data(const CorpusSpec& spec) {
    ExperimentData data;
    if (spec.kind == CorpusSpec::Kind::synthetic) {
        SynthSpec total = spec.synth;
        total.sentences = spec.synth.sentences + spec.test_sentences;
        Corpus all = synth_corpus(total);
        data.tagset = all.tagset;
        data.train.tagset = all.tagset;
        data.test.tagset = all.tagset;
        for (int i = 0; i < total.sentences; ++i) {
            auto& sent = all.sentences[static_cast<std::size_t>(i)];
            if (i < spec.synth.sentences) {
                data.train.token_count += sent.tokens.size();
                data.train.sentences.push_back(std::move(sent));
            } else {
                sent.id = i - spec.synth.sentences;
                data.test.token_count += sent.tokens.size();
                data.test.sentences.push_back(std::move(sent));
            }
        }
    } else {
        data.train = parse_conll(std::filesystem::path(spec.train_path), spec.columns,
                                 spec.scheme);
        data.test = parse_conll(std::filesystem::path(spec.test_path), spec.columns,
                                spec.scheme);
        std::vector<std::string> labels = data.train.tagset.labels;
        labels.insert(labels.end(), data.test.tagset.labels.begin(),
                      data.test.tagset.labels.end());
        data.tagset = TagSet::from_labels(std::move(labels), spec.scheme);
        data.train.tagset = data.tagset;
        data.test.tagset = data.tagset;
    }
    return data;
}

namespace {

struct TrainedPair {
    std::shared_ptr<SequenceTagger> acq, succ;
    double seconds = 0;
};

std::shared_ptr<SequenceTagger> make_model(const ModelSpec& ms,
                                           const std::vector<LabeledSentence>& train_ex,
                                           const std::vector<LabeledSentence>& dev_ex,
                                           const TagSet& tagset, std::uint64_t seed) {
    if (ms.kind == ModelSpec::Kind::crf)
        return std::make_shared<CrfModel>(train_crf(train_ex, tagset, ms.crf, seed));
    return std::make_shared<NeuralModel>(train_neural(train_ex, tagset, ms.neural, seed, &dev_ex));
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

RunRecord run_single(const ExperimentConfig& config, std::uint64_t run_seed,
                     const ExperimentData& data) {
    config.validate();
    const Corpus& train = data.train;
    const TagSet& tagset = data.tagset;
    const long total = static_cast<long>(train.token_count);
    const int N = static_cast<int>(train.sentences.size());

    AnnotationStore store(train, tagset);

    std::vector<std::vector<int>> test_gold;
    test_gold.reserve(data.test.sentences.size());
    for (const auto& s : data.test.sentences) {
        std::vector<int> ids;
        ids.reserve(s.tokens.size());
        for (const auto& t : s.tokens) {
            const int id = tagset.index_of(t.gold_tag);
            if (id < 0)
                throw DataError("test gold tag '" + t.gold_tag + "' not in the shared tag set");
            ids.push_back(id);
        }
        test_gold.push_back(std::move(ids));
    }

    RunRecord rec;
    rec.config_hash = config.hash();
    rec.config = config.to_json();
    rec.run_seed = run_seed;
    rec.total_train_tokens = total;

    std::vector<int> lengths(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i)
        lengths[static_cast<std::size_t>(i)] =
            static_cast<int>(train.sentences[static_cast<std::size_t>(i)].tokens.size());

    PoolState pool;
    pool.total_token_count = total;
    pool.sentence_tokens = &lengths;

    // seed set: shuffled prefix until the token target is reached
    std::vector<int> perm(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) perm[static_cast<std::size_t>(i)] = i;
    {
        Rng rng(derive_seed(run_seed, kRoleSeedSelect));
        rng.shuffle(perm);
    }
    const long seed_target =
        static_cast<long>(std::ceil(config.seed_fraction * static_cast<double>(total)));
    std::vector<int> seed_ids;
    for (int id : perm) {
        if (pool.labeled_token_count >= seed_target) break;
        seed_ids.push_back(id);
        pool.labeled_token_count += lengths[static_cast<std::size_t>(id)];
    }

    std::vector<LabeledSentence> examples;
    examples.reserve(static_cast<std::size_t>(N));
    std::vector<char> is_labeled(static_cast<std::size_t>(N), 0);
    for (int id : seed_ids) {
        examples.push_back({&train.sentences[static_cast<std::size_t>(id)], store.reveal(id)});
        is_labeled[static_cast<std::size_t>(id)] = 1;
    }
    auto rebuild_pool_ids = [&]() {
        pool.labeled_ids.clear();
        pool.unlabeled_ids.clear();
        for (int i = 0; i < N; ++i)
            (is_labeled[static_cast<std::size_t>(i)] ? pool.labeled_ids : pool.unlabeled_ids)
                .push_back(i);
    };
    rebuild_pool_ids();

    const bool same_spec = config.successor == config.acquisition;

    auto train_models = [&](int k) {
        std::vector<std::size_t> order(examples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive_seed(run_seed, kRoleSplit, static_cast<std::uint64_t>(k)));
        rng.shuffle(order);
        std::size_t dev_count = static_cast<std::size_t>(
            std::floor(config.dev_fraction * static_cast<double>(examples.size())));
        if (dev_count >= examples.size()) dev_count = examples.size() - 1;
        std::vector<LabeledSentence> dev_ex, train_ex;
        dev_ex.reserve(dev_count);
        train_ex.reserve(examples.size() - dev_count);
        for (std::size_t i = 0; i < order.size(); ++i)
            (i < dev_count ? dev_ex : train_ex).push_back(examples[order[i]]);

        const std::uint64_t tseed =
            derive_seed(run_seed, kRoleTrain, static_cast<std::uint64_t>(k));
        TrainedPair out;
        const auto t0 = std::chrono::steady_clock::now();
        out.acq = make_model(config.acquisition, train_ex, dev_ex, tagset, tseed);
        out.seconds = seconds_since(t0);
        out.succ = same_spec ? out.acq
                             : make_model(config.successor, train_ex, dev_ex, tagset, tseed);
        return out;
    };

    auto evaluate = [&](const SequenceTagger& model) {
        std::vector<std::vector<int>> pred;
        pred.reserve(data.test.sentences.size());
        for (const auto& s : data.test.sentences) pred.push_back(model.predict(s));
        return span_f1(pred, test_gold, tagset);
    };

    auto push_entry = [&](int k, std::vector<int> selected, const TrainedPair& models,
                          double query_seconds) {
        IterationEntry e;
        e.iteration = k;
        e.labeled_token_count = pool.labeled_token_count;
        e.selected_ids = std::move(selected);
        e.acquisition_f1 = evaluate(*models.acq);
        e.successor_f1 = same_spec ? e.acquisition_f1 : evaluate(*models.succ);
        e.train_seconds = models.seconds;
        e.query_seconds = query_seconds;
        rec.entries.push_back(std::move(e));
    };

    TrainedPair models = train_models(0);
    push_entry(0, seed_ids, models, 0.0);

    for (int k = 1; k <= config.iterations; ++k) {
        if (pool.unlabeled_ids.empty()) {
            rec.truncated = true;
            break;
        }
        const double target =
            (config.seed_fraction + config.step_fraction * static_cast<double>(k)) *
            static_cast<double>(total);
        // self-correcting against earlier overshoot, but never zero: every
        // iteration must acquire at least one sentence
        const long budget =
            std::max<long>(1, static_cast<long>(std::ceil(target)) - pool.labeled_token_count);

        std::vector<const Sentence*> pool_sentences;
        pool_sentences.reserve(pool.unlabeled_ids.size());
        for (int id : pool.unlabeled_ids)
            pool_sentences.push_back(&train.sentences[static_cast<std::size_t>(id)]);

        const auto q0 = std::chrono::steady_clock::now();
        const auto scores =
            score_pool(*models.acq, pool_sentences, config.strategy, config.mc,
                       derive_seed(run_seed, kRoleQuery, static_cast<std::uint64_t>(k)));
        auto selected = select_batch(scores, pool, budget);
        const double query_seconds = seconds_since(q0);

        for (int id : selected) {
            examples.push_back({&train.sentences[static_cast<std::size_t>(id)], store.reveal(id)});
            is_labeled[static_cast<std::size_t>(id)] = 1;
            pool.labeled_token_count += lengths[static_cast<std::size_t>(id)];
        }
        rebuild_pool_ids();

        models = train_models(k);
        push_entry(k, std::move(selected), models, query_seconds);
    }

    if (store.reveal_count() != static_cast<long>(pool.labeled_ids.size()))
        throw RuntimeError("label reveal audit mismatch");
    return rec;
}

int resolve_thread_count(int requested, int repeats) {
    int t;
    if (requested > 0) {
        t = requested;
    } else if (requested == 0) {
        t = static_cast<int>(std::thread::hardware_concurrency());
    } else {
        const char* env = std::getenv("AL_SEQTAG_THREADS");
        if (!env || !*env) {
            t = 1;
        } else {
            char* endp = nullptr;
            const long v = std::strtol(env, &endp, 10);
            if (endp == env || *endp != '\0' || v < 0)
                throw ConfigError("AL_SEQTAG_THREADS must be a nonnegative integer");
            t = v == 0 ? static_cast<int>(std::thread::hardware_concurrency())
                       : static_cast<int>(v);
        }
    }
    if (t < 1) t = 1;
    return std::min(t, std::max(1, repeats));
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool force, const LogFn& log,
                                int thread_count) {
    config.validate();
    auto say = [&](const std::string& msg) {
        if (log) log(msg);
    };

    const ExperimentData data = load_experiment_data(config.corpus);
    const std::string hash = config.hash();
    const std::filesystem::path dir = std::filesystem::path(config.output_dir) / hash;
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "config.json");
        if (!out) throw RuntimeError("cannot write " + (dir / "config.json").string());
        out << config.to_json().dump(2) << '\n';
    }

    ExperimentResult result;
    result.records.resize(static_cast<std::size_t>(config.repeats));
    std::vector<std::size_t> todo;
    for (int i = 0; i < config.repeats; ++i) {
        const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(i);
        const auto path = dir / (std::to_string(seed) + ".json");
        if (!force && std::filesystem::exists(path)) {
            std::ifstream in(path);
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw DataError("cannot parse cached record " + path.string() + ": " + e.what());
            }
            RunRecord rec = RunRecord::from_json(j);
            if (rec.config_hash != hash)
                throw DataError("cached record " + path.string() +
                                " was produced by a different config");
            result.records[static_cast<std::size_t>(i)] = std::move(rec);
            ++result.reused;
            say("skipped (cached): " + path.string());
        } else {
            todo.push_back(static_cast<std::size_t>(i));
        }
    }

    const int threads = resolve_thread_count(thread_count, static_cast<int>(todo.size()));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex mu;
    std::exception_ptr error;

    auto worker = [&]() {
        while (!stop.load()) {
            const std::size_t j = next.fetch_add(1);
            if (j >= todo.size()) break;
            const std::size_t i = todo[j];
            const std::uint64_t seed = config.base_seed + i;
            try {
                RunRecord rec = run_single(config, seed, data);
                const auto path = dir / (std::to_string(seed) + ".json");
                auto tmp = path;
                tmp += ".tmp";
                {
                    std::ofstream out(tmp);
                    if (!out) throw RuntimeError("cannot write " + tmp.string());
                    out << rec.to_json().dump() << '\n';
                }
                std::filesystem::rename(tmp, path);
                std::lock_guard<std::mutex> lock(mu);
                result.records[i] = std::move(rec);
                say("completed seed " + std::to_string(seed) + " -> " + path.string());
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!error) error = std::current_exception();
                stop.store(true);
            }
        }
    };

    if (!todo.empty()) {
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(threads));
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
    }
    if (error) std::rethrow_exception(error);

    result.curve = aggregate_runs(result.records);
    {
        std::ofstream out(dir / "curve.csv");
        if (!out) throw RuntimeError("cannot write " + (dir / "curve.csv").string());
        write_curve_csv(result.curve, out);
    }
    return result;
}

}  // namespace alseq
