#include "alseq/neural.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "alseq/error.hpp"
#include "alseq/features.hpp"
#include "alseq/hash.hpp"
#include "alseq/metrics.hpp"

namespace alseq {

void fill_dropout_scales(Rng& rng, double p, std::span<double> out) {
    const double keep = 1.0 / (1.0 - p);
    for (auto& v : out) v = rng.bernoulli(p) ? 0.0 : keep;
}

namespace {

void validate_options(const NeuralOptions& o) {
    if (o.hash_bits < 4 || o.hash_bits > 26)
        throw ConfigError("neural hash_bits must be in [4, 26]");
    if (o.embedding_dim < 1) throw ConfigError("neural embedding_dim must be >= 1");
    if (o.hidden_dim < 1) throw ConfigError("neural hidden_dim must be >= 1");
    if (o.window < 0 || o.window > 4) throw ConfigError("neural window must be in [0, 4]");
    for (double p : {o.p_word, o.p_locked, o.p_last})
        if (!(p >= 0.0 && p < 1.0))
            throw ConfigError("neural dropout probabilities must be in [0, 1)");
    if (o.epochs < 1) throw ConfigError("neural epochs must be >= 1");
    if (!(o.learning_rate > 0)) throw ConfigError("neural learning_rate must be > 0");
    if (o.base_batch < 1) throw ConfigError("neural base_batch must be >= 1");
}

std::string suffix3(const std::string& s) { return s.size() <= 3 ? s : s.substr(s.size() - 3); }

}  // namespace

struct NeuralModel::Scratch {
    std::vector<std::array<std::uint32_t, 4>> feats;
    std::vector<double> emb;          // n * d
    std::vector<double> u;            // in
    std::vector<double> hidden_rows;  // n * h
    std::vector<double> hidden;       // h
    std::vector<double> a_used;       // h
    std::vector<double> probs;        // C
    std::vector<double> dz, da, dpre; // C, h, h
    std::vector<double> word_scale, lock_scale, last_scale;
};

NeuralModel::NeuralModel(TagSet tagset, NeuralOptions options, std::uint64_t init_seed)
    : tagset_(std::move(tagset)), opts_(options) {
    validate_options(opts_);
    V_ = 1 << opts_.hash_bits;
    d_ = opts_.embedding_dim;
    in_ = (2 * opts_.window + 1) * d_;
    h_ = opts_.hidden_dim;
    C_ = static_cast<int>(tagset_.size());

    const std::size_t V = static_cast<std::size_t>(V_), d = static_cast<std::size_t>(d_),
                      in = static_cast<std::size_t>(in_), h = static_cast<std::size_t>(h_),
                      C = static_cast<std::size_t>(C_);
    off_e_ = 0;
    off_w1_ = off_e_ + V * d;
    off_b1_ = off_w1_ + in * h;
    off_w2_ = off_b1_ + h;
    off_b2_ = off_w2_ + h * C;
    params_.assign(off_b2_ + C, 0.0);

    Rng rng(init_seed);
    for (std::size_t i = 0; i < V * d; ++i) params_[off_e_ + i] = 0.1 * rng.gaussian();
    const double w1_sd = 1.0 / std::sqrt(static_cast<double>(in_));
    for (std::size_t i = 0; i < in * h; ++i) params_[off_w1_ + i] = w1_sd * rng.gaussian();
    const double w2_sd = 1.0 / std::sqrt(static_cast<double>(h_));
    for (std::size_t i = 0; i < h * C; ++i) params_[off_w2_ + i] = w2_sd * rng.gaussian();

    bos_bucket_ = bucket("b:<s>");
    eos_bucket_ = bucket("b:</s>");
}

std::uint32_t NeuralModel::bucket(std::string_view s) const {
    return static_cast<std::uint32_t>(fnv1a64(s) &
                                      static_cast<std::uint64_t>(V_ - 1));
}

void NeuralModel::token_buckets(const Token& tok, std::uint32_t out[4]) const {
    std::string buf;
    buf.reserve(tok.surface.size() + 4);
    buf = "w:";
    buf += tok.surface;
    out[0] = bucket(buf);
    const std::string low = lowercased(tok.surface);
    buf = "l:";
    buf += low;
    out[1] = bucket(buf);
    buf = "c:";
    buf += capitalization_class(tok.surface);
    out[2] = bucket(buf);
    buf = "s3:";
    buf += suffix3(low);
    out[3] = bucket(buf);
}

void NeuralModel::compute_feats(const Sentence& sentence, Scratch& ws) const {
    ws.feats.resize(sentence.tokens.size());
    for (std::size_t i = 0; i < sentence.tokens.size(); ++i)
        token_buckets(sentence.tokens[i], ws.feats[i].data());
}

// Mean of the four feature embeddings per position, times the word-dropout
// scale when given.
void NeuralModel::compute_emb(Scratch& ws, const double* word_scale) const {
    const std::size_t n = ws.feats.size(), d = static_cast<std::size_t>(d_);
    ws.emb.resize(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = &ws.emb[i * d];
        const double scale = (word_scale ? word_scale[i] : 1.0) * 0.25;
        if (scale == 0.0) {
            std::fill(row, row + d, 0.0);
            continue;
        }
        const double* e0 = &params_[off_e_ + static_cast<std::size_t>(ws.feats[i][0]) * d];
        const double* e1 = &params_[off_e_ + static_cast<std::size_t>(ws.feats[i][1]) * d];
        const double* e2 = &params_[off_e_ + static_cast<std::size_t>(ws.feats[i][2]) * d];
        const double* e3 = &params_[off_e_ + static_cast<std::size_t>(ws.feats[i][3]) * d];
        for (std::size_t k = 0; k < d; ++k) row[k] = scale * (e0[k] + e1[k] + e2[k] + e3[k]);
    }
}

// tanh hidden layer for position i; fills ws.u with the concatenated window.
void NeuralModel::hidden_at(const Scratch& ws_const, int i, double* hidden_out) const {
    auto& ws = const_cast<Scratch&>(ws_const);
    const int n = static_cast<int>(ws.feats.size());
    const std::size_t d = static_cast<std::size_t>(d_), h = static_cast<std::size_t>(h_);
    ws.u.resize(static_cast<std::size_t>(in_));
    const int w = opts_.window;
    for (int s = -w; s <= w; ++s) {
        const int j = i + s;
        double* dst = &ws.u[static_cast<std::size_t>(s + w) * d];
        const double* src;
        if (j < 0)
            src = &params_[off_e_ + static_cast<std::size_t>(bos_bucket_) * d];
        else if (j >= n)
            src = &params_[off_e_ + static_cast<std::size_t>(eos_bucket_) * d];
        else
            src = &ws.emb[static_cast<std::size_t>(j) * d];
        std::memcpy(dst, src, d * sizeof(double));
    }
    const double* b1 = &params_[off_b1_];
    std::memcpy(hidden_out, b1, h * sizeof(double));
    const double* w1 = &params_[off_w1_];
    for (std::size_t k = 0; k < static_cast<std::size_t>(in_); ++k) {
        const double uk = ws.u[k];
        if (uk == 0.0) continue;
        const double* row = &w1[k * h];
        for (std::size_t j = 0; j < h; ++j) hidden_out[j] += uk * row[j];
    }
    for (std::size_t j = 0; j < h; ++j) hidden_out[j] = std::tanh(hidden_out[j]);
}

void NeuralModel::output_row(const double* hidden_scaled, double* probs_out) const {
    const std::size_t h = static_cast<std::size_t>(h_), C = static_cast<std::size_t>(C_);
    const double* b2 = &params_[off_b2_];
    std::memcpy(probs_out, b2, C * sizeof(double));
    const double* w2 = &params_[off_w2_];
    for (std::size_t j = 0; j < h; ++j) {
        const double aj = hidden_scaled[j];
        if (aj == 0.0) continue;
        const double* row = &w2[j * C];
        for (std::size_t c = 0; c < C; ++c) probs_out[c] += aj * row[c];
    }
    double m = probs_out[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, probs_out[c]);
    double sum = 0;
    for (std::size_t c = 0; c < C; ++c) {
        probs_out[c] = std::exp(probs_out[c] - m);
        sum += probs_out[c];
    }
    for (std::size_t c = 0; c < C; ++c) probs_out[c] /= sum;
}

std::vector<double> NeuralModel::predict_probs(const Sentence& sentence) const {
    if (sentence.tokens.empty()) throw DataError("cannot score an empty sentence");
    Scratch ws;
    compute_feats(sentence, ws);
    compute_emb(ws, nullptr);
    ++lower_passes_;
    const std::size_t n = sentence.tokens.size(), C = static_cast<std::size_t>(C_);
    std::vector<double> out(n * C);
    ws.hidden.resize(static_cast<std::size_t>(h_));
    for (std::size_t i = 0; i < n; ++i) {
        hidden_at(ws, static_cast<int>(i), ws.hidden.data());
        output_row(ws.hidden.data(), &out[i * C]);
    }
    return out;
}

std::vector<int> NeuralModel::predict(const Sentence& sentence) const {
    const auto probs = predict_probs(sentence);
    const std::size_t n = sentence.tokens.size(), C = static_cast<std::size_t>(C_);
    std::vector<int> tags(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &probs[i * C];
        int arg = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (row[c] > row[arg]) arg = static_cast<int>(c);  // ties keep the lower id
        tags[i] = arg;
    }
    return tags;
}

double NeuralModel::sequence_log_prob(const Sentence& sentence) const {
    const auto probs = predict_probs(sentence);
    const std::size_t n = sentence.tokens.size(), C = static_cast<std::size_t>(C_);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &probs[i * C];
        double best = row[0];
        for (std::size_t c = 1; c < C; ++c) best = std::max(best, row[c]);
        total += std::log(best);
    }
    return total;
}

StochasticPredictions NeuralModel::predict_stochastic(const Sentence& sentence,
                                                      const McConfig& mc,
                                                      std::uint64_t seed) const {
    if (mc.variant == McConfig::Variant::none)
        throw ConfigError("stochastic prediction requires an mc variant");
    if (mc.passes < 2)
        throw ConfigError("mc passes must be >= 2");
    if (sentence.tokens.empty()) throw DataError("cannot score an empty sentence");

    const int n = static_cast<int>(sentence.tokens.size());
    const std::size_t h = static_cast<std::size_t>(h_), C = static_cast<std::size_t>(C_);
    StochasticPredictions out;
    out.passes = mc.passes;
    out.length = n;
    out.num_classes = C_;
    out.data.resize(static_cast<std::size_t>(mc.passes) * static_cast<std::size_t>(n) * C);

    Scratch ws;
    compute_feats(sentence, ws);
    ws.hidden.resize(h);
    ws.a_used.resize(h);
    ws.lock_scale.resize(h);
    ws.last_scale.resize(h);
    ws.word_scale.resize(static_cast<std::size_t>(n));

    auto pass_rng = [&](int m) {
        return Rng(derive_seed(seed, static_cast<std::uint64_t>(sentence.id),
                               static_cast<std::uint64_t>(m)));
    };
    auto out_row = [&](int m, int i) {
        return &out.data[(static_cast<std::size_t>(m) * static_cast<std::size_t>(n) +
                          static_cast<std::size_t>(i)) *
                         C];
    };

    switch (mc.variant) {
        case McConfig::Variant::word:
            for (int m = 0; m < mc.passes; ++m) {
                Rng rng = pass_rng(m);
                fill_dropout_scales(rng, opts_.p_word, ws.word_scale);
                compute_emb(ws, ws.word_scale.data());
                ++lower_passes_;
                for (int i = 0; i < n; ++i) {
                    hidden_at(ws, i, ws.hidden.data());
                    output_row(ws.hidden.data(), out_row(m, i));
                }
            }
            break;
        case McConfig::Variant::locked:
            compute_emb(ws, nullptr);
            for (int m = 0; m < mc.passes; ++m) {
                Rng rng = pass_rng(m);
                fill_dropout_scales(rng, opts_.p_locked, ws.lock_scale);
                ++lower_passes_;
                for (int i = 0; i < n; ++i) {
                    hidden_at(ws, i, ws.hidden.data());
                    for (std::size_t j = 0; j < h; ++j)
                        ws.a_used[j] = ws.hidden[j] * ws.lock_scale[j];
                    output_row(ws.a_used.data(), out_row(m, i));
                }
            }
            break;
        case McConfig::Variant::last:
            // lower layers once; only the output layer is re-sampled
            compute_emb(ws, nullptr);
            ws.hidden_rows.resize(static_cast<std::size_t>(n) * h);
            ++lower_passes_;
            for (int i = 0; i < n; ++i)
                hidden_at(ws, i, &ws.hidden_rows[static_cast<std::size_t>(i) * h]);
            for (int m = 0; m < mc.passes; ++m) {
                Rng rng = pass_rng(m);
                for (int i = 0; i < n; ++i) {
                    fill_dropout_scales(rng, opts_.p_last, ws.last_scale);
                    const double* row = &ws.hidden_rows[static_cast<std::size_t>(i) * h];
                    for (std::size_t j = 0; j < h; ++j)
                        ws.a_used[j] = row[j] * ws.last_scale[j];
                    output_row(ws.a_used.data(), out_row(m, i));
                }
            }
            break;
        case McConfig::Variant::all:
            for (int m = 0; m < mc.passes; ++m) {
                Rng rng = pass_rng(m);
                fill_dropout_scales(rng, opts_.p_word, ws.word_scale);
                fill_dropout_scales(rng, opts_.p_locked, ws.lock_scale);
                compute_emb(ws, ws.word_scale.data());
                ++lower_passes_;
                for (int i = 0; i < n; ++i) {
                    hidden_at(ws, i, ws.hidden.data());
                    fill_dropout_scales(rng, opts_.p_last, ws.last_scale);
                    for (std::size_t j = 0; j < h; ++j)
                        ws.a_used[j] = ws.hidden[j] * ws.lock_scale[j] * ws.last_scale[j];
                    output_row(ws.a_used.data(), out_row(m, i));
                }
            }
            break;
        case McConfig::Variant::none:
            break;  // unreachable
    }
    return out;
}

double NeuralModel::forward_backward(const Sentence& sentence, const std::vector<int>& tags,
                                     const double* word_scale, const double* lock_scale,
                                     const double* last_scale, double inv_tokens,
                                     std::span<double> grad, Scratch& ws) const {
    const int n = static_cast<int>(sentence.tokens.size());
    const std::size_t d = static_cast<std::size_t>(d_), h = static_cast<std::size_t>(h_),
                      C = static_cast<std::size_t>(C_);
    compute_feats(sentence, ws);
    compute_emb(ws, word_scale);
    ws.hidden.resize(h);
    ws.a_used.resize(h);
    ws.probs.resize(C);
    ws.dz.resize(C);
    ws.da.resize(h);
    ws.dpre.resize(h);
    std::vector<double>& du = ws.hidden_rows;  // reused as the input gradient
    du.resize(static_cast<std::size_t>(in_));

    const double* w1 = &params_[off_w1_];
    const double* w2 = &params_[off_w2_];
    double* g_w1 = &grad[off_w1_];
    double* g_b1 = &grad[off_b1_];
    double* g_w2 = &grad[off_w2_];
    double* g_b2 = &grad[off_b2_];
    double* g_e = &grad[off_e_];

    double loss = 0;
    for (int i = 0; i < n; ++i) {
        hidden_at(ws, i, ws.hidden.data());  // ws.u now holds this window
        const double* lock = lock_scale;
        const double* last = last_scale ? last_scale + static_cast<std::size_t>(i) * h : nullptr;
        for (std::size_t j = 0; j < h; ++j) {
            double a = ws.hidden[j];
            if (lock) a *= lock[j];
            if (last) a *= last[j];
            ws.a_used[j] = a;
        }
        output_row(ws.a_used.data(), ws.probs.data());

        const int y = tags[static_cast<std::size_t>(i)];
        loss -= std::log(std::max(ws.probs[static_cast<std::size_t>(y)], 1e-300)) * inv_tokens;

        for (std::size_t c = 0; c < C; ++c) ws.dz[c] = ws.probs[c] * inv_tokens;
        ws.dz[static_cast<std::size_t>(y)] -= inv_tokens;

        // output layer
        std::fill(ws.da.begin(), ws.da.end(), 0.0);
        for (std::size_t j = 0; j < h; ++j) {
            const double aj = ws.a_used[j];
            const double* w2row = &w2[j * C];
            double* g_w2row = &g_w2[j * C];
            double acc = 0;
            for (std::size_t c = 0; c < C; ++c) {
                g_w2row[c] += aj * ws.dz[c];
                acc += w2row[c] * ws.dz[c];
            }
            ws.da[j] = acc;
        }
        for (std::size_t c = 0; c < C; ++c) g_b2[c] += ws.dz[c];

        // through the dropout scales and tanh
        for (std::size_t j = 0; j < h; ++j) {
            double g = ws.da[j];
            if (lock) g *= lock[j];
            if (last) g *= last[j];
            const double a = ws.hidden[j];
            ws.dpre[j] = g * (1.0 - a * a);
            g_b1[j] += ws.dpre[j];
        }

        // hidden layer and input gradient
        for (std::size_t k = 0; k < static_cast<std::size_t>(in_); ++k) {
            const double uk = ws.u[k];
            const double* w1row = &w1[k * h];
            double* g_w1row = &g_w1[k * h];
            double acc = 0;
            for (std::size_t j = 0; j < h; ++j) {
                g_w1row[j] += uk * ws.dpre[j];
                acc += w1row[j] * ws.dpre[j];
            }
            du[k] = acc;
        }

        // scatter to embeddings
        const int w = opts_.window;
        for (int s = -w; s <= w; ++s) {
            const int jpos = i + s;
            const double* slot = &du[static_cast<std::size_t>(s + w) * d];
            if (jpos < 0 || jpos >= n) {
                double* ge =
                    &g_e[static_cast<std::size_t>(jpos < 0 ? bos_bucket_ : eos_bucket_) * d];
                for (std::size_t k = 0; k < d; ++k) ge[k] += slot[k];
                continue;
            }
            const double scale =
                (word_scale ? word_scale[jpos] : 1.0) * 0.25;
            if (scale == 0.0) continue;
            for (const std::uint32_t f : ws.feats[static_cast<std::size_t>(jpos)]) {
                double* ge = &g_e[static_cast<std::size_t>(f) * d];
                for (std::size_t k = 0; k < d; ++k) ge[k] += scale * slot[k];
            }
        }
    }
    return loss;
}

double NeuralModel::loss_and_grad(const std::vector<LabeledSentence>& batch,
                                  std::span<double> grad) const {
    if (grad.size() != params_.size())
        throw RuntimeError("neural gradient buffer has wrong dimension");
    std::fill(grad.begin(), grad.end(), 0.0);
    std::size_t tokens = 0;
    for (const auto& ex : batch) {
        if (!ex.sentence || ex.tags.size() != ex.sentence->tokens.size())
            throw RuntimeError("neural batch example with misaligned tags");
        tokens += ex.tags.size();
    }
    if (tokens == 0) throw RuntimeError("neural batch is empty");
    const double inv = 1.0 / static_cast<double>(tokens);
    Scratch ws;
    double loss = 0;
    for (const auto& ex : batch)
        loss += forward_backward(*ex.sentence, ex.tags, nullptr, nullptr, nullptr, inv, grad, ws);
    return loss;
}

int NeuralModel::effective_batch(std::size_t examples, int base_batch) {
    if (base_batch < 1) throw ConfigError("neural base_batch must be >= 1");
    if (examples == 0) return base_batch;
    const std::size_t updates =
        (examples + static_cast<std::size_t>(base_batch) - 1) /
        static_cast<std::size_t>(base_batch);
    if (updates >= 50) return base_batch;
    return static_cast<int>(std::max<std::size_t>(4, examples / 50));
}

nlohmann::json NeuralModel::to_json() const {
    return {{"kind", "neural"},
            {"format_version", 1},
            {"options",
             {{"hash_bits", opts_.hash_bits},
              {"embedding_dim", opts_.embedding_dim},
              {"hidden_dim", opts_.hidden_dim},
              {"window", opts_.window},
              {"p_word", opts_.p_word},
              {"p_locked", opts_.p_locked},
              {"p_last", opts_.p_last},
              {"epochs", opts_.epochs},
              {"learning_rate", opts_.learning_rate},
              {"base_batch", opts_.base_batch},
              {"use_dev", opts_.use_dev}}},
            {"scheme", to_string(tagset_.scheme)},
            {"labels", tagset_.labels},
            {"params", params_}};
}

NeuralModel NeuralModel::from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "neural")
            throw DataError("model file is not a neural model");
        if (j.at("format_version").get<int>() != 1)
            throw DataError("unsupported neural model format_version");
        const auto& o = j.at("options");
        NeuralOptions opts;
        opts.hash_bits = o.at("hash_bits").get<int>();
        opts.embedding_dim = o.at("embedding_dim").get<int>();
        opts.hidden_dim = o.at("hidden_dim").get<int>();
        opts.window = o.at("window").get<int>();
        opts.p_word = o.at("p_word").get<double>();
        opts.p_locked = o.at("p_locked").get<double>();
        opts.p_last = o.at("p_last").get<double>();
        opts.epochs = o.at("epochs").get<int>();
        opts.learning_rate = o.at("learning_rate").get<double>();
        opts.base_batch = o.at("base_batch").get<int>();
        opts.use_dev = o.at("use_dev").get<bool>();
        TagSet ts = TagSet::from_labels(j.at("labels").get<std::vector<std::string>>(),
                                        tag_scheme_from_string(j.at("scheme").get<std::string>()));
        NeuralModel model(std::move(ts), opts, 0);
        auto params = j.at("params").get<std::vector<double>>();
        if (params.size() != model.params_.size())
            throw DataError("neural model parameter count mismatch");
        model.params_ = std::move(params);
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed neural model: ") + e.what());
    }
}

void NeuralModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw RuntimeError("cannot write model file: " + path.string());
    out << to_json().dump() << '\n';
}

NeuralModel NeuralModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse model file " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

NeuralModel train_neural(const std::vector<LabeledSentence>& examples, const TagSet& tagset,
                         const NeuralOptions& options, std::uint64_t seed,
                         const std::vector<LabeledSentence>* dev) {
    if (examples.empty())
        throw ConfigError("neural training requires at least one example");
    validate_options(options);

    NeuralModel model(tagset, options, derive_seed(seed, 101));
    const int C = static_cast<int>(tagset.size());
    for (const auto& ex : examples) {
        if (!ex.sentence || ex.sentence->tokens.empty() ||
            ex.tags.size() != ex.sentence->tokens.size())
            throw RuntimeError("neural training example with misaligned tags");
        for (int t : ex.tags)
            if (t < 0 || t >= C)
                throw RuntimeError("neural training example with out-of-range tag id");
    }

    const int batch = NeuralModel::effective_batch(examples.size(), options.base_batch);
    Rng shuffle_rng(derive_seed(seed, 202));
    Rng mask_rng(derive_seed(seed, 303));

    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> grad(model.params().size());
    NeuralModel::Scratch ws;
    std::vector<double> word_scale, lock_scale, last_scale;
    const std::size_t h = static_cast<std::size_t>(options.hidden_dim);

    std::vector<double> best_params;
    double best_f1 = -1.0;
    std::vector<std::vector<int>> dev_gold;
    if (options.use_dev && dev && !dev->empty())
        for (const auto& ex : *dev) dev_gold.push_back(ex.tags);

    const int T = options.epochs;
    for (int epoch = 0; epoch < T; ++epoch) {
        const double lr =
            options.learning_rate * static_cast<double>(T - epoch) / static_cast<double>(T);
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch));
            std::size_t tokens = 0;
            for (std::size_t b = start; b < stop; ++b) tokens += examples[order[b]].tags.size();
            const double inv = 1.0 / static_cast<double>(tokens);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t b = start; b < stop; ++b) {
                const auto& ex = examples[order[b]];
                const std::size_t n = ex.tags.size();
                word_scale.resize(n);
                lock_scale.resize(h);
                last_scale.resize(n * h);
                fill_dropout_scales(mask_rng, options.p_word, word_scale);
                fill_dropout_scales(mask_rng, options.p_locked, lock_scale);
                fill_dropout_scales(mask_rng, options.p_last, last_scale);
                model.forward_backward(*ex.sentence, ex.tags, word_scale.data(),
                                       lock_scale.data(), last_scale.data(), inv, grad, ws);
            }
            auto p = model.params();
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grad[i];
        }

        if (!dev_gold.empty()) {
            std::vector<std::vector<int>> pred;
            pred.reserve(dev->size());
            for (const auto& ex : *dev) pred.push_back(model.predict(*ex.sentence));
            const double f1 = span_f1(pred, dev_gold, tagset).f1;
            if (f1 > best_f1) {  // ties keep the earlier epoch
                best_f1 = f1;
                best_params.assign(model.params().begin(), model.params().end());
            }
        }
    }
    if (!best_params.empty())
        std::copy(best_params.begin(), best_params.end(), model.params().begin());
    model.reset_pass_count();
    return model;
}

}  // namespace alseq
