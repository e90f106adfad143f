#include "alseq/crf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "alseq/error.hpp"
#include "alseq/features.hpp"
#include "alseq/owlqn.hpp"

namespace alseq {

namespace {

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// alpha[i][c] = log sum over prefixes ending in tag c at position i
void forward_scores(const TagLattice& lat, std::vector<double>& alpha) {
    const int n = lat.length, C = lat.num_tags;
    alpha.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(C));
    std::vector<double> acc(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c)
        alpha[static_cast<std::size_t>(c)] = lat.begin[static_cast<std::size_t>(c)] + lat.emit_at(0, c);
    for (int i = 1; i < n; ++i) {
        const double* prev = &alpha[static_cast<std::size_t>(i - 1) * static_cast<std::size_t>(C)];
        double* cur = &alpha[static_cast<std::size_t>(i) * static_cast<std::size_t>(C)];
        for (int c = 0; c < C; ++c) {
            for (int p = 0; p < C; ++p)
                acc[static_cast<std::size_t>(p)] =
                    prev[p] + lat.trans[static_cast<std::size_t>(p) * static_cast<std::size_t>(C) +
                                        static_cast<std::size_t>(c)];
            cur[c] = log_sum_exp(acc) + lat.emit_at(i, c);
        }
    }
}

// beta[i][p] = log sum over suffixes starting after position i, given tag p at i
void backward_scores(const TagLattice& lat, std::vector<double>& beta) {
    const int n = lat.length, C = lat.num_tags;
    beta.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(C));
    std::vector<double> acc(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c)
        beta[static_cast<std::size_t>(n - 1) * static_cast<std::size_t>(C) +
             static_cast<std::size_t>(c)] = lat.end[static_cast<std::size_t>(c)];
    for (int i = n - 2; i >= 0; --i) {
        const double* next = &beta[static_cast<std::size_t>(i + 1) * static_cast<std::size_t>(C)];
        double* cur = &beta[static_cast<std::size_t>(i) * static_cast<std::size_t>(C)];
        for (int p = 0; p < C; ++p) {
            for (int c = 0; c < C; ++c)
                acc[static_cast<std::size_t>(c)] =
                    lat.trans[static_cast<std::size_t>(p) * static_cast<std::size_t>(C) +
                              static_cast<std::size_t>(c)] +
                    lat.emit_at(i + 1, c) + next[c];
            cur[p] = log_sum_exp(acc);
        }
    }
}

void check_lattice(const TagLattice& lat) {
    if (lat.length < 1 || lat.num_tags < 1)
        throw RuntimeError("empty tag lattice");
    const auto n = static_cast<std::size_t>(lat.length);
    const auto C = static_cast<std::size_t>(lat.num_tags);
    if (lat.emit.size() != n * C || lat.trans.size() != C * C || lat.begin.size() != C ||
        lat.end.size() != C)
        throw RuntimeError("tag lattice dimension mismatch");
}

}  // namespace

ViterbiPath viterbi_decode(const TagLattice& lat) {
    check_lattice(lat);
    const int n = lat.length, C = lat.num_tags;
    std::vector<double> delta(static_cast<std::size_t>(C));
    std::vector<double> next(static_cast<std::size_t>(C));
    std::vector<int> bp(static_cast<std::size_t>(n) * static_cast<std::size_t>(C), 0);

    for (int c = 0; c < C; ++c)
        delta[static_cast<std::size_t>(c)] = lat.begin[static_cast<std::size_t>(c)] + lat.emit_at(0, c);
    for (int i = 1; i < n; ++i) {
        for (int c = 0; c < C; ++c) {
            double best = -std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int p = 0; p < C; ++p) {
                const double s =
                    delta[static_cast<std::size_t>(p)] +
                    lat.trans[static_cast<std::size_t>(p) * static_cast<std::size_t>(C) +
                              static_cast<std::size_t>(c)];
                if (s > best) {  // strict: ties keep the lower previous tag
                    best = s;
                    arg = p;
                }
            }
            next[static_cast<std::size_t>(c)] = best + lat.emit_at(i, c);
            bp[static_cast<std::size_t>(i) * static_cast<std::size_t>(C) +
               static_cast<std::size_t>(c)] = arg;
        }
        delta.swap(next);
    }

    double best = -std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int c = 0; c < C; ++c) {
        const double s = delta[static_cast<std::size_t>(c)] + lat.end[static_cast<std::size_t>(c)];
        if (s > best) {
            best = s;
            arg = c;
        }
    }

    ViterbiPath out;
    out.score = best;
    out.tags.resize(static_cast<std::size_t>(n));
    out.tags[static_cast<std::size_t>(n - 1)] = arg;
    for (int i = n - 1; i > 0; --i)
        out.tags[static_cast<std::size_t>(i - 1)] =
            bp[static_cast<std::size_t>(i) * static_cast<std::size_t>(C) +
               static_cast<std::size_t>(out.tags[static_cast<std::size_t>(i)])];
    return out;
}

double log_partition(const TagLattice& lat) {
    check_lattice(lat);
    std::vector<double> alpha;
    forward_scores(lat, alpha);
    const auto C = static_cast<std::size_t>(lat.num_tags);
    std::vector<double> fin(C);
    for (std::size_t c = 0; c < C; ++c)
        fin[c] = alpha[static_cast<std::size_t>(lat.length - 1) * C + c] + lat.end[c];
    return log_sum_exp(fin);
}

std::vector<double> token_marginals(const TagLattice& lat) {
    check_lattice(lat);
    std::vector<double> alpha, beta;
    forward_scores(lat, alpha);
    backward_scores(lat, beta);
    const auto C = static_cast<std::size_t>(lat.num_tags);
    std::vector<double> fin(C);
    for (std::size_t c = 0; c < C; ++c)
        fin[c] = alpha[static_cast<std::size_t>(lat.length - 1) * C + c] + lat.end[c];
    const double logz = log_sum_exp(fin);

    std::vector<double> m(alpha.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::exp(alpha[i] + beta[i] - logz);
    return m;
}

TagLattice CrfProblem::lattice(const Item& item, std::span<const double> w) const {
    const int n = static_cast<int>(item.features.size());
    const auto C = static_cast<std::size_t>(num_tags);
    TagLattice lat;
    lat.length = n;
    lat.num_tags = num_tags;
    lat.emit.assign(static_cast<std::size_t>(n) * C, 0.0);
    for (int i = 0; i < n; ++i) {
        double* row = &lat.emit[static_cast<std::size_t>(i) * C];
        for (int f : item.features[static_cast<std::size_t>(i)]) {
            const double* wf = &w[static_cast<std::size_t>(f) * C];
            for (std::size_t c = 0; c < C; ++c) row[c] += wf[c];
        }
    }
    const std::size_t F = static_cast<std::size_t>(num_features);
    lat.trans.assign(w.begin() + static_cast<std::ptrdiff_t>(F * C),
                     w.begin() + static_cast<std::ptrdiff_t>(F * C + C * C));
    lat.begin.assign(w.begin() + static_cast<std::ptrdiff_t>(F * C + C * C),
                     w.begin() + static_cast<std::ptrdiff_t>(F * C + C * C + C));
    lat.end.assign(w.begin() + static_cast<std::ptrdiff_t>(F * C + C * C + C),
                   w.begin() + static_cast<std::ptrdiff_t>(F * C + C * C + 2 * C));
    return lat;
}

double CrfProblem::loglik(std::span<const double> w, std::span<double> grad) const {
    if (w.size() != dim())
        throw RuntimeError("crf weight vector has wrong dimension");
    const bool with_grad = !grad.empty();
    if (with_grad && grad.size() != dim())
        throw RuntimeError("crf gradient buffer has wrong dimension");
    if (with_grad) std::fill(grad.begin(), grad.end(), 0.0);

    const std::size_t C = static_cast<std::size_t>(num_tags);
    const std::size_t F = static_cast<std::size_t>(num_features);
    const std::size_t trans_off = F * C;
    const std::size_t begin_off = trans_off + C * C;
    const std::size_t end_off = begin_off + C;

    // exp(transition) reused across all positions of all items
    std::vector<double> etrans;
    if (with_grad) {
        etrans.resize(C * C);
        for (std::size_t i = 0; i < C * C; ++i) etrans[i] = std::exp(w[trans_off + i]);
    }

    double total = 0;
    std::vector<double> alpha, beta, ea(C), eb(C);
    for (const auto& item : items) {
        const int n = static_cast<int>(item.features.size());
        const TagLattice lat = lattice(item, w);
        forward_scores(lat, alpha);
        backward_scores(lat, beta);
        std::vector<double> fin(C);
        for (std::size_t c = 0; c < C; ++c)
            fin[c] = alpha[static_cast<std::size_t>(n - 1) * C + c] + lat.end[c];
        const double logz = log_sum_exp(fin);

        // gold path score
        double gold = lat.begin[static_cast<std::size_t>(item.tags[0])] +
                      lat.emit_at(0, item.tags[0]);
        for (int i = 1; i < n; ++i) {
            gold += w[trans_off + static_cast<std::size_t>(item.tags[static_cast<std::size_t>(i - 1)]) * C +
                      static_cast<std::size_t>(item.tags[static_cast<std::size_t>(i)])];
            gold += lat.emit_at(i, item.tags[static_cast<std::size_t>(i)]);
        }
        gold += lat.end[static_cast<std::size_t>(item.tags[static_cast<std::size_t>(n - 1)])];
        total += gold - logz;

        if (!with_grad) continue;

        // emission: observed minus expected, scattered over active features
        for (int i = 0; i < n; ++i) {
            const double* a = &alpha[static_cast<std::size_t>(i) * C];
            const double* b = &beta[static_cast<std::size_t>(i) * C];
            for (std::size_t c = 0; c < C; ++c) eb[c] = std::exp(a[c] + b[c] - logz);
            const int gold_tag = item.tags[static_cast<std::size_t>(i)];
            for (int f : item.features[static_cast<std::size_t>(i)]) {
                double* gf = &grad[static_cast<std::size_t>(f) * C];
                for (std::size_t c = 0; c < C; ++c) gf[c] -= eb[c];
                gf[gold_tag] += 1.0;
            }
        }

        // transitions: shifted-exp factorization of the pairwise posteriors
        for (int i = 1; i < n; ++i) {
            const double* ap = &alpha[static_cast<std::size_t>(i - 1) * C];
            const double* bi = &beta[static_cast<std::size_t>(i) * C];
            double s1 = -std::numeric_limits<double>::infinity();
            for (std::size_t p = 0; p < C; ++p) s1 = std::max(s1, ap[p]);
            const double s2 = logz - s1;
            for (std::size_t p = 0; p < C; ++p) ea[p] = std::exp(ap[p] - s1);
            for (std::size_t c = 0; c < C; ++c)
                eb[c] = std::exp(lat.emit_at(i, static_cast<int>(c)) + bi[c] - s2);
            for (std::size_t p = 0; p < C; ++p) {
                const double eap = ea[p];
                if (eap == 0.0) continue;
                double* gt = &grad[trans_off + p * C];
                const double* et = &etrans[p * C];
                for (std::size_t c = 0; c < C; ++c) gt[c] -= eap * et[c] * eb[c];
            }
            grad[trans_off + static_cast<std::size_t>(item.tags[static_cast<std::size_t>(i - 1)]) * C +
                 static_cast<std::size_t>(item.tags[static_cast<std::size_t>(i)])] += 1.0;
        }

        // begin / end
        {
            const double* a = &alpha[0];
            const double* b = &beta[0];
            for (std::size_t c = 0; c < C; ++c)
                grad[begin_off + c] -= std::exp(a[c] + b[c] - logz);
            grad[begin_off + static_cast<std::size_t>(item.tags[0])] += 1.0;
            const double* al = &alpha[static_cast<std::size_t>(n - 1) * C];
            const double* bl = &beta[static_cast<std::size_t>(n - 1) * C];
            for (std::size_t c = 0; c < C; ++c)
                grad[end_off + c] -= std::exp(al[c] + bl[c] - logz);
            grad[end_off + static_cast<std::size_t>(item.tags[static_cast<std::size_t>(n - 1)])] += 1.0;
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// CrfModel
// ---------------------------------------------------------------------------

CrfModel::CrfModel(TagSet tagset, std::vector<std::string> feature_names,
                   std::vector<double> weights, CrfOptions options)
    : tagset_(std::move(tagset)),
      feature_names_(std::move(feature_names)),
      w_(std::move(weights)),
      opts_(options) {
    const std::size_t C = tagset_.size();
    const std::size_t expected = feature_names_.size() * C + C * C + 2 * C;
    if (w_.size() != expected)
        throw RuntimeError("crf model: weight vector size " + std::to_string(w_.size()) +
                           " does not match " + std::to_string(expected));
    feature_ids_.reserve(feature_names_.size());
    for (std::size_t i = 0; i < feature_names_.size(); ++i)
        feature_ids_.emplace(feature_names_[i], static_cast<int>(i));
}

TagLattice CrfModel::lattice(const Sentence& sentence) const {
    if (sentence.tokens.empty())
        throw DataError("cannot score an empty sentence");
    const std::size_t C = tagset_.size();
    const std::size_t F = feature_names_.size();
    const int n = static_cast<int>(sentence.tokens.size());

    TagLattice lat;
    lat.length = n;
    lat.num_tags = static_cast<int>(C);
    lat.emit.assign(static_cast<std::size_t>(n) * C, 0.0);
    for (int i = 0; i < n; ++i) {
        double* row = &lat.emit[static_cast<std::size_t>(i) * C];
        for (const auto& feat : extract_features(sentence, i)) {
            auto it = feature_ids_.find(feat);
            if (it == feature_ids_.end()) continue;
            const double* wf = &w_[static_cast<std::size_t>(it->second) * C];
            for (std::size_t c = 0; c < C; ++c) row[c] += wf[c];
        }
    }
    lat.trans.assign(w_.begin() + static_cast<std::ptrdiff_t>(F * C),
                     w_.begin() + static_cast<std::ptrdiff_t>(F * C + C * C));
    lat.begin.assign(w_.begin() + static_cast<std::ptrdiff_t>(F * C + C * C),
                     w_.begin() + static_cast<std::ptrdiff_t>(F * C + C * C + C));
    lat.end.assign(w_.begin() + static_cast<std::ptrdiff_t>(F * C + C * C + C), w_.end());
    return lat;
}

std::vector<int> CrfModel::predict(const Sentence& sentence) const {
    return viterbi_decode(lattice(sentence)).tags;
}

ViterbiPath CrfModel::viterbi(const Sentence& sentence) const {
    return viterbi_decode(lattice(sentence));
}

double CrfModel::log_partition(const Sentence& sentence) const {
    return alseq::log_partition(lattice(sentence));
}

std::vector<double> CrfModel::token_marginals(const Sentence& sentence) const {
    return alseq::token_marginals(lattice(sentence));
}

double CrfModel::sequence_log_prob(const Sentence& sentence) const {
    const TagLattice lat = lattice(sentence);
    return viterbi_decode(lat).score - alseq::log_partition(lat);
}

nlohmann::json CrfModel::to_json() const {
    return {{"kind", "crf"},
            {"format_version", 1},
            {"options",
             {{"l1", opts_.l1}, {"l2", opts_.l2}, {"max_iterations", opts_.max_iterations}}},
            {"scheme", to_string(tagset_.scheme)},
            {"labels", tagset_.labels},
            {"features", feature_names_},
            {"weights", w_}};
}

CrfModel CrfModel::from_json(const nlohmann::json& j) {
    try {
        if (j.at("kind").get<std::string>() != "crf")
            throw DataError("model file is not a crf model");
        if (j.at("format_version").get<int>() != 1)
            throw DataError("unsupported crf model format_version");
        CrfOptions opts;
        opts.l1 = j.at("options").at("l1").get<double>();
        opts.l2 = j.at("options").at("l2").get<double>();
        opts.max_iterations = j.at("options").at("max_iterations").get<int>();
        TagSet ts = TagSet::from_labels(j.at("labels").get<std::vector<std::string>>(),
                                        tag_scheme_from_string(j.at("scheme").get<std::string>()));
        return CrfModel(std::move(ts), j.at("features").get<std::vector<std::string>>(),
                        j.at("weights").get<std::vector<double>>(), opts);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed crf model: ") + e.what());
    }
}

void CrfModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out)
        throw RuntimeError("cannot write model file: " + path.string());
    out << to_json().dump() << '\n';
}

CrfModel CrfModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open model file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse model file " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

CrfModel train_crf(const std::vector<LabeledSentence>& examples, const TagSet& tagset,
                   const CrfOptions& options, std::uint64_t /*seed*/) {
    if (examples.empty())
        throw ConfigError("crf training requires at least one example");
    if (options.l1 < 0 || options.l2 < 0)
        throw ConfigError("crf regularization weights must be >= 0");
    if (options.max_iterations < 1)
        throw ConfigError("crf max_iterations must be >= 1");

    const int C = static_cast<int>(tagset.size());
    CrfProblem problem;
    problem.num_tags = C;

    std::unordered_map<std::string, int> feature_ids;
    std::vector<std::string> feature_names;
    for (const auto& ex : examples) {
        if (!ex.sentence || ex.sentence->tokens.empty())
            throw RuntimeError("crf training example without tokens");
        if (ex.tags.size() != ex.sentence->tokens.size())
            throw RuntimeError("crf training example with misaligned tags");
        CrfProblem::Item item;
        item.tags = ex.tags;
        for (int t : item.tags)
            if (t < 0 || t >= C)
                throw RuntimeError("crf training example with out-of-range tag id");
        for (int i = 0; i < static_cast<int>(ex.sentence->tokens.size()); ++i) {
            std::vector<int> ids;
            for (auto& feat : extract_features(*ex.sentence, i)) {
                auto [it, inserted] =
                    feature_ids.emplace(std::move(feat), static_cast<int>(feature_names.size()));
                if (inserted) feature_names.push_back(it->first);
                ids.push_back(it->second);
            }
            item.features.push_back(std::move(ids));
        }
        problem.items.push_back(std::move(item));
    }
    problem.num_features = static_cast<int>(feature_names.size());

    std::vector<double> w(problem.dim(), 0.0);
    std::vector<double> grad_ll(problem.dim());

    // minimize -loglik + l2*||w||^2, with the l1 term handled by the optimizer
    const double l2 = options.l2;
    auto objective = [&](std::span<const double> x, std::span<double> grad) {
        const double ll = problem.loglik(x, grad_ll);
        double reg = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            grad[i] = -grad_ll[i] + 2.0 * l2 * x[i];
            reg += x[i] * x[i];
        }
        return -ll + l2 * reg;
    };

    OwlqnOptions oopt;
    oopt.l1 = options.l1;
    oopt.max_iterations = options.max_iterations;
    owlqn_minimize(objective, w, oopt);

    return CrfModel(tagset, std::move(feature_names), std::move(w), options);
}

}  // namespace alseq
