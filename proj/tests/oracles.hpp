#pragma once

// Reference implementations the production code is verified against. Each is
// written the slow, obvious way (path enumeration, direct formula
// transliteration, central finite differences) and shares no code with the
// library internals beyond the public data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "alseq/crf.hpp"
#include "alseq/rng.hpp"
#include "alseq/tagger.hpp"

namespace oracle {

inline double path_score(const alseq::TagLattice& lat, const std::vector<int>& tags) {
    double s = lat.begin[static_cast<std::size_t>(tags[0])] + lat.emit_at(0, tags[0]);
    for (int i = 1; i < lat.length; ++i) {
        s += lat.trans[static_cast<std::size_t>(tags[static_cast<std::size_t>(i - 1)]) *
                           static_cast<std::size_t>(lat.num_tags) +
                       static_cast<std::size_t>(tags[static_cast<std::size_t>(i)])];
        s += lat.emit_at(i, tags[static_cast<std::size_t>(i)]);
    }
    s += lat.end[static_cast<std::size_t>(tags.back())];
    return s;
}

template <typename Fn>
void for_each_path(int length, int num_tags, Fn&& fn) {
    std::vector<int> tags(static_cast<std::size_t>(length), 0);
    while (true) {
        fn(tags);
        int i = length - 1;
        while (i >= 0 && tags[static_cast<std::size_t>(i)] == num_tags - 1) {
            tags[static_cast<std::size_t>(i)] = 0;
            --i;
        }
        if (i < 0) break;
        ++tags[static_cast<std::size_t>(i)];
    }
}

inline alseq::ViterbiPath best_path(const alseq::TagLattice& lat) {
    alseq::ViterbiPath best;
    best.score = -HUGE_VAL;
    for_each_path(lat.length, lat.num_tags, [&](const std::vector<int>& tags) {
        const double s = path_score(lat, tags);
        if (s > best.score) {
            best.score = s;
            best.tags = tags;
        }
    });
    return best;
}

inline double log_partition(const alseq::TagLattice& lat) {
    long double max_score = -HUGE_VALL;
    for_each_path(lat.length, lat.num_tags, [&](const std::vector<int>& tags) {
        max_score = std::max(max_score, static_cast<long double>(path_score(lat, tags)));
    });
    long double sum = 0;
    for_each_path(lat.length, lat.num_tags, [&](const std::vector<int>& tags) {
        sum += std::exp(static_cast<long double>(path_score(lat, tags)) - max_score);
    });
    return static_cast<double>(max_score + std::log(sum));
}

inline std::vector<double> token_marginals(const alseq::TagLattice& lat) {
    const double logz = oracle::log_partition(lat);  // qualified: adl would also find alseq's
    std::vector<long double> acc(
        static_cast<std::size_t>(lat.length) * static_cast<std::size_t>(lat.num_tags), 0.0L);
    for_each_path(lat.length, lat.num_tags, [&](const std::vector<int>& tags) {
        const long double p = std::exp(static_cast<long double>(path_score(lat, tags) - logz));
        for (int i = 0; i < lat.length; ++i)
            acc[static_cast<std::size_t>(i) * static_cast<std::size_t>(lat.num_tags) +
                static_cast<std::size_t>(tags[static_cast<std::size_t>(i)])] += p;
    });
    return {acc.begin(), acc.end()};
}

inline alseq::TagLattice random_lattice(alseq::Rng& rng, int length, int num_tags) {
    alseq::TagLattice lat;
    lat.length = length;
    lat.num_tags = num_tags;
    const auto fill = [&](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    };
    fill(lat.emit, static_cast<std::size_t>(length) * static_cast<std::size_t>(num_tags));
    fill(lat.trans, static_cast<std::size_t>(num_tags) * static_cast<std::size_t>(num_tags));
    fill(lat.begin, static_cast<std::size_t>(num_tags));
    fill(lat.end, static_cast<std::size_t>(num_tags));
    return lat;
}

/// Max over checked coordinates of |analytic - central difference| relative
/// to max(|analytic|, |fd|, floor).
inline double max_grad_error(const std::function<double(std::span<const double>,
                                                        std::span<double>)>& f,
                             std::vector<double>& x, double step = 1e-5, double floor = 1e-3) {
    std::vector<double> g(x.size()), scratch(x.size());
    f(x, g);
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double fp = f(x, scratch);
        x[i] = keep - step;
        const double fm = f(x, scratch);
        x[i] = keep;
        const double fd = (fp - fm) / (2 * step);
        const double rel =
            std::fabs(g[i] - fd) / std::max({std::fabs(g[i]), std::fabs(fd), floor});
        worst = std::max(worst, rel);
    }
    return worst;
}

/// Per token: every pass votes for its argmax class (first maximum); the
/// score is one minus the modal vote share, averaged over tokens.
inline double vr(const alseq::StochasticPredictions& sp) {
    double total = 0;
    for (int i = 0; i < sp.length; ++i) {
        std::vector<int> votes;
        for (int m = 0; m < sp.passes; ++m) {
            const auto row = sp.row(m, i);
            votes.push_back(
                static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
        }
        long best = 0;
        for (int c = 0; c < sp.num_classes; ++c)
            best = std::max(best, static_cast<long>(std::count(votes.begin(), votes.end(), c)));
        total += 1.0 - static_cast<double>(best) / static_cast<double>(sp.passes);
    }
    return total / static_cast<double>(sp.length);
}

/// Per token: entropy of the mean posterior minus mean per-pass entropy
/// (nats, 0 log 0 := 0, clamped at zero), averaged over tokens.
inline double bald(const alseq::StochasticPredictions& sp) {
    double total = 0;
    for (int i = 0; i < sp.length; ++i) {
        std::vector<double> mean(static_cast<std::size_t>(sp.num_classes), 0.0);
        double mean_entropy = 0;
        for (int m = 0; m < sp.passes; ++m) {
            double h = 0;
            for (int c = 0; c < sp.num_classes; ++c) {
                const double p = sp.at(m, i, c);
                mean[static_cast<std::size_t>(c)] += p / sp.passes;
                if (p > 0) h -= p * std::log(p);
            }
            mean_entropy += h / sp.passes;
        }
        double h_mean = 0;
        for (const double p : mean)
            if (p > 0) h_mean -= p * std::log(p);
        total += std::max(0.0, h_mean - mean_entropy);
    }
    return total / static_cast<double>(sp.length);
}

/// Rows are independent normalized exponentials (flat Dirichlet).
inline alseq::StochasticPredictions random_predictions(alseq::Rng& rng, int passes, int length,
                                                       int num_classes) {
    alseq::StochasticPredictions sp;
    sp.passes = passes;
    sp.length = length;
    sp.num_classes = num_classes;
    sp.data.resize(static_cast<std::size_t>(passes) * static_cast<std::size_t>(length) *
                   static_cast<std::size_t>(num_classes));
    for (std::size_t r = 0; r < sp.data.size(); r += static_cast<std::size_t>(num_classes)) {
        double sum = 0;
        for (int c = 0; c < num_classes; ++c) {
            const double e = -std::log(1.0 - rng.uniform());
            sp.data[r + static_cast<std::size_t>(c)] = e;
            sum += e;
        }
        for (int c = 0; c < num_classes; ++c) sp.data[r + static_cast<std::size_t>(c)] /= sum;
    }
    return sp;
}

}  // namespace oracle
