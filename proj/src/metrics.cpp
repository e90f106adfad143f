#include "alseq/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

#include "alseq/error.hpp"
#include "alseq/records.hpp"

namespace alseq {

namespace {

double safe_ratio(long num, long den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double p, double r) {
    return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

nlohmann::json F1Report::to_json() const {
    nlohmann::json per;
    for (const auto& [type, s] : per_type) {
        per[type] = {{"gold", s.gold},       {"predicted", s.predicted},
                     {"correct", s.correct}, {"precision", s.precision},
                     {"recall", s.recall},   {"f1", s.f1}};
    }
    return {{"precision", precision},       {"recall", recall},
            {"f1", f1},                     {"gold", gold_total},
            {"predicted", predicted_total}, {"correct", correct_total},
            {"per_type", per}};
}

F1Report F1Report::from_json(const nlohmann::json& j) {
    F1Report r;
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.gold_total = j.at("gold").get<long>();
    r.predicted_total = j.at("predicted").get<long>();
    r.correct_total = j.at("correct").get<long>();
    for (const auto& [type, s] : j.at("per_type").items()) {
        TypeScore ts;
        ts.gold = s.at("gold").get<long>();
        ts.predicted = s.at("predicted").get<long>();
        ts.correct = s.at("correct").get<long>();
        ts.precision = s.at("precision").get<double>();
        ts.recall = s.at("recall").get<double>();
        ts.f1 = s.at("f1").get<double>();
        r.per_type[type] = ts;
    }
    return r;
}

F1Report span_f1(const std::vector<std::vector<int>>& predicted,
                 const std::vector<std::vector<int>>& gold,
                 const TagSet& tagset) {
    if (predicted.size() != gold.size())
        throw DataError("span_f1: " + std::to_string(predicted.size()) +
                        " predicted sequences vs " + std::to_string(gold.size()) + " gold");

    auto to_labels = [&](const std::vector<int>& ids) {
        std::vector<std::string> labels;
        labels.reserve(ids.size());
        for (int id : ids) {
            if (id < 0 || id >= static_cast<int>(tagset.size()))
                throw DataError("span_f1: tag id " + std::to_string(id) + " out of range");
            labels.push_back(tagset.labels[static_cast<std::size_t>(id)]);
        }
        return labels;
    };

    F1Report report;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i].size() != gold[i].size())
            throw DataError("span_f1: sequence " + std::to_string(i) + " length mismatch (" +
                            std::to_string(predicted[i].size()) + " vs " +
                            std::to_string(gold[i].size()) + ")");
        const auto pred_spans = extract_spans(to_labels(predicted[i]), tagset.scheme);
        const auto gold_spans = extract_spans(to_labels(gold[i]), tagset.scheme);

        std::set<Span> gold_set(gold_spans.begin(), gold_spans.end());
        for (const auto& sp : gold_spans) ++report.per_type[sp.entity_type].gold;
        for (const auto& sp : pred_spans) {
            auto& t = report.per_type[sp.entity_type];
            ++t.predicted;
            if (gold_set.count(sp)) ++t.correct;
        }
    }

    for (auto& [type, s] : report.per_type) {
        (void)type;
        s.precision = safe_ratio(s.correct, s.predicted);
        s.recall = safe_ratio(s.correct, s.gold);
        s.f1 = f1_of(s.precision, s.recall);
        report.gold_total += s.gold;
        report.predicted_total += s.predicted;
        report.correct_total += s.correct;
    }
    report.precision = safe_ratio(report.correct_total, report.predicted_total);
    report.recall = safe_ratio(report.correct_total, report.gold_total);
    report.f1 = f1_of(report.precision, report.recall);
    return report;
}

LearningCurve aggregate_runs(const std::vector<RunRecord>& records) {
    if (records.empty())
        throw DataError("aggregate_runs: no records");
    const auto& first = records.front();
    for (const auto& r : records) {
        if (r.config_hash != first.config_hash)
            throw DataError("aggregate_runs: mixed configs (" + first.config_hash + " vs " +
                            r.config_hash + ")");
        if (r.entries.size() != first.entries.size())
            throw DataError("aggregate_runs: run seed " + std::to_string(r.run_seed) + " has " +
                            std::to_string(r.entries.size()) + " iterations, expected " +
                            std::to_string(first.entries.size()));
        for (std::size_t k = 0; k < r.entries.size(); ++k)
            if (r.entries[k].iteration != first.entries[k].iteration)
                throw DataError("aggregate_runs: iteration axis mismatch at index " +
                                std::to_string(k));
    }

    const double seed_fraction = first.config.at("seed_fraction").get<double>();
    const double step_fraction = first.config.at("step_fraction").get<double>();
    const double n = static_cast<double>(records.size());

    LearningCurve curve;
    curve.repeats = static_cast<int>(records.size());
    for (std::size_t k = 0; k < first.entries.size(); ++k) {
        CurvePoint p;
        p.iteration = first.entries[k].iteration;
        p.labeled_token_fraction =
            std::min(1.0, seed_fraction + step_fraction * p.iteration);
        double sum = 0, train = 0, query = 0;
        for (const auto& r : records) {
            sum += r.entries[k].successor_f1.f1;
            train += r.entries[k].train_seconds;
            query += r.entries[k].query_seconds;
        }
        p.f1_mean = sum / n;
        if (records.size() > 1) {
            double sq = 0;
            for (const auto& r : records) {
                const double d = r.entries[k].successor_f1.f1 - p.f1_mean;
                sq += d * d;
            }
            p.f1_std = std::sqrt(sq / (n - 1.0));  // sample std across repeats
        }
        p.train_seconds_mean = train / n;
        p.query_seconds_mean = query / n;
        curve.points.push_back(p);
    }
    return curve;
}

void write_curve_csv(const LearningCurve& curve, std::ostream& out) {
    out << "iteration,labeled_token_fraction,f1_mean,f1_std,train_seconds_mean,query_seconds_mean\n";
    for (const auto& p : curve.points) {
        out << p.iteration << ',' << fmt_double(p.labeled_token_fraction) << ','
            << fmt_double(p.f1_mean) << ',' << fmt_double(p.f1_std) << ','
            << fmt_double(p.train_seconds_mean) << ',' << fmt_double(p.query_seconds_mean)
            << '\n';
    }
}

}  // namespace alseq
