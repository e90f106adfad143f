#pragma once

#include <map>
#include <string>
#include <vector>

#include "alseq/corpus.hpp"

#include <json.hpp>

namespace alseq {

struct TypeScore {
    long gold = 0;
    long predicted = 0;
    long correct = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Micro-averaged exact-match span F1 plus a per-type breakdown.
struct F1Report {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long gold_total = 0;
    long predicted_total = 0;
    long correct_total = 0;
    std::map<std::string, TypeScore> per_type;

    nlohmann::json to_json() const;
    static F1Report from_json(const nlohmann::json& j);
};

/// Exact (type, start, end) matching over extracted spans. Predicted and gold
/// are parallel tag-id sequences over `tagset`; a length mismatch anywhere is
/// an alignment error. Empty denominators score 0 by convention.
F1Report span_f1(const std::vector<std::vector<int>>& predicted,
                 const std::vector<std::vector<int>>& gold,
                 const TagSet& tagset);

struct CurvePoint {
    int iteration = 0;
    double labeled_token_fraction = 0.0;  // nominal target, shared across runs
    double f1_mean = 0.0;
    double f1_std = 0.0;
    double train_seconds_mean = 0.0;
    double query_seconds_mean = 0.0;
};

struct LearningCurve {
    std::vector<CurvePoint> points;
    int repeats = 0;
};

struct RunRecord;

/// Mean/std of the successor F1 across repeat runs of one experiment.
/// Rejects records whose configs differ or whose iteration axes disagree.
LearningCurve aggregate_runs(const std::vector<RunRecord>& records);

void write_curve_csv(const LearningCurve& curve, std::ostream& out);

}  // namespace alseq
