#pragma once

#include <string>
#include <variant>
#include <vector>

#include "mplab/ewta.hpp"
#include "mplab/geometry.hpp"
#include "mplab/mixture.hpp"

namespace mplab::eval {

// One scored prediction. The variant holds exactly one prediction kind:
// a point estimate, a hypothesis set, or a mixture.
struct EvalRecord {
  int scenario = 0;
  std::string method;
  geom::BBox gt;
  std::variant<geom::BBox, ewta::HypothesisSet, mix::GaussianMixture> prediction;
  double kalman_fde = 0.0;  // difficulty yardstick for this scenario
};

// Closest prediction to the ground truth by center distance, ties going
// to the lowest index. For mixtures the candidates are component means.
geom::BBox oracle_select(const ewta::HypothesisSet& pred, const geom::BBox& gt);
geom::BBox oracle_select(const mix::GaussianMixture& pred, const geom::BBox& gt);
geom::BBox oracle_select(const EvalRecord& rec);

struct SplitAssignment {
  double average = 0.0;                // mean of the reference errors
  std::vector<bool> challenging;       // aligned with the input records
  std::vector<bool> very_challenging;  // always a subset of challenging
};

// Difficulty split from a plain error list: challenging means strictly
// above the mean, very challenging strictly above twice the mean.
SplitAssignment stratify_errors(const std::vector<double>& errors);

// Difficulty split for records. kalman_errors holds one error per
// distinct scenario (the full test set); each record is placed by its
// own kalman_fde against the mean of that list.
SplitAssignment stratify(const std::vector<EvalRecord>& records,
                         const std::vector<double>& kalman_errors);

struct ReportRow {
  std::string method;
  std::string split;         // all | challenging | very challenging
  bool has_metrics = false;  // false when the split holds no records
  double fde = 0.0;
  double iou = 0.0;
  bool has_nll = false;  // mixture-valued methods only
  double nll = 0.0;
};

// Scores every record and aggregates per method and difficulty split.
// Selected predictions are clipped to the frame before scoring; ground
// truth is used as is. The scenario mean for stratification comes from
// the records' own kalman_fde values, one per distinct scenario.
std::vector<ReportRow> evaluate(const std::vector<EvalRecord>& records,
                                int frame_w, int frame_h);

// Fixed-layout table: header "method,split,fde,iou,nll", then one row
// per line with %.6f numbers; undefined cells stay empty.
std::string report_csv(const std::vector<ReportRow>& rows);
void write_report(const std::vector<ReportRow>& rows, const std::string& path);

}  // namespace mplab::eval
