#include "mplab/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace mplab::eval {

geom::BBox oracle_select(const ewta::HypothesisSet& pred, const geom::BBox& gt) {
  if (pred.boxes.empty())
    throw std::invalid_argument("oracle_select: empty hypothesis set");
  std::size_t best = 0;
  double best_d = geom::center_distance(pred.boxes[0], gt);
  for (std::size_t i = 1; i < pred.boxes.size(); ++i) {
    const double d = geom::center_distance(pred.boxes[i], gt);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return pred.boxes[best];
}

geom::BBox oracle_select(const mix::GaussianMixture& pred, const geom::BBox& gt) {
  if (pred.k() == 0) throw std::invalid_argument("oracle_select: empty mixture");
  std::size_t best = 0;
  double best_d = geom::center_distance(pred.means[0], gt);
  for (std::size_t i = 1; i < pred.means.size(); ++i) {
    const double d = geom::center_distance(pred.means[i], gt);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return pred.means[best];
}

geom::BBox oracle_select(const EvalRecord& rec) {
  if (const auto* box = std::get_if<geom::BBox>(&rec.prediction)) return *box;
  if (const auto* hyps = std::get_if<ewta::HypothesisSet>(&rec.prediction))
    return oracle_select(*hyps, rec.gt);
  return oracle_select(std::get<mix::GaussianMixture>(rec.prediction), rec.gt);
}

SplitAssignment stratify_errors(const std::vector<double>& errors) {
  if (errors.empty())
    throw std::invalid_argument("stratify: empty error list");
  double avg = 0.0;
  for (double e : errors) avg += e;
  avg /= static_cast<double>(errors.size());
  SplitAssignment out;
  out.average = avg;
  out.challenging.reserve(errors.size());
  out.very_challenging.reserve(errors.size());
  for (double e : errors) {
    out.challenging.push_back(e > avg);
    out.very_challenging.push_back(e > 2.0 * avg);
  }
  return out;
}

SplitAssignment stratify(const std::vector<EvalRecord>& records,
                         const std::vector<double>& kalman_errors) {
  if (records.empty()) throw std::invalid_argument("stratify: no records");
  if (kalman_errors.empty())
    throw std::invalid_argument("stratify: no reference errors");
  double avg = 0.0;
  for (double e : kalman_errors) avg += e;
  avg /= static_cast<double>(kalman_errors.size());
  SplitAssignment out;
  out.average = avg;
  out.challenging.reserve(records.size());
  out.very_challenging.reserve(records.size());
  for (const auto& r : records) {
    out.challenging.push_back(r.kalman_fde > avg);
    out.very_challenging.push_back(r.kalman_fde > 2.0 * avg);
  }
  return out;
}

std::vector<ReportRow> evaluate(const std::vector<EvalRecord>& records,
                                int frame_w, int frame_h) {
  if (records.empty()) throw std::invalid_argument("evaluate: no records");

  std::map<int, double> scenario_error;
  for (const auto& r : records) scenario_error[r.scenario] = r.kalman_fde;
  std::vector<double> errors;
  errors.reserve(scenario_error.size());
  for (const auto& [scenario, err] : scenario_error) errors.push_back(err);
  const SplitAssignment split = stratify(records, errors);

  std::vector<std::string> methods;
  for (const auto& r : records)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);

  const char* split_names[] = {"all", "challenging", "very challenging"};
  std::vector<ReportRow> rows;
  for (const auto& method : methods) {
    bool probabilistic = true;
    bool seen = false;
    for (const auto& r : records) {
      if (r.method != method) continue;
      const bool is_mix =
          std::holds_alternative<mix::GaussianMixture>(r.prediction);
      if (!seen) {
        probabilistic = is_mix;
        seen = true;
      } else if (probabilistic != is_mix) {
        throw std::invalid_argument("evaluate: method '" + method +
                                    "' mixes prediction kinds");
      }
    }
    for (int level = 0; level < 3; ++level) {
      ReportRow row;
      row.method = method;
      row.split = split_names[level];
      double fde = 0.0, iou_sum = 0.0, nll = 0.0;
      int count = 0;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.method != method) continue;
        if (level == 1 && !split.challenging[i]) continue;
        if (level == 2 && !split.very_challenging[i]) continue;
        const geom::BBox chosen =
            geom::clamp_to_frame(oracle_select(r), frame_w, frame_h);
        fde += geom::center_distance(chosen, r.gt);
        iou_sum += geom::iou(chosen, r.gt);
        if (probabilistic)
          nll += mix::nll(std::get<mix::GaussianMixture>(r.prediction), r.gt);
        ++count;
      }
      if (count > 0) {
        row.has_metrics = true;
        row.fde = fde / count;
        row.iou = iou_sum / count;
        if (probabilistic) {
          row.has_nll = true;
          row.nll = nll / count;
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "method,split,fde,iou,nll\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.method;
    out += ',';
    out += r.split;
    out += ',';
    if (r.has_metrics) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.fde, r.iou);
      out += buf;
    } else {
      out += ',';
    }
    out += ',';
    if (r.has_nll) {
      std::snprintf(buf, sizeof(buf), "%.6f", r.nll);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_report(const std::vector<ReportRow>& rows, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("report: cannot open '" + path + "'");
  os << report_csv(rows);
  if (!os) throw std::runtime_error("report: write failed for '" + path + "'");
}

}  // namespace mplab::eval
