#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sylcount/evaluation.hpp"

namespace sylcount {

// Error (%) against adaptation size on a log axis with +/-1 std bars. The
// unadapted point is drawn at a separate "0" tick left of the smallest size.
// Throws DataError when the report has no successful cells.
std::string render_report_svg(const ExperimentReport& report);
// method,size_s,folds_ok,folds_failed,mean_pct,std_pct rows backing the figure.
std::string report_table_csv(const ExperimentReport& report);

struct AccumulationTrace {
  std::string id;
  double hop_ms = 10.0;
  std::vector<double> values;
  std::optional<double> reference;  // ground-truth count when known
};

// Step plot of the decoded count per frame with the reference as a
// horizontal line.
std::string render_trace_svg(const AccumulationTrace& trace);
std::string trace_csv(const AccumulationTrace& trace);
// Reads the format written by trace_csv. Throws DataError on malformed input.
AccumulationTrace parse_trace_csv(const std::string& text, const std::string& source);

}  // namespace sylcount
