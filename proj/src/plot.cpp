#include "sylcount/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "sylcount/error.hpp"

namespace sylcount {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 70.0, kRight = 160.0, kTop = 40.0, kBottom = 60.0;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                               "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string short_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Roughly five round tick values spanning [lo, hi].
std::vector<double> nice_ticks(double lo, double hi) {
  const double span = std::max(hi - lo, 1e-9);
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step)
    ticks.push_back(std::abs(t) < 1e-12 ? 0.0 : t);
  return ticks;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void open_svg(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"15\">"
     << escape(title) << "</text>\n";
}

void axes(std::ostringstream& os, const Frame& f, const std::string& xlabel,
          const std::string& ylabel, const std::vector<std::pair<double, std::string>>& xticks,
          const std::vector<double>& yticks) {
  const double bx0 = f.px(f.x0), bx1 = f.px(f.x1), by0 = f.py(f.y0), by1 = f.py(f.y1);
  os << "<g stroke=\"black\" fill=\"none\"><rect x=\"" << fmt(bx0) << "\" y=\"" << fmt(by1)
     << "\" width=\"" << fmt(bx1 - bx0) << "\" height=\"" << fmt(by0 - by1) << "\"/></g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (const auto& [x, label] : xticks) {
    os << "<line x1=\"" << fmt(f.px(x)) << "\" y1=\"" << fmt(by0) << "\" x2=\"" << fmt(f.px(x))
       << "\" y2=\"" << fmt(by0 + 5) << "\" stroke=\"black\"/>"
       << "<text x=\"" << fmt(f.px(x)) << "\" y=\"" << fmt(by0 + 18)
       << "\" text-anchor=\"middle\">" << escape(label) << "</text>\n";
  }
  for (double y : yticks) {
    os << "<line x1=\"" << fmt(bx0 - 5) << "\" y1=\"" << fmt(f.py(y)) << "\" x2=\"" << fmt(bx0)
       << "\" y2=\"" << fmt(f.py(y)) << "\" stroke=\"black\"/>"
       << "<line x1=\"" << fmt(bx0) << "\" y1=\"" << fmt(f.py(y)) << "\" x2=\"" << fmt(bx1)
       << "\" y2=\"" << fmt(f.py(y)) << "\" stroke=\"#dddddd\"/>"
       << "<text x=\"" << fmt(bx0 - 8) << "\" y=\"" << fmt(f.py(y) + 4)
       << "\" text-anchor=\"end\">" << short_number(y) << "</text>\n";
  }
  os << "<text x=\"" << fmt((bx0 + bx1) / 2) << "\" y=\"" << fmt(kHeight - 15)
     << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(xlabel) << "</text>\n"
     << "<text transform=\"translate(18," << fmt((by0 + by1) / 2)
     << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">" << escape(ylabel)
     << "</text>\n</g>\n";
}

}  // namespace

std::string render_report_svg(const ExperimentReport& report) {
  const std::vector<ExperimentSummary> summaries = report.summaries();
  std::map<std::string, std::vector<const ExperimentSummary*>> by_method;
  double ymax = 0.0;
  for (const ExperimentSummary& s : summaries) {
    if (s.folds_ok == 0) continue;
    by_method[s.method].push_back(&s);
    ymax = std::max(ymax, s.mean_pct + s.std_pct);
  }
  if (by_method.empty())
    throw DataError("report for corpus '" + report.corpus + "' has no successful cells to plot");

  std::vector<double> sizes;
  for (const ExperimentSummary& s : summaries)
    if (s.size_s > 0.0 && s.folds_ok > 0) sizes.push_back(s.size_s);
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  // Log axis in units of log10(seconds); the unadapted point sits one
  // position to the left of the smallest size.
  const double lmin = sizes.empty() ? 0.0 : std::log10(sizes.front());
  const double lmax = sizes.empty() ? 1.0 : std::log10(sizes.back());
  const double step = sizes.size() > 1 ? (lmax - lmin) / double(sizes.size() - 1) : 1.0;
  const double zero_x = lmin - step;
  const auto xpos = [&](double size) { return size > 0.0 ? std::log10(size) : zero_x; };
  const Frame f{zero_x - 0.4 * step, lmax + 0.4 * step, 0.0, ymax > 0.0 ? ymax * 1.1 : 1.0};

  std::vector<std::pair<double, std::string>> xticks{{zero_x, "0"}};
  for (double s : sizes) xticks.push_back({std::log10(s), size_label(s)});

  std::ostringstream os;
  open_svg(os, "Adaptation curve: " + report.corpus);
  axes(os, f, "adaptation data (log scale)", "relative error (%)", xticks, nice_ticks(0.0, f.y1));

  int color = 0;
  double legend_y = kTop + 10.0;
  for (const std::string& method : report.methods) {
    const auto it = by_method.find(method);
    if (it == by_method.end()) continue;
    const char* c = kColors[color++ % std::size(kColors)];
    std::vector<const ExperimentSummary*> pts = it->second;
    std::sort(pts.begin(), pts.end(),
              [](const auto* a, const auto* b) { return a->size_s < b->size_s; });
    os << "<g class=\"series\" data-method=\"" << escape(method) << "\">\n<polyline fill=\"none\" stroke=\""
       << c << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      os << (i ? " " : "") << fmt(f.px(xpos(pts[i]->size_s))) << ',' << fmt(f.py(pts[i]->mean_pct));
    os << "\"/>\n";
    for (const auto* p : pts) {
      const double x = f.px(xpos(p->size_s));
      const double lo = f.py(std::max(0.0, p->mean_pct - p->std_pct));
      const double hi = f.py(p->mean_pct + p->std_pct);
      os << "<line class=\"errorbar\" x1=\"" << fmt(x) << "\" y1=\"" << fmt(lo) << "\" x2=\""
         << fmt(x) << "\" y2=\"" << fmt(hi) << "\" stroke=\"" << c << "\"/>"
         << "<line x1=\"" << fmt(x - 4) << "\" y1=\"" << fmt(lo) << "\" x2=\"" << fmt(x + 4)
         << "\" y2=\"" << fmt(lo) << "\" stroke=\"" << c << "\"/>"
         << "<line x1=\"" << fmt(x - 4) << "\" y1=\"" << fmt(hi) << "\" x2=\"" << fmt(x + 4)
         << "\" y2=\"" << fmt(hi) << "\" stroke=\"" << c << "\"/>"
         << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(f.py(p->mean_pct))
         << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    }
    const double lx = kWidth - kRight + 12.0;
    os << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(legend_y) << "\" x2=\"" << fmt(lx + 20)
       << "\" y2=\"" << fmt(legend_y) << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>"
       << "<text x=\"" << fmt(lx + 26) << "\" y=\"" << fmt(legend_y + 4)
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(method) << "</text>\n</g>\n";
    legend_y += 18.0;
  }
  os << "</svg>\n";
  return os.str();
}

std::string report_table_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "method,size_s,folds_ok,folds_failed,mean_pct,std_pct\n";
  for (const ExperimentSummary& s : report.summaries()) {
    os << s.method << ',' << s.size_s << ',' << s.folds_ok << ',' << s.folds_failed << ',';
    if (s.folds_ok > 0) os << s.mean_pct << ',' << s.std_pct;
    else os << ',';
    os << '\n';
  }
  return os.str();
}

std::string render_trace_svg(const AccumulationTrace& trace) {
  if (trace.values.empty()) throw DataError("trace '" + trace.id + "' is empty");
  const double seconds = double(trace.values.size()) * trace.hop_ms / 1000.0;
  double ymax = *std::max_element(trace.values.begin(), trace.values.end());
  if (trace.reference) ymax = std::max(ymax, *trace.reference);
  const Frame f{0.0, seconds, 0.0, std::max(1.0, ymax * 1.15)};

  std::vector<std::pair<double, std::string>> xticks;
  for (double t : nice_ticks(0.0, seconds)) xticks.push_back({t, short_number(t)});

  std::ostringstream os;
  open_svg(os, "Accumulated count: " + trace.id);
  axes(os, f, "time (s)", "decoded count", xticks, nice_ticks(0.0, f.y1));
  const double dt = trace.hop_ms / 1000.0;
  os << "<polyline class=\"trace\" fill=\"none\" stroke=\"" << kColors[0]
     << "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t t = 0; t < trace.values.size(); ++t) {
    const double y = f.py(trace.values[t]);
    os << (t ? " " : "") << fmt(f.px(t * dt)) << ',' << fmt(y) << ' ' << fmt(f.px((t + 1) * dt))
       << ',' << fmt(y);
  }
  os << "\"/>\n";
  if (trace.reference) {
    const double y = f.py(*trace.reference);
    os << "<line class=\"reference\" x1=\"" << fmt(f.px(0)) << "\" y1=\"" << fmt(y) << "\" x2=\""
       << fmt(f.px(seconds)) << "\" y2=\"" << fmt(y)
       << "\" stroke=\"" << kColors[1] << "\" stroke-dasharray=\"6,4\"/>"
       << "<text x=\"" << fmt(kWidth - kRight + 12) << "\" y=\"" << fmt(y + 4)
       << "\" font-family=\"sans-serif\" font-size=\"12\">reference " << short_number(*trace.reference)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string trace_csv(const AccumulationTrace& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "# id=" << trace.id << '\n' << "# hop_ms=" << trace.hop_ms << '\n';
  if (trace.reference) os << "# reference=" << *trace.reference << '\n';
  os << "frame,time_s,count\n";
  for (std::size_t t = 0; t < trace.values.size(); ++t)
    os << t << ',' << double(t) * trace.hop_ms / 1000.0 << ',' << trace.values[t] << '\n';
  return os.str();
}

AccumulationTrace parse_trace_csv(const std::string& text, const std::string& source) {
  AccumulationTrace trace;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  const auto fail = [&](const std::string& why) {
    throw DataError(source + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
      try {
        if (key == "id") trace.id = value;
        else if (key == "hop_ms") trace.hop_ms = std::stod(value);
        else if (key == "reference") trace.reference = std::stod(value);
      } catch (const std::exception&) {
        fail("bad value for '" + key + "'");
      }
      continue;
    }
    if (!header) {
      if (line != "frame,time_s,count") fail("expected header 'frame,time_s,count'");
      header = true;
      continue;
    }
    const auto last = line.rfind(',');
    if (last == std::string::npos) fail("expected three columns");
    try {
      std::size_t used = 0;
      const double v = std::stod(line.substr(last + 1), &used);
      if (!std::isfinite(v)) fail("non-finite count");
      trace.values.push_back(v);
    } catch (const std::invalid_argument&) {
      fail("unparsable count");
    } catch (const std::out_of_range&) {
      fail("count out of range");
    }
  }
  if (!header) throw DataError(source + ": not a trace file (missing header)");
  if (trace.values.empty()) throw DataError(source + ": trace has no frames");
  if (!(trace.hop_ms > 0.0)) throw DataError(source + ": hop_ms must be positive");
  return trace;
}

}  // namespace sylcount
