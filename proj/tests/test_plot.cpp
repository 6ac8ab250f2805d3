#include "doctest.h"

#include <regex>

#include "sylcount/error.hpp"
#include "sylcount/plot.hpp"

using namespace sylcount;

namespace {

std::size_t occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

ExperimentReport two_method_report() {
  ExperimentReport r;
  r.corpus = "demo";
  r.folds = 2;
  r.sizes_s = {30, 60, 120};
  r.methods = {"neural", "envelope"};
  for (const auto& m : r.methods)
    for (double size : {0.0, 30.0, 60.0, 120.0})
      for (int fold = 0; fold < 2; ++fold) {
        ExperimentCell c;
        c.method = m;
        c.size_s = size;
        c.fold = fold;
        c.error_pct = 40.0 - size / 10.0 + fold;
        r.cells.push_back(c);
      }
  return r;
}

}  // namespace

TEST_CASE("render_report_svg: one series per method with a point per size") {
  const ExperimentReport r = two_method_report();
  const std::string svg = render_report_svg(r);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(occurrences(svg, "<g class=\"series\"") == 2);
  CHECK(svg.find("data-method=\"neural\"") != std::string::npos);
  CHECK(svg.find("data-method=\"envelope\"") != std::string::npos);
  CHECK(occurrences(svg, "class=\"errorbar\"") == 8);
  CHECK(svg.find(">0<") != std::string::npos);  // the unadapted tick
  CHECK(svg == render_report_svg(r));

  const std::string table = report_table_csv(r);
  CHECK(table.rfind("method,size_s,folds_ok,folds_failed,mean_pct,std_pct\n", 0) == 0);
  CHECK(occurrences(table, "\n") == 9);
}

TEST_CASE("render_report_svg: failed cells are skipped, an empty report is an error") {
  ExperimentReport r = two_method_report();
  for (auto& c : r.cells)
    if (c.method == "envelope") c.ok = false;
  const std::string svg = render_report_svg(r);
  CHECK(occurrences(svg, "class=\"errorbar\"") == 4);
  for (auto& c : r.cells) c.ok = false;
  CHECK_THROWS_AS(render_report_svg(r), DataError);
  r.cells.clear();
  CHECK_THROWS_AS(render_report_svg(r), DataError);
}

TEST_CASE("render_trace_svg: step trace with an optional reference line") {
  AccumulationTrace t{"utt<1>", 10.0, {0, 0, 1, 1, 2, 2, 3}, 3.0};
  const std::string svg = render_trace_svg(t);
  CHECK(occurrences(svg, "class=\"trace\"") == 1);
  CHECK(occurrences(svg, "class=\"reference\"") == 1);
  CHECK(svg.find("utt<1>") == std::string::npos);  // escaped
  t.reference.reset();
  CHECK(occurrences(render_trace_svg(t), "class=\"reference\"") == 0);
  t.values.clear();
  CHECK_THROWS_AS(render_trace_svg(t), DataError);
}

TEST_CASE("trace CSV round trip and malformed input") {
  const AccumulationTrace t{"a", 12.5, {0.0, 0.25, 1.5, 2.0}, 2.0};
  const std::string text = trace_csv(t);
  CHECK(text.find("frame,time_s,count") != std::string::npos);
  const AccumulationTrace back = parse_trace_csv(text, "t.csv");
  CHECK(back.id == "a");
  CHECK(back.hop_ms == 12.5);
  CHECK(back.values == t.values);
  CHECK(back.reference == 2.0);
  const AccumulationTrace no_ref = parse_trace_csv(trace_csv({"b", 10.0, {1.0}, std::nullopt}), "b");
  CHECK_FALSE(no_ref.reference.has_value());

  try {
    parse_trace_csv("# id=a\n# hop_ms=10\nframe,time_s,count\n0,0,1\n1,0.01,oops\n", "x.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("x.csv:5") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_trace_csv("0,0,1\n", "y"), DataError);
  CHECK_THROWS_AS(parse_trace_csv("# id=a\nframe,time_s,count\n", "z"), DataError);
}
