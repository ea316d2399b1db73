#include "slowfast/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "slowfast/errors.hpp"

namespace slowfast {

void ConvergenceReport::sort_rows() {
  std::sort(rows.begin(), rows.end(),
            [](const RateRow& a, const RateRow& b) { return a.eps > b.eps; });
}

void ConvergenceReport::fit_if_possible() {
  sort_rows();
  exact_zero = !rows.empty() &&
               std::all_of(rows.begin(), rows.end(),
                           [](const RateRow& r) { return r.error == 0.0; });
  if (exact_zero || rows.size() < 3) {
    fit.reset();
    return;
  }
  fit = fit_rate(rows);
}

RateFit fit_rate(std::span<const RateRow> rows) {
  if (rows.size() < 3) throw InvalidArgument("fit_rate: need >= 3 rows");
  for (const auto& r : rows) {
    if (!(r.eps > 0.0)) throw InvalidArgument("fit_rate: eps must be positive");
    if (!(r.error > 0.0)) throw InvalidArgument("fit_rate: errors must be positive");
  }
  const double eps0 = rows[0].eps;
  bool all_equal = std::all_of(rows.begin(), rows.end(),
                               [&](const RateRow& r) { return r.eps == eps0; });
  if (all_equal) throw DegenerateFit("all eps equal");

  const double ln10 = std::log(10.0);
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (const auto& r : rows) {
    const double x = std::log10(r.eps);
    const double y = std::log10(r.error);
    double se_log = r.stderr_ > 0.0 ? (r.stderr_ / r.error) / ln10 : 0.0;
    if (se_log <= 0.0) se_log = 1e-9;  // exact rows: near-infinite weight
    const double w = 1.0 / (se_log * se_log);
    sw += w;
    swx += w * x;
    swy += w * y;
    swxx += w * x * x;
    swxy += w * x * y;
  }
  const double det = sw * swxx - swx * swx;
  if (!(std::fabs(det) > 1e-30 * sw * swxx))
    throw DegenerateFit("singular normal equations");
  RateFit fit;
  fit.slope = (sw * swxy - swx * swy) / det;
  fit.intercept_log10 = (swxx * swy - swx * swxy) / det;
  const double var_slope = sw / det;  // known-variance GLS
  const double half = 1.959963984540054 * std::sqrt(var_slope);
  fit.slope_ci_lo = fit.slope - half;
  fit.slope_ci_hi = fit.slope + half;
  return fit;
}

namespace {
std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void write_report_csv(const ConvergenceReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot open " + path);
  os << "eps,error,stderr\n";
  for (const auto& r : report.rows)
    os << fmt17(r.eps) << ',' << fmt17(r.error) << ',' << fmt17(r.stderr_) << "\n";
}

ConvergenceReport read_report_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open " + path);
  ConvergenceReport rep;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("eps", 0) == 0) continue;  // header
    }
    std::istringstream ss(line);
    RateRow row;
    char c1, c2;
    if (!(ss >> row.eps >> c1 >> row.error >> c2 >> row.stderr_))
      throw ConfigParse("bad report row: " + line);
    rep.rows.push_back(row);
  }
  rep.fit_if_possible();
  return rep;
}

void write_report_json(const ConvergenceReport& report, const std::string& path) {
  nlohmann::ordered_json j;
  j["label"] = report.label;
  j["seed"] = report.seed;
  j["n_replicas"] = report.n_replicas;
  j["exact_zero"] = report.exact_zero;
  if (report.fit) {
    j["slope"] = report.fit->slope;
    j["slope_ci"] = {report.fit->slope_ci_lo, report.fit->slope_ci_hi};
    j["intercept_log10"] = report.fit->intercept_log10;
  }
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"eps", r.eps}, {"error", r.error}, {"stderr", r.stderr_}});
  j["rows"] = rows;
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot open " + path);
  os << j.dump(2) << "\n";
}

void emit_plotdata(const ConvergenceReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot open " + path);
  os << "# columns: eps  error  stderr  fit\n";
  os << "# fit = 10^(intercept + slope*log10(eps))";
  if (report.fit) {
    os << "  slope=" << fmt17(report.fit->slope)
       << " intercept=" << fmt17(report.fit->intercept_log10);
  }
  os << "\n";
  for (const auto& r : report.rows) {
    double fitted = 0.0;
    if (report.fit)
      fitted = std::pow(10.0, report.fit->intercept_log10 +
                                  report.fit->slope * std::log10(r.eps));
    os << fmt17(r.eps) << ' ' << fmt17(r.error) << ' ' << fmt17(r.stderr_) << ' '
       << fmt17(fitted) << "\n";
  }
}

}  // namespace slowfast
