#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mecor/errors.hpp"
#include "mecor/io.hpp"
#include "mecor/mspe.hpp"
#include "mecor/types.hpp"

namespace mecor {

struct ReportRow {
  std::string area_id;
  double se_direct = 0.0;  // sqrt(psi_ee)
  double rmspe = 0.0;      // sqrt(mspe_lb)
  double ratio = 0.0;
};

struct Report {
  std::vector<ReportRow> rows;  // ascending by implied sample size
  double avg_ratio = 0.0;
};

// Pair direct-estimator standard errors with root MSPEs. Areas are sorted
// by descending psi_ee, which for smoothed psi_i = pooled/n_i is ascending
// sample size.
inline Report make_report(const std::vector<AreaObservation>& areas,
                          const std::vector<MspeRecord>& mspe) {
  std::map<std::string, double> by_id;
  for (const auto& m : mspe) by_id[m.area_id] = m.mspe_lb;

  Report rep;
  std::vector<std::pair<double, ReportRow>> keyed;
  for (const auto& a : areas) {
    auto it = by_id.find(a.area_id);
    if (it == by_id.end()) {
      throw BadInputFile("area " + a.area_id + " missing from the MSPE file");
    }
    if (!(it->second > 0.0)) {
      throw BadInputFile("area " + a.area_id + " has non-positive mspe_lb");
    }
    ReportRow row;
    row.area_id = a.area_id;
    row.se_direct = std::sqrt(a.psi.psi_ee);
    row.rmspe = std::sqrt(it->second);
    row.ratio = row.se_direct > 0.0 ? row.rmspe / row.se_direct : 0.0;
    keyed.emplace_back(-a.psi.psi_ee, row);
  }
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  double sum = 0.0;
  for (auto& [k, row] : keyed) {
    sum += row.ratio;
    rep.rows.push_back(std::move(row));
  }
  rep.avg_ratio = rep.rows.empty() ? 0.0 : sum / rep.rows.size();
  return rep;
}

inline void write_report_csv(std::ostream& out, const Report& rep) {
  out << "area_id,se_direct,rmspe,ratio\n";
  for (const auto& r : rep.rows) {
    out << r.area_id << ',' << fmt(r.se_direct) << ',' << fmt(r.rmspe) << ','
        << fmt(r.ratio) << '\n';
  }
}

// Grouped-bar chart: per area one direct-SE bar and one RMSPE bar.
inline void write_report_svg(std::ostream& out, const Report& rep) {
  const int bar_w = 6, gap = 4, margin = 40, height = 320;
  const int group = 2 * bar_w + gap;
  const int width = margin * 2 + static_cast<int>(rep.rows.size()) * group;
  double vmax = 1e-12;
  for (const auto& r : rep.rows) vmax = std::max({vmax, r.se_direct, r.rmspe});
  const double scale = (height - 2 * margin) / vmax;

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n"
      << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
      << width - margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  int x = margin;
  for (const auto& r : rep.rows) {
    const int h1 = static_cast<int>(r.se_direct * scale);
    const int h2 = static_cast<int>(r.rmspe * scale);
    out << "<rect class=\"direct\" x=\"" << x << "\" y=\"" << height - margin - h1
        << "\" width=\"" << bar_w << "\" height=\"" << h1
        << "\" fill=\"#c0392b\"><title>" << r.area_id << " se_direct=" << fmt(r.se_direct)
        << "</title></rect>\n";
    out << "<rect class=\"rmspe\" x=\"" << x + bar_w << "\" y=\"" << height - margin - h2
        << "\" width=\"" << bar_w << "\" height=\"" << h2
        << "\" fill=\"#27ae60\"><title>" << r.area_id << " rmspe=" << fmt(r.rmspe)
        << "</title></rect>\n";
    x += group;
  }
  out << "</svg>\n";
}

}  // namespace mecor
