#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mecor/errors.hpp"
#include "mecor/estimation.hpp"
#include "mecor/mspe.hpp"
#include "mecor/prediction.hpp"
#include "mecor/simulation.hpp"
#include "mecor/survey_prep.hpp"
#include "mecor/types.hpp"

namespace mecor {

// Shortest representation that round-trips doubles through text closely
// enough for golden-file comparisons while staying human readable.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    // trim whitespace
    size_t b = field.find_first_not_of(" \t\r");
    size_t e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw BadInputFile("cannot parse number '" + s + "' in " + where);
  }
}

}  // namespace detail

// Area-level CSV: area_id, y, w_1..w_p, psi_uu upper triangle row-major,
// psi_ue_1..psi_ue_p, psi_ee. Header required; p is inferred from the
// column count.
inline std::vector<AreaObservation> read_area_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw BadInputFile(name + ": empty file");
  const size_t ncol = detail::split_csv_line(line).size();
  // ncol = 3 + 2p + p(p+1)/2 => p from the positive root.
  int p = -1;
  for (int q = 1; q <= 64; ++q) {
    if (static_cast<size_t>(3 + 2 * q + q * (q + 1) / 2) == ncol) { p = q; break; }
  }
  if (p < 1) throw BadInputFile(name + ": header has " + std::to_string(ncol) +
                                " columns, not a valid area schema");

  std::vector<AreaObservation> obs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = detail::split_csv_line(line);
    const std::string where = name + ":" + std::to_string(lineno);
    if (f.size() != ncol) throw BadInputFile(where + ": wrong number of fields");
    AreaObservation a;
    size_t c = 0;
    a.area_id = f[c++];
    a.y = detail::parse_double(f[c++], where);
    a.w.resize(p);
    for (int i = 0; i < p; ++i) a.w(i) = detail::parse_double(f[c++], where);
    a.psi.psi_uu.resize(p, p);
    for (int i = 0; i < p; ++i) {
      for (int j = i; j < p; ++j) {
        const double v = detail::parse_double(f[c++], where);
        a.psi.psi_uu(i, j) = v;
        a.psi.psi_uu(j, i) = v;
      }
    }
    a.psi.psi_ue.resize(p);
    for (int i = 0; i < p; ++i) a.psi.psi_ue(i) = detail::parse_double(f[c++], where);
    a.psi.psi_ee = detail::parse_double(f[c++], where);
    obs.push_back(std::move(a));
  }
  return obs;
}

inline void write_area_csv(std::ostream& out, const std::vector<AreaObservation>& obs) {
  const int p = obs.empty() ? 1 : static_cast<int>(obs.front().w.size());
  out << "area_id,y";
  for (int i = 1; i <= p; ++i) out << ",w_" << i;
  for (int i = 1; i <= p; ++i)
    for (int j = i; j <= p; ++j) out << ",psi_uu_" << i << j;
  for (int i = 1; i <= p; ++i) out << ",psi_ue_" << i;
  out << ",psi_ee\n";
  for (const auto& a : obs) {
    out << a.area_id << ',' << fmt(a.y);
    for (int i = 0; i < p; ++i) out << ',' << fmt(a.w(i));
    for (int i = 0; i < p; ++i)
      for (int j = i; j < p; ++j) out << ',' << fmt(a.psi.psi_uu(i, j));
    for (int i = 0; i < p; ++i) out << ',' << fmt(a.psi.psi_ue(i));
    out << ',' << fmt(a.psi.psi_ee) << '\n';
  }
}

inline void write_predictions_csv(std::ostream& out, const std::vector<PredictionRecord>& recs,
                                  const std::string& method) {
  out << "area_id,y,theta_hat,v,e_hat,m1,shrink_coef,method\n";
  for (const auto& r : recs) {
    out << r.area_id << ',' << fmt(r.y) << ',' << fmt(r.theta_hat) << ',' << fmt(r.v) << ','
        << fmt(r.e_hat) << ',' << fmt(r.m1) << ',' << fmt(r.shrink_coef) << ',' << method
        << '\n';
  }
}

inline void write_mspe_csv(std::ostream& out, const std::vector<MspeRecord>& recs,
                           const std::string& method) {
  out << "area_id,theta_hat,m1,m2_jk,bias_jk,mspe,mspe_lb,lb_applied,method\n";
  for (const auto& r : recs) {
    out << r.area_id << ',' << fmt(r.theta_hat) << ',' << fmt(r.m1_hat) << ',' << fmt(r.m2_jk)
        << ',' << fmt(r.bias_jk) << ',' << fmt(r.mspe) << ',' << fmt(r.mspe_lb) << ','
        << (r.lb_applied ? "true" : "false") << ',' << method << '\n';
  }
}

inline nlohmann::ordered_json fit_to_json(const FitResult& fit, const std::string& method) {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["beta0"] = fit.params.beta0;
  j["beta1"] = std::vector<double>(fit.params.beta1.begin(), fit.params.beta1.end());
  j["sigma2_b"] = fit.params.sigma2_b;
  j["sigma2_b_yl_raw"] = fit.sigma2_b_yl;
  j["loglik"] = fit.loglik_at_optimum;
  j["n"] = fit.n_areas;
  j["diagnostics"] = fit.diagnostics;
  return j;
}

// Unit-level CSV: area_id, w_raw, y_raw. Extra columns named like design
// weights trigger a warning and are otherwise ignored.
inline std::vector<UnitRecord> read_unit_csv(std::istream& in, const std::string& name,
                                             std::ostream* warn = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw BadInputFile(name + ": empty file");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3) throw BadInputFile(name + ": expected columns area_id,w_raw,y_raw");
  for (const auto& h : header) {
    if (warn && (h == "weight" || h == "weights" || h == "design_weight")) {
      *warn << "warning: column '" << h
            << "' is ignored; units are treated as a simple random sample\n";
    }
  }
  std::vector<UnitRecord> units;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = detail::split_csv_line(line);
    const std::string where = name + ":" + std::to_string(lineno);
    if (f.size() < 3) throw BadInputFile(where + ": wrong number of fields");
    units.push_back(UnitRecord{f[0], detail::parse_double(f[1], where),
                               detail::parse_double(f[2], where)});
  }
  return units;
}

inline std::vector<SimConfig> read_sim_grid(std::istream& in, const std::string& name) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw BadInputFile(name + ": invalid JSON: " + e.what());
  }
  const nlohmann::json& list = j.is_array() ? j : j.at("configs");
  std::vector<SimConfig> configs;
  for (const auto& c : list) {
    SimConfig sc;
    sc.a = c.at("a").get<double>();
    sc.b = c.at("b").get<double>();
    sc.rho = c.at("rho").get<double>();
    sc.n = c.at("n").get<int>();
    const std::string dist = c.value("dist", "normal");
    if (dist == "normal") sc.dist = SimDist::Normal;
    else if (dist == "t5") sc.dist = SimDist::T5;
    else throw BadInputFile(name + ": unknown dist '" + dist + "'");
    const std::string pat = c.value("psi_pattern", "unequal");
    if (pat == "unequal") sc.psi_pattern = PsiPattern::Unequal;
    else if (pat == "equal") sc.psi_pattern = PsiPattern::Equal;
    else throw BadInputFile(name + ": unknown psi_pattern '" + pat + "'");
    sc.mc_reps = c.value("mc_reps", 1000);
    sc.seed = c.value("seed", std::uint64_t{1});
    sc.validate();
    configs.push_back(sc);
  }
  if (configs.empty()) throw BadInputFile(name + ": no simulation configurations");
  return configs;
}

inline std::string dist_name(SimDist d) { return d == SimDist::Normal ? "normal" : "t5"; }
inline std::string pattern_name(PsiPattern p) {
  return p == PsiPattern::Unequal ? "unequal" : "equal";
}

inline void write_params_table_header(std::ostream& out) {
  out << "method,param,a,b,rho,n,dist,psi_pattern,mc_mean,mc_sd\n";
}

inline void write_params_table_rows(std::ostream& out, const SimConfig& cfg,
                                    const std::string& method, const MethodStats& stats) {
  static const char* params[] = {"beta0", "beta1", "sigma2_b"};
  for (int k = 0; k < 3; ++k) {
    out << method << ',' << params[k] << ',' << fmt(cfg.a) << ',' << fmt(cfg.b) << ','
        << fmt(cfg.rho) << ',' << cfg.n << ',' << dist_name(cfg.dist) << ','
        << pattern_name(cfg.psi_pattern) << ',' << fmt(stats.mc_mean(k)) << ','
        << fmt(stats.mc_sd(k)) << '\n';
  }
}

inline void write_mspe_table_header(std::ostream& out) {
  out << "a,b,rho,n,dist,psi_pattern,direct,mecor,yl,fh,mecor_mspe,fh_mspe\n";
}

inline void write_mspe_table_row(std::ostream& out, const SimConfig& cfg, const SimResult& r) {
  out << fmt(cfg.a) << ',' << fmt(cfg.b) << ',' << fmt(cfg.rho) << ',' << cfg.n << ','
      << dist_name(cfg.dist) << ',' << pattern_name(cfg.psi_pattern) << ','
      << fmt(r.direct_mspe) << ',' << fmt(r.mecor.mc_mspe) << ',' << fmt(r.yl.mc_mspe) << ','
      << fmt(r.fh.mc_mspe) << ',' << fmt(r.mecor.mc_mean_est_mspe) << ','
      << fmt(r.fh.mc_mean_est_mspe) << '\n';
}

}  // namespace mecor
