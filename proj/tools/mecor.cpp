// Command-line front end for the correlated-measurement-error small area
// toolkit: fit / simulate / prep / report.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mecor/baselines.hpp"
#include "mecor/estimation.hpp"
#include "mecor/io.hpp"
#include "mecor/mspe.hpp"
#include "mecor/prediction.hpp"
#include "mecor/report.hpp"
#include "mecor/simulation.hpp"
#include "mecor/survey_prep.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct GlobalOpts {
  std::string output_dir = ".";
  std::string jk_scale = "paper";
  int threads = 1;
  std::optional<std::uint64_t> seed;

  mecor::JackknifeScale scale() const {
    return jk_scale == "classic" ? mecor::JackknifeScale::Classic
                                 : mecor::JackknifeScale::Paper;
  }
};

std::ofstream open_output(const GlobalOpts& g, const std::string& name) {
  fs::create_directories(g.output_dir);
  const fs::path p = fs::path(g.output_dir) / name;
  std::ofstream out(p);
  if (!out) throw mecor::BadInputFile("cannot open output file " + p.string());
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mecor::BadInputFile("cannot open input file " + path);
  return in;
}

void cmd_fit(const GlobalOpts& g, const std::string& input, const std::string& method,
             bool no_jackknife) {
  auto in = open_input(input);
  const mecor::Dataset ds = mecor::validate_dataset(mecor::read_area_csv(in, input));

  if (method == "mecor") {
    const mecor::FitResult fit = mecor::fit_mecor(ds);
    std::vector<mecor::PredictionRecord> preds;
    for (const auto& a : ds) preds.push_back(mecor::predict_theta(a, fit.params));
    open_output(g, "fit_mecor.json") << mecor::fit_to_json(fit, "mecor").dump(2) << "\n";
    {
      auto out = open_output(g, "predictions_mecor.csv");
      mecor::write_predictions_csv(out, preds, "mecor");
    }
    if (!no_jackknife) {
      const mecor::JackknifeSet jk = mecor::jackknife_refits(ds);
      const auto mspe = mecor::mspe_estimate(ds, jk, g.scale());
      auto out = open_output(g, "mspe_mecor.csv");
      mecor::write_mspe_csv(out, mspe, "mecor");
      const mecor::JackknifeCovariance cov = mecor::jackknife_covariance(jk, g.scale());
      ordered_json j;
      j["jackknife_se"] = std::vector<double>(cov.se.begin(), cov.se.end());
      std::vector<std::vector<double>> rows;
      for (int r = 0; r < cov.cov.rows(); ++r) {
        rows.emplace_back(cov.cov.row(r).begin(), cov.cov.row(r).end());
      }
      j["jackknife_cov"] = rows;
      j["failed_deletions"] = jk.failed_deletions;
      open_output(g, "jackknife_mecor.json") << j.dump(2) << "\n";
    }
  } else if (method == "yl") {
    const mecor::YlResult yl = mecor::fit_yl(ds);
    open_output(g, "fit_yl.json") << mecor::fit_to_json(yl.fit, "yl").dump(2) << "\n";
    auto out = open_output(g, "predictions_yl.csv");
    mecor::write_predictions_csv(out, yl.predictions, "yl");
  } else if (method == "fh") {
    const mecor::FhResult fh = mecor::fit_fh(ds);
    open_output(g, "fit_fh.json") << mecor::fit_to_json(fh.fit, "fh").dump(2) << "\n";
    {
      auto out = open_output(g, "predictions_fh.csv");
      mecor::write_predictions_csv(out, fh.predictions, "fh");
    }
    auto out = open_output(g, "mspe_fh.csv");
    mecor::write_mspe_csv(out, fh.mspe, "fh");
  } else {
    throw mecor::BadInputFile("unknown method '" + method + "'");
  }
}

void cmd_simulate(const GlobalOpts& g, const std::string& grid_path,
                  std::optional<int> reps_override, bool skip_jackknife) {
  auto in = open_input(grid_path);
  std::vector<mecor::SimConfig> configs = mecor::read_sim_grid(in, grid_path);
  for (auto& c : configs) {
    if (reps_override) c.mc_reps = *reps_override;
    if (g.seed) c.seed = *g.seed;
  }

  auto params_out = open_output(g, "params_table.csv");
  auto mspe_out = open_output(g, "mspe_table.csv");
  mecor::write_params_table_header(params_out);
  mecor::write_mspe_table_header(mspe_out);

  for (const auto& cfg : configs) {
    mecor::SimMethods methods;
    methods.mecor_mspe = !skip_jackknife;
    const mecor::SimResult r = mecor::run_simulation(cfg, methods, g.threads);
    mecor::write_params_table_rows(params_out, cfg, "mecor", r.mecor);
    mecor::write_params_table_rows(params_out, cfg, "yl", r.yl);
    mecor::write_params_table_rows(params_out, cfg, "fh", r.fh);
    mecor::write_mspe_table_row(mspe_out, cfg, r);
    std::cerr << "config a=" << cfg.a << " b=" << cfg.b << " rho=" << cfg.rho
              << " n=" << cfg.n << " dist=" << mecor::dist_name(cfg.dist)
              << " done (" << cfg.mc_reps << " reps)\n";
  }
}

void cmd_prep(const GlobalOpts& g, const std::string& input) {
  auto in = open_input(input);
  const auto units = mecor::read_unit_csv(in, input, &std::cerr);
  const mecor::PreparedData prep = mecor::prepare(units);

  {
    auto out = open_output(g, "areas.csv");
    mecor::write_area_csv(out, mecor::to_area_observations(prep));
  }
  ordered_json j;
  j["pooled_psi"] = {{prep.pooled_psi(0, 0), prep.pooled_psi(0, 1)},
                     {prep.pooled_psi(1, 0), prep.pooled_psi(1, 1)}};
  j["cor_ue"] = prep.cor_ue;
  j["var_ratio"] = prep.var_ratio;
  j["singleton_areas"] = prep.singleton_areas;
  open_output(g, "prep_diagnostics.json") << j.dump(2) << "\n";
}

void cmd_report(const GlobalOpts& g, const std::string& areas_path,
                const std::string& mspe_path) {
  auto ain = open_input(areas_path);
  const auto areas = mecor::read_area_csv(ain, areas_path);

  // Only area_id and mspe_lb are needed from the MSPE file.
  auto min = open_input(mspe_path);
  std::string line;
  if (!std::getline(min, line)) throw mecor::BadInputFile(mspe_path + ": empty file");
  const auto header = mecor::detail::split_csv_line(line);
  int id_col = -1, lb_col = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "area_id") id_col = static_cast<int>(i);
    if (header[i] == "mspe_lb") lb_col = static_cast<int>(i);
  }
  if (id_col < 0 || lb_col < 0) {
    throw mecor::BadInputFile(mspe_path + ": need area_id and mspe_lb columns");
  }
  std::vector<mecor::MspeRecord> mspe;
  int lineno = 1;
  while (std::getline(min, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = mecor::detail::split_csv_line(line);
    if (static_cast<int>(f.size()) <= std::max(id_col, lb_col)) {
      throw mecor::BadInputFile(mspe_path + ":" + std::to_string(lineno) + ": short row");
    }
    mecor::MspeRecord r;
    r.area_id = f[static_cast<size_t>(id_col)];
    r.mspe_lb = mecor::detail::parse_double(f[static_cast<size_t>(lb_col)],
                                            mspe_path + ":" + std::to_string(lineno));
    mspe.push_back(std::move(r));
  }

  const mecor::Report rep = mecor::make_report(areas, mspe);
  {
    auto out = open_output(g, "report.csv");
    mecor::write_report_csv(out, rep);
  }
  {
    auto out = open_output(g, "report.svg");
    mecor::write_report_svg(out, rep);
  }
  ordered_json j;
  j["avg_ratio"] = rep.avg_ratio;
  j["n_areas"] = rep.rows.size();
  open_output(g, "report_summary.json") << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small area estimation with correlated measurement and sampling errors"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--output-dir", g.output_dir, "Directory for output files");
  app.add_option("--threads", g.threads, "Worker threads for simulation replicates")
      ->check(CLI::PositiveNumber);
  app.add_option("--jk-scale", g.jk_scale, "Jackknife scaling: paper (as printed) or classic")
      ->check(CLI::IsMember({"paper", "classic"}));
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Override simulation seeds");

  std::string fit_input, fit_method = "mecor";
  bool no_jackknife = false;
  auto* fit = app.add_subcommand("fit", "Fit an area-level model from an area CSV");
  fit->add_option("input", fit_input, "Area-level CSV file")->required();
  fit->add_option("--method", fit_method, "mecor, yl, or fh")
      ->check(CLI::IsMember({"mecor", "yl", "fh"}));
  fit->add_flag("--no-jackknife", no_jackknife, "Skip delete-one MSPE estimation");

  std::string grid_path;
  int reps = -1;
  bool skip_jackknife = false;
  auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo study from a grid JSON");
  sim->add_option("grid", grid_path, "Simulation grid JSON file")->required();
  sim->add_option("--reps", reps, "Override Monte Carlo replicates");
  sim->add_flag("--skip-jackknife", skip_jackknife,
                "Skip per-replicate jackknife MSPE estimation (much faster)");

  std::string prep_input;
  auto* prep = app.add_subcommand("prep", "Build area-level data from unit-level records");
  prep->add_option("input", prep_input, "Unit-level CSV file")->required();

  std::string rep_areas, rep_mspe;
  auto* report = app.add_subcommand("report", "Compare direct SEs with root MSPEs");
  report->add_option("--areas", rep_areas, "Area-level CSV file")->required();
  report->add_option("--mspe", rep_mspe, "MSPE CSV file")->required();

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed_value;

  try {
    if (*fit) cmd_fit(g, fit_input, fit_method, no_jackknife);
    if (*sim) cmd_simulate(g, grid_path, reps >= 0 ? std::optional<int>(reps) : std::nullopt,
                           skip_jackknife);
    if (*prep) cmd_prep(g, prep_input);
    if (*report) cmd_report(g, rep_areas, rep_mspe);
  } catch (const mecor::Error& e) {
    ordered_json err;
    err["error"] = e.code();
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return e.kind() == mecor::ErrorKind::Validation ? 2 : 3;
  } catch (const std::exception& e) {
    ordered_json err;
    err["error"] = "InternalError";
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 3;
  }
  return 0;
}
