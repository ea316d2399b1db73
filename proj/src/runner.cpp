#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <json.hpp>

#include "slowfast/averaging.hpp"
#include "slowfast/config.hpp"
#include "slowfast/errors.hpp"
#include "slowfast/fluctuation.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/manifold.hpp"
#include "slowfast/ou.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/stationary1d.hpp"
#include "slowfast/toy.hpp"
#include "slowfast/validate.hpp"

namespace slowfast {

namespace {

namespace fs = std::filesystem;

SlowFastSystem system_from_config(const ExperimentConfig& cfg) {
  const double sigma = cfg.get_double_or("system", "sigma", 0.1);
  const double eps = cfg.get_double_or("system", "eps", 0.01);
  if (cfg.has("system", "builtin"))
    return make_builtin_system(cfg.get_string("system", "builtin"), sigma, eps);
  // Explicit definition: matrices as row-major lists of lists, nonlinearities
  // by registered name.
  SlowFastSystem sys;
  sys.n = static_cast<int>(cfg.get_int("system", "n"));
  sys.m = static_cast<int>(cfg.get_int("system", "m"));
  const auto Arows = cfg.get_matrix("system", "A");
  const auto Brows = cfg.get_matrix("system", "B");
  sys.A.resize(sys.n, sys.n);
  sys.B.resize(sys.m, sys.m);
  for (int i = 0; i < sys.n; ++i)
    for (int j = 0; j < sys.n; ++j) sys.A(i, j) = Arows.at(i).at(j);
  for (int i = 0; i < sys.m; ++i)
    for (int j = 0; j < sys.m; ++j) sys.B(i, j) = Brows.at(i).at(j);
  const auto& reg = nonlinearity_registry();
  const std::string fname = cfg.get_string("system", "f");
  const std::string gname = cfg.get_string("system", "g");
  const auto fit = reg.find(fname);
  const auto git = reg.find(gname);
  if (fit == reg.end()) throw ConfigParse("unknown nonlinearity name: " + fname);
  if (git == reg.end()) throw ConfigParse("unknown nonlinearity name: " + gname);
  sys.f = fit->second.f;
  sys.g = git->second.g;
  sys.f_name = fname;
  sys.g_name = gname;
  sys.lip_f = fit->second.lip_f;
  sys.lip_g = git->second.lip_g;
  if (fit->second.box) sys.box = fit->second.box;
  sys.sigma = sigma;
  sys.eps = eps;
  sys.validate();
  return sys;
}

void write_manifest(const ExperimentConfig& cfg, const fs::path& dir,
                    const std::vector<std::string>& outputs, long work_units) {
  nlohmann::ordered_json j;
  j["version"] = kVersionString;
  j["kind"] = cfg.kind();
  j["master_seed"] = cfg.master_seed();
  j["outputs"] = outputs;
  j["work_units"] = work_units;
  j["config_echo"] = cfg.raw_text();
  std::ofstream os(dir / "manifest.json");
  if (!os) throw InvalidArgument("cannot write manifest");
  os << j.dump(2) << "\n";
}

SlowDrift quadrature_drift(const SlowFastSystem& sys) {
  const int nt = 801;
  auto xs = std::make_shared<std::vector<double>>(nt);
  auto fb = std::make_shared<std::vector<double>>(nt);
  for (int i = 0; i < nt; ++i)
    (*xs)[i] = -0.25 + 0.5 * i / static_cast<double>(nt - 1);
  parallel_for(nt, [&](std::size_t i) {
    (*fb)[i] = Stationary1D(sys, (*xs)[i]).fbar();
  });
  return SlowDrift::analytic(1, [xs, fb](std::span<const double> x,
                                         std::span<double> out) {
    const double rel = (x[0] - (*xs)[0]) / ((*xs)[1] - (*xs)[0]);
    const auto i = static_cast<std::size_t>(
        std::clamp(rel, 0.0, static_cast<double>(xs->size() - 2)));
    const double w = rel - static_cast<double>(i);
    out[0] = (1.0 - w) * (*fb)[i] + w * (*fb)[i + 1];
  });
}

int run_simulate(const ExperimentConfig& cfg, const fs::path& dir,
                 std::vector<std::string>& outputs, long& work) {
  const SlowFastSystem sys = system_from_config(cfg);
  const auto x0 = cfg.get_vector("simulate", "x0");
  const auto y0 = cfg.get_vector("simulate", "y0");
  const double T = cfg.get_double("simulate", "T");
  const double dt_slow = cfg.get_double("simulate", "dt_slow");
  IntegrateOptions opts;
  opts.save_every = static_cast<int>(cfg.get_int_or("simulate", "save_every", 1));
  NoiseStream stream(cfg.master_seed(), 0, sys.m, dt_slow / 2.0);
  const SamplePath path = integrate_slowfast(sys, x0, y0, T, dt_slow, stream, opts);
  path.write_csv((dir / "path.csv").string());
  outputs.push_back("path.csv");
  work += static_cast<long>(path.n_steps());
  if (path.blew_up)
    std::cout << "warning: integration aborted at |state| > 1e12; partial path written\n";
  return 0;
}

int run_manifold_gap(const ExperimentConfig& cfg, const fs::path& dir,
                     std::vector<std::string>& outputs, long& work) {
  const SlowFastSystem sys = system_from_config(cfg);
  const double x = cfg.get_double("manifold_gap", "x");
  const auto eps_list = cfg.get_vector("manifold_gap", "eps_list");
  const int n_real = static_cast<int>(cfg.get_int("manifold_gap", "n_realizations"));
  ManifoldGapOptions opts;
  opts.tol = cfg.get_double_or("manifold_gap", "tol", 1e-8);
  opts.master_seed = cfg.master_seed();
  ManifoldGapReport gap = manifold_gap(sys, x, eps_list, n_real, opts);
  gap.report.label = "manifold_gap";
  write_report_csv(gap.report, (dir / "gap.csv").string());
  write_report_json(gap.report, (dir / "gap.json").string());
  emit_plotdata(gap.report, (dir / "gap.dat").string());
  outputs.insert(outputs.end(), {"gap.csv", "gap.json", "gap.dat"});
  work += static_cast<long>(n_real) * static_cast<long>(eps_list.size());

  if (cfg.has("manifold_gap", "slice_x_min")) {
    const double lo = cfg.get_double("manifold_gap", "slice_x_min");
    const double hi = cfg.get_double("manifold_gap", "slice_x_max");
    const int count = static_cast<int>(cfg.get_int("manifold_gap", "slice_x_count"));
    const int slice_r =
        static_cast<int>(cfg.get_int_or("manifold_gap", "slice_realizations", 200));
    std::vector<double> grid(count);
    for (int i = 0; i < count; ++i)
      grid[i] = lo + (hi - lo) * i / std::max(1, count - 1);
    AssumptionReport rep = make_assumption_report(sys);
    const LPConfig lp = LPConfig::auto_for(sys, rep, opts.tol);
    export_manifold_slice(sys, lp, grid, slice_r, cfg.master_seed(),
                          (dir / "manifold_slice.csv").string());
    outputs.push_back("manifold_slice.csv");
    work += static_cast<long>(count) * slice_r;
  }
  return 0;
}

int run_average_sweep(const ExperimentConfig& cfg, const fs::path& dir,
                      std::vector<std::string>& outputs, long& work) {
  const SlowFastSystem sys = system_from_config(cfg);
  const double x0 = cfg.get_double("average_sweep", "x0");
  const double T = cfg.get_double("average_sweep", "T");
  const auto eps_list = cfg.get_vector("average_sweep", "eps_list");
  const auto reps_d = cfg.get_vector("average_sweep", "n_replicas");
  std::vector<int> reps(reps_d.begin(), reps_d.end());
  SweepOptions opts;
  opts.master_seed = cfg.master_seed();
  opts.dt_slow_in_eps = cfg.get_double_or("average_sweep", "dt_slow_in_eps", 0.1);
  ConvergenceReport l2;
  const ConvergenceReport rep =
      averaging_error_sweep(sys, x0, T, eps_list, reps, opts, &l2);
  write_report_csv(rep, (dir / "averaging.csv").string());
  write_report_json(rep, (dir / "averaging.json").string());
  emit_plotdata(rep, (dir / "averaging.dat").string());
  write_report_csv(l2, (dir / "averaging_l2.csv").string());
  write_report_json(l2, (dir / "averaging_l2.json").string());
  outputs.insert(outputs.end(), {"averaging.csv", "averaging.json", "averaging.dat",
                                 "averaging_l2.csv", "averaging_l2.json"});
  for (std::size_t i = 0; i < eps_list.size(); ++i)
    work += static_cast<long>(reps[i] * (T / (opts.dt_slow_in_eps * eps_list[i])));
  return 0;
}

int run_intermediate_sweep(const ExperimentConfig& cfg, const fs::path& dir,
                           std::vector<std::string>& outputs, long& work) {
  const SlowFastSystem sys = system_from_config(cfg);
  const double x0 = cfg.get_double("intermediate_sweep", "x0");
  const double T = cfg.get_double("intermediate_sweep", "T");
  const auto eps_list = cfg.get_vector("intermediate_sweep", "eps_list");
  const auto pairs_d = cfg.get_vector("intermediate_sweep", "n_pairs");
  std::vector<int> pairs(pairs_d.begin(), pairs_d.end());
  IntermediateSweepOptions opts;
  opts.master_seed = cfg.master_seed();
  opts.dt_slow_in_eps =
      cfg.get_double_or("intermediate_sweep", "dt_slow_in_eps", 0.05);
  opts.dt_intermediate =
      cfg.get_double_or("intermediate_sweep", "dt_intermediate", 1e-3);
  const IntermediateSweepReport rep =
      intermediate_error_sweep(sys, x0, T, eps_list, pairs, opts);
  write_report_csv(rep.weak, (dir / "intermediate_weak.csv").string());
  write_report_json(rep.weak, (dir / "intermediate_weak.json").string());
  emit_plotdata(rep.weak, (dir / "intermediate_weak.dat").string());
  write_report_csv(rep.averaged, (dir / "averaged_same_data.csv").string());
  write_report_json(rep.averaged, (dir / "averaged_same_data.json").string());
  outputs.insert(outputs.end(),
                 {"intermediate_weak.csv", "intermediate_weak.json",
                  "intermediate_weak.dat", "averaged_same_data.csv",
                  "averaged_same_data.json"});
  for (std::size_t i = 0; i < eps_list.size(); ++i)
    work += static_cast<long>(2.0 * pairs[i] * (T / (0.5 * opts.dt_slow_in_eps * eps_list[i])));
  return 0;
}

int run_sigma_table(const ExperimentConfig& cfg, const fs::path& dir,
                    std::vector<std::string>& outputs, long& work) {
  const SlowFastSystem sys = system_from_config(cfg);
  const double lo = cfg.get_double("sigma_table", "x_min");
  const double hi = cfg.get_double("sigma_table", "x_max");
  const int count = static_cast<int>(cfg.get_int("sigma_table", "x_count"));
  const double T_corr = cfg.get_double("sigma_table", "T_corr");
  const double T_total = cfg.get_double("sigma_table", "T_total");
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i)
    grid[i] = lo + (hi - lo) * i / std::max(1, count - 1);
  const SlowDrift drift = quadrature_drift(sys);
  const DiffusionTable table =
      tabulate_sigma(sys, grid, drift, T_corr, T_total, cfg.master_seed());
  table.write_csv((dir / "sigma_table.csv").string());
  table.write_json_meta((dir / "sigma_table_meta.json").string());
  outputs.insert(outputs.end(), {"sigma_table.csv", "sigma_table_meta.json"});
  work += static_cast<long>(count * T_total / 0.02);
  return 0;
}

int run_validate_toy(const ExperimentConfig& cfg, const fs::path& dir,
                     std::vector<std::string>& outputs, long& work) {
  const std::string budget_name =
      cfg.get_string_or("validate_toy", "budget", "default");
  ValidationBudget budget;
  if (budget_name == "zero")
    budget = ValidationBudget::zero();
  else if (budget_name == "small")
    budget = ValidationBudget::small();
  else if (budget_name == "default")
    budget = ValidationBudget::default_();
  else if (budget_name == "large")
    budget = ValidationBudget::large();
  else
    throw ConfigParse("unknown budget '" + budget_name + "'");
  const ValidationReport rep = validate_toy(budget, cfg.master_seed());
  rep.write_json((dir / "validation_report.json").string());
  outputs.push_back("validation_report.json");
  for (const auto& it : rep.items) {
    work += it.work_units;
    std::cout << (it.skipped ? "SKIP " : (it.pass ? "PASS " : "FAIL ")) << it.name;
    if (!it.skipped)
      std::cout << "  estimate=" << it.estimate << " target=" << it.target
                << " margin=" << it.margin;
    std::cout << "\n";
  }
  return rep.all_pass() || budget.skip_all ? 0 : 2;
}

int run_martingale_check(const ExperimentConfig& cfg, const fs::path& dir,
                         std::vector<std::string>& outputs, long& work) {
  const SlowFastSystem sys = system_from_config(cfg);
  const double x0 = cfg.get_double("martingale_check", "x0");
  const double T = cfg.get_double("martingale_check", "T");
  const int n_rep = static_cast<int>(cfg.get_int("martingale_check", "n_replicas"));
  const int n_inner =
      static_cast<int>(cfg.get_int_or("martingale_check", "hbar_inner", 2000));
  const SlowDrift drift = quadrature_drift(sys);

  std::vector<double> xg, yg;
  const double dx = 0.009 * std::sqrt(2000.0 / std::max(100, n_inner));
  for (int i = 0; i < 7; ++i) xg.push_back(x0 + (i - 3) * dx);
  for (int j = 0; j < 29; ++j) yg.push_back(-0.32 + 0.64 * j / 28.0);
  HbarCache cache(sys, drift, xg, yg, n_inner, 64.0, cfg.master_seed() + 1, 0.04);

  std::vector<PathFunctional> fns;
  fns.push_back([](const SamplePath&, double) { return 1.0; });
  fns.push_back([](const SamplePath& p, double s) {
    double x, dummy;
    p.state_at(s, {&x, 1}, {&dummy, 0});
    return x;
  });
  fns.push_back([](const SamplePath& p, double s) {
    double x, dummy;
    p.state_at(s, {&x, 1}, {&dummy, 0});
    return std::tanh(20.0 * x);
  });
  MartingaleOptions mo;
  mo.master_seed = cfg.master_seed();
  const MartingaleReport rep =
      martingale_residual(sys, x0, T, n_rep, fns, drift, cache, mo);

  nlohmann::ordered_json j;
  j["max_abs_z"] = rep.max_abs_z;
  j["n_replicas"] = rep.n_replicas;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : rep.cells)
    arr.push_back({{"s_index", c.s},
                   {"t_index", c.t},
                   {"fn", c.fn_index},
                   {"residual", c.residual},
                   {"stderr", c.stderr_}});
  j["cells"] = arr;
  std::ofstream os(dir / "martingale.json");
  os << j.dump(2) << "\n";
  outputs.push_back("martingale.json");
  work += n_rep;
  return rep.max_abs_z <= 3.0 ? 0 : 2;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.out_dir());
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidArgument("cannot create out_dir " + dir.string());

  std::vector<std::string> outputs;
  long work = 0;
  int rc = 0;
  if (cfg.kind() == "simulate")
    rc = run_simulate(cfg, dir, outputs, work);
  else if (cfg.kind() == "manifold_gap")
    rc = run_manifold_gap(cfg, dir, outputs, work);
  else if (cfg.kind() == "average_sweep")
    rc = run_average_sweep(cfg, dir, outputs, work);
  else if (cfg.kind() == "intermediate_sweep")
    rc = run_intermediate_sweep(cfg, dir, outputs, work);
  else if (cfg.kind() == "sigma_table")
    rc = run_sigma_table(cfg, dir, outputs, work);
  else if (cfg.kind() == "validate_toy")
    rc = run_validate_toy(cfg, dir, outputs, work);
  else if (cfg.kind() == "martingale_check")
    rc = run_martingale_check(cfg, dir, outputs, work);
  else
    throw ConfigParse("unknown kind " + cfg.kind());

  write_manifest(cfg, dir, outputs, work);
  return rc;
}

int run_experiment_file(const std::string& config_path) {
  try {
    const ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    return run_experiment(cfg);
  } catch (const ConfigParse& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace slowfast
