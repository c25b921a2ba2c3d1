// Command-line front end: loads an instance file, dispatches one experiment,
// writes a CSV of raw points plus a JSON sidecar with the resolved
// configuration, and prints a one-line summary.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "blockcw/analysis.hpp"
#include "blockcw/dynamics.hpp"
#include "blockcw/io.hpp"
#include "blockcw/kernel.hpp"
#include "blockcw/model.hpp"
#include "blockcw/spectral.hpp"
#include "blockcw/version.hpp"

namespace fs = std::filesystem;
using namespace blockcw;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240613;

struct CommonOpts {
  std::string instance;
  std::optional<double> beta;
  std::optional<double> beta_frac;
  std::optional<int> n_override;
  std::vector<int> n_list;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
  std::string out_dir;
  std::string argv_line;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_beta) {
  cmd->add_option("--instance", opts.instance, "instance JSON file (fields n, p, k)")
      ->required();
  if (needs_beta) {
    auto* beta = cmd->add_option("--beta", opts.beta, "inverse temperature");
    auto* frac = cmd->add_option("--beta-frac", opts.beta_frac,
                                 "inverse temperature as a fraction of beta_cr");
    beta->excludes(frac);
    frac->excludes(beta);
  }
  cmd->add_option("--n", opts.n_override, "override the instance site count");
  cmd->add_option("--seed", opts.seed, "base seed (fixed default for reproducibility)");
  cmd->add_option("--threads", opts.threads, "worker thread count")->check(CLI::PositiveNumber);
  cmd->add_option("--out-dir", opts.out_dir,
                  "output directory (default: $BLOCKCW_OUT_DIR or current directory)");
}

fs::path resolve_out_dir(const CommonOpts& opts) {
  std::string dir = opts.out_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("BLOCKCW_OUT_DIR")) dir = env;
  }
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  return dir;
}

BlockModel load_model(const CommonOpts& opts) {
  BlockModel model = load_instance(opts.instance);
  if (opts.n_override) model = BlockModel::create(*opts.n_override, model.p(), model.k());
  return model;
}

double resolve_beta(const BlockModel& model, const CommonOpts& opts) {
  if (opts.beta) return *opts.beta;
  if (opts.beta_frac) return *opts.beta_frac * beta_critical(model);
  fail(Errc::bad_input, "one of --beta / --beta-frac is required");
}

Json base_sidecar(const CommonOpts& opts, const std::string& command, const BlockModel& model) {
  Json j;
  j["tool"] = "blockcw";
  j["version"] = version;
  j["command"] = command;
  j["argv"] = opts.argv_line;
  j["seed"] = opts.seed;
  j["threads"] = opts.threads;
  j["model"] = model_json(model);
  return j;
}

Json summary_stats(const std::vector<std::int64_t>& values) {
  std::vector<std::int64_t> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const auto pos = std::min(sorted.size() - 1,
                              std::size_t(q * double(sorted.size())));
    return sorted[pos];
  };
  double mean = 0.0;
  for (auto v : sorted) mean += double(v);
  mean /= double(sorted.size());
  double var = 0.0;
  for (auto v : sorted) var += (double(v) - mean) * (double(v) - mean);
  var = sorted.size() > 1 ? var / double(sorted.size() - 1) : 0.0;
  Json j;
  j["mean"] = mean;
  j["se"] = std::sqrt(var / double(sorted.size()));
  j["q10"] = quantile(0.10);
  j["median"] = quantile(0.50);
  j["q90"] = quantile(0.90);
  return j;
}

MagVector start_state(const BlockModel& model, const std::string& name) {
  MagVector mag(model.block_count());
  if (name == "top") {
    mag = model.block_sizes();
  } else if (name == "bottom") {
    mag = -model.block_sizes();
  } else if (name == "zero") {
    for (int i = 0; i < model.block_count(); ++i) mag[i] = model.block_sizes()[i] % 2;
  } else {
    fail(Errc::bad_input, "start must be one of top|bottom|zero");
  }
  return mag;
}

int cmd_spectral(const CommonOpts& opts) {
  const BlockModel model = load_model(opts);
  const double beta = resolve_beta(model, opts);
  const SpectralData data = spectral_data(model, beta);
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "spectral.csv", "name,i,j,value");
  csv.row("beta_cr", -1, -1, data.beta_cr);
  csv.row("alpha", -1, -1, data.alpha);
  csv.row("rho_n", -1, -1, data.rho);
  for (int i = 0; i < model.block_count(); ++i) csv.row("a", i, -1, data.a[i]);
  for (int i = 0; i < model.block_count(); ++i) csv.row("lambda", i, -1, data.lambda[i]);
  for (int i = 0; i < model.block_count(); ++i)
    for (int j = 0; j < model.block_count(); ++j) csv.row("v", i, j, data.v(i, j));
  Json j = base_sidecar(opts, "spectral", model);
  j["beta"] = beta;
  j["beta_cr"] = data.beta_cr;
  j["alpha"] = data.alpha;
  j["rho_n"] = data.rho;
  j["regime"] = regime_name(classify_regime(model, beta).regime);
  write_json(dir / "spectral.json", j);
  std::cout << "spectral: beta=" << beta << " beta_cr=" << data.beta_cr
            << " alpha=" << data.alpha << " rho_n=" << data.rho << "\n";
  return 0;
}

int cmd_tv_curve(const CommonOpts& opts, std::int64_t t_max, std::int64_t stride,
                 const std::string& start) {
  const BlockModel model = load_model(opts);
  const double beta = resolve_beta(model, opts);
  const MagVector mag = start_state(model, start);
  if (t_max <= 0)
    t_max = std::int64_t(std::llround(8.0 * model.n() * std::log(double(model.n())) + 100));
  const TVCurve curve = tv_curve(model, beta, mag, t_max, stride, opts.threads);
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "tv_curve.csv", "t,d");
  for (const auto& pt : curve.points) csv.row(pt.t, pt.d);
  Json j = base_sidecar(opts, "tv-curve", model);
  j["beta"] = beta;
  j["start"] = start;
  j["stride"] = stride;
  j["t_max"] = t_max;
  j["mass_drift"] = curve.mass_drift;
  j["max_monotonicity_violation"] = curve.max_monotonicity_violation;
  write_json(dir / "tv_curve.json", j);
  std::cout << "tv-curve: " << curve.points.size() << " points, final d="
            << curve.points.back().d << "\n";
  return 0;
}

int cmd_mixing(const CommonOpts& opts, double eps) {
  const BlockModel model = load_model(opts);
  const double beta = resolve_beta(model, opts);
  const auto corners = corner_states(model);
  const SparseKernel kernel = build_kernel(model, beta);
  const Vector pi = lumped_stationary(model, beta);
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "mixing.csv", "start,t_hit");
  std::int64_t t_mix = 0;
  for (std::size_t c = 0; c < corners.size(); ++c) {
    const std::int64_t t =
        tv_hitting_time(kernel, pi, corners[c], eps, 100'000'000, opts.threads);
    t_mix = std::max(t_mix, t);
    std::string label;
    for (int i = 0; i < model.block_count(); ++i)
      label += (corners[c][i] > 0 ? "+" : "-");
    csv.row(label, t);
  }
  Json j = base_sidecar(opts, "mixing", model);
  j["beta"] = beta;
  j["eps"] = eps;
  j["t_mix"] = t_mix;
  write_json(dir / "mixing.json", j);
  std::cout << "mixing: t_mix(" << eps << ") = " << t_mix << "\n";
  return 0;
}

int cmd_cutoff(const CommonOpts& opts, double beta_frac, std::vector<double> gamma_list) {
  const BlockModel proto = load_model(opts);
  const ModelFamily family = ModelFamily::of(proto);
  std::vector<int> n_list = opts.n_list;
  if (n_list.empty()) n_list = {proto.n()};
  if (gamma_list.empty()) gamma_list = {-10, -6, -3, 0, 3, 6, 10, 15, 20, 25};
  const CutoffProfile profile = cutoff_experiment(family, beta_frac, n_list, gamma_list,
                                                  opts.threads);
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "cutoff.csv", "n,gamma,t,d");
  for (const auto& row : profile.table) csv.row(row.n, row.gamma, row.t, row.d);
  Json j = base_sidecar(opts, "cutoff", proto);
  j["beta_frac"] = beta_frac;
  j["n_list"] = n_list;
  j["gamma_list"] = gamma_list;
  Json per_n = Json::array();
  for (const auto& row : profile.per_n) {
    Json r;
    r["n"] = row.n;
    r["beta"] = row.beta;
    r["alpha"] = row.alpha;
    r["t_n"] = row.t_n;
    r["t_mix"] = row.t_mix;
    r["ratio_nlogn"] = row.ratio;
    r["window_steps"] = row.window_steps;
    per_n.push_back(r);
  }
  j["per_n"] = per_n;
  write_json(dir / "cutoff.json", j);
  const auto& last = profile.per_n.back();
  std::cout << "cutoff: n=" << last.n << " t_mix=" << last.t_mix
            << " t_mix/(n log n)=" << last.ratio << " window=" << last.window_steps << "\n";
  return 0;
}

int cmd_critical(const CommonOpts& opts, double control_frac) {
  const BlockModel proto = load_model(opts);
  const ModelFamily family = ModelFamily::of(proto);
  std::vector<int> n_list = opts.n_list;
  if (n_list.empty()) n_list = {64, 128, 256, 512};
  const ExponentFit critical = critical_exponent_fit(family, n_list, opts.threads);
  const ExponentFit control = exponent_fit(family, n_list, control_frac, 0.25, opts.threads);
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "critical.csv", "n,t_mix_critical,t_mix_control");
  for (std::size_t i = 0; i < n_list.size(); ++i)
    csv.row(n_list[i], critical.t_mix[i], control.t_mix[i]);
  Json j = base_sidecar(opts, "critical", proto);
  j["n_list"] = n_list;
  j["critical_slope"] = critical.fit.slope;
  j["critical_r2"] = critical.fit.r2;
  j["control_frac"] = control_frac;
  j["control_slope"] = control.fit.slope;
  j["control_r2"] = control.fit.r2;
  write_json(dir / "critical.json", j);
  std::cout << "critical: slope=" << critical.fit.slope << " (R2=" << critical.fit.r2
            << "), control slope=" << control.fit.slope << "\n";
  return 0;
}

int cmd_metastable(const CommonOpts& opts, int reps, std::int64_t horizon) {
  const BlockModel proto = load_model(opts);
  const double beta = resolve_beta(proto, opts);
  const ModelFamily family = ModelFamily::of(proto);
  std::vector<int> n_list = opts.n_list;
  if (n_list.empty()) n_list = {16, 24, 32, 40, 48};
  if (horizon <= 0) horizon = 2'000'000;
  const MetastabilityReport rep =
      metastability_fit(family, beta, n_list, reps, horizon, opts.seed, opts.threads);
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "metastable.csv", "n,phi,median_exit");
  CsvWriter phi_csv(dir / "conductance.csv", "n,phi");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    csv.row(n_list[i], rep.phi[i], rep.median_exit[i]);
    phi_csv.row(n_list[i], rep.phi[i]);
  }
  Json j = base_sidecar(opts, "metastable", proto);
  j["beta"] = beta;
  j["n_list"] = n_list;
  j["replicas"] = reps;
  j["horizon"] = horizon;
  j["conductance_slope"] = rep.conductance_fit.slope;
  j["conductance_r2"] = rep.conductance_fit.r2;
  j["exit_slope"] = rep.exit_fit.slope;
  j["exit_r2"] = rep.exit_fit.r2;
  j["max_censored_fraction"] = rep.max_censored_fraction;
  write_json(dir / "metastable.json", j);
  std::cout << "metastable: conductance slope=" << rep.conductance_fit.slope
            << ", exit slope=" << rep.exit_fit.slope
            << ", censored<=" << rep.max_censored_fraction << "\n";
  return rep.max_censored_fraction > 0.5 ? 3 : 0;
}

int cmd_nonclt(const CommonOpts& opts) {
  const BlockModel proto = load_model(opts);
  std::vector<int> n_list = opts.n_list;
  if (n_list.empty()) n_list = {200, 800, 2000};
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "nonclt.csv", "n,ks,binned_tv");
  Json rows = Json::array();
  double z_quadrature = 0.0, z_gamma = 0.0;
  for (int n : n_list) {
    const BlockModel model = BlockModel::create(n, proto.p(), proto.k());
    const NonCltReport rep = nonclt_compare(model);
    csv.row(rep.n, rep.ks, rep.binned_tv);
    Json r;
    r["n"] = rep.n;
    r["ks"] = rep.ks;
    r["binned_tv"] = rep.binned_tv;
    rows.push_back(r);
    z_quadrature = rep.z_quadrature;
    z_gamma = rep.z_gamma;
  }
  Json j = base_sidecar(opts, "nonclt", proto);
  j["n_list"] = n_list;
  j["rows"] = rows;
  j["z_quadrature"] = z_quadrature;
  j["z_gamma_closed_form"] = z_gamma;
  write_json(dir / "nonclt.json", j);
  std::cout << "nonclt: Z=" << z_quadrature << " (closed form " << z_gamma << ")\n";
  return 0;
}

int cmd_landscape(const CommonOpts& opts) {
  const BlockModel model = load_model(opts);
  const double beta = resolve_beta(model, opts);
  const Landscape scape = landscape(model, beta);
  const MinimaReport minima = count_minima(model, beta);
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "landscape.csv", "point,class,i,chi_i");
  for (std::size_t pindex = 0; pindex < scape.points.size(); ++pindex) {
    const auto& fp = scape.points[pindex];
    const char* cls = fp.cls == FixedPointClass::minimum    ? "minimum"
                      : fp.cls == FixedPointClass::maximum  ? "maximum"
                      : fp.cls == FixedPointClass::saddle   ? "saddle"
                                                            : "degenerate";
    for (int i = 0; i < model.block_count(); ++i) csv.row(pindex, cls, i, fp.chi[i]);
  }
  Json j = base_sidecar(opts, "landscape", model);
  j["beta"] = beta;
  j["minima"] = minima.count;
  j["degenerate"] = minima.degenerate;
  j["fixed_points"] = scape.points.size();
  write_json(dir / "landscape.json", j);
  std::cout << "landscape: " << scape.points.size() << " fixed points, " << minima.count
            << " minima" << (minima.degenerate ? " (degenerate)" : "") << "\n";
  return 0;
}

int cmd_couple(const CommonOpts& opts, int reps, std::int64_t horizon,
               const std::string& strategy) {
  const BlockModel model = load_model(opts);
  const double beta = resolve_beta(model, opts);
  CouplingOptions copts;
  copts.strategy = strategy == "monotone" ? CouplingStrategy::plain_monotone
                                          : CouplingStrategy::two_phase;
  if (strategy != "monotone" && strategy != "two-phase")
    fail(Errc::bad_input, "strategy must be two-phase|monotone");
  if (horizon <= 0) {
    // censoring defaults by regime; low temperature needs a user choice
    const double n = model.n();
    switch (classify_regime(model, beta).regime) {
      case Regime::high:
        horizon = std::int64_t(std::llround(100.0 * n * std::log(n)));
        break;
      case Regime::critical:
        horizon = std::int64_t(std::llround(100.0 * std::pow(n, 1.5)));
        break;
      case Regime::low:
        fail(Errc::bad_input, "--horizon is required for beta > beta_cr");
    }
  }
  copts.horizon = horizon;
  copts.seed = opts.seed;
  copts.threads = opts.threads;
  const auto samples =
      coupling_time(model, beta, all_plus(model), all_minus(model), reps, copts);
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "couple.csv", "replica,tau_mag,tau_full,censored");
  std::vector<std::int64_t> mags, fulls;
  int censored = 0;
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const auto& s = samples[r];
    const bool cens = s.censored_mag || s.censored_full;
    censored += cens;
    csv.row(r, s.tau_mag, s.tau_full, int(cens));
    mags.push_back(s.tau_mag);
    fulls.push_back(s.tau_full);
  }
  Json j = base_sidecar(opts, "couple", model);
  j["beta"] = beta;
  j["strategy"] = strategy;
  j["replicas"] = reps;
  j["horizon"] = horizon;
  j["tau_mag"] = summary_stats(mags);
  j["tau_full"] = summary_stats(fulls);
  j["censored_fraction"] = double(censored) / double(samples.size());
  write_json(dir / "couple.json", j);
  std::cout << "couple: median tau_mag=" << j["tau_mag"]["median"]
            << ", median tau_full=" << j["tau_full"]["median"]
            << ", censored=" << j["censored_fraction"] << "\n";
  return censored * 2 > reps ? 3 : 0;
}

int cmd_exit_time(const CommonOpts& opts, int reps, std::int64_t horizon) {
  const BlockModel model = load_model(opts);
  const double beta = resolve_beta(model, opts);
  if (horizon <= 0) horizon = 2'000'000;
  const ExitSamples samples =
      metastable_exit_time(model, beta, reps, horizon, opts.seed, opts.threads);
  const fs::path dir = resolve_out_dir(opts);
  CsvWriter csv(dir / "exit_time.csv", "replica,tau_exit,censored");
  int censored = 0;
  for (std::size_t r = 0; r < samples.tau.size(); ++r) {
    censored += samples.censored[r];
    csv.row(r, samples.tau[r], int(samples.censored[r]));
  }
  Json j = base_sidecar(opts, "exit-time", model);
  j["beta"] = beta;
  j["replicas"] = reps;
  j["horizon"] = horizon;
  j["high_temp_warning"] = samples.high_temp_warning;
  j["tau_exit"] = summary_stats(samples.tau);
  j["censored_fraction"] = double(censored) / double(samples.tau.size());
  write_json(dir / "exit_time.json", j);
  if (samples.high_temp_warning)
    std::cerr << "warning: beta <= beta_cr, no metastable trap expected\n";
  std::cout << "exit-time: median tau_exit=" << j["tau_exit"]["median"]
            << ", censored=" << j["censored_fraction"] << "\n";
  return censored * 2 > reps ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact and Monte Carlo Glauber dynamics on the block Curie-Weiss model"};
  app.require_subcommand(1);

  CommonOpts opts;
  for (int i = 0; i < argc; ++i) {
    if (i) opts.argv_line += " ";
    opts.argv_line += argv[i];
  }

  double eps = 0.25;
  double beta_frac_cutoff = 0.5;
  double control_frac = 0.5;
  std::int64_t t_max = 0, stride = 1, horizon = 0;
  int reps = 200;
  std::string start = "top";
  std::string strategy = "two-phase";
  std::vector<double> gamma_list;

  auto* c_spectral = app.add_subcommand("spectral", "rho_n, a, beta_cr, alpha, V, Lambda");
  add_common(c_spectral, opts, true);

  auto* c_tv = app.add_subcommand("tv-curve", "exact TV distance to stationarity over time");
  add_common(c_tv, opts, true);
  c_tv->add_option("--t-max", t_max, "last step (default 8 n log n)");
  c_tv->add_option("--stride", stride, "sampling stride")->check(CLI::PositiveNumber);
  c_tv->add_option("--start", start, "start state: top|bottom|zero");

  auto* c_mixing = app.add_subcommand("mixing", "exact mixing time from the corner starts");
  add_common(c_mixing, opts, true);
  c_mixing->add_option("--eps", eps, "TV threshold")->check(CLI::Range(1e-9, 0.999999));

  auto* c_cutoff = app.add_subcommand("cutoff", "TV profile around alpha n log n");
  add_common(c_cutoff, opts, false);
  c_cutoff->add_option("--beta-frac", beta_frac_cutoff, "beta as a fraction of beta_cr")
      ->check(CLI::Range(0.0, 0.999999));
  c_cutoff->add_option("--n-list", opts.n_list, "sizes to sweep");
  c_cutoff->add_option("--gamma-list", gamma_list, "window offsets in units of n");

  auto* c_critical = app.add_subcommand("critical", "log-log mixing-time exponent at beta_cr");
  add_common(c_critical, opts, false);
  c_critical->add_option("--n-list", opts.n_list, "sizes to sweep");
  c_critical->add_option("--control-frac", control_frac, "high-temperature control fraction");

  auto* c_meta = app.add_subcommand("metastable", "conductance decay and exit-time growth");
  add_common(c_meta, opts, true);
  c_meta->add_option("--n-list", opts.n_list, "sizes to sweep");
  c_meta->add_option("--replicas", reps, "Monte Carlo replicas")->check(CLI::PositiveNumber);
  c_meta->add_option("--horizon", horizon, "censoring horizon in steps");

  auto* c_nonclt = app.add_subcommand("nonclt", "exact top-direction law against the quartic limit");
  add_common(c_nonclt, opts, false);
  c_nonclt->add_option("--n-list", opts.n_list, "sizes to sweep");

  auto* c_landscape = app.add_subcommand("landscape", "mean-field fixed points and wells");
  add_common(c_landscape, opts, true);

  auto* c_couple = app.add_subcommand("couple", "coupling times from all-plus vs all-minus");
  add_common(c_couple, opts, true);
  c_couple->add_option("--replicas", reps, "replicas")->check(CLI::PositiveNumber);
  c_couple->add_option("--horizon", horizon, "censoring horizon in steps");
  c_couple->add_option("--strategy", strategy, "two-phase|monotone");

  auto* c_exit = app.add_subcommand("exit-time", "hitting time of the negative half-space");
  add_common(c_exit, opts, true);
  c_exit->add_option("--replicas", reps, "replicas")->check(CLI::PositiveNumber);
  c_exit->add_option("--horizon", horizon, "censoring horizon in steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (c_spectral->parsed()) return cmd_spectral(opts);
    if (c_tv->parsed()) return cmd_tv_curve(opts, t_max, stride, start);
    if (c_mixing->parsed()) return cmd_mixing(opts, eps);
    if (c_cutoff->parsed()) return cmd_cutoff(opts, beta_frac_cutoff, gamma_list);
    if (c_critical->parsed()) return cmd_critical(opts, control_frac);
    if (c_meta->parsed()) return cmd_metastable(opts, reps, horizon);
    if (c_nonclt->parsed()) return cmd_nonclt(opts);
    if (c_landscape->parsed()) return cmd_landscape(opts);
    if (c_couple->parsed()) return cmd_couple(opts, reps, horizon, strategy);
    if (c_exit->parsed()) return cmd_exit_time(opts, reps, horizon);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return (e.code() == Errc::not_converged || e.code() == Errc::no_convergence) ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
