#pragma once

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <sldmm/oracle.hpp>
#include <sldmm/sldmm.hpp>

namespace sldmm::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string fixed6(double v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

/// "2x3" -> (2, 3)
inline std::pair<Index, Index> parse_patch(const std::string &s) {
  const auto x = s.find('x');
  require(x != std::string::npos && x > 0 && x + 1 < s.size(),
          "--patch expects ROWSxCOLS, e.g. 2x2");
  std::size_t u1 = 0, u2 = 0;
  const long long a = std::stoll(s.substr(0, x), &u1);
  const long long b = std::stoll(s.substr(x + 1), &u2);
  require(u1 == x && u2 == s.size() - x - 1 && a >= 1 && b >= 1,
          "--patch expects positive ROWSxCOLS");
  return {static_cast<Index>(a), static_cast<Index>(b)};
}

/// Expands `--config FILE` into `--key=value` arguments placed right after
/// the subcommand name, so anything given explicitly on the command line
/// (parsed later, last one wins) takes precedence over the file.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    std::size_t erase = 0;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      erase = 2;
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      erase = 1;
    } else {
      continue;
    }
    std::ifstream in(path);
    if (!in)
      throw IoError("cannot open config file '" + path + "'");
    std::vector<std::string> injected;
    std::string line;
    while (std::getline(in, line)) {
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#' || line[first] == ';')
        continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line without '=': " + line);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      injected.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
    }
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
               args.begin() + static_cast<std::ptrdiff_t>(i + erase));
    args.insert(args.begin() + 2, injected.begin(), injected.end());
    break;
  }
  return args;
}

} // namespace detail

struct SynthArgs {
  oracle::SyntheticSpec spec;
  std::string output;
};

struct CorruptArgs {
  std::string input, output, mask_output;
  double rate = 0.05;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
};

struct ReconstructArgs {
  std::string data, mask, output, manifest;
  std::string init = "apg";
  std::string init_file;
  std::string reference;
  std::string patch = "2x2";
  std::string psnr_formula = "paper";
  bool no_symmetrize = false;
  bool quiet = false;
  SolverConfig solver;
  ApgConfig apg;
};

struct EvalArgs {
  std::string candidate, reference;
};

struct ExportArgs {
  std::string input, output, format = "pgm";
  Index band = 1;
};

/// Synthesize a linear-mixture cube and write it as HSC.
inline int cmd_synth(const SynthArgs &a, std::ostream &out) {
  const DataCube cube = oracle::synth_cube(a.spec);
  io::write_hsc(a.output, cube);
  out << "m=" << cube.rows() << " n=" << cube.cols() << " B=" << cube.bands()
      << " rank=" << a.spec.rank << " output=" << a.output << "\n";
  return kOk;
}

/// Noise first (seed), then per-band subsampling (seed + 1).
inline int cmd_corrupt(const CorruptArgs &a, std::ostream &out) {
  require(a.rate > 0.0 && a.rate <= 1.0, "--rate must lie in (0, 1]");
  require(a.noise_sigma >= 0.0, "--noise-sigma must be non-negative");
  const DataCube clean = io::read_hsc(a.input);
  const DataCube noisy = add_gaussian_noise(clean, a.noise_sigma, a.seed);
  const MaskSet masks =
      make_mask(clean.rows(), clean.cols(), clean.bands(), a.rate, a.seed + 1);
  io::write_hsc(a.output, apply_mask(noisy, masks));
  io::write_mask(a.mask_output, masks);
  out << "rate=" << RunManifest::format(a.rate)
      << " noise_sigma=" << RunManifest::format(a.noise_sigma) << " seed=" << a.seed
      << " sampled_per_band=" << masks.count(0) << "\n";
  return kOk;
}

inline void record_config(RunManifest &m, const ReconstructArgs &a,
                          const SolverConfig &c) {
  m.set("data", a.data);
  m.set("mask", a.mask);
  m.set("output", a.output);
  m.set("reference", a.reference.empty() ? std::string("none") : a.reference);
  m.set("init", a.init);
  if (!a.init_file.empty())
    m.set("init_file", a.init_file);
  m.set("s1", c.s1);
  m.set("s2", c.s2);
  m.set("k", c.k);
  m.set("r_sigma", c.r_sigma);
  m.set("lambda_rel", c.lambda_rel);
  m.set("outer_iters", c.outer_iters);
  m.set("gmres_tol", c.gmres_tol);
  m.set("gmres_restart", c.gmres_restart);
  m.set("gmres_max_iters", c.gmres_max_iters);
  m.set("psnr_formula", to_string(c.psnr_formula));
  m.set("symmetrize", c.symmetrize);
  m.set("threads", c.threads);
  m.set("apg_mu_target", a.apg.mu_target);
  m.set("apg_mu_decay", a.apg.mu_decay);
  m.set("apg_stages", a.apg.stages);
  m.set("apg_max_iters", a.apg.max_iters);
  m.set("apg_tol", a.apg.tol);
}

/// Initialization followed by the alternating reconstruction. The manifest
/// is written even when the solve fails (status=failed).
inline int cmd_reconstruct(const ReconstructArgs &a, std::ostream &out,
                           std::ostream &log) {
  SolverConfig cfg = a.solver;
  std::tie(cfg.s1, cfg.s2) = detail::parse_patch(a.patch);
  cfg.psnr_formula = parse_psnr_formula(a.psnr_formula);
  cfg.symmetrize = !a.no_symmetrize;
  cfg.validate();
  require(a.init == "apg" || a.init == "zero" || a.init == "file",
          "--init must be apg, zero or file");
  require(a.init != "file" || !a.init_file.empty(), "--init file requires --init-file");

  const std::string manifest_path =
      a.manifest.empty() ? a.output + ".manifest" : a.manifest;
  RunManifest man;
  record_config(man, a, cfg);
  man.set("started_at", detail::utc_timestamp());
  man.set("status", "running");

  const DataCube b = io::read_hsc(a.data);
  const MaskSet masks = io::read_mask(a.mask);
  require(masks.matches(b), "data and mask dimensions differ");
  std::optional<DataCube> ref;
  if (!a.reference.empty()) {
    ref = io::read_hsc(a.reference);
    require(ref->same_shape(b), "reference and data dimensions differ");
  }
  man.set("m", b.rows());
  man.set("n", b.cols());
  man.set("bands", b.bands());

  auto write_manifest = [&] {
    std::ofstream os(manifest_path);
    if (!os)
      throw IoError("cannot write manifest '" + manifest_path + "'");
    man.write(os);
  };

  using clock = std::chrono::steady_clock;
  int code = kOk;
  try {
    const auto t0 = clock::now();
    DataCube u0;
    if (a.init == "apg") {
      ApgResult apg = apg_complete(b, masks, a.apg);
      man.set("apg_iterations", apg.iterations);
      man.set("apg_converged", apg.converged);
      if (!apg.converged)
        log << "warning: APG initialization stopped at its iteration limit\n";
      u0 = std::move(apg.cube);
    } else if (a.init == "zero") {
      u0 = apply_mask(b, masks);
    } else {
      u0 = io::read_hsc(a.init_file);
      require(u0.same_shape(b), "initial guess dimensions differ");
    }
    const auto t1 = clock::now();
    man.set("init_seconds", std::chrono::duration<double>(t1 - t0).count());
    if (ref) {
      const Metrics m0 = psnr(u0, *ref);
      man.set("iter0_psnr_paper", m0.psnr_paper);
      man.set("iter0_psnr_standard", m0.psnr_standard);
    }

    LdmmObserver obs;
    if (!a.quiet)
      obs.on_band = [&](const BandLog &bl) {
        log << "iter=" << bl.iteration << " band=" << bl.band + 1
            << " gmres_iters=" << bl.gmres_iters
            << " residual=" << RunManifest::format(bl.residual)
            << " energy=" << RunManifest::format(bl.energy_end)
            << (bl.converged ? "" : " (not converged)") << "\n";
      };
    obs.on_iteration = [&](const IterationLog &il, const DataCube &u) {
      const std::string p = "iter" + std::to_string(il.iteration) + "_";
      Index gm = 0, unconverged = 0;
      for (const auto &bl : il.bands) {
        gm += bl.gmres_iters;
        unconverged += bl.converged ? 0 : 1;
      }
      man.set(p + "lambda", il.lambda);
      man.set(p + "graph_seconds", il.graph_seconds);
      man.set(p + "solve_seconds", il.solve_seconds);
      man.set(p + "gmres_iters", gm);
      man.set(p + "unconverged_bands", unconverged);
      if (ref) {
        const Metrics m = psnr(u, *ref);
        man.set(p + "psnr_paper", m.psnr_paper);
        man.set(p + "psnr_standard", m.psnr_standard);
        if (!a.quiet)
          log << "iter=" << il.iteration << " psnr_paper=" << detail::fixed6(m.psnr_paper)
              << " psnr_standard=" << detail::fixed6(m.psnr_standard) << "\n";
      }
    };

    LdmmResult res = ldmm_reconstruct(b, masks, cfg, u0, obs);
    const auto t2 = clock::now();
    man.set("ldmm_seconds", std::chrono::duration<double>(t2 - t1).count());
    man.set("graph_constructions", res.report.graph_constructions);
    io::write_hsc(a.output, res.cube);
    man.set("status", "ok");
    out << "output=" << a.output << " manifest=" << manifest_path;
    if (ref) {
      const Metrics m = psnr(res.cube, *ref);
      out << " psnr=" << detail::fixed6(m.psnr(cfg.psnr_formula));
    }
    out << "\n";
  } catch (const NumericalError &e) {
    man.set("status", "failed");
    man.set("error", e.what());
    code = kNumerical;
    log << "error: " << e.what() << "\n";
  }
  man.set("finished_at", detail::utc_timestamp());
  write_manifest();
  return code;
}

inline int cmd_eval(const EvalArgs &a, std::ostream &out) {
  const DataCube c = io::read_hsc(a.candidate);
  const DataCube r = io::read_hsc(a.reference);
  const Metrics m = psnr(c, r);
  out << "mse=" << RunManifest::format(m.mse) << "\n"
      << "peak=" << RunManifest::format(m.peak) << "\n"
      << "psnr_paper=" << detail::fixed6(m.psnr_paper) << "\n"
      << "psnr_standard=" << detail::fixed6(m.psnr_standard) << "\n";
  return kOk;
}

inline int cmd_export_band(const ExportArgs &a, std::ostream &out) {
  require(a.format == "pgm" || a.format == "csv", "--format must be pgm or csv");
  const DataCube c = io::read_hsc(a.input);
  require(a.band >= 1 && a.band <= c.bands(),
          "--band must lie in [1, " + std::to_string(c.bands()) + "]");
  std::ofstream os(a.output, std::ios::binary);
  if (!os)
    throw IoError("cannot open '" + a.output + "' for writing");
  if (a.format == "pgm")
    io::export_band_pgm(os, c, a.band - 1);
  else
    io::export_band_csv(os, c, a.band - 1);
  out << "band=" << a.band << " format=" << a.format << " output=" << a.output << "\n";
  return kOk;
}

inline int cmd_selfcheck(std::ostream &out) {
  bool all = true;
  for (const auto &r : oracle::selfcheck()) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
    all = all && r.passed;
  }
  return all ? kOk : kNumerical;
}

/// Parses argv and dispatches. Exit codes: 0 success, 1 usage, 2 I/O,
/// 3 numerical failure.
inline int run(std::vector<std::string> args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Hyperspectral cube reconstruction with a scalable low dimensional manifold model",
               "sldmm"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  SynthArgs sy;
  auto *synth = app.add_subcommand("synth", "Write a synthetic low-rank test cube");
  synth->add_option("--m", sy.spec.m, "Rows")->check(CLI::PositiveNumber);
  synth->add_option("--n", sy.spec.n, "Columns")->check(CLI::PositiveNumber);
  synth->add_option("--bands", sy.spec.bands, "Spectral bands")->check(CLI::PositiveNumber);
  synth->add_option("--rank", sy.spec.rank, "Endmember count (1..min(bands, 8))")
      ->check(CLI::Range(1, 8));
  synth->add_option("--smoothness", sy.spec.smoothness, "Abundance blur radius")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", sy.spec.seed, "Random seed");
  synth->add_option("-o,--output", sy.output, "Output HSC file")->required();

  CorruptArgs co;
  auto *corrupt = app.add_subcommand("corrupt", "Add Gaussian noise, then subsample each band");
  corrupt->add_option("input", co.input, "Clean HSC cube")->required();
  corrupt->add_option("--rate", co.rate, "Per-band sampling rate in (0, 1]")->required();
  corrupt->add_option("--noise-sigma", co.noise_sigma, "Noise standard deviation");
  corrupt->add_option("--seed", co.seed, "Seed (noise uses seed, mask uses seed+1)");
  corrupt->add_option("-o,--output", co.output, "Masked data HSC file")->required();
  corrupt->add_option("--mask-out", co.mask_output, "Mask HSC file")->required();

  ReconstructArgs re;
  auto *recon = app.add_subcommand("reconstruct", "Reconstruct a subsampled cube");
  recon->add_option("data", re.data, "Masked data HSC file")->required();
  recon->add_option("mask", re.mask, "Mask HSC file")->required();
  recon->add_option("-o,--output", re.output, "Reconstructed HSC file")->required();
  recon->add_option("--manifest", re.manifest, "Run manifest (default: OUTPUT.manifest)");
  recon->add_option("--init", re.init, "Initialization: apg, zero or file (alias input-file)")
      ->transform(CLI::Transformer(std::map<std::string, std::string>{{"input-file", "file"}}));
  recon->add_option("--init-file", re.init_file, "Initial guess for --init file");
  recon->add_option("--ref", re.reference, "Ground truth for per-iteration PSNR");
  recon->add_option("--patch", re.patch, "Spatial patch size ROWSxCOLS");
  recon->add_option("--k", re.solver.k, "Nearest neighbors per pixel");
  recon->add_option("--r-sigma", re.solver.r_sigma, "Neighbor rank defining the local scale");
  recon->add_option("--lambda-rel", re.solver.lambda_rel,
                    "Fidelity weight relative to the mean graph degree");
  recon->add_option("--outer", re.solver.outer_iters, "Manifold updates");
  recon->add_option("--gmres-tol", re.solver.gmres_tol, "Relative residual tolerance");
  recon->add_option("--gmres-restart", re.solver.gmres_restart, "GMRES restart length");
  recon->add_option("--gmres-max-iters", re.solver.gmres_max_iters, "GMRES iteration cap");
  recon->add_option("--psnr-formula", re.psnr_formula, "paper or standard");
  recon->add_option("--threads", re.solver.threads, "Worker threads");
  recon->add_flag("--no-symmetrize", re.no_symmetrize,
                  "Solve on the directed shift-summed graph");
  recon->add_option("--apg-mu", re.apg.mu_target, "APG nuclear-norm weight (<=0: automatic)");
  recon->add_option("--apg-decay", re.apg.mu_decay, "APG continuation factor");
  recon->add_option("--apg-stages", re.apg.stages, "APG continuation stages");
  recon->add_option("--apg-max-iters", re.apg.max_iters, "APG iterations per stage");
  recon->add_option("--apg-tol", re.apg.tol, "APG relative change tolerance");
  recon->add_flag("-q,--quiet", re.quiet, "No per-band log lines");
  recon->add_option("--config", "key=value file; command-line flags take precedence");

  EvalArgs ev;
  auto *eval = app.add_subcommand("eval", "Print MSE and PSNR of a candidate against a reference");
  eval->add_option("candidate", ev.candidate)->required();
  eval->add_option("reference", ev.reference)->required();

  ExportArgs ex;
  auto *exp = app.add_subcommand("export-band", "Export one band as 16-bit PGM or CSV");
  exp->add_option("input", ex.input)->required();
  exp->add_option("--band", ex.band, "1-based band index")->required();
  exp->add_option("--format", ex.format, "pgm or csv");
  exp->add_option("-o,--output", ex.output)->required();

  auto *self = app.add_subcommand("selfcheck", "Run the built-in reference checks");

  try {
    args = detail::expand_config(std::move(args));
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const CLI::CallForHelp &e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp &e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError &e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError &e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument &e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*synth) {
      require(sy.spec.rank <= std::min<Index>(sy.spec.bands, 8),
              "--rank must not exceed min(bands, 8)");
      return cmd_synth(sy, out);
    }
    if (*corrupt)
      return cmd_corrupt(co, out);
    if (*recon)
      return cmd_reconstruct(re, out, err);
    if (*eval)
      return cmd_eval(ev, out);
    if (*exp)
      return cmd_export_band(ex, out);
    if (*self)
      return cmd_selfcheck(out);
  } catch (const IoError &e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument &e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError &e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}

} // namespace sldmm::cli
