// Command-line front end: key generation, collaborative gain design,
// protocol simulation, and covariance analysis.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpse/analysis.hpp"
#include "mpse/config.hpp"
#include "mpse/csv.hpp"
#include "mpse/gain_design.hpp"
#include "mpse/protocol.hpp"

using namespace mpse;

namespace {

ProtocolMode parse_mode(const std::string& name) {
  if (name == "plaintext") return ProtocolMode::Plaintext;
  if (name == "enc-inproc") return ProtocolMode::EncryptedInproc;
  if (name == "enc-socket") return ProtocolMode::EncryptedSocket;
  throw ConfigError("mode: expected plaintext | enc-inproc | enc-socket, got " + name);
}

void check_key_bits(unsigned bits, bool insecure_ok) {
  if (bits < 1024 && !insecure_ok)
    throw ConfigError("key size below 1024 bits; pass --insecure-small-keys to allow (tests only)");
}

struct CommonOpts {
  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load_with_overrides(const CommonOpts& o) {
  ExperimentConfig cfg = load_experiment_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

int run_keygen(unsigned bits, std::uint64_t seed, const std::string& out, bool insecure_ok) {
  check_key_bits(bits, insecure_ok);
  CryptoContext crypto = CryptoContext::generate(bits, 40, seed);
  save_keypair(out, crypto.sk);
  std::cout << "keygen: wrote " << out << " (modulus "
            << mpz_sizeinbase(crypto.pk.n.get_mpz_t(), 2) << " bits)\n";
  return 0;
}

int run_design(const CommonOpts& o, const std::string& history_path) {
  ExperimentConfig cfg = load_with_overrides(o);
  DesignResult res;
  switch (cfg.design.method) {
    case DesignMethod::NormRelax:
      res = stabilization_method_1(cfg.parties, cfg.system.A, cfg.design.norm);
      break;
    case DesignMethod::AdmmStabilize:
      res = stabilization_method_2(cfg.parties, cfg.system.A, cfg.design.gamma,
                                   cfg.design.iterations, cfg.design.rate);
      break;
    case DesignMethod::AdmmMmse: {
      DareSolution dare =
          dare_solve(cfg.system.A, stacked_C(cfg.parties), cfg.system.Q, stacked_R(cfg.parties));
      res = mmse_method(cfg.parties, cfg.system.A, cfg.system.Q, cfg.design.gamma,
                        cfg.design.iterations, &dare.K_star);
      break;
    }
  }
  if (!o.out_path.empty()) save_gains(o.out_path, res.gains);
  if (!history_path.empty()) {
    CsvWriter csv(history_path, {"iter", "value"});
    for (std::size_t t = 0; t < res.history.size(); ++t)
      csv.row({std::to_string(t + 1), format_double(res.history[t])});
  }
  std::cout << "design: rho=" << format_double(res.rho)
            << " accepted=" << (res.accepted ? "yes" : "no");
  if (res.method == DesignMethod::NormRelax)
    std::cout << " average_norm=" << format_double(res.average_norm);
  std::cout << "\n";
  return res.accepted ? 0 : 1;
}

void apply_gains(ExperimentConfig& cfg, const std::string& gains_path) {
  std::vector<Matrix> gains = load_gains(gains_path);
  if (gains.size() != cfg.parties.size())
    throw ConfigError("gains file holds " + std::to_string(gains.size()) + " gains for " +
                      std::to_string(cfg.parties.size()) + " parties");
  for (std::size_t i = 0; i < gains.size(); ++i) cfg.parties[i].K = gains[i];
}

int run_simulate(const CommonOpts& o, const std::string& gains_path, const std::string& mode_flag,
                 bool compare_modes, bool insecure_ok) {
  ExperimentConfig cfg = load_with_overrides(o);
  apply_gains(cfg, gains_path);
  ProtocolMode mode = mode_flag.empty() ? cfg.mode : parse_mode(mode_flag);
  SimConfig sim = cfg.sim_config();

  std::optional<CryptoContext> crypto;
  if (compare_modes || mode != ProtocolMode::Plaintext) {
    check_key_bits(cfg.key_bits, insecure_ok);
    crypto = CryptoContext::generate(cfg.key_bits, cfg.scale_bits, cfg.seed);
  }

  if (compare_modes) {
    NoiseShaper shaper(sim);
    Realization real = sample_realization(sim, shaper);
    ProtocolTrace plain = run_protocol_realized(sim, real, ProtocolMode::Plaintext, nullptr);
    double worst = 0.0;
    bool all_completed = plain.completed;
    for (ProtocolMode m : {ProtocolMode::EncryptedInproc, ProtocolMode::EncryptedSocket}) {
      ProtocolTrace t = run_protocol_realized(sim, real, m, &*crypto);
      all_completed = all_completed && t.completed;
      double dev = 0.0;
      for (std::size_t k = 0; k < t.xbar.size() && k < plain.xbar.size(); ++k)
        dev = std::max(dev, (t.xbar[k] - plain.xbar[k]).cwiseAbs().maxCoeff());
      std::cout << "compare: " << mode_name(m) << " max deviation " << format_double(dev)
                << (t.completed ? "" : (" (aborted: " + t.error + ")")) << "\n";
      worst = std::max(worst, dev);
    }
    return (all_completed && worst <= 1e-6) ? 0 : 1;
  }

  ProtocolTrace trace =
      run_protocol(sim, mode, crypto ? &*crypto : nullptr);
  if (!o.out_path.empty()) {
    CsvWriter csv(o.out_path, {"k", "err_sq"});
    for (std::size_t k = 0; k < trace.xbar.size(); ++k)
      csv.row({std::to_string(k + 1),
               format_double((trace.x[k] - trace.xbar[k]).squaredNorm())});
  }
  std::cout << "simulate: mode=" << mode_name(mode) << " rounds=" << trace.xbar.size()
            << " completed=" << (trace.completed ? "yes" : "no");
  if (!trace.error.empty()) std::cout << " error=\"" << trace.error << "\"";
  std::cout << "\n";
  return trace.completed ? 0 : 1;
}

int run_analyze(const CommonOpts& o, const std::string& gains_path, std::optional<int> runs,
                int workers) {
  ExperimentConfig cfg = load_with_overrides(o);
  apply_gains(cfg, gains_path);
  SimConfig sim = cfg.sim_config();
  int mc_runs = runs.value_or(cfg.runs);

  CovarianceReport det =
      covariance_recursion(sim.PiHat0, cfg.parties, cfg.system.A, cfg.system.Q, cfg.horizon);
  CovarianceReport mc;
  if (mc_runs > 0) mc = monte_carlo_eval(sim, mc_runs, workers);

  if (!o.out_path.empty()) {
    CsvWriter csv(o.out_path, {"k", "tr_deterministic", "tr_empirical", "runs"});
    for (std::size_t k = 0; k < det.tr_deterministic.size(); ++k)
      csv.row({std::to_string(k), format_double(det.tr_deterministic[k]),
               k < mc.tr_empirical.size() ? format_double(mc.tr_empirical[k]) : "",
               std::to_string(mc_runs)});
  }
  double rho = stability_margin(cfg.parties, cfg.system.A);
  std::cout << "analyze: rho=" << format_double(rho)
            << " tr_final=" << format_double(det.tr_deterministic.back());
  if (mc_runs > 0)
    std::cout << " tr_empirical_final=" << format_double(mc.tr_empirical.back()) << " runs="
              << mc_runs;
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privacy-preserving multi-party state estimation"};
  app.require_subcommand(1);

  // keygen
  auto* keygen_cmd = app.add_subcommand("keygen", "generate a Paillier key pair");
  unsigned kg_bits = 2048;
  std::uint64_t kg_seed = 1;
  std::string kg_out;
  bool kg_insecure = false;
  keygen_cmd->add_option("--bits", kg_bits, "modulus size in bits");
  keygen_cmd->add_option("--seed", kg_seed, "deterministic key seed");
  keygen_cmd->add_option("--out", kg_out, "output key file")->required();
  keygen_cmd->add_flag("--insecure-small-keys", kg_insecure, "allow keys below 1024 bits");

  // design
  auto* design_cmd = app.add_subcommand("design", "run the configured gain design");
  CommonOpts d_opts;
  std::string d_history;
  std::uint64_t d_seed = 0;
  design_cmd->add_option("--config", d_opts.config_path, "experiment config JSON")->required();
  design_cmd->add_option("--out", d_opts.out_path, "gains output file (JSON)");
  design_cmd->add_option("--history", d_history, "per-iteration history CSV");
  design_cmd->add_option("--seed", d_seed, "seed override");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "run the fusion protocol");
  CommonOpts s_opts;
  std::string s_gains, s_mode;
  bool s_compare = false, s_insecure = false;
  std::uint64_t s_seed = 0;
  sim_cmd->add_option("--config", s_opts.config_path, "experiment config JSON")->required();
  sim_cmd->add_option("--gains", s_gains, "gains file from `design`")->required();
  sim_cmd->add_option("--mode", s_mode, "plaintext | enc-inproc | enc-socket");
  sim_cmd->add_option("--out", s_opts.out_path, "per-round error CSV");
  sim_cmd->add_option("--seed", s_seed, "seed override");
  sim_cmd->add_flag("--compare-modes", s_compare,
                    "run all modes on one realization and report deviations");
  sim_cmd->add_flag("--insecure-small-keys", s_insecure, "allow keys below 1024 bits");

  // analyze
  auto* an_cmd = app.add_subcommand("analyze", "covariance recursion and Monte Carlo");
  CommonOpts a_opts;
  std::string a_gains;
  int a_runs = -1, a_workers = 0;
  std::uint64_t a_seed = 0;
  an_cmd->add_option("--config", a_opts.config_path, "experiment config JSON")->required();
  an_cmd->add_option("--gains", a_gains, "gains file from `design`")->required();
  an_cmd->add_option("--out", a_opts.out_path, "report CSV");
  an_cmd->add_option("--runs", a_runs, "Monte-Carlo run count override");
  an_cmd->add_option("--workers", a_workers, "worker thread count (0 = auto)");
  an_cmd->add_option("--seed", a_seed, "seed override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*keygen_cmd) return run_keygen(kg_bits, kg_seed, kg_out, kg_insecure);
    if (*design_cmd) {
      if (design_cmd->count("--seed")) d_opts.seed = d_seed;
      return run_design(d_opts, d_history);
    }
    if (*sim_cmd) {
      if (sim_cmd->count("--seed")) s_opts.seed = s_seed;
      return run_simulate(s_opts, s_gains, s_mode, s_compare, s_insecure);
    }
    if (*an_cmd) {
      if (an_cmd->count("--seed")) a_opts.seed = a_seed;
      return run_analyze(a_opts, a_gains, a_runs < 0 ? std::nullopt : std::optional<int>(a_runs),
                         a_workers);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
