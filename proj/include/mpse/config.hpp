#ifndef MPSE_CONFIG_HPP
#define MPSE_CONFIG_HPP

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpse/gain_design.hpp"
#include "mpse/process_sim.hpp"
#include "mpse/protocol.hpp"
#include "mpse/wire.hpp"

namespace mpse {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DesignSpec {
  DesignMethod method = DesignMethod::AdmmStabilize;
  double gamma = 0.1;
  int iterations = 200;
  NormChoice norm = NormChoice::Spectral;
  std::optional<double> rate;
};

struct ExperimentConfig {
  SystemModel system;
  std::vector<PartyModel> parties;
  DesignSpec design;
  ProtocolMode mode = ProtocolMode::Plaintext;
  unsigned scale_bits = 40;
  unsigned key_bits = 2048;
  int horizon = 300;
  int runs = 1;
  std::uint64_t seed = 1;
  Matrix Pi0, PiHat0;  // identity when omitted

  SimConfig sim_config() const {
    SimConfig c;
    c.system = system;
    c.parties = parties;
    c.Pi0 = Pi0;
    c.PiHat0 = PiHat0;
    c.horizon = horizon;
    c.seed = seed;
    return c;
  }
};

namespace detail {

inline Matrix parse_matrix(const nlohmann::json& j, const std::string& where) {
  try {
    Matrix m = matrix_from_json(j);
    require_finite(m, where.c_str());
    return m;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    cfg.system.A = detail::parse_matrix(j.at("system").at("A"), "system.A");
    cfg.system.Q = detail::parse_matrix(j.at("system").at("Q"), "system.Q");
    cfg.system.validate();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("system block: ") + e.what());
  }

  if (!j.contains("parties") || !j.at("parties").is_array() || j.at("parties").empty())
    throw ConfigError("parties: non-empty array required");
  int id = 1;
  for (const auto& pj : j.at("parties")) {
    PartyModel p;
    p.id = id;
    std::string where = "parties[" + std::to_string(id - 1) + "]";
    p.C = detail::parse_matrix(pj.at("C"), where + ".C");
    p.R = detail::parse_matrix(pj.at("R"), where + ".R");
    try {
      p.validate(cfg.system.n());
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
    cfg.parties.push_back(std::move(p));
    ++id;
  }

  if (j.contains("design")) {
    const auto& d = j.at("design");
    std::string method = d.value("method", "admm-stabilize");
    if (method == "norm")
      cfg.design.method = DesignMethod::NormRelax;
    else if (method == "admm-stabilize")
      cfg.design.method = DesignMethod::AdmmStabilize;
    else if (method == "admm-mmse")
      cfg.design.method = DesignMethod::AdmmMmse;
    else
      throw ConfigError("design.method: expected norm | admm-stabilize | admm-mmse, got " + method);
    cfg.design.gamma = d.value("gamma", cfg.design.gamma);
    cfg.design.iterations = d.value("iterations", cfg.design.iterations);
    std::string norm = d.value("norm", "spectral");
    if (norm == "spectral")
      cfg.design.norm = NormChoice::Spectral;
    else if (norm == "frobenius")
      cfg.design.norm = NormChoice::Frobenius;
    else
      throw ConfigError("design.norm: expected spectral | frobenius, got " + norm);
    if (d.contains("rate") && !d.at("rate").is_null()) cfg.design.rate = d.at("rate").get<double>();
    if (cfg.design.gamma <= 0) throw ConfigError("design.gamma: must be positive");
    if (cfg.design.iterations < 1) throw ConfigError("design.iterations: must be >= 1");
  }

  if (j.contains("protocol")) {
    const auto& p = j.at("protocol");
    std::string mode = p.value("mode", "plaintext");
    if (mode == "plaintext")
      cfg.mode = ProtocolMode::Plaintext;
    else if (mode == "enc-inproc")
      cfg.mode = ProtocolMode::EncryptedInproc;
    else if (mode == "enc-socket")
      cfg.mode = ProtocolMode::EncryptedSocket;
    else
      throw ConfigError("protocol.mode: expected plaintext | enc-inproc | enc-socket, got " + mode);
    cfg.scale_bits = p.value("scale_bits", cfg.scale_bits);
    cfg.key_bits = p.value("key_bits", cfg.key_bits);
  }

  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.runs = j.value("runs", cfg.runs);
  cfg.seed = j.value("seed", cfg.seed);
  if (cfg.horizon < 0) throw ConfigError("horizon: must be >= 0");
  if (cfg.runs < 1) throw ConfigError("runs: must be >= 1");

  Eigen::Index n = cfg.system.n();
  cfg.Pi0 = j.contains("Pi0") ? detail::parse_matrix(j.at("Pi0"), "Pi0")
                              : Matrix::Identity(n, n);
  cfg.PiHat0 = j.contains("PiHat0") ? detail::parse_matrix(j.at("PiHat0"), "PiHat0")
                                    : Matrix::Identity(n, n);
  SimConfig sim = cfg.sim_config();
  sim.horizon = std::max(sim.horizon, 1);
  try {
    sim.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

// --- gains and key files ---

inline void save_gains(const std::string& path, const std::vector<Matrix>& gains) {
  nlohmann::json j;
  j["gains"] = nlohmann::json::array();
  for (const auto& g : gains) j["gains"].push_back(matrix_to_json(g));
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write gains file: " + path);
  out << j.dump(2) << "\n";
}

inline std::vector<Matrix> load_gains(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open gains file: " + path);
  nlohmann::json j;
  in >> j;
  std::vector<Matrix> gains;
  for (const auto& g : j.at("gains")) gains.push_back(matrix_from_json(g));
  return gains;
}

inline void save_keypair(const std::string& path, const PrivateKey& sk) {
  nlohmann::json j{{"n", base64_encode(mpz_to_bytes(sk.pk.n))},
                   {"g", base64_encode(mpz_to_bytes(sk.pk.g))},
                   {"lambda", base64_encode(mpz_to_bytes(sk.lambda))},
                   {"mu", base64_encode(mpz_to_bytes(sk.mu))}};
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write key file: " + path);
  out << j.dump(2) << "\n";
}

inline PrivateKey load_keypair(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open key file: " + path);
  nlohmann::json j;
  in >> j;
  PrivateKey sk;
  sk.pk.n = mpz_from_bytes(base64_decode(j.at("n").get<std::string>()));
  sk.pk.g = mpz_from_bytes(base64_decode(j.at("g").get<std::string>()));
  sk.pk.n2 = sk.pk.n * sk.pk.n;
  sk.lambda = mpz_from_bytes(base64_decode(j.at("lambda").get<std::string>()));
  sk.mu = mpz_from_bytes(base64_decode(j.at("mu").get<std::string>()));
  return sk;
}

}  // namespace mpse

#endif  // MPSE_CONFIG_HPP
