#ifndef MPSE_PROTOCOL_HPP
#define MPSE_PROTOCOL_HPP

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mpse/paillier.hpp"
#include "mpse/process_sim.hpp"
#include "mpse/transport.hpp"
#include "mpse/wire.hpp"

namespace mpse {

enum class ProtocolMode { Plaintext, EncryptedInproc, EncryptedSocket };

inline const char* mode_name(ProtocolMode m) {
  switch (m) {
    case ProtocolMode::Plaintext: return "plaintext";
    case ProtocolMode::EncryptedInproc: return "enc-inproc";
    case ProtocolMode::EncryptedSocket: return "enc-socket";
  }
  return "?";
}

struct PartyState {
  const PartyModel* party = nullptr;
  Vector xhat;        // synchronized estimate x̂_i(k)
  Vector xhat_minus;  // local updated estimate x̂_i⁻(k)
};

struct ProtocolTrace {
  ProtocolMode mode = ProtocolMode::Plaintext;
  std::vector<Vector> x;                        // true state, index k-1 for round k
  std::vector<Vector> xbar;                     // broadcast average
  std::vector<std::vector<Vector>> xhat_minus;  // per round, per party
  bool completed = false;
  std::string error;
};

/// Shared key material and codec for the encrypted modes. The cloud role
/// is handed only the public half.
struct CryptoContext {
  PublicKey pk;
  PrivateKey sk;
  unsigned scale_bits = 40;

  FixedPointCodec codec() const { return FixedPointCodec(pk.n, scale_bits); }

  static CryptoContext generate(unsigned key_bits, unsigned scale_bits, std::uint64_t seed) {
    CryptoRng rng(derive_seed(seed, stream_role::crypto));
    auto [pk, sk] = keygen(key_bits, rng);
    return CryptoContext{pk, sk, scale_bits};
  }
};

/// Untrusted aggregator. Holds only the public key; this class has no
/// access to decryption material anywhere in its interface.
class CloudServer {
 public:
  explicit CloudServer(PublicKey pk) : pk_(std::move(pk)) {}

  EncryptedVector aggregate(const std::vector<EncryptedVector>& uploads) const {
    if (uploads.empty()) throw ContractError("cloud: no uploads");
    EncryptedVector acc = uploads[0];
    for (std::size_t i = 1; i < uploads.size(); ++i) {
      if (uploads[i].size() != acc.size()) throw DimensionError("cloud: upload length mismatch");
      for (std::size_t j = 0; j < acc.size(); ++j)
        acc[j] = homomorphic_add(pk_, acc[j], uploads[i][j]);
    }
    return acc;
  }

  Ciphertext aggregate_scalars(const std::vector<Ciphertext>& uploads) const {
    if (uploads.empty()) throw ContractError("cloud: no uploads");
    Ciphertext acc = uploads[0];
    for (std::size_t i = 1; i < uploads.size(); ++i) acc = homomorphic_add(pk_, acc, uploads[i]);
    return acc;
  }

 private:
  PublicKey pk_;
};

/// Trusted decryption role. Receives only the aggregated ciphertext,
/// never an individual party's upload; division by N happens here in
/// plaintext, after decryption.
class SecurityModule {
 public:
  SecurityModule(PrivateKey sk, FixedPointCodec codec)
      : sk_(std::move(sk)), codec_(std::move(codec)) {}

  Vector average_of_aggregate(const EncryptedVector& aggregate, unsigned party_count) const {
    return decrypt_vector(sk_, codec_, aggregate, party_count);
  }

  double scalar_average_of_aggregate(const Ciphertext& aggregate, unsigned party_count) const {
    return codec_.decode(decrypt(sk_, aggregate), party_count);
  }

 private:
  PrivateKey sk_;
  FixedPointCodec codec_;
};

/// Eq.-7 local update: x̂_i⁻(k) = A x̂_i(k-1) + K_i (y_i(k) − C_i A x̂_i(k-1)).
inline Vector local_predict_update(const PartyState& st, const Vector& y_i, const Matrix& A) {
  if (!st.party->K) throw ContractError("local_predict_update: gain not set");
  Vector pred = A * st.xhat;
  return pred + (*st.party->K) * (y_i - st.party->C * pred);
}

/// One fusion round in the given mode: uploads, aggregation, decrypt +
/// divide, broadcast. Updates every party's synchronized estimate.
inline Vector run_round(std::vector<PartyState>& parties, const CloudServer* cloud,
                        const SecurityModule* security, ProtocolMode mode, int k,
                        const std::vector<Vector>& measurements, const Matrix& A,
                        const CryptoContext* crypto, std::deque<CryptoRng>* party_rngs,
                        std::vector<RoundMessage>* log = nullptr) {
  const auto n_parties = parties.size();
  for (std::size_t i = 0; i < n_parties; ++i)
    parties[i].xhat_minus = local_predict_update(parties[i], measurements[i], A);

  Vector xbar;
  if (mode == ProtocolMode::Plaintext) {
    xbar = Vector::Zero(A.rows());
    for (const auto& p : parties) xbar += p.xhat_minus;
    xbar /= static_cast<double>(n_parties);
  } else {
    if (!crypto || !cloud || !security || !party_rngs)
      throw ContractError("run_round: encrypted mode requires crypto roles");
    FixedPointCodec codec = crypto->codec();
    std::vector<EncryptedVector> uploads;
    uploads.reserve(n_parties);
    for (std::size_t i = 0; i < n_parties; ++i) {
      uploads.push_back(encrypt_vector(crypto->pk, codec, parties[i].xhat_minus, (*party_rngs)[i]));
      if (log)
        log->push_back({MessageKind::PartyUpload, k, party_role(parties[i].party->id),
                        ciphertexts_to_json(uploads.back())});
    }
    EncryptedVector agg = cloud->aggregate(uploads);
    if (log)
      log->push_back({MessageKind::AggregateToSecurity, k, cloud_role(), ciphertexts_to_json(agg)});
    xbar = security->average_of_aggregate(agg, static_cast<unsigned>(n_parties));
    if (log) log->push_back({MessageKind::Broadcast, k, security_role(), vector_to_json(xbar)});
  }

  for (auto& p : parties) p.xhat = xbar;
  return xbar;
}

/// Pre-sampled process and measurement realizations for one run; shared
/// across modes so mode comparisons see identical noise.
struct Realization {
  Vector x0;
  Vector xhat0;
  std::vector<Vector> x;                      // k = 1..T
  std::vector<std::vector<Vector>> y;         // [k-1][party]
};

/// Covariance square roots reused across Monte-Carlo runs (one
/// eigendecomposition per matrix instead of one per sample).
struct NoiseShaper {
  Matrix sqrt_Q, sqrt_Pi0, sqrt_PiHat0;
  std::vector<Matrix> sqrt_R;

  explicit NoiseShaper(const SimConfig& config)
      : sqrt_Q(sqrt_psd(config.system.Q)),
        sqrt_Pi0(sqrt_psd(config.Pi0)),
        sqrt_PiHat0(sqrt_psd(config.PiHat0)) {
    for (const auto& p : config.parties) sqrt_R.push_back(sqrt_psd(p.R));
  }
};

inline Realization sample_realization(const SimConfig& config, const NoiseShaper& shaper,
                                      std::uint64_t run = 0) {
  RunStreams streams(config.seed, config.parties, run);
  Realization r;
  r.x0 = shaper.sqrt_Pi0 * streams.init_state.normal_vector(config.system.n());
  r.xhat0 = shaper.sqrt_PiHat0 * streams.init_estimate.normal_vector(config.system.n());
  Vector x = r.x0;
  for (int k = 1; k <= config.horizon; ++k) {
    x = config.system.A * x + shaper.sqrt_Q * streams.process.normal_vector(config.system.n());
    r.x.push_back(x);
    std::vector<Vector> ys;
    ys.reserve(config.parties.size());
    for (std::size_t i = 0; i < config.parties.size(); ++i)
      ys.push_back(config.parties[i].C * x +
                   shaper.sqrt_R[i] * streams.per_party[i].normal_vector(config.parties[i].m()));
    r.y.push_back(std::move(ys));
  }
  return r;
}

inline Realization sample_realization(const SimConfig& config, std::uint64_t run = 0) {
  config.validate();
  return sample_realization(config, NoiseShaper(config), run);
}

inline ProtocolTrace run_protocol_realized(const SimConfig& config, const Realization& real,
                                           ProtocolMode mode, const CryptoContext* crypto,
                                           std::vector<RoundMessage>* log = nullptr,
                                           std::uint64_t run = 0);

/// Full Algorithm-1 run: simulate the process, then execute the fusion
/// protocol round by round in the requested mode.
inline ProtocolTrace run_protocol(const SimConfig& config, ProtocolMode mode,
                                  const CryptoContext* crypto = nullptr,
                                  std::vector<RoundMessage>* log = nullptr,
                                  std::uint64_t run = 0) {
  return run_protocol_realized(config, sample_realization(config, run), mode, crypto, log, run);
}

namespace detail {

// Socket-mode execution: one thread per role, hub-routed messages.
inline ProtocolTrace run_protocol_socket(const SimConfig& config, const Realization& real,
                                         const CryptoContext& crypto, std::uint64_t run);

}  // namespace detail

inline ProtocolTrace run_protocol_realized(const SimConfig& config, const Realization& real,
                                           ProtocolMode mode, const CryptoContext* crypto,
                                           std::vector<RoundMessage>* log, std::uint64_t run) {
  config.validate();
  if (mode == ProtocolMode::EncryptedSocket) {
    if (!crypto) throw ContractError("run_protocol: socket mode requires crypto context");
    return detail::run_protocol_socket(config, real, *crypto, run);
  }

  ProtocolTrace trace;
  trace.mode = mode;

  std::vector<PartyState> states;
  for (const auto& p : config.parties) states.push_back({&p, real.xhat0, Vector()});

  std::optional<CloudServer> cloud;
  std::optional<SecurityModule> security;
  std::deque<CryptoRng> party_rngs;
  if (mode == ProtocolMode::EncryptedInproc) {
    if (!crypto) throw ContractError("run_protocol: encrypted mode requires crypto context");
    cloud.emplace(crypto->pk);
    security.emplace(crypto->sk, crypto->codec());
    for (const auto& p : config.parties)
      party_rngs.emplace_back(
          derive_seed(config.seed, stream_role::crypto, static_cast<std::uint64_t>(p.id), run));
  }

  for (int k = 1; k <= config.horizon; ++k) {
    try {
      Vector xbar = run_round(states, cloud ? &*cloud : nullptr, security ? &*security : nullptr,
                              mode, k, real.y[static_cast<std::size_t>(k - 1)], config.system.A,
                              crypto, party_rngs.empty() ? nullptr : &party_rngs, log);
      trace.x.push_back(real.x[static_cast<std::size_t>(k - 1)]);
      trace.xbar.push_back(xbar);
      std::vector<Vector> minus;
      for (const auto& st : states) minus.push_back(st.xhat_minus);
      trace.xhat_minus.push_back(std::move(minus));
    } catch (const std::exception& e) {
      trace.error = std::string("round ") + std::to_string(k) + ": " + e.what();
      return trace;
    }
  }
  trace.completed = true;
  return trace;
}

namespace detail {

inline ProtocolTrace run_protocol_socket(const SimConfig& config, const Realization& real,
                                         const CryptoContext& crypto, std::uint64_t run) {
  ProtocolTrace trace;
  trace.mode = ProtocolMode::EncryptedSocket;
  const int T = config.horizon;
  const int N = static_cast<int>(config.parties.size());
  FixedPointCodec codec = crypto.codec();

  SocketHub hub(N);
  std::string failure;
  std::mutex failure_mu;
  auto record_failure = [&](const std::string& what) {
    std::lock_guard<std::mutex> lock(failure_mu);
    if (failure.empty()) failure = what;
  };

  // party threads: local update, encrypt, upload, await broadcast
  std::vector<std::vector<Vector>> party_minus(
      static_cast<std::size_t>(N));  // per party, per round
  std::vector<Vector> broadcasts;
  std::vector<std::thread> threads;

  for (int i = 0; i < N; ++i) {
    threads.emplace_back([&, i] {
      try {
        const PartyModel& pm = config.parties[static_cast<std::size_t>(i)];
        SocketEndpoint ep(hub.port(), party_role(pm.id));
        CryptoRng rng(
            derive_seed(config.seed, stream_role::crypto, static_cast<std::uint64_t>(pm.id), run));
        PartyState st{&pm, real.xhat0, Vector()};
        for (int k = 1; k <= T; ++k) {
          st.xhat_minus = local_predict_update(
              st, real.y[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(i)],
              config.system.A);
          party_minus[static_cast<std::size_t>(i)].push_back(st.xhat_minus);
          EncryptedVector ev = encrypt_vector(crypto.pk, codec, st.xhat_minus, rng);
          ep.send({MessageKind::PartyUpload, k, party_role(pm.id), ciphertexts_to_json(ev)});
          RoundMessage bc = ep.recv();
          if (bc.kind != MessageKind::Broadcast || bc.k != k)
            throw WireError("party: unexpected message");
          st.xhat = vector_from_json(bc.payload);
        }
      } catch (const std::exception& e) {
        record_failure(std::string("party: ") + e.what());
      }
    });
  }

  threads.emplace_back([&] {  // cloud: aggregate ciphertexts only
    try {
      SocketEndpoint ep(hub.port(), cloud_role());
      CloudServer cloud(crypto.pk);
      for (int k = 1; k <= T; ++k) {
        std::vector<EncryptedVector> uploads;
        for (int i = 0; i < N; ++i) {
          RoundMessage m = ep.recv();
          if (m.kind != MessageKind::PartyUpload || m.k != k)
            throw WireError("cloud: unexpected message");
          uploads.push_back(ciphertexts_from_json(m.payload));
        }
        EncryptedVector agg = cloud.aggregate(uploads);
        ep.send({MessageKind::AggregateToSecurity, k, cloud_role(), ciphertexts_to_json(agg)});
      }
    } catch (const std::exception& e) {
      record_failure(std::string("cloud: ") + e.what());
    }
  });

  threads.emplace_back([&] {  // security module: decrypt aggregate, divide, broadcast
    try {
      SocketEndpoint ep(hub.port(), security_role());
      SecurityModule security(crypto.sk, codec);
      for (int k = 1; k <= T; ++k) {
        RoundMessage m = ep.recv();
        if (m.kind != MessageKind::AggregateToSecurity || m.k != k)
          throw WireError("security: unexpected message");
        Vector xbar = security.average_of_aggregate(ciphertexts_from_json(m.payload),
                                                    static_cast<unsigned>(N));
        broadcasts.push_back(xbar);
        ep.send({MessageKind::Broadcast, k, security_role(), vector_to_json(xbar)});
      }
    } catch (const std::exception& e) {
      record_failure(std::string("security: ") + e.what());
    }
  });

  for (auto& t : threads) t.join();
  hub.stop();

  if (!failure.empty()) {
    trace.error = failure;
  }
  int rounds_done = static_cast<int>(broadcasts.size());
  for (int k = 1; k <= rounds_done; ++k) {
    trace.x.push_back(real.x[static_cast<std::size_t>(k - 1)]);
    trace.xbar.push_back(broadcasts[static_cast<std::size_t>(k - 1)]);
    std::vector<Vector> minus;
    for (int i = 0; i < N; ++i) {
      if (static_cast<int>(party_minus[static_cast<std::size_t>(i)].size()) >= k)
        minus.push_back(party_minus[static_cast<std::size_t>(i)][static_cast<std::size_t>(k - 1)]);
    }
    trace.xhat_minus.push_back(std::move(minus));
  }
  trace.completed = failure.empty() && rounds_done == T;
  return trace;
}

}  // namespace detail

/// Encrypt -> ⊕ -> decrypt -> divide pipeline on one scalar per party
/// (Algorithm 2's secure average of norm values).
inline double secure_scalar_average(const std::vector<double>& values, const CryptoContext& crypto,
                                    std::uint64_t seed = 0,
                                    std::vector<RoundMessage>* log = nullptr) {
  if (values.empty()) throw ContractError("secure_scalar_average: no values");
  FixedPointCodec codec = crypto.codec();
  CloudServer cloud(crypto.pk);
  SecurityModule security(crypto.sk, codec);
  std::vector<Ciphertext> uploads;
  for (std::size_t i = 0; i < values.size(); ++i) {
    CryptoRng rng(derive_seed(seed, stream_role::crypto, i + 1, 0));
    uploads.push_back(encrypt(crypto.pk, codec.encode(values[i]), rng));
    if (log)
      log->push_back({MessageKind::ScalarUpload, 0, party_role(static_cast<int>(i + 1)),
                      base64_encode(mpz_to_bytes(uploads.back().value))});
  }
  Ciphertext agg = cloud.aggregate_scalars(uploads);
  double avg = security.scalar_average_of_aggregate(agg, static_cast<unsigned>(values.size()));
  if (log) log->push_back({MessageKind::ScalarBroadcast, 0, security_role(), avg});
  return avg;
}

}  // namespace mpse

#endif  // MPSE_PROTOCOL_HPP
