#ifndef MPSE_PAILLIER_HPP
#define MPSE_PAILLIER_HPP

#include <gmpxx.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpse/matrix_ops.hpp"

namespace mpse {

struct CryptoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RangeError : std::range_error {
  using std::range_error::range_error;
};

/// Deterministic entropy source for key generation and encryption
/// randomness. One instance per caller; not thread-safe.
class CryptoRng {
 public:
  explicit CryptoRng(std::uint64_t seed) : state_(gmp_randinit_mt) {
    mpz_class s = mpz_class(static_cast<unsigned long>(seed >> 32));
    s <<= 32;
    s += static_cast<unsigned long>(seed & 0xffffffffULL);
    state_.seed(s);
  }

  mpz_class urandomb(mp_bitcnt_t bits) { return state_.get_z_bits(bits); }

  // uniform in [0, bound)
  mpz_class urandomm(const mpz_class& bound) { return state_.get_z_range(bound); }

 private:
  gmp_randclass state_;
};

struct PublicKey {
  mpz_class n;   // modulus, product of two primes
  mpz_class g;   // generator, fixed to n+1
  mpz_class n2;  // cached n^2
};

struct PrivateKey {
  mpz_class lambda;  // lcm(p-1, q-1)
  mpz_class mu;      // (L(g^lambda mod n^2))^-1 mod n
  PublicKey pk;
};

struct Ciphertext {
  mpz_class value;  // < n^2
};

using EncryptedVector = std::vector<Ciphertext>;

inline std::pair<PublicKey, PrivateKey> keygen_from_primes(const mpz_class& p,
                                                           const mpz_class& q) {
  if (p == q) throw CryptoError("keygen: primes must be distinct");
  PublicKey pk;
  pk.n = p * q;
  pk.g = pk.n + 1;
  pk.n2 = pk.n * pk.n;
  PrivateKey sk;
  sk.lambda = lcm(mpz_class(p - 1), mpz_class(q - 1));
  // with g = n+1: L(g^lambda mod n^2) = lambda mod n, so mu = lambda^-1 mod n
  mpz_class inv;
  if (mpz_invert(inv.get_mpz_t(), sk.lambda.get_mpz_t(), pk.n.get_mpz_t()) == 0)
    throw CryptoError("keygen: lambda not invertible mod n");
  sk.mu = inv;
  sk.pk = pk;
  return {pk, sk};
}

inline mpz_class random_prime(CryptoRng& rng, mp_bitcnt_t bits) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    mpz_class cand = rng.urandomb(bits);
    mpz_setbit(cand.get_mpz_t(), bits - 1);  // force exact bit length
    mpz_setbit(cand.get_mpz_t(), 0);
    mpz_class p;
    mpz_nextprime(p.get_mpz_t(), cand.get_mpz_t());
    if (mpz_sizeinbase(p.get_mpz_t(), 2) == bits) return p;
  }
  throw CryptoError("random_prime: generation timeout");
}

/// key_bits >= 512 for real use; smaller keys are for tests only and must
/// be requested explicitly by the caller (CLI gates them behind a flag).
inline std::pair<PublicKey, PrivateKey> keygen(unsigned key_bits, CryptoRng& rng) {
  if (key_bits < 16) throw CryptoError("keygen: key_bits must be >= 16");
  mp_bitcnt_t half = key_bits / 2;
  mpz_class p = random_prime(rng, half);
  mpz_class q;
  do {
    q = random_prime(rng, key_bits - half);
  } while (q == p);
  return keygen_from_primes(p, q);
}

inline Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, CryptoRng& rng) {
  if (m < 0 || m >= pk.n) throw RangeError("encrypt: plaintext out of [0, n)");
  mpz_class r;
  do {
    r = rng.urandomm(pk.n);
  } while (r == 0 || gcd(r, pk.n) != 1);
  // g = n+1 => g^m mod n^2 = 1 + m*n
  mpz_class gm = (1 + m * pk.n) % pk.n2;
  mpz_class rn;
  mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n2.get_mpz_t());
  return Ciphertext{(gm * rn) % pk.n2};
}

inline mpz_class decrypt(const PrivateKey& sk, const Ciphertext& c) {
  if (c.value < 0 || c.value >= sk.pk.n2) throw RangeError("decrypt: ciphertext out of range");
  mpz_class u;
  mpz_powm(u.get_mpz_t(), c.value.get_mpz_t(), sk.lambda.get_mpz_t(), sk.pk.n2.get_mpz_t());
  mpz_class l = (u - 1) / sk.pk.n;
  return (l * sk.mu) % sk.pk.n;
}

/// Ciphertext-domain addition: decrypts to the plaintext sum mod n.
/// Both inputs must be under the same key (not detectable here).
inline Ciphertext homomorphic_add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  return Ciphertext{(a.value * b.value) % pk.n2};
}

/// Signed-real <-> plaintext-integer bridge. Negative values map to the
/// upper half of [0, n) so homomorphic sums of mixed signs decode
/// correctly as long as the true sum stays below n/2 in magnitude.
struct FixedPointCodec {
  mpz_class n;
  mpz_class scale;  // power of two
  unsigned scale_bits;

  FixedPointCodec(const mpz_class& modulus, unsigned bits) : n(modulus), scale_bits(bits) {
    scale = 1;
    scale <<= bits;
    if (n <= 2 * scale) throw RangeError("codec: modulus too small for scale");
  }

  mpz_class encode(double x) const {
    if (!std::isfinite(x)) throw RangeError("encode: non-finite value");
    double scaled = std::ldexp(x, static_cast<int>(scale_bits));
    if (std::abs(scaled) >= 9.0e18) throw RangeError("encode: magnitude overflow");
    long long q = std::llround(scaled);
    mpz_class mag(static_cast<long>(q < 0 ? -q : q));
    if (2 * mag >= n)  // |x| must stay below n/(2*scale)
      throw RangeError("encode: magnitude exceeds plaintext half-space");
    return q < 0 ? mpz_class(n - mag) : mag;
  }

  double decode(const mpz_class& m, unsigned divisor = 1) const {
    if (m < 0 || m >= n) throw RangeError("decode: plaintext out of [0, n)");
    mpz_class s = (2 * m >= n) ? mpz_class(m - n) : m;
    double v = s.get_d();
    return std::ldexp(v, -static_cast<int>(scale_bits)) / static_cast<double>(divisor);
  }
};

inline EncryptedVector encrypt_vector(const PublicKey& pk, const FixedPointCodec& codec,
                                      const Vector& v, CryptoRng& rng) {
  EncryptedVector ev;
  ev.reserve(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) ev.push_back(encrypt(pk, codec.encode(v(i)), rng));
  return ev;
}

inline Vector decrypt_vector(const PrivateKey& sk, const FixedPointCodec& codec,
                             const EncryptedVector& ev, unsigned divisor = 1) {
  Vector v(static_cast<Eigen::Index>(ev.size()));
  for (std::size_t i = 0; i < ev.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = codec.decode(decrypt(sk, ev[i]), divisor);
  return v;
}

// --- big-endian byte serialization for keys and ciphertexts ---

inline std::vector<std::uint8_t> mpz_to_bytes(const mpz_class& z) {
  if (z < 0) throw RangeError("mpz_to_bytes: negative value");
  if (z == 0) return {0};
  std::size_t count = 0;
  std::vector<std::uint8_t> buf((mpz_sizeinbase(z.get_mpz_t(), 2) + 7) / 8);
  mpz_export(buf.data(), &count, 1, 1, 1, 0, z.get_mpz_t());
  buf.resize(count);
  return buf;
}

inline mpz_class mpz_from_bytes(const std::vector<std::uint8_t>& buf) {
  mpz_class z;
  if (!buf.empty()) mpz_import(z.get_mpz_t(), buf.size(), 1, 1, 1, 0, buf.data());
  return z;
}

}  // namespace mpse

#endif  // MPSE_PAILLIER_HPP
