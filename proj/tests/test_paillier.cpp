#include <gtest/gtest.h>

#include <set>

#include "mpse/paillier.hpp"

using namespace mpse;

TEST(Keygen, SmallKeyDeterministicRoundTrip) {
  CryptoRng r1(123), r2(123);
  auto [pk1, sk1] = keygen(16, r1);
  auto [pk2, sk2] = keygen(16, r2);
  EXPECT_EQ(pk1.n, pk2.n);
  CryptoRng enc_rng(9);
  EXPECT_EQ(decrypt(sk1, encrypt(pk1, 7, enc_rng)), 7);
}

TEST(Keygen, ForcedTinyPrimes) {
  auto [pk, sk] = keygen_from_primes(5, 7);
  EXPECT_EQ(pk.n, 35);
  EXPECT_EQ(pk.n2, 1225);
  CryptoRng rng(1);
  for (int m = 0; m < 35; ++m) EXPECT_EQ(decrypt(sk, encrypt(pk, m, rng)), m);
}

TEST(Keygen, FullSizeModulusBitLength) {
  CryptoRng rng(2026);
  auto [pk, sk] = keygen(2048, rng);
  std::size_t bits = mpz_sizeinbase(pk.n.get_mpz_t(), 2);
  EXPECT_GE(bits, 2047u);
  EXPECT_LE(bits, 2048u);
  CryptoRng enc_rng(3);
  EXPECT_EQ(decrypt(sk, encrypt(pk, 123456789, enc_rng)), 123456789);
}

TEST(Keygen, RejectsEqualPrimes) { EXPECT_THROW(keygen_from_primes(7, 7), CryptoError); }

TEST(Encrypt, ZeroDecryptsToZero) {
  auto [pk, sk] = keygen_from_primes(5, 7);
  CryptoRng rng(4);
  EXPECT_EQ(decrypt(sk, encrypt(pk, 0, rng)), 0);
}

TEST(Encrypt, ProbabilisticCiphertexts) {
  CryptoRng kr(5);
  auto [pk, sk] = keygen(64, kr);
  CryptoRng rng(6);
  Ciphertext a = encrypt(pk, 5, rng);
  Ciphertext b = encrypt(pk, 5, rng);
  EXPECT_NE(a.value, b.value);
  EXPECT_EQ(decrypt(sk, a), 5);
  EXPECT_EQ(decrypt(sk, b), 5);
}

TEST(Encrypt, RejectsOutOfRange) {
  auto [pk, sk] = keygen_from_primes(5, 7);
  CryptoRng rng(7);
  EXPECT_THROW(encrypt(pk, 35, rng), RangeError);
  EXPECT_THROW(encrypt(pk, -1, rng), RangeError);
}

TEST(Encrypt, NoCollisionsAtRealKeySize) {
  CryptoRng kr(8);
  auto [pk, sk] = keygen(512, kr);
  CryptoRng rng(9);
  std::set<mpz_class> seen;
  for (int i = 0; i < 10000; ++i) EXPECT_TRUE(seen.insert(encrypt(pk, 42, rng).value).second);
}

TEST(HomomorphicAdd, BasicSum) {
  auto [pk, sk] = keygen_from_primes(5, 7);
  CryptoRng rng(10);
  Ciphertext s = homomorphic_add(pk, encrypt(pk, 3, rng), encrypt(pk, 4, rng));
  EXPECT_EQ(decrypt(sk, s), 7);
}

TEST(HomomorphicAdd, ZeroIsIdentity) {
  auto [pk, sk] = keygen_from_primes(5, 7);
  CryptoRng rng(11);
  for (int m = 0; m < 35; ++m)
    EXPECT_EQ(decrypt(sk, homomorphic_add(pk, encrypt(pk, m, rng), encrypt(pk, 0, rng))), m);
}

TEST(HomomorphicAdd, FoldMatchesPlaintextSumModN) {
  auto [pk, sk] = keygen_from_primes(5, 7);
  CryptoRng rng(12);
  GTEST_ASSERT_EQ(pk.n, 35);
  for (int trial = 0; trial < 50; ++trial) {
    long sum = 0;
    Ciphertext acc = encrypt(pk, 0, rng);
    for (int i = 0; i < 4; ++i) {
      long m = (trial * 7 + i * 13) % 35;
      sum += m;
      acc = homomorphic_add(pk, acc, encrypt(pk, static_cast<long>(m), rng));
    }
    EXPECT_EQ(decrypt(sk, acc), sum % 35);
  }
}

TEST(FixedPoint, EncodeDecodeRoundTrip) {
  CryptoRng kr(13);
  auto [pk, sk] = keygen(64, kr);
  FixedPointCodec codec(pk.n, 16);
  EXPECT_EQ(codec.encode(1.25), 81920);
  EXPECT_DOUBLE_EQ(codec.decode(codec.encode(1.25)), 1.25);
}

TEST(FixedPoint, ModularSignConvention) {
  CryptoRng kr(14);
  auto [pk, sk] = keygen(64, kr);
  FixedPointCodec codec(pk.n, 16);
  mpz_class scale = 1;
  scale <<= 16;
  EXPECT_EQ(codec.encode(-1.0), pk.n - scale);
  EXPECT_DOUBLE_EQ(codec.decode(codec.encode(-1.0)), -1.0);
}

TEST(FixedPoint, SumWithDivisorRecoversMean) {
  CryptoRng kr(15);
  auto [pk, sk] = keygen(64, kr);
  FixedPointCodec codec(pk.n, 20);
  mpz_class sum = (codec.encode(0.1) + codec.encode(0.2) + codec.encode(0.3)) % pk.n;
  EXPECT_NEAR(codec.decode(sum, 3), 0.2, std::ldexp(1.0, -20));
}

TEST(FixedPoint, OverflowAborts) {
  auto [pk, sk] = keygen_from_primes(251, 257);
  FixedPointCodec codec(pk.n, 8);
  EXPECT_THROW(codec.encode(1.0e6), RangeError);
}

TEST(Vectors, ZeroVectorRoundTrip) {
  CryptoRng kr(16);
  auto [pk, sk] = keygen(128, kr);
  FixedPointCodec codec(pk.n, 30);
  CryptoRng rng(17);
  Vector v = Vector::Zero(5);
  EXPECT_EQ(decrypt_vector(sk, codec, encrypt_vector(pk, codec, v, rng), 1).norm(), 0.0);
}

TEST(Vectors, ComponentwiseAggregateMean) {
  CryptoRng kr(18);
  auto [pk, sk] = keygen(256, kr);
  FixedPointCodec codec(pk.n, 40);
  CryptoRng rng(19);
  std::vector<Vector> vs;
  Vector mean = Vector::Zero(3);
  for (int i = 0; i < 4; ++i) {
    Vector v(3);
    v << 0.5 * i - 0.7, 1.0 / (i + 1), -2.0 + 0.3 * i;
    mean += v / 4.0;
    vs.push_back(v);
  }
  EncryptedVector acc = encrypt_vector(pk, codec, vs[0], rng);
  for (int i = 1; i < 4; ++i) {
    EncryptedVector ev = encrypt_vector(pk, codec, vs[i], rng);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] = homomorphic_add(pk, acc[j], ev[j]);
  }
  Vector got = decrypt_vector(sk, codec, acc, 4);
  EXPECT_LT((got - mean).cwiseAbs().maxCoeff(), std::ldexp(1.0, -41));
}

TEST(Vectors, SinglePartyIdentity) {
  CryptoRng kr(20);
  auto [pk, sk] = keygen(128, kr);
  FixedPointCodec codec(pk.n, 30);
  CryptoRng rng(21);
  Vector v(4);
  v << -1.5, 0.25, 3.75, -0.125;
  Vector got = decrypt_vector(sk, codec, encrypt_vector(pk, codec, v, rng), 1);
  EXPECT_LT((got - v).cwiseAbs().maxCoeff(), std::ldexp(1.0, -31));
}

TEST(Serialization, MpzBytesRoundTrip) {
  mpz_class z("123456789012345678901234567890");
  EXPECT_EQ(mpz_from_bytes(mpz_to_bytes(z)), z);
  EXPECT_EQ(mpz_from_bytes(mpz_to_bytes(mpz_class(0))), 0);
}
