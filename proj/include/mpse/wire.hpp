#ifndef MPSE_WIRE_HPP
#define MPSE_WIRE_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpse/matrix_ops.hpp"
#include "mpse/paillier.hpp"

namespace mpse {

struct WireError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- base64 (standard alphabet, padded) ---

inline std::string base64_encode(const std::vector<std::uint8_t>& data) {
  static const char* tab = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= data.size(); i += 3) {
    std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += tab[(v >> 18) & 63];
    out += tab[(v >> 12) & 63];
    out += tab[(v >> 6) & 63];
    out += tab[v & 63];
  }
  std::size_t rem = data.size() - i;
  if (rem == 1) {
    std::uint32_t v = data[i] << 16;
    out += tab[(v >> 18) & 63];
    out += tab[(v >> 12) & 63];
    out += "==";
  } else if (rem == 2) {
    std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out += tab[(v >> 18) & 63];
    out += tab[(v >> 12) & 63];
    out += tab[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw WireError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      char c = text[i + j];
      if (c == '=') {
        if (i + 4 != text.size() || j < 2) throw WireError("base64: misplaced padding");
        ++pad;
        v <<= 6;
        continue;
      }
      int d = val(c);
      if (d < 0 || pad > 0) throw WireError("base64: invalid character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

// --- protocol message model ---

enum class MessageKind {
  PartyUpload,          // party -> cloud: encrypted (or plain) local estimate
  AggregateToSecurity,  // cloud -> security module: single aggregated ciphertext vector
  Broadcast,            // security module -> all parties: plaintext average
  ScalarUpload,         // party -> cloud: one encrypted scalar
  ScalarBroadcast,      // security module -> parties: plaintext scalar average
  CloudFeedback,        // design loop: cloud -> party (U_i or target block)
  PartyProduct,         // design loop: party -> cloud (Z_i C_i A style products only)
};

inline const char* kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::PartyUpload: return "PartyUpload";
    case MessageKind::AggregateToSecurity: return "AggregateToSecurity";
    case MessageKind::Broadcast: return "Broadcast";
    case MessageKind::ScalarUpload: return "ScalarUpload";
    case MessageKind::ScalarBroadcast: return "ScalarBroadcast";
    case MessageKind::CloudFeedback: return "CloudFeedback";
    case MessageKind::PartyProduct: return "PartyProduct";
  }
  throw WireError("kind_name: unknown kind");
}

inline MessageKind kind_from_name(const std::string& s) {
  for (MessageKind k : {MessageKind::PartyUpload, MessageKind::AggregateToSecurity,
                        MessageKind::Broadcast, MessageKind::ScalarUpload,
                        MessageKind::ScalarBroadcast, MessageKind::CloudFeedback,
                        MessageKind::PartyProduct})
    if (s == kind_name(k)) return k;
  throw WireError("unknown message kind: " + s);
}

struct RoundMessage {
  MessageKind kind;
  int k = 0;               // round index
  std::string sender;      // "party-3", "cloud", "security"
  nlohmann::json payload;  // see helpers below
};

// payload helpers

inline nlohmann::json ciphertexts_to_json(const EncryptedVector& ev) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : ev) arr.push_back(base64_encode(mpz_to_bytes(c.value)));
  return arr;
}

inline EncryptedVector ciphertexts_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw WireError("ciphertext payload must be an array");
  EncryptedVector ev;
  ev.reserve(arr.size());
  for (const auto& s : arr)
    ev.push_back(Ciphertext{mpz_from_bytes(base64_decode(s.get<std::string>()))});
  return ev;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vector vector_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw WireError("vector payload must be an array");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  return v;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& rows) {
  if (!rows.is_array() || rows.empty()) throw WireError("matrix payload must be a non-empty array");
  auto nr = static_cast<Eigen::Index>(rows.size());
  auto nc = static_cast<Eigen::Index>(rows[0].size());
  Matrix m(nr, nc);
  for (Eigen::Index r = 0; r < nr; ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != nc)
      throw WireError("matrix payload rows have unequal length");
    for (Eigen::Index c = 0; c < nc; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

// --- framing: 4-byte big-endian length prefix + UTF-8 JSON body ---

inline std::vector<std::uint8_t> encode_message(const RoundMessage& msg) {
  nlohmann::json j{{"kind", kind_name(msg.kind)},
                   {"k", msg.k},
                   {"sender", msg.sender},
                   {"payload", msg.payload}};
  std::string body = j.dump();
  if (body.size() > 0xffffffffULL) throw WireError("message too large");
  std::vector<std::uint8_t> out;
  out.reserve(4 + body.size());
  auto len = static_cast<std::uint32_t>(body.size());
  out.push_back(static_cast<std::uint8_t>(len >> 24));
  out.push_back(static_cast<std::uint8_t>(len >> 16));
  out.push_back(static_cast<std::uint8_t>(len >> 8));
  out.push_back(static_cast<std::uint8_t>(len));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

inline RoundMessage decode_message_body(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body);
  RoundMessage msg;
  msg.kind = kind_from_name(j.at("kind").get<std::string>());
  msg.k = j.at("k").get<int>();
  msg.sender = j.at("sender").get<std::string>();
  msg.payload = j.at("payload");
  return msg;
}

inline RoundMessage decode_message(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw WireError("short frame");
  std::uint32_t len = (static_cast<std::uint32_t>(bytes[0]) << 24) |
                      (static_cast<std::uint32_t>(bytes[1]) << 16) |
                      (static_cast<std::uint32_t>(bytes[2]) << 8) | bytes[3];
  if (bytes.size() != 4u + len) throw WireError("frame length mismatch");
  return decode_message_body(std::string(bytes.begin() + 4, bytes.end()));
}

}  // namespace mpse

#endif  // MPSE_WIRE_HPP
