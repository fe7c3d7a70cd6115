#pragma once

// Arbitrator <-> worker messages and the length-prefixed frame codec.
// A frame is a 4-byte big-endian body length followed by a compact UTF-8
// JSON object with fixed field names.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "errors.hpp"
#include "metrics.hpp"

namespace dynamix {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

enum class MessageKind { hello, ready, state_report, action, episode_end, terminate, ack };

inline constexpr std::array<MessageKind, 7> kAllMessageKinds{
    MessageKind::hello,       MessageKind::ready,     MessageKind::state_report, MessageKind::action,
    MessageKind::episode_end, MessageKind::terminate, MessageKind::ack};

inline std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::hello: return "HELLO";
    case MessageKind::ready: return "READY";
    case MessageKind::state_report: return "STATE_REPORT";
    case MessageKind::action: return "ACTION";
    case MessageKind::episode_end: return "EPISODE_END";
    case MessageKind::terminate: return "TERMINATE";
    case MessageKind::ack: return "ACK";
  }
  return "?";
}

inline MessageKind parse_kind(std::string_view s) {
  for (MessageKind k : kAllMessageKinds)
    if (to_string(k) == s) return k;
  throw ProtocolError("unknown message kind '" + std::string(s) + "'");
}

// Raw per-window statistics carried alongside the aggregated LocalState.
struct WindowStats {
  int iterations = 0;
  long long first_iteration = 0;
  double window_wall_time = 0.0;  // sum of iteration wall times
  double sim_time = 0.0;          // cluster clock at the end of the window
  double model_accuracy = 0.0;    // noise-free, end of window
  long long cumulative_samples = 0;
  long long retransmissions = 0;

  bool operator==(const WindowStats&) const = default;
};

struct HelloBody {
  int protocol_version = kProtocolVersion;
  int initial_batch = 256;
  bool operator==(const HelloBody&) const = default;
};

struct StateReportBody {
  LocalState local;
  WindowStats window;
  int batch_size = 0;
  bool operator==(const StateReportBody&) const = default;
};

struct ActionBody {
  int action_index = 2;
  int delta = 0;
  int batch_size = 0;  // clamped result the worker must adopt
  double log_prob = 0.0;
  std::uint64_t policy_version = 0;
  bool operator==(const ActionBody&) const = default;
};

struct EpisodeEndBody {
  int episode = 0;
  std::uint64_t policy_version = 0;
  bool updated = false;
  bool operator==(const EpisodeEndBody&) const = default;
};

struct AckBody {
  bool accepted = true;
  std::string reason;
  bool operator==(const AckBody&) const = default;
};

struct Message {
  MessageKind kind = MessageKind::ack;
  int version = kProtocolVersion;
  std::string session_id;
  int worker_id = 0;
  int episode = 0;
  int step = 0;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const Message& o) const {
    return kind == o.kind && version == o.version && session_id == o.session_id && worker_id == o.worker_id &&
           episode == o.episode && step == o.step && payload == o.payload;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(WindowStats, iterations, first_iteration, window_wall_time, sim_time,
                                   model_accuracy, cumulative_samples, retransmissions)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(HelloBody, protocol_version, initial_batch)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(StateReportBody, local, window, batch_size)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ActionBody, action_index, delta, batch_size, log_prob, policy_version)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EpisodeEndBody, episode, policy_version, updated)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AckBody, accepted, reason)

template <typename Body>
Message make_message(MessageKind kind, const std::string& session, int worker, int episode, int step,
                     const Body& body) {
  Message m;
  m.kind = kind;
  m.session_id = session;
  m.worker_id = worker;
  m.episode = episode;
  m.step = step;
  m.payload = body;
  return m;
}

inline Message make_message(MessageKind kind, const std::string& session, int worker, int episode, int step) {
  Message m;
  m.kind = kind;
  m.session_id = session;
  m.worker_id = worker;
  m.episode = episode;
  m.step = step;
  return m;
}

template <typename Body>
Body payload_as(const Message& m) {
  try {
    return m.payload.get<Body>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed ") + std::string(to_string(m.kind)) + " payload: " + e.what());
  }
}

inline nlohmann::json to_json_document(const Message& m) {
  return {{"kind", to_string(m.kind)}, {"version", m.version}, {"session_id", m.session_id},
          {"worker_id", m.worker_id},  {"episode", m.episode}, {"step", m.step},
          {"payload", m.payload}};
}

// Strict: the version must match and the kind must be known.
inline Message from_json_document(const nlohmann::json& j) {
  if (!j.is_object()) throw ProtocolError("message is not a JSON object");
  Message m;
  try {
    if (!j.contains("version")) throw ProtocolError("message lacks protocol version");
    m.version = j.at("version").get<int>();
    m.kind = parse_kind(j.at("kind").get<std::string>());
    m.session_id = j.at("session_id").get<std::string>();
    m.worker_id = j.at("worker_id").get<int>();
    m.episode = j.at("episode").get<int>();
    m.step = j.at("step").get<int>();
    m.payload = j.value("payload", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  }
  if (m.version != kProtocolVersion)
    throw ProtocolError("protocol version mismatch: got " + std::to_string(m.version) + ", expected " +
                        std::to_string(kProtocolVersion));
  return m;
}

inline std::string encode_body(const Message& m) { return to_json_document(m).dump(); }

inline std::string encode_frame(const Message& m) {
  const std::string body = encode_body(m);
  if (body.size() > kMaxFrameBytes) throw ProtocolError("frame exceeds maximum size");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string frame;
  frame.reserve(4 + body.size());
  frame.push_back(static_cast<char>((n >> 24) & 0xff));
  frame.push_back(static_cast<char>((n >> 16) & 0xff));
  frame.push_back(static_cast<char>((n >> 8) & 0xff));
  frame.push_back(static_cast<char>(n & 0xff));
  frame += body;
  return frame;
}

inline std::uint32_t read_length_prefix(std::string_view bytes) {
  detail::require(bytes.size() >= 4, "read_length_prefix: need 4 bytes");
  const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])); };
  return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
}

inline Message decode_body(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("frame body is not valid JSON: ") + e.what());
  }
  return from_json_document(j);
}

// Decodes exactly one complete frame.
inline Message decode_frame(std::string_view frame) {
  if (frame.size() < 4) throw ProtocolError("frame shorter than its length prefix");
  const std::uint32_t n = read_length_prefix(frame);
  if (n > kMaxFrameBytes) throw ProtocolError("frame length exceeds maximum");
  if (frame.size() != 4 + static_cast<std::size_t>(n))
    throw ProtocolError("frame length prefix " + std::to_string(n) + " does not match " +
                        std::to_string(frame.size() - 4) + " body bytes");
  return decode_body(frame.substr(4));
}

// Incremental decoder for a byte stream carrying back-to-back frames.
class FrameDecoder {
 public:
  void feed(std::string_view bytes) { buffer_.append(bytes); }

  std::optional<Message> next() {
    if (buffer_.size() < 4) return std::nullopt;
    const std::uint32_t n = read_length_prefix(buffer_);
    if (n > kMaxFrameBytes) throw ProtocolError("frame length exceeds maximum");
    if (buffer_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
    Message m = decode_body(std::string_view(buffer_).substr(4, n));
    buffer_.erase(0, 4 + static_cast<std::size_t>(n));
    return m;
  }

  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
};

// FNV-1a over the encoded body; used as the payload digest in event logs.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

}  // namespace dynamix
