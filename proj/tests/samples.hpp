#pragma once

#include <vector>

#include <dynamix/protocol.hpp>
#include <dynamix/rng.hpp>

namespace samples {

// One message of every kind, with awkward doubles in the payloads.
inline std::vector<dynamix::Message> every_kind(std::uint64_t seed) {
  using namespace dynamix;
  Rng rng(seed);
  auto u = [&] { return uniform01(rng) * 3.0 - 1.0; };
  std::vector<Message> out;
  out.push_back(make_message(MessageKind::hello, "sess-α", 3, 0, 0, HelloBody{kProtocolVersion, 256}));
  out.push_back(make_message(MessageKind::ready, "sess-α", 3, 4, 0));
  StateReportBody r;
  r.local = {u() * 1e9, 17.0, u(), u(), u(), u(), u(), 0.1 + u() * u(), u(), 1e-300, 0.6};
  r.window = {8, 1234567, u(), 9876.54321, u(), 1LL << 40, 5};
  r.batch_size = 288;
  out.push_back(make_message(MessageKind::state_report, "sess-α", 3, 4, 99, r));
  out.push_back(make_message(MessageKind::action, "sess-α", 3, 4, 99, ActionBody{4, 100, 388, -1.6094379124341003, 7}));
  out.push_back(make_message(MessageKind::episode_end, "sess-α", 3, 4, 100, EpisodeEndBody{4, 8, true}));
  out.push_back(make_message(MessageKind::terminate, "sess-α", 3, 20, 0));
  out.push_back(make_message(MessageKind::ack, "sess-α", 3, 0, 0, AckBody{false, "protocol version 2 != 1 \"quoted\"\n"}));
  return out;
}

}  // namespace samples
