#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fleet/types.hpp"

namespace fleet {

/// One per-iteration broadcast: a node's (beta, w) pair.
struct BroadcastFrame {
  std::uint32_t iteration = 0;
  std::uint32_t sender = 0;  // 1-based tag
  Vec beta;
  Vec w;
};

/// Wire form: little-endian, length-prefixed.
///   u32 payload_len | "FLTB" | u16 version=1 | u16 reserved |
///   u32 iteration | u32 sender | u32 m | m f64 beta | m f64 w
std::vector<std::uint8_t> encode_frame(const BroadcastFrame& f);
BroadcastFrame decode_frame(const std::uint8_t* payload, std::size_t len);

/// Reliable ordered-per-sender broadcast fabric. `broadcast` delivers the
/// frame to every node except the sender; `collect` blocks until `expected`
/// frames tagged with `iteration` reached `receiver`.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void open(int n_nodes) = 0;
  virtual void broadcast(const BroadcastFrame& frame) = 0;
  virtual std::vector<BroadcastFrame> collect(std::uint32_t iteration, int receiver,
                                              int expected) = 0;
  virtual void close() = 0;
};

/// Deterministic in-process mailbox fabric (default).
std::unique_ptr<Transport> make_inprocess_bus();

/// Loopback TCP fabric: every node holds a socket to a relay hub that
/// forwards each frame to the other nodes. Same iterates as the bus.
std::unique_ptr<Transport> make_socket_transport();

}  // namespace fleet
