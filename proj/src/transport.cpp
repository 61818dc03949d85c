#include "fleet/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "fleet/errors.hpp"

namespace fleet {

namespace {

constexpr char kMagic[4] = {'F', 'L', 'T', 'B'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back((bits >> (8 * i)) & 0xff);
}
std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0]) | (static_cast<std::uint16_t>(p[1]) << 8);
}
std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}
double get_f64(const std::uint8_t* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const BroadcastFrame& f) {
  const std::uint32_t m = static_cast<std::uint32_t>(f.beta.size());
  std::vector<std::uint8_t> out;
  out.reserve(4 + 20 + 16 * m);
  put_u32(out, 20 + 16 * m);  // payload length
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, kVersion);
  put_u16(out, 0);
  put_u32(out, f.iteration);
  put_u32(out, f.sender);
  put_u32(out, m);
  for (std::uint32_t q = 0; q < m; ++q) put_f64(out, f.beta[q]);
  for (std::uint32_t q = 0; q < m; ++q) put_f64(out, f.w[q]);
  return out;
}

BroadcastFrame decode_frame(const std::uint8_t* p, std::size_t len) {
  if (len < 20 || std::memcmp(p, kMagic, 4) != 0)
    throw ProtocolError("broadcast frame: bad magic or truncated header");
  if (get_u16(p + 4) != kVersion) throw ProtocolError("broadcast frame: unsupported version");
  BroadcastFrame f;
  f.iteration = get_u32(p + 8);
  f.sender = get_u32(p + 12);
  std::uint32_t m = get_u32(p + 16);
  if (len != 20 + 16ull * m) throw ProtocolError("broadcast frame: length mismatch");
  f.beta = Vec(m);
  f.w = Vec(m);
  for (std::uint32_t q = 0; q < m; ++q) f.beta[q] = get_f64(p + 20 + 8 * q);
  for (std::uint32_t q = 0; q < m; ++q) f.w[q] = get_f64(p + 20 + 8 * (m + q));
  return f;
}

namespace {

class InProcessBus final : public Transport {
 public:
  void open(int n_nodes) override {
    std::lock_guard<std::mutex> lk(mu_);
    n_ = n_nodes;
    mailboxes_.assign(n_nodes, {});
  }

  void broadcast(const BroadcastFrame& frame) override {
    // round-trip through the codec so both transports exercise the same path
    auto bytes = encode_frame(frame);
    auto copy = decode_frame(bytes.data() + 4, bytes.size() - 4);
    std::lock_guard<std::mutex> lk(mu_);
    for (int j = 0; j < n_; ++j)
      if (j + 1 != static_cast<int>(frame.sender)) mailboxes_[j].push_back(copy);
    cv_.notify_all();
  }

  std::vector<BroadcastFrame> collect(std::uint32_t iteration, int receiver,
                                      int expected) override {
    std::unique_lock<std::mutex> lk(mu_);
    auto& box = mailboxes_.at(receiver - 1);
    std::vector<BroadcastFrame> got;
    while (static_cast<int>(got.size()) < expected) {
      cv_.wait(lk, [&] { return !box.empty(); });
      while (!box.empty() && static_cast<int>(got.size()) < expected) {
        BroadcastFrame f = std::move(box.front());
        box.pop_front();
        if (f.iteration != iteration)
          throw ProtocolError("bus: frame for iteration " + std::to_string(f.iteration) +
                              " while collecting " + std::to_string(iteration));
        got.push_back(std::move(f));
      }
    }
    return got;
  }

  void close() override {}

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int n_ = 0;
  std::vector<std::deque<BroadcastFrame>> mailboxes_;
};

ssize_t read_exact(int fd, std::uint8_t* buf, std::size_t n) {
  std::size_t done = 0;
  while (done < n) {
    ssize_t r = ::read(fd, buf + done, n - done);
    if (r <= 0) return r;
    done += static_cast<std::size_t>(r);
  }
  return static_cast<ssize_t>(done);
}

// Star-over-loopback relay. The hub polls all node sockets, reads complete
// frames and enqueues them to every other node with buffered nonblocking
// writes, so no phase ordering can deadlock it.
class SocketTransport final : public Transport {
 public:
  ~SocketTransport() override { close(); }

  void open(int n_nodes) override {
    n_ = n_nodes;
    int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listener < 0) throw ProtocolError("socket transport: cannot create listener");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listener, n_nodes) != 0) {
      ::close(listener);
      throw ProtocolError("socket transport: bind/listen failed");
    }
    socklen_t alen = sizeof(addr);
    ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &alen);

    node_fds_.assign(n_nodes, -1);
    hub_fds_.assign(n_nodes, -1);
    for (int i = 0; i < n_nodes; ++i) {
      int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0 || ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw ProtocolError("socket transport: connect failed");
      std::uint8_t hello[4];
      std::uint32_t tag = static_cast<std::uint32_t>(i + 1);
      std::memcpy(hello, &tag, 4);
      if (::write(fd, hello, 4) != 4) throw ProtocolError("socket transport: hello failed");
      node_fds_[i] = fd;
      int afd = ::accept(listener, nullptr, nullptr);
      if (afd < 0) throw ProtocolError("socket transport: accept failed");
      std::uint8_t buf[4];
      if (read_exact(afd, buf, 4) != 4) throw ProtocolError("socket transport: hello read failed");
      std::uint32_t sender;
      std::memcpy(&sender, buf, 4);
      hub_fds_.at(sender - 1) = afd;
    }
    ::close(listener);
    hub_ = std::thread([this] { hub_loop(); });
  }

  void broadcast(const BroadcastFrame& frame) override {
    auto bytes = encode_frame(frame);
    int fd = node_fds_.at(frame.sender - 1);
    std::size_t done = 0;
    while (done < bytes.size()) {
      ssize_t r = ::write(fd, bytes.data() + done, bytes.size() - done);
      if (r <= 0) throw ProtocolError("socket transport: broadcast write failed");
      done += static_cast<std::size_t>(r);
    }
  }

  std::vector<BroadcastFrame> collect(std::uint32_t iteration, int receiver,
                                      int expected) override {
    int fd = node_fds_.at(receiver - 1);
    std::vector<BroadcastFrame> got;
    got.reserve(expected);
    while (static_cast<int>(got.size()) < expected) {
      std::uint8_t lenbuf[4];
      if (read_exact(fd, lenbuf, 4) != 4)
        throw ProtocolError("socket transport: connection lost during collect");
      std::uint32_t len = get_u32(lenbuf);
      std::vector<std::uint8_t> payload(len);
      if (read_exact(fd, payload.data(), len) != static_cast<ssize_t>(len))
        throw ProtocolError("socket transport: truncated frame");
      auto f = decode_frame(payload.data(), payload.size());
      if (f.iteration != iteration)
        throw ProtocolError("socket transport: unexpected iteration in frame");
      got.push_back(std::move(f));
    }
    return got;
  }

  void close() override {
    for (int& fd : node_fds_)
      if (fd >= 0) {
        ::shutdown(fd, SHUT_RDWR);
        ::close(fd);
        fd = -1;
      }
    if (hub_.joinable()) hub_.join();
    for (int& fd : hub_fds_)
      if (fd >= 0) {
        ::close(fd);
        fd = -1;
      }
  }

 private:
  void hub_loop() {
    std::vector<std::vector<std::uint8_t>> inbuf(n_);
    std::vector<std::deque<std::uint8_t>> outbuf(n_);
    std::vector<bool> alive(n_, true);
    while (true) {
      std::vector<pollfd> pfds(n_);
      int live = 0;
      for (int i = 0; i < n_; ++i) {
        pfds[i].fd = alive[i] ? hub_fds_[i] : -1;
        pfds[i].events = POLLIN;
        if (!outbuf[i].empty()) pfds[i].events |= POLLOUT;
        live += alive[i];
      }
      if (live == 0) break;
      if (::poll(pfds.data(), pfds.size(), 1000) < 0) break;
      for (int i = 0; i < n_; ++i) {
        if (!alive[i]) continue;
        if (pfds[i].revents & (POLLIN | POLLERR | POLLHUP)) {
          std::uint8_t chunk[4096];
          ssize_t r = ::read(hub_fds_[i], chunk, sizeof(chunk));
          if (r <= 0) {
            alive[i] = false;
            continue;
          }
          inbuf[i].insert(inbuf[i].end(), chunk, chunk + r);
          // forward complete frames
          while (inbuf[i].size() >= 4) {
            std::uint32_t len = get_u32(inbuf[i].data());
            if (inbuf[i].size() < 4ull + len) break;
            for (int j = 0; j < n_; ++j)
              if (j != i && alive[j])
                outbuf[j].insert(outbuf[j].end(), inbuf[i].begin(), inbuf[i].begin() + 4 + len);
            inbuf[i].erase(inbuf[i].begin(), inbuf[i].begin() + 4 + len);
          }
        }
        if (!outbuf[i].empty()) {
          std::vector<std::uint8_t> flat(outbuf[i].begin(), outbuf[i].end());
          ssize_t r = ::send(hub_fds_[i], flat.data(), flat.size(), MSG_DONTWAIT);
          if (r > 0) outbuf[i].erase(outbuf[i].begin(), outbuf[i].begin() + r);
        }
      }
    }
  }

  int n_ = 0;
  std::vector<int> node_fds_;  // node-side endpoints
  std::vector<int> hub_fds_;   // hub-side endpoints
  std::thread hub_;
};

}  // namespace

std::unique_ptr<Transport> make_inprocess_bus() { return std::make_unique<InProcessBus>(); }
std::unique_ptr<Transport> make_socket_transport() { return std::make_unique<SocketTransport>(); }

}  // namespace fleet
