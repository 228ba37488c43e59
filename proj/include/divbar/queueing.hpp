#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <unordered_map>
#include <vector>

namespace divbar {

using PacketId = std::uint64_t;

struct Packet {
  PacketId id = 0;
  int commodity = 0;
  int source = 0;
  long long created_slot = 0;
};

enum class Mode { kRep, kRmia, kMia };

struct AckPair {
  bool rmia = false;
  bool mia = false;
};

class NodeState {
 public:
  NodeState() = default;
  explicit NodeState(int node_count)
      : cpq_(static_cast<std::size_t>(node_count)),
        epoch_info_(static_cast<std::size_t>(node_count), 0.0) {}

  std::deque<Packet>& cpq(int c) { return cpq_.at(static_cast<std::size_t>(c)); }
  const std::deque<Packet>& cpq(int c) const { return cpq_.at(static_cast<std::size_t>(c)); }
  long long backlog(int c) const { return static_cast<long long>(cpq(c).size()); }

  /// I^rmia: information from `transmitter` within its current epoch.
  double epoch_info(int transmitter) const {
    return epoch_info_.at(static_cast<std::size_t>(transmitter));
  }
  double& epoch_info_ref(int transmitter) {
    return epoch_info_.at(static_cast<std::size_t>(transmitter));
  }

  /// MIA ledger; 0 when the packet has never been heard.
  double ppq(PacketId p) const {
    const auto it = ppq_.find(p);
    return it == ppq_.end() ? 0.0 : it->second;
  }
  bool has_ppq(PacketId p) const { return ppq_.count(p) != 0; }
  double& ppq_ref(PacketId p) { return ppq_[p]; }
  void erase_ppq(PacketId p) { ppq_.erase(p); }
  std::size_t ppq_size() const noexcept { return ppq_.size(); }

 private:
  std::vector<std::deque<Packet>> cpq_;
  std::vector<double> epoch_info_;
  std::unordered_map<PacketId, double> ppq_;
};

/// Q[n][c] frozen at a slot boundary.
class BacklogSnapshot {
 public:
  BacklogSnapshot() = default;
  explicit BacklogSnapshot(int node_count)
      : n_(node_count), q_(static_cast<std::size_t>(node_count * node_count), 0) {}

  long long q(int n, int c) const { return q_[index(n, c)]; }
  void set(int n, int c, long long v) { q_[index(n, c)] = v; }
  int node_count() const noexcept { return n_; }

 private:
  std::size_t index(int n, int c) const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(c);
  }
  int n_ = 0;
  std::vector<long long> q_;
};

/// Forwarding outcome of one epoch. `packet` empty means a null packet, which
/// moves nothing.
struct Transfer {
  int from = 0;
  int to = 0;
  int commodity = 0;
  std::optional<PacketId> packet;
};

struct ArrivalCount {
  int node = 0;
  int commodity = 0;
  int count = 0;
};

struct Census {
  long long created = 0;
  long long queued = 0;
  long long delivered = 0;
};

/// All node states plus packet bookkeeping for one replica.
class Network {
 public:
  Network() = default;
  explicit Network(int node_count);

  int node_count() const noexcept { return static_cast<int>(nodes_.size()); }
  NodeState& node(int n) { return nodes_.at(static_cast<std::size_t>(n)); }
  const NodeState& node(int n) const { return nodes_.at(static_cast<std::size_t>(n)); }

  BacklogSnapshot snapshot() const;

  /// One slot of the backlog law: every real transfer pops the head of the
  /// sender's CPQ (all pops happen before any push), pushes at the receiver or
  /// delivers when the receiver is the commodity's destination; then arrivals
  /// are appended as fresh packets. Throws IntegrityFault when a transfer names
  /// a packet that is not at the head of the sender's queue.
  struct SlotUpdate {
    std::vector<Packet> delivered;
    std::vector<Packet> created;
  };
  SlotUpdate apply_slot_update(const std::vector<Transfer>& transfers,
                                        const std::vector<ArrivalCount>& arrivals,
                                        long long slot);

  /// Inject one packet directly (tests and scripted scenarios).
  PacketId inject(int node, int commodity, long long slot);

  /// Erase every node's ledger entry for p.
  void erase_partial_everywhere(PacketId p);

  Census census() const;
  /// Throws IntegrityFault when a packet id is queued at two places, a packet
  /// sits at its own destination, or the census does not balance.
  void check_integrity() const;

  long long delivered_count() const noexcept { return delivered_; }
  long long created_count() const noexcept { return created_; }

 private:
  std::vector<NodeState> nodes_;
  PacketId next_id_ = 1;
  long long created_ = 0;
  long long delivered_ = 0;
};

/// Per-slot decode test for one receiver. REP leaves ledgers alone, RMIA adds
/// to the epoch ledger, MIA adds to both the epoch ledger and the packet's
/// PPQ entry (created at zero on first contact). Null packets (no id) have no
/// PPQ entry, so their MIA ack equals the RMIA ack.
AckPair accumulate(NodeState& receiver, int transmitter, std::optional<PacketId> packet,
                   double rate, Mode mode, double h0);

/// Epoch-end cleanup of partial information from `transmitter` at the given
/// receivers: epoch ledgers are zeroed in every mode; under RMIA the packet's
/// PPQ entries are erased too. MIA PPQ entries are handled by the forwarding
/// rule in the engine.
void renewal_clear(Network& net, int transmitter, const std::vector<int>& receivers,
                   std::optional<PacketId> packet, Mode mode);

}  // namespace divbar
