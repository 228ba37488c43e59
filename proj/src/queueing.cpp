#include "divbar/queueing.hpp"

#include <string>
#include <unordered_set>

#include "divbar/errors.hpp"

namespace divbar {

Network::Network(int node_count) {
  nodes_.reserve(static_cast<std::size_t>(node_count));
  for (int i = 0; i < node_count; ++i) nodes_.emplace_back(node_count);
}

BacklogSnapshot Network::snapshot() const {
  BacklogSnapshot s(node_count());
  for (int n = 0; n < node_count(); ++n) {
    for (int c = 0; c < node_count(); ++c) s.set(n, c, node(n).backlog(c));
  }
  return s;
}

Network::SlotUpdate Network::apply_slot_update(const std::vector<Transfer>& transfers,
                                               const std::vector<ArrivalCount>& arrivals,
                                               long long slot) {
  std::vector<std::pair<int, Packet>> moving;
  for (const auto& t : transfers) {
    if (!t.packet) continue;
    auto& q = node(t.from).cpq(t.commodity);
    if (q.empty() || q.front().id != *t.packet) {
      throw IntegrityFault("slot " + std::to_string(slot) + ": node " + std::to_string(t.from) +
                           " forwards packet " + std::to_string(*t.packet) +
                           " it does not hold at the head of CPQ " +
                           std::to_string(t.commodity));
    }
    moving.emplace_back(t.to, q.front());
    q.pop_front();
  }
  SlotUpdate out;
  for (auto& [to, p] : moving) {
    if (to == p.commodity) {
      erase_partial_everywhere(p.id);
      out.delivered.push_back(p);
      ++delivered_;
    } else {
      node(to).erase_ppq(p.id);
      node(to).cpq(p.commodity).push_back(p);
    }
  }
  for (const auto& a : arrivals) {
    for (int i = 0; i < a.count; ++i) {
      inject(a.node, a.commodity, slot);
      out.created.push_back(node(a.node).cpq(a.commodity).back());
    }
  }
  return out;
}

PacketId Network::inject(int n, int commodity, long long slot) {
  const PacketId id = next_id_++;
  node(n).cpq(commodity).push_back(Packet{id, commodity, n, slot});
  ++created_;
  return id;
}

void Network::erase_partial_everywhere(PacketId p) {
  for (auto& s : nodes_) s.erase_ppq(p);
}

Census Network::census() const {
  Census c;
  c.created = created_;
  c.delivered = delivered_;
  for (int n = 0; n < node_count(); ++n) {
    for (int k = 0; k < node_count(); ++k) c.queued += node(n).backlog(k);
  }
  return c;
}

void Network::check_integrity() const {
  std::unordered_set<PacketId> ids;
  for (int n = 0; n < node_count(); ++n) {
    for (int c = 0; c < node_count(); ++c) {
      for (const auto& p : node(n).cpq(c)) {
        if (p.commodity != c) throw IntegrityFault("packet in wrong commodity queue");
        if (n == c) throw IntegrityFault("packet queued at its own destination");
        if (!ids.insert(p.id).second) {
          throw IntegrityFault("packet " + std::to_string(p.id) + " held twice");
        }
      }
    }
  }
  const auto c = census();
  if (c.created != c.queued + c.delivered) {
    throw IntegrityFault("packet census does not balance: created " + std::to_string(c.created) +
                         ", queued " + std::to_string(c.queued) + ", delivered " +
                         std::to_string(c.delivered));
  }
}

AckPair accumulate(NodeState& receiver, int transmitter, std::optional<PacketId> packet,
                   double rate, Mode mode, double h0) {
  switch (mode) {
    case Mode::kRep: {
      const bool ok = rate >= h0;
      return {ok, ok};
    }
    case Mode::kRmia: {
      double& info = receiver.epoch_info_ref(transmitter);
      info += rate;
      const bool ok = info >= h0;
      return {ok, ok};
    }
    case Mode::kMia: {
      double& info = receiver.epoch_info_ref(transmitter);
      info += rate;
      const bool rmia = info >= h0;
      if (!packet) return {rmia, rmia};
      double& pre = receiver.ppq_ref(*packet);
      pre += rate;
      return {rmia, pre >= h0};
    }
  }
  return {};
}

void renewal_clear(Network& net, int transmitter, const std::vector<int>& receivers,
                   std::optional<PacketId> packet, Mode mode) {
  for (int k : receivers) {
    auto& s = net.node(k);
    s.epoch_info_ref(transmitter) = 0.0;
    if (mode == Mode::kRmia && packet) s.erase_ppq(*packet);
  }
}

}  // namespace divbar
