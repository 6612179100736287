#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <unordered_map>
#include <set>
#include <string>
#include <vector>

#include "swarmsim/peer_registry.hpp"

namespace swarmsim::wiring {

/// Interleaved weighted round-robin router owned by a single trainer.
/// Each peer carries an accumulated-processing-time priority; a microbatch
/// goes to the peer with the smallest priority, which is then advanced by
/// the peer's EMA response time on every stage it serves.
class RoutingState {
public:
    RoutingState(std::size_t n_stages, double gamma = 0.1, double epsilon = 1.0);

    std::size_t n_stages() const { return queues_.size(); }
    double gamma() const { return gamma_; }
    double epsilon() const { return epsilon_; }

    /// `phase` in [0,1] places the newcomer within the current scheduling
    /// round: 0 makes it the next pick, 1 queues it a full round behind.
    /// Callers managing many routers should pass independent random phases
    /// so a peer joining them all is not hit by every router at once.
    void add_server(PeerId peer, const std::set<std::size_t>& stages_served, double phase = 1.0);
    void ban_server(PeerId peer);
    /// Forget a peer entirely (permanent departure, as opposed to a ban).
    void remove_server(PeerId peer);
    bool is_banned(PeerId peer) const;
    bool knows(PeerId peer) const { return peers_.contains(peer); }

    /// Smallest-priority unbanned peer on the stage; ties go to the lowest
    /// PeerId. Advances the winner's priority (IWRR step).
    /// Throws NoPeerAvailable when the stage has no eligible peer.
    PeerId choose_server(std::size_t stage);

    /// EMA update after a successful request.
    void record_response(PeerId peer, double elapsed_seconds);

    double ema_of(PeerId peer) const;
    double priority_of(PeerId peer) const;

    /// Route one microbatch through stages 0..n-1, banning peers on
    /// simulated faults and retrying the same stage.
    std::vector<PeerId> route_forward(
        const std::function<bool(PeerId, std::size_t)>& fail_oracle);

    std::string dump_json() const;

private:
    struct PeerState {
        double ema = 0.0;
        double priority = 0.0;
        bool banned = false;
        std::uint64_t version = 0;
        std::vector<std::size_t> stages;
    };
    struct HeapEntry {
        double priority;
        PeerId peer;
        std::uint64_t version;
        bool operator>(const HeapEntry& o) const {
            if (priority != o.priority) return priority > o.priority;
            return peer > o.peer;
        }
    };
    using MinHeap = std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>>;

    void push_entry(PeerState& st, PeerId peer);
    void detach_from_aggregates(PeerState& st);

    std::unordered_map<PeerId, PeerState, PeerIdHash> peers_;
    std::vector<MinHeap> queues_;
    // Per-stage EMA totals over unbanned peers, so seeding a newcomer's EMA
    // does not require scanning every peer.
    std::vector<double> ema_sum_;
    std::vector<std::size_t> ema_count_;
    // Priority of the most recent pick per stage. Late joiners enter at this
    // virtual time so they cannot absorb all traffic while catching up with
    // long-lived peers' accumulated priorities.
    std::vector<double> vtime_;
    double gamma_;
    double epsilon_;
};

}  // namespace swarmsim::wiring
