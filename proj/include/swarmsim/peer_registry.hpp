#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace swarmsim {

/// Opaque worker identity, unique within a simulation.
struct PeerId {
    std::uint64_t value = 0;
    auto operator<=>(const PeerId&) const = default;
};

struct PeerIdHash {
    std::size_t operator()(PeerId id) const noexcept {
        return std::hash<std::uint64_t>{}(id.value);
    }
};

namespace registry {

/// In-memory stand-in for the DHT: per stage, a subkey -> (value, expiry)
/// map with a fixed propagation delay before writes become visible.
class PeerRegistry {
public:
    explicit PeerRegistry(std::size_t n_stages, double propagation_delay = 1.0,
                          double default_ttl = 300.0);

    std::size_t n_stages() const { return stages_.size(); }
    double propagation_delay() const { return propagation_delay_; }
    double default_ttl() const { return default_ttl_; }

    void announce(PeerId peer, std::size_t stage, double now, double ttl);
    void announce(PeerId peer, std::size_t stage, double now) {
        announce(peer, stage, now, default_ttl_);
    }
    /// Drop a peer's announcement (and any published load) immediately.
    void withdraw(PeerId peer, std::size_t stage);

    void publish_load(PeerId peer, std::size_t stage, double queue_size, double now);

    std::vector<PeerId> get_stage_peers(std::size_t stage, double now) const;
    /// Sum of load values visible at `now` on `stage`.
    double stage_load(std::size_t stage, double now) const;
    /// (peer, load) pairs visible at `now`, ascending by PeerId.
    std::vector<std::pair<PeerId, double>> stage_loads(std::size_t stage, double now) const;

    std::string dump_json(double now) const;

private:
    struct Entry {
        double value = 0.0;
        double visible_at = 0.0;
        double expires_at = 0.0;
    };
    struct Stage {
        std::map<PeerId, Entry> announcements;
        std::map<PeerId, Entry> loads;
    };

    const Stage& stage_at(std::size_t stage) const;
    Stage& stage_at(std::size_t stage);
    static bool visible(const Entry& e, double now) {
        return e.visible_at <= now && now < e.expires_at;
    }

    std::vector<Stage> stages_;
    double propagation_delay_;
    double default_ttl_;
};

}  // namespace registry
}  // namespace swarmsim
