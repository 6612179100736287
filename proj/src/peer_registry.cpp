#include "swarmsim/peer_registry.hpp"

#include <nlohmann/json.hpp>

#include "swarmsim/errors.hpp"

namespace swarmsim::registry {

PeerRegistry::PeerRegistry(std::size_t n_stages, double propagation_delay, double default_ttl)
    : stages_(n_stages), propagation_delay_(propagation_delay), default_ttl_(default_ttl) {
    if (n_stages == 0) throw ConfigError("PeerRegistry: need at least one stage");
    if (propagation_delay < 0.0) throw ConfigError("PeerRegistry: negative propagation delay");
}

const PeerRegistry::Stage& PeerRegistry::stage_at(std::size_t stage) const {
    if (stage >= stages_.size()) throw ConfigError("PeerRegistry: stage index out of range");
    return stages_[stage];
}

PeerRegistry::Stage& PeerRegistry::stage_at(std::size_t stage) {
    if (stage >= stages_.size()) throw ConfigError("PeerRegistry: stage index out of range");
    return stages_[stage];
}

void PeerRegistry::announce(PeerId peer, std::size_t stage, double now, double ttl) {
    if (ttl <= 0.0) throw ConfigError("announce: ttl must be positive");
    // Last write wins per (stage, subkey).
    stage_at(stage).announcements[peer] = Entry{0.0, now + propagation_delay_, now + ttl};
}

void PeerRegistry::withdraw(PeerId peer, std::size_t stage) {
    auto& s = stage_at(stage);
    s.announcements.erase(peer);
    s.loads.erase(peer);
}

void PeerRegistry::publish_load(PeerId peer, std::size_t stage, double queue_size, double now) {
    if (queue_size < 0.0) throw ConfigError("publish_load: negative queue size");
    auto& s = stage_at(stage);
    auto it = s.announcements.find(peer);
    if (it == s.announcements.end()) {
        throw ConfigError("publish_load: peer not announced on stage");
    }
    // A load entry lives as long as the announcement it rides on.
    s.loads[peer] = Entry{queue_size, now + propagation_delay_, it->second.expires_at};
}

std::vector<PeerId> PeerRegistry::get_stage_peers(std::size_t stage, double now) const {
    std::vector<PeerId> out;
    for (const auto& [peer, entry] : stage_at(stage).announcements) {
        if (visible(entry, now)) out.push_back(peer);
    }
    return out;
}

double PeerRegistry::stage_load(std::size_t stage, double now) const {
    double total = 0.0;
    for (const auto& [peer, load] : stage_loads(stage, now)) total += load;
    return total;
}

std::vector<std::pair<PeerId, double>> PeerRegistry::stage_loads(std::size_t stage,
                                                                 double now) const {
    const auto& s = stage_at(stage);
    std::vector<std::pair<PeerId, double>> out;
    for (const auto& [peer, entry] : s.loads) {
        auto ann = s.announcements.find(peer);
        if (ann == s.announcements.end() || !visible(ann->second, now)) continue;
        if (visible(entry, now)) out.emplace_back(peer, entry.value);
    }
    return out;
}

std::string PeerRegistry::dump_json(double now) const {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        nlohmann::json stage_j;
        stage_j["stage"] = s;
        stage_j["peers"] = nlohmann::json::array();
        for (PeerId p : get_stage_peers(s, now)) stage_j["peers"].push_back(p.value);
        stage_j["loads"] = nlohmann::json::object();
        for (const auto& [peer, load] : stage_loads(s, now)) {
            stage_j["loads"][std::to_string(peer.value)] = load;
        }
        j.push_back(std::move(stage_j));
    }
    return j.dump();
}

}  // namespace swarmsim::registry
