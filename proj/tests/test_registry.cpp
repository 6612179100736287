#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "swarmsim/errors.hpp"
#include "swarmsim/peer_registry.hpp"

using namespace swarmsim;
using registry::PeerRegistry;

TEST_CASE("announce becomes visible after the propagation delay and expires") {
    PeerRegistry reg(2, 1.0, 300.0);
    reg.announce(PeerId{7}, 0, 10.0);

    CHECK(reg.get_stage_peers(0, 10.0).empty());
    CHECK(reg.get_stage_peers(0, 10.5).empty());
    CHECK(reg.get_stage_peers(0, 11.0) == std::vector<PeerId>{PeerId{7}});
    CHECK(reg.get_stage_peers(0, 309.9) == std::vector<PeerId>{PeerId{7}});
    CHECK(reg.get_stage_peers(0, 310.0).empty());  // now >= expires_at
    CHECK(reg.get_stage_peers(1, 11.0).empty());   // other stage untouched
}

TEST_CASE("re-announce extends the lease") {
    PeerRegistry reg(1, 1.0, 300.0);
    reg.announce(PeerId{1}, 0, 0.0);
    reg.announce(PeerId{1}, 0, 200.0);
    CHECK(reg.get_stage_peers(0, 400.0) == std::vector<PeerId>{PeerId{1}});
    CHECK(reg.get_stage_peers(0, 501.0).empty());
}

TEST_CASE("withdraw takes effect immediately") {
    PeerRegistry reg(1);
    reg.announce(PeerId{3}, 0, 0.0);
    reg.publish_load(PeerId{3}, 0, 4.0, 0.0);
    reg.withdraw(PeerId{3}, 0);
    CHECK(reg.get_stage_peers(0, 5.0).empty());
    CHECK(reg.stage_load(0, 5.0) == 0.0);
}

TEST_CASE("publish_load") {
    PeerRegistry reg(1, 1.0, 300.0);

    SUBCASE("requires a live announcement") {
        CHECK_THROWS_AS(reg.publish_load(PeerId{9}, 0, 1.0, 0.0), ConfigError);
    }
    SUBCASE("rejects negative loads") {
        reg.announce(PeerId{9}, 0, 0.0);
        CHECK_THROWS_AS(reg.publish_load(PeerId{9}, 0, -1.0, 1.0), ConfigError);
    }
    SUBCASE("sums visible loads; later writes overwrite") {
        reg.announce(PeerId{1}, 0, 0.0);
        reg.announce(PeerId{2}, 0, 0.0);
        reg.publish_load(PeerId{1}, 0, 4.0, 1.0);
        reg.publish_load(PeerId{2}, 0, 2.5, 1.0);
        CHECK(reg.stage_load(0, 1.5) == 0.0);  // not yet propagated
        CHECK(reg.stage_load(0, 2.0) == doctest::Approx(6.5));
        reg.publish_load(PeerId{1}, 0, 1.0, 3.0);
        CHECK(reg.stage_load(0, 4.0) == doctest::Approx(3.5));

        const auto pairs = reg.stage_loads(0, 4.0);
        REQUIRE(pairs.size() == 2);
        CHECK(pairs[0].first == PeerId{1});
        CHECK(pairs[0].second == doctest::Approx(1.0));
        CHECK(pairs[1].first == PeerId{2});
    }
    SUBCASE("load visibility ends with the announcement lease") {
        reg.announce(PeerId{1}, 0, 0.0, 50.0);
        reg.publish_load(PeerId{1}, 0, 3.0, 10.0);
        CHECK(reg.stage_load(0, 40.0) == doctest::Approx(3.0));
        CHECK(reg.stage_load(0, 60.0) == 0.0);
    }
}

TEST_CASE("stage index bounds") {
    PeerRegistry reg(2);
    CHECK_THROWS_AS(reg.announce(PeerId{1}, 2, 0.0), ConfigError);
    CHECK_THROWS_AS(reg.get_stage_peers(5, 0.0), ConfigError);
}

// Replay oracle: reapply the write log against the visibility rule
// (visible_at <= now < expires_at) with flat vectors and compare.
TEST_CASE("randomized replay agrees with a brute-force visibility oracle") {
    struct Write {
        std::uint64_t peer;
        double t;
        double ttl;
        bool withdraw;
    };

    std::mt19937_64 rng(42);
    for (int round = 0; round < 20; ++round) {
        PeerRegistry reg(1, 1.0, 30.0);
        std::vector<Write> log;
        double t = 0.0;
        for (int i = 0; i < 60; ++i) {
            t += static_cast<double>(rng() % 100) / 10.0;
            const std::uint64_t peer = rng() % 5;
            const bool withdraw = (rng() % 4) == 0;
            if (withdraw) {
                reg.withdraw(PeerId{peer}, 0);
            } else {
                reg.announce(PeerId{peer}, 0, t);
            }
            log.push_back({peer, t, 30.0, withdraw});
        }
        for (int probe = 0; probe < 40; ++probe) {
            const double now = static_cast<double>(rng() % 4000) / 10.0;
            // Last write wins per peer regardless of probe time, matching a
            // key-value store queried after the fact.
            std::vector<PeerId> expected;
            for (std::uint64_t peer = 0; peer < 5; ++peer) {
                bool vis = false;
                for (const auto& w : log) {
                    if (w.peer != peer) continue;
                    vis = !w.withdraw && (w.t + 1.0 <= now && now < w.t + w.ttl);
                }
                if (vis) expected.push_back(PeerId{peer});
            }
            CHECK(reg.get_stage_peers(0, now) == expected);
        }
    }
}
