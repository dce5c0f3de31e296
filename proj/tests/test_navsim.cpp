#include <doctest.h>

#include "feat3d/navsim.hpp"
#include "support/test_util.hpp"

using namespace f3d;
using nav::Cell;
using nav::EpisodeConfig;
using nav::EpisodeResult;
using nav::NavEnv;
using nav::StopReason;

namespace {

NavEnv empty_room(const std::array<int, 3>& dims) {
    NavEnv env;
    env.dims = dims;
    env.occupancy.assign(env.cell_count(), 0);
    env.start = {0, 0, 0};
    env.target_cell = {dims[0] - 1, dims[1] - 1, dims[2] - 1};
    return env;
}

// Room split by a full wall at x = 3 with a single doorway.
NavEnv walled_room(bool open_door) {
    NavEnv env = empty_room({7, 7, 1});
    for (int y = 0; y < 7; ++y) env.occupancy[env.index({3, y, 0})] = 1;
    if (open_door) env.occupancy[env.index({3, 5, 0})] = 0;
    env.start = {0, 3, 0};
    env.target_cell = {6, 3, 0};
    return env;
}

struct StopImmediatelyPolicy : nav::WaypointPolicy {
    nav::WaypointDecision decide(const nav::NavObservation&, const Cell&,
                                 const std::vector<Cell>&) override {
        return nav::WaypointDecision::make_stop();
    }
};

struct FixedWaypointPolicy : nav::WaypointPolicy {
    explicit FixedWaypointPolicy(const Cell& c) : waypoint(c) {}
    nav::WaypointDecision decide(const nav::NavObservation&, const Cell&,
                                 const std::vector<Cell>&) override {
        return nav::WaypointDecision::go(waypoint);
    }
    Cell waypoint;
};

}  // namespace

TEST_CASE("observe sees an empty room entirely and grows monotonically") {
    NavEnv env = empty_room({6, 6, 3});
    nav::AgentState state;
    state.position = {3, 3, 1};

    nav::observe(env, state, 8);
    for (std::size_t i = 0; i < env.cell_count(); ++i) CHECK(state.observed[i] == 1);
}

TEST_CASE("observe respects occlusion") {
    const NavEnv env = walled_room(false);
    nav::AgentState state;
    state.position = env.start;
    const nav::NavObservation obs = nav::observe(env, state, 10);

    CHECK(state.observed[env.index(env.start)] == 1);
    CHECK(state.observed[env.index(env.target_cell)] == 0);
    CHECK(obs.labels.empty());

    // The wall itself is visible.
    CHECK(state.observed[env.index({3, 3, 0})] == 1);
}

TEST_CASE("observed set never shrinks during an episode") {
    const NavEnv env = test::random_connected_maze(4, {10, 10, 2}, 0.2);
    nav::AgentState state;
    state.position = env.start;
    std::size_t previous = 0;
    Rng rng(1);
    for (int step = 0; step < 20; ++step) {
        nav::observe(env, state, 3);
        std::size_t count = 0;
        for (const auto v : state.observed) count += v;
        CHECK(count >= previous);
        previous = count;
        // Random walk through free neighbors.
        const Cell moves[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (int attempt = 0; attempt < 8; ++attempt) {
            const Cell off = moves[uniform_index(rng, 6)];
            const Cell next = {state.position[0] + off[0], state.position[1] + off[1],
                               state.position[2] + off[2]};
            if (env.free_cell(next)) {
                state.position = next;
                break;
            }
        }
    }
}

TEST_CASE("local_policy steps along shortest paths") {
    NavEnv env = empty_room({8, 1, 1});
    env.start = {0, 0, 0};
    env.target_cell = {7, 0, 0};

    CHECK(nav::local_policy(env, {2, 0, 0}, {2, 0, 0}) == Cell{2, 0, 0});
    CHECK(nav::local_policy(env, {2, 0, 0}, {7, 0, 0}) == Cell{3, 0, 0});
    CHECK(nav::local_policy(env, {2, 0, 0}, {0, 0, 0}) == Cell{1, 0, 0});

    const NavEnv blocked = walled_room(false);
    CHECK_THROWS_AS(nav::local_policy(blocked, blocked.start, blocked.target_cell),
                    ValidationError);
}

TEST_CASE("local_policy walks match the independent BFS oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const NavEnv env = test::random_connected_maze(100 + seed, {9, 9, 2}, 0.25);
        const int expected = test::oracle_bfs_distance(env, env.start, env.target_cell);
        REQUIRE(expected >= 0);

        Cell position = env.start;
        int steps = 0;
        while (position != env.target_cell && steps < 500) {
            position = nav::local_policy(env, position, env.target_cell);
            ++steps;
        }
        CHECK(position == env.target_cell);
        CHECK(steps == expected);
        CHECK(nav::bfs_distance(env, env.start, env.target_cell) == expected);
    }
}

TEST_CASE("oracle policy reaches the target in exactly the BFS distance") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const NavEnv env = test::random_connected_maze(200 + seed, {10, 10, 1}, 0.25);
        const int expected = test::oracle_bfs_distance(env, env.start, env.target_cell);
        REQUIRE(expected >= 0);

        nav::OracleWaypointPolicy policy(env.target_cell);
        EpisodeConfig cfg;
        cfg.max_steps = 500;
        const EpisodeResult result = nav::run_episode(env, policy, cfg);
        CHECK(result.success);
        CHECK(result.stop_reason == StopReason::kPolicyStop);
        CHECK(result.steps == expected);
        CHECK(result.trajectory.size() == static_cast<std::size_t>(expected) + 1);
        CHECK(result.trajectory.front() == env.start);
        CHECK(result.trajectory.back() == env.target_cell);

        // Consecutive cells are free 6-neighbors.
        for (std::size_t i = 0; i + 1 < result.trajectory.size(); ++i) {
            const Cell& a = result.trajectory[i];
            const Cell& b = result.trajectory[i + 1];
            CHECK(std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]) == 1);
            CHECK(env.free_cell(b));
        }
    }
}

TEST_CASE("episodes fail cleanly") {
    const NavEnv env = empty_room({6, 6, 1});

    SUBCASE("immediate stop far from the target") {
        StopImmediatelyPolicy policy;
        const EpisodeResult result = nav::run_episode(env, policy);
        CHECK(!result.success);
        CHECK(result.steps == 0);
        CHECK(result.stop_reason == StopReason::kPolicyStop);
    }

    SUBCASE("disconnected target yields unreachable_waypoint") {
        const NavEnv blocked = walled_room(false);
        nav::OracleWaypointPolicy policy(blocked.target_cell);
        const EpisodeResult result = nav::run_episode(blocked, policy);
        CHECK(!result.success);
        CHECK(result.stop_reason == StopReason::kUnreachableWaypoint);
    }

    SUBCASE("step budget exhausts") {
        // Waypoint equals the current cell, so the agent never moves...
        FixedWaypointPolicy policy(env.start);
        EpisodeConfig cfg;
        cfg.max_steps = 7;
        const EpisodeResult result = nav::run_episode(env, policy, cfg);
        CHECK(!result.success);
        CHECK(result.stop_reason == StopReason::kStepBudget);
        CHECK(result.steps == 7);
    }

    SUBCASE("out-of-grid waypoint is an error") {
        FixedWaypointPolicy policy(Cell{100, 0, 0});
        CHECK_THROWS_AS(nav::run_episode(env, policy), ValidationError);
    }
}

TEST_CASE("success radius admits near-target stops") {
    NavEnv env = empty_room({5, 1, 1});
    env.start = {0, 0, 0};
    env.target_cell = {4, 0, 0};

    struct StopAtPolicy : nav::WaypointPolicy {
        explicit StopAtPolicy(const Cell& c) : goal(c) {}
        nav::WaypointDecision decide(const nav::NavObservation&, const Cell& position,
                                     const std::vector<Cell>&) override {
            if (position == goal) return nav::WaypointDecision::make_stop();
            return nav::WaypointDecision::go(goal);
        }
        Cell goal;
    };

    StopAtPolicy one_short({3, 0, 0});
    EpisodeConfig cfg;
    cfg.success_radius = 1;
    CHECK(nav::run_episode(env, one_short, cfg).success);

    StopAtPolicy two_short({2, 0, 0});
    CHECK(!nav::run_episode(env, two_short, cfg).success);
}

TEST_CASE("frontier policy finds targets it has never seen") {
    int successes = 0;
    int attempts = 0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const NavEnv env = test::random_connected_maze(300 + seed, {10, 10, 1}, 0.2);
        const int dist = test::oracle_bfs_distance(env, env.start, env.target_cell);
        REQUIRE(dist >= 0);
        ++attempts;

        nav::FrontierWaypointPolicy policy(env.target_label);
        EpisodeConfig cfg;
        cfg.max_steps = std::max(4 * dist, 8);
        cfg.observe_radius = 4;
        const EpisodeResult result = nav::run_episode(env, policy, cfg);
        if (result.success) ++successes;
    }
    CHECK(successes >= attempts - 1);
}

TEST_CASE("environment json round-trips") {
    test::TempDir tmp("navio");
    const NavEnv env = test::random_connected_maze(7, {6, 5, 2}, 0.3);
    nav::save_env(env, tmp.file("env.json"));
    const NavEnv back = nav::load_env(tmp.file("env.json"));
    CHECK(back.dims == env.dims);
    CHECK(back.occupancy == env.occupancy);
    CHECK(back.start == env.start);
    CHECK(back.target_cell == env.target_cell);
    CHECK(back.target_label == env.target_label);

    CHECK_THROWS_AS(nav::env_from_json("{"), IoError);
    NavEnv bad = env;
    bad.occupancy[bad.index(bad.start)] = 1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);

    const nav::EpisodeResult result{{env.start}, false, 0, StopReason::kStepBudget};
    const std::string text = nav::episode_to_json(result);
    CHECK(text.find("step_budget") != std::string::npos);
}
