#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "feat3d/errors.hpp"

namespace f3d::nav {

using Cell = std::array<int, 3>;

inline int chebyshev(const Cell& a, const Cell& b) {
    return std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]), std::abs(a[2] - b[2])});
}

// 6-connected occupancy grid world with one labeled target cell.
struct NavEnv {
    std::array<int, 3> dims = {0, 0, 0};
    double cell_size = 1.0;
    std::vector<std::uint8_t> occupancy;  // 1 = obstacle, x-major rows
    Cell start = {0, 0, 0};
    Cell target_cell = {0, 0, 0};
    std::string target_label = "target";

    void validate() const;
    std::size_t cell_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(const Cell& c) const {
        return (static_cast<std::size_t>(c[2]) * dims[1] + c[1]) * dims[0] + c[0];
    }
    bool in_grid(const Cell& c) const {
        return c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < dims[0] && c[1] < dims[1] &&
               c[2] < dims[2];
    }
    bool occupied(const Cell& c) const { return occupancy[index(c)] != 0; }
    bool free_cell(const Cell& c) const { return in_grid(c) && !occupied(c); }
};

struct AgentState {
    Cell position = {0, 0, 0};
    std::vector<Cell> history;            // begins at start
    std::vector<std::uint8_t> observed;   // per-cell visibility mask
};

struct LabeledCell {
    std::string label;
    Cell cell;
};

// What a waypoint policy is allowed to see: the labeled cells observed so
// far plus the growing visibility mask (env is exposed for grid geometry
// and for reading occupancy of observed cells).
struct NavObservation {
    std::vector<LabeledCell> labels;
    const std::vector<std::uint8_t>* observed = nullptr;
    const NavEnv* env = nullptr;
};

struct WaypointDecision {
    bool stop = false;
    Cell waypoint = {0, 0, 0};

    static WaypointDecision make_stop() { return {true, {0, 0, 0}}; }
    static WaypointDecision go(const Cell& c) { return {false, c}; }
};

class WaypointPolicy {
public:
    virtual ~WaypointPolicy() = default;
    virtual WaypointDecision decide(const NavObservation& obs, const Cell& position,
                                    const std::vector<Cell>& history) = 0;
};

// Knows the target a priori: always emits the target cell, stops on arrival.
class OracleWaypointPolicy : public WaypointPolicy {
public:
    explicit OracleWaypointPolicy(const Cell& target) : target_(target) {}
    WaypointDecision decide(const NavObservation&, const Cell& position,
                            const std::vector<Cell>&) override;

private:
    Cell target_;
};

// Explores the nearest frontier (observed free cell adjacent to unobserved
// space) until the target has been seen, then heads straight for it.
class FrontierWaypointPolicy : public WaypointPolicy {
public:
    explicit FrontierWaypointPolicy(std::string target_label)
        : target_label_(std::move(target_label)) {}
    WaypointDecision decide(const NavObservation& obs, const Cell& position,
                            const std::vector<Cell>&) override;

private:
    std::string target_label_;
    std::optional<Cell> seen_target_;
};

enum class StopReason { kPolicyStop, kStepBudget, kUnreachableWaypoint };

struct EpisodeResult {
    std::vector<Cell> trajectory;  // starts at env.start, 6-connected
    bool success = false;
    int steps = 0;  // moves taken (trajectory size - 1)
    StopReason stop_reason = StopReason::kPolicyStop;
};

struct EpisodeConfig {
    int max_steps = 200;
    int success_radius = 1;   // Chebyshev cells from the target
    int observe_radius = 4;   // Chebyshev visibility range
};

// Marks line-of-sight cells within the Chebyshev radius as observed and
// reports the labeled cells seen so far (the target once visible).
NavObservation observe(const NavEnv& env, AgentState& state, int radius);

// First step of a breadth-first shortest path through free cells; ties
// break in fixed +x,-x,+y,-y,+z,-z order. Throws when unreachable.
Cell local_policy(const NavEnv& env, const Cell& from, const Cell& waypoint);

// Free-space BFS distance in moves, or nullopt when disconnected.
std::optional<int> bfs_distance(const NavEnv& env, const Cell& from, const Cell& to);

EpisodeResult run_episode(const NavEnv& env, WaypointPolicy& policy,
                          const EpisodeConfig& cfg = {});

// JSON codec: {dims, cell_size, obstacles:[[x,y,z],...], start,
// target:{cell,label}}.
std::string env_to_json(const NavEnv& env);
NavEnv env_from_json(const std::string& text);
void save_env(const NavEnv& env, const std::string& path);
NavEnv load_env(const std::string& path);
std::string episode_to_json(const EpisodeResult& result);

}  // namespace f3d::nav
