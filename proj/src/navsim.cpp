#include "feat3d/navsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace f3d::nav {

using json = nlohmann::ordered_json;

namespace {

constexpr int kUnreached = std::numeric_limits<int>::max();

const std::array<Cell, 6>& neighbor_offsets() {
    static const std::array<Cell, 6> kOffsets = {
        Cell{1, 0, 0}, Cell{-1, 0, 0}, Cell{0, 1, 0},
        Cell{0, -1, 0}, Cell{0, 0, 1}, Cell{0, 0, -1}};
    return kOffsets;
}

Cell add(const Cell& a, const Cell& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

// BFS distance field over free cells, seeded at source.
std::vector<int> distance_field(const NavEnv& env, const Cell& source) {
    std::vector<int> dist(env.cell_count(), kUnreached);
    if (!env.free_cell(source)) return dist;
    std::deque<Cell> queue{source};
    dist[env.index(source)] = 0;
    while (!queue.empty()) {
        const Cell cur = queue.front();
        queue.pop_front();
        const int d = dist[env.index(cur)];
        for (const Cell& off : neighbor_offsets()) {
            const Cell next = add(cur, off);
            if (!env.free_cell(next)) continue;
            if (dist[env.index(next)] != kUnreached) continue;
            dist[env.index(next)] = d + 1;
            queue.push_back(next);
        }
    }
    return dist;
}

// Sampled line-of-sight between cell centers; any intervening occupied
// cell blocks visibility. Endpoints never block themselves.
bool line_of_sight(const NavEnv& env, const Cell& from, const Cell& to) {
    const int span = chebyshev(from, to);
    if (span <= 1) return true;
    const int samples = 4 * span;
    for (int s = 1; s < samples; ++s) {
        const double t = static_cast<double>(s) / samples;
        Cell c;
        for (int a = 0; a < 3; ++a)
            c[a] = static_cast<int>(std::llround(from[a] + t * (to[a] - from[a])));
        if (c == from || c == to) continue;
        if (env.in_grid(c) && env.occupied(c)) return false;
    }
    return true;
}

json cell_json(const Cell& c) { return json::array({c[0], c[1], c[2]}); }

Cell cell_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw IoError("nav env json: expected a cell triple");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

}  // namespace

void NavEnv::validate() const {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
        throw ValidationError("nav env: grid must be non-empty");
    if (occupancy.size() != cell_count())
        throw ValidationError("nav env: occupancy size mismatch");
    if (!(cell_size > 0.0)) throw ValidationError("nav env: cell_size must be positive");
    if (!free_cell(start)) throw ValidationError("nav env: start cell is not free");
    if (!free_cell(target_cell)) throw ValidationError("nav env: target cell is not free");
}

WaypointDecision OracleWaypointPolicy::decide(const NavObservation&, const Cell& position,
                                              const std::vector<Cell>&) {
    if (position == target_) return WaypointDecision::make_stop();
    return WaypointDecision::go(target_);
}

WaypointDecision FrontierWaypointPolicy::decide(const NavObservation& obs, const Cell& position,
                                                const std::vector<Cell>&) {
    const NavEnv& env = *obs.env;
    if (!seen_target_) {
        for (const auto& labeled : obs.labels) {
            if (labeled.label == target_label_) {
                seen_target_ = labeled.cell;
                break;
            }
        }
    }
    if (seen_target_) {
        if (position == *seen_target_) return WaypointDecision::make_stop();
        return WaypointDecision::go(*seen_target_);
    }

    // BFS through observed free space to the nearest frontier cell.
    const std::vector<std::uint8_t>& observed = *obs.observed;
    const auto is_known_free = [&](const Cell& c) {
        return env.in_grid(c) && observed[env.index(c)] && !env.occupied(c);
    };
    const auto is_frontier = [&](const Cell& c) {
        for (const Cell& off : neighbor_offsets()) {
            const Cell next = add(c, off);
            if (env.in_grid(next) && !observed[env.index(next)]) return true;
        }
        return false;
    };

    std::vector<std::uint8_t> visited(env.cell_count(), 0);
    std::deque<Cell> queue{position};
    visited[env.index(position)] = 1;
    while (!queue.empty()) {
        const Cell cur = queue.front();
        queue.pop_front();
        if (is_frontier(cur) && cur != position) return WaypointDecision::go(cur);
        for (const Cell& off : neighbor_offsets()) {
            const Cell next = add(cur, off);
            if (!is_known_free(next) || visited[env.index(next)]) continue;
            visited[env.index(next)] = 1;
            queue.push_back(next);
        }
    }
    // Nothing left to explore and the target never showed up.
    return WaypointDecision::make_stop();
}

NavObservation observe(const NavEnv& env, AgentState& state, int radius) {
    if (radius < 1) throw ValidationError("observe: radius must be at least 1");
    if (state.observed.size() != env.cell_count()) state.observed.assign(env.cell_count(), 0);

    const Cell& pos = state.position;
    for (int dz = -radius; dz <= radius; ++dz) {
        for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                const Cell c = add(pos, {dx, dy, dz});
                if (!env.in_grid(c)) continue;
                if (state.observed[env.index(c)]) continue;
                if (line_of_sight(env, pos, c)) state.observed[env.index(c)] = 1;
            }
        }
    }

    NavObservation obs;
    obs.observed = &state.observed;
    obs.env = &env;
    if (state.observed[env.index(env.target_cell)])
        obs.labels.push_back({env.target_label, env.target_cell});
    return obs;
}

Cell local_policy(const NavEnv& env, const Cell& from, const Cell& waypoint) {
    if (!env.free_cell(from)) throw ValidationError("local_policy: from cell is not free");
    if (from == waypoint) return from;
    if (!env.in_grid(waypoint)) throw ValidationError("local_policy: waypoint outside the grid");

    const std::vector<int> dist = distance_field(env, waypoint);
    const int d = dist[env.index(from)];
    if (d == kUnreached) throw ValidationError("local_policy: waypoint unreachable");
    for (const Cell& off : neighbor_offsets()) {
        const Cell next = add(from, off);
        if (env.free_cell(next) && dist[env.index(next)] == d - 1) return next;
    }
    throw ValidationError("local_policy: inconsistent distance field");
}

std::optional<int> bfs_distance(const NavEnv& env, const Cell& from, const Cell& to) {
    if (!env.free_cell(from) || !env.free_cell(to)) return std::nullopt;
    const std::vector<int> dist = distance_field(env, to);
    const int d = dist[env.index(from)];
    if (d == kUnreached) return std::nullopt;
    return d;
}

EpisodeResult run_episode(const NavEnv& env, WaypointPolicy& policy, const EpisodeConfig& cfg) {
    env.validate();
    if (cfg.max_steps < 1) throw ValidationError("run_episode: max_steps must be at least 1");

    AgentState state;
    state.position = env.start;
    state.history.push_back(env.start);
    EpisodeResult result;
    result.trajectory.push_back(env.start);

    while (true) {
        const NavObservation obs = observe(env, state, cfg.observe_radius);
        const WaypointDecision decision = policy.decide(obs, state.position, state.history);
        if (decision.stop) {
            result.stop_reason = StopReason::kPolicyStop;
            result.success = chebyshev(state.position, env.target_cell) <= cfg.success_radius;
            return result;
        }
        if (!env.in_grid(decision.waypoint))
            throw ValidationError("run_episode: policy produced an out-of-grid waypoint");
        if (!env.free_cell(decision.waypoint) ||
            !bfs_distance(env, state.position, decision.waypoint)) {
            result.stop_reason = StopReason::kUnreachableWaypoint;
            result.success = false;
            return result;
        }
        state.position = local_policy(env, state.position, decision.waypoint);
        state.history.push_back(state.position);
        result.trajectory.push_back(state.position);
        ++result.steps;
        if (result.steps >= cfg.max_steps) {
            result.stop_reason = StopReason::kStepBudget;
            result.success = false;
            return result;
        }
    }
}

std::string env_to_json(const NavEnv& env) {
    json j;
    j["dims"] = json::array({env.dims[0], env.dims[1], env.dims[2]});
    j["cell_size"] = env.cell_size;
    j["obstacles"] = json::array();
    for (int z = 0; z < env.dims[2]; ++z)
        for (int y = 0; y < env.dims[1]; ++y)
            for (int x = 0; x < env.dims[0]; ++x)
                if (env.occupied({x, y, z})) j["obstacles"].push_back(cell_json({x, y, z}));
    j["start"] = cell_json(env.start);
    j["target"] = {{"cell", cell_json(env.target_cell)}, {"label", env.target_label}};
    return j.dump(2) + "\n";
}

NavEnv env_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("nav env json: ") + e.what());
    }
    NavEnv env;
    env.dims = {j.at("dims")[0].get<int>(), j.at("dims")[1].get<int>(),
                j.at("dims")[2].get<int>()};
    env.cell_size = j.value("cell_size", 1.0);
    env.occupancy.assign(static_cast<std::size_t>(env.dims[0]) * env.dims[1] * env.dims[2], 0);
    for (const auto& o : j.at("obstacles")) {
        const Cell c = cell_from_json(o);
        if (!env.in_grid(c)) throw ValidationError("nav env json: obstacle outside the grid");
        env.occupancy[env.index(c)] = 1;
    }
    env.start = cell_from_json(j.at("start"));
    env.target_cell = cell_from_json(j.at("target").at("cell"));
    env.target_label = j.at("target").at("label").get<std::string>();
    env.validate();
    return env;
}

void save_env(const NavEnv& env, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << env_to_json(env);
}

NavEnv load_env(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return env_from_json(ss.str());
}

std::string episode_to_json(const EpisodeResult& result) {
    json j;
    j["success"] = result.success;
    j["steps"] = result.steps;
    switch (result.stop_reason) {
        case StopReason::kPolicyStop: j["stop_reason"] = "policy_stop"; break;
        case StopReason::kStepBudget: j["stop_reason"] = "step_budget"; break;
        case StopReason::kUnreachableWaypoint: j["stop_reason"] = "unreachable_waypoint"; break;
    }
    j["trajectory"] = json::array();
    for (const Cell& c : result.trajectory) j["trajectory"].push_back(cell_json(c));
    return j.dump(2) + "\n";
}

}  // namespace f3d::nav
