#include "cldc/envs.hpp"

#include <algorithm>
#include <queue>

namespace cldc::envs {

Family family_from_tag(const std::string& tag) {
    if (tag == "oriented") return Family::Oriented;
    if (tag == "omni") return Family::Omni;
    throw ConfigError("unknown family tag: " + tag);
}

Situation situation_from_tag(const std::string& tag) {
    if (tag == "expansion") return Situation::Expansion;
    if (tag == "contraction") return Situation::Contraction;
    if (tag == "expansion_contraction") return Situation::ExpansionContraction;
    if (tag == "contraction_expansion") return Situation::ContractionExpansion;
    if (tag == "custom") return Situation::Custom;
    throw ConfigError("unknown situation tag: " + tag);
}

std::string to_tag(Family f) { return f == Family::Oriented ? "oriented" : "omni"; }

std::string to_tag(Situation s) {
    switch (s) {
        case Situation::Expansion: return "expansion";
        case Situation::Contraction: return "contraction";
        case Situation::ExpansionContraction: return "expansion_contraction";
        case Situation::ContractionExpansion: return "contraction_expansion";
        case Situation::Custom: return "custom";
    }
    throw ConfigError("bad situation enum");
}

const ActionCatalog& ActionCatalog::oriented() {
    static const ActionCatalog c{
        Family::Oriented,
        {"turn_left", "turn_right", "forward", "move_left", "move_right", "forward_left",
         "forward_right"},
    };
    return c;
}

const ActionCatalog& ActionCatalog::omni() {
    static const ActionCatalog c{
        Family::Omni,
        {"stay", "up", "down", "left", "right", "up_left", "up_right", "down_left",
         "down_right"},
    };
    return c;
}

const ActionCatalog& ActionCatalog::of(Family f) {
    return f == Family::Oriented ? oriented() : omni();
}

int ActionSpace::count() const {
    int n = 0;
    for (auto v : active) n += v ? 1 : 0;
    return n;
}

bool ActionSpace::is_active(int a) const {
    return a >= 0 && a < static_cast<int>(active.size()) && active[a] != 0;
}

std::vector<int> ActionSpace::active_indices() const {
    std::vector<int> idx;
    for (int a = 0; a < static_cast<int>(active.size()); ++a)
        if (active[a]) idx.push_back(a);
    return idx;
}

ActionSpace prefix_space(const ActionCatalog& catalog, int n) {
    if (n < 1 || n > catalog.size())
        throw ConfigError("action set size " + std::to_string(n) + " out of range for catalog");
    ActionSpace s;
    s.catalog = &catalog;
    s.active.assign(catalog.size(), 0);
    for (int a = 0; a < n; ++a) s.active[a] = 1;
    return s;
}

ActionSpace index_space(const ActionCatalog& catalog, const std::vector<int>& indices) {
    if (indices.empty()) throw ConfigError("action set must be nonempty");
    ActionSpace s;
    s.catalog = &catalog;
    s.active.assign(catalog.size(), 0);
    for (int a : indices) {
        if (a < 0 || a >= catalog.size())
            throw ConfigError("action index " + std::to_string(a) + " outside catalog");
        if (s.active[a]) throw ConfigError("duplicate action index " + std::to_string(a));
        s.active[a] = 1;
    }
    return s;
}

void GridConfig::validate() const {
    if (width < 2 || height < 2) throw ConfigError("grid must be at least 2x2");
    if (max_episode_steps < 0) throw ConfigError("max_episode_steps must be >= 0");
    if (obs_encoding != "onehot")
        throw ConfigError("unsupported observation encoding: " + obs_encoding);
}

void SequenceSpec::validate() const {
    grid.validate();
    if (tasks.empty()) throw ConfigError("sequence has no tasks");
    const ActionCatalog& cat = ActionCatalog::of(family);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const TaskSpec& t = tasks[i];
        if (t.index != static_cast<int>(i) + 1) throw ConfigError("task indices must be 1..N");
        if (t.family != family) throw ConfigError("task family differs from sequence family");
        if (t.grid.width != grid.width || t.grid.height != grid.height ||
            t.grid.max_episode_steps != grid.max_episode_steps)
            throw ConfigError("all tasks in a sequence must share the grid config");
        if (t.actions.catalog != &cat) throw ConfigError("task catalog mismatch");
        if (t.actions.count() == 0) throw ConfigError("task has empty action set");
        if (t.train_steps <= 0) throw ConfigError("task budget must be positive");
        if (i > 0 && t.actions.active == tasks[i - 1].actions.active)
            throw ConfigError("consecutive tasks must differ in their action sets");
    }
    auto nested = [](const ActionSpace& small, const ActionSpace& big) {
        for (std::size_t a = 0; a < small.active.size(); ++a)
            if (small.active[a] && !big.active[a]) return false;
        return true;
    };
    if (situation == Situation::Expansion) {
        for (std::size_t i = 1; i < tasks.size(); ++i)
            if (!nested(tasks[i - 1].actions, tasks[i].actions))
                throw ConfigError("expansion requires nested action sets");
    } else if (situation == Situation::Contraction) {
        for (std::size_t i = 1; i < tasks.size(); ++i)
            if (!nested(tasks[i].actions, tasks[i - 1].actions))
                throw ConfigError("contraction requires nested action sets");
    }
}

std::vector<int> situation_sizes(Situation s, Family f) {
    int full = f == Family::Oriented ? 7 : 9;
    switch (s) {
        case Situation::Expansion: return {3, 5, full};
        case Situation::Contraction: return {full, 5, 3};
        case Situation::ExpansionContraction: return {3, full, 5};
        case Situation::ContractionExpansion: return {5, 3, full};
        case Situation::Custom:
            throw ConfigError("custom situation requires explicit action sets");
    }
    throw ConfigError("bad situation enum");
}

namespace {

SequenceSpec assemble(Family family, Situation situation, const GridConfig& grid,
                      const std::vector<ActionSpace>& spaces, const std::vector<long>& budgets,
                      std::uint64_t seed) {
    grid.validate();
    if (budgets.empty()) throw ConfigError("budgets must be nonempty");
    if (budgets.size() != 1 && budgets.size() != spaces.size())
        throw ConfigError("budgets must have one entry or one per task");
    SequenceSpec seq;
    seq.family = family;
    seq.situation = situation;
    seq.grid = grid;
    seq.seed = seed;
    for (std::size_t i = 0; i < spaces.size(); ++i) {
        TaskSpec t;
        t.index = static_cast<int>(i) + 1;
        t.grid = grid;
        t.family = family;
        t.goal_rule = family == Family::Oriented ? GoalRule::OppositeCorner
                                                 : GoalRule::ReachableRandom;
        t.actions = spaces[i];
        t.train_steps = budgets.size() == 1 ? budgets[0] : budgets[i];
        seq.tasks.push_back(std::move(t));
    }
    seq.validate();
    return seq;
}

}  // namespace

SequenceSpec build_sequence(Situation situation, Family family, const GridConfig& grid,
                            const std::vector<long>& budgets, std::uint64_t seed) {
    const ActionCatalog& cat = ActionCatalog::of(family);
    std::vector<ActionSpace> spaces;
    for (int n : situation_sizes(situation, family)) spaces.push_back(prefix_space(cat, n));
    return assemble(family, situation, grid, spaces, budgets, seed);
}

SequenceSpec build_custom_sequence(Family family, const GridConfig& grid,
                                   const std::vector<std::vector<int>>& action_sets,
                                   const std::vector<long>& budgets, std::uint64_t seed) {
    const ActionCatalog& cat = ActionCatalog::of(family);
    std::vector<ActionSpace> spaces;
    for (const auto& set : action_sets) spaces.push_back(index_space(cat, set));
    return assemble(family, Situation::Custom, grid, spaces, budgets, seed);
}

std::size_t obs_dim(const TaskSpec& task) {
    std::size_t cells = static_cast<std::size_t>(task.grid.width) * task.grid.height;
    return 2 * cells + (task.family == Family::Oriented ? 4 : 0);
}

std::vector<double> encode_observation(const GridState& state, const TaskSpec& task) {
    int w = task.grid.width;
    std::size_t cells = static_cast<std::size_t>(w) * task.grid.height;
    std::vector<double> obs(obs_dim(task), 0.0);
    obs[static_cast<std::size_t>(state.y) * w + state.x] = 1.0;
    std::size_t off = cells;
    if (task.family == Family::Oriented) {
        obs[off + static_cast<std::size_t>(state.dir)] = 1.0;
        off += 4;
    }
    obs[off + static_cast<std::size_t>(state.goal_y) * w + state.goal_x] = 1.0;
    return obs;
}

namespace {

struct Delta {
    int dx = 0;
    int dy = 0;
};

// screen coordinates: x grows East, y grows South; "up" decreases y
Delta dir_vec(Orientation d) {
    switch (d) {
        case Orientation::North: return {0, -1};
        case Orientation::East: return {1, 0};
        case Orientation::South: return {0, 1};
        case Orientation::West: return {-1, 0};
    }
    return {0, 0};
}

Orientation ccw(Orientation d) { return static_cast<Orientation>((static_cast<int>(d) + 3) % 4); }
Orientation cw(Orientation d) { return static_cast<Orientation>((static_cast<int>(d) + 1) % 4); }

// effect of an action: possibly new orientation, possibly a translation
struct Effect {
    Orientation dir;
    Delta move;
};

Effect oriented_effect(Orientation dir, int action) {
    Delta f = dir_vec(dir);
    Delta l = dir_vec(ccw(dir));
    Delta r = dir_vec(cw(dir));
    switch (action) {
        case 0: return {ccw(dir), {0, 0}};                    // turn_left
        case 1: return {cw(dir), {0, 0}};                     // turn_right
        case 2: return {dir, f};                              // forward
        case 3: return {dir, l};                              // move_left
        case 4: return {dir, r};                              // move_right
        case 5: return {dir, {f.dx + l.dx, f.dy + l.dy}};     // forward_left
        case 6: return {dir, {f.dx + r.dx, f.dy + r.dy}};     // forward_right
    }
    throw IllegalActionError("oriented action index out of range");
}

Effect omni_effect(Orientation dir, int action) {
    static const Delta deltas[9] = {
        {0, 0},  {0, -1}, {0, 1},  {-1, 0}, {1, 0},
        {-1, -1}, {1, -1}, {-1, 1}, {1, 1},
    };
    if (action < 0 || action > 8) throw IllegalActionError("omni action index out of range");
    return {dir, deltas[action]};
}

}  // namespace

ResetResult env_reset(const TaskSpec& task, std::uint64_t episode_seed) {
    task.grid.validate();
    GridState s;
    s.t = 0;
    s.done = false;
    if (task.goal_rule == GoalRule::OppositeCorner) {
        s.x = 0;
        s.y = 0;
        s.dir = Orientation::East;
        s.goal_x = task.grid.width - 1;
        s.goal_y = task.grid.height - 1;
    } else {
        rng::Stream rng(episode_seed);
        s.dir = Orientation::North;
        s.x = static_cast<int>(rng.uniform_index(task.grid.width));
        s.y = static_cast<int>(rng.uniform_index(task.grid.height));
        auto cells = reachable_cells(task.grid, task.actions, s.x, s.y);
        std::erase_if(cells, [&](const auto& c) { return c.first == s.x && c.second == s.y; });
        if (cells.empty())
            throw ConfigError("no reachable goal cell under the active action set");
        auto pick = cells[rng.uniform_index(cells.size())];
        s.goal_x = pick.first;
        s.goal_y = pick.second;
    }
    return {s, encode_observation(s, task)};
}

StepResult env_step(const GridState& state, int action, const TaskSpec& task) {
    if (state.done) throw IllegalActionError("env_step on a finished episode");
    if (!task.actions.is_active(action))
        throw IllegalActionError("action " + std::to_string(action) +
                                 " is not active in this task");
    Effect e = task.family == Family::Oriented ? oriented_effect(state.dir, action)
                                               : omni_effect(state.dir, action);
    GridState next = state;
    next.dir = e.dir;
    int nx = state.x + e.move.dx;
    int ny = state.y + e.move.dy;
    if (nx >= 0 && nx < task.grid.width && ny >= 0 && ny < task.grid.height) {
        next.x = nx;
        next.y = ny;
    }
    next.t = state.t + 1;
    int horizon = task.grid.horizon();
    bool at_goal = next.x == next.goal_x && next.y == next.goal_y;
    double reward = 0.0;
    if (at_goal) reward = 1.0 - 0.9 * static_cast<double>(next.t) / horizon;
    next.done = at_goal || next.t >= horizon;
    return {next, encode_observation(next, task), reward, next.done};
}

std::vector<std::pair<int, int>> reachable_cells(const GridConfig& grid,
                                                 const ActionSpace& actions, int start_x,
                                                 int start_y) {
    Family fam = actions.catalog->family;
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(grid.width) * grid.height, 0);
    std::vector<std::pair<int, int>> out;
    std::queue<std::pair<int, int>> frontier;
    auto visit = [&](int x, int y) {
        std::size_t idx = static_cast<std::size_t>(y) * grid.width + x;
        if (seen[idx]) return;
        seen[idx] = 1;
        out.emplace_back(x, y);
        frontier.emplace(x, y);
    };
    visit(start_x, start_y);
    // Oriented reachability tracks orientation too; positions are projected
    // out at the end. Omni moves ignore orientation entirely.
    if (fam == Family::Omni) {
        while (!frontier.empty()) {
            auto [x, y] = frontier.front();
            frontier.pop();
            for (int a = 0; a < actions.catalog_size(); ++a) {
                if (!actions.is_active(a)) continue;
                Effect e = omni_effect(Orientation::North, a);
                int nx = x + e.move.dx;
                int ny = y + e.move.dy;
                if (nx >= 0 && nx < grid.width && ny >= 0 && ny < grid.height) visit(nx, ny);
            }
        }
        return out;
    }
    std::vector<std::uint8_t> seen_sd(seen.size() * 4, 0);
    std::queue<std::tuple<int, int, Orientation>> fr;
    while (!frontier.empty()) frontier.pop();
    out.clear();
    std::fill(seen.begin(), seen.end(), 0);
    auto visit_sd = [&](int x, int y, Orientation d) {
        std::size_t pidx = static_cast<std::size_t>(y) * grid.width + x;
        std::size_t idx = pidx * 4 + static_cast<std::size_t>(d);
        if (seen_sd[idx]) return;
        seen_sd[idx] = 1;
        if (!seen[pidx]) {
            seen[pidx] = 1;
            out.emplace_back(x, y);
        }
        fr.emplace(x, y, d);
    };
    for (int d = 0; d < 4; ++d) visit_sd(start_x, start_y, static_cast<Orientation>(d));
    while (!fr.empty()) {
        auto [x, y, d] = fr.front();
        fr.pop();
        for (int a = 0; a < actions.catalog_size(); ++a) {
            if (!actions.is_active(a)) continue;
            Effect e = oriented_effect(d, a);
            int nx = x + e.move.dx;
            int ny = y + e.move.dy;
            if (nx < 0 || nx >= grid.width || ny < 0 || ny >= grid.height) {
                nx = x;
                ny = y;
            }
            visit_sd(nx, ny, e.dir);
        }
    }
    return out;
}

double normalize_return(double raw, const TaskSpec& task) {
    if (task.reward_max == task.reward_min)
        throw ConfigError("reward range is degenerate (r_max == r_min)");
    return (raw - task.reward_min) / (task.reward_max - task.reward_min);
}

}  // namespace cldc::envs
