#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cldc/errors.hpp"
#include "cldc/rng.hpp"

namespace cldc::envs {

// Gridworld task sequences where every task shares the same grid and reward
// and differs only in which actions are available.

enum class Family { Oriented, Omni };
enum class Situation { Expansion, Contraction, ExpansionContraction, ContractionExpansion, Custom };
enum class GoalRule { OppositeCorner, ReachableRandom };
enum class Orientation { North = 0, East = 1, South = 2, West = 3 };

Family family_from_tag(const std::string& tag);
Situation situation_from_tag(const std::string& tag);
std::string to_tag(Family f);
std::string to_tag(Situation s);

/// The full, ordered action vocabulary of a family. Tasks activate subsets;
/// indices into the catalog are stable across every task of a family.
struct ActionCatalog {
    Family family;
    std::vector<std::string> names;

    int size() const { return static_cast<int>(names.size()); }

    // oriented: turn_left, turn_right, forward, move_left, move_right,
    //           forward_left, forward_right
    static const ActionCatalog& oriented();
    // omni: stay, up, down, left, right, up_left, up_right, down_left, down_right
    static const ActionCatalog& omni();
    static const ActionCatalog& of(Family f);
};

/// Subset of a catalog active in one task, as a mask over catalog indices.
struct ActionSpace {
    const ActionCatalog* catalog = nullptr;
    std::vector<std::uint8_t> active;

    int count() const;
    int catalog_size() const { return catalog ? catalog->size() : 0; }
    bool is_active(int a) const;
    std::vector<int> active_indices() const;
};

/// First n catalog actions. The built-in sequences all use nested prefixes.
ActionSpace prefix_space(const ActionCatalog& catalog, int n);
ActionSpace index_space(const ActionCatalog& catalog, const std::vector<int>& indices);

struct GridConfig {
    int width = 8;
    int height = 8;
    int max_episode_steps = 0;          // 0 resolves to 4 * width * height
    std::string obs_encoding = "onehot";  // only supported encoding

    int horizon() const { return max_episode_steps > 0 ? max_episode_steps : 4 * width * height; }
    void validate() const;
};

struct TaskSpec {
    int index = 1;  // 1-based position in the sequence
    GridConfig grid;
    Family family = Family::Oriented;
    GoalRule goal_rule = GoalRule::OppositeCorner;
    ActionSpace actions;
    long train_steps = 0;
    double reward_min = 0.0;  // declared reward range, for return normalization
    double reward_max = 1.0;
};

struct SequenceSpec {
    Family family = Family::Oriented;
    Situation situation = Situation::Expansion;
    GridConfig grid;
    std::vector<TaskSpec> tasks;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(tasks.size()); }
    void validate() const;  // shared grid, consecutive sets differ, nesting
};

/// Built-in action-set schedules: sizes per task for a situation and family,
/// e.g. oriented expansion = [3, 5, 7].
std::vector<int> situation_sizes(Situation s, Family f);

/// Assemble a sequence from a built-in situation. `budgets` holds the
/// per-task training budget; a single entry is broadcast to all tasks.
SequenceSpec build_sequence(Situation situation, Family family, const GridConfig& grid,
                            const std::vector<long>& budgets, std::uint64_t seed);

/// Custom sequence from explicit catalog-index sets.
SequenceSpec build_custom_sequence(Family family, const GridConfig& grid,
                                   const std::vector<std::vector<int>>& action_sets,
                                   const std::vector<long>& budgets, std::uint64_t seed);

struct GridState {
    int x = 0;
    int y = 0;
    Orientation dir = Orientation::East;  // fixed North for the omni family
    int goal_x = 0;
    int goal_y = 0;
    int t = 0;
    bool done = false;
};

struct ResetResult {
    GridState state;
    std::vector<double> observation;
};

struct StepResult {
    GridState state;
    std::vector<double> observation;
    double reward = 0.0;
    bool done = false;
};

/// Observation length: one-hot position + one-hot orientation (oriented
/// family only) + one-hot goal.
std::size_t obs_dim(const TaskSpec& task);

std::vector<double> encode_observation(const GridState& state, const TaskSpec& task);

/// Start a fresh episode. Oriented tasks start at the fixed corner (0,0)
/// facing East with the goal at the opposite corner. Omni tasks draw the
/// start uniformly and the goal uniformly from cells reachable under the
/// task's active actions, excluding the start.
ResetResult env_reset(const TaskSpec& task, std::uint64_t episode_seed);

/// One transition. Moves that would leave the grid (including diagonals) do
/// not change position; turns always succeed. Reward 1 - 0.9 * t / H on
/// reaching the goal, 0 otherwise; the episode ends at the goal or at t = H.
/// The outcome depends only on (state, action, grid): no step randomness, so
/// shared actions behave identically in every task of a sequence.
StepResult env_step(const GridState& state, int action, const TaskSpec& task);

/// Cells reachable from `start` by repeated application of the active
/// actions. Oriented reachability explores (cell, orientation) pairs from
/// every starting orientation and projects out the cells.
std::vector<std::pair<int, int>> reachable_cells(const GridConfig& grid,
                                                 const ActionSpace& actions, int start_x,
                                                 int start_y);

/// Map a raw episode return onto [0, 1] using the task's declared range.
double normalize_return(double raw, const TaskSpec& task);

}  // namespace cldc::envs
