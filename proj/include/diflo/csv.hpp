#pragma once

#include <optional>
#include <string>
#include <vector>

#include "diflo/conformal.hpp"
#include "diflo/flow.hpp"
#include "diflo/ode.hpp"
#include "diflo/spiral.hpp"

namespace diflo {

// Doubles serialized with 17 significant digits for exact round-trips.
std::string fmt_g17(double v);

// Dataset file: header row "task,k,d", then rows
// id,label,c_0..c_{k-1},y_0..y_{d-1}. Target fields stay empty for OOD rows.
struct DatasetFile {
    Task task = Task::regression;
    int cond_dim = 0;
    int target_dim = 0;
    std::vector<std::string> labels;
    std::vector<Vec> conditions;
    std::vector<Vec> targets;  // empty Vec for rows without targets
};

void write_dataset_csv(const std::string& path, const DatasetFile& file);
DatasetFile read_dataset_csv(const std::string& path);

struct ScoreRow {
    int id = 0;
    std::string label;
    double s_dot = 0.0;
    std::optional<double> log_p;
};

void write_scores_csv(const std::string& path, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores_csv(const std::string& path);

void write_history_csv(const std::string& path, const std::vector<LossBreakdown>& history);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

struct LandscapeRow {
    double cx = 0.0;
    double cy = 0.0;
    double s_dot = 0.0;
    bool accepted = false;
};

void write_landscape_csv(const std::string& path, const std::vector<LandscapeRow>& rows);

// Trajectory dump: columns traj_id,step,t,x_0..x_{D-1}. The chord companion
// uses the same schema with states replaced by the straight interpolant.
void write_trajectory_csv(const std::string& path, const std::vector<Trajectory>& trajectories,
                          bool as_chord);

}  // namespace diflo
