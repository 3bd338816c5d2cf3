#include "diflo/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace diflo {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("csv: cannot open " + path + " for writing");
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_dataset_csv(const std::string& path, const DatasetFile& file) {
    auto out = open_out(path);
    out << to_string(file.task) << ',' << file.cond_dim << ',' << file.target_dim << '\n';
    for (std::size_t i = 0; i < file.conditions.size(); ++i) {
        out << i << ',' << file.labels[i];
        for (int j = 0; j < file.cond_dim; ++j) out << ',' << fmt_g17(file.conditions[i](j));
        const bool has_target = file.targets[i].size() == file.target_dim;
        for (int j = 0; j < file.target_dim; ++j) {
            out << ',';
            if (has_target) out << fmt_g17(file.targets[i](j));
        }
        out << '\n';
    }
}

DatasetFile read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty dataset file " + path);
    const auto header = split_fields(line);
    if (header.size() != 3) throw std::runtime_error("csv: bad dataset header in " + path);

    DatasetFile file;
    file.task = task_from_string(header[0]);
    file.cond_dim = std::stoi(header[1]);
    file.target_dim = std::stoi(header[2]);

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        const std::size_t expected = 2 + file.cond_dim + file.target_dim;
        if (fields.size() != expected) {
            throw std::runtime_error("csv: row with " + std::to_string(fields.size()) +
                                     " fields, expected " + std::to_string(expected));
        }
        file.labels.push_back(fields[1]);
        Vec c(file.cond_dim);
        for (int j = 0; j < file.cond_dim; ++j) c(j) = std::stod(fields[2 + j]);
        file.conditions.push_back(std::move(c));

        if (fields[2 + file.cond_dim].empty()) {
            file.targets.emplace_back();
        } else {
            Vec y(file.target_dim);
            for (int j = 0; j < file.target_dim; ++j) {
                y(j) = std::stod(fields[2 + file.cond_dim + j]);
            }
            file.targets.push_back(std::move(y));
        }
    }
    return file;
}

void write_scores_csv(const std::string& path, const std::vector<ScoreRow>& rows) {
    auto out = open_out(path);
    out << "id,label,s_dot,log_p\n";
    for (const ScoreRow& row : rows) {
        out << row.id << ',' << row.label << ',' << fmt_g17(row.s_dot) << ',';
        if (row.log_p) out << fmt_g17(*row.log_p);
        out << '\n';
    }
}

std::vector<ScoreRow> read_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "id,label,s_dot,log_p") {
        throw std::runtime_error("csv: bad scores header in " + path);
    }
    std::vector<ScoreRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != 4) throw std::runtime_error("csv: bad scores row in " + path);
        ScoreRow row;
        row.id = std::stoi(fields[0]);
        row.label = fields[1];
        row.s_dot = std::stod(fields[2]);
        if (!fields[3].empty()) row.log_p = std::stod(fields[3]);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_history_csv(const std::string& path, const std::vector<LossBreakdown>& history) {
    auto out = open_out(path);
    out << "iter,fm,repel,curve,total\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        out << i << ',' << fmt_g17(history[i].fm) << ',' << fmt_g17(history[i].repel) << ','
            << fmt_g17(history[i].curve) << ',' << fmt_g17(history[i].total) << '\n';
    }
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    auto out = open_out(path);
    out << "alpha,coverage,fpr\n";
    for (const SweepRow& row : rows) {
        out << fmt_g17(row.alpha) << ',' << fmt_g17(row.empirical_coverage) << ','
            << fmt_g17(row.fpr) << '\n';
    }
}

void write_landscape_csv(const std::string& path, const std::vector<LandscapeRow>& rows) {
    auto out = open_out(path);
    out << "cx,cy,s_dot,accepted\n";
    for (const LandscapeRow& row : rows) {
        out << fmt_g17(row.cx) << ',' << fmt_g17(row.cy) << ',' << fmt_g17(row.s_dot) << ','
            << (row.accepted ? "true" : "false") << '\n';
    }
}

void write_trajectory_csv(const std::string& path, const std::vector<Trajectory>& trajectories,
                          bool as_chord) {
    auto out = open_out(path);
    const int dim = trajectories.empty() ? 0 : static_cast<int>(trajectories[0].states[0].size());
    out << "traj_id,step,t";
    for (int d = 0; d < dim; ++d) out << ",x_" << d;
    out << '\n';
    for (std::size_t id = 0; id < trajectories.size(); ++id) {
        const Trajectory& traj = trajectories[id];
        for (std::size_t i = 0; i < traj.states.size(); ++i) {
            const double t = traj.times[i];
            const Vec state =
                as_chord ? Vec((1.0 - t) * traj.x0() + t * traj.x1_hat()) : traj.states[i];
            out << id << ',' << i << ',' << fmt_g17(t);
            for (int d = 0; d < dim; ++d) out << ',' << fmt_g17(state(d));
            out << '\n';
        }
    }
}

}  // namespace diflo
