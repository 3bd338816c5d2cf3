// Acceptance gate: runs the full benchmark reproduction at the desk profile,
// the numerical-core property suite, and the determinism check, printing one
// PASS/FAIL line per criterion. Exit code = number of failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "diflo/experiment.hpp"
#include "support/props.hpp"

using namespace diflo;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& id, const std::string& description, bool pass,
            const std::string& detail) {
    std::printf("[%s] criterion %-10s %s (%s)\n", pass ? "PASS" : "FAIL", id.c_str(),
                description.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string out_root() {
    const char* env = std::getenv("DIFLO_ACCEPT_DIR");
    if (env && *env) return env;
    return (fs::temp_directory_path() / "diflo_acceptance").string();
}

}  // namespace

int main() {
    const std::string root = out_root();
    fs::create_directories(root);
    std::cerr << "[acceptance] artifacts under " << root << "\n";

    // Criterion 6 first: the numerical core property suite must finish fast.
    {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool pass = true;
        pass = pass && testing::check_gradients(100, detail);
        pass = pass && testing::check_rk4_order(detail);
        pass = pass && testing::check_dot_constant_field(detail);
        pass = pass && testing::check_hutchinson_linear(detail);
        pass = pass && testing::check_auroc_oracle(50, detail);
        pass = pass && testing::check_conformal_indices(1000, detail);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs >= 60.0) {
            pass = false;
            detail += " suite exceeded 60 s";
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.1f s", secs);
        report("6", "numerical core property suite (< 60 s)", pass,
               detail.empty() ? std::string(buf) : detail + "; " + buf);
    }

    // One full desk-scale reproduction run drives criteria 1-5 and 7.
    std::cerr << "[acceptance] running the desk-scale reproduction (seed 42)...\n";
    const ReproReport repro = cmd_repro_table1({}, false, 42, root + "/repro");
    for (const CriterionResult& c : repro.criteria) {
        if (c.id == "6" || c.id == "8") continue;  // evaluated here, not in the repro run
        report(c.id, c.description, c.pass, c.detail);
    }

    // Criterion 8: byte-identical reports across reruns with the same seed.
    // Determinism is scale-free, so this uses a reduced iteration budget; the
    // pipeline is identical end to end.
    {
        std::cerr << "[acceptance] determinism check (reduced profile, seed 42)...\n";
        const ConfigMap reduced = {
            {"iterations", "150"}, {"hidden", "32"},      {"n_cal", "120"},
            {"n_id_test", "100"},  {"n_ood", "100"},      {"ode_steps", "16"},
            {"mse_conditions", "16"}, {"pred_samples", "4"}, {"n_probes", "4"},
            {"energy_conditions", "32"}, {"energy_mc", "4"},
        };
        const ReproReport a = cmd_repro_table1(reduced, false, 42, root + "/det-a");
        const ReproReport b = cmd_repro_table1(reduced, false, 42, root + "/det-b");
        const bool pass = a.report_json == b.report_json && !a.report_json.empty();
        report("8", "repro-table1 twice with seed 42 produces byte-identical metric JSON", pass,
               pass ? "reports identical" : "reports differ");
    }

    std::printf("%s: %d criterion failure(s)\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures;
}
