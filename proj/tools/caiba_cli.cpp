// Command-line front end. Talks to the simulator exclusively through the
// public C API; everything else here is argument handling and printing.
//
// Exit codes: 0 on success, 1 when a run violates the scenario's
// expectations (or a feasibility check fails), 2 on configuration errors.
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "caiba/caiba.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitConfig = 2;

struct RunOptions {
    std::vector<std::string> configs;
    std::string out_dir;
    bool trace = false;
    bool trace_drivers = false;
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> tag_width;
};

struct RunResult {
    std::string config_path;
    std::string lines;  // fully formatted report for this scenario
    int exit_class = kExitOk;
};

// Runs one scenario on the calling thread and formats its report.
RunResult run_one(const RunOptions& opt, const std::string& path, bool single) {
    RunResult res;
    res.config_path = path;

    caiba_sim* sim = nullptr;
    const caiba_status created = caiba_sim_create_from_file(path.c_str(), &sim);
    if (created != CAIBA_OK) {
        res.exit_class = kExitConfig;
        res.lines = path + ": " + caiba_last_error() + "\n";
        return res;
    }

    const char* name = nullptr;
    caiba_sim_name(sim, &name);
    const std::string scenario = name;

    if ((opt.seed && caiba_sim_set_seed(sim, *opt.seed) != CAIBA_OK) ||
        (opt.tag_width && caiba_sim_set_tag_width(sim, *opt.tag_width) != CAIBA_OK) ||
        (opt.trace && caiba_sim_enable_trace(sim, opt.trace_drivers ? 1 : 0) != CAIBA_OK)) {
        res.exit_class = kExitConfig;
        res.lines = scenario + ": " + caiba_last_error() + "\n";
        caiba_sim_destroy(sim);
        return res;
    }

    if (caiba_sim_run(sim) != CAIBA_OK) {
        res.exit_class = kExitAssertion;
        res.lines = scenario + ": " + caiba_last_error() + "\n";
        caiba_sim_destroy(sim);
        return res;
    }

    char* metrics_text = nullptr;
    if (caiba_sim_metrics_json(sim, &metrics_text) != CAIBA_OK) {
        res.exit_class = kExitAssertion;
        res.lines = scenario + ": " + caiba_last_error() + "\n";
        caiba_sim_destroy(sim);
        return res;
    }
    const nlohmann::json m = nlohmann::json::parse(metrics_text);
    caiba_string_free(metrics_text);

    char* unmet_text = nullptr;
    size_t unmet = 0;
    caiba_sim_unmet_expectations(sim, &unmet_text, &unmet);

    const auto& totals = m["totals"];
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "%s: sent %llu, accepted %llu, rejected %llu, aborted %llu, sim %.3f ms %s\n",
                  scenario.c_str(),
                  totals["frames_sent"].get<unsigned long long>(),
                  totals["frames_accepted"].get<unsigned long long>(),
                  totals["frames_rejected"].get<unsigned long long>(),
                  totals["frames_aborted"].get<unsigned long long>(),
                  m["run"]["sim_ms"].get<double>(), unmet == 0 ? "[OK]" : "[FAIL]");
    res.lines = buf;
    if (unmet_text != nullptr) {
        std::string text = unmet_text;
        caiba_string_free(unmet_text);
        std::size_t start = 0;
        while (start < text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string::npos) end = text.size();
            res.lines += "  " + text.substr(start, end - start) + "\n";
            start = end + 1;
        }
    }
    if (unmet != 0) res.exit_class = kExitAssertion;

    if (!opt.out_dir.empty()) {
        // A single scenario writes into --out directly; several get one
        // subdirectory each so their outputs cannot collide.
        const std::string dir =
            single ? opt.out_dir
                   : (std::filesystem::path(opt.out_dir) / scenario).string();
        if (caiba_sim_write_outputs(sim, dir.c_str()) != CAIBA_OK) {
            res.exit_class = kExitConfig;
            res.lines += std::string("  ") + caiba_last_error() + "\n";
        } else {
            res.lines += "  outputs: " + dir + "\n";
        }
    }

    caiba_sim_destroy(sim);
    return res;
}

int cmd_run(const RunOptions& opt) {
    const bool single = opt.configs.size() == 1;
    std::vector<RunResult> results(opt.configs.size());

    const unsigned jobs =
        std::max(1u, std::min<unsigned>(opt.jobs,
                                        static_cast<unsigned>(opt.configs.size())));
    if (jobs == 1) {
        for (std::size_t i = 0; i < opt.configs.size(); ++i) {
            results[i] = run_one(opt, opt.configs[i], single);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < opt.configs.size();
                     i = next.fetch_add(1)) {
                    results[i] = run_one(opt, opt.configs[i], single);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    int exit_code = kExitOk;
    for (const auto& r : results) {
        std::fputs(r.lines.c_str(), r.exit_class == kExitOk ? stdout : stderr);
        exit_code = std::max(exit_code, r.exit_class);
    }
    return exit_code;
}

int cmd_timing_budget(double bitrate, double length_m, double transceiver_ns,
                      unsigned quanta) {
    caiba_timing_budget b;
    if (caiba_timing_budget_eval(bitrate, quanta, length_m, transceiver_ns, &b) != CAIBA_OK) {
        std::fprintf(stderr, "timing-budget: %s\n", caiba_last_error());
        return kExitConfig;
    }
    std::printf("bitrate:      %.0f bit/s (%u quanta of %.1f ns)\n", bitrate, quanta,
                b.quantum_ns);
    std::printf("propagation:  %.1f ns  (%.1f m end to end)\n", b.propagation_ns, length_m);
    std::printf("processing:   %.1f ns\n", b.processing_ns);
    std::printf("transceiver:  %.1f ns\n", b.transceiver_ns);
    std::printf("worst case:   %.1f ns\n", b.worst_case_ns);
    std::printf("deadline:     %.1f ns  (latest sample point)\n", b.deadline_ns);
    std::printf("verdict:      %s\n", b.feasible ? "PASS" : "FAIL");
    return b.feasible ? kExitOk : kExitAssertion;
}

int cmd_vectors(const std::string& out_dir) {
    if (caiba_vectors_write(out_dir.c_str()) != CAIBA_OK) {
        std::fprintf(stderr, "vectors: %s\n", caiba_last_error());
        return kExitConfig;
    }
    std::printf(
        "wrote crc15_vectors.json, cmac_vectors.json, bpmac_vectors.json to %s\n",
        out_dir.c_str());
    return kExitOk;
}

int cmd_forgery(unsigned tag_width, std::uint64_t trials, std::uint64_t seed) {
    caiba_forgery_report r;
    if (caiba_forgery_monte_carlo(tag_width, trials, seed, &r) != CAIBA_OK) {
        std::fprintf(stderr, "forgery: %s\n", caiba_last_error());
        return kExitConfig;
    }
    std::printf("tag width %u: %llu/%llu forgeries accepted (expected %.3f, sigma %.3f)\n",
                r.tag_width, static_cast<unsigned long long>(r.successes),
                static_cast<unsigned long long>(r.trials), r.expected_mean, r.std_dev);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("caiba-cli ") + caiba_version() +
                 " — quantum-resolution CAN simulator with in-flight tag aggregation"};
    app.require_subcommand(1);

    RunOptions run_opt;
    CLI::App* run = app.add_subcommand("run", "Run one or more scenario files");
    run->add_option("configs", run_opt.configs, "Scenario JSON files")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--out", run_opt.out_dir,
                    "Write metrics.json/verdicts.csv here (per-scenario subdirectories "
                    "when several configs are given)");
    run->add_flag("--trace", run_opt.trace, "Record the wire trace (adds wire_trace.csv)");
    run->add_flag("--trace-drivers", run_opt.trace_drivers,
                  "With --trace: also record which nodes drove each quantum");
    run->add_option("--jobs", run_opt.jobs, "Scenarios to run concurrently (one per thread)")
        ->check(CLI::Range(1u, 64u));
    std::uint64_t seed_value = 0;
    CLI::Option* seed_opt =
        run->add_option("--seed", seed_value, "Override the scenario seed");
    unsigned width_value = 0;
    CLI::Option* width_opt =
        run->add_option("--tag-width", width_value, "Override the tag width")
            ->check(CLI::IsMember({8u, 16u, 24u}));

    double tb_bitrate = 1e6, tb_length = 25.0, tb_transceiver = 210.0;
    unsigned tb_quanta = 10;
    CLI::App* budget = app.add_subcommand(
        "timing-budget", "Check feasibility of the in-flight tag overwrite");
    budget->add_option("--bitrate", tb_bitrate, "Bus bitrate in bit/s")->required();
    budget->add_option("--length", tb_length, "Bus length in metres")->required();
    budget->add_option("--transceiver-ns", tb_transceiver,
                       "Transceiver RX+TX delay in nanoseconds");
    budget->add_option("--quanta", tb_quanta, "Time quanta per bit");

    std::string vectors_out;
    CLI::App* vectors =
        app.add_subcommand("vectors", "Regenerate the golden test vector files");
    vectors->add_option("--out", vectors_out, "Output directory")->required();

    unsigned fg_width = 24;
    std::uint64_t fg_trials = 10000, fg_seed = 1;
    CLI::App* forgery = app.add_subcommand(
        "forgery", "Monte-carlo estimate of the blind forgery acceptance rate");
    forgery->add_option("--tag-width", fg_width, "MAC truncation width in bits")
        ->check(CLI::Range(1u, 32u));
    forgery->add_option("--trials", fg_trials, "Number of forgery attempts");
    forgery->add_option("--seed", fg_seed, "RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (*seed_opt) run_opt.seed = seed_value;
    if (*width_opt) run_opt.tag_width = width_value;

    if (run->parsed()) return cmd_run(run_opt);
    if (budget->parsed()) {
        return cmd_timing_budget(tb_bitrate, tb_length, tb_transceiver, tb_quanta);
    }
    if (vectors->parsed()) return cmd_vectors(vectors_out);
    if (forgery->parsed()) return cmd_forgery(fg_width, fg_trials, fg_seed);
    return kExitConfig;
}
