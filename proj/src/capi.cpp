// C API implementation: opaque handles over the C++ core, with status codes
// and a thread-local error string.
#include "caiba/caiba.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "caiba/attack.hpp"
#include "caiba/oracles.hpp"
#include "caiba/phy.hpp"
#include "caiba/scenario.hpp"

namespace {

thread_local std::string g_last_error;

caiba_status set_error(caiba_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

caiba_status ok() {
    g_last_error.clear();
    return CAIBA_OK;
}

char* copy_string(const std::string& s) {
    char* out = static_cast<char*>(::operator new(s.size() + 1, std::nothrow));
    if (out == nullptr) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

// Maps any in-flight exception to a status + last_error message.
caiba_status from_exception() {
    try {
        throw;
    } catch (const caiba::ConfigError& e) {
        return set_error(CAIBA_ERR_CONFIG, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return set_error(CAIBA_ERR_IO, e.what());
    } catch (const std::ios_base::failure& e) {
        return set_error(CAIBA_ERR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return set_error(CAIBA_ERR_RUNTIME, "out of memory");
    } catch (const std::exception& e) {
        return set_error(CAIBA_ERR_RUNTIME, e.what());
    } catch (...) {
        return set_error(CAIBA_ERR_RUNTIME, "unknown error");
    }
}

}  // namespace

struct caiba_sim {
    caiba::ScenarioConfig cfg;
    std::unique_ptr<caiba::Simulation> sim;  // built on first run
    bool trace = false;
    bool trace_drivers = false;
    bool ran = false;
};

extern "C" {

const char* caiba_version(void) { return "1.0.0"; }

const char* caiba_last_error(void) { return g_last_error.c_str(); }

void caiba_string_free(char* s) { ::operator delete(s); }

caiba_status caiba_sim_create_from_json(const char* json_text, caiba_sim** out) {
    if (json_text == nullptr || out == nullptr) {
        return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    }
    *out = nullptr;
    try {
        auto sim = std::make_unique<caiba_sim>();
        sim->cfg = caiba::parse_scenario(json_text);
        *out = sim.release();
        return ok();
    } catch (...) {
        return from_exception();
    }
}

caiba_status caiba_sim_create_from_file(const char* path, caiba_sim** out) {
    if (path == nullptr || out == nullptr) {
        return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    }
    *out = nullptr;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return set_error(CAIBA_ERR_IO, std::string("cannot open '") + path + "'");
    }
    const std::string text((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    return caiba_sim_create_from_json(text.c_str(), out);
}

void caiba_sim_destroy(caiba_sim* sim) { delete sim; }

caiba_status caiba_sim_name(const caiba_sim* sim, const char** out) {
    if (sim == nullptr || out == nullptr) {
        return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    }
    *out = sim->cfg.name.c_str();
    return ok();
}

caiba_status caiba_sim_set_seed(caiba_sim* sim, uint64_t seed) {
    if (sim == nullptr) return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    if (sim->ran) return set_error(CAIBA_ERR_ARGUMENT, "the simulation already ran");
    sim->cfg.seed = seed;
    return ok();
}

caiba_status caiba_sim_set_tag_width(caiba_sim* sim, unsigned tag_width) {
    if (sim == nullptr) return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    if (sim->ran) return set_error(CAIBA_ERR_ARGUMENT, "the simulation already ran");
    if (tag_width != 8 && tag_width != 16 && tag_width != 24) {
        return set_error(CAIBA_ERR_ARGUMENT, "tag width must be 8, 16 or 24");
    }
    sim->cfg.tag_width = tag_width;
    return ok();
}

caiba_status caiba_sim_enable_trace(caiba_sim* sim, int record_drivers) {
    if (sim == nullptr) return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    if (sim->ran) return set_error(CAIBA_ERR_ARGUMENT, "the simulation already ran");
    sim->trace = true;
    sim->trace_drivers = record_drivers != 0;
    return ok();
}

caiba_status caiba_sim_run(caiba_sim* sim) {
    if (sim == nullptr) return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    if (sim->ran) return ok();
    try {
        sim->sim = std::make_unique<caiba::Simulation>(sim->cfg);
        if (sim->trace) sim->sim->enable_trace(sim->trace_drivers);
        sim->sim->run();
        sim->ran = true;
        return ok();
    } catch (...) {
        sim->sim.reset();
        return from_exception();
    }
}

caiba_status caiba_sim_metrics_json(const caiba_sim* sim, char** out) {
    if (sim == nullptr || out == nullptr) {
        return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    }
    *out = nullptr;
    if (!sim->ran) return set_error(CAIBA_ERR_ARGUMENT, "run the simulation first");
    try {
        *out = copy_string(sim->sim->metrics_json());
        if (*out == nullptr) return set_error(CAIBA_ERR_RUNTIME, "out of memory");
        return ok();
    } catch (...) {
        return from_exception();
    }
}

caiba_status caiba_sim_unmet_expectations(const caiba_sim* sim, char** out_text,
                                          size_t* out_count) {
    if (sim == nullptr || out_count == nullptr) {
        return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    }
    if (out_text != nullptr) *out_text = nullptr;
    *out_count = 0;
    if (!sim->ran) return set_error(CAIBA_ERR_ARGUMENT, "run the simulation first");
    try {
        const auto unmet = caiba::unmet_expectations(sim->sim->config(), sim->sim->metrics());
        *out_count = unmet.size();
        if (out_text != nullptr && !unmet.empty()) {
            std::string joined;
            for (const auto& line : unmet) {
                if (!joined.empty()) joined += '\n';
                joined += line;
            }
            *out_text = copy_string(joined);
            if (*out_text == nullptr) return set_error(CAIBA_ERR_RUNTIME, "out of memory");
        }
        return ok();
    } catch (...) {
        return from_exception();
    }
}

caiba_status caiba_sim_write_outputs(const caiba_sim* sim, const char* out_dir) {
    if (sim == nullptr || out_dir == nullptr) {
        return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    }
    if (!sim->ran) return set_error(CAIBA_ERR_ARGUMENT, "run the simulation first");
    try {
        sim->sim->write_outputs(out_dir);
        return ok();
    } catch (...) {
        return from_exception();
    }
}

caiba_status caiba_timing_budget_eval(double bitrate_bps, unsigned quanta_per_bit,
                                      double bus_length_m, double transceiver_ns,
                                      caiba_timing_budget* out) {
    if (out == nullptr) return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    if (bitrate_bps <= 0) return set_error(CAIBA_ERR_ARGUMENT, "bitrate must be positive");
    if (bus_length_m < 0) {
        return set_error(CAIBA_ERR_ARGUMENT, "bus length must be non-negative");
    }
    if (transceiver_ns < 0) {
        return set_error(CAIBA_ERR_ARGUMENT, "transceiver delay must be non-negative");
    }
    try {
        const caiba::TimingBudget b =
            caiba::overwrite_budget(bitrate_bps, quanta_per_bit, bus_length_m, transceiver_ns);
        out->quantum_ns = b.quantum_ns;
        out->propagation_ns = b.propagation_ns;
        out->processing_ns = b.processing_ns;
        out->transceiver_ns = b.transceiver_ns;
        out->worst_case_ns = b.worst_case_ns;
        out->deadline_ns = b.deadline_ns;
        out->feasible = b.feasible ? 1 : 0;
        return ok();
    } catch (const std::invalid_argument& e) {
        return set_error(CAIBA_ERR_ARGUMENT, e.what());
    } catch (...) {
        return from_exception();
    }
}

caiba_status caiba_vectors_write(const char* out_dir) {
    if (out_dir == nullptr) return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    try {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        const auto write = [&](const char* file, const std::string& text) {
            const fs::path p = fs::path(out_dir) / file;
            std::ofstream f(p, std::ios::binary | std::ios::trunc);
            if (!f) throw std::ios_base::failure("cannot write " + p.string());
            f << text;
        };
        write("crc15_vectors.json", caiba::oracles::crc15_vectors_json());
        write("cmac_vectors.json", caiba::oracles::cmac_vectors_json());
        write("bpmac_vectors.json", caiba::oracles::bpmac_vectors_json());
        return ok();
    } catch (...) {
        return from_exception();
    }
}

caiba_status caiba_forgery_monte_carlo(unsigned tag_width, uint64_t trials, uint64_t seed,
                                       caiba_forgery_report* out) {
    if (out == nullptr) return set_error(CAIBA_ERR_ARGUMENT, "null argument");
    if (tag_width == 0 || tag_width > 32) {
        return set_error(CAIBA_ERR_ARGUMENT, "tag width must be 1..32");
    }
    if (trials == 0) return set_error(CAIBA_ERR_ARGUMENT, "trials must be positive");
    try {
        const caiba::ForgeryReport r = caiba::forgery_monte_carlo(tag_width, trials, seed);
        out->tag_width = r.tag_width;
        out->trials = r.trials;
        out->successes = r.successes;
        out->expected_mean = r.expected_mean;
        out->std_dev = r.std_dev;
        return ok();
    } catch (...) {
        return from_exception();
    }
}

}  // extern "C"
