// Scenario layer: JSON-configured, fully deterministic simulation runs.
//
// A scenario file describes one bus — geometry, timing, the nodes attached
// (transmitters, authenticators, receivers, legacy units, attackers), the
// traffic each transmitter generates and any injected faults.  parse_scenario
// validates the description (reporting the offending field path on error),
// Simulation builds the node graph and runs it to completion, and RunMetrics
// summarises the outcome with the invariant
//
//     frames_sent == frames_accepted + frames_rejected + frames_aborted
//
// holding by construction.  The same configuration and seed always produce
// byte-identical outputs.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "caiba/attack.hpp"
#include "caiba/phy.hpp"
#include "caiba/roles.hpp"

namespace caiba {

// Configuration rejection; `path` names the offending field, e.g.
// "nodes[2].keys.0x100.group".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const { return path_; }

private:
    std::string path_;
};

// Per-id key material as declared by one node. Which parts must be present
// is a function of the node's role: senders hold all three, receivers only
// the group part, authenticators only the source parts.
struct KeyParts {
    std::optional<Key128> group;
    std::optional<Key128> hash;
    std::optional<Key128> mask;
};

struct ScenarioConfig {
    struct SenderSpec {
        std::string name;
        double position_m = 0;
        bool legacy_only = false;  // role "legacy": no keys, unsecured traffic
        std::vector<std::uint16_t> ids;
        std::map<std::uint16_t, KeyParts> keys;
        std::vector<TrafficSpec> traffic;
        bool aggregate_source_tag = true;
        unsigned max_retransmissions = 2;
        bool tolerant_monitor = false;
        int backup_authenticator = -1;
        bool fallback_to_insecure = false;
        SenderFaults faults;
    };

    struct ReceiverSpec {
        std::string name;
        double position_m = 0;
        std::vector<std::uint16_t> secured_ids;  // ids with a declared group key
        std::vector<std::uint16_t> legacy_ids;   // subscribed without keys
        std::map<std::uint16_t, KeyParts> keys;
        bool send_reset_requests = true;
        ReceiverFaults faults;
    };

    struct AuthenticatorSpec {
        std::string name;
        double position_m = 0;
        std::uint8_t index = 0;
        std::vector<std::uint16_t> ids;     // data ids this unit holds keys for
        std::vector<std::uint16_t> active;  // initially responsible (default: ids)
        std::map<std::uint16_t, KeyParts> keys;
        std::uint64_t disable_at_quantum = 0;
        std::uint64_t disable_after_frames = 0;
    };

    struct AttackerSpec {
        enum class Kind { Masquerade, AuthForge, Replay, BitMod };
        std::string name;
        double position_m = 0;
        Kind kind = Kind::Masquerade;
        std::uint16_t target_id = 0;
        std::uint8_t dlc = 8;
        std::map<std::uint16_t, KeyParts> keys;  // what the attacker compromised
        std::uint64_t attempts = 0;              // masquerade / auth_forge
        std::uint64_t replays = 0;
        std::uint64_t record_limit = 64;
        std::uint64_t max_attacks = ~0ull;  // bitmod
        // Frames on the target id to observe before attacking; default is
        // every genuine frame the scenario's traffic generates on that id.
        std::optional<std::uint64_t> start_after;
    };

    struct JamSpec {
        std::uint64_t at_quantum = 0;
        unsigned bits = 6;
    };

    std::string name = "scenario";
    std::string description;
    double bitrate_bps = 1'000'000;
    unsigned quanta_per_bit = 10;
    unsigned sjw = 2;
    double bus_length_m = 25.0;
    double signal_speed_ns_per_m = 5.0;
    unsigned tag_width = kDefaultTagWidth;
    std::uint64_t seed = 1;
    std::uint64_t max_quanta = 2'000'000'000;
    ProtocolIds protocol;  // announce/broadcast maps filled during parsing

    std::vector<SenderSpec> senders;
    std::vector<ReceiverSpec> receivers;
    std::vector<AuthenticatorSpec> authenticators;
    std::vector<AttackerSpec> attackers;
    std::vector<JamSpec> jams;

    // Merged per-id key material, cross-checked across all declaring nodes.
    std::map<std::uint16_t, KeyParts> keys;

    // Self-checks from the file's "expect" block: metric name -> exact value.
    std::vector<std::pair<std::string, double>> expectations;

    // All genuine data frames the traffic section generates for one id.
    std::uint64_t frames_on_id(std::uint16_t can_id) const;
};

// Parses and validates a scenario description; throws ConfigError.
ScenarioConfig parse_scenario(const std::string& json_text);
ScenarioConfig load_scenario(const std::string& file_path);

struct RunMetrics {
    std::uint64_t quanta = 0;
    double quantum_ns = 0;
    double sim_ms = 0;

    std::uint64_t frames_sent = 0;      // data frames built by genuine senders
    std::uint64_t frames_accepted = 0;  // delivered and (if secured) verified
    std::uint64_t frames_rejected = 0;
    std::uint64_t frames_aborted = 0;  // dropped after the retry budget
    std::uint64_t error_frames = 0;
    std::uint64_t stuff_bits_total = 0;
    std::uint64_t flips_to_dominant = 0;  // authenticator tag-bit work
    std::uint64_t flips_to_erase = 0;
    std::uint64_t recovery_events = 0;
    std::uint64_t handover_events = 0;

    std::uint64_t receiver_accepts = 0;  // raw verdict counts across receivers
    std::uint64_t receiver_rejects = 0;
    std::uint64_t forged_accepts = 0;  // accepted frames no genuine sender built
    std::uint64_t stray_rejects = 0;   // rejected frames no genuine sender built
    std::uint64_t nonce_reuse_events = 0;
    std::uint64_t legacy_deliveries = 0;
    std::uint64_t multi_erase_quanta = 0;
    bool invariant_ok = true;
};

// Evaluates the scenario's "expect" block (plus the accounting invariant)
// against a finished run; returns one message per unmet expectation.
std::vector<std::string> unmet_expectations(const ScenarioConfig& cfg, const RunMetrics& m);

class Simulation {
public:
    // Builds the bus and all nodes; throws ConfigError on inconsistencies
    // that only surface during construction (placement, key distribution).
    explicit Simulation(ScenarioConfig cfg);
    ~Simulation();

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    // Records the per-quantum wire trace during run (and, optionally, which
    // nodes drove each quantum). Call before run().
    void enable_trace(bool record_drivers = false);

    // Ticks the bus until all traffic and attacks are finished and the wire
    // has been idle for a full interframe drain. Throws std::runtime_error
    // if max_quanta elapse first.
    const RunMetrics& run();

    const ScenarioConfig& config() const { return cfg_; }
    const RunMetrics& metrics() const { return metrics_; }
    Bus& bus();
    const SharedLog& log() const;

    // Node access for tests and callers that inspect internals.
    const std::vector<std::unique_ptr<TransmitterNode>>& senders() const;
    const std::vector<std::unique_ptr<ReceiverNode>>& receivers() const;
    const std::vector<std::unique_ptr<AuthenticatorNode>>& authenticators() const;
    TransmitterNode* sender(const std::string& name);
    ReceiverNode* receiver(const std::string& name);

    // Deterministic serialisations (no wall-clock content).
    std::string metrics_json() const;
    std::string verdicts_csv() const;
    std::string wire_trace_csv() const;  // empty unless enable_trace() was called

    // Writes metrics.json and verdicts.csv (and wire_trace.csv when traced)
    // under out_dir, creating it if needed.
    void write_outputs(const std::string& out_dir) const;

private:
    struct Impl;
    ScenarioConfig cfg_;
    RunMetrics metrics_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace caiba
