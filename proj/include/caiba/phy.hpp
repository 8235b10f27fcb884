// phy.hpp
//
// Quantum-resolution CAN bus. Time advances in time quanta; every attached
// node drives one of three levels per quantum and observes the wired-AND of
// all drives, each delayed by the signal propagation between the two
// positions. Dominant overrides recessive, as on a real bus; Erase is the
// authenticator's active-recessive overwrite, which wins over dominant.
//
// The tick is two-phase: first every node's current drive is latched into
// its history ring, then every node receives the level it observes this
// quantum. A drive set during on_quantum() therefore takes effect on the
// following quantum, which is exactly the behaviour of a transceiver that
// launches its output at the next quantum boundary.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace caiba {

constexpr bool kRecessive = true;
constexpr bool kDominant = false;

enum class DriveLevel : std::uint8_t {
    PassiveRecessive,  // not driving (bus pull-up)
    Dominant,          // actively driving dominant
    Erase,             // actively destroying a dominant level (authenticator hardware)
};

struct ResolveResult {
    bool level = kRecessive;
    std::uint8_t dominant_drivers = 0;
    std::uint8_t erase_drivers = 0;
};

// Wired-AND with erase override: any Erase forces recessive; otherwise any
// Dominant wins; an undriven bus floats recessive.
ResolveResult resolve_level(const DriveLevel* drives, std::size_t n);

// Bit timing in quanta: sync_seg(1) | prop_seg | phase_seg1 | sample | phase_seg2.
struct BitTiming {
    unsigned quanta = 10;
    unsigned prop_seg = 4;
    unsigned phase_seg1 = 3;
    unsigned phase_seg2 = 2;
    unsigned sjw = 2;

    // 1-based quantum count to the sample point (sample at its end).
    unsigned sample_index() const { return 1 + prop_seg + phase_seg1; }
    double sample_fraction() const { return static_cast<double>(sample_index()) / quanta; }

    // Split a quantum budget so the sample point lands at 70..80% of the bit.
    static BitTiming for_quanta(unsigned quanta, unsigned sjw = 2);
    void validate() const;  // throws std::invalid_argument
};

// Feasibility of the in-flight overwrite: the authenticator's modification,
// launched two quanta into the bit, must settle at the far end of the bus
// before any node's sample point.
struct TimingBudget {
    double quantum_ns = 0;
    unsigned sample_index = 0;
    double propagation_ns = 0;  // one full bus length
    double processing_ns = 0;   // read + decide + drive: three quanta
    double transceiver_ns = 0;  // RX + TX path through the transceiver
    double worst_case_ns = 0;   // sum of the three components
    double deadline_ns = 0;     // sample_index quanta
    bool feasible = false;
};

TimingBudget overwrite_budget(double bitrate_bps, unsigned quanta_per_bit, double bus_length_m,
                              double transceiver_ns, double ns_per_meter = 5.0);

// Frame-boundary and authenticator activity annotations, plus the
// zero-delay emission view of the wire, one level per quantum.
struct BusTrace {
    bool enabled = false;
    bool record_drivers = false;  // also keep per-quantum driver lists (memory-heavy)

    std::vector<std::uint8_t> emission;  // resolved level per quantum, 1 = recessive
    std::vector<std::string> drivers;    // per quantum, "name:D name:E ..." (if recorded)

    struct Event {
        std::uint64_t quantum = 0;
        std::string node;
        std::string kind;
        std::string detail;
    };
    std::vector<Event> events;

    void event(std::uint64_t quantum, std::string_view node, std::string_view kind,
               std::string_view detail = {}) {
        if (!enabled) return;
        events.push_back({quantum, std::string(node), std::string(kind), std::string(detail)});
    }
};

class Node {
public:
    virtual ~Node() = default;

    // Level observed at this node during quantum q. Any set_drive() call made
    // here takes effect at quantum q + 1.
    virtual void on_quantum(std::uint64_t q, bool level) = 0;

    virtual std::string_view name() const = 0;

    DriveLevel drive() const { return drive_; }

protected:
    void set_drive(DriveLevel d) { drive_ = d; }

private:
    DriveLevel drive_ = DriveLevel::PassiveRecessive;
};

class Bus {
public:
    explicit Bus(double quantum_ns = 125.0, double ns_per_meter = 5.0);

    // Nodes must outlive the bus. Returns the node's index.
    std::size_t attach(Node* node, double position_m);

    void tick();
    void run(std::uint64_t quanta);

    std::uint64_t now() const { return now_; }
    std::size_t node_count() const { return slots_.size(); }
    bool last_observed(std::size_t index) const { return slots_[index].observed; }
    double quantum_ns() const { return quantum_ns_; }

    // Quanta in which more than one node drove Erase; a healthy bus has at
    // most one active authenticator, so this staying zero is a diagnostic.
    std::uint64_t multi_erase_quanta() const { return multi_erase_; }

    // Most recent quantum in which any node drove the bus (dominant or
    // erase); lets a runner detect that traffic has fully drained.
    std::uint64_t last_active_quantum() const { return last_active_; }

    BusTrace trace;

    static constexpr std::size_t kMaxNodes = 32;

private:
    static constexpr std::size_t kHistory = 64;  // quanta of drive history (max delay 63)

    struct Slot {
        Node* node = nullptr;
        double position_m = 0;
        std::array<DriveLevel, kHistory> history{};  // PassiveRecessive-initialised
        bool observed = kRecessive;
    };

    void rebuild_delays();

    double quantum_ns_;
    double ns_per_meter_;
    std::vector<Slot> slots_;
    std::vector<std::vector<std::uint32_t>> delay_;  // [driver][observer], quanta
    std::uint64_t now_ = 0;
    std::uint64_t multi_erase_ = 0;
    std::uint64_t last_active_ = 0;
};

}  // namespace caiba
