// unit_phy.cpp — level resolution, bit timing, overwrite budget, bus delays.

#include <stdexcept>
#include <vector>

#include "doctest.h"

#include "caiba/phy.hpp"

using namespace caiba;

namespace {

// Drives a fixed level during quanta [from, to). set_drive() inside
// on_quantum(q) takes effect at q + 1, so the window is armed one early.
class ScriptedDriver : public Node {
public:
    ScriptedDriver(std::string name, DriveLevel level, std::uint64_t from, std::uint64_t to)
        : name_(std::move(name)), level_(level), from_(from), to_(to) {}

    void on_quantum(std::uint64_t q, bool level) override {
        observed.push_back(level);
        const std::uint64_t next = q + 1;
        set_drive(next >= from_ && next < to_ ? level_ : DriveLevel::PassiveRecessive);
    }

    std::string_view name() const override { return name_; }

    std::vector<bool> observed;

private:
    std::string name_;
    DriveLevel level_;
    std::uint64_t from_, to_;
};

class Probe : public Node {
public:
    explicit Probe(std::string name) : name_(std::move(name)) {}
    void on_quantum(std::uint64_t, bool level) override { observed.push_back(level); }
    std::string_view name() const override { return name_; }
    std::vector<bool> observed;

private:
    std::string name_;
};

}  // namespace

TEST_CASE("resolve_level: wired-AND with erase override") {
    auto resolve = [](std::initializer_list<DriveLevel> ds) {
        std::vector<DriveLevel> v(ds);
        return resolve_level(v.data(), v.size());
    };
    CHECK(resolve({}).level == kRecessive);
    CHECK(resolve({DriveLevel::PassiveRecessive}).level == kRecessive);
    CHECK(resolve({DriveLevel::Dominant}).level == kDominant);
    CHECK(resolve({DriveLevel::Dominant, DriveLevel::PassiveRecessive}).level == kDominant);
    CHECK(resolve({DriveLevel::Dominant, DriveLevel::Erase}).level == kRecessive);
    CHECK(resolve({DriveLevel::Erase}).level == kRecessive);
    const auto r = resolve({DriveLevel::Dominant, DriveLevel::Dominant, DriveLevel::Erase});
    CHECK(r.dominant_drivers == 2);
    CHECK(r.erase_drivers == 1);
}

TEST_CASE("default bit timing: 10 quanta, sample at 80%") {
    const BitTiming t;
    CHECK(t.quanta == 10);
    CHECK(t.prop_seg == 4);
    CHECK(t.phase_seg1 == 3);
    CHECK(t.phase_seg2 == 2);
    CHECK(t.sample_index() == 8);
    CHECK(t.sample_fraction() == doctest::Approx(0.8));
    CHECK_NOTHROW(t.validate());
}

TEST_CASE("for_quanta splits the 70..80% window") {
    const auto t10 = BitTiming::for_quanta(10);
    CHECK(t10.sample_index() == 8);
    CHECK(t10.prop_seg == 4);
    CHECK(t10.phase_seg1 == 3);
    CHECK(t10.phase_seg2 == 2);

    const auto t8 = BitTiming::for_quanta(8);
    CHECK(t8.sample_index() == 6);
    CHECK(t8.phase_seg2 == 2);
    CHECK(t8.sample_fraction() == doctest::Approx(0.75));

    for (unsigned q = 8; q <= 25; ++q) {
        const auto t = BitTiming::for_quanta(q);
        CHECK(t.sample_fraction() >= 0.70);
        CHECK(t.sample_fraction() <= 0.80);
    }
    CHECK_THROWS_AS(BitTiming::for_quanta(4), std::invalid_argument);
}

TEST_CASE("bit timing validation") {
    BitTiming t;
    t.sjw = 3;  // exceeds phase_seg2
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t = BitTiming{};
    t.prop_seg = 5;  // segments no longer sum to the bit length
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("overwrite budget: reference deployment is feasible") {
    // 1 Mbit/s, 8 quanta of 125 ns, 25 m bus, 210 ns transceiver path.
    const auto b = overwrite_budget(1e6, 8, 25.0, 210.0);
    CHECK(b.quantum_ns == doctest::Approx(125.0));
    CHECK(b.sample_index == 6);
    CHECK(b.propagation_ns == doctest::Approx(125.0));
    CHECK(b.processing_ns == doctest::Approx(375.0));
    CHECK(b.transceiver_ns == doctest::Approx(210.0));
    CHECK(b.worst_case_ns == doctest::Approx(710.0));
    CHECK(b.deadline_ns == doctest::Approx(750.0));
    CHECK(b.feasible);
}

TEST_CASE("overwrite budget: an overlong bus is reported infeasible") {
    const auto b = overwrite_budget(1e6, 8, 100.0, 210.0);
    CHECK(b.worst_case_ns == doctest::Approx(1085.0));
    CHECK_FALSE(b.feasible);
}

TEST_CASE("bus: propagation delay rounds up to whole quanta") {
    // 125 ns quanta at 5 ns/m: 50 m is exactly 2 quanta, 30 m rounds up to 2.
    Bus bus(125.0, 5.0);
    ScriptedDriver tx("tx", DriveLevel::Dominant, 10, 15);
    Probe near("near"), far("far");
    bus.attach(&tx, 0.0);
    bus.attach(&near, 30.0);
    bus.attach(&far, 50.0);
    bus.run(30);

    // The driver sees itself with no delay.
    for (std::uint64_t q = 0; q < 30; ++q) {
        CHECK(tx.observed[q] == ((q >= 10 && q < 15) ? kDominant : kRecessive));
        CHECK(near.observed[q] == ((q >= 12 && q < 17) ? kDominant : kRecessive));
        CHECK(far.observed[q] == ((q >= 12 && q < 17) ? kDominant : kRecessive));
    }
}

TEST_CASE("bus: erase defeats a dominant driver in flight") {
    Bus bus(125.0, 5.0);
    ScriptedDriver tx("tx", DriveLevel::Dominant, 5, 25);
    ScriptedDriver eraser("eraser", DriveLevel::Erase, 15, 20);
    Probe probe("probe");
    bus.attach(&tx, 0.0);
    bus.attach(&eraser, 0.0);
    bus.attach(&probe, 25.0);  // 125 ns -> 1 quantum away
    bus.run(30);

    for (std::uint64_t q = 0; q < 30; ++q) {
        const bool dominant_at_source = q >= 5 && q < 25 && !(q >= 15 && q < 20);
        CHECK(probe.observed[q] == ((q >= 6 && q < 26 && !(q >= 16 && q < 21)) ? kDominant
                                                                               : kRecessive));
        CHECK(tx.observed[q] == (dominant_at_source ? kDominant : kRecessive));
    }
    CHECK(bus.multi_erase_quanta() == 0);
}

TEST_CASE("bus: concurrent erasers are counted") {
    Bus bus(125.0, 5.0);
    ScriptedDriver a("a", DriveLevel::Erase, 5, 8);
    ScriptedDriver b("b", DriveLevel::Erase, 6, 9);
    bus.attach(&a, 0.0);
    bus.attach(&b, 0.0);
    bus.run(12);
    CHECK(bus.multi_erase_quanta() == 2);  // quanta 6 and 7
}

TEST_CASE("bus: trace records the emission view") {
    Bus bus(125.0, 5.0);
    bus.trace.enabled = true;
    ScriptedDriver tx("tx", DriveLevel::Dominant, 3, 6);
    bus.attach(&tx, 0.0);
    bus.run(8);
    REQUIRE(bus.trace.emission.size() == 8);
    for (std::uint64_t q = 0; q < 8; ++q) {
        CHECK(bus.trace.emission[q] == ((q >= 3 && q < 6) ? 0 : 1));
    }
}

TEST_CASE("bus: attach constraints") {
    Bus bus(125.0, 5.0);
    Probe p("p");
    CHECK_THROWS_AS(bus.attach(nullptr, 0.0), std::invalid_argument);
    bus.attach(&p, 0.0);
    Probe q("q");
    CHECK_THROWS_AS(bus.attach(&q, 10'000.0), std::invalid_argument);  // beyond history window
    bus.tick();
    CHECK_THROWS_AS(bus.attach(&q, 1.0), std::logic_error);
}
