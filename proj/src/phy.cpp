// phy.cpp — quantum bus, bit timing, overwrite feasibility.

#include "caiba/phy.hpp"

#include <cmath>
#include <stdexcept>

namespace caiba {

ResolveResult resolve_level(const DriveLevel* drives, std::size_t n) {
    ResolveResult r;
    for (std::size_t i = 0; i < n; ++i) {
        if (drives[i] == DriveLevel::Dominant) ++r.dominant_drivers;
        if (drives[i] == DriveLevel::Erase) ++r.erase_drivers;
    }
    if (r.erase_drivers > 0) {
        r.level = kRecessive;
    } else {
        r.level = (r.dominant_drivers == 0) ? kRecessive : kDominant;
    }
    return r;
}

BitTiming BitTiming::for_quanta(unsigned quanta, unsigned sjw) {
    if (quanta < 8 || quanta > 25) {
        throw std::invalid_argument("bit timing: quanta per bit must be 8..25");
    }
    BitTiming t;
    t.quanta = quanta;
    // Sample as late as the 70..80% window allows, then keep phase_seg1 just
    // wide enough for resynchronisation and give the rest to prop_seg.
    const unsigned sample = (4 * quanta) / 5;
    t.phase_seg2 = quanta - sample;
    t.phase_seg1 = std::min(t.phase_seg2 + 1, sample - 2);
    t.prop_seg = sample - 1 - t.phase_seg1;
    t.sjw = sjw;
    t.validate();
    return t;
}

void BitTiming::validate() const {
    if (quanta != 1 + prop_seg + phase_seg1 + phase_seg2) {
        throw std::invalid_argument("bit timing: segments do not add up to the bit length");
    }
    if (prop_seg < 1 || phase_seg1 < 1 || phase_seg2 < 1) {
        throw std::invalid_argument("bit timing: every segment needs at least one quantum");
    }
    if (sjw < 1 || sjw > phase_seg1 || sjw > phase_seg2) {
        throw std::invalid_argument("bit timing: sjw must be 1..min(phase_seg1, phase_seg2)");
    }
    const double f = sample_fraction();
    if (f < 0.70 || f > 0.80) {
        throw std::invalid_argument("bit timing: sample point outside the 70..80% window");
    }
}

TimingBudget overwrite_budget(double bitrate_bps, unsigned quanta_per_bit, double bus_length_m,
                              double transceiver_ns, double ns_per_meter) {
    if (bitrate_bps <= 0 || bus_length_m < 0 || transceiver_ns < 0) {
        throw std::invalid_argument("timing budget: negative or zero parameter");
    }
    const BitTiming timing = BitTiming::for_quanta(quanta_per_bit);
    TimingBudget b;
    b.quantum_ns = 1e9 / (bitrate_bps * quanta_per_bit);
    b.sample_index = timing.sample_index();
    b.propagation_ns = bus_length_m * ns_per_meter;
    b.processing_ns = 3.0 * b.quantum_ns;
    b.transceiver_ns = transceiver_ns;
    b.worst_case_ns = b.propagation_ns + b.processing_ns + b.transceiver_ns;
    b.deadline_ns = b.sample_index * b.quantum_ns;
    b.feasible = b.worst_case_ns <= b.deadline_ns;
    return b;
}

Bus::Bus(double quantum_ns, double ns_per_meter)
    : quantum_ns_(quantum_ns), ns_per_meter_(ns_per_meter) {
    if (quantum_ns <= 0 || ns_per_meter <= 0) {
        throw std::invalid_argument("bus: quantum and propagation speed must be positive");
    }
}

std::size_t Bus::attach(Node* node, double position_m) {
    if (node == nullptr) throw std::invalid_argument("bus: null node");
    if (now_ != 0) throw std::logic_error("bus: attach before the first tick");
    if (slots_.size() >= kMaxNodes) throw std::length_error("bus: too many nodes");
    Slot s;
    s.node = node;
    s.position_m = position_m;
    s.history.fill(DriveLevel::PassiveRecessive);
    slots_.push_back(std::move(s));
    rebuild_delays();
    return slots_.size() - 1;
}

void Bus::rebuild_delays() {
    const std::size_t n = slots_.size();
    delay_.assign(n, std::vector<std::uint32_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dist = std::abs(slots_[i].position_m - slots_[j].position_m);
            const auto d = static_cast<std::uint32_t>(std::ceil(dist * ns_per_meter_ / quantum_ns_));
            if (d >= kHistory) {
                throw std::invalid_argument("bus: node spacing exceeds the drive history window");
            }
            delay_[i][j] = d;
        }
    }
}

void Bus::tick() {
    const std::size_t n = slots_.size();
    const std::uint64_t t = now_;

    for (auto& s : slots_) s.history[t % kHistory] = s.node->drive();

    // Emission view: zero-delay resolution of this quantum's drives.
    DriveLevel scratch[kMaxNodes];
    for (std::size_t i = 0; i < n; ++i) scratch[i] = slots_[i].history[t % kHistory];
    const ResolveResult em = resolve_level(scratch, n);
    if (em.erase_drivers > 1) ++multi_erase_;
    if (em.dominant_drivers > 0 || em.erase_drivers > 0) last_active_ = t;
    if (trace.enabled) {
        trace.emission.push_back(em.level ? 1 : 0);
        if (trace.record_drivers) {
            std::string who;
            for (std::size_t i = 0; i < n; ++i) {
                if (scratch[i] == DriveLevel::PassiveRecessive) continue;
                if (!who.empty()) who += ' ';
                who += slots_[i].node->name();
                who += scratch[i] == DriveLevel::Dominant ? ":D" : ":E";
            }
            trace.drivers.push_back(std::move(who));
        }
    }

    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            // For t < delay the indexed slot has not been written yet this
            // epoch and still holds the PassiveRecessive it was initialised
            // with — exactly the idle bus that predates t = 0.
            scratch[i] = slots_[i].history[(t - delay_[i][j]) % kHistory];
        }
        slots_[j].observed = resolve_level(scratch, n).level;
    }

    for (std::size_t j = 0; j < n; ++j) slots_[j].node->on_quantum(t, slots_[j].observed);

    ++now_;
}

void Bus::run(std::uint64_t quanta) {
    for (std::uint64_t i = 0; i < quanta; ++i) tick();
}

}  // namespace caiba
