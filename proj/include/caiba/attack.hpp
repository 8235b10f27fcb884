// attack.hpp
//
// Adversaries for validating the security claims empirically:
//
//   forgery_monte_carlo  MAC-level experiment: the probability that a
//                        uniform guess matches a truncated MAC is 2^-w.
//   ForgeryAttacker      wire-level forger with *partial* key material. A
//                        group member (group key only) can compute the
//                        integrity tag but must guess the source tag the
//                        authenticator will XOR in; a rogue authenticator
//                        (source keys only) can pre-compensate the source
//                        tag but must guess the integrity tag. Either way
//                        one uniform w-bit guess stands between the frame
//                        and acceptance.
//   ReplayNode           records genuine frames off the wire and retransmits
//                        them bit-identically later.
//   BitModAttacker       flips chosen payload bits in flight and patches the
//                        CRC so the frame still parses — the strongest
//                        unkeyed modifier. Armed per frame with the exact
//                        transmit image (worst-case, omniscient adversary).

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "caiba/bpmac.hpp"
#include "caiba/crypto.hpp"
#include "caiba/frame.hpp"
#include "caiba/node.hpp"
#include "caiba/roles.hpp"
#include "caiba/secoc.hpp"

namespace caiba {

struct ForgeryReport {
    unsigned tag_width = 0;
    std::uint64_t trials = 0;
    std::uint64_t successes = 0;
    double expected_mean = 0.0;  // trials * 2^-w
    double std_dev = 0.0;        // binomial sigma
};

// Draws `trials` random (message, counter) pairs, computes the truncated MAC
// under a seed-derived key, and counts how often an independent uniform
// guess hits it.
ForgeryReport forgery_monte_carlo(unsigned tag_width, std::uint64_t trials, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Wire-level forgery

struct ForgeryAttackerConfig {
    enum class Mode {
        GuessSourceTag,    // insider with the group key (masquerade)
        GuessIntegrityTag  // rogue authenticator with the source keys
    };
    Mode mode = Mode::GuessSourceTag;
    std::uint16_t target_id = 0x100;
    std::uint8_t dlc = 8;
    unsigned tag_width = kDefaultTagWidth;
    Key128 group_key{};       // GuessSourceTag
    BpMacKeys source_keys{};  // GuessIntegrityTag
    std::uint64_t attempts = 0;
    // Genuine frames to observe (counter sync) before attacking. Scenarios
    // set this to the sender's traffic so the two never contend for the id.
    std::uint64_t start_after = 0;
    std::uint64_t seed = 1;
};

class ForgeryAttacker : public CanPort {
public:
    ForgeryAttacker(std::string name, BitTiming timing, ForgeryAttackerConfig cfg);

    struct Stats {
        std::uint64_t built = 0;
        std::uint64_t completed = 0;  // reached EOF; acceptance is up to SecOC
        std::uint64_t aborted = 0;    // died on the wire (mostly CRC at receivers)
        std::uint64_t observed = 0;   // genuine frames used for counter sync
    };

    const Stats& stats() const { return stats_; }
    const ForgeryAttackerConfig& config() const { return cfg_; }
    bool done() const { return stats_.built >= cfg_.attempts && !current_.has_value(); }
    std::uint64_t last_counter() const { return last_counter_; }

protected:
    const EncodedFrame* next_tx_frame() override;
    void on_tx_done(TxEnd end) override;
    void on_frame_complete(const FrameAssembler& rx) override;
    bool tolerate_tx_mismatch(std::size_t stuffed_index) override;

private:
    void build_attempt();
    void commit_observed(const FrameAssembler& rx);

    ForgeryAttackerConfig cfg_;
    std::mt19937_64 rng_;
    std::optional<SecocContext> secoc_;
    std::optional<BpMac> bpmac_;
    std::uint64_t last_counter_ = 0;
    std::optional<EncodedFrame> current_;
    std::uint64_t current_counter_ = 0;
    Stats stats_;
};

// ---------------------------------------------------------------------------
// Replay

struct ReplayConfig {
    std::uint16_t target_id = 0x100;
    unsigned tag_width = kDefaultTagWidth;
    std::uint64_t record_limit = 64;  // distinct frames to capture
    std::uint64_t replays = 0;        // transmissions, cycling the recording
    std::uint64_t start_after = 0;    // genuine frames to let pass first
};

class ReplayNode : public CanPort {
public:
    ReplayNode(std::string name, BitTiming timing, ReplayConfig cfg);

    struct Stats {
        std::uint64_t recorded = 0;
        std::uint64_t replayed = 0;
        std::uint64_t observed = 0;
    };

    const Stats& stats() const { return stats_; }
    bool done() const { return stats_.replayed >= cfg_.replays; }

protected:
    const EncodedFrame* next_tx_frame() override;
    void on_tx_done(TxEnd end) override;
    void on_frame_complete(const FrameAssembler& rx) override;

private:
    ReplayConfig cfg_;
    std::vector<EncodedFrame> recorded_;
    std::size_t next_ = 0;
    Stats stats_;
};

// ---------------------------------------------------------------------------
// In-flight bit modification

struct BitModConfig {
    std::uint16_t target_id = 0x100;
    std::uint64_t max_attacks = ~0ull;
    std::uint64_t seed = 1;
};

class BitModAttacker : public CanPort {
public:
    BitModAttacker(std::string name, BitTiming timing, BitModConfig cfg);

    // Plans an attack on this exact frame image: picks a payload bit whose
    // flip (with the matching CRC patch) leaves the stuff pattern intact, and
    // queues the resulting wire edits. Wire images with a pending aggregation
    // override are not attackable this way and are skipped.
    void arm(const EncodedFrame& genuine);

    struct Stats {
        std::uint64_t armed = 0;
        std::uint64_t skipped = 0;        // no stuff-preserving flip found
        std::uint64_t attacked = 0;       // frames actually modified
        std::uint64_t flips_driven = 0;   // individual wire bits overridden
        std::uint64_t compensations = 0;  // self-stretch after injecting mid-bit
    };

    const Stats& stats() const { return stats_; }
    const BitModConfig& config() const { return cfg_; }

protected:
    void on_frame_bit(const FrameAssembler::Step& step) override;
    void on_early_bit(bool level) override;
    void on_frame_complete(const FrameAssembler& rx) override;
    void on_rx_error(DecodeError kind) override;

private:
    struct Edit {
        std::uint16_t can_id = 0;
        std::uint8_t dlc = 0;
        std::map<std::size_t, bool> targets;  // stuffed index -> driven value
    };

    BitModConfig cfg_;
    std::mt19937_64 rng_;
    std::deque<Edit> armed_;
    std::optional<Edit> active_;
    Stats stats_;
};

}  // namespace caiba
