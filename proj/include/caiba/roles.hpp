// roles.hpp
//
// Protocol roles on top of CanPort:
//
//   TransmitterNode   owns the per-ID counters, builds secured frames whose
//                     emitted tag field carries integrity_tag XOR source_tag,
//                     monitors the sampled tag region against the integrity
//                     tag to detect a dead authenticator, and runs the
//                     counter-reset and handover procedures.
//   ReceiverNode      an unmodified SecOC endpoint: reconstructs the
//                     freshness value, verifies the truncated integrity MAC,
//                     requests a counter reset after five consecutive
//                     failures, and refreshes its counter from secured
//                     broadcast frames.
//   AuthenticatorNode holds the source keys, recomputes the source tag from
//                     the early-read bits of every responsible frame, and
//                     flips tag bits on the wire so that receivers sample the
//                     plain integrity tag.
//
// A SharedLog ties runs together for attribution: every genuine build is
// recorded by the sender, every verdict by the receivers, and an Accept that
// matches no genuine build is a forged accept.

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "caiba/bpmac.hpp"
#include "caiba/crypto.hpp"
#include "caiba/frame.hpp"
#include "caiba/node.hpp"
#include "caiba/secoc.hpp"

namespace caiba {

// FNV-1a over the app-data bits; used only to match verdicts to builds.
std::uint64_t app_hash(const BitString& app);

// Fixed identifiers of the management frames. Management traffic uses
// high-priority identifiers so recovery wins arbitration against data.
struct ProtocolIds {
    // Base id of counter-reset requests. Each requester transmits on
    // reset_request + its own index so that two receivers asking at the same
    // instant still resolve in arbitration instead of colliding.
    std::uint16_t reset_request = 0x010;  // unsecured: target id (16) || requester (8)
    std::uint16_t handover = 0x020;       // unsecured: backup authenticator index (8)
    static constexpr unsigned kMaxRequesters = 16;

    bool is_reset_request(std::uint16_t id) const {
        return id >= reset_request && id < reset_request + kMaxRequesters;
    }
    std::map<std::uint16_t, std::uint16_t> announce;   // data id -> counter-announce id
    std::map<std::uint16_t, std::uint16_t> broadcast;  // data id -> counter-broadcast id
};

struct ChannelKeys {
    Key128 group{};      // integrity-tag key (every group member has it)
    BpMacKeys source{};  // source-authentication keys (sender + authenticator only)
};

struct SentRecord {
    std::uint64_t seq = 0;
    std::string sender;
    std::uint16_t can_id = 0;
    std::uint64_t counter = 0;
    std::uint64_t hash = 0;
    bool secured = false;
    bool data = false;        // application frame (not protocol control traffic)
    bool superseded = false;  // re-secured before reaching the wire (counter reset)
};

struct VerdictRecord {
    std::uint64_t quantum = 0;
    std::string receiver;
    std::uint16_t can_id = 0;
    std::uint64_t counter = 0;
    std::uint64_t hash = 0;
    bool accepted = false;
    bool secured = true;  // a legacy delivery is not an authentication claim
    std::string detail;
};

class SharedLog {
public:
    // Records a build. Returns false (and counts a nonce reuse) if this
    // (id, counter) pair was already used with different content.
    bool record_sent(const std::string& sender, std::uint16_t can_id, std::uint64_t counter,
                     std::uint64_t hash, bool secured, bool data);
    // Marks a recorded build as never reaching the wire in that form (the
    // frame was rebuilt with fresh freshness after a counter reset).
    void record_superseded(std::uint16_t can_id, std::uint64_t counter);
    void record_verdict(VerdictRecord v);

    bool genuine(std::uint16_t can_id, std::uint64_t counter, std::uint64_t hash) const;

    const std::vector<SentRecord>& sent() const { return sent_; }
    const std::vector<VerdictRecord>& verdicts() const { return verdicts_; }
    std::uint64_t nonce_reuse_events() const { return nonce_reuse_; }
    std::uint64_t forged_accepts() const { return forged_accepts_; }
    std::uint64_t accepts() const { return accepts_; }
    std::uint64_t rejects() const { return rejects_; }

private:
    std::vector<SentRecord> sent_;
    std::vector<VerdictRecord> verdicts_;
    std::map<std::pair<std::uint16_t, std::uint64_t>, std::uint64_t> used_;
    std::uint64_t nonce_reuse_ = 0;
    std::uint64_t forged_accepts_ = 0;
    std::uint64_t accepts_ = 0;
    std::uint64_t rejects_ = 0;
};

// ---------------------------------------------------------------------------
// Transmitter

struct TrafficSpec {
    TrafficSpec() = default;
    TrafficSpec(std::uint16_t id, std::uint8_t dlc_, std::uint64_t frames_, bool secured_,
                std::uint64_t period = 0)
        : can_id(id), dlc(dlc_), frames(frames_), secured(secured_), period_bits(period) {}

    std::uint16_t can_id = 0x100;
    std::uint8_t dlc = 8;
    std::uint64_t frames = 0;
    bool secured = true;          // false: legacy frame, whole data field is app data
    std::uint64_t period_bits = 0;  // minimum spacing between builds; 0 = back to back
    std::vector<std::uint8_t> payload;  // fixed app payload; empty = fresh random bits
};

// Fault injection for reproducing failure modes.
struct SenderFaults {
    std::uint16_t counter_jump_id = 0;    // 0 = disabled
    std::uint64_t counter_jump_after = 0; // jump before building frame #N (0-based) on the id
    std::uint64_t counter_jump_delta = 0;
};

struct TransmitterConfig {
    std::vector<TrafficSpec> traffic;
    std::map<std::uint16_t, ChannelKeys> keys;  // every secured id, broadcast ids included
    ProtocolIds protocol;
    unsigned tag_width = kDefaultTagWidth;
    // CAIBA aggregation: emit integrity^source in the tag field and rely on
    // the authenticator. False = plain SecOC (tag field carries the
    // integrity tag directly).
    bool aggregate_source_tag = true;
    unsigned max_retransmissions = 2;
    bool tolerant_monitor = false;  // do not error-flag unexplained TX mismatches
    int backup_authenticator = -1;  // index announced in a handover; -1 = none
    bool fallback_to_insecure = false;
    SenderFaults faults;
    std::uint64_t seed = 1;
    // Observation hook invoked for every data frame as it is built (attack
    // harnesses use it to arm an in-flight modifier with the exact image).
    std::function<void(const EncodedFrame&)> built_hook;
};

class TransmitterNode : public CanPort {
public:
    TransmitterNode(std::string name, BitTiming timing, TransmitterConfig cfg, SharedLog* log);

    struct Stats {
        std::uint64_t built = 0;           // data frames built (counters consumed)
        std::uint64_t completed = 0;       // data frames that completed on the wire
        std::uint64_t aborted = 0;         // data frames dropped after the retry budget
        std::uint64_t retransmissions = 0;
        std::uint64_t healthy_tag_regions = 0;
        std::uint64_t faulty_tag_regions = 0;
        std::uint64_t auth_inactive_events = 0;
        std::uint64_t handovers_sent = 0;
        std::uint64_t no_backup_events = 0;
        std::uint64_t fallback_frames = 0;
        std::uint64_t counter_resets = 0;
        std::uint64_t counter_exhausted = 0;
    };

    const Stats& stats() const { return stats_; }
    bool done() const;
    std::uint64_t next_counter(std::uint16_t id) const;

protected:
    const EncodedFrame* next_tx_frame() override;
    void on_tx_done(TxEnd end) override;
    void on_frame_bit(const FrameAssembler::Step& step) override;
    void on_receiver_valid(const FrameAssembler& rx) override;
    bool tolerate_tx_mismatch(std::size_t stuffed_index) override;

private:
    struct Outgoing {
        EncodedFrame image;
        bool caiba = false;  // secured frame with an aggregated tag field
        std::uint32_t integrity_tag = 0;
        std::uint64_t counter = 0;
        unsigned attempts = 0;
        bool counts_as_data = false;
        std::uint16_t completes_reset = 0;  // data id whose reset this broadcast finishes
    };

    bool build_data_frame();  // false if all traffic is exhausted
    Outgoing make_secured(std::uint16_t id, std::uint8_t dlc, const BitString& app,
                          bool data_frame);
    void perform_counter_reset(std::uint16_t id);
    void finish_tag_region(bool healthy);
    void pop_current();

    TransmitterConfig cfg_;
    SharedLog* log_;
    std::mt19937_64 rng_;
    std::map<std::uint16_t, std::uint64_t> next_counter_;
    std::map<std::uint16_t, SecocContext> secoc_;
    std::map<std::uint16_t, BpMac> bpmac_;
    std::map<std::uint16_t, std::uint64_t> built_on_id_;

    std::deque<Outgoing> control_queue_;
    std::deque<Outgoing> data_queue_;
    Outgoing* current_ = nullptr;
    bool current_is_control_ = false;

    std::vector<std::uint64_t> sent_per_spec_;
    std::vector<std::uint64_t> due_quantum_;
    std::size_t next_spec_ = 0;

    bool tag_region_ok_ = true;
    unsigned faulty_streak_ = 0;
    bool auth_inactive_ = false;
    bool insecure_fallback_ = false;
    std::set<std::uint16_t> resets_in_flight_;
    Stats stats_;
};

// ---------------------------------------------------------------------------
// Receiver

struct SubscriptionSpec {
    std::uint16_t can_id = 0;
    bool secured = true;
    unsigned tag_width = kDefaultTagWidth;
    Key128 group_key{};
};

// Fault injection: the SecOC stack misses a window of frames (node reboot,
// queue overflow) while the port itself keeps acknowledging. This is the
// standard way a receiver's freshness value falls behind the sender's.
struct ReceiverFaults {
    std::uint16_t deaf_id = 0;     // 0 = disabled
    std::uint64_t deaf_after = 0;  // frames processed on deaf_id before going deaf
    std::uint64_t deaf_count = 0;  // frames ignored while deaf
};

struct ReceiverConfig {
    std::vector<SubscriptionSpec> subscriptions;
    ProtocolIds protocol;
    std::uint8_t request_index = 0;
    bool send_reset_requests = true;
    unsigned max_retransmissions = 2;
    ReceiverFaults faults;
};

class ReceiverNode : public CanPort {
public:
    ReceiverNode(std::string name, BitTiming timing, ReceiverConfig cfg, SharedLog* log);

    struct Stats {
        std::uint64_t accepts = 0;
        std::uint64_t rejects = 0;
        std::uint64_t legacy_frames = 0;
        std::uint64_t reset_requests_sent = 0;
        std::uint64_t recoveries_started = 0;
        std::uint64_t recoveries_completed = 0;
        std::uint64_t broadcast_refreshes = 0;
    };

    const Stats& stats() const { return stats_; }
    const ReceiverChannelState& channel(std::uint16_t id) const;
    bool in_recovery(std::uint16_t id) const;

protected:
    const EncodedFrame* next_tx_frame() override;
    void on_tx_done(TxEnd end) override;
    void on_receiver_valid(const FrameAssembler& rx) override;

private:
    struct Channel {
        SecocContext ctx;
        ReceiverChannelState state;
        unsigned tag_width = kDefaultTagWidth;
        bool in_recovery = false;
        bool recovery_mine = false;  // this receiver asked (not just observed a request)
        std::uint16_t refreshes_data_id = 0;  // nonzero: a counter-broadcast channel
    };

    void queue_reset_request(std::uint16_t data_id);

    ReceiverConfig cfg_;
    SharedLog* log_;
    std::map<std::uint16_t, Channel> channels_;
    std::set<std::uint16_t> legacy_ids_;
    std::deque<EncodedFrame> requests_;
    unsigned request_attempts_ = 0;
    std::uint64_t deaf_seen_ = 0;
    Stats stats_;
};

// ---------------------------------------------------------------------------
// Authenticator

struct AuthenticatorConfig {
    std::map<std::uint16_t, ChannelKeys> keys;  // channels this unit can authenticate
    std::vector<std::uint16_t> active_ids;      // initially responsible subset
    ProtocolIds protocol;
    unsigned tag_width = kDefaultTagWidth;
    std::uint8_t index = 0;               // named by handover frames
    std::uint64_t disable_at_quantum = 0;   // fault: stop modifying from this time on
    std::uint64_t disable_after_frames = 0; // fault: stop after observing N frames
};

class AuthenticatorNode : public CanPort {
public:
    AuthenticatorNode(std::string name, BitTiming timing, AuthenticatorConfig cfg);

    struct Stats {
        std::uint64_t sessions = 0;
        std::uint64_t flips_dominant = 0;
        std::uint64_t erases = 0;
        std::uint64_t compensations = 0;
        std::uint64_t tag_bits_passed = 0;
        std::uint64_t commits = 0;
        std::uint64_t announce_refreshes = 0;
        std::uint64_t adoptions = 0;
        std::uint64_t discarded_sessions = 0;
    };

    const Stats& stats() const { return stats_; }
    std::uint64_t last_counter(std::uint16_t id) const;
    bool responsible_for(std::uint16_t id) const { return responsible_.count(id) != 0; }

protected:
    void on_frame_bit(const FrameAssembler::Step& step) override;
    void on_early_bit(bool level) override;
    void on_frame_complete(const FrameAssembler& rx) override;
    void on_rx_error(DecodeError kind) override;

private:
    struct Session {
        bool tracking = false;  // keyed id: reconstruct and commit the counter
        bool active = false;    // responsible and enabled: compute and modify
        std::uint16_t id = 0;
        unsigned app_len = 0;
        unsigned tag_lo = 0;    // first tag bit's index within the data field
        std::uint8_t lsb = 0;
        std::uint64_t counter = 0;
        bool have_counter = false;
        std::uint32_t source_tag = 0;
        bool have_tag = false;
    };

    void reset_session();

    AuthenticatorConfig cfg_;
    std::map<std::uint16_t, BpMac> bpmac_;
    std::map<std::uint16_t, std::uint16_t> announce_to_data_;
    std::set<std::uint16_t> responsible_;
    std::map<std::uint16_t, std::uint64_t> last_counter_;
    std::uint64_t frames_observed_ = 0;
    Session s_;
    Stats stats_;
};

}  // namespace caiba
