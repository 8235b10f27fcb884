// node.hpp
//
// CAN controller model: an incremental parser over sampled bit values
// (FrameAssembler) and a port (CanPort) that runs the bit clock on top of
// the quantum bus — hard synchronisation at SOF, phase-error
// resynchronisation, transmission with arbitration and bit monitoring,
// acknowledgement, and active error signalling.
//
// Role behaviour (sender, receiver, authenticator, attacker) hangs off a
// small set of virtual hooks; everything ISO-shaped lives here so that all
// roles share one implementation of the line protocol.

#pragma once

#include <cstdint>
#include <string>

#include "caiba/frame.hpp"
#include "caiba/phy.hpp"

namespace caiba {

// Parses one frame from sampled bit values, destuffing as it goes.
// feed() consumes the sampled value of the next bit on the wire and reports
// what that bit was; queries prefixed with next_ describe the bit that the
// following feed() will consume, which is what mid-bit logic needs.
class FrameAssembler {
public:
    enum class Section : std::uint8_t {
        Sof,
        Id,
        Rtr,
        Ide,
        R0,
        Dlc,
        Data,
        Crc,
        CrcDelim,
        AckSlot,
        AckDelim,
        Eof,
        Done,
    };

    struct Step {
        Section section = Section::Sof;  // section of the bit just consumed
        bool stuff_bit = false;
        bool value = false;
        unsigned field_index = 0;    // destuffed index within section (non-stuff bits)
        DecodeError error = DecodeError::None;
        bool crc_checked = false;    // the 15th CRC bit was just consumed
        bool receiver_valid = false; // 6th EOF bit consumed without error
        bool complete = false;       // 7th EOF bit consumed without error
    };

    FrameAssembler() { reset(); }
    void reset();

    Step feed(bool level);

    // The bit the next feed() will consume.
    Section next_section() const { return section_; }
    bool next_is_stuff() const { return in_stuff_region() && run_ == 5; }
    // Destuffed index within the current section that the next non-stuff bit
    // will occupy.
    unsigned next_field_index() const { return field_idx_; }

    std::uint16_t can_id() const { return id_; }
    std::uint8_t dlc() const { return dlc_; }
    bool crc_ok() const { return crc_ok_; }
    bool ack_seen() const { return ack_seen_; }
    const BitString& data_field() const { return data_; }
    std::size_t bits_consumed() const { return fed_; }
    // Index into the destuffed frame that the next non-stuff bit occupies.
    std::size_t unstuffed_index() const { return unstuffed_; }

private:
    bool in_stuff_region() const { return section_ <= Section::Crc; }
    void advance_run(bool level);

    Section section_ = Section::Sof;
    unsigned field_idx_ = 0;  // destuffed index within section_
    unsigned run_ = 0;        // length of the trailing identical-bit run
    bool run_val_ = kRecessive;
    bool pending_trailing_stuff_ = false;

    std::uint16_t id_ = 0;
    std::uint8_t dlc_ = 0;
    BitString data_;
    std::uint16_t crc_calc_ = 0;   // accumulated over SOF..data
    std::uint16_t crc_field_ = 0;  // received CRC sequence
    bool crc_ok_ = false;
    bool ack_seen_ = false;
    std::size_t fed_ = 0;
    std::size_t unstuffed_ = 0;
};

// Why a transmission attempt ended.
enum class TxEnd : std::uint8_t {
    Completed,
    ArbitrationLost,
    Error,  // bus error during own frame (flagged, will be retried by the role)
};

struct PortMetrics {
    std::uint64_t frames_seen = 0;       // frames this port parsed to completion
    std::uint64_t error_flags_sent = 0;  // active error flags this port initiated
    std::uint64_t stuff_errors = 0;
    std::uint64_t crc_errors = 0;
    std::uint64_t form_errors = 0;
    std::uint64_t bit_errors = 0;        // transmit/monitor mismatches treated as errors
    std::uint64_t ack_errors = 0;
    std::uint64_t arbitration_losses = 0;
    std::uint64_t resyncs = 0;           // phase adjustments applied
    std::uint64_t intermission_dominant = 0;  // diagnostic; stays 0 in healthy runs
};

class CanPort : public Node {
public:
    CanPort(std::string name, BitTiming timing);

    void on_quantum(std::uint64_t q, bool level) final;
    std::string_view name() const final { return name_; }

    const PortMetrics& port_metrics() const { return metrics_; }
    void set_trace(BusTrace* trace) { trace_ = trace; }

protected:
    // --- role hooks -------------------------------------------------------
    // Queried when the bus is free; return the image to transmit or nullptr.
    virtual const EncodedFrame* next_tx_frame() { return nullptr; }
    // The attempt for the frame above ended.
    virtual void on_tx_done(TxEnd) {}
    // Every sampled in-frame bit, own transmissions included.
    virtual void on_frame_bit(const FrameAssembler::Step&) {}
    // Phase 1 of every in-frame bit: the early read used for in-flight
    // modification. Only called while receiving someone else's frame.
    virtual void on_early_bit(bool /*level*/) {}
    // Frame became valid for receivers (6th EOF bit). Not called on own TX.
    virtual void on_receiver_valid(const FrameAssembler&) {}
    // Frame fully complete (7th EOF bit). Not called on own TX.
    virtual void on_frame_complete(const FrameAssembler&) {}
    // This port detected an error and will signal it.
    virtual void on_rx_error(DecodeError) {}
    // Driven-vs-sampled mismatch inside the data span of the transmit image;
    // return true to tolerate it (hybrid senders tolerate the tag span).
    virtual bool tolerate_tx_mismatch(std::size_t /*stuffed_index*/) { return false; }

    // --- services for roles ----------------------------------------------
    // Mid-bit drive (takes effect next quantum, released at bit end).
    void drive_override(DriveLevel d) { set_drive(d); override_active_ = true; }
    // Stretch the current bit; mirrors the resynchronisation other nodes
    // perform on an injected recessive-to-dominant edge.
    void extend_current_bit(unsigned quanta);

    const FrameAssembler& rx() const { return asm_; }
    bool transmitting() const { return transmitting_; }
    std::size_t tx_bit_index() const { return tx_index_; }
    bool prev_sample() const { return prev_sample_; }  // previous bit's sampled value
    std::uint64_t now() const { return now_; }
    unsigned bit_phase() const { return phase_; }
    const BitTiming& timing() const { return timing_; }

    // Whether this port drives a dominant ACK for frames it validates.
    bool acks_valid_frames_ = false;
    // Treat unexplained transmit mismatches as bus errors (standard CAN).
    // When false the sender logs them but keeps transmitting.
    bool monitor_errors_ = true;

    BusTrace* trace_ = nullptr;
    PortMetrics metrics_;

private:
    enum class State : std::uint8_t {
        Idle,
        InFrame,
        ErrorFlag,
        ErrorWait,
        ErrorDelim,
        Intermission,
    };

    void start_bit_clock(bool simultaneous_sof);
    void begin_tx(const EncodedFrame* tx);
    void process_frame_quantum(bool level);
    void aux_quantum(bool level);
    void end_of_bit(bool level);
    void handle_sample(bool level);
    void fail_frame(DecodeError kind);
    void enter_intermission();

    std::string name_;
    BitTiming timing_;
    State state_ = State::Idle;

    // Bit clock.
    unsigned phase_ = 0;
    unsigned bit_len_ = 0;
    unsigned sample_phase_ = 0;
    bool pre_frame_ = false;  // TX armed, next quantum is SOF phase 0
    bool resync_done_ = false;
    bool prev_level_ = kRecessive;   // previous quantum's level (edge detection)
    bool prev_sample_ = kRecessive;  // previous bit's sampled value
    bool sample_value_ = kRecessive; // most recent sampled value (this bit included)

    FrameAssembler asm_;
    bool transmitting_ = false;
    const EncodedFrame* tx_ = nullptr;
    const BitString* tx_image_ = nullptr;
    std::size_t tx_index_ = 0;

    bool crc_ok_ = false;
    bool error_pending_ = false;
    DecodeError error_kind_ = DecodeError::None;
    bool frame_over_ = false;
    bool override_active_ = false;

    unsigned flag_bits_ = 0;
    unsigned delim_bits_ = 0;
    unsigned intermission_bits_ = 0;

    std::uint64_t now_ = 0;
};

}  // namespace caiba
