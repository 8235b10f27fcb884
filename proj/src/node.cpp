// node.cpp — frame parsing and the port state machine.

#include "caiba/node.hpp"

#include <algorithm>

namespace caiba {

// ---------------------------------------------------------------------------
// FrameAssembler

namespace {

inline void crc15_push(std::uint16_t& crc, bool bit) {
    const bool crcnxt = bit != (((crc >> 14) & 1u) != 0);
    crc = static_cast<std::uint16_t>((crc << 1) & 0x7fffu);
    if (crcnxt) crc = static_cast<std::uint16_t>(crc ^ kCrc15Poly);
}

}  // namespace

void FrameAssembler::reset() {
    section_ = Section::Sof;
    field_idx_ = 0;
    run_ = 0;
    run_val_ = kRecessive;
    pending_trailing_stuff_ = false;
    id_ = 0;
    dlc_ = 0;
    data_ = BitString();
    crc_calc_ = 0;
    crc_field_ = 0;
    crc_ok_ = false;
    ack_seen_ = false;
    fed_ = 0;
    unstuffed_ = 0;
}

void FrameAssembler::advance_run(bool level) {
    if (run_ > 0 && level == run_val_) {
        ++run_;
    } else {
        run_ = 1;
        run_val_ = level;
    }
}

FrameAssembler::Step FrameAssembler::feed(bool level) {
    Step step;
    step.value = level;
    step.section = section_;
    step.field_index = field_idx_;
    ++fed_;

    if (in_stuff_region()) {
        if (run_ == 5) {
            // Expected stuff bit: the complement of the five preceding bits.
            step.stuff_bit = true;
            if (level == run_val_) {
                step.error = DecodeError::StuffError;
                return step;
            }
            run_ = 1;
            run_val_ = level;
            if (pending_trailing_stuff_) {
                pending_trailing_stuff_ = false;
                section_ = Section::CrcDelim;
                field_idx_ = 0;
            }
            return step;
        }
        advance_run(level);
        ++unstuffed_;
        switch (section_) {
            case Section::Sof:
                if (level == kRecessive) {
                    // No frame after all; the port treats this as a glitch.
                    step.error = DecodeError::FormError;
                    return step;
                }
                crc15_push(crc_calc_, level);
                section_ = Section::Id;
                field_idx_ = 0;
                break;
            case Section::Id:
                id_ = static_cast<std::uint16_t>((id_ << 1) | (level ? 1u : 0u));
                crc15_push(crc_calc_, level);
                if (++field_idx_ == kCanIdBits) {
                    section_ = Section::Rtr;
                    field_idx_ = 0;
                }
                break;
            case Section::Rtr:
            case Section::Ide:
            case Section::R0:
                if (level == kRecessive) {
                    // Remote and extended-format frames are not modelled.
                    step.error = DecodeError::FormError;
                    return step;
                }
                crc15_push(crc_calc_, level);
                section_ = section_ == Section::Rtr   ? Section::Ide
                           : section_ == Section::Ide ? Section::R0
                                                      : Section::Dlc;
                field_idx_ = 0;
                break;
            case Section::Dlc:
                dlc_ = static_cast<std::uint8_t>((dlc_ << 1) | (level ? 1u : 0u));
                crc15_push(crc_calc_, level);
                if (++field_idx_ == 4) {
                    if (dlc_ > 8) {
                        step.error = DecodeError::FormError;
                        return step;
                    }
                    section_ = dlc_ > 0 ? Section::Data : Section::Crc;
                    field_idx_ = 0;
                }
                break;
            case Section::Data:
                data_.push_back(level);
                crc15_push(crc_calc_, level);
                if (++field_idx_ == 8u * dlc_) {
                    section_ = Section::Crc;
                    field_idx_ = 0;
                }
                break;
            case Section::Crc:
                crc_field_ = static_cast<std::uint16_t>((crc_field_ << 1) | (level ? 1u : 0u));
                if (++field_idx_ == 15) {
                    crc_ok_ = crc_field_ == crc_calc_;
                    step.crc_checked = true;
                    if (run_ == 5) {
                        // One more stuff bit is due before the CRC delimiter.
                        pending_trailing_stuff_ = true;
                    } else {
                        section_ = Section::CrcDelim;
                        field_idx_ = 0;
                    }
                }
                break;
            default:
                break;  // unreachable: tail sections are not in the stuff region
        }
        return step;
    }

    // Fixed-form tail: no stuffing, not covered by the CRC.
    ++unstuffed_;
    switch (section_) {
        case Section::CrcDelim:
            if (level == kDominant) {
                step.error = DecodeError::FormError;
                return step;
            }
            section_ = Section::AckSlot;
            break;
        case Section::AckSlot:
            ack_seen_ = level == kDominant;
            section_ = Section::AckDelim;
            break;
        case Section::AckDelim:
            if (level == kDominant) {
                step.error = DecodeError::FormError;
                return step;
            }
            section_ = Section::Eof;
            field_idx_ = 0;
            break;
        case Section::Eof:
            if (level == kDominant) {
                step.error = DecodeError::FormError;
                return step;
            }
            if (field_idx_ == kEofBits - 2) step.receiver_valid = true;
            if (field_idx_ == kEofBits - 1) {
                step.complete = true;
                section_ = Section::Done;
            }
            ++field_idx_;
            break;
        case Section::Done:
        default:
            step.error = DecodeError::FormError;
            return step;
    }
    return step;
}

// ---------------------------------------------------------------------------
// CanPort

CanPort::CanPort(std::string name, BitTiming timing)
    : name_(std::move(name)), timing_(timing) {
    timing_.validate();
    bit_len_ = timing_.quanta;
    sample_phase_ = timing_.sample_index() - 1;
}

void CanPort::on_quantum(std::uint64_t q, bool level) {
    now_ = q;
    const bool edge = prev_level_ == kRecessive && level == kDominant;

    switch (state_) {
        case State::Idle: {
            if (edge) {
                // Hard synchronisation: the edge quantum becomes phase 0 of
                // SOF. If we were about to transmit ourselves, join and let
                // arbitration sort it out; reinforcing the already-dominant
                // SOF one quantum late is harmless.
                const EncodedFrame* tx = next_tx_frame();
                start_bit_clock(true);
                if (tx != nullptr) {
                    begin_tx(tx);
                    set_drive(DriveLevel::Dominant);
                }
                process_frame_quantum(level);
            } else if (level == kRecessive) {
                const EncodedFrame* tx = next_tx_frame();
                if (tx != nullptr) {
                    start_bit_clock(false);
                    begin_tx(tx);
                    set_drive(DriveLevel::Dominant);  // SOF on the wire next quantum
                }
            }
            break;
        }
        case State::InFrame: {
            if (pre_frame_) {
                pre_frame_ = false;
                phase_ = 0;
            } else {
                ++phase_;
                if (phase_ >= bit_len_) {
                    phase_ = 0;
                    bit_len_ = timing_.quanta;
                    sample_phase_ = timing_.sample_index() - 1;
                    resync_done_ = false;
                    prev_sample_ = sample_value_;
                }
            }
            process_frame_quantum(level);
            break;
        }
        default: {
            ++phase_;
            if (phase_ >= bit_len_) {
                phase_ = 0;
                bit_len_ = timing_.quanta;
                sample_phase_ = timing_.sample_index() - 1;
                prev_sample_ = sample_value_;
            }
            aux_quantum(level);
            break;
        }
    }
    prev_level_ = level;
}

void CanPort::start_bit_clock(bool simultaneous_sof) {
    state_ = State::InFrame;
    asm_.reset();
    crc_ok_ = false;
    error_pending_ = false;
    error_kind_ = DecodeError::None;
    frame_over_ = false;
    override_active_ = false;
    transmitting_ = false;
    tx_ = nullptr;
    tx_image_ = nullptr;
    tx_index_ = 0;
    bit_len_ = timing_.quanta;
    sample_phase_ = timing_.sample_index() - 1;
    resync_done_ = false;
    phase_ = 0;
    pre_frame_ = !simultaneous_sof;
    sample_value_ = kRecessive;
    prev_sample_ = kRecessive;
}

void CanPort::begin_tx(const EncodedFrame* tx) {
    transmitting_ = true;
    tx_ = tx;
    tx_image_ = &tx->transmit;
    tx_index_ = 0;
    if (trace_ != nullptr)
        trace_->event(now_, name_, "tx_start", std::to_string(tx->frame.can_id));
}

void CanPort::extend_current_bit(unsigned quanta) {
    bit_len_ += quanta;
    if (phase_ <= sample_phase_) sample_phase_ += quanta;
}

void CanPort::process_frame_quantum(bool level) {
    const bool edge = prev_level_ == kRecessive && level == kDominant;

    // Resynchronisation: only recessive-to-dominant edges qualify, only when
    // the most recent sample point read recessive (the edge carries new
    // information), never on a dominant level we are driving ourselves, and
    // once per inter-sample interval.
    if (edge && phase_ != 0 && !resync_done_ && sample_value_ == kRecessive &&
        drive() != DriveLevel::Dominant) {
        if (phase_ <= sample_phase_) {
            const unsigned adj = std::min(phase_, timing_.sjw);
            bit_len_ += adj;
            sample_phase_ += adj;
        } else {
            const unsigned adj = std::min(bit_len_ - phase_, timing_.sjw);
            bit_len_ -= adj;
        }
        resync_done_ = true;
        ++metrics_.resyncs;
    }

    if (phase_ == 1 && !transmitting_) on_early_bit(level);
    if (phase_ == sample_phase_) handle_sample(level);
    if (state_ != State::InFrame) return;  // sample may have dropped back to idle
    if (phase_ + 1 >= bit_len_) end_of_bit(level);
}

void CanPort::handle_sample(bool level) {
    sample_value_ = level;
    resync_done_ = false;  // a new inter-sample interval begins here

    const auto section = asm_.next_section();
    const bool is_stuff = asm_.next_is_stuff();

    if (transmitting_) {
        const bool driven = (*tx_image_)[tx_index_];
        if (driven != level) {
            if (driven == kRecessive && level == kDominant && !is_stuff &&
                section == FrameAssembler::Section::Id) {
                // Someone with a higher-priority identifier is also sending.
                transmitting_ = false;
                tx_ = nullptr;
                tx_image_ = nullptr;
                set_drive(DriveLevel::PassiveRecessive);
                ++metrics_.arbitration_losses;
                on_tx_done(TxEnd::ArbitrationLost);
            } else if (section == FrameAssembler::Section::AckSlot && driven == kRecessive) {
                // Dominant in our recessive ACK slot: the acknowledgement.
            } else if (tolerate_tx_mismatch(tx_index_)) {
                // Expected third-party modification (the tag span).
            } else {
                ++metrics_.bit_errors;
                if (monitor_errors_) {
                    fail_frame(DecodeError::FormError);
                    return;
                }
            }
        } else if (section == FrameAssembler::Section::AckSlot && driven == kRecessive &&
                   level == kRecessive) {
            ++metrics_.ack_errors;
            fail_frame(DecodeError::FormError);
            return;
        }
    }

    const auto step = asm_.feed(level);
    on_frame_bit(step);

    if (step.error != DecodeError::None) {
        if (step.section == FrameAssembler::Section::Sof && level == kRecessive &&
            !transmitting_) {
            // The dominant pulse did not survive to the sample point: a
            // glitch, not a start of frame. Back to idle, no error signal.
            state_ = State::Idle;
            set_drive(DriveLevel::PassiveRecessive);
            return;
        }
        switch (step.error) {
            case DecodeError::StuffError: ++metrics_.stuff_errors; break;
            case DecodeError::FormError: ++metrics_.form_errors; break;
            default: break;
        }
        fail_frame(step.error);
        return;
    }

    if (step.crc_checked) crc_ok_ = asm_.crc_ok();

    // A CRC mismatch is signalled only after the ACK delimiter, so the
    // acknowledgement of other receivers is not disturbed.
    if (step.section == FrameAssembler::Section::AckDelim && !transmitting_ && !crc_ok_) {
        ++metrics_.crc_errors;
        fail_frame(DecodeError::CrcError);
        return;
    }

    if (step.receiver_valid && !transmitting_) {
        ++metrics_.frames_seen;
        on_receiver_valid(asm_);
    }
    if (step.complete) {
        frame_over_ = true;
        if (transmitting_) {
            transmitting_ = false;
            if (trace_ != nullptr)
                trace_->event(now_, name_, "tx_end", std::to_string(tx_->frame.can_id));
            tx_ = nullptr;
            tx_image_ = nullptr;
            on_tx_done(TxEnd::Completed);
        } else {
            on_frame_complete(asm_);
        }
    }
}

void CanPort::fail_frame(DecodeError kind) {
    if (error_pending_) return;
    error_pending_ = true;
    error_kind_ = kind;
    on_rx_error(kind);
    if (transmitting_) {
        transmitting_ = false;
        tx_ = nullptr;
        tx_image_ = nullptr;
        on_tx_done(TxEnd::Error);
    }
}

void CanPort::end_of_bit(bool /*level*/) {
    if (override_active_) {
        set_drive(DriveLevel::PassiveRecessive);
        override_active_ = false;
    }
    if (error_pending_) {
        // Active error flag: six dominant bits starting with the next bit.
        state_ = State::ErrorFlag;
        flag_bits_ = 0;
        error_pending_ = false;
        ++metrics_.error_flags_sent;
        if (trace_ != nullptr)
            trace_->event(now_, name_, "error_flag", to_string(error_kind_));
        set_drive(DriveLevel::Dominant);
        return;
    }
    if (frame_over_) {
        enter_intermission();
        return;
    }
    if (transmitting_) {
        ++tx_index_;
        if (tx_index_ < tx_image_->size()) {
            set_drive((*tx_image_)[tx_index_] == kRecessive ? DriveLevel::PassiveRecessive
                                                            : DriveLevel::Dominant);
        } else {
            set_drive(DriveLevel::PassiveRecessive);
        }
    } else {
        const bool ack_due = acks_valid_frames_ && crc_ok_ &&
                             asm_.next_section() == FrameAssembler::Section::AckSlot;
        set_drive(ack_due ? DriveLevel::Dominant : DriveLevel::PassiveRecessive);
    }
}

void CanPort::aux_quantum(bool level) {
    const bool edge = prev_level_ == kRecessive && level == kDominant;
    switch (state_) {
        case State::ErrorFlag:
            if (phase_ == sample_phase_) sample_value_ = level;
            if (phase_ + 1 >= bit_len_ && ++flag_bits_ == 6) {
                state_ = State::ErrorWait;
                set_drive(DriveLevel::PassiveRecessive);
            }
            break;
        case State::ErrorWait:
            // Recessive transmitted; the delimiter starts once we sample it.
            if (phase_ == sample_phase_) {
                sample_value_ = level;
                if (level == kRecessive) {
                    state_ = State::ErrorDelim;
                    delim_bits_ = 1;
                }
            }
            break;
        case State::ErrorDelim:
            if (phase_ == sample_phase_) {
                sample_value_ = level;
                if (level == kDominant) {
                    state_ = State::ErrorWait;  // superposed flags still draining
                } else {
                    ++delim_bits_;
                }
            }
            if (state_ == State::ErrorDelim && phase_ + 1 >= bit_len_ && delim_bits_ >= 8)
                enter_intermission();
            break;
        case State::Intermission:
            if (edge) {
                // The next frame started before we reached idle. During the
                // third intermission bit this is a regular start of frame; a
                // pending transmission joins arbitration without emitting its
                // own (already driven) SOF.
                if (intermission_bits_ < kIntermissionBits - 1) ++metrics_.intermission_dominant;
                const EncodedFrame* tx = next_tx_frame();
                start_bit_clock(true);
                if (tx != nullptr) begin_tx(tx);
                process_frame_quantum(level);
                return;
            }
            if (phase_ == sample_phase_) {
                sample_value_ = level;
                if (level == kDominant) ++metrics_.intermission_dominant;
            }
            if (phase_ + 1 >= bit_len_ && ++intermission_bits_ == kIntermissionBits)
                state_ = State::Idle;
            break;
        default:
            break;
    }
}

void CanPort::enter_intermission() {
    state_ = State::Intermission;
    intermission_bits_ = 0;
    frame_over_ = false;
    set_drive(DriveLevel::PassiveRecessive);
}

}  // namespace caiba
