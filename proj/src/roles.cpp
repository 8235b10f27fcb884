// roles.cpp — transmitter, receiver, and authenticator behaviour.

#include "caiba/roles.hpp"

#include <stdexcept>

namespace caiba {

std::uint64_t app_hash(const BitString& app) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    const auto bytes = app.to_bytes();
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    h ^= app.size();
    h *= 1099511628211ull;
    return h;
}

// ---------------------------------------------------------------------------
// SharedLog

bool SharedLog::record_sent(const std::string& sender, std::uint16_t can_id,
                            std::uint64_t counter, std::uint64_t hash, bool secured, bool data) {
    bool fresh = true;
    if (secured) {
        auto [it, inserted] = used_.try_emplace({can_id, counter}, hash);
        if (!inserted && it->second != hash) {
            ++nonce_reuse_;
            fresh = false;
        }
    }
    sent_.push_back({sent_.size(), sender, can_id, counter, hash, secured, data, false});
    return fresh;
}

void SharedLog::record_superseded(std::uint16_t can_id, std::uint64_t counter) {
    for (auto it = sent_.rbegin(); it != sent_.rend(); ++it)
        if (it->can_id == can_id && it->counter == counter) {
            it->superseded = true;
            return;
        }
}

void SharedLog::record_verdict(VerdictRecord v) {
    if (v.accepted) {
        ++accepts_;
        if (v.secured && !genuine(v.can_id, v.counter, v.hash)) ++forged_accepts_;
    } else {
        ++rejects_;
    }
    verdicts_.push_back(std::move(v));
}

bool SharedLog::genuine(std::uint16_t can_id, std::uint64_t counter, std::uint64_t hash) const {
    auto it = used_.find({can_id, counter});
    return it != used_.end() && it->second == hash;
}

// ---------------------------------------------------------------------------
// TransmitterNode

namespace {

BitString random_bits(std::mt19937_64& rng, unsigned n) {
    BitString s;
    for (unsigned i = 0; i < n; ++i) s.push_back((rng() & 1u) != 0);
    return s;
}

std::uint32_t announce_mac(const Key128& hash_key, std::uint16_t announce_id,
                           std::uint32_t msb_value) {
    const std::uint8_t msg[6] = {
        static_cast<std::uint8_t>(announce_id >> 8), static_cast<std::uint8_t>(announce_id),
        static_cast<std::uint8_t>(msb_value >> 24),  static_cast<std::uint8_t>(msb_value >> 16),
        static_cast<std::uint8_t>(msb_value >> 8),   static_cast<std::uint8_t>(msb_value)};
    return Cmac::truncate_bits(Cmac(hash_key).mac(msg), 24);
}

}  // namespace

TransmitterNode::TransmitterNode(std::string name, BitTiming timing, TransmitterConfig cfg,
                                 SharedLog* log)
    : CanPort(std::move(name), timing), cfg_(std::move(cfg)), log_(log), rng_(cfg_.seed) {
    const unsigned max_msg = kCanIdBits + 8u * 8u - kCounterLsbBits - cfg_.tag_width;
    for (const auto& [id, keys] : cfg_.keys) {
        secoc_.emplace(id, SecocContext(keys.group, cfg_.tag_width));
        bpmac_.emplace(id, BpMac(keys.source, max_msg, cfg_.tag_width));
        next_counter_[id] = 1;
    }
    sent_per_spec_.assign(cfg_.traffic.size(), 0);
    due_quantum_.assign(cfg_.traffic.size(), 0);
    acks_valid_frames_ = true;
    monitor_errors_ = !cfg_.tolerant_monitor;
}

bool TransmitterNode::done() const {
    if (!control_queue_.empty() || !data_queue_.empty()) return false;
    for (std::size_t i = 0; i < cfg_.traffic.size(); ++i)
        if (sent_per_spec_[i] < cfg_.traffic[i].frames) return false;
    return true;
}

std::uint64_t TransmitterNode::next_counter(std::uint16_t id) const {
    auto it = next_counter_.find(id);
    return it == next_counter_.end() ? 0 : it->second;
}

TransmitterNode::Outgoing TransmitterNode::make_secured(std::uint16_t id, std::uint8_t dlc,
                                                        const BitString& app, bool data_frame) {
    const std::uint64_t counter = next_counter_.at(id)++;
    const std::uint32_t ti = secoc_.at(id).integrity_tag(id, app, counter);

    Frame f;
    f.can_id = id;
    f.dlc = dlc;
    f.app_data = app;
    f.secured = true;
    f.counter_lsb = static_cast<std::uint8_t>(counter & 0xFu);
    f.tag = ti;
    f.tag_width = static_cast<std::uint8_t>(cfg_.tag_width);

    Outgoing out;
    out.integrity_tag = ti;
    out.counter = counter;
    if (cfg_.aggregate_source_tag) {
        BitString msg = BitString::from_uint(id, kCanIdBits);
        msg.append(app);
        const std::uint32_t ts = bpmac_.at(id).tag(msg, counter);
        BitString payload = app;
        payload.append(BitString::from_uint(counter & 0xFu, kCounterLsbBits));
        payload.append(BitString::from_uint(ti ^ ts, cfg_.tag_width));
        out.image = encode_frame(f, payload);
        out.caiba = true;
    } else {
        out.image = encode_frame(f);
    }
    log_->record_sent(std::string(name()), id, counter, app_hash(app), true, data_frame);
    return out;
}

bool TransmitterNode::build_data_frame() {
    for (std::size_t probe = 0; probe < cfg_.traffic.size(); ++probe) {
        const std::size_t i = (next_spec_ + probe) % cfg_.traffic.size();
        const TrafficSpec& spec = cfg_.traffic[i];
        if (sent_per_spec_[i] >= spec.frames) continue;
        if (now() < due_quantum_[i]) continue;
        next_spec_ = (i + 1) % cfg_.traffic.size();
        ++sent_per_spec_[i];
        due_quantum_[i] = now() + spec.period_bits * timing().quanta;

        const bool secured = spec.secured && !insecure_fallback_;
        if (spec.secured && insecure_fallback_) ++stats_.fallback_frames;

        const auto app_bits = [&](unsigned nbits) {
            if (spec.payload.empty()) return random_bits(rng_, nbits);
            std::vector<std::uint8_t> padded = spec.payload;
            padded.resize((nbits + 7) / 8, 0);
            return BitString::from_bytes(padded, nbits);
        };

        Outgoing out;
        if (secured) {
            if (cfg_.faults.counter_jump_id == spec.can_id &&
                built_on_id_[spec.can_id] == cfg_.faults.counter_jump_after &&
                cfg_.faults.counter_jump_delta > 0) {
                next_counter_.at(spec.can_id) += cfg_.faults.counter_jump_delta;
            }
            Frame probe_frame;
            probe_frame.dlc = spec.dlc;
            probe_frame.secured = true;
            probe_frame.tag_width = static_cast<std::uint8_t>(cfg_.tag_width);
            out = make_secured(spec.can_id, spec.dlc, app_bits(probe_frame.app_data_bits()),
                               true);
        } else {
            Frame f;
            f.can_id = spec.can_id;
            f.dlc = spec.dlc;
            f.app_data = app_bits(8u * spec.dlc);
            out.image = encode_frame(f);
            log_->record_sent(std::string(name()), spec.can_id, 0, app_hash(f.app_data), false,
                              true);
        }
        out.counts_as_data = true;
        ++built_on_id_[spec.can_id];
        ++stats_.built;
        data_queue_.push_back(std::move(out));
        if (cfg_.built_hook) cfg_.built_hook(data_queue_.back().image);
        return true;
    }
    return false;
}

const EncodedFrame* TransmitterNode::next_tx_frame() {
    if (!control_queue_.empty()) {
        current_ = &control_queue_.front();
        current_is_control_ = true;
        return &current_->image;
    }
    if (data_queue_.empty() && !build_data_frame()) {
        current_ = nullptr;
        return nullptr;
    }
    current_ = &data_queue_.front();
    current_is_control_ = false;
    return &current_->image;
}

void TransmitterNode::pop_current() {
    if (current_ == nullptr) return;
    if (current_->completes_reset != 0) resets_in_flight_.erase(current_->completes_reset);
    if (current_is_control_) {
        control_queue_.pop_front();
    } else {
        data_queue_.pop_front();
    }
    current_ = nullptr;
}

void TransmitterNode::finish_tag_region(bool healthy) {
    if (healthy) {
        ++stats_.healthy_tag_regions;
        faulty_streak_ = 0;
        auth_inactive_ = false;
        return;
    }
    ++stats_.faulty_tag_regions;
    if (++faulty_streak_ == 3 && !auth_inactive_) {
        auth_inactive_ = true;
        ++stats_.auth_inactive_events;
        if (trace_ != nullptr) trace_->event(now(), name(), "auth_inactive");
        if (cfg_.backup_authenticator >= 0) {
            Frame f;
            f.can_id = cfg_.protocol.handover;
            f.dlc = 1;
            f.app_data =
                BitString::from_uint(static_cast<std::uint64_t>(cfg_.backup_authenticator), 8);
            Outgoing out;
            out.image = encode_frame(f);
            control_queue_.push_back(std::move(out));
            ++stats_.handovers_sent;
        } else {
            ++stats_.no_backup_events;
            if (cfg_.fallback_to_insecure) insecure_fallback_ = true;
        }
    }
}

void TransmitterNode::on_tx_done(TxEnd end) {
    switch (end) {
        case TxEnd::Completed:
            if (current_->counts_as_data) ++stats_.completed;
            pop_current();
            break;
        case TxEnd::ArbitrationLost:
            break;  // keep the frame, try again at the next bus-idle
        case TxEnd::Error:
            // A mangled tag bit was already on the wire when the attempt
            // died: that is still evidence about the authenticator.
            if (current_->caiba && !tag_region_ok_) {
                finish_tag_region(false);
                tag_region_ok_ = true;
            }
            if (++current_->attempts > cfg_.max_retransmissions) {
                if (current_->counts_as_data) ++stats_.aborted;
                pop_current();
            } else {
                ++stats_.retransmissions;
            }
            break;
    }
}

// The sender judges the authenticator by what actually appeared on the wire:
// within the tag span the sampled bits must equal the canonical stuffed image
// (integrity tag restored), not the aggregated values it drove itself. The
// verdict lands when the last tag bit passes, so a frame that later dies at
// the ACK slot (nobody could verify it) still counts against the monitor.
void TransmitterNode::on_frame_bit(const FrameAssembler::Step& step) {
    if (!transmitting() || current_ == nullptr || !current_->caiba) return;
    if (step.section == FrameAssembler::Section::Sof) {
        tag_region_ok_ = true;
        return;
    }
    const BitSpan& span = current_->image.tag_span;
    const std::size_t idx = tx_bit_index();
    if (!span.contains(idx)) return;
    if (step.value != current_->image.stuffed[idx]) tag_region_ok_ = false;
    if (idx + 1 == span.end) {
        finish_tag_region(tag_region_ok_);
        tag_region_ok_ = true;  // judged; don't count again on a later error
    }
}

void TransmitterNode::on_receiver_valid(const FrameAssembler& rx) {
    if (!cfg_.protocol.is_reset_request(rx.can_id()) || rx.dlc() != 3) return;
    const auto target = static_cast<std::uint16_t>(rx.data_field().to_uint(0, 16));
    if (secoc_.count(target) != 0) perform_counter_reset(target);
}

void TransmitterNode::perform_counter_reset(std::uint16_t id) {
    if (resets_in_flight_.count(id) != 0) return;
    CounterReset r;
    try {
        r = reset_counter(next_counter_.at(id));
    } catch (const CounterOverflow&) {
        ++stats_.counter_exhausted;
        return;
    }
    next_counter_.at(id) = r.new_base;
    ++stats_.counter_resets;
    resets_in_flight_.insert(id);
    if (trace_ != nullptr) trace_->event(now(), name(), "counter_reset", std::to_string(id));

    // A queued frame for this id still carries pre-reset freshness (built,
    // then e.g. beaten in arbitration by the reset request itself). Once the
    // announce goes out everyone expects counters from the new base, so
    // re-secure the pending payloads before they reach the wire.
    for (auto& out : data_queue_) {
        const Frame& f = out.image.frame;
        if (!f.secured || f.can_id != id) continue;
        const bool counts = out.counts_as_data;
        log_->record_superseded(id, out.counter);
        out = make_secured(id, f.dlc, f.app_data, counts);
        out.counts_as_data = counts;
    }

    // 1. Announce the new most-significant value to the authenticators.
    Frame ann;
    ann.can_id = cfg_.protocol.announce.at(id);
    ann.dlc = 7;
    ann.app_data = BitString::from_uint(r.msb_value, 32);
    ann.app_data.append(BitString::from_uint(
        announce_mac(cfg_.keys.at(id).source.hash_key, ann.can_id, r.msb_value), 24));
    Outgoing out_ann;
    out_ann.image = encode_frame(ann);
    control_queue_.push_back(std::move(out_ann));

    // 2. Broadcast it to the receivers over the secured control channel.
    const std::uint16_t bc_id = cfg_.protocol.broadcast.at(id);
    Frame layout;
    layout.dlc = 8;
    layout.secured = true;
    layout.tag_width = static_cast<std::uint8_t>(cfg_.tag_width);
    BitString app = BitString::from_uint(r.msb_value, 32);
    app.append(BitString::zeros(layout.app_data_bits() - 32));
    Outgoing out_bc = make_secured(bc_id, 8, app, false);
    out_bc.completes_reset = id;
    control_queue_.push_back(std::move(out_bc));
}

bool TransmitterNode::tolerate_tx_mismatch(std::size_t stuffed_index) {
    return current_ != nullptr && current_->caiba &&
           current_->image.tag_span.contains(stuffed_index);
}

// ---------------------------------------------------------------------------
// ReceiverNode

ReceiverNode::ReceiverNode(std::string name, BitTiming timing, ReceiverConfig cfg, SharedLog* log)
    : CanPort(std::move(name), timing), cfg_(std::move(cfg)), log_(log) {
    for (const auto& sub : cfg_.subscriptions) {
        if (!sub.secured) {
            legacy_ids_.insert(sub.can_id);
            continue;
        }
        Channel ch{SecocContext(sub.group_key, sub.tag_width), {}, sub.tag_width, false, 0};
        channels_.emplace(sub.can_id, std::move(ch));
    }
    for (const auto& [data_id, bc_id] : cfg_.protocol.broadcast) {
        auto it = channels_.find(bc_id);
        if (it != channels_.end()) it->second.refreshes_data_id = data_id;
    }
    acks_valid_frames_ = true;
}

const ReceiverChannelState& ReceiverNode::channel(std::uint16_t id) const {
    return channels_.at(id).state;
}

bool ReceiverNode::in_recovery(std::uint16_t id) const { return channels_.at(id).in_recovery; }

const EncodedFrame* ReceiverNode::next_tx_frame() {
    return requests_.empty() ? nullptr : &requests_.front();
}

void ReceiverNode::on_tx_done(TxEnd end) {
    switch (end) {
        case TxEnd::Completed:
            ++stats_.reset_requests_sent;
            requests_.pop_front();
            request_attempts_ = 0;
            break;
        case TxEnd::ArbitrationLost:
            break;
        case TxEnd::Error:
            if (++request_attempts_ > cfg_.max_retransmissions) {
                requests_.pop_front();
                request_attempts_ = 0;
            }
            break;
    }
}

void ReceiverNode::queue_reset_request(std::uint16_t data_id) {
    Frame f;
    f.can_id = static_cast<std::uint16_t>(cfg_.protocol.reset_request + cfg_.request_index);
    f.dlc = 3;
    f.app_data = BitString::from_uint(data_id, 16);
    f.app_data.append(BitString::from_uint(cfg_.request_index, 8));
    requests_.push_back(encode_frame(f));
}

void ReceiverNode::on_receiver_valid(const FrameAssembler& rx) {
    const std::uint16_t id = rx.can_id();

    if (cfg_.protocol.is_reset_request(id) && rx.dlc() == 3) {
        // Someone else already asked; don't pile on.
        const auto target = static_cast<std::uint16_t>(rx.data_field().to_uint(0, 16));
        auto it = channels_.find(target);
        if (it != channels_.end()) it->second.in_recovery = true;
        return;
    }

    if (legacy_ids_.count(id) != 0) {
        ++stats_.legacy_frames;
        log_->record_verdict(
            {now(), std::string(name()), id, 0, app_hash(rx.data_field()), true, false, "legacy"});
        return;
    }

    auto it = channels_.find(id);
    if (it == channels_.end()) return;
    Channel& ch = it->second;

    if (cfg_.faults.deaf_id == id && cfg_.faults.deaf_count > 0) {
        const std::uint64_t n = deaf_seen_++;
        if (n >= cfg_.faults.deaf_after && n < cfg_.faults.deaf_after + cfg_.faults.deaf_count)
            return;  // the verification stack never saw this frame
    }

    const BitString& data = rx.data_field();
    const unsigned w = ch.tag_width;
    if (data.size() < kCounterLsbBits + w) {
        log_->record_verdict(
            {now(), std::string(name()), id, 0, app_hash(data), false, true, "layout"});
        ++stats_.rejects;
        return;
    }
    const BitString app = data.slice(0, data.size() - kCounterLsbBits - w);
    const auto lsb =
        static_cast<std::uint8_t>(data.to_uint(data.size() - kCounterLsbBits - w, kCounterLsbBits));
    const auto tag = static_cast<std::uint32_t>(data.to_uint(data.size() - w, w));

    VerifyResult res;
    try {
        res = secoc_verify(ch.ctx, id, app, lsb, tag, ch.state);
    } catch (const CounterOverflow&) {
        log_->record_verdict(
            {now(), std::string(name()), id, 0, app_hash(app), false, true, "counter_overflow"});
        ++stats_.rejects;
        return;
    }
    log_->record_verdict({now(), std::string(name()), id, res.counter, app_hash(app), res.accepted,
                          true, res.accepted ? "accept" : "mac_mismatch"});

    if (res.accepted) {
        ++stats_.accepts;
        if (ch.refreshes_data_id != 0) {
            auto dst = channels_.find(ch.refreshes_data_id);
            const auto msb = static_cast<std::uint32_t>(app.to_uint(0, 32));
            const std::uint64_t base = static_cast<std::uint64_t>(msb) << 32;
            if (dst != channels_.end() && base > 0 &&
                base - 1 >= dst->second.state.last_accepted) {
                dst->second.state.last_accepted = base - 1;
                dst->second.state.consecutive_failures = 0;
                if (dst->second.recovery_mine) ++stats_.recoveries_completed;
                dst->second.in_recovery = false;
                dst->second.recovery_mine = false;
                ++stats_.broadcast_refreshes;
            }
        } else {
            ch.in_recovery = false;
            ch.recovery_mine = false;
        }
    } else {
        ++stats_.rejects;
        // Ask for a counter reset after five consecutive failures; keep
        // re-asking every five while the channel stays broken in case the
        // request or the recovery traffic itself was lost.
        if (cfg_.send_reset_requests && ch.refreshes_data_id == 0 &&
            ch.state.consecutive_failures >= 5 && ch.state.consecutive_failures % 5 == 0) {
            if (!ch.in_recovery) {
                ch.in_recovery = true;
                ch.recovery_mine = true;
                ++stats_.recoveries_started;
            }
            queue_reset_request(id);
        }
    }
}

// ---------------------------------------------------------------------------
// AuthenticatorNode

AuthenticatorNode::AuthenticatorNode(std::string name, BitTiming timing, AuthenticatorConfig cfg)
    : CanPort(std::move(name), timing), cfg_(std::move(cfg)) {
    const unsigned max_msg = kCanIdBits + 8u * 8u - kCounterLsbBits - cfg_.tag_width;
    for (const auto& [id, keys] : cfg_.keys) bpmac_.emplace(id, BpMac(keys.source, max_msg, cfg_.tag_width));
    for (std::uint16_t id : cfg_.active_ids) responsible_.insert(id);
    for (const auto& [data_id, ann_id] : cfg_.protocol.announce) announce_to_data_[ann_id] = data_id;
    acks_valid_frames_ = true;
}

std::uint64_t AuthenticatorNode::last_counter(std::uint16_t id) const {
    auto it = last_counter_.find(id);
    return it == last_counter_.end() ? 0 : it->second;
}

void AuthenticatorNode::reset_session() { s_ = Session{}; }

void AuthenticatorNode::on_frame_bit(const FrameAssembler::Step& step) {
    if (step.section == FrameAssembler::Section::Sof) {
        reset_session();
        return;
    }
    if (step.stuff_bit || step.error != DecodeError::None) return;

    if (step.section == FrameAssembler::Section::Dlc && step.field_index == 3) {
        const std::uint16_t id = rx().can_id();
        if (cfg_.keys.count(id) == 0) return;
        const unsigned total = 8u * rx().dlc();
        const unsigned w = cfg_.tag_width;
        if (total < kCounterLsbBits + w) return;  // cannot carry the secured layout
        s_.tracking = true;
        s_.id = id;
        s_.app_len = total - kCounterLsbBits - w;
        s_.tag_lo = total - w;
        const bool enabled =
            (cfg_.disable_at_quantum == 0 || now() < cfg_.disable_at_quantum) &&
            (cfg_.disable_after_frames == 0 || frames_observed_ < cfg_.disable_after_frames);
        s_.active = enabled && responsible_.count(id) != 0;
        if (s_.active) {
            ++stats_.sessions;
            auto& bp = bpmac_.at(id);
            bp.online_begin();
            for (unsigned i = 0; i < kCanIdBits; ++i)
                bp.online_feed_bit(((id >> (kCanIdBits - 1 - i)) & 1u) != 0);
        }
        return;
    }

    if (step.section != FrameAssembler::Section::Data || !s_.tracking) return;
    const unsigned k = step.field_index;
    if (k < s_.app_len) {
        if (s_.active) bpmac_.at(s_.id).online_feed_bit(step.value);
    } else if (k < s_.tag_lo) {
        s_.lsb = static_cast<std::uint8_t>((s_.lsb << 1) | (step.value ? 1u : 0u));
        if (k == s_.tag_lo - 1) {
            try {
                s_.counter = reconstruct_counter(last_counter_[s_.id], s_.lsb);
                s_.have_counter = true;
            } catch (const CounterOverflow&) {
                s_.tracking = false;
                s_.active = false;
                return;
            }
            if (s_.active) {
                auto& bp = bpmac_.at(s_.id);
                bp.online_counter(s_.counter);
                s_.source_tag = bp.online_done();
                s_.have_tag = true;
            }
        }
    }
}

void AuthenticatorNode::on_early_bit(bool level) {
    if (!s_.active || !s_.have_tag) return;
    const FrameAssembler& a = rx();
    if (a.next_section() != FrameAssembler::Section::Data || a.next_is_stuff()) return;
    const unsigned k = a.next_field_index();
    if (k < s_.tag_lo) return;

    const unsigned w = cfg_.tag_width;
    const unsigned pos = k - s_.tag_lo;  // 0 = MSB of the tag
    const bool ts_bit = ((s_.source_tag >> (w - 1 - pos)) & 1u) != 0;
    if (!ts_bit) {
        ++stats_.tag_bits_passed;
        return;
    }
    if (level == kRecessive) {
        // Will inject a dominant edge mid-bit; everyone qualified resyncs by
        // sjw, so stretch our own bit to stay aligned.
        if (prev_sample() == kRecessive) {
            extend_current_bit(timing().sjw);
            ++stats_.compensations;
        }
        drive_override(DriveLevel::Dominant);
        ++stats_.flips_dominant;
        if (trace_ != nullptr) trace_->event(now(), name(), "rbf_dominant", std::to_string(pos));
    } else {
        drive_override(DriveLevel::Erase);
        ++stats_.erases;
        if (trace_ != nullptr) trace_->event(now(), name(), "rbf_erase", std::to_string(pos));
    }
}

void AuthenticatorNode::on_frame_complete(const FrameAssembler& rx_asm) {
    const std::uint16_t id = rx_asm.can_id();
    ++frames_observed_;

    if (s_.tracking && s_.have_counter && s_.id == id) {
        last_counter_[id] = s_.counter;
        ++stats_.commits;
    }

    auto ann = announce_to_data_.find(id);
    if (ann != announce_to_data_.end() && rx_asm.dlc() == 7) {
        const BitString& data = rx_asm.data_field();
        const auto msb = static_cast<std::uint32_t>(data.to_uint(0, 32));
        const auto mac = static_cast<std::uint32_t>(data.to_uint(32, 24));
        const std::uint16_t data_id = ann->second;
        if (mac == announce_mac(cfg_.keys.at(data_id).source.hash_key, id, msb)) {
            const std::uint64_t base = static_cast<std::uint64_t>(msb) << 32;
            if (base > 0 && base - 1 >= last_counter_[data_id]) {
                last_counter_[data_id] = base - 1;
                ++stats_.announce_refreshes;
            }
        }
    }

    if (id == cfg_.protocol.handover && rx_asm.dlc() == 1) {
        const auto named = static_cast<std::uint8_t>(rx_asm.data_field().to_uint(0, 8));
        if (named == cfg_.index) {
            for (const auto& [kid, keys] : cfg_.keys) responsible_.insert(kid);
            ++stats_.adoptions;
            if (trace_ != nullptr) trace_->event(now(), name(), "adopt");
        }
    }
}

void AuthenticatorNode::on_rx_error(DecodeError) {
    if (s_.tracking) ++stats_.discarded_sessions;
    reset_session();
}

}  // namespace caiba
