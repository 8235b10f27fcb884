// attack.cpp — adversaries used by the validation harness.

#include "caiba/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace caiba {

ForgeryReport forgery_monte_carlo(unsigned tag_width, std::uint64_t trials, std::uint64_t seed) {
    if (tag_width == 0 || tag_width > 32) throw std::invalid_argument("tag width out of range");
    std::mt19937_64 rng(seed);
    Key128 key{};
    for (auto& b : key) b = static_cast<std::uint8_t>(rng());
    Cmac mac(key);

    const std::uint64_t mask = (tag_width == 32) ? 0xFFFFFFFFull : ((1ull << tag_width) - 1);
    std::uint64_t successes = 0;
    std::uint8_t msg[13];
    for (std::uint64_t t = 0; t < trials; ++t) {
        for (auto& b : msg) b = static_cast<std::uint8_t>(rng());
        const std::uint32_t real = Cmac::truncate_bits(mac.mac(msg), tag_width);
        const auto guess = static_cast<std::uint32_t>(rng() & mask);
        if (guess == real) ++successes;
    }

    ForgeryReport r;
    r.tag_width = tag_width;
    r.trials = trials;
    r.successes = successes;
    const double p = std::ldexp(1.0, -static_cast<int>(tag_width));
    r.expected_mean = static_cast<double>(trials) * p;
    r.std_dev = std::sqrt(static_cast<double>(trials) * p * (1.0 - p));
    return r;
}

// ---------------------------------------------------------------------------
// ForgeryAttacker

ForgeryAttacker::ForgeryAttacker(std::string name, BitTiming timing, ForgeryAttackerConfig cfg)
    : CanPort(std::move(name), timing), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    if (cfg_.mode == ForgeryAttackerConfig::Mode::GuessSourceTag) {
        secoc_.emplace(cfg_.group_key, cfg_.tag_width);
    } else {
        const unsigned max_msg = kCanIdBits + 8u * 8u - kCounterLsbBits - cfg_.tag_width;
        bpmac_.emplace(cfg_.source_keys, max_msg, cfg_.tag_width);
    }
}

void ForgeryAttacker::build_attempt() {
    const std::uint64_t counter = last_counter_ + 1;
    const unsigned w = cfg_.tag_width;
    const std::uint64_t mask = (1ull << w) - 1;

    Frame f;
    f.can_id = cfg_.target_id;
    f.dlc = cfg_.dlc;
    f.secured = true;
    f.counter_lsb = static_cast<std::uint8_t>(counter & 0xFu);
    f.tag_width = static_cast<std::uint8_t>(w);
    BitString app;
    for (unsigned i = 0; i < f.app_data_bits(); ++i) app.push_back((rng_() & 1u) != 0);
    f.app_data = app;

    // The tag field the receiver must sample (and that the CRC covers) is
    // `canonical`; the attacker drives `canonical ^ flip` expecting the
    // authenticator to XOR the real source tag on top.
    std::uint32_t canonical = 0;
    std::uint32_t flip = 0;
    if (cfg_.mode == ForgeryAttackerConfig::Mode::GuessSourceTag) {
        canonical = secoc_->integrity_tag(cfg_.target_id, app, counter);
        flip = static_cast<std::uint32_t>(rng_() & mask);  // guess at the source tag
    } else {
        canonical = static_cast<std::uint32_t>(rng_() & mask);  // guess at the integrity tag
        BitString msg = BitString::from_uint(cfg_.target_id, kCanIdBits);
        msg.append(app);
        flip = bpmac_->tag(msg, counter);  // real source tag, pre-compensated
    }
    f.tag = canonical;

    BitString payload = app;
    payload.append(BitString::from_uint(counter & 0xFu, kCounterLsbBits));
    payload.append(BitString::from_uint(canonical ^ flip, w));
    current_ = encode_frame(f, payload);
    current_counter_ = counter;
    ++stats_.built;
}

const EncodedFrame* ForgeryAttacker::next_tx_frame() {
    if (!current_.has_value()) {
        if (stats_.observed < cfg_.start_after || stats_.built >= cfg_.attempts) return nullptr;
        build_attempt();
    }
    return &*current_;
}

void ForgeryAttacker::on_tx_done(TxEnd end) {
    switch (end) {
        case TxEnd::Completed:
            // Everyone on the bus (the authenticator included) committed this
            // counter, so track it like they did.
            last_counter_ = current_counter_;
            ++stats_.completed;
            current_.reset();
            break;
        case TxEnd::ArbitrationLost:
            break;
        case TxEnd::Error:
            // Burned: the wire never carried a valid frame, nobody advanced.
            // The next attempt reuses the counter with a fresh guess.
            ++stats_.aborted;
            current_.reset();
            break;
    }
}

void ForgeryAttacker::commit_observed(const FrameAssembler& rx) {
    const BitString& data = rx.data_field();
    const unsigned w = cfg_.tag_width;
    if (data.size() < kCounterLsbBits + w) return;
    const auto lsb =
        static_cast<std::uint8_t>(data.to_uint(data.size() - kCounterLsbBits - w, kCounterLsbBits));
    try {
        last_counter_ = reconstruct_counter(last_counter_, lsb);
    } catch (const CounterOverflow&) {
    }
}

void ForgeryAttacker::on_frame_complete(const FrameAssembler& rx) {
    if (rx.can_id() != cfg_.target_id) return;
    ++stats_.observed;
    commit_observed(rx);
}

bool ForgeryAttacker::tolerate_tx_mismatch(std::size_t stuffed_index) {
    return current_.has_value() && current_->tag_span.contains(stuffed_index);
}

// ---------------------------------------------------------------------------
// ReplayNode

ReplayNode::ReplayNode(std::string name, BitTiming timing, ReplayConfig cfg)
    : CanPort(std::move(name), timing), cfg_(std::move(cfg)) {}

void ReplayNode::on_frame_complete(const FrameAssembler& rx) {
    if (rx.can_id() != cfg_.target_id) return;
    ++stats_.observed;
    if (recorded_.size() >= cfg_.record_limit) return;

    const BitString& data = rx.data_field();
    const unsigned w = cfg_.tag_width;
    if (data.size() < kCounterLsbBits + w) return;

    // Reassemble the frame exactly as it stood on the (corrected) wire; the
    // canonical encoding reproduces it bit for bit.
    Frame f;
    f.can_id = rx.can_id();
    f.dlc = rx.dlc();
    f.secured = true;
    f.tag_width = static_cast<std::uint8_t>(w);
    f.app_data = data.slice(0, data.size() - kCounterLsbBits - w);
    f.counter_lsb = static_cast<std::uint8_t>(
        data.to_uint(data.size() - kCounterLsbBits - w, kCounterLsbBits));
    f.tag = static_cast<std::uint32_t>(data.to_uint(data.size() - w, w));
    recorded_.push_back(encode_frame(f));
    ++stats_.recorded;
}

const EncodedFrame* ReplayNode::next_tx_frame() {
    if (stats_.observed < cfg_.start_after || recorded_.empty()) return nullptr;
    if (stats_.replayed >= cfg_.replays) return nullptr;
    return &recorded_[next_ % recorded_.size()];
}

void ReplayNode::on_tx_done(TxEnd end) {
    if (end == TxEnd::ArbitrationLost) return;
    ++stats_.replayed;
    ++next_;
}

// ---------------------------------------------------------------------------
// BitModAttacker

BitModAttacker::BitModAttacker(std::string name, BitTiming timing, BitModConfig cfg)
    : CanPort(std::move(name), timing), cfg_(cfg), rng_(cfg.seed) {}

void BitModAttacker::arm(const EncodedFrame& genuine) {
    if (genuine.frame.can_id != cfg_.target_id) return;
    if (stats_.armed >= cfg_.max_attacks) return;
    if (genuine.has_override()) {
        // The wire image is not final (an authenticator will rewrite the tag
        // region); a CRC patch cannot be planned against a moving target.
        ++stats_.skipped;
        return;
    }

    const unsigned n = genuine.frame.app_data.size();
    auto try_delta = [&](std::uint64_t delta) -> bool {
        Frame mod = genuine.frame;
        for (unsigned p = 0; p < n; ++p)
            if ((delta >> p) & 1u) mod.app_data.flip(p);
        const EncodedFrame patched = encode_frame(mod);  // CRC recomputed
        if (patched.stuffed.size() != genuine.stuffed.size()) return false;
        if (patched.stuff_positions != genuine.stuff_positions) return false;

        Edit ed;
        ed.can_id = genuine.frame.can_id;
        ed.dlc = genuine.frame.dlc;
        for (std::size_t i = 0; i < patched.stuffed.size(); ++i)
            if (patched.stuffed[i] != genuine.stuffed[i]) ed.targets[i] = patched.stuffed[i];
        armed_.push_back(std::move(ed));
        ++stats_.armed;
        return true;
    };

    // Phase 1: single-bit flips. Minimal modification, but the recomputed CRC
    // must happen to reproduce the CRC region's stuff pattern.
    std::vector<unsigned> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng_);
    for (unsigned p : order)
        if (try_delta(1ull << p)) return;

    // Phases 2 and 3: CRC-preserving modifications. The CRC is linear over
    // GF(2), so any app-data delta in the kernel of the bit->CRC map leaves
    // the CRC field untouched and only the data region's stuff pattern has to
    // survive. The minimum kernel weight is 6; weight-6 elements are found by
    // meeting weight-3 syndrome halves, weight-7 by meeting 4 against 3.
    if (n >= 6 && n <= 64) {
        std::vector<std::uint16_t> col(n);  // CRC delta of each single flip
        for (unsigned p = 0; p < n; ++p) {
            Frame m = genuine.frame;
            m.app_data.flip(p);
            col[p] = static_cast<std::uint16_t>(encode_frame(m).crc ^ genuine.crc);
        }

        std::unordered_map<std::uint16_t, std::vector<std::uint64_t>> halves;
        for (unsigned a = 0; a < n; ++a)
            for (unsigned b = a + 1; b < n; ++b)
                for (unsigned c = b + 1; c < n; ++c)
                    halves[static_cast<std::uint16_t>(col[a] ^ col[b] ^ col[c])].push_back(
                        (1ull << a) | (1ull << b) | (1ull << c));

        std::vector<std::uint64_t> pool;
        for (const auto& [syndrome, masks] : halves)
            for (std::size_t i = 0; i < masks.size(); ++i)
                for (std::size_t j = i + 1; j < masks.size(); ++j)
                    pool.push_back(masks[i] ^ masks[j]);
        std::sort(pool.begin(), pool.end());
        pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
        std::shuffle(pool.begin(), pool.end(), rng_);
        for (std::uint64_t delta : pool)
            if (try_delta(delta)) return;

        std::vector<std::uint64_t> ext;
        for (unsigned a = 0; a < n && ext.size() < 1024; ++a)
            for (unsigned b = a + 1; b < n && ext.size() < 1024; ++b)
                for (unsigned c = b + 1; c < n && ext.size() < 1024; ++c)
                    for (unsigned d = c + 1; d < n && ext.size() < 1024; ++d) {
                        const std::uint64_t m4 =
                            (1ull << a) | (1ull << b) | (1ull << c) | (1ull << d);
                        const auto it = halves.find(
                            static_cast<std::uint16_t>(col[a] ^ col[b] ^ col[c] ^ col[d]));
                        if (it == halves.end()) continue;
                        for (std::uint64_t m3 : it->second)
                            if (m3 != (m3 & m4)) ext.push_back(m4 ^ m3);
                    }
        std::sort(ext.begin(), ext.end());
        ext.erase(std::unique(ext.begin(), ext.end()), ext.end());
        std::shuffle(ext.begin(), ext.end(), rng_);
        for (std::uint64_t delta : ext)
            if (try_delta(delta)) return;
    }
    ++stats_.skipped;
}

void BitModAttacker::on_frame_bit(const FrameAssembler::Step& step) {
    if (step.section == FrameAssembler::Section::Sof) {
        active_.reset();
        return;
    }
    if (step.stuff_bit || step.error != DecodeError::None) return;
    if (step.section != FrameAssembler::Section::Dlc || step.field_index != 3) return;
    if (armed_.empty()) return;
    const Edit& front = armed_.front();
    if (front.can_id != rx().can_id() || front.dlc != rx().dlc()) return;
    active_ = front;
    armed_.pop_front();
    ++stats_.attacked;
}

void BitModAttacker::on_early_bit(bool level) {
    if (!active_.has_value()) return;
    const std::size_t idx = rx().bits_consumed();  // stuffed index of this bit
    auto it = active_->targets.find(idx);
    if (it == active_->targets.end() || level == it->second) return;
    if (it->second == kRecessive) {
        drive_override(DriveLevel::Erase);
    } else {
        if (prev_sample() == kRecessive) {
            extend_current_bit(timing().sjw);
            ++stats_.compensations;
        }
        drive_override(DriveLevel::Dominant);
    }
    ++stats_.flips_driven;
}

void BitModAttacker::on_frame_complete(const FrameAssembler&) { active_.reset(); }

void BitModAttacker::on_rx_error(DecodeError) { active_.reset(); }

}  // namespace caiba
