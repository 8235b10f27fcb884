// Scenario parsing, node-graph construction and deterministic runs.
#include "caiba/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>
#include <tuple>

#include "json.hpp"

#include "caiba/crypto.hpp"
#include "caiba/node.hpp"

namespace caiba {
namespace {

using json = nlohmann::ordered_json;

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Per-node RNG seed: a function of the scenario seed and the node's name, so
// renumbering the node list does not reshuffle every node's traffic.
std::uint64_t node_seed(std::uint64_t scenario_seed, std::string_view name) {
    std::uint64_t h = fnv1a(name) ^ (scenario_seed * 0x9E3779B97F4A7C15ull);
    h ^= h >> 32;
    return h == 0 ? 1 : h;
}

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ConfigError(path, message);
}

std::string id_str(std::uint16_t id) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "0x%03x", id);
    return buf;
}

const json& require(const json& obj, const char* key, const std::string& path) {
    const auto it = obj.find(key);
    if (it == obj.end()) fail(path, std::string("missing required field '") + key + "'");
    return *it;
}

bool get_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(path, "expected a boolean");
    return v.get<bool>();
}

std::string get_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

double get_double(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
}

std::uint64_t get_u64(const json& v, const std::string& path) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) {
        fail(path, "expected a non-negative integer");
    }
    if (v.is_number_integer() && v.get<std::int64_t>() < 0) {
        fail(path, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
}

std::uint16_t parse_id(const json& v, const std::string& path) {
    unsigned long value = 0;
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        std::size_t pos = 0;
        try {
            value = std::stoul(s, &pos, 0);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != s.size()) {
            fail(path, "expected a CAN identifier (integer or hex string like \"0x100\")");
        }
    } else if (v.is_number_integer() || v.is_number_unsigned()) {
        value = static_cast<unsigned long>(get_u64(v, path));
    } else {
        fail(path, "expected a CAN identifier (integer or hex string like \"0x100\")");
    }
    if (value > 0x7FF) fail(path, "identifier exceeds 11 bits");
    return static_cast<std::uint16_t>(value);
}

Key128 get_key(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a 32-character hex key");
    try {
        return parse_key_hex(v.get<std::string>());
    } catch (const std::exception& e) {
        fail(path, e.what());
    }
}

KeyParts parse_key_parts(const json& v, const std::string& path) {
    if (!v.is_object()) fail(path, "expected an object with group/hash/mask key parts");
    KeyParts parts;
    for (const auto& [k, val] : v.items()) {
        if (k == "group") {
            parts.group = get_key(val, path + ".group");
        } else if (k == "hash") {
            parts.hash = get_key(val, path + ".hash");
        } else if (k == "mask") {
            parts.mask = get_key(val, path + ".mask");
        } else {
            fail(path + "." + k, "unknown key part (expected group, hash or mask)");
        }
    }
    return parts;
}

void merge_part(std::optional<Key128>& dst, const std::optional<Key128>& src,
                const std::string& path) {
    if (!src) return;
    if (dst && *dst != *src) fail(path, "conflicting key material across nodes");
    dst = *src;
}

std::vector<std::uint8_t> parse_payload_hex(const std::string& hex, const std::string& path) {
    if (hex.size() % 2 != 0) fail(path, "hex payload must have an even number of digits");
    if (hex.size() > 16) fail(path, "payload exceeds 8 bytes");
    std::vector<std::uint8_t> bytes(hex.size() / 2);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const auto nibble = [&](char c) -> unsigned {
            if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
            if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
            if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
            fail(path, "payload is not valid hex");
        };
        bytes[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    }
    return bytes;
}

void check_known_fields(const json& obj, const std::set<std::string>& known,
                        const std::string& path) {
    for (const auto& [k, v] : obj.items()) {
        (void)v;
        if (known.count(k) == 0) fail(path + "." + k, "unknown field");
    }
}

std::vector<std::uint16_t> parse_id_list(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array of CAN identifiers");
    std::vector<std::uint16_t> ids;
    std::set<std::uint16_t> seen;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::uint16_t id = parse_id(v[i], path + "[" + std::to_string(i) + "]");
        if (!seen.insert(id).second) {
            fail(path + "[" + std::to_string(i) + "]", "duplicate identifier " + id_str(id));
        }
        ids.push_back(id);
    }
    return ids;
}

// Broadcast-channel derivation. Each role derives the broadcast key part
// from the matching data-channel part it already holds, so the derived
// channel preserves the key-distribution boundaries of the data channel.
Key128 derive_part(const Key128& root, char part, std::uint16_t data_id) {
    const Cmac mac(root);
    const std::vector<std::uint8_t> msg = {
        'b', 'c', 'a', 's', 't', '-', static_cast<std::uint8_t>(part),
        static_cast<std::uint8_t>(data_id >> 8), static_cast<std::uint8_t>(data_id & 0xFF)};
    return mac.mac(msg);
}

// ---------------------------------------------------------------------------
// Passive bus observer: counts error events and stuff bits without acking.

class MonitorNode final : public CanPort {
public:
    MonitorNode(std::string name, BitTiming timing) : CanPort(std::move(name), timing) {}

    std::uint64_t error_events = 0;
    std::uint64_t stuff_bits = 0;
    std::uint64_t frames = 0;

protected:
    void on_frame_bit(const FrameAssembler::Step& step) override {
        if (step.section == FrameAssembler::Section::Sof) frame_stuff_ = 0;
        if (step.stuff_bit) ++frame_stuff_;
    }
    void on_frame_complete(const FrameAssembler&) override {
        stuff_bits += frame_stuff_;
        ++frames;
    }
    void on_rx_error(DecodeError) override { ++error_events; }

private:
    unsigned frame_stuff_ = 0;
};

// Blunt fault injection: holds the wire dominant for a stretch of quanta.
class JamNode final : public Node {
public:
    JamNode(std::string name, std::uint64_t start_quantum, std::uint64_t quanta)
        : name_(std::move(name)), start_(start_quantum), end_(start_quantum + quanta) {}

    std::string_view name() const override { return name_; }

    void on_quantum(std::uint64_t q, bool) override {
        const std::uint64_t next = q + 1;  // drives land one quantum later
        set_drive(next >= start_ && next < end_ ? DriveLevel::Dominant
                                                : DriveLevel::PassiveRecessive);
    }

private:
    std::string name_;
    std::uint64_t start_;
    std::uint64_t end_;
};

ChannelKeys keys_from_parts(const KeyParts& parts) {
    ChannelKeys ck;
    if (parts.group) ck.group = *parts.group;
    if (parts.hash) ck.source.hash_key = *parts.hash;
    if (parts.mask) ck.source.masking_key = *parts.mask;
    return ck;
}

ChannelKeys derived_broadcast_keys(const KeyParts& parts, std::uint16_t data_id) {
    ChannelKeys ck;
    if (parts.group) ck.group = derive_part(*parts.group, 'g', data_id);
    if (parts.hash) ck.source.hash_key = derive_part(*parts.hash, 'h', data_id);
    if (parts.mask) ck.source.masking_key = derive_part(*parts.mask, 'm', data_id);
    return ck;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parsing

std::uint64_t ScenarioConfig::frames_on_id(std::uint16_t can_id) const {
    std::uint64_t total = 0;
    for (const auto& s : senders) {
        for (const auto& t : s.traffic) {
            if (t.can_id == can_id) total += t.frames;
        }
    }
    return total;
}

namespace {

void parse_sender(const json& node, const std::string& path, bool legacy, ScenarioConfig& cfg) {
    check_known_fields(node, {"role", "name", "position_m", "ids", "keys", "capabilities"},
                       path);
    ScenarioConfig::SenderSpec s;
    s.name = get_string(require(node, "name", path), path + ".name");
    s.position_m = get_double(require(node, "position_m", path), path + ".position_m");
    s.legacy_only = legacy;
    s.ids = parse_id_list(require(node, "ids", path), path + ".ids");

    if (node.contains("keys")) {
        if (legacy) fail(path + ".keys", "a legacy unit holds no key material");
        const json& keys = node["keys"];
        if (!keys.is_object()) fail(path + ".keys", "expected an object keyed by CAN id");
        for (const auto& [k, v] : keys.items()) {
            const std::uint16_t id = parse_id(json(k), path + ".keys." + k);
            if (std::find(s.ids.begin(), s.ids.end(), id) == s.ids.end()) {
                fail(path + ".keys." + k, "key declared for an id this node does not transmit");
            }
            const KeyParts parts = parse_key_parts(v, path + ".keys." + k);
            auto& merged = cfg.keys[id];
            merge_part(merged.group, parts.group, path + ".keys." + k + ".group");
            merge_part(merged.hash, parts.hash, path + ".keys." + k + ".hash");
            merge_part(merged.mask, parts.mask, path + ".keys." + k + ".mask");
            s.keys[id] = parts;
        }
    }

    if (node.contains("capabilities")) {
        const json& cap = node["capabilities"];
        const std::string cpath = path + ".capabilities";
        if (!cap.is_object()) fail(cpath, "expected an object");
        if (legacy) fail(cpath, "a legacy unit takes no capabilities");
        check_known_fields(cap,
                           {"aggregate_source_tag", "max_retransmissions", "tolerant_monitor",
                            "backup_authenticator", "fallback_to_insecure"},
                           cpath);
        if (cap.contains("aggregate_source_tag")) {
            s.aggregate_source_tag =
                get_bool(cap["aggregate_source_tag"], cpath + ".aggregate_source_tag");
        }
        if (cap.contains("max_retransmissions")) {
            s.max_retransmissions = static_cast<unsigned>(
                get_u64(cap["max_retransmissions"], cpath + ".max_retransmissions"));
        }
        if (cap.contains("tolerant_monitor")) {
            s.tolerant_monitor = get_bool(cap["tolerant_monitor"], cpath + ".tolerant_monitor");
        }
        if (cap.contains("backup_authenticator")) {
            const json& v = cap["backup_authenticator"];
            if (!v.is_number_integer()) {
                fail(cpath + ".backup_authenticator", "expected an integer (-1 disables)");
            }
            const auto idx = v.get<std::int64_t>();
            if (idx < -1 || idx > 255) {
                fail(cpath + ".backup_authenticator", "index out of range");
            }
            s.backup_authenticator = static_cast<int>(idx);
        }
        if (cap.contains("fallback_to_insecure")) {
            s.fallback_to_insecure =
                get_bool(cap["fallback_to_insecure"], cpath + ".fallback_to_insecure");
        }
    }
    cfg.senders.push_back(std::move(s));
}

void parse_receiver(const json& node, const std::string& path, ScenarioConfig& cfg) {
    check_known_fields(node, {"role", "name", "position_m", "ids", "keys", "capabilities"},
                       path);
    ScenarioConfig::ReceiverSpec r;
    r.name = get_string(require(node, "name", path), path + ".name");
    r.position_m = get_double(require(node, "position_m", path), path + ".position_m");
    const std::vector<std::uint16_t> ids = parse_id_list(require(node, "ids", path),
                                                         path + ".ids");

    std::set<std::uint16_t> keyed;
    if (node.contains("keys")) {
        const json& keys = node["keys"];
        if (!keys.is_object()) fail(path + ".keys", "expected an object keyed by CAN id");
        for (const auto& [k, v] : keys.items()) {
            const std::uint16_t id = parse_id(json(k), path + ".keys." + k);
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
                fail(path + ".keys." + k, "key declared for an id this node does not receive");
            }
            const KeyParts parts = parse_key_parts(v, path + ".keys." + k);
            if (parts.hash || parts.mask) {
                fail(path + ".keys." + k,
                     "receivers hold only the group key; source keys stay with the sender and "
                     "authenticator");
            }
            if (!parts.group) fail(path + ".keys." + k, "missing the group key");
            auto& merged = cfg.keys[id];
            merge_part(merged.group, parts.group, path + ".keys." + k + ".group");
            r.keys[id] = parts;
            keyed.insert(id);
        }
    }
    for (const std::uint16_t id : ids) {
        (keyed.count(id) != 0 ? r.secured_ids : r.legacy_ids).push_back(id);
    }

    if (node.contains("capabilities")) {
        const json& cap = node["capabilities"];
        const std::string cpath = path + ".capabilities";
        if (!cap.is_object()) fail(cpath, "expected an object");
        check_known_fields(cap, {"send_reset_requests"}, cpath);
        if (cap.contains("send_reset_requests")) {
            r.send_reset_requests =
                get_bool(cap["send_reset_requests"], cpath + ".send_reset_requests");
        }
    }
    cfg.receivers.push_back(std::move(r));
}

void parse_authenticator(const json& node, const std::string& path, ScenarioConfig& cfg) {
    check_known_fields(node, {"role", "name", "position_m", "ids", "active", "keys",
                              "capabilities"},
                       path);
    ScenarioConfig::AuthenticatorSpec a;
    a.name = get_string(require(node, "name", path), path + ".name");
    a.position_m = get_double(require(node, "position_m", path), path + ".position_m");
    a.ids = parse_id_list(require(node, "ids", path), path + ".ids");
    a.active = node.contains("active") ? parse_id_list(node["active"], path + ".active")
                                       : a.ids;
    for (const std::uint16_t id : a.active) {
        if (std::find(a.ids.begin(), a.ids.end(), id) == a.ids.end()) {
            fail(path + ".active", "active id " + id_str(id) + " is not in ids");
        }
    }

    const json& keys = require(node, "keys", path);
    if (!keys.is_object()) fail(path + ".keys", "expected an object keyed by CAN id");
    for (const auto& [k, v] : keys.items()) {
        const std::uint16_t id = parse_id(json(k), path + ".keys." + k);
        if (std::find(a.ids.begin(), a.ids.end(), id) == a.ids.end()) {
            fail(path + ".keys." + k, "key declared for an id this node does not serve");
        }
        const KeyParts parts = parse_key_parts(v, path + ".keys." + k);
        if (parts.group) {
            fail(path + ".keys." + k,
                 "authenticators hold only the pairwise source keys, never the group key");
        }
        if (!parts.hash || !parts.mask) {
            fail(path + ".keys." + k, "an authenticator needs both hash and mask keys");
        }
        auto& merged = cfg.keys[id];
        merge_part(merged.hash, parts.hash, path + ".keys." + k + ".hash");
        merge_part(merged.mask, parts.mask, path + ".keys." + k + ".mask");
        a.keys[id] = parts;
    }
    for (const std::uint16_t id : a.ids) {
        if (a.keys.count(id) == 0) {
            fail(path + ".keys", "no key material for served id " + id_str(id));
        }
    }

    if (node.contains("capabilities")) {
        const json& cap = node["capabilities"];
        const std::string cpath = path + ".capabilities";
        if (!cap.is_object()) fail(cpath, "expected an object");
        check_known_fields(cap, {"index"}, cpath);
        if (cap.contains("index")) {
            const std::uint64_t idx = get_u64(cap["index"], cpath + ".index");
            if (idx > 255) fail(cpath + ".index", "index out of range");
            a.index = static_cast<std::uint8_t>(idx);
        }
    }
    cfg.authenticators.push_back(std::move(a));
}

void parse_attacker(const json& node, const std::string& path, ScenarioConfig& cfg) {
    check_known_fields(node, {"role", "name", "position_m", "ids", "keys", "capabilities"},
                       path);
    ScenarioConfig::AttackerSpec at;
    at.name = get_string(require(node, "name", path), path + ".name");
    at.position_m = get_double(require(node, "position_m", path), path + ".position_m");
    const auto ids = parse_id_list(require(node, "ids", path), path + ".ids");
    if (ids.size() != 1) fail(path + ".ids", "an attacker targets exactly one identifier");
    at.target_id = ids[0];

    const json& cap = require(node, "capabilities", path);
    const std::string cpath = path + ".capabilities";
    if (!cap.is_object()) fail(cpath, "expected an object");
    check_known_fields(cap, {"kind", "dlc", "attempts", "replays", "record_limit",
                             "max_attacks", "start_after"},
                       cpath);
    const std::string kind = get_string(require(cap, "kind", cpath), cpath + ".kind");
    using Kind = ScenarioConfig::AttackerSpec::Kind;
    if (kind == "masquerade") {
        at.kind = Kind::Masquerade;
    } else if (kind == "auth_forge") {
        at.kind = Kind::AuthForge;
    } else if (kind == "replay") {
        at.kind = Kind::Replay;
    } else if (kind == "bitmod") {
        at.kind = Kind::BitMod;
    } else {
        fail(cpath + ".kind", "expected masquerade, auth_forge, replay or bitmod");
    }

    if (cap.contains("dlc")) {
        const std::uint64_t dlc = get_u64(cap["dlc"], cpath + ".dlc");
        if (dlc < 1 || dlc > 8) fail(cpath + ".dlc", "dlc must be 1..8");
        at.dlc = static_cast<std::uint8_t>(dlc);
    }
    if (cap.contains("start_after")) {
        at.start_after = get_u64(cap["start_after"], cpath + ".start_after");
    }

    KeyParts parts;
    if (node.contains("keys")) {
        const json& keys = node["keys"];
        if (!keys.is_object()) fail(path + ".keys", "expected an object keyed by CAN id");
        for (const auto& [k, v] : keys.items()) {
            const std::uint16_t id = parse_id(json(k), path + ".keys." + k);
            if (id != at.target_id) {
                fail(path + ".keys." + k, "key declared for an id this node does not target");
            }
            parts = parse_key_parts(v, path + ".keys." + k);
            auto& merged = cfg.keys[id];
            merge_part(merged.group, parts.group, path + ".keys." + k + ".group");
            merge_part(merged.hash, parts.hash, path + ".keys." + k + ".hash");
            merge_part(merged.mask, parts.mask, path + ".keys." + k + ".mask");
            at.keys[id] = parts;
        }
    }

    switch (at.kind) {
        case Kind::Masquerade:
            if (!parts.group || parts.hash || parts.mask) {
                fail(path + ".keys",
                     "a masquerading group member holds exactly the group key");
            }
            at.attempts = get_u64(require(cap, "attempts", cpath), cpath + ".attempts");
            if (at.attempts == 0) fail(cpath + ".attempts", "must be positive");
            break;
        case Kind::AuthForge:
            if (parts.group || !parts.hash || !parts.mask) {
                fail(path + ".keys",
                     "a rogue authenticator holds the source keys but not the group key");
            }
            at.attempts = get_u64(require(cap, "attempts", cpath), cpath + ".attempts");
            if (at.attempts == 0) fail(cpath + ".attempts", "must be positive");
            break;
        case Kind::Replay:
            if (node.contains("keys")) fail(path + ".keys", "a replayer needs no keys");
            at.replays = get_u64(require(cap, "replays", cpath), cpath + ".replays");
            if (at.replays == 0) fail(cpath + ".replays", "must be positive");
            if (cap.contains("record_limit")) {
                at.record_limit = get_u64(cap["record_limit"], cpath + ".record_limit");
                if (at.record_limit == 0) fail(cpath + ".record_limit", "must be positive");
            }
            break;
        case Kind::BitMod:
            if (node.contains("keys")) fail(path + ".keys", "a bit modifier needs no keys");
            if (cap.contains("max_attacks")) {
                at.max_attacks = get_u64(cap["max_attacks"], cpath + ".max_attacks");
                if (at.max_attacks == 0) fail(cpath + ".max_attacks", "must be positive");
            }
            break;
    }
    cfg.attackers.push_back(std::move(at));
}

void parse_traffic(const json& arr, ScenarioConfig& cfg) {
    if (!arr.is_array()) fail("traffic", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "traffic[" + std::to_string(i) + "]";
        const json& entry = arr[i];
        if (!entry.is_object()) fail(path, "expected an object");
        check_known_fields(entry,
                           {"can_id", "dlc", "count", "period_bits", "payload_hex", "secured"},
                           path);

        TrafficSpec t;
        t.can_id = parse_id(require(entry, "can_id", path), path + ".can_id");
        if (entry.contains("dlc")) {
            const std::uint64_t dlc = get_u64(entry["dlc"], path + ".dlc");
            if (dlc < 1 || dlc > 8) fail(path + ".dlc", "dlc must be 1..8");
            t.dlc = static_cast<std::uint8_t>(dlc);
        }
        t.frames = get_u64(require(entry, "count", path), path + ".count");
        if (t.frames == 0) fail(path + ".count", "must be positive");
        if (entry.contains("period_bits")) {
            t.period_bits = get_u64(entry["period_bits"], path + ".period_bits");
        }
        if (entry.contains("payload_hex")) {
            t.payload = parse_payload_hex(
                get_string(entry["payload_hex"], path + ".payload_hex"),
                path + ".payload_hex");
        }

        ScenarioConfig::SenderSpec* owner = nullptr;
        for (auto& s : cfg.senders) {
            if (std::find(s.ids.begin(), s.ids.end(), t.can_id) == s.ids.end()) continue;
            if (owner != nullptr) {
                fail(path + ".can_id",
                     id_str(t.can_id) + " is listed by more than one transmitter");
            }
            owner = &s;
        }
        if (owner == nullptr) {
            fail(path + ".can_id", "no transmitter lists " + id_str(t.can_id));
        }

        const bool has_keys = owner->keys.count(t.can_id) != 0;
        t.secured = entry.contains("secured") ? get_bool(entry["secured"], path + ".secured")
                                              : has_keys;
        if (t.secured && !has_keys) {
            fail(path + ".secured",
                 "transmitter '" + owner->name + "' has no keys for " + id_str(t.can_id));
        }
        if (t.secured) {
            const unsigned data_bits = 8u * t.dlc;
            const unsigned overhead = kCounterLsbBits + cfg.tag_width;
            if (data_bits <= overhead) {
                fail(path + ".dlc", "data field too small for the freshness and tag fields");
            }
        }
        owner->traffic.push_back(std::move(t));
    }
}

void parse_faults(const json& arr, ScenarioConfig& cfg) {
    if (!arr.is_array()) fail("faults", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "faults[" + std::to_string(i) + "]";
        const json& entry = arr[i];
        if (!entry.is_object()) fail(path, "expected an object");
        const std::string type = get_string(require(entry, "type", path), path + ".type");

        if (type == "desync_burst") {
            check_known_fields(entry, {"type", "node", "can_id", "at_frame", "count"}, path);
            const std::string node = get_string(require(entry, "node", path), path + ".node");
            auto it = std::find_if(cfg.receivers.begin(), cfg.receivers.end(),
                                   [&](const auto& r) { return r.name == node; });
            if (it == cfg.receivers.end()) fail(path + ".node", "no receiver named " + node);
            if (it->faults.deaf_id != 0) {
                fail(path + ".node", "receiver already has a desync fault");
            }
            it->faults.deaf_id = parse_id(require(entry, "can_id", path), path + ".can_id");
            it->faults.deaf_after = get_u64(require(entry, "at_frame", path),
                                            path + ".at_frame");
            it->faults.deaf_count = get_u64(require(entry, "count", path), path + ".count");
            if (it->faults.deaf_count == 0) fail(path + ".count", "must be positive");
        } else if (type == "disconnect_authenticator") {
            check_known_fields(entry, {"type", "node", "at_frame", "at_quantum"}, path);
            const std::string node = get_string(require(entry, "node", path), path + ".node");
            auto it = std::find_if(cfg.authenticators.begin(), cfg.authenticators.end(),
                                   [&](const auto& a) { return a.name == node; });
            if (it == cfg.authenticators.end()) {
                fail(path + ".node", "no authenticator named " + node);
            }
            if (entry.contains("at_frame") == entry.contains("at_quantum")) {
                fail(path, "give exactly one of at_frame or at_quantum");
            }
            if (entry.contains("at_frame")) {
                it->disable_after_frames = get_u64(entry["at_frame"], path + ".at_frame");
                if (it->disable_after_frames == 0) fail(path + ".at_frame", "must be positive");
            } else {
                it->disable_at_quantum = get_u64(entry["at_quantum"], path + ".at_quantum");
                if (it->disable_at_quantum == 0) fail(path + ".at_quantum", "must be positive");
            }
        } else if (type == "counter_jump") {
            check_known_fields(entry, {"type", "node", "can_id", "at_frame", "delta"}, path);
            const std::string node = get_string(require(entry, "node", path), path + ".node");
            auto it = std::find_if(cfg.senders.begin(), cfg.senders.end(),
                                   [&](const auto& s) { return s.name == node; });
            if (it == cfg.senders.end()) fail(path + ".node", "no transmitter named " + node);
            if (it->faults.counter_jump_id != 0) {
                fail(path + ".node", "transmitter already has a counter-jump fault");
            }
            it->faults.counter_jump_id = parse_id(require(entry, "can_id", path),
                                                  path + ".can_id");
            it->faults.counter_jump_after = get_u64(require(entry, "at_frame", path),
                                                    path + ".at_frame");
            it->faults.counter_jump_delta = get_u64(require(entry, "delta", path),
                                                    path + ".delta");
            if (it->faults.counter_jump_delta == 0) fail(path + ".delta", "must be positive");
        } else if (type == "jam") {
            check_known_fields(entry, {"type", "at_quantum", "bits"}, path);
            ScenarioConfig::JamSpec jam;
            jam.at_quantum = get_u64(require(entry, "at_quantum", path), path + ".at_quantum");
            if (entry.contains("bits")) {
                jam.bits = static_cast<unsigned>(get_u64(entry["bits"], path + ".bits"));
                if (jam.bits == 0) fail(path + ".bits", "must be positive");
            }
            cfg.jams.push_back(jam);
        } else {
            fail(path + ".type",
                 "expected desync_burst, disconnect_authenticator, counter_jump or jam");
        }
    }
}

void parse_expectations(const json& obj, ScenarioConfig& cfg) {
    if (!obj.is_object()) fail("expect", "expected an object");
    static const std::set<std::string> known = {
        "frames_sent",     "frames_accepted",   "frames_rejected", "frames_aborted",
        "error_frames",    "forged_accepts",    "stray_rejects",   "recovery_events",
        "handover_events", "nonce_reuse_events", "legacy_deliveries", "accept_ratio"};
    for (const auto& [k, v] : obj.items()) {
        if (known.count(k) == 0) fail("expect." + k, "unknown metric");
        cfg.expectations.emplace_back(k, get_double(v, "expect." + k));
    }
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        fail("$", std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object()) fail("$", "top level must be an object");
    check_known_fields(root,
                       {"name", "description", "bitrate_bps", "quanta_per_bit", "sjw", "bus",
                        "tag_width", "seed", "max_quanta", "nodes", "traffic", "faults",
                        "expect"},
                       "$");

    ScenarioConfig cfg;
    if (root.contains("name")) cfg.name = get_string(root["name"], "name");
    if (root.contains("description")) {
        cfg.description = get_string(root["description"], "description");
    }
    if (root.contains("bitrate_bps")) {
        cfg.bitrate_bps = get_double(root["bitrate_bps"], "bitrate_bps");
        if (cfg.bitrate_bps <= 0) fail("bitrate_bps", "must be positive");
    }
    if (root.contains("quanta_per_bit")) {
        cfg.quanta_per_bit =
            static_cast<unsigned>(get_u64(root["quanta_per_bit"], "quanta_per_bit"));
        if (cfg.quanta_per_bit < 8 || cfg.quanta_per_bit > 25) {
            fail("quanta_per_bit", "must be 8..25");
        }
    }
    if (root.contains("sjw")) {
        cfg.sjw = static_cast<unsigned>(get_u64(root["sjw"], "sjw"));
        if (cfg.sjw < 1 || cfg.sjw > 4) fail("sjw", "must be 1..4");
    }
    if (root.contains("bus")) {
        const json& bus = root["bus"];
        if (!bus.is_object()) fail("bus", "expected an object");
        check_known_fields(bus, {"length_m", "signal_speed_ns_per_m"}, "bus");
        if (bus.contains("length_m")) {
            cfg.bus_length_m = get_double(bus["length_m"], "bus.length_m");
            if (cfg.bus_length_m < 0) fail("bus.length_m", "must be non-negative");
        }
        if (bus.contains("signal_speed_ns_per_m")) {
            cfg.signal_speed_ns_per_m =
                get_double(bus["signal_speed_ns_per_m"], "bus.signal_speed_ns_per_m");
            if (cfg.signal_speed_ns_per_m <= 0) {
                fail("bus.signal_speed_ns_per_m", "must be positive");
            }
        }
    }
    if (root.contains("tag_width")) {
        const std::uint64_t w = get_u64(root["tag_width"], "tag_width");
        if (w != 8 && w != 16 && w != 24) fail("tag_width", "must be 8, 16 or 24");
        cfg.tag_width = static_cast<unsigned>(w);
    }
    if (root.contains("seed")) cfg.seed = get_u64(root["seed"], "seed");
    if (root.contains("max_quanta")) {
        cfg.max_quanta = get_u64(root["max_quanta"], "max_quanta");
        if (cfg.max_quanta == 0) fail("max_quanta", "must be positive");
    }

    const json& nodes = require(root, "nodes", "$");
    if (!nodes.is_array() || nodes.empty()) fail("nodes", "expected a non-empty array");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string path = "nodes[" + std::to_string(i) + "]";
        const json& node = nodes[i];
        if (!node.is_object()) fail(path, "expected an object");
        const std::string role = get_string(require(node, "role", path), path + ".role");
        if (role == "transmitter") {
            parse_sender(node, path, false, cfg);
        } else if (role == "legacy") {
            parse_sender(node, path, true, cfg);
        } else if (role == "receiver") {
            parse_receiver(node, path, cfg);
        } else if (role == "authenticator") {
            parse_authenticator(node, path, cfg);
        } else if (role == "attacker") {
            parse_attacker(node, path, cfg);
        } else {
            fail(path + ".role",
                 "expected transmitter, receiver, authenticator, attacker or legacy");
        }
    }

    // Global node checks: unique names, sane placement, bounded counts.
    {
        std::set<std::string> names;
        const auto check_node = [&](const std::string& name, double pos) {
            if (!names.insert(name).second) fail("nodes", "duplicate node name '" + name + "'");
            if (pos < 0 || pos > cfg.bus_length_m) {
                fail("nodes", "node '" + name + "' is placed outside the bus");
            }
        };
        for (const auto& s : cfg.senders) check_node(s.name, s.position_m);
        for (const auto& r : cfg.receivers) check_node(r.name, r.position_m);
        for (const auto& a : cfg.authenticators) check_node(a.name, a.position_m);
        for (const auto& a : cfg.attackers) check_node(a.name, a.position_m);

        const std::size_t total = cfg.senders.size() + cfg.receivers.size() +
                                  cfg.authenticators.size() + cfg.attackers.size() +
                                  cfg.jams.size() + 1;  // + monitor
        if (total > Bus::kMaxNodes) fail("nodes", "too many nodes for one bus");
        if (cfg.receivers.size() > ProtocolIds::kMaxRequesters) {
            fail("nodes", "too many receivers for the reset-request id range");
        }
    }

    if (root.contains("traffic")) parse_traffic(root["traffic"], cfg);
    if (root.contains("faults")) parse_faults(root["faults"], cfg);
    if (root.contains("expect")) parse_expectations(root["expect"], cfg);

    // Assign the management channel ids: one announce/broadcast pair per
    // keyed data id, in id order, directly above the reset/handover range.
    {
        std::uint16_t next = 0x021;
        for (const auto& [id, parts] : cfg.keys) {
            (void)parts;
            cfg.protocol.announce[id] = next++;
            cfg.protocol.broadcast[id] = next++;
        }
        std::set<std::uint16_t> declared;
        const auto collect = [&](const std::vector<std::uint16_t>& ids) {
            declared.insert(ids.begin(), ids.end());
        };
        for (const auto& s : cfg.senders) collect(s.ids);
        for (const auto& r : cfg.receivers) {
            collect(r.secured_ids);
            collect(r.legacy_ids);
        }
        for (const auto& a : cfg.authenticators) collect(a.ids);
        for (const auto& a : cfg.attackers) declared.insert(a.target_id);
        for (const std::uint16_t id : declared) {
            if (id < next || cfg.protocol.is_reset_request(id) || id == cfg.protocol.handover) {
                fail("nodes", "identifier " + id_str(id) +
                                  " collides with the management id range (use ids >= " +
                                  id_str(next) + ")");
            }
        }
    }

    // Key-completeness per role and mode.
    for (std::size_t i = 0; i < cfg.senders.size(); ++i) {
        const auto& s = cfg.senders[i];
        for (const auto& t : s.traffic) {
            if (!t.secured) continue;
            const auto it = s.keys.find(t.can_id);
            if (it == s.keys.end() || !it->second.group) {
                fail("nodes", "transmitter '" + s.name + "' lacks the group key for " +
                                  id_str(t.can_id));
            }
            if (s.aggregate_source_tag && (!it->second.hash || !it->second.mask)) {
                fail("nodes", "transmitter '" + s.name + "' aggregates source tags for " +
                                  id_str(t.can_id) + " but lacks the source keys");
            }
        }
    }
    for (const auto& a : cfg.attackers) {
        using Kind = ScenarioConfig::AttackerSpec::Kind;
        if (a.kind == Kind::BitMod) {
            bool owned = false;
            for (const auto& s : cfg.senders) {
                for (const auto& t : s.traffic) owned = owned || t.can_id == a.target_id;
            }
            if (!owned) {
                fail("nodes", "bit modifier '" + a.name + "' targets " + id_str(a.target_id) +
                                  " but no traffic is generated on it");
            }
        }
    }

    return cfg;
}

ScenarioConfig load_scenario(const std::string& file_path) {
    std::ifstream in(file_path, std::ios::binary);
    if (!in) fail("$", "cannot open '" + file_path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

// ---------------------------------------------------------------------------
// Simulation

struct Simulation::Impl {
    BitTiming timing;
    Bus bus;
    SharedLog log;
    MonitorNode monitor;
    std::vector<std::unique_ptr<TransmitterNode>> senders;
    std::vector<std::unique_ptr<ReceiverNode>> receivers;
    std::vector<std::unique_ptr<AuthenticatorNode>> auths;
    std::vector<std::unique_ptr<ForgeryAttacker>> forgers;
    std::vector<std::unique_ptr<ReplayNode>> replayers;
    std::vector<std::unique_ptr<BitModAttacker>> bitmods;
    std::vector<std::unique_ptr<JamNode>> jams;
    bool ran = false;

    Impl(const ScenarioConfig& cfg)
        : timing(BitTiming::for_quanta(cfg.quanta_per_bit, cfg.sjw)),
          bus(1e9 / (cfg.bitrate_bps * cfg.quanta_per_bit), cfg.signal_speed_ns_per_m),
          monitor("monitor", timing) {
        build(cfg);
    }

    void build(const ScenarioConfig& cfg) {
        using Kind = ScenarioConfig::AttackerSpec::Kind;

        // Bit modifiers first: the owning transmitter's built_hook needs them.
        for (const auto& spec : cfg.attackers) {
            if (spec.kind != Kind::BitMod) continue;
            BitModConfig bc;
            bc.target_id = spec.target_id;
            bc.max_attacks = spec.max_attacks;
            bc.seed = node_seed(cfg.seed, spec.name);
            bitmods.push_back(std::make_unique<BitModAttacker>(spec.name, timing, bc));
        }

        for (const auto& spec : cfg.senders) {
            TransmitterConfig tc;
            tc.traffic = spec.traffic;
            tc.protocol = cfg.protocol;
            tc.tag_width = cfg.tag_width;
            tc.aggregate_source_tag = spec.aggregate_source_tag;
            tc.max_retransmissions = spec.max_retransmissions;
            tc.tolerant_monitor = spec.tolerant_monitor;
            tc.backup_authenticator = spec.backup_authenticator;
            tc.fallback_to_insecure = spec.fallback_to_insecure;
            tc.faults = spec.faults;
            tc.seed = node_seed(cfg.seed, spec.name);
            for (const auto& [id, parts] : spec.keys) {
                tc.keys[id] = keys_from_parts(parts);
                tc.keys[cfg.protocol.broadcast.at(id)] = derived_broadcast_keys(parts, id);
            }

            std::vector<BitModAttacker*> armers;
            for (auto& bm : bitmods) {
                for (const auto& t : spec.traffic) {
                    if (bm->config().target_id == t.can_id) {
                        armers.push_back(bm.get());
                        break;
                    }
                }
            }
            if (!armers.empty()) {
                tc.built_hook = [armers](const EncodedFrame& f) {
                    for (BitModAttacker* bm : armers) bm->arm(f);
                };
            }
            senders.push_back(
                std::make_unique<TransmitterNode>(spec.name, timing, tc, &log));
        }

        for (const auto& spec : cfg.authenticators) {
            AuthenticatorConfig ac;
            ac.protocol = cfg.protocol;
            ac.tag_width = cfg.tag_width;
            ac.index = spec.index;
            ac.disable_at_quantum = spec.disable_at_quantum;
            ac.disable_after_frames = spec.disable_after_frames;
            for (const auto& [id, parts] : spec.keys) {
                ac.keys[id] = keys_from_parts(parts);
                ac.keys[cfg.protocol.broadcast.at(id)] = derived_broadcast_keys(parts, id);
            }
            ac.active_ids = spec.active;
            for (const std::uint16_t id : spec.active) {
                ac.active_ids.push_back(cfg.protocol.broadcast.at(id));
            }
            auths.push_back(std::make_unique<AuthenticatorNode>(spec.name, timing, ac));
        }

        std::uint8_t request_index = 0;
        for (const auto& spec : cfg.receivers) {
            ReceiverConfig rc;
            rc.protocol = cfg.protocol;
            rc.request_index = request_index++;
            rc.send_reset_requests = spec.send_reset_requests;
            rc.faults = spec.faults;
            for (const std::uint16_t id : spec.secured_ids) {
                const Key128 group = *spec.keys.at(id).group;
                rc.subscriptions.push_back({id, true, cfg.tag_width, group});
                rc.subscriptions.push_back({cfg.protocol.broadcast.at(id), true,
                                            cfg.tag_width, derive_part(group, 'g', id)});
            }
            for (const std::uint16_t id : spec.legacy_ids) {
                rc.subscriptions.push_back({id, false, cfg.tag_width, Key128{}});
            }
            receivers.push_back(
                std::make_unique<ReceiverNode>(spec.name, timing, rc, &log));
        }

        for (const auto& spec : cfg.attackers) {
            if (spec.kind == Kind::Masquerade || spec.kind == Kind::AuthForge) {
                ForgeryAttackerConfig fc;
                fc.mode = spec.kind == Kind::Masquerade
                              ? ForgeryAttackerConfig::Mode::GuessSourceTag
                              : ForgeryAttackerConfig::Mode::GuessIntegrityTag;
                fc.target_id = spec.target_id;
                fc.dlc = spec.dlc;
                fc.tag_width = cfg.tag_width;
                const KeyParts& parts = spec.keys.at(spec.target_id);
                if (parts.group) fc.group_key = *parts.group;
                if (parts.hash) fc.source_keys.hash_key = *parts.hash;
                if (parts.mask) fc.source_keys.masking_key = *parts.mask;
                fc.attempts = spec.attempts;
                fc.start_after = spec.start_after.value_or(cfg.frames_on_id(spec.target_id));
                fc.seed = node_seed(cfg.seed, spec.name);
                forgers.push_back(
                    std::make_unique<ForgeryAttacker>(spec.name, timing, fc));
            } else if (spec.kind == Kind::Replay) {
                ReplayConfig rc;
                rc.target_id = spec.target_id;
                rc.tag_width = cfg.tag_width;
                rc.record_limit = spec.record_limit;
                rc.replays = spec.replays;
                rc.start_after = spec.start_after.value_or(cfg.frames_on_id(spec.target_id));
                replayers.push_back(std::make_unique<ReplayNode>(spec.name, timing, rc));
            }
        }

        for (std::size_t i = 0; i < cfg.jams.size(); ++i) {
            jams.push_back(std::make_unique<JamNode>(
                "jam" + std::to_string(i), cfg.jams[i].at_quantum,
                std::uint64_t{cfg.jams[i].bits} * timing.quanta));
        }

        // Wire everything up. Positions come from the specs in order.
        for (std::size_t i = 0; i < senders.size(); ++i) {
            senders[i]->set_trace(&bus.trace);
            bus.attach(senders[i].get(), cfg.senders[i].position_m);
        }
        for (std::size_t i = 0; i < auths.size(); ++i) {
            auths[i]->set_trace(&bus.trace);
            bus.attach(auths[i].get(), cfg.authenticators[i].position_m);
        }
        for (std::size_t i = 0; i < receivers.size(); ++i) {
            receivers[i]->set_trace(&bus.trace);
            bus.attach(receivers[i].get(), cfg.receivers[i].position_m);
        }
        {
            std::size_t fi = 0, ri = 0, bi = 0;
            for (const auto& spec : cfg.attackers) {
                CanPort* port = nullptr;
                if (spec.kind == Kind::Masquerade || spec.kind == Kind::AuthForge) {
                    port = forgers[fi++].get();
                } else if (spec.kind == Kind::Replay) {
                    port = replayers[ri++].get();
                } else {
                    port = bitmods[bi++].get();
                }
                port->set_trace(&bus.trace);
                bus.attach(port, spec.position_m);
            }
        }
        for (auto& jam : jams) bus.attach(jam.get(), 0.0);
        monitor.set_trace(&bus.trace);
        bus.attach(&monitor, cfg.bus_length_m / 2);
    }

    bool all_done() const {
        for (const auto& s : senders) {
            if (!s->done()) return false;
        }
        for (const auto& f : forgers) {
            if (!f->done()) return false;
        }
        for (const auto& r : replayers) {
            if (!r->done()) return false;
        }
        return true;
    }
};

Simulation::Simulation(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    impl_ = std::make_unique<Impl>(cfg_);
}

Simulation::~Simulation() = default;

void Simulation::enable_trace(bool record_drivers) {
    impl_->bus.trace.enabled = true;
    impl_->bus.trace.record_drivers = record_drivers;
}

Bus& Simulation::bus() { return impl_->bus; }
const SharedLog& Simulation::log() const { return impl_->log; }

const std::vector<std::unique_ptr<TransmitterNode>>& Simulation::senders() const {
    return impl_->senders;
}
const std::vector<std::unique_ptr<ReceiverNode>>& Simulation::receivers() const {
    return impl_->receivers;
}
const std::vector<std::unique_ptr<AuthenticatorNode>>& Simulation::authenticators() const {
    return impl_->auths;
}

TransmitterNode* Simulation::sender(const std::string& name) {
    for (auto& s : impl_->senders) {
        if (s->name() == name) return s.get();
    }
    return nullptr;
}

ReceiverNode* Simulation::receiver(const std::string& name) {
    for (auto& r : impl_->receivers) {
        if (r->name() == name) return r.get();
    }
    return nullptr;
}

const RunMetrics& Simulation::run() {
    Impl& im = *impl_;
    if (im.ran) return metrics_;
    im.ran = true;

    // Tick until every traffic source and attacker is finished, then keep
    // going until the wire has been quiet for a full interframe drain.
    const std::uint64_t idle_gap = 15ull * im.timing.quanta;
    while (true) {
        if (im.bus.now() >= cfg_.max_quanta) {
            throw std::runtime_error("scenario '" + cfg_.name +
                                     "' did not finish within max_quanta");
        }
        im.bus.tick();
        if (im.all_done() && im.bus.now() - im.bus.last_active_quantum() > idle_gap) break;
    }

    RunMetrics m;
    m.quanta = im.bus.now();
    m.quantum_ns = im.bus.quantum_ns();
    m.sim_ms = static_cast<double>(m.quanta) * m.quantum_ns / 1e6;

    for (const auto& s : im.senders) {
        m.frames_sent += s->stats().built;
        m.frames_aborted += s->stats().aborted;
        m.handover_events += s->stats().handovers_sent;
    }

    // Join genuine builds against receiver verdicts on (id, counter, hash).
    // A build is accepted when at least one receiver accepted it and none
    // rejected it; everything not accepted and not aborted was rejected or
    // never delivered, which SecOC treats the same way.
    std::map<std::tuple<std::uint16_t, std::uint64_t, std::uint64_t>, std::pair<bool, bool>>
        flags;
    for (const auto& v : im.log.verdicts()) {
        auto& f = flags[{v.can_id, v.counter, v.hash}];
        (v.accepted ? f.first : f.second) = true;
        if (v.secured && !v.accepted && !im.log.genuine(v.can_id, v.counter, v.hash)) {
            ++m.stray_rejects;
        }
    }
    std::uint64_t joined_sent = 0;
    for (const auto& r : im.log.sent()) {
        if (!r.data || r.superseded) continue;
        ++joined_sent;
        const auto it = flags.find({r.can_id, r.counter, r.hash});
        if (it != flags.end() && it->second.first && !it->second.second) ++m.frames_accepted;
    }
    m.invariant_ok = joined_sent == m.frames_sent &&
                     m.frames_accepted + m.frames_aborted <= m.frames_sent;
    m.frames_rejected = m.invariant_ok
                            ? m.frames_sent - m.frames_accepted - m.frames_aborted
                            : 0;

    m.receiver_accepts = im.log.accepts();
    m.receiver_rejects = im.log.rejects();
    m.forged_accepts = im.log.forged_accepts();
    m.nonce_reuse_events = im.log.nonce_reuse_events();

    for (const auto& r : im.receivers) {
        m.recovery_events += r->stats().recoveries_completed;
        m.legacy_deliveries += r->stats().legacy_frames;
    }
    for (const auto& a : im.auths) {
        m.flips_to_dominant += a->stats().flips_dominant;
        m.flips_to_erase += a->stats().erases;
    }
    m.error_frames = im.monitor.error_events;
    m.stuff_bits_total = im.monitor.stuff_bits;
    m.multi_erase_quanta = im.bus.multi_erase_quanta();

    metrics_ = m;
    return metrics_;
}

std::vector<std::string> unmet_expectations(const ScenarioConfig& cfg, const RunMetrics& m) {
    std::vector<std::string> unmet;
    const auto value_of = [&](const std::string& key) -> double {
        if (key == "frames_sent") return static_cast<double>(m.frames_sent);
        if (key == "frames_accepted") return static_cast<double>(m.frames_accepted);
        if (key == "frames_rejected") return static_cast<double>(m.frames_rejected);
        if (key == "frames_aborted") return static_cast<double>(m.frames_aborted);
        if (key == "error_frames") return static_cast<double>(m.error_frames);
        if (key == "forged_accepts") return static_cast<double>(m.forged_accepts);
        if (key == "stray_rejects") return static_cast<double>(m.stray_rejects);
        if (key == "recovery_events") return static_cast<double>(m.recovery_events);
        if (key == "handover_events") return static_cast<double>(m.handover_events);
        if (key == "nonce_reuse_events") return static_cast<double>(m.nonce_reuse_events);
        if (key == "legacy_deliveries") return static_cast<double>(m.legacy_deliveries);
        if (key == "accept_ratio") {
            return m.frames_sent == 0 ? 0.0
                                      : static_cast<double>(m.frames_accepted) /
                                            static_cast<double>(m.frames_sent);
        }
        return -1;
    };
    if (!m.invariant_ok) unmet.push_back("frame accounting invariant violated");
    for (const auto& [key, expected] : cfg.expectations) {
        const double got = value_of(key);
        if (got != expected) {
            std::ostringstream os;
            os << "expect." << key << ": expected " << expected << ", got " << got;
            unmet.push_back(os.str());
        }
    }
    return unmet;
}

std::string Simulation::metrics_json() const {
    if (!impl_->ran) throw std::logic_error("metrics_json: run() has not been called");
    const RunMetrics& m = metrics_;
    json j;
    j["scenario"] = cfg_.name;
    if (!cfg_.description.empty()) j["description"] = cfg_.description;
    j["seed"] = cfg_.seed;
    j["tag_width"] = cfg_.tag_width;
    j["bus"] = {{"bitrate_bps", cfg_.bitrate_bps},
                {"quanta_per_bit", cfg_.quanta_per_bit},
                {"quantum_ns", m.quantum_ns},
                {"length_m", cfg_.bus_length_m},
                {"signal_speed_ns_per_m", cfg_.signal_speed_ns_per_m}};
    j["run"] = {{"quanta", m.quanta}, {"sim_ms", m.sim_ms}};
    j["totals"] = {{"frames_sent", m.frames_sent},
                   {"frames_accepted", m.frames_accepted},
                   {"frames_rejected", m.frames_rejected},
                   {"frames_aborted", m.frames_aborted},
                   {"invariant_ok", m.invariant_ok},
                   {"error_frames", m.error_frames},
                   {"stuff_bits_total", m.stuff_bits_total},
                   {"authenticator_flips",
                    {{"to_dominant", m.flips_to_dominant}, {"to_erase", m.flips_to_erase}}},
                   {"recovery_events", m.recovery_events},
                   {"handover_events", m.handover_events},
                   {"receiver_accepts", m.receiver_accepts},
                   {"receiver_rejects", m.receiver_rejects},
                   {"forged_accepts", m.forged_accepts},
                   {"stray_rejects", m.stray_rejects},
                   {"nonce_reuse_events", m.nonce_reuse_events},
                   {"legacy_deliveries", m.legacy_deliveries},
                   {"multi_erase_quanta", m.multi_erase_quanta}};

    j["senders"] = json::array();
    for (const auto& s : impl_->senders) {
        const auto& st = s->stats();
        j["senders"].push_back({{"name", std::string(s->name())},
                                {"built", st.built},
                                {"completed", st.completed},
                                {"aborted", st.aborted},
                                {"retransmissions", st.retransmissions},
                                {"counter_resets", st.counter_resets},
                                {"handovers_sent", st.handovers_sent},
                                {"fallback_frames", st.fallback_frames},
                                {"auth_inactive_events", st.auth_inactive_events}});
    }
    j["receivers"] = json::array();
    for (const auto& r : impl_->receivers) {
        const auto& st = r->stats();
        j["receivers"].push_back({{"name", std::string(r->name())},
                                  {"accepts", st.accepts},
                                  {"rejects", st.rejects},
                                  {"legacy_frames", st.legacy_frames},
                                  {"reset_requests_sent", st.reset_requests_sent},
                                  {"recoveries_started", st.recoveries_started},
                                  {"recoveries_completed", st.recoveries_completed},
                                  {"broadcast_refreshes", st.broadcast_refreshes},
                                  {"crc_errors", r->port_metrics().crc_errors}});
    }
    j["authenticators"] = json::array();
    for (const auto& a : impl_->auths) {
        const auto& st = a->stats();
        j["authenticators"].push_back({{"name", std::string(a->name())},
                                       {"sessions", st.sessions},
                                       {"flips_dominant", st.flips_dominant},
                                       {"erases", st.erases},
                                       {"compensations", st.compensations},
                                       {"commits", st.commits},
                                       {"announce_refreshes", st.announce_refreshes},
                                       {"adoptions", st.adoptions}});
    }
    j["attackers"] = json::array();
    for (const auto& f : impl_->forgers) {
        const auto& st = f->stats();
        j["attackers"].push_back(
            {{"name", std::string(f->name())},
             {"kind", f->config().mode == ForgeryAttackerConfig::Mode::GuessSourceTag
                          ? "masquerade"
                          : "auth_forge"},
             {"built", st.built},
             {"completed", st.completed},
             {"aborted", st.aborted},
             {"observed", st.observed}});
    }
    for (const auto& r : impl_->replayers) {
        const auto& st = r->stats();
        j["attackers"].push_back({{"name", std::string(r->name())},
                                  {"kind", "replay"},
                                  {"recorded", st.recorded},
                                  {"replayed", st.replayed},
                                  {"observed", st.observed}});
    }
    for (const auto& b : impl_->bitmods) {
        const auto& st = b->stats();
        j["attackers"].push_back({{"name", std::string(b->name())},
                                  {"kind", "bitmod"},
                                  {"armed", st.armed},
                                  {"skipped", st.skipped},
                                  {"attacked", st.attacked},
                                  {"flips_driven", st.flips_driven},
                                  {"compensations", st.compensations}});
    }
    return j.dump(2) + "\n";
}

std::string Simulation::verdicts_csv() const {
    if (!impl_->ran) throw std::logic_error("verdicts_csv: run() has not been called");
    std::ostringstream os;
    os << "quantum,receiver,can_id,counter,accepted,secured,detail\n";
    for (const auto& v : impl_->log.verdicts()) {
        std::string detail = v.detail;
        std::replace(detail.begin(), detail.end(), ',', ';');
        os << v.quantum << ',' << v.receiver << ',' << id_str(v.can_id) << ',' << v.counter
           << ',' << (v.accepted ? 1 : 0) << ',' << (v.secured ? 1 : 0) << ',' << detail
           << '\n';
    }
    return os.str();
}

std::string Simulation::wire_trace_csv() const {
    const BusTrace& trace = impl_->bus.trace;
    if (!trace.enabled) return {};
    std::ostringstream os;
    os << "quantum,level,drivers\n";
    for (std::size_t q = 0; q < trace.emission.size(); ++q) {
        os << q << ',' << static_cast<int>(trace.emission[q]) << ',';
        if (trace.record_drivers && q < trace.drivers.size()) os << trace.drivers[q];
        os << '\n';
    }
    return os.str();
}

void Simulation::write_outputs(const std::string& out_dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto write = [&](const char* file, const std::string& text) {
        const fs::path p = fs::path(out_dir) / file;
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + p.string());
        out << text;
    };
    write("metrics.json", metrics_json());
    write("verdicts.csv", verdicts_csv());
    if (impl_->bus.trace.enabled) write("wire_trace.csv", wire_trace_csv());
}

}  // namespace caiba
