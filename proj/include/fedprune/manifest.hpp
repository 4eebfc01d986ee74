#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedprune/errors.hpp"

namespace fedprune {

inline constexpr const char* kVersion = "0.1.0";

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

/// Records every file an experiment emits, keyed by a hash of its
/// deterministic payload. Volatile columns (wall time) are stripped by the
/// emitter before hashing, so a rerun with the same config and seed produces
/// a byte-identical manifest.
class Manifest {
public:
    Manifest(std::string config_hash, std::uint64_t seed)
        : config_hash_(std::move(config_hash)), seed_(seed) {}

    void add(const std::string& relative_path, std::string_view payload) {
        entries_.push_back({relative_path, hex64(fnv1a64(payload)), payload.size()});
    }

    void save(const std::string& path) const {
        nlohmann::json j;
        j["version"] = kVersion;
        j["config_hash"] = config_hash_;
        j["seed"] = seed_;
        nlohmann::json files = nlohmann::json::array();
        for (const auto& e : entries_) {
            files.push_back({{"path", e.path},
                             {"payload_fnv1a64", e.hash},
                             {"payload_bytes", e.bytes}});
        }
        j["files"] = files;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw InputError("cannot write manifest: " + path);
        out << j.dump(2) << "\n";
    }

private:
    struct Entry {
        std::string path;
        std::string hash;
        std::size_t bytes;
    };
    std::string config_hash_;
    std::uint64_t seed_;
    std::vector<Entry> entries_;
};

}  // namespace fedprune
