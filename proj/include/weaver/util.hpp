// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace weaver {

// ---------------------------------------------------------------------------
// Deterministic seeding
// ---------------------------------------------------------------------------

/// splitmix64 finalizer. Portable across platforms (pure uint64 arithmetic),
/// which is what makes group/batch seed derivation reproducible everywhere.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Declared seed-mixing function: seed_i = mix64(seed, i).
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

/// Small deterministic PRNG built on splitmix64. std:: distributions are not
/// bit-stable across standard libraries, so everything seeded goes through
/// this instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0xA02B9FE5E09FD0C3ULL)) {}

    std::uint64_t next() {
        state_ = splitmix64(state_);
        return state_;
    }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    /// Uniform double in [0, 1).
    double real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform double in [a, b).
    double range(double a, double b) { return a + real() * (b - a); }

private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// String helpers
// ---------------------------------------------------------------------------

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }
inline char ascii_upper(char c) { return (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c; }

/// Trim, collapse internal whitespace runs to single spaces, lowercase ASCII.
/// The normal form used for label matching and open-ended answer comparison.
inline std::string normalize_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : trim(s)) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(ascii_lower(c));
    }
    return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            parts.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return parts;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

/// Fixed two-decimal rendering used by tool-result envelopes ("span=[30.00,33.00]").
inline std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

/// One-decimal rendering used in generated option text ("[90.0, 95.0]").
inline std::string fmt1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Stable hashing (replay digests)
// ---------------------------------------------------------------------------

class Fnv1a {
public:
    void feed(std::string_view s) {
        for (unsigned char c : s) {
            h_ ^= c;
            h_ *= 0x100000001B3ULL;
        }
    }
    void feed_u64(std::uint64_t v) {
        char buf[21];
        std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(v));
        feed(buf);
        feed("|");
    }
    void feed_f(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        feed(buf);
        feed("|");
    }
    std::uint64_t value() const { return h_; }

    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h_));
        return buf;
    }

private:
    std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

}  // namespace weaver
