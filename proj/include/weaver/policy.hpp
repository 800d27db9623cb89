// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "weaver/config.hpp"
#include "weaver/core.hpp"
#include "weaver/protocol.hpp"

namespace weaver {

struct PolicyError : SpecError {
    using SpecError::SpecError;
};

struct PolicyRequest {
    ContextView context;
    SamplingParams sampling;
};

/// The generation surface: given an assembled interleaved context, produce
/// the next raw response text. Backends see only the context, never world
/// ground truth. Implementations must tolerate concurrent episodes.
class PolicyBackend {
public:
    virtual ~PolicyBackend() = default;
    virtual std::string next_response(const PolicyRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Context inspection shared by scripted/replay backends
// ---------------------------------------------------------------------------

/// Number of assistant turns already in the context; doubles as the index of
/// the step about to be generated.
inline std::size_t turn_index(const ContextView& ctx) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < ctx.size(); ++i)
        if (const auto* t = std::get_if<TextSegment>(&ctx.segment(i)))
            n += (t->role == SegmentRole::assistant) ? 1 : 0;
    return n;
}

/// Tool-result envelopes present in the context, in order. The K-th entry is
/// what {tool[K].*} interpolation resolves against.
inline std::vector<EnvelopeFields> context_envelopes(const ContextView& ctx) {
    std::vector<EnvelopeFields> out;
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        const Segment& seg = ctx.segment(i);
        std::optional<EnvelopeFields> f;
        if (const auto* v = std::get_if<VisualSegment>(&seg)) {
            if (!v->envelope.empty()) f = parse_tool_result_envelope(v->envelope);
        } else if (const auto* t = std::get_if<TextSegment>(&seg)) {
            if (t->role == SegmentRole::tool) f = parse_tool_result_envelope(t->text);
        }
        if (f) out.push_back(std::move(*f));
    }
    return out;
}

/// Stable digest of a context: segment texts plus clip spans (never pixels).
inline std::string context_digest(const ContextView& ctx) {
    Fnv1a h;
    for (std::size_t i = 0; i < ctx.size(); ++i) {
        const Segment& seg = ctx.segment(i);
        if (const auto* t = std::get_if<TextSegment>(&seg)) {
            h.feed("T|");
            h.feed(t->text);
            h.feed("|");
        } else {
            const auto& v = std::get<VisualSegment>(seg);
            h.feed("V|");
            h.feed(v.clip.video_id);
            h.feed_f(v.clip.start_s);
            h.feed_f(v.clip.end_s);
        }
    }
    return h.hex();
}

// ---------------------------------------------------------------------------
// Scripted policies
// ---------------------------------------------------------------------------

/// Template interpolation over prior tool results, read back from envelopes
/// in the assembled context. Supported keys:
///   {tool[K].status} {tool[K].note} {tool[K].count} {tool[K].start}
///   {tool[K].end} {tool[K].span} {tool[K].note.count} {tool[K].label}
///   {option_for:tool[K].count | tool[K].span | tool[K].label}
///   {option_for:order:<label0>|<label1>|...}   (label i paired with tool i)
/// An unresolvable option_for falls back to option A; other unresolvable keys
/// are left verbatim.
inline std::string interpolate_plan_text(const std::string& tmpl,
                                         const std::vector<EnvelopeFields>& tools,
                                         const std::vector<std::string>& options) {
    auto letter_of = [&](const std::string& text) -> std::string {
        for (std::size_t i = 0; i < options.size(); ++i)
            if (options[i] == text) return std::string(1, option_letter(i));
        return "A";
    };
    auto tool_at = [&](std::size_t k) -> const EnvelopeFields* {
        return k < tools.size() ? &tools[k] : nullptr;
    };
    auto field_value = [&](const std::string& key) -> std::optional<std::string> {
        // key shape: tool[K].field
        std::size_t k = 0;
        char field[32] = {0};
        if (std::sscanf(key.c_str(), "tool[%zu].%31s", &k, field) != 2) return std::nullopt;
        const auto* t = tool_at(k);
        if (!t) return std::nullopt;
        std::string f(field);
        if (f == "status") return t->status;
        if (f == "note") return t->note;
        if (f == "count" || f == "note.count")
            return t->count ? std::optional(std::to_string(*t->count)) : std::nullopt;
        if (f == "start")
            return t->spans.empty() ? std::nullopt : std::optional(fmt2(t->spans[0].start_s));
        if (f == "end")
            return t->spans.empty() ? std::nullopt : std::optional(fmt2(t->spans[0].end_s));
        if (f == "span")
            return t->spans.empty() ? std::nullopt : std::optional(span_option_text(t->spans[0]));
        if (f == "label")
            return t->found_labels.empty() ? std::nullopt : std::optional(t->found_labels[0]);
        return std::nullopt;
    };
    auto option_for = [&](const std::string& expr) -> std::string {
        if (expr.rfind("order:", 0) == 0) {
            auto labels = split(expr.substr(6), '|');
            std::vector<std::pair<double, std::string>> starts;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                const auto* t = tool_at(i);
                if (!t || !t->ok() || t->spans.empty()) return "A";
                starts.emplace_back(t->spans[0].start_s, labels[i]);
            }
            std::sort(starts.begin(), starts.end());
            std::vector<std::string> ordered;
            for (auto& [s, l] : starts) ordered.push_back(l);
            return letter_of(order_option_text(ordered));
        }
        auto v = field_value(expr);
        return v ? letter_of(*v) : "A";
    };

    std::string out;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        auto open = tmpl.find('{', pos);
        if (open == std::string::npos) {
            out += tmpl.substr(pos);
            break;
        }
        auto close = tmpl.find('}', open);
        if (close == std::string::npos) {
            out += tmpl.substr(pos);
            break;
        }
        out += tmpl.substr(pos, open - pos);
        std::string key = tmpl.substr(open + 1, close - open - 1);
        if (key.rfind("option_for:", 0) == 0) {
            out += option_for(key.substr(11));
        } else if (auto v = field_value(key)) {
            out += *v;
        } else {
            out += tmpl.substr(open, close - open + 1);  // leave unknown keys verbatim
        }
        pos = close + 1;
    }
    return out;
}

/// Deterministic test-and-oracle policy: a fixed plan of response templates,
/// one per turn, the last of which must answer. Immutable after construction.
class ScriptedPolicy : public PolicyBackend {
public:
    ScriptedPolicy(std::vector<std::string> plan, std::vector<std::string> options = {})
        : plan_(std::move(plan)), options_(std::move(options)) {
        if (plan_.empty()) throw SpecError("scripted policy: empty plan");
        if (plan_.back().find(kAnswerOpen) == std::string::npos)
            throw SpecError("scripted policy: final template must contain an answer block");
    }

    std::string next_response(const PolicyRequest& request) override {
        const auto turn = turn_index(request.context);
        const auto idx = std::min(turn, plan_.size() - 1);
        return interpolate_plan_text(plan_[idx], context_envelopes(request.context), options_);
    }

    const std::vector<std::string>& plan() const { return plan_; }

private:
    std::vector<std::string> plan_;
    std::vector<std::string> options_;
};

/// Arbitrary function as a backend; the seam tests and pipeline doubles use.
class FunctionPolicy : public PolicyBackend {
public:
    using Fn = std::function<std::string(const PolicyRequest&)>;
    explicit FunctionPolicy(Fn fn) : fn_(std::move(fn)) {}
    std::string next_response(const PolicyRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

// ---------------------------------------------------------------------------
// Record / replay
// ---------------------------------------------------------------------------

/// Records (digest, response) pairs while delegating to an inner backend.
class RecordingPolicy : public PolicyBackend {
public:
    explicit RecordingPolicy(PolicyBackend& inner) : inner_(inner) {}

    std::string next_response(const PolicyRequest& request) override {
        auto digest = context_digest(request.context);
        auto response = inner_.next_response(request);
        std::lock_guard<std::mutex> lock(mu_);
        tape_[digest] = response;
        return response;
    }

    const std::map<std::string, std::string>& tape() const { return tape_; }

    std::string serialize() const {
        std::string out;
        for (const auto& [digest, response] : tape_) {
            ojson j;
            j["digest"] = digest;
            j["response"] = response;
            out += j.dump() + "\n";
        }
        return out;
    }

private:
    PolicyBackend& inner_;
    std::mutex mu_;
    std::map<std::string, std::string> tape_;
};

/// Replays recorded responses keyed by context digest; a miss is an episode
/// error naming the digest.
class ReplayPolicy : public PolicyBackend {
public:
    explicit ReplayPolicy(std::map<std::string, std::string> tape) : tape_(std::move(tape)) {}

    static ReplayPolicy from_jsonl(const std::string& text) {
        std::map<std::string, std::string> tape;
        for (const auto& line : split(text, '\n')) {
            if (trim(line).empty()) continue;
            auto j = ojson::parse(line);
            tape[j.at("digest").get<std::string>()] = j.at("response").get<std::string>();
        }
        return ReplayPolicy(std::move(tape));
    }

    std::string next_response(const PolicyRequest& request) override {
        auto digest = context_digest(request.context);
        auto it = tape_.find(digest);
        if (it == tape_.end()) throw PolicyError("replay miss for context digest " + digest);
        return it->second;
    }

private:
    std::map<std::string, std::string> tape_;
};

// ---------------------------------------------------------------------------
// Oracle plans for synthetic task templates
// ---------------------------------------------------------------------------

namespace detail {

inline std::string tool_call_text(const std::string& name, const ojson& args) {
    return render_tool_call(ToolCall{name, args});
}

inline bool enabled_in(const std::optional<std::set<std::string>>& enabled,
                       const std::string& name) {
    return !enabled.has_value() || enabled->count(name) > 0;
}

}  // namespace detail

/// Canonical tool sequence for a synthetic task template, answering from tool
/// results only (gold is never read). `enabled` narrows tool choice so
/// ablations can exercise fallback routes; a disabled primary tool is still
/// called and the answer interpolation degrades to a deterministic guess.
/// Two deterministic route variants spread usage across the full library.
inline ScriptedPolicy oracle_policy_for(
    const Question& task, const std::optional<std::set<std::string>>& enabled = std::nullopt) {
    if (task.template_name.empty())
        throw SpecError("oracle policy: task has no template metadata");
    const auto tmpl = task_template_from_string(task.template_name);
    Fnv1a h;
    h.feed(task.text);
    const bool variant_b = (h.value() & 1) != 0;

    std::vector<std::string> plan;
    switch (tmpl) {
        case TaskTemplate::count_event: {
            const auto label = task.params.at("query").get<std::string>();
            plan.push_back("I need to count how often \"" + label + "\" happens.\n" +
                           detail::tool_call_text("temporal_count", {{"query", label}}));
            plan.push_back(
                "The tool reports {tool[0].note}, so the matching option is "
                "{option_for:tool[0].count}.\n<answer>{option_for:tool[0].count}</answer>");
            break;
        }
        case TaskTemplate::span_of_event: {
            const auto label = task.params.at("query").get<std::string>();
            plan.push_back("Let me localize \"" + label + "\" in time.\n" +
                           detail::tool_call_text("temporal_grounding", {{"query", label}}));
            if (variant_b) {
                plan.push_back("I will inspect a representative frame of that moment.\n" +
                               detail::tool_call_text("frame_selection", {{"query", label}}));
            }
            plan.push_back(
                "The event is grounded at {tool[0].span}.\n"
                "<answer>{option_for:tool[0].span}</answer>");
            break;
        }
        case TaskTemplate::object_at_time: {
            const double t = task.params.at("time").get<double>();
            const Span window{t - 2.0, t + 2.0};
            std::string spatial = "spatial_grounding";
            if (!detail::enabled_in(enabled, spatial) &&
                detail::enabled_in(enabled, "spatial_tracking"))
                spatial = "spatial_tracking";
            else if (variant_b && detail::enabled_in(enabled, "spatial_tracking"))
                spatial = "spatial_tracking";
            plan.push_back("Let me zoom into the moment around " + fmt1(t) + " s.\n" +
                           detail::tool_call_text(
                               "trim", {{"start_s", window.start_s}, {"end_s", window.end_s}}));
            ojson objects = ojson::array();
            for (const auto& opt : task.options) objects.push_back(opt);
            plan.push_back("Now I check which of the candidate objects is present.\n" +
                           detail::tool_call_text(spatial, {{"objects", objects},
                                                            {"start_s", window.start_s},
                                                            {"end_s", window.end_s}}));
            plan.push_back(
                "The boxes identify {tool[1].label}.\n"
                "<answer>{option_for:tool[1].label}</answer>");
            break;
        }
        case TaskTemplate::order_events: {
            auto labels = task.params.at("labels").get<std::vector<std::string>>();
            std::string order_key = "order:" + join(labels, "|");
            for (const auto& label : labels)
                plan.push_back("Grounding \"" + label + "\" to compare start times.\n" +
                               detail::tool_call_text("temporal_grounding", {{"query", label}}));
            plan.push_back("Sorting by start time gives option {option_for:" + order_key +
                           "}.\n<answer>{option_for:" + order_key + "}</answer>");
            break;
        }
    }
    return ScriptedPolicy(std::move(plan), task.options);
}

}  // namespace weaver
