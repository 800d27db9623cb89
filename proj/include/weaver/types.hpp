// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "weaver/util.hpp"

namespace weaver {

/// All serialized artifacts use ordered JSON so emitted files are byte-stable.
using ojson = nlohmann::ordered_json;

struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Video & clips
// ---------------------------------------------------------------------------

struct Span {
    double start_s = 0.0;
    double end_s = 0.0;

    double length() const { return end_s - start_s; }
    bool contains(double t) const { return t >= start_s && t <= end_s; }
    friend bool operator==(const Span&, const Span&) = default;
};

struct VideoMeta {
    std::string video_id;
    double duration_s = 0.0;
    double fps = 0.0;
    int width = 0;
    int height = 0;

    Span full_span() const { return {0.0, duration_s}; }

    /// Total decodable frames; init-state sampling clamps to this.
    std::int64_t frame_count() const {
        return static_cast<std::int64_t>(std::floor(duration_s * fps));
    }

    void validate() const {
        if (video_id.empty()) throw SpecError("video: empty video_id");
        if (!(duration_s > 0.0)) throw SpecError("video: duration_s must be > 0");
        if (!(fps > 0.0)) throw SpecError("video: fps must be > 0");
        if (width <= 0 || height <= 0) throw SpecError("video: bad dimensions");
        if (frame_count() < 1) throw SpecError("video: duration_s*fps < 1 frame");
    }
};

/// One labeled box at one frame time. instance_id is present for tracking
/// results (persistent identity) and absent for per-frame grounding.
struct BoxAnnotation {
    double time = 0.0;
    std::string label;
    std::optional<int> instance_id;
    std::array<double, 4> box{};  // [x0, y0, x1, y1] pixels

    friend bool operator==(const BoxAnnotation&, const BoxAnnotation&) = default;
};

/// A frame-time reference into a video; carries no pixels. Tool results and
/// the initial uniformly sampled clip are both Clips.
struct Clip {
    std::string video_id;
    double start_s = 0.0;
    double end_s = 0.0;
    std::vector<double> frame_times;
    std::vector<BoxAnnotation> annotations;

    void validate(double duration_s) const {
        if (!(start_s >= 0.0 && start_s < end_s && end_s <= duration_s + 1e-9))
            throw SpecError("clip: bad span");
        double prev = -1.0;
        for (double t : frame_times) {
            if (!(t > prev)) throw SpecError("clip: frame_times not strictly increasing");
            if (t < start_s - 1e-9 || t > end_s + 1e-9) throw SpecError("clip: frame time outside span");
            prev = t;
        }
        for (const auto& a : annotations) {
            bool on_frame = false;
            for (double t : frame_times)
                if (std::abs(t - a.time) < 1e-9) { on_frame = true; break; }
            if (!on_frame) throw SpecError("clip: annotation time not in frame_times");
        }
    }
};

// ---------------------------------------------------------------------------
// Questions
// ---------------------------------------------------------------------------

enum class QType { multiple_choice, open_ended };

inline std::string to_string(QType q) {
    return q == QType::multiple_choice ? "multiple_choice" : "open_ended";
}
inline QType qtype_from_string(std::string_view s) {
    if (s == "multiple_choice") return QType::multiple_choice;
    if (s == "open_ended") return QType::open_ended;
    throw SpecError("unknown qtype: " + std::string(s));
}

/// Option letters are positional: option i is lettered 'A'+i.
inline char option_letter(std::size_t i) { return static_cast<char>('A' + i); }
inline int letter_index(char c) { return ascii_upper(c) - 'A'; }

struct Question {
    std::string text;
    QType qtype = QType::multiple_choice;
    std::vector<std::string> options;  // multiple_choice only, 2..26 entries
    std::string gold;                  // option letter, or normalized open-ended answer

    // Task metadata attached by the synthetic task generator; optional so
    // hand-written questions stay minimal. Lets reports recount per-template
    // accuracy from trajectory files alone.
    std::string template_name;
    ojson params;

    void validate() const {
        if (text.empty()) throw SpecError("question: empty text");
        if (qtype == QType::multiple_choice) {
            if (options.size() < 2 || options.size() > 26)
                throw SpecError("question: option count out of range");
            if (gold.size() != 1 || letter_index(gold[0]) < 0 ||
                letter_index(gold[0]) >= static_cast<int>(options.size()))
                throw SpecError("question: gold is not a valid option letter");
        } else {
            if (gold.empty()) throw SpecError("question: open_ended gold empty");
        }
    }

    /// The prompt-facing rendering: question text plus lettered options.
    /// Gold never appears here.
    std::string prompt_text() const {
        std::string out = text;
        if (qtype == QType::multiple_choice) {
            for (std::size_t i = 0; i < options.size(); ++i) {
                out += "\n";
                out += option_letter(i);
                out += ". ";
                out += options[i];
            }
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Tool calls & results
// ---------------------------------------------------------------------------

/// Raw parsed call: name is kept as free text so unknown tools flow through
/// dispatch and come back as invalid_args instead of crashing the episode.
struct ToolCall {
    std::string name;
    ojson arguments = ojson::object();

    friend bool operator==(const ToolCall& a, const ToolCall& b) {
        return a.name == b.name && a.arguments == b.arguments;
    }
};

enum class ToolStatus { ok, not_found, invalid_args };

inline std::string to_string(ToolStatus s) {
    switch (s) {
        case ToolStatus::ok: return "ok";
        case ToolStatus::not_found: return "not_found";
        default: return "invalid_args";
    }
}
inline ToolStatus tool_status_from_string(std::string_view s) {
    if (s == "ok") return ToolStatus::ok;
    if (s == "not_found") return ToolStatus::not_found;
    if (s == "invalid_args") return ToolStatus::invalid_args;
    throw SpecError("unknown tool status: " + std::string(s));
}

struct ToolResult {
    std::string tool_name;
    ToolStatus status = ToolStatus::invalid_args;
    std::vector<Span> spans;    // resolved span(s); merged list for temporal_count
    std::optional<Clip> clip;   // present iff status == ok
    std::string note;

    bool ok() const { return status == ToolStatus::ok; }
};

// ---------------------------------------------------------------------------
// Steps & history
// ---------------------------------------------------------------------------

struct StepRecord {
    std::string response_text;
    std::optional<ToolCall> tool_call;
    std::optional<ToolResult> tool_result;
    std::optional<std::string> answer;  // normalized; presence terminates the episode
    std::vector<std::string> protocol_flags;

    void validate() const {
        if (answer && tool_result) throw SpecError("step: answer and tool_result both present");
        if (tool_result && !tool_call) throw SpecError("step: tool_result without tool_call");
    }
};

enum class SegmentRole { question, assistant, tool };

inline std::string to_string(SegmentRole r) {
    switch (r) {
        case SegmentRole::question: return "question";
        case SegmentRole::assistant: return "assistant";
        default: return "tool";
    }
}

struct TextSegment {
    std::string text;
    SegmentRole role = SegmentRole::assistant;
    std::int64_t token_count = 0;
};

/// A tool-returned clip plus the textual envelope describing it. The envelope
/// rides with the clip as one segment (it is the tool message); its cost is
/// folded into the clip's frame budget.
struct VisualSegment {
    Clip clip;
    std::string envelope;
    std::int64_t token_count = 0;
};

using Segment = std::variant<TextSegment, VisualSegment>;

inline std::int64_t segment_tokens(const Segment& s) {
    return std::visit([](const auto& v) { return v.token_count; }, s);
}

/// The interleaved conversation history. Immutable by convention: steps are
/// appended by constructing a successor value, never by mutating in place.
struct HistoryState {
    std::vector<Segment> segments;
    std::size_t cached_prefix_len = 0;  // segments already encoded in earlier turns
};

// ---------------------------------------------------------------------------
// JSON serialization (stable key order everywhere)
// ---------------------------------------------------------------------------

inline ojson to_json(const Span& s) { return ojson::array({s.start_s, s.end_s}); }
inline Span span_from_json(const ojson& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline ojson to_json(const BoxAnnotation& a) {
    ojson j;
    j["time"] = a.time;
    j["label"] = a.label;
    if (a.instance_id) j["instance_id"] = *a.instance_id;
    j["box"] = a.box;
    return j;
}
inline BoxAnnotation box_annotation_from_json(const ojson& j) {
    BoxAnnotation a;
    a.time = j.at("time").get<double>();
    a.label = j.at("label").get<std::string>();
    if (j.contains("instance_id")) a.instance_id = j.at("instance_id").get<int>();
    const auto& b = j.at("box");
    for (int i = 0; i < 4; ++i) a.box[i] = b.at(i).get<double>();
    return a;
}

inline ojson to_json(const Clip& c) {
    ojson j;
    j["video_id"] = c.video_id;
    j["span"] = to_json(Span{c.start_s, c.end_s});
    j["frame_times"] = c.frame_times;
    ojson boxes = ojson::array();
    for (const auto& a : c.annotations) boxes.push_back(to_json(a));
    j["boxes"] = boxes;
    return j;
}
inline Clip clip_from_json(const ojson& j) {
    Clip c;
    c.video_id = j.at("video_id").get<std::string>();
    Span s = span_from_json(j.at("span"));
    c.start_s = s.start_s;
    c.end_s = s.end_s;
    c.frame_times = j.at("frame_times").get<std::vector<double>>();
    for (const auto& b : j.at("boxes")) c.annotations.push_back(box_annotation_from_json(b));
    return c;
}

inline ojson to_json(const Question& q) {
    ojson j;
    j["text"] = q.text;
    j["qtype"] = to_string(q.qtype);
    j["options"] = q.options;
    j["gold"] = q.gold;
    if (!q.template_name.empty()) j["template"] = q.template_name;
    if (!q.params.is_null() && !q.params.empty()) j["params"] = q.params;
    return j;
}
inline Question question_from_json(const ojson& j) {
    Question q;
    q.text = j.at("text").get<std::string>();
    q.qtype = qtype_from_string(j.at("qtype").get<std::string>());
    q.options = j.at("options").get<std::vector<std::string>>();
    q.gold = j.at("gold").get<std::string>();
    if (j.contains("template")) q.template_name = j.at("template").get<std::string>();
    if (j.contains("params")) q.params = j.at("params");
    return q;
}

inline ojson to_json(const ToolCall& c) {
    ojson j;
    j["name"] = c.name;
    j["arguments"] = c.arguments;
    return j;
}
inline ToolCall tool_call_from_json(const ojson& j) {
    ToolCall c;
    c.name = j.at("name").get<std::string>();
    c.arguments = j.at("arguments");
    return c;
}

inline ojson to_json(const ToolResult& r) {
    ojson j;
    j["tool_name"] = r.tool_name;
    j["status"] = to_string(r.status);
    ojson spans = ojson::array();
    for (const auto& s : r.spans) spans.push_back(to_json(s));
    j["spans"] = spans;
    if (r.clip) j["clip"] = to_json(*r.clip);
    j["note"] = r.note;
    return j;
}
inline ToolResult tool_result_from_json(const ojson& j) {
    ToolResult r;
    r.tool_name = j.at("tool_name").get<std::string>();
    r.status = tool_status_from_string(j.at("status").get<std::string>());
    for (const auto& s : j.at("spans")) r.spans.push_back(span_from_json(s));
    if (j.contains("clip")) r.clip = clip_from_json(j.at("clip"));
    r.note = j.at("note").get<std::string>();
    return r;
}

inline ojson to_json(const StepRecord& s) {
    ojson j;
    j["response_text"] = s.response_text;
    if (s.tool_call) j["tool_call"] = to_json(*s.tool_call);
    if (s.tool_result) j["tool_result"] = to_json(*s.tool_result);
    if (s.answer) j["answer"] = *s.answer;
    j["protocol_flags"] = s.protocol_flags;
    return j;
}
inline StepRecord step_from_json(const ojson& j) {
    StepRecord s;
    s.response_text = j.at("response_text").get<std::string>();
    if (j.contains("tool_call")) s.tool_call = tool_call_from_json(j.at("tool_call"));
    if (j.contains("tool_result")) s.tool_result = tool_result_from_json(j.at("tool_result"));
    if (j.contains("answer")) s.answer = j.at("answer").get<std::string>();
    s.protocol_flags = j.at("protocol_flags").get<std::vector<std::string>>();
    return s;
}

}  // namespace weaver
