// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "weaver/types.hpp"

namespace weaver {

// Exact wire tags: case-sensitive, no attributes, matched non-greedily.
inline constexpr std::string_view kToolCallOpen = "<tool_call>";
inline constexpr std::string_view kToolCallClose = "</tool_call>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

struct ParsedResponse {
    std::string reasoning_text;
    std::optional<ToolCall> tool_call;
    std::optional<std::string> answer_span;
    bool format_ok = false;  // a well-formed <answer>...</answer> pair exists
    std::vector<std::string> diagnostics;
};

namespace detail {

struct TagBlock {
    std::string inner;
    std::size_t begin;  // offset of the open tag
    std::size_t end;    // offset one past the close tag
};

inline std::optional<TagBlock> first_block(std::string_view text, std::string_view open,
                                           std::string_view close, std::size_t from = 0) {
    auto o = text.find(open, from);
    if (o == std::string_view::npos) return std::nullopt;
    auto c = text.find(close, o + open.size());
    if (c == std::string_view::npos) return std::nullopt;
    return TagBlock{std::string(text.substr(o + open.size(), c - o - open.size())), o,
                    c + close.size()};
}

}  // namespace detail

/// Parse one tool-call payload: a single JSON object with a string "name" and
/// an object "arguments". Returns nullopt and appends a diagnostic otherwise.
inline std::optional<ToolCall> parse_tool_payload(std::string_view payload,
                                                  std::vector<std::string>& diagnostics) {
    ojson j = ojson::parse(payload, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
        diagnostics.push_back("unparseable tool_call payload");
        return std::nullopt;
    }
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string() ||
        !j.contains("arguments") || !j["arguments"].is_object()) {
        diagnostics.push_back("tool_call payload must be {\"name\": string, \"arguments\": object}");
        return std::nullopt;
    }
    return ToolCall{j["name"].get<std::string>(), j["arguments"]};
}

/// Total parse of one policy response. Never throws on any input; every
/// defect becomes a diagnostic so the policy is penalized via reward instead
/// of halting the engine.
inline ParsedResponse parse_response(std::string_view text) {
    ParsedResponse out;

    auto tool_block = detail::first_block(text, kToolCallOpen, kToolCallClose);
    if (!tool_block && text.find(kToolCallOpen) != std::string_view::npos)
        out.diagnostics.push_back("unclosed tool_call tag");
    if (tool_block) {
        out.tool_call = parse_tool_payload(tool_block->inner, out.diagnostics);
        if (detail::first_block(text, kToolCallOpen, kToolCallClose, tool_block->end))
            out.diagnostics.push_back("multiple tool_call blocks; extras ignored");
    }

    auto answer_block = detail::first_block(text, kAnswerOpen, kAnswerClose);
    if (!answer_block && text.find(kAnswerOpen) != std::string_view::npos)
        out.diagnostics.push_back("unclosed answer tag");
    if (answer_block) {
        out.format_ok = true;
        out.answer_span = answer_block->inner;
        if (detail::first_block(text, kAnswerOpen, kAnswerClose, answer_block->end))
            out.diagnostics.push_back("multiple answer blocks; extras ignored");
        if (out.tool_call) out.diagnostics.push_back("tool_call superseded by answer");
    }

    // Reasoning text = response minus the extracted blocks.
    std::string reasoning;
    std::size_t pos = 0;
    auto skip = [&](const std::optional<detail::TagBlock>& b) {
        if (b && b->begin >= pos) {
            reasoning += text.substr(pos, b->begin - pos);
            pos = b->end;
        }
    };
    if (tool_block && answer_block && answer_block->begin < tool_block->begin) {
        skip(answer_block);
        skip(tool_block);
    } else {
        skip(tool_block);
        skip(answer_block);
    }
    reasoning += text.substr(pos);
    out.reasoning_text = std::string(trim(reasoning));
    return out;
}

/// Parse every tool-call block in order (dataset rewriting consumes whole
/// rewritten trajectories, not single steps).
inline std::vector<ToolCall> parse_all_tool_calls(std::string_view text,
                                                  std::vector<std::string>& diagnostics) {
    std::vector<ToolCall> calls;
    std::size_t from = 0;
    while (auto block = detail::first_block(text, kToolCallOpen, kToolCallClose, from)) {
        if (auto call = parse_tool_payload(block->inner, diagnostics))
            calls.push_back(std::move(*call));
        from = block->end;
    }
    return calls;
}

inline std::string render_tool_call(const ToolCall& call) {
    std::string out(kToolCallOpen);
    out += to_json(call).dump();
    out += kToolCallClose;
    return out;
}

// ---------------------------------------------------------------------------
// Tool-result envelope
// ---------------------------------------------------------------------------

/// Deterministic textual envelope for a tool result. One field per line; the
/// trailing <clip frames=N> line marks where the visual segment is inserted.
/// Byte-stable for identical inputs.
inline std::string render_tool_result(const ToolResult& result) {
    std::string out = "[tool_result tool=" + result.tool_name +
                      " status=" + to_string(result.status) + "]\n";
    if (!result.spans.empty()) {
        out += "span=";
        for (std::size_t i = 0; i < result.spans.size(); ++i) {
            if (i) out += ";";
            out += "[" + fmt2(result.spans[i].start_s) + "," + fmt2(result.spans[i].end_s) + "]";
        }
        out += "\n";
    }
    out += "note=" + result.note + "\n";
    if (result.clip)
        out += "<clip frames=" + std::to_string(result.clip->frame_times.size()) + ">\n";
    out += "[/tool_result]";
    return out;
}

/// Structured fields scraped back out of an envelope. Scripted policies read
/// tool outcomes from the assembled context only, through this.
struct EnvelopeFields {
    std::string tool;
    std::string status;
    std::vector<Span> spans;
    std::string note;
    std::optional<std::int64_t> count;       // from a "count=N" note
    std::vector<std::string> found_labels;   // from a "found: a, b; ..." note

    bool ok() const { return status == "ok"; }
};

inline std::optional<EnvelopeFields> parse_tool_result_envelope(std::string_view text) {
    auto header_at = text.find("[tool_result tool=");
    if (header_at == std::string_view::npos) return std::nullopt;
    EnvelopeFields f;
    for (const auto& raw_line : split(std::string(text.substr(header_at)), '\n')) {
        std::string_view line = trim(raw_line);
        if (line.rfind("[tool_result tool=", 0) == 0) {
            std::string_view rest = line.substr(18);
            auto sp = rest.find(" status=");
            if (sp == std::string_view::npos) continue;
            f.tool = std::string(rest.substr(0, sp));
            std::string_view st = rest.substr(sp + 8);
            if (!st.empty() && st.back() == ']') st.remove_suffix(1);
            f.status = std::string(st);
        } else if (line.rfind("span=", 0) == 0) {
            for (const auto& part : split(std::string(line.substr(5)), ';')) {
                std::string_view p = trim(part);
                double a = 0, b = 0;
                if (std::sscanf(std::string(p).c_str(), "[%lf,%lf]", &a, &b) == 2)
                    f.spans.push_back({a, b});
            }
        } else if (line.rfind("note=", 0) == 0) {
            f.note = std::string(line.substr(5));
        }
    }
    long long n = 0;
    if (std::sscanf(f.note.c_str(), "count=%lld", &n) == 1) f.count = n;
    if (f.note.rfind("found: ", 0) == 0) {
        std::string found = f.note.substr(7);
        if (auto semi = found.find(';'); semi != std::string::npos) found.resize(semi);
        for (const auto& label : split(found, ','))
            f.found_labels.emplace_back(trim(label));
    }
    return f;
}

// ---------------------------------------------------------------------------
// Answer normalization
// ---------------------------------------------------------------------------

/// Multiple choice: first Latin letter, uppercased (validity against the
/// option range is judged at reward time, not here). Open ended: trimmed,
/// whitespace-collapsed, case-folded.
inline std::string extract_answer(std::string_view answer_span, const Question& question) {
    if (question.qtype == QType::multiple_choice) {
        for (char c : trim(answer_span)) {
            if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))
                return std::string(1, ascii_upper(c));
        }
        return "";
    }
    return normalize_text(answer_span);
}

}  // namespace weaver
