// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "weaver/types.hpp"

namespace weaver {

/// Thrown when the pinned segments (question + initial clip) alone exceed the
/// prompt budget: the episode cannot run at all under this configuration.
struct ContextOverflowError : SpecError {
    using SpecError::SpecError;
};

// ---------------------------------------------------------------------------
// Token costing
// ---------------------------------------------------------------------------

struct CostModel {
    std::int64_t tokens_per_frame = 128;
};

/// Heuristic text cost: ceil(bytes/4). A policy backend that reports an exact
/// count overrides the heuristic.
inline std::int64_t text_token_cost(std::string_view text,
                                    std::optional<std::int64_t> reported = std::nullopt) {
    if (reported) return *reported;
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

inline std::int64_t visual_token_cost(const Clip& clip, const CostModel& cost) {
    return static_cast<std::int64_t>(clip.frame_times.size()) * cost.tokens_per_frame;
}

inline std::int64_t token_cost(const Segment& seg, const CostModel& cost) {
    if (const auto* t = std::get_if<TextSegment>(&seg)) return text_token_cost(t->text);
    return visual_token_cost(std::get<VisualSegment>(seg).clip, cost);
}

// ---------------------------------------------------------------------------
// Frame sampling
// ---------------------------------------------------------------------------

/// Centered uniform sampling: t_k = (k + 0.5) * duration / n. Avoids duplicate
/// endpoints and is deterministic for a given (duration, n).
inline std::vector<double> uniform_frame_times(double duration_s, std::int64_t n) {
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k)
        times.push_back((static_cast<double>(k) + 0.5) * duration_s / static_cast<double>(n));
    return times;
}

/// The 1 fps grid over a span: whole seconds from ceil(start) strictly below
/// end. A sub-second span degenerates to its start time.
inline std::vector<double> one_fps_grid(const Span& span) {
    std::vector<double> times;
    for (double t = std::ceil(span.start_s - 1e-9); t < span.end_s - 1e-9; t += 1.0)
        times.push_back(t);
    if (times.empty()) times.push_back(span.start_s);
    return times;
}

/// Uniformly pick at most max_frames entries from times (centered indices).
/// The result is always a subset of the input grid.
inline std::vector<double> downsample_times(const std::vector<double>& times,
                                            std::int64_t max_frames) {
    const auto n = static_cast<std::int64_t>(times.size());
    if (n <= max_frames) return times;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(max_frames));
    for (std::int64_t k = 0; k < max_frames; ++k) {
        auto idx = static_cast<std::size_t>((static_cast<double>(k) + 0.5) *
                                            static_cast<double>(n) / static_cast<double>(max_frames));
        out.push_back(times[idx]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// History construction
// ---------------------------------------------------------------------------

/// H_0: the question text (system prompt prepended) followed by the initial
/// uniformly sampled clip v_0.
inline HistoryState init_state(const Question& question, const VideoMeta& video,
                               std::int64_t n_frames, const CostModel& cost,
                               std::string_view system_prompt) {
    video.validate();
    question.validate();
    if (n_frames < 1) throw SpecError("init_state: n_frames must be >= 1");

    const std::int64_t n = std::min<std::int64_t>(n_frames, video.frame_count());
    Clip v0;
    v0.video_id = video.video_id;
    v0.start_s = 0.0;
    v0.end_s = video.duration_s;
    v0.frame_times = uniform_frame_times(video.duration_s, n);

    std::string text;
    if (!system_prompt.empty()) {
        text += system_prompt;
        text += "\n\n";
    }
    text += question.prompt_text();

    HistoryState state;
    state.segments.push_back(TextSegment{text, SegmentRole::question, text_token_cost(text)});
    state.segments.push_back(VisualSegment{std::move(v0), "", 0});
    std::get<VisualSegment>(state.segments[1]).token_count =
        visual_token_cost(std::get<VisualSegment>(state.segments[1]).clip, cost);
    state.cached_prefix_len = 0;
    return state;
}

/// Append a completed step. Adds the response text segment; a tool result adds
/// its envelope (as a tool-role text segment when there is no clip to carry
/// it, otherwise riding on the visual segment). Earlier segments are shared
/// unchanged; cached_prefix_len marks them as already encoded.
inline HistoryState append_step(const HistoryState& state, const StepRecord& step,
                                const CostModel& cost, std::string_view envelope = "") {
    step.validate();
    HistoryState next;
    next.segments = state.segments;
    next.cached_prefix_len = state.segments.size();

    next.segments.push_back(TextSegment{step.response_text, SegmentRole::assistant,
                                        text_token_cost(step.response_text)});
    if (step.tool_result) {
        if (step.tool_result->clip) {
            VisualSegment vs;
            vs.clip = *step.tool_result->clip;
            vs.envelope = std::string(envelope);
            vs.token_count = visual_token_cost(vs.clip, cost);
            next.segments.push_back(std::move(vs));
        } else {
            // Failure note still reaches the policy so it can self-correct.
            next.segments.push_back(TextSegment{std::string(envelope), SegmentRole::tool,
                                                text_token_cost(envelope)});
        }
    }
    return next;
}

// ---------------------------------------------------------------------------
// Context assembly
// ---------------------------------------------------------------------------

/// An ordered view over the kept segments of a state. Holds indices into the
/// source state; valid only while that state is alive.
struct ContextView {
    const HistoryState* state = nullptr;
    std::vector<std::size_t> kept;
    std::vector<std::size_t> evicted;
    std::int64_t total_tokens = 0;

    std::size_t size() const { return kept.size(); }
    const Segment& segment(std::size_t i) const { return state->segments[kept[i]]; }
};

namespace detail {
/// Index of the initial clip (first visual segment); never evicted.
inline std::optional<std::size_t> initial_clip_index(const HistoryState& state) {
    for (std::size_t i = 0; i < state.segments.size(); ++i)
        if (std::holds_alternative<VisualSegment>(state.segments[i])) return i;
    return std::nullopt;
}
}  // namespace detail

/// Assemble the interleaved view under a token budget. Over budget, whole
/// visual segments are evicted oldest-first (the initial clip is pinned),
/// then non-question text segments oldest-first. Token counts were computed
/// when each segment was appended; the first cached_prefix_len segments are
/// never re-costed here.
inline ContextView assemble_context(const HistoryState& state, std::int64_t budget) {
    if (budget <= 0) throw SpecError("assemble_context: budget must be > 0");

    const auto n = state.segments.size();
    const auto v0 = detail::initial_clip_index(state);
    std::vector<bool> keep(n, true);
    std::int64_t total = 0;
    for (const auto& seg : state.segments) total += segment_tokens(seg);

    auto evict_pass = [&](auto&& evictable) {
        for (std::size_t i = 0; i < n && total > budget; ++i) {
            if (!keep[i] || !evictable(i)) continue;
            keep[i] = false;
            total -= segment_tokens(state.segments[i]);
        }
    };
    if (total > budget) {
        evict_pass([&](std::size_t i) {
            return std::holds_alternative<VisualSegment>(state.segments[i]) && (!v0 || i != *v0);
        });
        evict_pass([&](std::size_t i) {
            const auto* t = std::get_if<TextSegment>(&state.segments[i]);
            return t && t->role != SegmentRole::question;
        });
    }
    if (total > budget)
        throw ContextOverflowError("assemble_context: question and initial clip exceed budget (" +
                                   std::to_string(total) + " > " + std::to_string(budget) + ")");

    ContextView view;
    view.state = &state;
    view.total_tokens = total;
    for (std::size_t i = 0; i < n; ++i)
        (keep[i] ? view.kept : view.evicted).push_back(i);
    return view;
}

}  // namespace weaver
