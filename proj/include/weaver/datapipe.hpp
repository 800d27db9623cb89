// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "weaver/policy.hpp"
#include "weaver/rollout.hpp"

namespace weaver {

inline constexpr std::string_view kSftExportVersion = "weaver-sft/1";
inline constexpr std::string_view kRlPoolVersion = "weaver-rlpool/1";

/// Instruction used for the preliminary direct-answer filter pass.
inline constexpr std::string_view kDirectAnswerPrompt =
    "Answer the question directly from the provided frames. Reply with the answer inside "
    "<answer>...</answer> and nothing else. For multiple-choice questions answer with the "
    "option letter only.";

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct SourceItem {
    std::string video_id;
    Question question;       // gold rides here
    std::string textual_cot;
};

inline ojson to_json(const SourceItem& s) {
    ojson j;
    j["video_id"] = s.video_id;
    j["question"] = to_json(s.question);
    j["textual_cot"] = s.textual_cot;
    return j;
}
inline SourceItem source_item_from_json(const ojson& j) {
    SourceItem s;
    s.video_id = j.at("video_id").get<std::string>();
    s.question = question_from_json(j.at("question"));
    s.textual_cot = j.at("textual_cot").get<std::string>();
    if (s.question.gold.empty()) throw SpecError("source item: empty gold");
    return s;
}

struct AlignedCall {
    ToolCall call;
    ToolResult result;
};

/// A rewritten trajectory with its pre-extracted tool results, one per
/// tool-call block in order. Non-empty flags route the draft to the RL pool.
struct TrajectoryDraft {
    SourceItem source;
    std::string rewrite_text;
    std::vector<AlignedCall> calls;
    std::vector<std::string> flags;

    bool flagged() const { return !flags.empty(); }
};

struct SftSegment {
    std::string kind;  // "question" | "visual" | "model_text" | "tool_text"
    std::string text;
    std::optional<Clip> clip;
};

struct SftRecord {
    std::string video_id;
    Question question;
    std::int64_t n_frames = 64;
    std::vector<SftSegment> segments;
    std::vector<int> mask;  // aligned to segments; 1 = supervised
};

struct RlPoolRecord {
    std::string video_id;
    Question question;
};

inline void validate_sft_record(const SftRecord& r) {
    if (r.mask.size() != r.segments.size())
        throw SpecError("sft record: mask/segment length mismatch");
    for (std::size_t i = 0; i < r.segments.size(); ++i) {
        if (r.mask[i] != 0 && r.mask[i] != 1) throw SpecError("sft record: mask must be 0/1");
        if (r.mask[i] == 1 && r.segments[i].kind != "model_text")
            throw SpecError("sft record: supervision outside model text");
    }
}

// ---------------------------------------------------------------------------
// Stage 1: preliminary filtering
// ---------------------------------------------------------------------------

using VideoLookup = std::function<std::optional<VideoMeta>(const std::string& video_id)>;

struct Stage1Result {
    std::vector<SourceItem> kept;       // answered incorrectly: worth tool-use training
    std::vector<SourceItem> discarded;  // already answered correctly
    std::vector<std::string> diagnostics;
};

namespace detail {

/// Single-turn direct answer; nullopt when the backend fails.
inline std::optional<std::string> direct_answer(const Question& question, const VideoMeta& video,
                                                PolicyBackend& policy,
                                                const RolloutConfig& config) {
    auto state = init_state(question, video, config.stage1_frames, config.cost_model(),
                            kDirectAnswerPrompt);
    auto ctx = assemble_context(state, config.max_prompt_tokens);
    PolicyRequest request{ctx, config.sampling(config.seed)};
    auto parsed = parse_response(policy.next_response(request));
    if (!parsed.format_ok) return std::nullopt;
    return extract_answer(*parsed.answer_span, question);
}

}  // namespace detail

/// Partition items by whether the direct-answer policy already solves them.
/// Backend failures keep the item (with a diagnostic) rather than dropping
/// data. kept and discarded are an exact partition of the input.
inline Stage1Result stage1_filter(const std::vector<SourceItem>& items, PolicyBackend& policy,
                                  const VideoLookup& videos, const RolloutConfig& config) {
    Stage1Result out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        try {
            auto video = videos(item.video_id);
            if (!video) throw SpecError("unknown video \"" + item.video_id + "\"");
            auto answer = detail::direct_answer(item.question, *video, policy, config);
            if (answer && *answer == item.question.gold)
                out.discarded.push_back(item);
            else
                out.kept.push_back(item);
        } catch (const std::exception& e) {
            out.diagnostics.push_back("item " + std::to_string(i) + ": " + e.what());
            out.kept.push_back(item);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage 2: trajectory rewriting with tool pre-extraction
// ---------------------------------------------------------------------------

/// Prompt the rewriter with the construction instructions, the question and
/// the original textual chain of thought; parse every tool-call block out of
/// the rewrite and execute each against the toolkit in order.
inline TrajectoryDraft stage2_rewrite(const SourceItem& item, PolicyBackend& rewriter,
                                      ToolBackend& tools, const RolloutConfig& config) {
    std::string prompt = config.construction_prompt;
    prompt += "\n\nQuestion:\n" + item.question.prompt_text();
    prompt += "\n\nOriginal reasoning:\n" + item.textual_cot;

    HistoryState state;
    state.segments.push_back(TextSegment{prompt, SegmentRole::question, text_token_cost(prompt)});
    auto ctx = assemble_context(state, std::max<std::int64_t>(config.max_prompt_tokens,
                                                              text_token_cost(prompt) + 1));

    TrajectoryDraft draft;
    draft.source = item;
    try {
        draft.rewrite_text = rewriter.next_response({ctx, config.sampling(config.seed)});
    } catch (const std::exception& e) {
        draft.flags.push_back(std::string("rewriter failed: ") + e.what());
        return draft;
    }

    std::vector<std::string> diagnostics;
    auto calls = parse_all_tool_calls(draft.rewrite_text, diagnostics);
    for (const auto& d : diagnostics) draft.flags.push_back("malformed tool call: " + d);
    if (calls.empty() && diagnostics.empty())
        draft.flags.push_back("rewrite contains no tool calls");
    for (const auto& call : calls) {
        AlignedCall aligned;
        aligned.call = call;
        aligned.result = tools.call(call, item.video_id);
        if (aligned.result.status == ToolStatus::invalid_args)
            draft.flags.push_back("invalid call to " + call.name + ": " + aligned.result.note);
        draft.calls.push_back(std::move(aligned));
    }
    return draft;
}

// ---------------------------------------------------------------------------
// Draft -> interleaved segments
// ---------------------------------------------------------------------------

namespace detail {

/// Rewrite text split at tool-call block boundaries: chunk i (i < n_calls)
/// ends with its </tool_call>; the trailing chunk carries the conclusion.
inline std::vector<std::string> split_rewrite_chunks(const std::string& text) {
    std::vector<std::string> chunks;
    std::size_t from = 0;
    while (auto block = weaver::detail::first_block(text, kToolCallOpen, kToolCallClose, from)) {
        chunks.push_back(text.substr(from, block->end - from));
        from = block->end;
    }
    if (from < text.size()) chunks.push_back(text.substr(from));
    return chunks;
}

inline std::string strip_answer_block(const std::string& text) {
    auto block = weaver::detail::first_block(text, kAnswerOpen, kAnswerClose);
    if (!block) return text;
    return text.substr(0, block->begin) + text.substr(block->end);
}

}  // namespace detail

/// Interleave a draft into SFT segments with supervision masks: the model's
/// rewritten text is supervised; the question, initial frames, tool-result
/// envelopes and clips are context only.
inline SftRecord build_sft_record(const TrajectoryDraft& draft, const VideoMeta& video,
                                  std::int64_t n_frames, bool include_answer = true) {
    SftRecord r;
    r.video_id = draft.source.video_id;
    r.question = draft.source.question;
    r.n_frames = n_frames;

    auto push = [&](SftSegment seg, int supervise) {
        r.segments.push_back(std::move(seg));
        r.mask.push_back(supervise);
    };
    push({"question", draft.source.question.prompt_text(), std::nullopt}, 0);

    Clip v0;
    v0.video_id = video.video_id;
    v0.start_s = 0.0;
    v0.end_s = video.duration_s;
    v0.frame_times =
        uniform_frame_times(video.duration_s, std::min<std::int64_t>(n_frames, video.frame_count()));
    push({"visual", "", std::move(v0)}, 0);

    auto chunks = detail::split_rewrite_chunks(draft.rewrite_text);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        std::string text = chunks[i];
        const bool last = (i + 1 == chunks.size());
        if (last && !include_answer) text = detail::strip_answer_block(text);
        push({"model_text", text, std::nullopt}, 1);
        if (i < draft.calls.size()) {
            const auto& result = draft.calls[i].result;
            push({"tool_text", render_tool_result(result), std::nullopt}, 0);
            if (result.clip) push({"visual", "", *result.clip}, 0);
        }
    }
    validate_sft_record(r);
    return r;
}

// ---------------------------------------------------------------------------
// Stage 3: final refinement
// ---------------------------------------------------------------------------

struct RefineOutcome {
    std::optional<SftRecord> sft;
    std::optional<RlPoolRecord> rl;
};

/// Give the answerer the draft context minus the gold answer; a correct
/// answer graduates the draft to SFT, anything else (including flagged
/// drafts) yields a trajectory-free RL pool record.
inline RefineOutcome stage3_refine(const TrajectoryDraft& draft, PolicyBackend& answerer,
                                   const VideoLookup& videos, const RolloutConfig& config) {
    RefineOutcome out;
    auto to_rl = [&] {
        out.rl = RlPoolRecord{draft.source.video_id, draft.source.question};
        return out;
    };
    if (draft.flagged()) return to_rl();

    auto video = videos(draft.source.video_id);
    if (!video) return to_rl();

    SftRecord record;
    try {
        record = build_sft_record(draft, *video, config.sft_frames, /*include_answer=*/false);
    } catch (const std::exception&) {
        return to_rl();
    }

    HistoryState state;
    CostModel cost = config.cost_model();
    for (const auto& seg : record.segments) {
        if (seg.kind == "visual")
            state.segments.push_back(VisualSegment{*seg.clip, "", visual_token_cost(*seg.clip, cost)});
        else
            state.segments.push_back(TextSegment{
                seg.text, seg.kind == "question" ? SegmentRole::question : SegmentRole::tool,
                text_token_cost(seg.text)});
    }
    try {
        auto ctx = assemble_context(state, config.max_prompt_tokens);
        PolicyRequest request{ctx, config.sampling(config.seed)};
        auto parsed = parse_response(answerer.next_response(request));
        if (parsed.format_ok &&
            extract_answer(*parsed.answer_span, draft.source.question) == draft.source.question.gold) {
            out.sft = build_sft_record(draft, *video, config.sft_frames, /*include_answer=*/true);
            return out;
        }
    } catch (const std::exception&) {
        // answerer failure routes to the RL pool below
    }
    return to_rl();
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

inline ojson to_json(const SftRecord& r) {
    ojson j;
    j["version"] = kSftExportVersion;
    j["video_id"] = r.video_id;
    j["question"] = to_json(r.question);
    j["gold"] = r.question.gold;
    j["n_frames"] = r.n_frames;
    ojson segs = ojson::array();
    for (const auto& s : r.segments) {
        ojson seg;
        seg["kind"] = s.kind;
        if (s.kind == "visual")
            seg["clip"] = to_json(*s.clip);
        else
            seg["text"] = s.text;
        segs.push_back(seg);
    }
    j["segments"] = segs;
    j["mask"] = r.mask;
    return j;
}

inline SftRecord sft_record_from_json(const ojson& j) {
    if (j.at("version").get<std::string>() != kSftExportVersion)
        throw SpecError("sft record: unsupported version");
    SftRecord r;
    r.video_id = j.at("video_id").get<std::string>();
    r.question = question_from_json(j.at("question"));
    r.n_frames = j.at("n_frames").get<std::int64_t>();
    for (const auto& seg : j.at("segments")) {
        SftSegment s;
        s.kind = seg.at("kind").get<std::string>();
        if (s.kind == "visual")
            s.clip = clip_from_json(seg.at("clip"));
        else
            s.text = seg.at("text").get<std::string>();
        r.segments.push_back(std::move(s));
    }
    r.mask = j.at("mask").get<std::vector<int>>();
    validate_sft_record(r);
    return r;
}

inline std::int64_t export_sft(const std::vector<SftRecord>& records, std::string& out) {
    out.clear();
    for (const auto& r : records) {
        validate_sft_record(r);
        out += to_json(r).dump() + "\n";
    }
    return static_cast<std::int64_t>(records.size());
}

/// Question-answer pairs only; no trajectory content of any kind.
inline std::int64_t export_rl(const std::vector<RlPoolRecord>& pool, std::string& out) {
    out.clear();
    for (const auto& r : pool) {
        ojson j;
        j["version"] = kRlPoolVersion;
        j["video_id"] = r.video_id;
        j["question"] = to_json(r.question);
        out += j.dump() + "\n";
    }
    return static_cast<std::int64_t>(pool.size());
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct PipelineStats {
    std::int64_t n_samples = 0;
    double mean_calls_per_sample = 0.0;
    std::map<std::string, std::int64_t> per_tool_counts;
    std::map<std::string, double> per_tool_fraction;
    std::map<std::int64_t, std::int64_t> calls_histogram;
};

inline PipelineStats pipeline_stats(const std::vector<TrajectoryDraft>& drafts) {
    PipelineStats s;
    s.n_samples = static_cast<std::int64_t>(drafts.size());
    std::int64_t total_calls = 0;
    for (const auto& d : drafts) {
        const auto n = static_cast<std::int64_t>(d.calls.size());
        total_calls += n;
        ++s.calls_histogram[n];
        for (const auto& c : d.calls) ++s.per_tool_counts[c.call.name];
    }
    if (s.n_samples > 0)
        s.mean_calls_per_sample = static_cast<double>(total_calls) / static_cast<double>(s.n_samples);
    for (const auto& [name, count] : s.per_tool_counts)
        s.per_tool_fraction[name] = static_cast<double>(count) / static_cast<double>(total_calls);
    return s;
}

inline ojson to_json(const PipelineStats& s) {
    ojson j;
    j["n_samples"] = s.n_samples;
    j["mean_calls_per_sample"] = s.mean_calls_per_sample;
    ojson counts = ojson::object(), fractions = ojson::object(), hist = ojson::object();
    for (const auto& [k, v] : s.per_tool_counts) counts[k] = v;
    for (const auto& [k, v] : s.per_tool_fraction) fractions[k] = v;
    for (const auto& [k, v] : s.calls_histogram) hist[std::to_string(k)] = v;
    j["per_tool_counts"] = counts;
    j["per_tool_fraction"] = fractions;
    j["calls_histogram"] = hist;
    return j;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

using StageBackendFactory =
    std::function<std::shared_ptr<PolicyBackend>(const SourceItem& item)>;

struct PipelineResult {
    Stage1Result stage1;
    std::vector<TrajectoryDraft> drafts;  // one per kept item
    std::vector<SftRecord> sft;
    std::vector<RlPoolRecord> rl_pool;
    PipelineStats stats;  // over the drafts that graduated to SFT
};

/// The three stages end to end, with conservation checks at every boundary.
inline PipelineResult run_pipeline(const std::vector<SourceItem>& items,
                                   const StageBackendFactory& stage1_policy,
                                   const StageBackendFactory& rewriter,
                                   const StageBackendFactory& answerer, ToolBackend& tools,
                                   const VideoLookup& videos, const RolloutConfig& config) {
    PipelineResult out;
    {
        // One backend per item keeps doubles simple; a shared model backend
        // can return the same instance every time.
        std::vector<SourceItem> kept, discarded;
        for (const auto& item : items) {
            auto backend = stage1_policy(item);
            auto partial = stage1_filter({item}, *backend, videos, config);
            for (auto& k : partial.kept) kept.push_back(std::move(k));
            for (auto& d : partial.discarded) discarded.push_back(std::move(d));
            for (auto& d : partial.diagnostics) out.stage1.diagnostics.push_back(std::move(d));
        }
        out.stage1.kept = std::move(kept);
        out.stage1.discarded = std::move(discarded);
    }
    if (out.stage1.kept.size() + out.stage1.discarded.size() != items.size())
        throw SpecError("pipeline: stage 1 lost or duplicated items");

    for (const auto& item : out.stage1.kept) {
        auto backend = rewriter(item);
        out.drafts.push_back(stage2_rewrite(item, *backend, tools, config));
    }

    std::vector<TrajectoryDraft> graduated;
    for (const auto& draft : out.drafts) {
        auto backend = answerer(draft.source);
        auto outcome = stage3_refine(draft, *backend, videos, config);
        if (outcome.sft) {
            out.sft.push_back(std::move(*outcome.sft));
            graduated.push_back(draft);
        } else {
            out.rl_pool.push_back(std::move(*outcome.rl));
        }
    }
    if (out.sft.size() + out.rl_pool.size() != out.drafts.size())
        throw SpecError("pipeline: stage 3 lost or duplicated drafts");

    out.stats = pipeline_stats(graduated);
    return out;
}

}  // namespace weaver
