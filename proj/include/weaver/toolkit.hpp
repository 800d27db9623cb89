// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "weaver/core.hpp"
#include "weaver/synthworld.hpp"
#include "weaver/types.hpp"

namespace weaver {

// ---------------------------------------------------------------------------
// Tool specs
// ---------------------------------------------------------------------------

struct ArgSpec {
    std::string name;
    enum class Type { string, number, string_array } type = Type::string;
    bool required = false;
};

struct ToolSpec {
    std::string name;
    std::string doc;
    std::vector<ArgSpec> args;
};

/// The six tools, in library order. Omitted span arguments default to the
/// full video at dispatch.
inline const std::vector<ToolSpec>& tool_specs() {
    using T = ArgSpec::Type;
    static const std::vector<ToolSpec> specs = {
        {"temporal_grounding",
         "Ground video clip temporally according to query.",
         {{"query", T::string, true}, {"start_s", T::number, false}, {"end_s", T::number, false}}},
        {"frame_selection",
         "Select most representative frame according to query.",
         {{"query", T::string, true}, {"start_s", T::number, false}, {"end_s", T::number, false}}},
        {"temporal_count",
         "Judge and merge video clips where query occurs.",
         {{"query", T::string, true}, {"start_s", T::number, false}, {"end_s", T::number, false}}},
        {"trim",
         "Ground video clip according to start and end.",
         {{"start_s", T::number, true}, {"end_s", T::number, true}}},
        {"spatial_tracking",
         "Track target objects in video.",
         {{"objects", T::string_array, true},
          {"start_s", T::number, false},
          {"end_s", T::number, false}}},
        {"spatial_grounding",
         "Ground objects spatially per frame.",
         {{"objects", T::string_array, true},
          {"start_s", T::number, false},
          {"end_s", T::number, false}}},
    };
    return specs;
}

inline const ToolSpec* find_tool_spec(const std::string& name) {
    for (const auto& s : tool_specs())
        if (s.name == name) return &s;
    return nullptr;
}

inline std::vector<std::string> tool_names() {
    std::vector<std::string> names;
    for (const auto& s : tool_specs()) names.push_back(s.name);
    return names;
}

struct ToolkitConfig {
    std::int64_t max_tool_frames = 32;
    double merge_gap_s = 0.0;  // spans closer than this are spliced together
    // nullopt enables everything; an empty set is the no-tool baseline.
    std::optional<std::set<std::string>> enabled;

    bool is_enabled(const std::string& name) const {
        return !enabled.has_value() || enabled->count(name) > 0;
    }
};

// ---------------------------------------------------------------------------
// Validation & span resolution
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<std::string> validate_args(const ToolSpec& spec, const ojson& args) {
    for (const auto& a : spec.args) {
        if (!args.contains(a.name)) {
            if (a.required) return "missing required argument \"" + a.name + "\"";
            continue;
        }
        const auto& v = args.at(a.name);
        switch (a.type) {
            case ArgSpec::Type::string:
                if (!v.is_string() || v.get<std::string>().empty())
                    return "argument \"" + a.name + "\" must be a non-empty string";
                break;
            case ArgSpec::Type::number:
                if (!v.is_number()) return "argument \"" + a.name + "\" must be a number";
                break;
            case ArgSpec::Type::string_array: {
                if (!v.is_array() || v.empty())
                    return "argument \"" + a.name + "\" must be a non-empty array of strings";
                for (const auto& item : v)
                    if (!item.is_string() || item.get<std::string>().empty())
                        return "argument \"" + a.name + "\" must contain non-empty strings";
                break;
            }
        }
    }
    for (auto it = args.begin(); it != args.end(); ++it) {
        bool known = false;
        for (const auto& a : spec.args) known |= (a.name == it.key());
        if (!known) return "unknown argument \"" + it.key() + "\"";
    }
    return std::nullopt;
}

inline ToolResult failure(const std::string& tool, ToolStatus status, std::string note) {
    ToolResult r;
    r.tool_name = tool;
    r.status = status;
    r.note = std::move(note);
    return r;
}

}  // namespace detail

/// Fill omitted span arguments with the default span and clamp to the video.
/// Returns nullopt when the clamped span is empty.
inline std::optional<Span> resolve_span(const ojson& args, Span default_span, double duration_s) {
    Span s = default_span;
    if (args.contains("start_s")) s.start_s = args.at("start_s").get<double>();
    if (args.contains("end_s")) s.end_s = args.at("end_s").get<double>();
    s.start_s = std::clamp(s.start_s, 0.0, duration_s);
    s.end_s = std::clamp(s.end_s, 0.0, duration_s);
    if (!(s.start_s < s.end_s)) return std::nullopt;
    return s;
}

// ---------------------------------------------------------------------------
// Oracle tools over synthetic ground truth
// ---------------------------------------------------------------------------

namespace oracle {

inline bool label_matches(const std::string& label, const std::string& query) {
    return normalize_text(label) == normalize_text(query);
}

inline ToolResult temporal_grounding(const SyntheticVideo& w, const std::string& query, Span span) {
    for (const auto& e : w.events) {  // events sorted by start: first hit is earliest
        if (!label_matches(e.label, query)) continue;
        Span hit{std::max(e.start_s, span.start_s), std::min(e.end_s, span.end_s)};
        if (!(hit.start_s < hit.end_s)) continue;
        ToolResult r;
        r.tool_name = "temporal_grounding";
        r.status = ToolStatus::ok;
        r.spans = {hit};
        r.note = "matched \"" + query + "\"";
        Clip c;
        c.video_id = w.meta.video_id;
        c.start_s = hit.start_s;
        c.end_s = hit.end_s;
        c.frame_times = one_fps_grid(hit);
        r.clip = std::move(c);
        return r;
    }
    return detail::failure("temporal_grounding", ToolStatus::not_found, "no matching event");
}

inline ToolResult frame_selection(const SyntheticVideo& w, const std::string& query, Span span) {
    const auto grid = one_fps_grid(span);
    std::vector<double> scores(grid.size(), 0.0);

    // Event queries: score 1 at the grid frame nearest each matching event's midpoint.
    for (const auto& e : w.events) {
        if (!label_matches(e.label, query)) continue;
        if (e.end_s <= span.start_s || e.start_s >= span.end_s) continue;
        const double mid = 0.5 * (e.start_s + e.end_s);
        std::size_t best = 0;
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (std::abs(grid[i] - mid) < std::abs(grid[best] - mid)) best = i;
        scores[best] = std::max(scores[best], 1.0);
    }
    // Object queries: score by box area at each frame.
    for (const auto& track : w.tracks) {
        if (!label_matches(track.object_label, query)) continue;
        for (const auto& b : track.boxes) {
            for (std::size_t i = 0; i < grid.size(); ++i) {
                if (std::abs(grid[i] - b.time) < 1e-9) {
                    const double area = (b.box[2] - b.box[0]) * (b.box[3] - b.box[1]);
                    scores[i] = std::max(scores[i], area);
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (scores[i] > scores[best]) best = i;  // strict: ties keep the earlier frame
    if (scores[best] <= 0.0)
        return detail::failure("frame_selection", ToolStatus::not_found, "no matching frame");

    const double t = grid[best];
    ToolResult r;
    r.tool_name = "frame_selection";
    r.status = ToolStatus::ok;
    Clip c;
    c.video_id = w.meta.video_id;
    c.start_s = t;
    c.end_s = std::min(t + 1.0, span.end_s);  // grid times are strictly below span end
    c.frame_times = {t};
    r.spans = {{c.start_s, c.end_s}};
    r.clip = std::move(c);
    r.note = "frame at " + fmt2(t) + " for \"" + query + "\"";
    return r;
}

inline ToolResult temporal_count(const SyntheticVideo& w, const std::string& query, Span span,
                                 double merge_gap_s) {
    std::vector<Span> hits;
    for (const auto& e : w.events) {
        if (!label_matches(e.label, query)) continue;
        Span hit{std::max(e.start_s, span.start_s), std::min(e.end_s, span.end_s)};
        if (hit.start_s < hit.end_s) hits.push_back(hit);
    }
    if (hits.empty())
        return detail::failure("temporal_count", ToolStatus::not_found, "no matching event");
    std::sort(hits.begin(), hits.end(),
              [](const Span& a, const Span& b) { return a.start_s < b.start_s; });
    std::vector<Span> merged{hits.front()};
    for (std::size_t i = 1; i < hits.size(); ++i) {
        if (hits[i].start_s <= merged.back().end_s + merge_gap_s)
            merged.back().end_s = std::max(merged.back().end_s, hits[i].end_s);
        else
            merged.push_back(hits[i]);
    }

    ToolResult r;
    r.tool_name = "temporal_count";
    r.status = ToolStatus::ok;
    r.spans = merged;
    r.note = "count=" + std::to_string(merged.size());
    Clip c;
    c.video_id = w.meta.video_id;
    c.start_s = merged.front().start_s;
    c.end_s = merged.back().end_s;
    for (const auto& m : merged)
        for (double t : one_fps_grid(m)) c.frame_times.push_back(t);
    r.clip = std::move(c);
    return r;
}

inline ToolResult trim(const SyntheticVideo& w, Span span) {
    ToolResult r;
    r.tool_name = "trim";
    r.status = ToolStatus::ok;
    r.spans = {span};
    r.note = "trimmed";
    Clip c;
    c.video_id = w.meta.video_id;
    c.start_s = span.start_s;
    c.end_s = span.end_s;
    c.frame_times = one_fps_grid(span);
    r.clip = std::move(c);
    return r;
}

inline ToolResult spatial_boxes(const SyntheticVideo& w, const std::vector<std::string>& objects,
                                Span span, bool with_instance_ids, const std::string& tool_name) {
    Clip c;
    c.video_id = w.meta.video_id;
    c.start_s = span.start_s;
    c.end_s = span.end_s;
    c.frame_times = one_fps_grid(span);

    std::vector<std::string> found, missing;
    for (const auto& requested : objects) {
        bool any = false;
        for (const auto& track : w.tracks) {
            if (!label_matches(track.object_label, requested)) continue;
            for (const auto& b : track.boxes) {
                if (b.time < span.start_s - 1e-9 || b.time > span.end_s + 1e-9) continue;
                BoxAnnotation a;
                a.time = b.time;
                a.label = track.object_label;
                if (with_instance_ids) a.instance_id = track.instance_id;
                a.box = b.box;
                c.annotations.push_back(a);
                any = true;
            }
        }
        (any ? found : missing).push_back(requested);
    }
    if (found.empty()) {
        std::vector<std::string> parts;
        for (const auto& m : missing) parts.push_back(m + ": not found");
        return detail::failure(tool_name, ToolStatus::not_found, join(parts, "; "));
    }
    std::sort(c.annotations.begin(), c.annotations.end(), [](const auto& a, const auto& b) {
        if (a.time != b.time) return a.time < b.time;
        if (a.label != b.label) return a.label < b.label;
        return a.instance_id.value_or(-1) < b.instance_id.value_or(-1);
    });

    ToolResult r;
    r.tool_name = tool_name;
    r.status = ToolStatus::ok;
    r.spans = {span};
    r.note = "found: " + join(found, ", ");
    for (const auto& m : missing) r.note += "; " + m + ": not found";
    r.clip = std::move(c);
    return r;
}

inline ToolResult spatial_tracking(const SyntheticVideo& w, const std::vector<std::string>& objects,
                                   Span span) {
    return spatial_boxes(w, objects, span, /*with_instance_ids=*/true, "spatial_tracking");
}

inline ToolResult spatial_grounding(const SyntheticVideo& w, const std::vector<std::string>& objects,
                                    Span span) {
    return spatial_boxes(w, objects, span, /*with_instance_ids=*/false, "spatial_grounding");
}

}  // namespace oracle

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

namespace detail {

/// Cap the clip at max_tool_frames (uniform subset of the 1 fps grid) and drop
/// annotations whose frames were dropped.
inline void cap_clip(ToolResult& r, std::int64_t max_tool_frames) {
    if (!r.clip || static_cast<std::int64_t>(r.clip->frame_times.size()) <= max_tool_frames) return;
    r.clip->frame_times = downsample_times(r.clip->frame_times, max_tool_frames);
    std::vector<BoxAnnotation> kept;
    for (const auto& a : r.clip->annotations)
        for (double t : r.clip->frame_times)
            if (std::abs(t - a.time) < 1e-9) {
                kept.push_back(a);
                break;
            }
    r.clip->annotations = std::move(kept);
}

}  // namespace detail

/// Validated dispatch over a synthetic world: schema check, span fill/clamp,
/// route, 1 fps sampling with the frame cap. All failures come back as
/// status notes; nothing throws on a bad call.
inline ToolResult dispatch(const ToolCall& call, const SyntheticVideo& video,
                           const ToolkitConfig& cfg = {},
                           std::optional<Span> default_span = std::nullopt) {
    const ToolSpec* spec = find_tool_spec(call.name);
    if (!spec)
        return detail::failure(call.name, ToolStatus::invalid_args,
                               "unknown tool \"" + call.name + "\"");
    if (!cfg.is_enabled(call.name))
        return detail::failure(call.name, ToolStatus::invalid_args, "tool disabled");
    if (auto err = detail::validate_args(*spec, call.arguments))
        return detail::failure(call.name, ToolStatus::invalid_args, *err);

    const Span dflt = default_span.value_or(video.meta.full_span());
    auto span = resolve_span(call.arguments, dflt, video.meta.duration_s);
    if (!span)
        return detail::failure(call.name, ToolStatus::invalid_args, "empty span after clamping");

    ToolResult r;
    if (call.name == "temporal_grounding")
        r = oracle::temporal_grounding(video, call.arguments.at("query").get<std::string>(), *span);
    else if (call.name == "frame_selection")
        r = oracle::frame_selection(video, call.arguments.at("query").get<std::string>(), *span);
    else if (call.name == "temporal_count")
        r = oracle::temporal_count(video, call.arguments.at("query").get<std::string>(), *span,
                                   cfg.merge_gap_s);
    else if (call.name == "trim")
        r = oracle::trim(video, *span);
    else if (call.name == "spatial_tracking")
        r = oracle::spatial_tracking(video, call.arguments.at("objects").get<std::vector<std::string>>(),
                                     *span);
    else
        r = oracle::spatial_grounding(video, call.arguments.at("objects").get<std::vector<std::string>>(),
                                      *span);

    detail::cap_clip(r, cfg.max_tool_frames);
    return r;
}

// ---------------------------------------------------------------------------
// Backend seam
// ---------------------------------------------------------------------------

/// Tool execution surface the rollout loop talks to. Oracle worlds and remote
/// model servers both sit behind this.
class ToolBackend {
public:
    virtual ~ToolBackend() = default;
    virtual ToolResult call(const ToolCall& call, const std::string& video_id) = 0;
};

class OracleToolBackend : public ToolBackend {
public:
    explicit OracleToolBackend(ToolkitConfig cfg = {}) : cfg_(std::move(cfg)) {}

    void add_world(SyntheticVideo world) { worlds_[world.meta.video_id] = std::move(world); }

    const SyntheticVideo* world(const std::string& video_id) const {
        auto it = worlds_.find(video_id);
        return it == worlds_.end() ? nullptr : &it->second;
    }

    const ToolkitConfig& config() const { return cfg_; }
    void set_enabled(std::optional<std::set<std::string>> enabled) {
        cfg_.enabled = std::move(enabled);
    }

    ToolResult call(const ToolCall& call, const std::string& video_id) override {
        const auto* w = world(video_id);
        if (!w)
            return detail::failure(call.name, ToolStatus::invalid_args,
                                   "unknown video \"" + video_id + "\"");
        return dispatch(call, *w, cfg_);
    }

private:
    std::map<std::string, SyntheticVideo> worlds_;
    ToolkitConfig cfg_;
};

/// Tool documentation block embedded in the shipped system prompt.
inline std::string render_tool_docs() {
    std::string out;
    for (const auto& spec : tool_specs()) {
        out += "- " + spec.name + ": " + spec.doc + " Arguments: ";
        std::vector<std::string> parts;
        for (const auto& a : spec.args) {
            std::string t = a.type == ArgSpec::Type::string ? "string"
                            : a.type == ArgSpec::Type::number ? "number"
                                                              : "array of strings";
            parts.push_back(a.name + " (" + t + (a.required ? ", required)" : ", optional)"));
        }
        out += join(parts, ", ") + "\n";
    }
    return out;
}

}  // namespace weaver
