// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "weaver/types.hpp"

namespace weaver {

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

struct EventSpan {
    std::string label;
    double start_s = 0.0;
    double end_s = 0.0;

    friend bool operator==(const EventSpan&, const EventSpan&) = default;
};

struct TimedBox {
    double time = 0.0;
    std::array<double, 4> box{};

    friend bool operator==(const TimedBox&, const TimedBox&) = default;
};

struct ObjectTrack {
    std::string object_label;
    int instance_id = 0;
    std::vector<TimedBox> boxes;  // sorted by time

    friend bool operator==(const ObjectTrack&, const ObjectTrack&) = default;
};

struct SyntheticVideo {
    VideoMeta meta;
    std::vector<EventSpan> events;  // sorted by start_s
    std::vector<ObjectTrack> tracks;
    std::uint64_t seed = 0;

    void validate() const {
        meta.validate();
        for (const auto& e : events) {
            if (!(e.start_s >= 0.0 && e.start_s < e.end_s && e.end_s <= meta.duration_s))
                throw SpecError("world: event span out of range: " + e.label);
            if (e.label.empty()) throw SpecError("world: empty event label");
        }
        for (const auto& t : tracks) {
            if (t.object_label.empty()) throw SpecError("world: empty object label");
            double prev = -1.0;
            for (const auto& b : t.boxes) {
                if (!(b.time > prev)) throw SpecError("world: track times not increasing");
                if (b.time < 0.0 || b.time > meta.duration_s)
                    throw SpecError("world: track time out of range");
                if (!(b.box[0] >= 0 && b.box[0] < b.box[2] && b.box[2] <= meta.width &&
                      b.box[1] >= 0 && b.box[1] < b.box[3] && b.box[3] <= meta.height))
                    throw SpecError("world: bad box geometry");
                prev = b.time;
            }
        }
    }

    /// Distinct event labels ordered by the start of their earliest occurrence.
    std::vector<std::string> labels_by_first_start() const {
        std::vector<std::string> out;
        for (const auto& e : events)
            if (std::find(out.begin(), out.end(), e.label) == out.end()) out.push_back(e.label);
        return out;
    }

    /// Object labels visible at integer second t (box exactly at that time).
    std::set<std::string> objects_at(double t) const {
        std::set<std::string> out;
        for (const auto& track : tracks)
            for (const auto& b : track.boxes)
                if (std::abs(b.time - t) < 1e-9) out.insert(track.object_label);
        return out;
    }
};

// ---------------------------------------------------------------------------
// World specs & generation
// ---------------------------------------------------------------------------

/// Optional scripted content pins a world's tables exactly (used by the
/// canonical fixture); without it the world is derived from the seed.
struct ScriptedContent {
    std::vector<EventSpan> events;
    std::vector<ObjectTrack> tracks;
};

struct WorldSpec {
    double duration_s = 120.0;
    std::int64_t n_events = 4;
    std::int64_t n_objects = 1;
    std::vector<std::string> label_vocab;
    std::vector<std::string> object_vocab;  // empty -> derived from label first tokens
    double fps = 1.0;
    int width = 640;
    int height = 360;
    std::string video_id;  // empty -> "world-<seed>"
    std::optional<ScriptedContent> scripted;
};

namespace detail {

inline std::string first_token(std::string_view label) {
    auto sp = label.find(' ');
    return std::string(sp == std::string_view::npos ? label : label.substr(0, sp));
}

inline std::vector<std::string> derived_object_vocab(const std::vector<std::string>& labels) {
    std::vector<std::string> out;
    for (const auto& l : labels) {
        auto tok = first_token(l);
        if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(tok);
    }
    return out;
}

}  // namespace detail

inline SyntheticVideo generate(std::uint64_t seed, const WorldSpec& spec) {
    if (!(spec.duration_s > 0.0)) throw SpecError("world spec: duration_s must be > 0");
    if (spec.n_events < 1) throw SpecError("world spec: n_events must be >= 1");
    if (spec.n_objects < 0) throw SpecError("world spec: n_objects must be >= 0");
    if (spec.label_vocab.empty() && !spec.scripted) throw SpecError("world spec: empty label_vocab");

    SyntheticVideo w;
    w.seed = seed;
    w.meta.video_id = spec.video_id.empty() ? "world-" + std::to_string(seed) : spec.video_id;
    w.meta.duration_s = spec.duration_s;
    w.meta.fps = spec.fps;
    w.meta.width = spec.width;
    w.meta.height = spec.height;

    if (spec.scripted) {
        w.events = spec.scripted->events;
        w.tracks = spec.scripted->tracks;
        std::stable_sort(w.events.begin(), w.events.end(),
                         [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
        w.validate();
        return w;
    }

    // Slot the timeline so events never overlap and starts are distinct.
    const auto slot = spec.duration_s / static_cast<double>(spec.n_events);
    if (slot < 3.0) throw SpecError("world spec: events cannot fit (duration too short)");
    Rng rng(mix64(seed, 0x5752444C44ULL));  // world-generation domain

    std::vector<std::string> shuffled = spec.label_vocab;
    for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.below(i)]);

    for (std::int64_t i = 0; i < spec.n_events; ++i) {
        const double slot_start = std::floor(static_cast<double>(i) * slot);
        const double slot_end = std::floor(static_cast<double>(i + 1) * slot);
        const auto max_len = static_cast<std::int64_t>(slot_end - slot_start) - 1;
        const std::int64_t len = 2 + static_cast<std::int64_t>(rng.below(
                                         static_cast<std::uint64_t>(std::max<std::int64_t>(1, std::min<std::int64_t>(4, max_len - 1)))));
        const auto play = static_cast<std::uint64_t>(std::max<std::int64_t>(1, max_len - len));
        const double start = slot_start + static_cast<double>(rng.below(play));
        std::string label = shuffled[static_cast<std::size_t>(i) % shuffled.size()];
        w.events.push_back({label, start, start + static_cast<double>(len)});
    }
    // Guarantee at least one repeated label so counting tasks have variety.
    if (spec.n_events >= 4) {
        auto dup_from = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(spec.n_events - 1)));
        w.events.back().label = w.events[dup_from].label;
    }

    auto object_vocab = spec.object_vocab.empty() ? detail::derived_object_vocab(spec.label_vocab)
                                                  : spec.object_vocab;
    const auto n_obj = std::min<std::int64_t>(spec.n_objects,
                                              static_cast<std::int64_t>(object_vocab.size()));
    int next_instance = 0;
    for (std::int64_t j = 0; j < n_obj; ++j) {
        const auto& obj = object_vocab[static_cast<std::size_t>(j)];
        for (const auto& e : w.events) {
            if (detail::first_token(e.label) != obj) continue;
            ObjectTrack track;
            track.object_label = obj;
            track.instance_id = next_instance++;
            const double bw = std::floor(spec.width / 5.0);
            const double bh = std::floor(spec.height / 5.0);
            double x = std::floor(rng.range(0.0, spec.width - bw));
            double y = std::floor(rng.range(0.0, spec.height - bh));
            const double dx = std::floor(rng.range(-8.0, 9.0));
            for (double t = e.start_s; t < e.end_s - 1e-9; t += 1.0) {
                track.boxes.push_back({t, {x, y, x + bw, y + bh}});
                x = std::clamp(x + dx, 0.0, spec.width - bw);
            }
            if (!track.boxes.empty()) w.tracks.push_back(std::move(track));
        }
    }
    w.validate();
    return w;
}

// ---------------------------------------------------------------------------
// Canonical fixture (video_id "w1", seed 7)
// ---------------------------------------------------------------------------

inline WorldSpec canonical_world_spec() {
    WorldSpec spec;
    spec.duration_s = 120.0;
    spec.n_events = 4;
    spec.n_objects = 1;
    spec.label_vocab = {"man opens door", "dog enters", "phone rings"};
    spec.video_id = "w1";
    ScriptedContent content;
    content.events = {
        {"man opens door", 10.0, 14.0},
        {"dog enters", 30.0, 33.0},
        {"dog enters", 70.0, 74.0},
        {"phone rings", 90.0, 95.0},
    };
    ObjectTrack dog0{"dog", 0, {
        {30.0, {100, 120, 180, 200}},
        {31.0, {95, 115, 185, 205}},
        {32.0, {100, 120, 180, 200}},
    }};
    ObjectTrack dog1{"dog", 1, {
        {70.0, {400, 150, 470, 230}},
        {71.0, {392, 150, 462, 230}},
        {72.0, {384, 150, 454, 230}},
        {73.0, {376, 150, 446, 230}},
    }};
    content.tracks = {dog0, dog1};
    spec.scripted = content;
    return spec;
}

inline SyntheticVideo canonical_world() { return generate(7, canonical_world_spec()); }

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline ojson to_json(const SyntheticVideo& w) {
    ojson j;
    j["meta"] = {{"video_id", w.meta.video_id}, {"duration_s", w.meta.duration_s},
                 {"fps", w.meta.fps},           {"width", w.meta.width},
                 {"height", w.meta.height}};
    ojson events = ojson::array();
    for (const auto& e : w.events)
        events.push_back({{"label", e.label}, {"start_s", e.start_s}, {"end_s", e.end_s}});
    j["events"] = events;
    ojson tracks = ojson::array();
    for (const auto& t : w.tracks) {
        ojson boxes = ojson::array();
        for (const auto& b : t.boxes) boxes.push_back({{"time", b.time}, {"box", b.box}});
        tracks.push_back({{"object_label", t.object_label},
                          {"instance_id", t.instance_id},
                          {"boxes", boxes}});
    }
    j["tracks"] = tracks;
    j["seed"] = w.seed;
    return j;
}

inline SyntheticVideo world_from_json(const ojson& j) {
    SyntheticVideo w;
    const auto& m = j.at("meta");
    w.meta.video_id = m.at("video_id").get<std::string>();
    w.meta.duration_s = m.at("duration_s").get<double>();
    w.meta.fps = m.at("fps").get<double>();
    w.meta.width = m.at("width").get<int>();
    w.meta.height = m.at("height").get<int>();
    for (const auto& e : j.at("events"))
        w.events.push_back({e.at("label").get<std::string>(), e.at("start_s").get<double>(),
                            e.at("end_s").get<double>()});
    for (const auto& t : j.at("tracks")) {
        ObjectTrack track;
        track.object_label = t.at("object_label").get<std::string>();
        track.instance_id = t.at("instance_id").get<int>();
        for (const auto& b : t.at("boxes")) {
            TimedBox tb;
            tb.time = b.at("time").get<double>();
            for (int i = 0; i < 4; ++i) tb.box[i] = b.at("box").at(i).get<double>();
            track.boxes.push_back(tb);
        }
        w.tracks.push_back(std::move(track));
    }
    w.seed = j.at("seed").get<std::uint64_t>();
    w.validate();
    return w;
}

/// One document per world, stable bytes.
inline std::string serialize_world(const SyntheticVideo& w) { return to_json(w).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Task templates
// ---------------------------------------------------------------------------

enum class TaskTemplate { count_event, order_events, object_at_time, span_of_event };

inline std::string to_string(TaskTemplate t) {
    switch (t) {
        case TaskTemplate::count_event: return "count_event";
        case TaskTemplate::order_events: return "order_events";
        case TaskTemplate::object_at_time: return "object_at_time";
        default: return "span_of_event";
    }
}
inline TaskTemplate task_template_from_string(std::string_view s) {
    if (s == "count_event") return TaskTemplate::count_event;
    if (s == "order_events") return TaskTemplate::order_events;
    if (s == "object_at_time") return TaskTemplate::object_at_time;
    if (s == "span_of_event") return TaskTemplate::span_of_event;
    throw SpecError("unknown task template: " + std::string(s));
}

inline constexpr TaskTemplate kAllTemplates[] = {
    TaskTemplate::count_event, TaskTemplate::order_events, TaskTemplate::object_at_time,
    TaskTemplate::span_of_event};

/// Option text for a time span; make_task and answer interpolation must agree
/// on this rendering byte-for-byte.
inline std::string span_option_text(const Span& s) {
    return "[" + fmt1(s.start_s) + ", " + fmt1(s.end_s) + "]";
}

inline std::string order_option_text(const std::vector<std::string>& labels) {
    return join(labels, " -> ");
}

namespace detail {

inline constexpr const char* kFillerObjects[] = {"cat", "bicycle", "balloon", "chair", "lamp"};

/// Deterministic Fisher-Yates with the task rng.
template <typename T>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

/// Place gold among distractors at a seeded position; returns (options, gold letter).
inline std::pair<std::vector<std::string>, std::string> place_options(
    std::string gold_text, std::vector<std::string> distractors, Rng& rng) {
    auto pos = static_cast<std::size_t>(rng.below(distractors.size() + 1));
    std::vector<std::string> options = std::move(distractors);
    options.insert(options.begin() + static_cast<std::ptrdiff_t>(pos), std::move(gold_text));
    return {options, std::string(1, option_letter(pos))};
}

}  // namespace detail

/// Build a multiple-choice task whose gold answer is a pure function of the
/// world's ground truth. Throws SpecError when the template is unsatisfiable
/// in this world.
inline Question make_task(const SyntheticVideo& world, TaskTemplate tmpl, std::uint64_t rng_seed) {
    Rng rng(mix64(rng_seed, static_cast<std::uint64_t>(tmpl) + 0x7441534BULL));
    Question q;
    q.qtype = QType::multiple_choice;
    q.template_name = to_string(tmpl);

    switch (tmpl) {
        case TaskTemplate::count_event: {
            auto labels = world.labels_by_first_start();
            if (labels.empty()) throw SpecError("count_event: no events");
            const auto& label = labels[rng.below(labels.size())];
            std::int64_t c = 0;
            for (const auto& e : world.events) c += (e.label == label) ? 1 : 0;
            const auto lo = std::max<std::int64_t>(1, c - static_cast<std::int64_t>(rng.below(4)));
            for (std::int64_t v = lo; v < lo + 4; ++v) q.options.push_back(std::to_string(v));
            q.gold = std::string(1, option_letter(static_cast<std::size_t>(c - lo)));
            q.text = "How many times does the event \"" + label + "\" occur in the video?";
            q.params = {{"query", label}};
            break;
        }
        case TaskTemplate::span_of_event: {
            auto labels = world.labels_by_first_start();
            if (labels.empty()) throw SpecError("span_of_event: no events");
            const auto& label = labels[rng.below(labels.size())];
            Span gold_span{-1, -1};
            for (const auto& e : world.events)
                if (e.label == label) { gold_span = {e.start_s, e.end_s}; break; }
            std::string gold_text = span_option_text(gold_span);
            // Distractors: other events' spans, then shifted copies.
            std::vector<std::string> distractors;
            auto push_unique = [&](const Span& s) {
                auto txt = span_option_text(s);
                if (txt != gold_text &&
                    std::find(distractors.begin(), distractors.end(), txt) == distractors.end())
                    distractors.push_back(txt);
            };
            for (const auto& e : world.events) push_unique({e.start_s, e.end_s});
            double shift = 5.0 + static_cast<double>(rng.below(7));
            while (distractors.size() < 3) {
                push_unique({gold_span.start_s + shift, gold_span.end_s + shift});
                shift += 4.0;
            }
            distractors.resize(3);
            detail::shuffle_inplace(distractors, rng);
            auto [options, gold] = detail::place_options(gold_text, std::move(distractors), rng);
            q.options = std::move(options);
            q.gold = gold;
            q.text = "During which time span does \"" + label + "\" first occur?";
            q.params = {{"query", label}};
            break;
        }
        case TaskTemplate::object_at_time: {
            std::vector<double> candidates;
            for (double t = 0.0; t < world.meta.duration_s; t += 1.0)
                if (world.objects_at(t).size() == 1) candidates.push_back(t);
            if (candidates.empty()) throw SpecError("object_at_time: no unambiguous time");
            const double t = candidates[rng.below(candidates.size())];
            const std::string gold_label = *world.objects_at(t).begin();
            std::vector<std::string> distractors;
            for (const auto& track : world.tracks)
                if (track.object_label != gold_label &&
                    std::find(distractors.begin(), distractors.end(), track.object_label) ==
                        distractors.end())
                    distractors.push_back(track.object_label);
            for (const char* filler : detail::kFillerObjects) {
                if (distractors.size() >= 3) break;
                if (filler != gold_label) distractors.emplace_back(filler);
            }
            distractors.resize(3);
            detail::shuffle_inplace(distractors, rng);
            auto [options, gold] = detail::place_options(gold_label, std::move(distractors), rng);
            q.options = std::move(options);
            q.gold = gold;
            q.text = "Which object is visible at " + fmt1(t) + " s?";
            q.params = {{"time", t}};
            break;
        }
        case TaskTemplate::order_events: {
            auto by_start = world.labels_by_first_start();
            if (by_start.size() < 2) throw SpecError("order_events: fewer than 2 distinct events");
            if (by_start.size() > 4) by_start.resize(4);
            std::string gold_text = order_option_text(by_start);
            std::vector<std::string> sorted_labels = by_start;
            std::sort(sorted_labels.begin(), sorted_labels.end());
            std::vector<std::string> perms;
            auto p = sorted_labels;
            do {
                auto txt = order_option_text(p);
                if (txt != gold_text) perms.push_back(txt);
            } while (std::next_permutation(p.begin(), p.end()));
            detail::shuffle_inplace(perms, rng);
            if (perms.size() > 3) perms.resize(3);
            auto [options, gold] = detail::place_options(gold_text, std::move(perms), rng);
            q.options = std::move(options);
            q.gold = gold;
            q.text = "Which option lists the events in the order they first occur?";
            // Fixed alphabetical order: tool call i in an oracle plan grounds labels[i].
            q.params = {{"labels", sorted_labels}};
            break;
        }
    }
    q.validate();
    return q;
}

/// Independent ground-truth answer, recomputed without reading gold. Tests
/// hold make_task to `oracle_answer == gold` across every generated task.
inline std::string oracle_answer(const SyntheticVideo& world, const Question& q) {
    auto find_option = [&](const std::string& text) -> std::string {
        for (std::size_t i = 0; i < q.options.size(); ++i)
            if (q.options[i] == text) return std::string(1, option_letter(i));
        return "";
    };
    const auto tmpl = task_template_from_string(q.template_name);
    switch (tmpl) {
        case TaskTemplate::count_event: {
            const auto label = q.params.at("query").get<std::string>();
            std::int64_t c = 0;
            for (const auto& e : world.events) c += (e.label == label) ? 1 : 0;
            return find_option(std::to_string(c));
        }
        case TaskTemplate::span_of_event: {
            const auto label = q.params.at("query").get<std::string>();
            for (const auto& e : world.events)
                if (e.label == label) return find_option(span_option_text({e.start_s, e.end_s}));
            return "";
        }
        case TaskTemplate::object_at_time: {
            const double t = q.params.at("time").get<double>();
            auto labels = world.objects_at(t);
            return labels.size() == 1 ? find_option(*labels.begin()) : "";
        }
        case TaskTemplate::order_events: {
            auto asked = q.params.at("labels").get<std::vector<std::string>>();
            std::vector<std::pair<double, std::string>> starts;
            for (const auto& label : asked) {
                double first = -1;
                for (const auto& e : world.events)
                    if (e.label == label) { first = e.start_s; break; }
                starts.emplace_back(first, label);
            }
            std::sort(starts.begin(), starts.end());
            std::vector<std::string> ordered;
            for (auto& [s, l] : starts) ordered.push_back(l);
            return find_option(order_option_text(ordered));
        }
    }
    return "";
}

}  // namespace weaver
