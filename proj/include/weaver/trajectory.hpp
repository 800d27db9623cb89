// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "weaver/config.hpp"
#include "weaver/types.hpp"

namespace weaver {

inline constexpr std::string_view kTrajectoryVersion = "weaver-traj/1";

enum class StopReason { answered, max_turns, context_overflow, backend_error };

inline std::string to_string(StopReason r) {
    switch (r) {
        case StopReason::answered: return "answered";
        case StopReason::max_turns: return "max_turns";
        case StopReason::context_overflow: return "context_overflow";
        default: return "backend_error";
    }
}
inline StopReason stop_reason_from_string(std::string_view s) {
    if (s == "answered") return StopReason::answered;
    if (s == "max_turns") return StopReason::max_turns;
    if (s == "context_overflow") return StopReason::context_overflow;
    if (s == "backend_error") return StopReason::backend_error;
    throw SpecError("unknown stop reason: " + std::string(s));
}

struct RewardBreakdown {
    int r_corr = 0;
    int r_format = 0;
    int r_tool = 0;
    RewardWeights weights;
    double total = 0.0;
};

struct TrajectoryStats {
    std::int64_t n_turns = 0;
    std::int64_t n_tool_calls = 0;  // dispatched calls (a tool_result exists)
    std::map<std::string, std::int64_t> per_tool;
    std::int64_t max_prompt_tokens_seen = 0;
};

struct Trajectory {
    Question question;
    std::string video_id;
    std::vector<StepRecord> steps;
    std::optional<std::string> final_answer;
    StopReason stop_reason = StopReason::backend_error;
    std::optional<RewardBreakdown> reward;
    TrajectoryStats stats;

    bool answered() const { return stop_reason == StopReason::answered; }
};

/// Stats are always derivable from the steps; serialization stores them for
/// consumers, and loading re-derives to enforce the consistency invariant.
inline TrajectoryStats recompute_stats(const std::vector<StepRecord>& steps,
                                       std::int64_t max_prompt_tokens_seen = 0) {
    TrajectoryStats s;
    s.n_turns = static_cast<std::int64_t>(steps.size());
    s.max_prompt_tokens_seen = max_prompt_tokens_seen;
    for (const auto& step : steps) {
        if (step.tool_result) {
            ++s.n_tool_calls;
            ++s.per_tool[step.tool_call->name];
        }
    }
    return s;
}

inline void validate_trajectory(const Trajectory& t) {
    if ((t.stop_reason == StopReason::answered) != t.final_answer.has_value())
        throw SpecError("trajectory: answered iff final_answer present");
    for (const auto& step : t.steps) step.validate();
    auto recount = recompute_stats(t.steps, t.stats.max_prompt_tokens_seen);
    if (recount.n_turns != t.stats.n_turns || recount.n_tool_calls != t.stats.n_tool_calls ||
        recount.per_tool != t.stats.per_tool)
        throw SpecError("trajectory: stats inconsistent with steps");
}

inline ojson to_json(const RewardBreakdown& r) {
    ojson j;
    j["r_corr"] = r.r_corr;
    j["r_format"] = r.r_format;
    j["r_tool"] = r.r_tool;
    j["weights"] = {r.weights.correctness, r.weights.format, r.weights.tool};
    j["total"] = r.total;
    return j;
}
inline RewardBreakdown reward_from_json(const ojson& j) {
    RewardBreakdown r;
    r.r_corr = j.at("r_corr").get<int>();
    r.r_format = j.at("r_format").get<int>();
    r.r_tool = j.at("r_tool").get<int>();
    r.weights.correctness = j.at("weights").at(0).get<double>();
    r.weights.format = j.at("weights").at(1).get<double>();
    r.weights.tool = j.at("weights").at(2).get<double>();
    r.total = j.at("total").get<double>();
    return r;
}

inline ojson to_json(const Trajectory& t) {
    ojson j;
    j["version"] = kTrajectoryVersion;
    j["video_id"] = t.video_id;
    j["question"] = to_json(t.question);
    ojson steps = ojson::array();
    for (const auto& s : t.steps) steps.push_back(to_json(s));
    j["steps"] = steps;
    if (t.final_answer) j["final_answer"] = *t.final_answer;
    j["stop_reason"] = to_string(t.stop_reason);
    if (t.reward) j["reward"] = to_json(*t.reward);
    ojson per_tool = ojson::object();
    for (const auto& [name, count] : t.stats.per_tool) per_tool[name] = count;
    j["stats"] = {{"n_turns", t.stats.n_turns},
                  {"n_tool_calls", t.stats.n_tool_calls},
                  {"per_tool", per_tool},
                  {"max_prompt_tokens_seen", t.stats.max_prompt_tokens_seen}};
    return j;
}

inline Trajectory trajectory_from_json(const ojson& j) {
    if (j.at("version").get<std::string>() != kTrajectoryVersion)
        throw SpecError("trajectory: unsupported version");
    Trajectory t;
    t.video_id = j.at("video_id").get<std::string>();
    t.question = question_from_json(j.at("question"));
    for (const auto& s : j.at("steps")) t.steps.push_back(step_from_json(s));
    if (j.contains("final_answer")) t.final_answer = j.at("final_answer").get<std::string>();
    t.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    if (j.contains("reward")) t.reward = reward_from_json(j.at("reward"));
    const auto& st = j.at("stats");
    t.stats.n_turns = st.at("n_turns").get<std::int64_t>();
    t.stats.n_tool_calls = st.at("n_tool_calls").get<std::int64_t>();
    for (auto it = st.at("per_tool").begin(); it != st.at("per_tool").end(); ++it)
        t.stats.per_tool[it.key()] = it.value().get<std::int64_t>();
    t.stats.max_prompt_tokens_seen = st.at("max_prompt_tokens_seen").get<std::int64_t>();
    validate_trajectory(t);
    return t;
}

/// One trajectory per line, stable key order.
inline std::string serialize_trajectory(const Trajectory& t) { return to_json(t).dump(); }

inline std::vector<Trajectory> trajectories_from_jsonl(const std::string& text) {
    std::vector<Trajectory> out;
    for (const auto& line : split(text, '\n')) {
        if (trim(line).empty()) continue;
        out.push_back(trajectory_from_json(ojson::parse(line)));
    }
    return out;
}

}  // namespace weaver
