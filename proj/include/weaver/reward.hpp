// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cmath>
#include <string>
#include <vector>

#include "weaver/protocol.hpp"
#include "weaver/trajectory.hpp"

namespace weaver {

inline constexpr std::string_view kRlExportVersion = "weaver-rl/1";

inline double total_reward(int r_corr, int r_format, int r_tool, const RewardWeights& w) {
    return w.correctness * r_corr + w.format * r_format + w.tool * r_tool;
}

inline RewardBreakdown make_breakdown(int r_corr, int r_format, int r_tool,
                                      const RewardWeights& w) {
    return RewardBreakdown{r_corr, r_format, r_tool, w,
                           total_reward(r_corr, r_format, r_tool, w)};
}

/// Verifiable reward over a trajectory. All components are re-derived from
/// the step texts, so the same function scores engine rollouts and
/// deserialized files identically:
///   r_format = some step contains a well-formed answer block
///   r_corr   = the last answer block normalizes to the gold answer
///   r_tool   = some step contains a well-formed tool_call block, and r_corr
/// Correctness requires a parsed answer block, so r_corr <= r_format holds
/// structurally.
inline RewardBreakdown compute_reward(const Trajectory& traj, const Question& question,
                                      const RewardWeights& weights = {}) {
    bool format = false;
    bool tool_called = false;
    std::string last_answer;
    bool has_answer = false;
    for (const auto& step : traj.steps) {
        auto parsed = parse_response(step.response_text);
        format |= parsed.format_ok;
        tool_called |= parsed.tool_call.has_value();
        if (parsed.answer_span) {
            last_answer = extract_answer(*parsed.answer_span, question);
            has_answer = true;
        }
    }
    const int r_format = format ? 1 : 0;
    const int r_corr = (has_answer && !last_answer.empty() && last_answer == question.gold) ? 1 : 0;
    const int r_tool = (tool_called && r_corr == 1) ? 1 : 0;
    assert(r_corr <= r_format);
    return make_breakdown(r_corr, r_format, r_tool, weights);
}

// ---------------------------------------------------------------------------
// Group advantages
// ---------------------------------------------------------------------------

/// a_i = (r_i - mean) / (population_std + eps). An all-equal group yields
/// exact zeros through the same formula.
inline std::vector<double> group_advantages(const std::vector<double>& rewards,
                                            double eps = 1e-6) {
    if (rewards.size() < 2) throw SpecError("group_advantages: need at least 2 rewards");
    const auto n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= n;
    const double denom = std::sqrt(var) + eps;
    std::vector<double> out;
    out.reserve(rewards.size());
    for (double r : rewards) out.push_back((r - mean) / denom);
    return out;
}

struct RolloutGroup {
    std::vector<Trajectory> trajectories;
    std::vector<double> rewards;
    std::vector<double> advantages;

    bool rewarded() const {
        return !trajectories.empty() && rewards.size() == trajectories.size() &&
               advantages.size() == trajectories.size();
    }
};

/// Score every member and attach normalized advantages.
inline void reward_group(RolloutGroup& group, const Question& question,
                         const RewardWeights& weights = {}, double eps = 1e-6) {
    group.rewards.clear();
    for (auto& traj : group.trajectories) {
        traj.reward = compute_reward(traj, question, weights);
        group.rewards.push_back(traj.reward->total);
    }
    group.advantages = group_advantages(group.rewards, eps);
}

// ---------------------------------------------------------------------------
// RL export
// ---------------------------------------------------------------------------

/// Training-ready JSONL: one record per group member with its reward
/// breakdown, advantage and the config snapshot (kl_loss_coef included).
/// Returns the record count. Deterministic bytes for identical inputs.
inline std::int64_t export_rl_batch(const std::vector<RolloutGroup>& groups, std::string& out,
                                    const RolloutConfig& config) {
    out.clear();
    const ojson snapshot = config.snapshot();
    std::int64_t count = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& group = groups[g];
        if (!group.rewarded()) throw SpecError("export_rl_batch: group " + std::to_string(g) +
                                               " is not rewarded");
        for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
            const auto& traj = group.trajectories[i];
            ojson j;
            j["version"] = kRlExportVersion;
            j["trajectory_ref"] = {{"group", g}, {"index", i}, {"video_id", traj.video_id}};
            j["question"] = to_json(traj.question);
            if (traj.final_answer) j["final_answer"] = *traj.final_answer;
            j["stop_reason"] = to_string(traj.stop_reason);
            j["reward"] = to_json(*traj.reward);
            j["advantage"] = group.advantages[i];
            j["config"] = snapshot;
            out += j.dump() + "\n";
            ++count;
        }
    }
    return count;
}

}  // namespace weaver
