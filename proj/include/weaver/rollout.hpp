// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "weaver/policy.hpp"
#include "weaver/reward.hpp"
#include "weaver/toolkit.hpp"

namespace weaver {

/// One unit of rollout work: a question bound to a video.
struct TaskRef {
    Question question;
    VideoMeta video;
};

/// The multi-turn loop: assemble context, generate, parse, dispatch at most
/// one tool per step, append, stop on answer or a limit. Every failure mode
/// ends with a returned trajectory carrying its stop reason; this function
/// does not throw on policy or protocol failures.
inline Trajectory run_episode(const Question& question, const VideoMeta& video,
                              PolicyBackend& policy, ToolBackend& tools,
                              const RolloutConfig& config,
                              std::optional<std::uint64_t> seed_override = std::nullopt) {
    config.validate();
    const std::uint64_t episode_seed = seed_override.value_or(config.seed);
    const CostModel cost = config.cost_model();

    Trajectory traj;
    traj.question = question;
    traj.video_id = video.video_id;
    traj.stop_reason = StopReason::max_turns;

    std::int64_t max_prompt_seen = 0;
    HistoryState state;
    try {
        state = init_state(question, video, config.n_init_frames, cost, config.system_prompt);
    } catch (const SpecError& e) {
        traj.stop_reason = StopReason::backend_error;
        StepRecord note;
        note.response_text = "";
        note.protocol_flags = {std::string("episode setup failed: ") + e.what()};
        traj.steps.push_back(std::move(note));
        traj.stats = recompute_stats(traj.steps, 0);
        return traj;
    }

    for (std::int64_t turn = 0; turn < config.max_turns; ++turn) {
        ContextView ctx;
        try {
            ctx = assemble_context(state, config.max_prompt_tokens);
        } catch (const ContextOverflowError&) {
            traj.stop_reason = StopReason::context_overflow;
            break;
        }
        max_prompt_seen = std::max(max_prompt_seen, ctx.total_tokens);

        std::string text;
        try {
            PolicyRequest request{ctx, config.sampling(mix64(episode_seed, static_cast<std::uint64_t>(turn)))};
            text = policy.next_response(request);
        } catch (const std::exception& e) {
            traj.stop_reason = StopReason::backend_error;
            StepRecord note;
            note.protocol_flags = {std::string("policy backend error: ") + e.what()};
            traj.steps.push_back(std::move(note));
            break;
        }

        ParsedResponse parsed = parse_response(text);
        StepRecord step;
        step.response_text = text;
        step.protocol_flags = parsed.diagnostics;

        if (parsed.format_ok) {
            step.answer = extract_answer(*parsed.answer_span, question);
            step.tool_call = parsed.tool_call;  // recorded but superseded, never dispatched
            traj.final_answer = step.answer;
            traj.steps.push_back(std::move(step));
            traj.stop_reason = StopReason::answered;
            break;
        }
        if (parsed.tool_call) {
            step.tool_call = parsed.tool_call;
            step.tool_result = tools.call(*parsed.tool_call, video.video_id);
            const std::string envelope = render_tool_result(*step.tool_result);
            state = append_step(state, step, cost, envelope);
        } else {
            state = append_step(state, step, cost);
        }
        traj.steps.push_back(std::move(step));
    }

    traj.stats = recompute_stats(traj.steps, max_prompt_seen);
    return traj;
}

/// G independent episodes of the same task with derived seeds
/// seed_i = mix64(seed, i); rewards and normalized advantages attached.
inline RolloutGroup run_group(const Question& question, const VideoMeta& video,
                              PolicyBackend& policy, ToolBackend& tools,
                              const RolloutConfig& config) {
    config.validate();
    if (config.group_size < 2) throw SpecError("run_group: group_size must be >= 2");
    RolloutGroup group;
    group.trajectories.reserve(static_cast<std::size_t>(config.group_size));
    for (std::int64_t i = 0; i < config.group_size; ++i)
        group.trajectories.push_back(run_episode(
            question, video, policy, tools, config,
            mix64(config.seed, static_cast<std::uint64_t>(i))));
    reward_group(group, question, config.weights, config.adv_eps);
    return group;
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

/// Builds the policy for one task. Oracle policies are per-task; a shared
/// backend can ignore the arguments.
using PolicyFactory =
    std::function<std::shared_ptr<PolicyBackend>(const Question& question, std::size_t index)>;

struct BatchItem {
    std::optional<Trajectory> trajectory;
    std::optional<RolloutGroup> group;
    std::optional<std::string> error;

    bool ok() const { return !error.has_value(); }
};

/// Run every task, one episode (or one group) each. Results are ordered as
/// inputs; per-task seeds are mix64(config.seed, index), so output bytes do
/// not depend on the parallelism level. Per-task failures are isolated into
/// error records.
inline std::vector<BatchItem> run_batch(const std::vector<TaskRef>& tasks,
                                        const PolicyFactory& make_policy, ToolBackend& tools,
                                        const RolloutConfig& config, int parallelism = 1,
                                        bool grouped = false) {
    config.validate();
    if (parallelism < 1) throw SpecError("run_batch: parallelism must be >= 1");
    std::vector<BatchItem> results(tasks.size());

    auto run_one = [&](std::size_t i) {
        BatchItem item;
        try {
            RolloutConfig task_config = config;
            task_config.seed = mix64(config.seed, static_cast<std::uint64_t>(i));
            auto policy = make_policy(tasks[i].question, i);
            if (!policy) throw SpecError("policy factory returned null");
            if (grouped)
                item.group = run_group(tasks[i].question, tasks[i].video, *policy, tools,
                                       task_config);
            else
                item.trajectory = run_episode(tasks[i].question, tasks[i].video, *policy, tools,
                                              task_config, task_config.seed);
        } catch (const std::exception& e) {
            item = BatchItem{};
            item.error = e.what();
        }
        results[i] = std::move(item);
    };

    if (parallelism == 1 || tasks.size() <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_one(i);
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(parallelism), tasks.size());
    for (std::size_t w = 0; w < n_workers; ++w)
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
                run_one(i);
        });
    for (auto& t : workers) t.join();
    return results;
}

/// Trajectory JSONL for a batch: one line per item, input order.
inline std::string serialize_batch(const std::vector<BatchItem>& items) {
    std::string out;
    for (const auto& item : items) {
        if (item.trajectory) {
            out += serialize_trajectory(*item.trajectory) + "\n";
        } else if (item.group) {
            for (const auto& traj : item.group->trajectories)
                out += serialize_trajectory(traj) + "\n";
        } else {
            ojson j;
            j["version"] = kTrajectoryVersion;
            j["error"] = item.error.value_or("unknown error");
            out += j.dump() + "\n";
        }
    }
    return out;
}

}  // namespace weaver
