// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "weaver/datapipe.hpp"
#include "weaver/rollout.hpp"

namespace weaver {

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

struct EvalReport {
    std::int64_t n_tasks = 0;
    double accuracy = 0.0;
    double mean_tool_calls = 0.0;
    std::map<std::string, double> per_tool_fraction;
    std::map<std::string, std::int64_t> stop_reasons;
    std::map<std::string, double> per_template_accuracy;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// A report is a pure fold over trajectories; serialized reports can always
/// be recomputed from the emitted trajectory file.
inline EvalReport fold_report(const std::vector<Trajectory>& trajectories) {
    EvalReport r;
    r.n_tasks = static_cast<std::int64_t>(trajectories.size());
    if (trajectories.empty()) return r;

    std::int64_t correct = 0, total_calls = 0;
    std::map<std::string, std::int64_t> calls_by_tool;
    std::map<std::string, std::pair<std::int64_t, std::int64_t>> by_template;  // correct, total
    for (const auto& t : trajectories) {
        const bool is_correct = t.final_answer && *t.final_answer == t.question.gold;
        correct += is_correct ? 1 : 0;
        total_calls += t.stats.n_tool_calls;
        for (const auto& [name, count] : t.stats.per_tool) calls_by_tool[name] += count;
        ++r.stop_reasons[to_string(t.stop_reason)];
        auto& bucket = by_template[t.question.template_name];
        bucket.first += is_correct ? 1 : 0;
        ++bucket.second;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_tasks);
    r.mean_tool_calls = static_cast<double>(total_calls) / static_cast<double>(r.n_tasks);
    for (const auto& [name, count] : calls_by_tool)
        r.per_tool_fraction[name] = static_cast<double>(count) / static_cast<double>(total_calls);
    for (const auto& [tmpl, bucket] : by_template)
        r.per_template_accuracy[tmpl] =
            static_cast<double>(bucket.first) / static_cast<double>(bucket.second);
    return r;
}

inline ojson to_json(const EvalReport& r) {
    ojson j;
    j["n_tasks"] = r.n_tasks;
    j["accuracy"] = r.accuracy;
    j["mean_tool_calls"] = r.mean_tool_calls;
    ojson frac = ojson::object(), stops = ojson::object(), per_tmpl = ojson::object();
    for (const auto& [k, v] : r.per_tool_fraction) frac[k] = v;
    for (const auto& [k, v] : r.stop_reasons) stops[k] = v;
    for (const auto& [k, v] : r.per_template_accuracy) per_tmpl[k] = v;
    j["per_tool_fraction"] = frac;
    j["stop_reasons"] = stops;
    j["per_template_accuracy"] = per_tmpl;
    return j;
}

inline std::string report_to_csv(const EvalReport& r) {
    std::string out = "metric,key,value\n";
    out += "n_tasks,," + std::to_string(r.n_tasks) + "\n";
    out += "accuracy,," + fmt2(r.accuracy) + "\n";
    out += "mean_tool_calls,," + fmt2(r.mean_tool_calls) + "\n";
    for (const auto& [k, v] : r.per_tool_fraction) out += "per_tool_fraction," + k + "," + fmt2(v) + "\n";
    for (const auto& [k, v] : r.stop_reasons) out += "stop_reason," + k + "," + std::to_string(v) + "\n";
    for (const auto& [k, v] : r.per_template_accuracy)
        out += "per_template_accuracy," + k + "," + fmt2(v) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark runs
// ---------------------------------------------------------------------------

struct BenchmarkOutcome {
    EvalReport report;
    std::vector<BatchItem> items;
    std::string trajectory_jsonl;  // one line per task, input order
};

/// One episode per task; report aggregated from exactly the trajectories that
/// get written out. Failed items (no trajectory at all) are counted under the
/// "error" stop bucket and excluded from accuracy denominators only when the
/// whole set failed.
inline BenchmarkOutcome run_benchmark(const std::vector<TaskRef>& tasks,
                                      const PolicyFactory& make_policy, ToolBackend& tools,
                                      const RolloutConfig& config, int parallelism = 1) {
    if (tasks.empty()) throw SpecError("run_benchmark: empty task set");
    BenchmarkOutcome out;
    out.items = run_batch(tasks, make_policy, tools, config, parallelism, /*grouped=*/false);
    out.trajectory_jsonl = serialize_batch(out.items);

    std::vector<Trajectory> trajectories;
    std::int64_t errors = 0;
    for (const auto& item : out.items) {
        if (item.trajectory)
            trajectories.push_back(*item.trajectory);
        else
            ++errors;
    }
    out.report = fold_report(trajectories);
    if (errors > 0) {
        out.report.stop_reasons["error"] += errors;
        out.report.n_tasks += errors;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tool ablations
// ---------------------------------------------------------------------------

/// Builds the policy for a task given the tool subset in force.
using PolicyFamily = std::function<std::shared_ptr<PolicyBackend>(
    const Question& question, const std::optional<std::set<std::string>>& enabled)>;

struct AblationRow {
    std::string label;
    std::optional<std::set<std::string>> enabled;  // nullopt = full toolkit
    EvalReport report;
};

/// Re-run the benchmark once per tool subset. Disabled tools stay in the
/// prompt and fail soft with invalid_args, isolating the ablation to
/// capability rather than prompt text.
inline std::vector<AblationRow> run_ablation(
    const std::vector<TaskRef>& tasks, const PolicyFamily& family, OracleToolBackend& tools,
    const std::vector<std::pair<std::string, std::optional<std::set<std::string>>>>& subsets,
    const RolloutConfig& config, int parallelism = 1) {
    std::vector<AblationRow> rows;
    const auto original = tools.config().enabled;
    for (const auto& [label, enabled] : subsets) {
        tools.set_enabled(enabled);
        auto factory = [&family, &enabled](const Question& q, std::size_t) {
            return family(q, enabled);
        };
        auto outcome = run_benchmark(tasks, factory, tools, config, parallelism);
        rows.push_back({label, enabled, std::move(outcome.report)});
    }
    tools.set_enabled(original);
    return rows;
}

inline std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
    std::set<std::string> templates;
    for (const auto& row : rows)
        for (const auto& [tmpl, acc] : row.report.per_template_accuracy) templates.insert(tmpl);
    std::string out = "subset,n_tasks,accuracy,mean_tool_calls";
    for (const auto& t : templates) out += ",acc_" + t;
    out += "\n";
    for (const auto& row : rows) {
        out += row.label + "," + std::to_string(row.report.n_tasks) + "," +
               fmt2(row.report.accuracy) + "," + fmt2(row.report.mean_tool_calls);
        for (const auto& t : templates) {
            auto it = row.report.per_template_accuracy.find(t);
            out += ",";
            out += (it == row.report.per_template_accuracy.end()) ? "" : fmt2(it->second);
        }
        out += "\n";
    }
    return out;
}

inline ojson to_json(const std::vector<AblationRow>& rows) {
    ojson j = ojson::array();
    for (const auto& row : rows) {
        ojson r;
        r["subset"] = row.label;
        if (row.enabled) {
            ojson names = ojson::array();
            for (const auto& n : *row.enabled) names.push_back(n);
            r["enabled"] = names;
        } else {
            r["enabled"] = "all";
        }
        r["report"] = to_json(row.report);
        j.push_back(r);
    }
    return j;
}

// ---------------------------------------------------------------------------
// Task sets
// ---------------------------------------------------------------------------

/// n tasks round-robined over worlds and templates with derived seeds.
/// Templates unsatisfiable in a given world are skipped by advancing the
/// attempt counter, so the output is still exactly n tasks when any template
/// is satisfiable somewhere.
inline std::vector<TaskRef> generate_task_set(const std::vector<const SyntheticVideo*>& worlds,
                                              std::size_t n, std::uint64_t seed) {
    if (worlds.empty()) throw SpecError("generate_task_set: no worlds");
    std::vector<TaskRef> tasks;
    std::uint64_t attempt = 0;
    while (tasks.size() < n && attempt < 64 * (n + 4)) {
        const auto& world = *worlds[attempt % worlds.size()];
        const auto tmpl = kAllTemplates[attempt % 4];
        try {
            auto q = make_task(world, tmpl, mix64(seed, attempt));
            tasks.push_back({std::move(q), world.meta});
        } catch (const SpecError&) {
            // unsatisfiable in this world; move on
        }
        ++attempt;
    }
    if (tasks.size() < n) throw SpecError("generate_task_set: could not satisfy templates");
    return tasks;
}

inline std::string serialize_tasks(const std::vector<TaskRef>& tasks) {
    std::string out;
    for (const auto& t : tasks) {
        ojson j;
        j["video_id"] = t.video.video_id;
        j["question"] = to_json(t.question);
        out += j.dump() + "\n";
    }
    return out;
}

inline std::vector<TaskRef> tasks_from_jsonl(const std::string& text, const VideoLookup& videos) {
    std::vector<TaskRef> tasks;
    for (const auto& line : split(text, '\n')) {
        if (trim(line).empty()) continue;
        auto j = ojson::parse(line);
        TaskRef t;
        auto video_id = j.at("video_id").get<std::string>();
        auto meta = videos(video_id);
        if (!meta) throw SpecError("tasks: unknown video \"" + video_id + "\"");
        t.video = *meta;
        t.question = question_from_json(j.at("question"));
        tasks.push_back(std::move(t));
    }
    return tasks;
}

}  // namespace weaver
