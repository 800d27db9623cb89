// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "weaver/toolkit.hpp"

namespace weaver {

// ---------------------------------------------------------------------------
// Shipped prompts
// ---------------------------------------------------------------------------

/// Inference system prompt: tool documentation plus the task objective and
/// the exact tag protocol. Replaceable via the system_prompt_file config key.
inline const std::string& default_system_prompt() {
    static const std::string prompt = [] {
        std::string p;
        p += "You are a video reasoning assistant. You are given a question about a video "
             "and an initial set of uniformly sampled frames.\n";
        p += "You may call perception tools to gather additional visual evidence before "
             "answering. Available tools:\n";
        p += render_tool_docs();
        p += "To call a tool, emit exactly one block of the form "
             "<tool_call>{\"name\": \"<tool>\", \"arguments\": {...}}</tool_call> "
             "and wait for the result. Omitted start_s/end_s default to the whole video.\n";
        p += "Think step by step. When you know the answer, emit it as "
             "<answer>...</answer>. For multiple-choice questions answer with the option "
             "letter only.";
        return p;
    }();
    return prompt;
}

/// Dataset-construction prompt handed to the rewriter backend together with a
/// textual chain of thought. Replaceable via construction_prompt_file.
inline const std::string& default_construction_prompt() {
    static const std::string prompt = [] {
        std::string p;
        p += "You will rewrite a textual reasoning trace about a video into a tool-augmented "
             "trajectory.\n";
        p += "Available tools:\n";
        p += render_tool_docs();
        p += "Rules: keep the reasoning faithful to the original trace; insert "
             "<tool_call>{\"name\": ..., \"arguments\": {...}}</tool_call> blocks wherever the "
             "trace relies on visual evidence the tools can fetch; use at least one tool; do "
             "not state the final answer before the last step; end with "
             "<answer>...</answer>.";
        return p;
    }();
    return prompt;
}

// ---------------------------------------------------------------------------
// Reward weights
// ---------------------------------------------------------------------------

struct RewardWeights {
    double correctness = 0.7;
    double format = 0.2;
    double tool = 0.1;
};

// ---------------------------------------------------------------------------
// Rollout configuration
// ---------------------------------------------------------------------------

struct SamplingParams {
    double temperature = 1.0;
    double top_p = 1.0;
    std::int64_t max_new_tokens = 20480;
    std::uint64_t seed = 0;
};

struct RolloutConfig {
    std::int64_t n_init_frames = 128;
    std::int64_t max_turns = 10;
    std::int64_t max_prompt_tokens = 8192;
    std::int64_t max_response_tokens = 20480;
    std::int64_t group_size = 8;
    std::int64_t tokens_per_frame = 128;
    std::int64_t max_tool_frames = 32;
    double merge_gap_s = 0.0;
    double temperature = 1.0;
    double top_p = 1.0;
    std::uint64_t seed = 0;
    double adv_eps = 1e-6;
    RewardWeights weights;
    double kl_loss_coef = 1e-3;  // pass-through: echoed into exports, unused by the engine
    std::int64_t stage1_frames = 128;
    std::int64_t sft_frames = 64;
    std::string system_prompt = default_system_prompt();
    std::string construction_prompt = default_construction_prompt();
    std::map<std::string, std::string> extra;  // unrecognized keys, echoed into exports

    void validate() const {
        if (n_init_frames < 1 || max_turns < 1 || max_prompt_tokens < 1 ||
            max_response_tokens < 1 || group_size < 1 || tokens_per_frame < 1 ||
            max_tool_frames < 1 || stage1_frames < 1 || sft_frames < 1)
            throw SpecError("config: all limits must be positive");
        if (merge_gap_s < 0.0) throw SpecError("config: merge_gap_s must be >= 0");
    }

    CostModel cost_model() const { return CostModel{tokens_per_frame}; }
    ToolkitConfig toolkit_config() const { return ToolkitConfig{max_tool_frames, merge_gap_s, {}}; }

    SamplingParams sampling(std::uint64_t episode_seed) const {
        return SamplingParams{temperature, top_p, max_response_tokens, episode_seed};
    }

    /// Echoed into every export record. Appendix-style key names.
    ojson snapshot() const {
        ojson j;
        j["group_size"] = group_size;
        j["max_num_turns"] = max_turns;
        j["max_prompt_length"] = max_prompt_tokens;
        j["max_response_length"] = max_response_tokens;
        j["n_init_frames"] = n_init_frames;
        j["tokens_per_frame"] = tokens_per_frame;
        j["max_tool_frames"] = max_tool_frames;
        j["merge_gap_s"] = merge_gap_s;
        j["lambda1"] = weights.correctness;
        j["lambda2"] = weights.format;
        j["lambda3"] = weights.tool;
        j["adv_eps"] = adv_eps;
        j["kl_loss_coef"] = kl_loss_coef;
        j["seed"] = seed;
        for (const auto& [k, v] : extra) j[k] = v;
        return j;
    }
};

// ---------------------------------------------------------------------------
// Flat key=value config files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SpecError("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// Parse "key=value" lines ('#' starts a comment). Keys use the appendix
/// names where those exist; unknown keys are kept and echoed into exports.
inline RolloutConfig parse_config(const std::string& text, RolloutConfig base = {}) {
    RolloutConfig cfg = std::move(base);
    for (const auto& raw_line : split(text, '\n')) {
        std::string line(raw_line);
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) continue;

        auto as_i = [&] { return static_cast<std::int64_t>(std::stoll(value)); };
        auto as_f = [&] { return std::stod(value); };
        auto as_u = [&] { return static_cast<std::uint64_t>(std::stoull(value)); };
        if (key == "n_init_frames") cfg.n_init_frames = as_i();
        else if (key == "max_num_turns" || key == "max_turns") cfg.max_turns = as_i();
        else if (key == "max_prompt_length") cfg.max_prompt_tokens = as_i();
        else if (key == "max_response_length") cfg.max_response_tokens = as_i();
        else if (key == "group_size") cfg.group_size = as_i();
        else if (key == "tokens_per_frame") cfg.tokens_per_frame = as_i();
        else if (key == "max_tool_frames") cfg.max_tool_frames = as_i();
        else if (key == "merge_gap_s") cfg.merge_gap_s = as_f();
        else if (key == "temperature") cfg.temperature = as_f();
        else if (key == "top_p") cfg.top_p = as_f();
        else if (key == "seed") cfg.seed = as_u();
        else if (key == "adv_eps") cfg.adv_eps = as_f();
        else if (key == "lambda1") cfg.weights.correctness = as_f();
        else if (key == "lambda2") cfg.weights.format = as_f();
        else if (key == "lambda3") cfg.weights.tool = as_f();
        else if (key == "kl_loss_coef") cfg.kl_loss_coef = as_f();
        else if (key == "stage1_frames") cfg.stage1_frames = as_i();
        else if (key == "sft_frames") cfg.sft_frames = as_i();
        else if (key == "system_prompt_file") cfg.system_prompt = detail::read_file(value);
        else if (key == "construction_prompt_file") cfg.construction_prompt = detail::read_file(value);
        else cfg.extra[key] = value;
    }
    cfg.validate();
    return cfg;
}

inline RolloutConfig load_config(const std::string& path, RolloutConfig base = {}) {
    return parse_config(detail::read_file(path), std::move(base));
}

}  // namespace weaver
