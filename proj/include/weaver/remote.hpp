// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "httplib.h"
#include "weaver/policy.hpp"
#include "weaver/toolkit.hpp"

namespace weaver {

struct RemoteConfig {
    int timeout_s = 30;
    int retries = 2;
};

namespace detail {

inline std::optional<std::string> post_with_retries(httplib::Client& client,
                                                    const std::string& path,
                                                    const std::string& body,
                                                    const RemoteConfig& cfg) {
    for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
        auto res = client.Post(path, body, "application/json");
        if (res && res->status == 200) return res->body;
    }
    return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Remote tool backend
// ---------------------------------------------------------------------------

/// One POST per call: {"tool", "arguments", "video_id"} -> serialized
/// ToolResult {"tool_name", "status", "spans", "clip"?, "note"}. Transport
/// failure after retries degrades to an invalid_args result so the episode
/// survives and the policy sees the failure.
class RemoteToolBackend : public ToolBackend {
public:
    explicit RemoteToolBackend(const std::string& base_url, RemoteConfig cfg = {},
                               std::string path = "/tool", std::int64_t max_tool_frames = 32)
        : client_(base_url), cfg_(cfg), path_(std::move(path)), max_tool_frames_(max_tool_frames) {
        client_.set_connection_timeout(cfg_.timeout_s, 0);
        client_.set_read_timeout(cfg_.timeout_s, 0);
    }

    ToolResult call(const ToolCall& call, const std::string& video_id) override {
        ojson req;
        req["tool"] = call.name;
        req["arguments"] = call.arguments;
        req["video_id"] = video_id;
        auto body = detail::post_with_retries(client_, path_, req.dump(), cfg_);
        if (!body) {
            ToolResult r;
            r.tool_name = call.name;
            r.status = ToolStatus::invalid_args;
            r.note = "tool backend transport failure";
            return r;
        }
        ojson j = ojson::parse(*body, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded()) {
            ToolResult r;
            r.tool_name = call.name;
            r.status = ToolStatus::invalid_args;
            r.note = "tool backend returned malformed response";
            return r;
        }
        auto result = tool_result_from_json(j);
        detail::cap_clip(result, max_tool_frames_);
        return result;
    }

private:
    httplib::Client client_;
    RemoteConfig cfg_;
    std::string path_;
    std::int64_t max_tool_frames_;
};

// ---------------------------------------------------------------------------
// Remote policy backend
// ---------------------------------------------------------------------------

/// Chat-completion style exchange. The assembled context maps to a messages
/// list: the shipped system prompt is peeled off the question segment into a
/// system message, text and frame references interleave as message content
/// items, and tool results go back as user messages. The response is a single
/// text completion.
class RemotePolicyBackend : public PolicyBackend {
public:
    RemotePolicyBackend(const std::string& base_url, std::string system_prompt,
                        RemoteConfig cfg = {}, std::string path = "/v1/chat/completions")
        : client_(base_url),
          system_prompt_(std::move(system_prompt)),
          cfg_(cfg),
          path_(std::move(path)) {
        client_.set_connection_timeout(cfg_.timeout_s, 0);
        client_.set_read_timeout(cfg_.timeout_s, 0);
    }

    std::string next_response(const PolicyRequest& request) override {
        ojson body;
        body["messages"] = build_messages(request.context);
        body["temperature"] = request.sampling.temperature;
        body["top_p"] = request.sampling.top_p;
        body["max_tokens"] = request.sampling.max_new_tokens;
        body["seed"] = request.sampling.seed;

        auto response = detail::post_with_retries(client_, path_, body.dump(), cfg_);
        if (!response) throw PolicyError("policy backend transport failure after retries");
        ojson j = ojson::parse(*response, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded()) throw PolicyError("policy backend returned malformed response");
        if (j.contains("choices") && !j["choices"].empty())
            return j["choices"][0].at("message").at("content").get<std::string>();
        if (j.contains("content") && j["content"].is_string())
            return j["content"].get<std::string>();
        throw PolicyError("policy backend response carries no completion text");
    }

    ojson build_messages(const ContextView& ctx) const {
        ojson messages = ojson::array();
        auto push_message = [&](const std::string& role) -> ojson& {
            if (messages.empty() || messages.back().at("role") != role)
                messages.push_back({{"role", role}, {"content", ojson::array()}});
            return messages.back()["content"];
        };
        auto push_text = [&](const std::string& role, const std::string& text) {
            push_message(role).push_back({{"type", "text"}, {"text", text}});
        };
        auto push_clip = [&](const std::string& role, const Clip& clip) {
            push_message(role).push_back({{"type", "video_frames"},
                                          {"video_id", clip.video_id},
                                          {"span", to_json(Span{clip.start_s, clip.end_s})},
                                          {"frame_times", clip.frame_times}});
        };

        for (std::size_t i = 0; i < ctx.size(); ++i) {
            const Segment& seg = ctx.segment(i);
            if (const auto* t = std::get_if<TextSegment>(&seg)) {
                if (t->role == SegmentRole::question) {
                    std::string text = t->text;
                    if (!system_prompt_.empty() && text.rfind(system_prompt_, 0) == 0) {
                        messages.push_back({{"role", "system"},
                                            {"content", ojson::array({{{"type", "text"},
                                                                       {"text", system_prompt_}}})}});
                        text = std::string(trim(text.substr(system_prompt_.size())));
                    }
                    push_text("user", text);
                } else if (t->role == SegmentRole::assistant) {
                    push_text("assistant", t->text);
                } else {
                    push_text("user", t->text);
                }
            } else {
                const auto& v = std::get<VisualSegment>(seg);
                if (!v.envelope.empty()) push_text("user", v.envelope);
                push_clip("user", v.clip);
            }
        }
        return messages;
    }

private:
    httplib::Client client_;
    std::string system_prompt_;
    RemoteConfig cfg_;
    std::string path_;
};

}  // namespace weaver
