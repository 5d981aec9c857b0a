// llm_client.cpp
// Chat-completions client for prompt segmentation, with rule-based fallback.

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <iostream>
#include <string>

// Eigen must come before httplib: <resolv.h> defines a _res macro.
#include "cog/cogengine.hpp"
#include "cog/resources_data.hpp"

#include <httplib.h>
#include <json.hpp>

namespace cog {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string env_or(const char* name, std::string fallback = {}) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

std::string phrase(int token) {
    const std::string name(token_name(token));
    const std::string a = std::string_view("aeiou").find(name.front()) != std::string_view::npos ? "an " : "a ";
    switch (token_granularity(token)) {
        case Granularity::Large: return a + name + " ring";
        case Granularity::Medium: return a + name + " group";
        case Granularity::Small: break;
    }
    return a + name + " atom";
}

std::string join_phrases(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += i + 1 == parts.size() ? " and " : ", ";
        out += parts[i];
    }
    return out;
}

std::string describe(std::span<const int> tokens) {
    std::vector<std::string> parts;
    for (int t : tokens) parts.push_back(phrase(t));
    if (token_granularity(tokens.front()) == Granularity::Large) {
        std::string s = "The molecule is made of " + parts.front();
        if (parts.size() > 1) s += " with " + join_phrases({parts.begin() + 1, parts.end()});
        return s + ".";
    }
    return "The molecule contains " + join_phrases(parts) + ".";
}

std::vector<std::string> cumulative_sentences(const std::vector<int>& tokens) {
    std::vector<std::string> out;
    for (std::size_t k = 1; k <= tokens.size(); ++k) {
        out.push_back(describe(std::span<const int>(tokens.data(), k)));
    }
    return out;
}

struct Endpoint {
    std::string scheme_host_port;
    std::string path_prefix;
};

Endpoint split_url(const std::string& url) {
    std::size_t scheme = 0;
    if (url.rfind("http://", 0) == 0) {
        scheme = 7;
    } else if (url.rfind("https://", 0) == 0) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        throw EndpointUnreachable("https endpoints need a build with OpenSSL; use an http:// endpoint or a local proxy");
#endif
        scheme = 8;
    } else {
        throw EndpointUnreachable("unsupported endpoint URL '" + url + "'");
    }
    const auto slash = url.find('/', scheme);
    Endpoint ep;
    ep.scheme_host_port = url.substr(0, slash);
    ep.path_prefix = slash == std::string::npos ? "" : url.substr(slash);
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
    return ep;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

std::string chat(std::string_view text, const LlmConfig& cfg) {
    const Endpoint ep = split_url(cfg.base_url);
    httplib::Client cli(ep.scheme_host_port);
    const auto secs = static_cast<time_t>(cfg.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);

    const std::string quoted = "\"" + std::string(text) + "\"";
    nlohmann::json body = {
        {"model", cfg.model},
        {"temperature", 0},
        {"messages",
         nlohmann::json::array(
             {{{"role", "system"},
               {"content", replace_all(std::string(segment_system_prompt(cfg.variant)), "{DESCRIPTION}", quoted)}},
              {{"role", "user"}, {"content", std::string(text)}}})}};
    httplib::Headers headers;
    if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);

    auto res = cli.Post(ep.path_prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw EndpointUnreachable("request to " + cfg.base_url + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw EndpointUnreachable("endpoint " + cfg.base_url + " answered HTTP " + std::to_string(res->status));
    }
    try {
        const auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw MalformedLLMResponse(std::string("unexpected response body: ") + e.what());
    }
}

}  // namespace

LlmConfig LlmConfig::from_env() {
    LlmConfig c;
    c.base_url = env_or("COG_LLM_BASE_URL");
    c.api_key = env_or("COG_LLM_API_KEY");
    c.model = env_or("COG_LLM_MODEL", "gpt-4o");
    if (const auto t = env_or("COG_LLM_TIMEOUT"); !t.empty()) c.timeout_seconds = std::stod(t);
    return c;
}

std::string_view segment_system_prompt(SegmentPromptVariant v) {
    switch (v) {
        case SegmentPromptVariant::Basic: return resources::segment_prompt_basic_txt;
        case SegmentPromptVariant::Detailed: return resources::segment_prompt_detailed_txt;
        case SegmentPromptVariant::Reasoning: break;
    }
    return resources::segment_prompt_reasoning_txt;
}

LlmSegmentation parse_llm_segmentation(std::string_view reply) {
    const std::string low = lower(reply);
    const auto num = low.find("number:");
    const auto seg = low.find("segmentations:");
    if (num == std::string::npos || seg == std::string::npos || seg < num) {
        throw MalformedLLMResponse("reply lacks 'Number:' and 'Segmentations:'");
    }
    LlmSegmentation out;
    const std::string count_text = trim(reply.substr(num + 7, seg - num - 7));
    try {
        std::size_t used = 0;
        out.count = std::stoi(count_text, &used);
        if (used == 0) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw MalformedLLMResponse("cannot read a count from '" + count_text + "'");
    }
    if (out.count < 1) throw MalformedLLMResponse("component count must be positive");
    std::string part;
    for (char c : reply.substr(seg + 14)) {
        if (c == '\t' || c == '\n' || c == '\r') {
            if (auto t = trim(part); !t.empty()) out.cumulative.push_back(std::move(t));
            part.clear();
        } else {
            part.push_back(c);
        }
    }
    if (auto t = trim(part); !t.empty()) out.cumulative.push_back(std::move(t));
    if (static_cast<int>(out.cumulative.size()) != out.count) {
        throw MalformedLLMResponse("expected " + std::to_string(out.count) + " segmentations, got " +
                                   std::to_string(out.cumulative.size()));
    }
    return out;
}

LlmSegmentation parse_llm_four_outputs(std::string_view reply) {
    const char* labels[] = {"a only", "ab", "c only", "bc"};
    std::string found[4];
    std::size_t start = 0;
    while (start <= reply.size()) {
        auto end = reply.find('\n', start);
        if (end == std::string_view::npos) end = reply.size();
        std::string line = trim(reply.substr(start, end - start));
        start = end + 1;
        // drop list bullets and markdown emphasis
        const auto body = line.find_first_not_of("-*#0123456789. ");
        if (body == std::string::npos) continue;
        line = line.substr(body);
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        std::string label = lower(line.substr(0, colon));
        label.erase(std::remove(label.begin(), label.end(), '*'), label.end());
        label = trim(label);
        for (int k = 0; k < 4; ++k) {
            if (label == labels[k] && found[k].empty()) {
                std::string text = trim(line.substr(colon + 1));
                text.erase(std::remove(text.begin(), text.end(), '*'), text.end());
                found[k] = trim(text);
            }
        }
    }
    for (int k = 0; k < 4; ++k) {
        if (found[k].empty()) throw MalformedLLMResponse(std::string("reply lacks the '") + labels[k] + "' output");
    }
    LlmSegmentation out;
    out.count = 3;
    out.cumulative = {found[0], found[1]};
    out.reverse = {found[2], found[3]};
    return out;
}

LlmSegmentation rule_based_cumulative(std::string_view text) {
    const auto segs = segment_prompt(text);
    std::vector<int> tokens;
    for (const auto& s : segs) tokens.insert(tokens.end(), s.components.begin(), s.components.end());
    LlmSegmentation out;
    out.count = static_cast<int>(tokens.size());
    out.cumulative = cumulative_sentences(tokens);
    std::reverse(tokens.begin(), tokens.end());
    out.reverse = cumulative_sentences(tokens);
    return out;
}

LlmSegmentation llm_segment(std::string_view text, const LlmConfig& config) {
    std::string why;
    if (!config.configured()) {
        why = "no LLM endpoint configured";
    } else {
        try {
            const std::string reply = chat(text, config);
            return config.variant == SegmentPromptVariant::Reasoning ? parse_llm_segmentation(reply)
                                                                     : parse_llm_four_outputs(reply);
        } catch (const EndpointUnreachable& e) {
            if (!config.fallback) throw;
            why = e.what();
        } catch (const MalformedLLMResponse& e) {
            if (!config.fallback) throw;
            why = e.what();
        }
    }
    if (!config.fallback) throw EndpointUnreachable(why);
    std::cerr << "warning: " << why << "; using rule-based segmentation\n";
    LlmSegmentation out = rule_based_cumulative(text);
    out.used_fallback = true;
    out.warning = why;
    return out;
}

}  // namespace cog
