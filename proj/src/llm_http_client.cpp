#include "feat3d/datagen.hpp"

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace f3d::datagen {

using json = nlohmann::json;

namespace {

std::mutex g_retry_mutex;

struct ParsedEndpoint {
    std::string base;  // scheme://host[:port]
    std::string path;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    const std::size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos)
        throw ValidationError("LLM_ENDPOINT must be a full URL, got '" + endpoint + "'");
    const std::size_t path_start = endpoint.find('/', scheme + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

std::string role_name(Message::Role role) {
    return role == Message::Role::kUser ? "user" : "assistant";
}

}  // namespace

HttpLlmClient::HttpLlmClient(Options options)
    : options_(std::move(options)), retry_count_(std::make_shared<std::size_t>(0)) {
    if (options_.endpoint.empty())
        throw ValidationError("http llm client: endpoint must not be empty");
    if (options_.api_key.empty())
        throw ValidationError("http llm client: LLM_API_KEY is not set");
    parse_endpoint(options_.endpoint);  // fail fast on malformed URLs
}

std::size_t HttpLlmClient::retries() const {
    std::lock_guard<std::mutex> lock(g_retry_mutex);
    return *retry_count_;
}

std::string HttpLlmClient::complete(const PromptRequest& request) {
    request.validate();
    const ParsedEndpoint endpoint = parse_endpoint(options_.endpoint);

    json body;
    body["model"] = options_.model;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    body["messages"] = json::array();
    if (!request.system.empty())
        body["messages"].push_back({{"role", "system"}, {"content", request.system}});
    for (const auto& msg : request.messages)
        body["messages"].push_back({{"role", role_name(msg.role)}, {"content", msg.text}});
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            {
                std::lock_guard<std::mutex> lock(g_retry_mutex);
                ++*retry_count_;
            }
            const int backoff = options_.backoff_initial_ms << (attempt - 1);
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        }

        // A fresh connection per attempt keeps the client trivially safe
        // for concurrent calls.
        httplib::Client client(endpoint.base);
        client.set_read_timeout(60, 0);
        httplib::Headers headers = {{"Authorization", "Bearer " + options_.api_key}};
        const httplib::Result res =
            client.Post(endpoint.path, headers, payload, "application/json");

        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        try {
            const json parsed = json::parse(res->body);
            return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            last_error = std::string("malformed completion payload: ") + e.what();
        }
    }
    throw RemoteError("llm request failed after " + std::to_string(options_.max_retries) +
                      " retries (" + last_error + ")");
}

std::unique_ptr<LlmClient> make_client_from_env(std::uint64_t mock_seed) {
    const char* endpoint = std::getenv("LLM_ENDPOINT");
    if (endpoint == nullptr || *endpoint == '\0')
        return std::make_unique<DeterministicMockClient>(mock_seed);

    HttpLlmClient::Options options;
    options.endpoint = endpoint;
    const char* key = std::getenv("LLM_API_KEY");
    if (key == nullptr || *key == '\0')
        throw ValidationError("LLM_ENDPOINT is set but LLM_API_KEY is missing");
    options.api_key = key;
    if (const char* model = std::getenv("LLM_MODEL"); model != nullptr && *model != '\0')
        options.model = model;
    return std::make_unique<HttpLlmClient>(std::move(options));
}

}  // namespace f3d::datagen
