#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "feat3d/geometry.hpp"
#include "feat3d/localize.hpp"
#include "feat3d/synthworld.hpp"

namespace f3d::datagen {

enum class Task {
    kCaption,
    kDenseCaption,
    kQa,
    kTaskDecomposition,
    kDialog,
    kGrounding,
    kNavigation,
};

enum class Provenance { kBoxPrompted, kChatCaptioner, kRevision };

std::string task_name(Task task);
Task task_from_name(const std::string& name);
std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

struct BoxAnnotation {
    std::string label;
    geom::Aabb box;
};

struct LanguageRecord {
    std::string scene_id;
    Task task = Task::kCaption;
    std::string prompt;
    std::string response;
    std::vector<BoxAnnotation> boxes;
    Provenance provenance = Provenance::kBoxPrompted;

    void validate() const;  // prompt/response non-empty; grounding carries boxes
};

struct Message {
    enum class Role { kUser, kAssistant };
    Role role = Role::kUser;
    std::string text;
};

struct PromptRequest {
    std::string system;
    std::vector<Message> messages;  // alternate roles, starting with user
    double temperature = 0.7;
    int max_tokens = 512;

    void validate() const;
    // Stable byte serialization; the deterministic mock hashes this.
    std::string canonical_bytes() const;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const PromptRequest& request) = 0;
};

// Pure function of (request bytes, seed). Reads the box serialization in
// the request to answer with scene-consistent templates, so pipeline output
// passes the label validator by construction.
class DeterministicMockClient : public LlmClient {
public:
    explicit DeterministicMockClient(std::uint64_t seed = 0) : seed_(seed) {}
    std::string complete(const PromptRequest& request) override;

private:
    std::uint64_t seed_;
};

// JSON-over-HTTP chat client. Endpoint and credentials come from the
// environment (LLM_ENDPOINT, LLM_API_KEY, LLM_MODEL); transport failures
// retry with exponential backoff before surfacing a RemoteError.
class HttpLlmClient : public LlmClient {
public:
    struct Options {
        std::string endpoint;
        std::string api_key;
        std::string model = "gpt-4";
        int max_retries = 3;
        int backoff_initial_ms = 1000;
    };

    explicit HttpLlmClient(Options options);
    std::string complete(const PromptRequest& request) override;
    std::size_t retries() const;

private:
    Options options_;
    std::shared_ptr<std::size_t> retry_count_;  // guarded by mutex in the impl
};

// Mock client when LLM_ENDPOINT is unset; otherwise an HttpLlmClient.
// An endpoint without LLM_API_KEY is a configuration error raised before
// any request is attempted.
std::unique_ptr<LlmClient> make_client_from_env(std::uint64_t mock_seed);

// Per-view answerer standing in for a 2D VQA model.
class VqaClient {
public:
    virtual ~VqaClient() = default;
    virtual std::string answer(const PromptRequest& request, const synth::CameraView& view) = 0;
};

// Answers by reading the view's ground-truth semantic labels.
class LabelReadingVqaMock : public VqaClient {
public:
    explicit LabelReadingVqaMock(std::vector<std::string> id_to_label)
        : id_to_label_(std::move(id_to_label)) {}
    std::string answer(const PromptRequest& request, const synth::CameraView& view) override;

private:
    std::vector<std::string> id_to_label_;
};

struct PipelineReport {
    std::size_t scenes = 0;
    std::size_t requests = 0;
    std::size_t records_emitted = 0;
    std::size_t records_rejected = 0;
    std::size_t retries = 0;

    std::string to_json() const;
};

// Rejects records that reference a known label absent from the scene.
using Validator = std::function<bool(const LanguageRecord&, const synth::Scene&)>;
Validator make_label_validator(std::vector<std::string> known_labels);

// Room bounds line followed by one "label: [x0, y0, z0, x1, y1, z1]" line
// per object (two decimals, sorted by label then min corner).
std::string serialize_scene_boxes(const synth::Scene& scene);

// System = instruction; demo scenes/responses appear as alternating user /
// assistant messages before the query scene. At most three demonstrations.
PromptRequest build_box_prompt(const synth::Scene& scene, const std::string& instruction,
                               const std::vector<std::pair<synth::Scene, std::string>>& demos);

std::string default_instruction(Task task);
std::string canonical_prompt(Task task);

// Boxes-demonstration-instruction pipeline for one scene. Completion lines
// parse by task grammar: "Q: ... A: ..." lines for qa, dialog, dense
// captions and grounding; whole-text records otherwise. Grounding records
// attach the boxes of mentioned objects. Zero valid records is an error.
std::vector<LanguageRecord> run_box_pipeline(const synth::Scene& scene,
                                             const std::string& scene_id,
                                             const std::string& instruction,
                                             const std::vector<std::pair<synth::Scene, std::string>>& demos,
                                             Task task, LlmClient& client,
                                             const Validator& validator,
                                             PipelineReport* report = nullptr);

// Question-asking loop over round-robin views, terminated by max_rounds or
// a literal "[DONE]" from the asker, then summarized into one caption.
LanguageRecord run_chat_captioner(const std::string& scene_id,
                                  const std::vector<synth::CameraView>& views, LlmClient& asker,
                                  VqaClient& answerer, int max_rounds,
                                  PipelineReport* report = nullptr);

// Converts a record to another task via the client; scene id and boxes
// carry over, provenance becomes revision.
LanguageRecord revise(const LanguageRecord& record, Task target_task, LlmClient& client);

// Appends one rendered location-token sequence per box to the response,
// sequences separated by "; ".
LanguageRecord attach_location_tokens(const LanguageRecord& record,
                                      const loc::LocTokenConfig& cfg);

struct DatasetSplit {
    std::vector<LanguageRecord> train;
    std::vector<LanguageRecord> val;
    std::vector<LanguageRecord> test;
};

// Deterministic shuffle, then floor(0.8n) / floor(0.1n) / remainder.
DatasetSplit split_dataset(const std::vector<LanguageRecord>& records, std::uint64_t seed);

std::string record_to_json_line(const LanguageRecord& record);
LanguageRecord record_from_json_line(const std::string& line, std::size_t line_number);
void write_jsonl(const std::vector<LanguageRecord>& records, const std::string& path);
std::vector<LanguageRecord> read_jsonl(const std::string& path);

}  // namespace f3d::datagen
