#include "feat3d/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "feat3d/rng.hpp"

namespace f3d::datagen {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kAskerSystem =
    "You are gathering information about a 3D scene. Ask one short question about the "
    "scene, or reply [DONE] when you have enough information.";
constexpr const char* kSummarizerSystem =
    "Summarize the conversation about the 3D scene into a single caption describing the "
    "whole scene.";
constexpr const char* kVqaSystem = "Answer the question about the current camera view.";

std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t seed) {
    std::uint64_t h = 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string to_lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> word_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char raw : text) {
        const unsigned char c = static_cast<unsigned char>(raw);
        if (std::isalnum(c) || raw == '_') {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

std::string plural(const std::string& label, std::size_t count) {
    return count == 1 ? label : label + "s";
}

std::string count_word(std::size_t n) {
    static const char* kSmall[] = {"zero", "one", "two",   "three", "four",
                                   "five", "six", "seven", "eight", "nine"};
    return n < 10 ? kSmall[n] : std::to_string(n);
}

// Distinct labels (with multiplicity) parsed from a serialized box listing.
struct LabelCount {
    std::string label;
    std::size_t count = 0;
};

std::vector<LabelCount> labels_from_box_text(const std::string& text) {
    std::vector<LabelCount> out;
    for (const std::string& line : split_lines(text)) {
        const std::size_t sep = line.find(": [");
        if (sep == std::string::npos) continue;
        const std::string label = trim(line.substr(0, sep));
        if (label.empty() || label == "room") continue;
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const LabelCount& lc) { return lc.label == label; });
        if (it == out.end())
            out.push_back({label, 1});
        else
            ++it->count;
    }
    return out;
}

std::string join_label_list(const std::vector<LabelCount>& labels) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) out += i + 1 == labels.size() ? " and " : ", ";
        out += count_word(labels[i].count) + " " + plural(labels[i].label, labels[i].count);
    }
    return out;
}

// Parse "Q: ... A: ..." into prompt/response halves.
bool parse_qa(const std::string& text, std::string* prompt, std::string* response) {
    const std::string trimmed = trim(text);
    if (trimmed.rfind("Q:", 0) != 0) return false;
    std::size_t a_pos = trimmed.find(" A: ");
    std::size_t a_len = 4;
    if (a_pos == std::string::npos) {
        a_pos = trimmed.find("A:", 2);
        a_len = 2;
    }
    if (a_pos == std::string::npos) return false;
    *prompt = trim(trimmed.substr(2, a_pos - 2));
    *response = trim(trimmed.substr(a_pos + a_len));
    return !prompt->empty() && !response->empty();
}

bool uses_qa_grammar(Task task) {
    switch (task) {
        case Task::kQa:
        case Task::kDialog:
        case Task::kDenseCaption:
        case Task::kGrounding:
            return true;
        default:
            return false;
    }
}

std::string format_box(const geom::Aabb& box) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "[%.2f, %.2f, %.2f, %.2f, %.2f, %.2f]", box.min.x(),
                  box.min.y(), box.min.z(), box.max.x(), box.max.y(), box.max.z());
    return buf;
}

// "I can see: a, b." lists from the chat transcript.
std::vector<std::string> labels_from_transcript(const std::string& text) {
    std::vector<std::string> out;
    const std::string lower = to_lower(text);
    const std::string marker = "i can see:";
    std::size_t pos = 0;
    while ((pos = lower.find(marker, pos)) != std::string::npos) {
        pos += marker.size();
        std::size_t end = lower.find_first_of(".\n", pos);
        if (end == std::string::npos) end = lower.size();
        for (const std::string& token : word_tokens(lower.substr(pos, end - pos))) {
            if (token == "and" || token == "a" || token == "an") continue;
            if (std::find(out.begin(), out.end(), token) == out.end()) out.push_back(token);
        }
        pos = end;
    }
    return out;
}

std::string mock_summary(const PromptRequest& request) {
    std::string all_user_text;
    for (const auto& msg : request.messages)
        if (msg.role == Message::Role::kUser) all_user_text += msg.text + "\n";
    const std::vector<std::string> labels = labels_from_transcript(all_user_text);
    if (labels.empty()) return "The scene looks empty, with nothing recognizable in view.";
    std::string list;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) list += i + 1 == labels.size() ? " and " : ", ";
        list += labels[i];
    }
    return "The scene contains " + list + ".";
}

std::string mock_question(const PromptRequest& request) {
    static const char* kQuestions[] = {
        "What objects can you see?",
        "What colors stand out in the view?",
        "Where are the objects placed?",
        "What else is visible?",
    };
    std::size_t asked = 0;
    for (const auto& msg : request.messages)
        if (msg.role == Message::Role::kAssistant) ++asked;
    if (asked >= 8) return "[DONE]";
    return kQuestions[asked % 4];
}

std::string mock_revision(const PromptRequest& request, const std::string& system_lower) {
    std::string source;
    for (const auto& msg : request.messages) {
        if (msg.role != Message::Role::kUser) continue;
        const std::size_t pos = msg.text.find("Response: ");
        if (pos != std::string::npos) source = trim(msg.text.substr(pos + 10));
    }
    if (source.empty()) source = "the scene";
    if (contains(system_lower, "q:"))
        return "Q: What does the scene contain? A: " + source;
    return source;
}

const std::string& last_user_text(const PromptRequest& request) {
    static const std::string kEmpty;
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it)
        if (it->role == Message::Role::kUser) return it->text;
    return kEmpty;
}

}  // namespace

std::string task_name(Task task) {
    switch (task) {
        case Task::kCaption: return "caption";
        case Task::kDenseCaption: return "dense_caption";
        case Task::kQa: return "qa";
        case Task::kTaskDecomposition: return "task_decomposition";
        case Task::kDialog: return "dialog";
        case Task::kGrounding: return "grounding";
        case Task::kNavigation: return "navigation";
    }
    throw ValidationError("unknown task enum value");
}

Task task_from_name(const std::string& name) {
    if (name == "caption") return Task::kCaption;
    if (name == "dense_caption") return Task::kDenseCaption;
    if (name == "qa") return Task::kQa;
    if (name == "task_decomposition") return Task::kTaskDecomposition;
    if (name == "dialog") return Task::kDialog;
    if (name == "grounding") return Task::kGrounding;
    if (name == "navigation") return Task::kNavigation;
    throw ValidationError("unknown task '" + name + "'");
}

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::kBoxPrompted: return "box_prompted";
        case Provenance::kChatCaptioner: return "chat_captioner";
        case Provenance::kRevision: return "revision";
    }
    throw ValidationError("unknown provenance enum value");
}

Provenance provenance_from_name(const std::string& name) {
    if (name == "box_prompted") return Provenance::kBoxPrompted;
    if (name == "chat_captioner") return Provenance::kChatCaptioner;
    if (name == "revision") return Provenance::kRevision;
    throw ValidationError("unknown provenance '" + name + "'");
}

void LanguageRecord::validate() const {
    if (prompt.empty() || response.empty())
        throw ValidationError("language record: prompt and response must be non-empty");
    if (task == Task::kGrounding && boxes.empty())
        throw ValidationError("language record: grounding records need at least one box");
}

void PromptRequest::validate() const {
    if (messages.empty()) throw ValidationError("prompt request: needs at least one message");
    for (std::size_t i = 0; i < messages.size(); ++i) {
        const auto expected = i % 2 == 0 ? Message::Role::kUser : Message::Role::kAssistant;
        if (messages[i].role != expected)
            throw ValidationError("prompt request: roles must alternate starting with user");
    }
}

std::string PromptRequest::canonical_bytes() const {
    char numbuf[64];
    std::snprintf(numbuf, sizeof(numbuf), "%.6f|%d", temperature, max_tokens);
    std::string out = "SYS\x1e" + system + "\x1e" + numbuf;
    for (const auto& msg : messages) {
        out += msg.role == Message::Role::kUser ? "\x1eU\x1f" : "\x1eA\x1f";
        out += msg.text;
    }
    return out;
}

std::string DeterministicMockClient::complete(const PromptRequest& request) {
    request.validate();
    Rng rng(fnv1a64(request.canonical_bytes(), seed_));
    const std::string system_lower = to_lower(request.system);

    if (contains(system_lower, "summarize")) return mock_summary(request);
    if (contains(system_lower, "ask one short question")) return mock_question(request);
    if (system_lower.rfind("convert", 0) == 0) return mock_revision(request, system_lower);

    const std::vector<LabelCount> labels = labels_from_box_text(last_user_text(request));

    if (contains(system_lower, "where is")) {
        if (labels.empty()) return "Q: Where is anything? A: The room is empty.";
        std::string out;
        for (const auto& lc : labels)
            out += "Q: Where is the " + lc.label + "? A: The " + lc.label +
                   " is placed inside the room bounds.\n";
        return out;
    }
    if (contains(system_lower, "describe each object")) {
        if (labels.empty()) return "Q: Describe the room. A: An empty room with bare walls.";
        std::string out;
        for (const auto& lc : labels)
            out += "Q: Describe the " + lc.label + ". A: A plain " + lc.label +
                   " resting on the floor.\n";
        return out;
    }
    if (contains(system_lower, "formatted as 'q:")) {
        if (labels.empty()) return "Q: Is anything in the room? A: No, the room is empty.";
        std::string out;
        for (const auto& lc : labels) {
            if (uniform_index(rng, 2) == 0) {
                out += "Q: How many " + plural(lc.label, 2) + " are in the scene? A: There " +
                       (lc.count == 1 ? "is " : "are ") + count_word(lc.count) + " " +
                       plural(lc.label, lc.count) + ".\n";
            } else {
                out += "Q: Is there a " + lc.label + " in the room? A: Yes, the room has " +
                       count_word(lc.count) + " " + plural(lc.label, lc.count) + ".\n";
            }
        }
        return out;
    }
    if (contains(system_lower, "numbered steps")) {
        if (labels.empty()) return "1. Look around the empty room.\n2. Leave.";
        static const char* kActions[] = {"Walk to", "Inspect", "Tidy up around", "Check"};
        std::string out = "Task: tidy the room.\n";
        for (std::size_t i = 0; i < labels.size(); ++i)
            out += std::to_string(i + 1) + ". " + kActions[i % 4] + " the " + labels[i].label +
                   ".\n";
        return out;
    }
    if (contains(system_lower, "navigation directions")) {
        if (labels.empty()) return "Walk straight through the empty room and stop at the far wall.";
        std::string out = "Enter the room";
        for (std::size_t i = 0; i < labels.size(); ++i)
            out += (i + 1 == labels.size() ? ", and stop at the " : ", head past the ") +
                   labels[i].label;
        return out + ".";
    }

    // Caption fallback.
    if (labels.empty()) return "An empty room with bare walls and an open floor.";
    static const char* kOpeners[] = {"The room contains", "A simple room holding",
                                     "This scene shows"};
    return std::string(kOpeners[uniform_index(rng, 3)]) + " " + join_label_list(labels) + ".";
}

std::string LabelReadingVqaMock::answer(const PromptRequest& request,
                                        const synth::CameraView& view) {
    request.validate();
    std::set<int> ids;
    for (const int id : view.semantics)
        if (id >= 0) ids.insert(id);
    std::vector<std::string> labels;
    for (const int id : ids)
        if (id < static_cast<int>(id_to_label_.size())) labels.push_back(id_to_label_[id]);
    std::sort(labels.begin(), labels.end());
    if (labels.empty()) return "I can see nothing of note.";
    std::string list;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) list += ", ";
        list += labels[i];
    }
    return "I can see: " + list + ".";
}

std::string PipelineReport::to_json() const {
    json j;
    j["scenes"] = scenes;
    j["requests"] = requests;
    j["records_emitted"] = records_emitted;
    j["records_rejected"] = records_rejected;
    j["retries"] = retries;
    return j.dump();
}

Validator make_label_validator(std::vector<std::string> known_labels) {
    std::sort(known_labels.begin(), known_labels.end());
    return [universe = std::move(known_labels)](const LanguageRecord& record,
                                                const synth::Scene& scene) {
        const std::vector<std::string> scene_labels = scene.label_set();
        const auto in_universe = [&](const std::string& w) {
            return std::binary_search(universe.begin(), universe.end(), w);
        };
        const auto in_scene = [&](const std::string& w) {
            return std::binary_search(scene_labels.begin(), scene_labels.end(), w);
        };
        for (const std::string& token : word_tokens(record.prompt + " " + record.response)) {
            std::string base = token;
            if (!in_universe(base) && !base.empty() && base.back() == 's')
                base = base.substr(0, base.size() - 1);  // allow plural mentions
            if (in_universe(base) && !in_scene(base)) return false;
        }
        return true;
    };
}

std::string serialize_scene_boxes(const synth::Scene& scene) {
    std::string out = "room: " + format_box(scene.bounds) + "\n";
    std::vector<const synth::SceneObject*> sorted;
    sorted.reserve(scene.objects.size());
    for (const auto& obj : scene.objects) sorted.push_back(&obj);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const synth::SceneObject* a, const synth::SceneObject* b) {
                         if (a->label != b->label) return a->label < b->label;
                         if (a->aabb.min.x() != b->aabb.min.x())
                             return a->aabb.min.x() < b->aabb.min.x();
                         if (a->aabb.min.y() != b->aabb.min.y())
                             return a->aabb.min.y() < b->aabb.min.y();
                         return a->aabb.min.z() < b->aabb.min.z();
                     });
    for (const auto* obj : sorted) out += obj->label + ": " + format_box(obj->aabb) + "\n";
    return out;
}

PromptRequest build_box_prompt(const synth::Scene& scene, const std::string& instruction,
                               const std::vector<std::pair<synth::Scene, std::string>>& demos) {
    if (demos.size() > 3)
        throw ValidationError("build_box_prompt: at most 3 demonstrations are allowed");
    PromptRequest request;
    request.system = instruction;
    for (const auto& [demo_scene, demo_response] : demos) {
        request.messages.push_back({Message::Role::kUser, serialize_scene_boxes(demo_scene)});
        request.messages.push_back({Message::Role::kAssistant, demo_response});
    }
    request.messages.push_back({Message::Role::kUser, serialize_scene_boxes(scene)});
    request.validate();
    return request;
}

std::string default_instruction(Task task) {
    const std::string preamble =
        "You are given the room bounds and object bounding boxes of a 3D scene. ";
    switch (task) {
        case Task::kCaption:
            return preamble + "Write a single flowing caption that summarizes the scene.";
        case Task::kDenseCaption:
            return preamble +
                   "Describe each object on its own line, formatted as 'Q: Describe the "
                   "<object>. A: <one-sentence description>'.";
        case Task::kQa:
            return preamble +
                   "Write question-answer pairs about the scene, one per line, formatted as "
                   "'Q: <question> A: <answer>'.";
        case Task::kTaskDecomposition:
            return preamble +
                   "Propose a household task and decompose it into numbered steps that use "
                   "the objects present.";
        case Task::kDialog:
            return preamble +
                   "Write a short dialog grounded in the scene, one exchange per line, "
                   "formatted as 'Q: <user turn> A: <assistant turn>'.";
        case Task::kGrounding:
            return preamble +
                   "For each object write one line formatted as 'Q: Where is the <object>? "
                   "A: <spatial answer>'.";
        case Task::kNavigation:
            return preamble +
                   "Write navigation directions that visit the objects in a sensible order.";
    }
    throw ValidationError("unknown task enum value");
}

std::string canonical_prompt(Task task) {
    switch (task) {
        case Task::kCaption: return "Describe the scene.";
        case Task::kDenseCaption: return "Describe the object.";
        case Task::kQa: return "Answer a question about the scene.";
        case Task::kTaskDecomposition: return "Decompose a task for this scene into steps.";
        case Task::kDialog: return "Chat about the scene.";
        case Task::kGrounding: return "Locate the object.";
        case Task::kNavigation: return "Give directions through the scene.";
    }
    throw ValidationError("unknown task enum value");
}

std::vector<LanguageRecord> run_box_pipeline(
    const synth::Scene& scene, const std::string& scene_id, const std::string& instruction,
    const std::vector<std::pair<synth::Scene, std::string>>& demos, Task task, LlmClient& client,
    const Validator& validator, PipelineReport* report) {
    const PromptRequest request = build_box_prompt(scene, instruction, demos);
    const std::string completion = client.complete(request);
    if (report) ++report->requests;

    std::vector<LanguageRecord> parsed;
    if (uses_qa_grammar(task)) {
        for (const std::string& line : split_lines(completion)) {
            std::string prompt, response;
            if (!parse_qa(line, &prompt, &response)) continue;
            LanguageRecord rec;
            rec.scene_id = scene_id;
            rec.task = task;
            rec.prompt = prompt;
            rec.response = response;
            parsed.push_back(std::move(rec));
        }
    } else {
        const std::string body = trim(completion);
        if (!body.empty()) {
            LanguageRecord rec;
            rec.scene_id = scene_id;
            rec.task = task;
            rec.prompt = canonical_prompt(task);
            rec.response = body;
            parsed.push_back(std::move(rec));
        }
    }

    std::vector<LanguageRecord> records;
    for (LanguageRecord& rec : parsed) {
        if (task == Task::kGrounding || task == Task::kDenseCaption) {
            const std::vector<std::string> tokens = word_tokens(rec.prompt + " " + rec.response);
            std::set<std::string> mentioned(tokens.begin(), tokens.end());
            std::set<std::string> attached;
            for (const auto& obj : scene.objects) {
                if (attached.count(obj.label)) continue;
                if (mentioned.count(obj.label) || mentioned.count(obj.label + "s")) {
                    rec.boxes.push_back({obj.label, obj.aabb});
                    attached.insert(obj.label);
                }
            }
            if (task == Task::kGrounding && rec.boxes.empty()) {
                if (report) ++report->records_rejected;
                continue;
            }
        }
        if (!validator(rec, scene)) {
            if (report) ++report->records_rejected;
            continue;
        }
        rec.validate();
        records.push_back(std::move(rec));
        if (report) ++report->records_emitted;
    }
    if (records.empty())
        throw ValidationError("box pipeline: no valid records for scene '" + scene_id + "'");
    return records;
}

LanguageRecord run_chat_captioner(const std::string& scene_id,
                                  const std::vector<synth::CameraView>& views, LlmClient& asker,
                                  VqaClient& answerer, int max_rounds, PipelineReport* report) {
    if (views.empty()) throw ValidationError("chat captioner: need at least one view");
    if (max_rounds < 1) throw ValidationError("chat captioner: max_rounds must be at least 1");

    PromptRequest ask;
    ask.system = kAskerSystem;
    ask.messages.push_back({Message::Role::kUser, "Begin."});
    std::vector<std::pair<std::string, std::string>> transcript;

    for (int round = 0; round < max_rounds; ++round) {
        const std::string question = trim(asker.complete(ask));
        if (report) ++report->requests;
        if (contains(question, "[DONE]")) break;

        PromptRequest vqa;
        vqa.system = kVqaSystem;
        vqa.messages.push_back({Message::Role::kUser, question});
        const std::string answer =
            trim(answerer.answer(vqa, views[round % views.size()]));
        if (report) ++report->requests;

        transcript.emplace_back(question, answer);
        ask.messages.push_back({Message::Role::kAssistant, question});
        ask.messages.push_back({Message::Role::kUser, answer});
    }

    PromptRequest summarize;
    summarize.system = kSummarizerSystem;
    std::string block;
    for (const auto& [q, a] : transcript) block += "Q: " + q + "\nA: " + a + "\n";
    block += "Summarize the scene in a single caption.";
    summarize.messages.push_back({Message::Role::kUser, block});
    std::string caption = trim(asker.complete(summarize));
    if (report) ++report->requests;
    if (caption.empty()) caption = "A scene with no distinguishing details.";

    LanguageRecord record;
    record.scene_id = scene_id;
    record.task = Task::kCaption;
    record.prompt = canonical_prompt(Task::kCaption);
    record.response = caption;
    record.provenance = Provenance::kChatCaptioner;
    record.validate();
    if (report) ++report->records_emitted;
    return record;
}

LanguageRecord revise(const LanguageRecord& record, Task target_task, LlmClient& client) {
    record.validate();
    if (target_task == record.task)
        throw ValidationError("revise: target task equals the source task");

    PromptRequest request;
    request.system = "Convert the following 3D-language record into " + task_name(target_task) +
                     " data.";
    if (uses_qa_grammar(target_task))
        request.system += " Respond as a single line formatted as 'Q: <question> A: <answer>'.";
    request.messages.push_back({Message::Role::kUser, "Task: " + task_name(record.task) +
                                                          "\nPrompt: " + record.prompt +
                                                          "\nResponse: " + record.response});
    const std::string completion = trim(client.complete(request));

    LanguageRecord out;
    out.scene_id = record.scene_id;
    out.task = target_task;
    out.boxes = record.boxes;
    out.provenance = Provenance::kRevision;
    std::string prompt, response;
    if (uses_qa_grammar(target_task) && parse_qa(completion, &prompt, &response)) {
        out.prompt = prompt;
        out.response = response;
    } else {
        out.prompt = canonical_prompt(target_task);
        out.response = completion.empty() ? record.response : completion;
    }
    out.validate();
    return out;
}

LanguageRecord attach_location_tokens(const LanguageRecord& record,
                                      const loc::LocTokenConfig& cfg) {
    if (record.boxes.empty())
        throw ValidationError("attach_location_tokens: record carries no boxes");
    LanguageRecord out = record;
    std::string suffix;
    for (std::size_t i = 0; i < record.boxes.size(); ++i) {
        if (i > 0) suffix += "; ";
        suffix += loc::render_location_text(loc::encode_location(record.boxes[i].box, cfg), cfg);
    }
    out.response += " " + suffix;
    return out;
}

DatasetSplit split_dataset(const std::vector<LanguageRecord>& records, std::uint64_t seed) {
    if (records.size() < 10)
        throw ValidationError("split_dataset: need at least 10 records, got " +
                              std::to_string(records.size()));
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    shuffle_inplace(rng, order);

    const std::size_t n = records.size();
    const std::size_t n_train = n * 8 / 10;
    const std::size_t n_val = n / 10;
    DatasetSplit split;
    for (std::size_t i = 0; i < n; ++i) {
        const LanguageRecord& rec = records[order[i]];
        if (i < n_train)
            split.train.push_back(rec);
        else if (i < n_train + n_val)
            split.val.push_back(rec);
        else
            split.test.push_back(rec);
    }
    return split;
}

std::string record_to_json_line(const LanguageRecord& record) {
    json j;
    j["scene_id"] = record.scene_id;
    j["task"] = task_name(record.task);
    j["prompt"] = record.prompt;
    j["response"] = record.response;
    j["provenance"] = provenance_name(record.provenance);
    if (!record.boxes.empty()) {
        j["boxes"] = json::array();
        for (const auto& ann : record.boxes) {
            j["boxes"].push_back(json::array(
                {ann.label, json::array({ann.box.min.x(), ann.box.min.y(), ann.box.min.z(),
                                         ann.box.max.x(), ann.box.max.y(), ann.box.max.z()})}));
        }
    }
    return j.dump();
}

LanguageRecord record_from_json_line(const std::string& line, std::size_t line_number) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw ValidationError("jsonl line " + std::to_string(line_number) + ": " + e.what());
    }
    try {
        LanguageRecord record;
        record.scene_id = j.at("scene_id").get<std::string>();
        record.task = task_from_name(j.at("task").get<std::string>());
        record.prompt = j.at("prompt").get<std::string>();
        record.response = j.at("response").get<std::string>();
        record.provenance = provenance_from_name(j.value("provenance", "box_prompted"));
        if (j.contains("boxes")) {
            for (const auto& ann : j.at("boxes")) {
                if (!ann.is_array() || ann.size() != 2 || !ann[1].is_array() || ann[1].size() != 6)
                    throw ValidationError("malformed box annotation");
                BoxAnnotation box;
                box.label = ann[0].get<std::string>();
                box.box.min = geom::Vec3(ann[1][0], ann[1][1], ann[1][2]);
                box.box.max = geom::Vec3(ann[1][3], ann[1][4], ann[1][5]);
                record.boxes.push_back(std::move(box));
            }
        }
        record.validate();
        return record;
    } catch (const json::exception& e) {
        throw ValidationError("jsonl line " + std::to_string(line_number) + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError("jsonl line " + std::to_string(line_number) + ": " + e.what());
    }
}

void write_jsonl(const std::vector<LanguageRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& record : records) out << record_to_json_line(record) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

std::vector<LanguageRecord> read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<LanguageRecord> records;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) continue;
        records.push_back(record_from_json_line(line, line_number));
    }
    return records;
}

}  // namespace f3d::datagen
