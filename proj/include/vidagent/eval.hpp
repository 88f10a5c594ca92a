// SPDX-License-Identifier: Apache-2.0
#pragma once
// Multiple-choice benchmark harness (per-category accuracy with answer-letter
// extraction) and the five-way tool-use behavior classifier.

#include "vidagent/agent.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vidagent {

struct BenchmarkQuestion {
    std::string question_id;
    std::string video_id;
    std::string question;
    std::vector<std::pair<char, std::string>> options; // (letter, text)
    char ground_truth = 'A';
    std::string category; // optional

    // Question plus lettered options, the text handed to the agent.
    std::string render() const;
};

// Questions JSONL: one object per line. Errors name the offending line.
std::vector<BenchmarkQuestion> load_questions_jsonl(const std::filesystem::path& path);
nlohmann::json question_to_json(const BenchmarkQuestion& q);

// Answer-letter extraction. Recognized forms, in priority order: a bare
// letter, a parenthesized letter "(B)", a letter with punctuation "B." / "B)",
// the same forms behind an "Answer:" prefix, then a unique case-insensitive
// full-option-text match. Anything else abstains (nullopt). Never returns a
// letter outside the option set.
std::optional<char> extract_choice(const std::string& answer_text,
                                   const std::vector<std::pair<char, std::string>>& options);

enum class AbstainPolicy {
    count_incorrect,      // default
    random_seeded_choice, // deterministic per-question pseudo-random pick
};

struct AccuracyTable {
    struct Row {
        std::string category;
        int correct = 0;
        int total = 0;
        double accuracy = 0.0;
    };
    std::vector<Row> per_category; // sorted by category name
    int correct = 0;
    int total = 0;
    double overall = 0.0;
    // question_id -> whether the episode answered correctly
    std::map<std::string, bool> correctness;
};

// One episode per question_id; throws missing-episode otherwise.
AccuracyTable evaluate(const std::vector<BenchmarkQuestion>& questions,
                       const std::map<std::string, Episode>& episodes,
                       AbstainPolicy policy = AbstainPolicy::count_incorrect,
                       std::uint64_t seed = 0);

nlohmann::json accuracy_to_json(const AccuracyTable& table);
std::string accuracy_to_text(const AccuracyTable& table);

enum class BehaviorClass {
    GlobalBrowseOnly,
    SimpleAction,
    IterativeSearch,
    FrameInspectTrap,
    ClipSearchTrap,
};

std::string_view to_string(BehaviorClass c);

// Tool actions of an episode in order: GlobalBrowse/ClipSearch/FrameInspect
// steps only (Answer and malformed steps excluded).
std::vector<ActionKind> tool_actions(const Episode& episode);

// Five-way classification, first matching rule wins:
//   1. exactly one GlobalBrowse and nothing else        -> GlobalBrowseOnly
//   2. a run of more than 3 consecutive FrameInspect    -> FrameInspectTrap
//   3. a run of more than 3 consecutive ClipSearch      -> ClipSearchTrap
//   4. every ClipSearch run <= 2, every FrameInspect run <= 2, and at most one
//      ClipSearch<->FrameInspect alternation boundary   -> SimpleAction
//   5. everything else                                  -> IterativeSearch
// An empty sequence (immediate answer) is SimpleAction. Alternation
// boundaries are counted on the subsequence of ClipSearch/FrameInspect calls,
// so interleaved GlobalBrowse calls do not hide an alternation.
BehaviorClass classify(const std::vector<ActionKind>& actions);

struct BehaviorReport {
    struct Row {
        BehaviorClass cls;
        int episodes = 0;
        double ratio = 0.0;
        double avg_steps = 0.0;            // all steps, including the Answer step
        std::optional<double> score;       // accuracy within the class, when known
    };
    std::vector<Row> rows; // all five classes, fixed order
    int total = 0;
};

// Groups episodes by classify. `correctness` aligns with `episodes` when
// present; without it the per-class score is omitted.
BehaviorReport aggregate(const std::vector<Episode>& episodes,
                         const std::optional<std::vector<bool>>& correctness = std::nullopt);

nlohmann::json behavior_to_json(const BehaviorReport& report);
std::string behavior_to_text(const BehaviorReport& report);

} // namespace vidagent
