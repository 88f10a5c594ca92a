// SPDX-License-Identifier: Apache-2.0
#include "vidagent/eval.hpp"

#include "vidagent/fsutil.hpp"
#include "vidagent/hashing.hpp"
#include "vidagent/strings.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <sstream>

using nlohmann::json;

namespace vidagent {

std::string BenchmarkQuestion::render() const {
    std::ostringstream out;
    out << question << "\n";
    for (const auto& [letter, text] : options) {
        out << "(" << letter << ") " << text << "\n";
    }
    out << "Reply with the letter of the correct option.";
    return out.str();
}

json question_to_json(const BenchmarkQuestion& q) {
    json options = json::array();
    for (const auto& [letter, text] : q.options) {
        options.push_back(json::array({std::string(1, letter), text}));
    }
    return json{{"question_id", q.question_id}, {"video_id", q.video_id},
                {"question", q.question},      {"options", options},
                {"ground_truth", std::string(1, q.ground_truth)},
                {"category", q.category}};
}

std::vector<BenchmarkQuestion> load_questions_jsonl(const std::filesystem::path& path) {
    std::vector<BenchmarkQuestion> questions;
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string where = path.string() + " line " + std::to_string(i + 1);
        json doc;
        try {
            doc = json::parse(lines[i]);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::invalid_argument, where + ": " + e.what());
        }
        BenchmarkQuestion q;
        try {
            q.question_id = doc.at("question_id").get<std::string>();
            q.video_id = doc.at("video_id").get<std::string>();
            q.question = doc.at("question").get<std::string>();
            for (const auto& opt : doc.at("options")) {
                const std::string letter = opt.at(0).get<std::string>();
                if (letter.size() != 1) {
                    throw Error(ErrorCode::invalid_argument, where + ": bad option letter");
                }
                q.options.emplace_back(
                    static_cast<char>(std::toupper(static_cast<unsigned char>(letter[0]))),
                    opt.at(1).get<std::string>());
            }
            const std::string gt = doc.at("ground_truth").get<std::string>();
            if (gt.size() != 1) {
                throw Error(ErrorCode::invalid_argument, where + ": bad ground truth letter");
            }
            // Letters are canonically uppercase; extraction returns uppercase.
            q.ground_truth = static_cast<char>(std::toupper(static_cast<unsigned char>(gt[0])));
            q.category = doc.value("category", "");
        } catch (const json::exception& e) {
            throw Error(ErrorCode::invalid_argument, where + ": " + e.what());
        }
        if (q.options.size() < 2) {
            throw Error(ErrorCode::invalid_argument, where + ": needs at least two options");
        }
        const bool gt_known = std::any_of(q.options.begin(), q.options.end(),
                                          [&](const auto& o) { return o.first == q.ground_truth; });
        if (!gt_known) {
            throw Error(ErrorCode::invalid_argument, where + ": ground truth not among options");
        }
        questions.push_back(std::move(q));
    }
    return questions;
}

// --- Answer extraction ------------------------------------------------------------

namespace {

bool letter_known(char letter, const std::vector<std::pair<char, std::string>>& options) {
    return std::any_of(options.begin(), options.end(),
                       [&](const auto& o) { return std::toupper(o.first) == letter; });
}

// Matches "X", "(X)", "X." and "X)" against a whole trimmed string.
std::optional<char> match_letter_forms(const std::string& trimmed,
                                       const std::vector<std::pair<char, std::string>>& options) {
    auto as_letter = [&](char c) -> std::optional<char> {
        const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (letter_known(upper, options)) {
            return upper;
        }
        return std::nullopt;
    };
    if (trimmed.size() == 1 && std::isalpha(static_cast<unsigned char>(trimmed[0]))) {
        return as_letter(trimmed[0]);
    }
    if (trimmed.size() == 3 && trimmed[0] == '(' && trimmed[2] == ')' &&
        std::isalpha(static_cast<unsigned char>(trimmed[1]))) {
        return as_letter(trimmed[1]);
    }
    if (trimmed.size() == 2 && std::isalpha(static_cast<unsigned char>(trimmed[0])) &&
        (trimmed[1] == '.' || trimmed[1] == ')')) {
        return as_letter(trimmed[0]);
    }
    // "(X)." style: parenthesized with trailing punctuation.
    if (trimmed.size() == 4 && trimmed[0] == '(' && trimmed[2] == ')' &&
        (trimmed[3] == '.' || trimmed[3] == ',') &&
        std::isalpha(static_cast<unsigned char>(trimmed[1]))) {
        return as_letter(trimmed[1]);
    }
    return std::nullopt;
}

} // namespace

std::optional<char> extract_choice(const std::string& answer_text,
                                   const std::vector<std::pair<char, std::string>>& options) {
    const std::string trimmed = trim(answer_text);
    if (trimmed.empty() || options.empty()) {
        return std::nullopt;
    }

    if (auto letter = match_letter_forms(trimmed, options)) {
        return letter;
    }

    // "Answer: <form>" prefixes, case-insensitive, optional colon.
    const std::string lower = to_lower(trimmed);
    if (lower.rfind("answer", 0) == 0) {
        std::string rest = trimmed.substr(6);
        std::string rest_trimmed = trim(rest);
        if (!rest_trimmed.empty() && (rest_trimmed[0] == ':' || rest_trimmed[0] == '-')) {
            rest_trimmed = trim(rest_trimmed.substr(1));
        }
        if (auto letter = match_letter_forms(rest_trimmed, options)) {
            return letter;
        }
    }

    // Unique case-insensitive full-option-text match.
    std::optional<char> unique;
    for (const auto& [letter, text] : options) {
        if (text.empty()) {
            continue;
        }
        if (lower.find(to_lower(text)) != std::string::npos) {
            if (unique) {
                return std::nullopt; // ambiguous
            }
            unique = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
        }
    }
    return unique;
}

// --- Accuracy ----------------------------------------------------------------------

AccuracyTable evaluate(const std::vector<BenchmarkQuestion>& questions,
                       const std::map<std::string, Episode>& episodes, AbstainPolicy policy,
                       std::uint64_t seed) {
    AccuracyTable table;
    std::map<std::string, std::pair<int, int>> by_category; // correct, total

    for (const auto& q : questions) {
        const auto it = episodes.find(q.question_id);
        if (it == episodes.end()) {
            throw Error(ErrorCode::missing_episode, "no episode for question " + q.question_id);
        }
        auto choice = extract_choice(it->second.final_answer, q.options);
        if (!choice && policy == AbstainPolicy::random_seeded_choice) {
            // Deterministic per question regardless of evaluation order.
            std::mt19937_64 rng(seed ^ fnv1a64(q.question_id));
            std::uniform_int_distribution<std::size_t> pick(0, q.options.size() - 1);
            choice = static_cast<char>(
                std::toupper(static_cast<unsigned char>(q.options[pick(rng)].first)));
        }
        const bool correct =
            choice && *choice == std::toupper(static_cast<unsigned char>(q.ground_truth));
        table.correctness[q.question_id] = correct;
        auto& bucket = by_category[q.category];
        bucket.second += 1;
        bucket.first += correct ? 1 : 0;
        table.total += 1;
        table.correct += correct ? 1 : 0;
    }

    for (const auto& [category, counts] : by_category) {
        AccuracyTable::Row row;
        row.category = category.empty() ? "(uncategorized)" : category;
        row.correct = counts.first;
        row.total = counts.second;
        row.accuracy = counts.second ? static_cast<double>(counts.first) / counts.second : 0.0;
        table.per_category.push_back(std::move(row));
    }
    table.overall = table.total ? static_cast<double>(table.correct) / table.total : 0.0;
    return table;
}

json accuracy_to_json(const AccuracyTable& table) {
    json per_category = json::array();
    for (const auto& row : table.per_category) {
        per_category.push_back({{"category", row.category},
                                {"correct", row.correct},
                                {"total", row.total},
                                {"accuracy", row.accuracy}});
    }
    json correctness = json::object();
    for (const auto& [qid, ok] : table.correctness) {
        correctness[qid] = ok;
    }
    return json{{"per_category", per_category},
                {"correct", table.correct},
                {"total", table.total},
                {"overall", table.overall},
                {"correctness", correctness}};
}

std::string accuracy_to_text(const AccuracyTable& table) {
    std::ostringstream out;
    out << "category          correct  total  accuracy\n";
    auto line = [&out](const std::string& name, int correct, int total, double acc) {
        out << name;
        for (std::size_t i = name.size(); i < 18; ++i) {
            out << ' ';
        }
        std::string c = std::to_string(correct);
        std::string t = std::to_string(total);
        for (std::size_t i = c.size(); i < 7; ++i) out << ' ';
        out << c << "  ";
        for (std::size_t i = t.size(); i < 5; ++i) out << ' ';
        out << t << "  " << format_score(acc) << "\n";
    };
    for (const auto& row : table.per_category) {
        line(row.category, row.correct, row.total, row.accuracy);
    }
    line("overall", table.correct, table.total, table.overall);
    return out.str();
}

// --- Behavior classification ----------------------------------------------------------

std::string_view to_string(BehaviorClass c) {
    switch (c) {
        case BehaviorClass::GlobalBrowseOnly: return "GlobalBrowseOnly";
        case BehaviorClass::SimpleAction: return "SimpleAction";
        case BehaviorClass::IterativeSearch: return "IterativeSearch";
        case BehaviorClass::FrameInspectTrap: return "FrameInspectTrap";
        case BehaviorClass::ClipSearchTrap: return "ClipSearchTrap";
    }
    return "SimpleAction";
}

std::vector<ActionKind> tool_actions(const Episode& episode) {
    std::vector<ActionKind> out;
    for (const auto& step : episode.steps) {
        switch (step.call.kind) {
            case ActionKind::GlobalBrowse:
            case ActionKind::ClipSearch:
            case ActionKind::FrameInspect:
                out.push_back(step.call.kind);
                break;
            default:
                break;
        }
    }
    return out;
}

BehaviorClass classify(const std::vector<ActionKind>& actions) {
    if (actions.size() == 1 && actions[0] == ActionKind::GlobalBrowse) {
        return BehaviorClass::GlobalBrowseOnly;
    }

    // Run lengths of consecutive identical actions.
    struct Run {
        ActionKind kind;
        int length;
    };
    std::vector<Run> runs;
    for (const auto action : actions) {
        if (!runs.empty() && runs.back().kind == action) {
            runs.back().length += 1;
        } else {
            runs.push_back({action, 1});
        }
    }

    for (const auto& run : runs) {
        if (run.kind == ActionKind::FrameInspect && run.length > 3) {
            return BehaviorClass::FrameInspectTrap;
        }
    }
    for (const auto& run : runs) {
        if (run.kind == ActionKind::ClipSearch && run.length > 3) {
            return BehaviorClass::ClipSearchTrap;
        }
    }

    bool short_runs = true;
    for (const auto& run : runs) {
        if ((run.kind == ActionKind::ClipSearch || run.kind == ActionKind::FrameInspect) &&
            run.length > 2) {
            short_runs = false;
        }
    }
    int boundaries = 0;
    std::optional<ActionKind> previous;
    for (const auto action : actions) {
        if (action != ActionKind::ClipSearch && action != ActionKind::FrameInspect) {
            continue;
        }
        if (previous && *previous != action) {
            ++boundaries;
        }
        previous = action;
    }
    if (short_runs && boundaries <= 1) {
        return BehaviorClass::SimpleAction;
    }
    return BehaviorClass::IterativeSearch;
}

BehaviorReport aggregate(const std::vector<Episode>& episodes,
                         const std::optional<std::vector<bool>>& correctness) {
    if (correctness && correctness->size() != episodes.size()) {
        throw Error(ErrorCode::invalid_argument, "correctness not aligned with episodes");
    }
    static constexpr BehaviorClass kOrder[] = {
        BehaviorClass::GlobalBrowseOnly, BehaviorClass::SimpleAction,
        BehaviorClass::IterativeSearch, BehaviorClass::FrameInspectTrap,
        BehaviorClass::ClipSearchTrap};

    struct Acc {
        int count = 0;
        std::int64_t steps = 0;
        int correct = 0;
    };
    std::map<BehaviorClass, Acc> acc;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        const BehaviorClass cls = classify(tool_actions(episodes[i]));
        auto& a = acc[cls];
        a.count += 1;
        a.steps += static_cast<std::int64_t>(episodes[i].steps.size());
        if (correctness && (*correctness)[i]) {
            a.correct += 1;
        }
    }

    BehaviorReport report;
    report.total = static_cast<int>(episodes.size());
    for (const auto cls : kOrder) {
        const auto it = acc.find(cls);
        BehaviorReport::Row row;
        row.cls = cls;
        if (it != acc.end()) {
            row.episodes = it->second.count;
            row.ratio = report.total ? static_cast<double>(it->second.count) / report.total : 0.0;
            row.avg_steps = it->second.count
                                ? static_cast<double>(it->second.steps) / it->second.count
                                : 0.0;
            if (correctness && it->second.count) {
                row.score = static_cast<double>(it->second.correct) / it->second.count;
            }
        }
        report.rows.push_back(row);
    }
    return report;
}

json behavior_to_json(const BehaviorReport& report) {
    json rows = json::array();
    for (const auto& row : report.rows) {
        rows.push_back({{"class", std::string(to_string(row.cls))},
                        {"episodes", row.episodes},
                        {"ratio", row.ratio},
                        {"avg_steps", row.avg_steps},
                        {"score", row.score ? json(*row.score) : json(nullptr)}});
    }
    return json{{"rows", rows}, {"total", report.total}};
}

std::string behavior_to_text(const BehaviorReport& report) {
    std::ostringstream out;
    out << "class             episodes  ratio   avg_steps  score\n";
    for (const auto& row : report.rows) {
        std::string name(to_string(row.cls));
        out << name;
        for (std::size_t i = name.size(); i < 18; ++i) out << ' ';
        std::string c = std::to_string(row.episodes);
        for (std::size_t i = c.size(); i < 8; ++i) out << ' ';
        out << c << "  " << format_score(row.ratio) << "  ";
        std::string steps = format_score(row.avg_steps, 2);
        for (std::size_t i = steps.size(); i < 9; ++i) out << ' ';
        out << steps << "  " << (row.score ? format_score(*row.score) : "-") << "\n";
    }
    out << "total episodes: " << report.total << "\n";
    return out.str();
}

} // namespace vidagent
