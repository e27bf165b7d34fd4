// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace tmlpred
{

/// The six benchmark tasks.
enum class Task
{
    CodeGeneration,
    MathematicalReasoning,
    QaVqa,
    ClassificationNli,
    TextSummarization,
    MachineTranslation,
};

inline constexpr std::array<Task, 6> all_tasks {
    Task::CodeGeneration,    Task::MathematicalReasoning, Task::QaVqa,
    Task::ClassificationNli, Task::TextSummarization,     Task::MachineTranslation,
};

/// Stable snake_case identifier, e.g. "code_generation".
std::string_view task_id(Task task) noexcept;

/// Human-facing name as used in question text, e.g. "Code Generation".
std::string_view task_display_name(Task task) noexcept;

/// Accepts either the identifier or the display name, case-insensitively.
std::optional<Task> parse_task(std::string_view name);

/// Throws InputError for unknown names.
Task task_from_string(std::string_view name);

/// True for identifiers naming a programming language ("python", "c++", ...).
/// Such keys are rejected as languages for code generation.
bool is_programming_language(std::string_view name);

/// PredSet (numeric score) versus QnASet (which option is best).
enum class QueryType
{
    NumericPrediction,
    ComparativeReasoning,
};

std::string_view to_string(QueryType type) noexcept;

/// Accepts "numeric"/"predictive"/"predset" and "comparative"/"qna"/"qnaset".
QueryType query_type_from_string(std::string_view name);

} // namespace tmlpred
