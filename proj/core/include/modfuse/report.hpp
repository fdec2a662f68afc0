#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "modfuse/error.hpp"

namespace modfuse {

// Conditions in declared column order; ties in the winner column resolve
// toward the later entry, so multimodal wins exact ties.
inline constexpr int kConditions = 4;
extern const char* const kConditionNames[kConditions];  // vision, audio, eeg, multimodal

// One row of the subject-wise result table; accuracies in [0, 1], absent
// when a condition was not run for the subject.
struct SubjectResult {
    int subject_id = 0;
    std::array<std::optional<double>, kConditions> accuracy;
};

struct ReportTable {
    std::vector<SubjectResult> rows;  // sorted by subject id
    // Full-precision column means over present rows.
    std::array<std::optional<double>, kConditions> means;
    // Improvement of the multimodal average over each unimodal average, in
    // percentage points, computed from the 2-decimal displayed averages
    // (the paper's own arithmetic: 70.86 - 67.22 = 3.64).
    std::array<std::optional<double>, kConditions - 1> deltas;
};

ReportTable aggregate(const std::vector<SubjectResult>& results);

// Index of the winning condition of a row (absent entries skipped).
std::optional<int> row_winner(const SubjectResult& row);

enum class ReportFormat { csv, markdown };

// Subject x condition table with per-row winner, Avg. row, and the
// improvement deltas. Percentages with 2 decimals.
std::string emit_table(const ReportTable& table, ReportFormat format);

// Long-form `subject,condition,accuracy` CSV, full-precision values.
std::string emit_barplot_data(const ReportTable& table);

}  // namespace modfuse
