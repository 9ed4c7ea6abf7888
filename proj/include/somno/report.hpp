#pragma once

// EvalReport serialization and rendering. Text tables and CSV files are
// produced from the report alone, so dump -> parse -> render shows the same
// numbers as rendering the in-memory report.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "somno/eval.hpp"

namespace somno::report {

std::string dump_json(const eval::EvalReport& report);
/// Throws InputError on malformed JSON or an unsupported schema_version.
eval::EvalReport parse_json(std::string_view text);
eval::EvalReport read_json(const std::filesystem::path& path);

/// Aligned plain-text tables: binary metrics per threshold, AUC rows,
/// tuned cutoffs, ICC/Pearson, Bland-Altman, confusion and event-level.
std::string render_text(const eval::EvalReport& report);

/// Writes regression.csv, bland_altman.csv, roc.csv, pr.csv and
/// confusion.csv into `directory`; returns the written paths.
std::vector<std::filesystem::path> render_plot_data(const eval::EvalReport& report,
                                                    const std::filesystem::path& directory);

}  // namespace somno::report
