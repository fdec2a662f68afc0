#include "modfuse/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "modfuse/text.hpp"

namespace modfuse {

const char* const kConditionNames[kConditions] = {"vision", "audio", "eeg", "multimodal"};

namespace {

const char* const kColumnTitles[kConditions] = {"Vision", "Audio", "EEG", "Multimodal"};

// Accuracy in [0,1] -> percent rounded to 2 decimals, exactly representable
// as an integer number of hundredths so delta arithmetic stays exact.
long long pct_hundredths(double accuracy) { return std::llround(accuracy * 10000.0); }

std::string pct_str(double accuracy) {
    return fmt_fixed(static_cast<double>(pct_hundredths(accuracy)) / 100.0, 2);
}

}  // namespace

std::optional<int> row_winner(const SubjectResult& row) {
    std::optional<int> winner;
    double best = 0.0;
    for (int c = 0; c < kConditions; ++c) {
        const auto& v = row.accuracy[static_cast<std::size_t>(c)];
        if (!v.has_value()) continue;
        if (!winner.has_value() || *v >= best) {
            winner = c;
            best = *v;
        }
    }
    return winner;
}

ReportTable aggregate(const std::vector<SubjectResult>& results) {
    if (results.empty()) throw DataError("aggregate: no subject results");

    ReportTable table;
    table.rows = results;
    std::sort(table.rows.begin(), table.rows.end(),
              [](const SubjectResult& a, const SubjectResult& b) {
                  return a.subject_id < b.subject_id;
              });
    std::set<int> seen;
    for (const SubjectResult& r : table.rows) {
        if (!seen.insert(r.subject_id).second) {
            throw DataError("aggregate: duplicate subject " + std::to_string(r.subject_id));
        }
        for (const auto& v : r.accuracy) {
            if (v.has_value() && (*v < 0.0 || *v > 1.0)) {
                throw DataError("aggregate: accuracy out of [0,1] for subject " +
                                std::to_string(r.subject_id));
            }
        }
    }

    for (int c = 0; c < kConditions; ++c) {
        double sum = 0.0;
        int n = 0;
        for (const SubjectResult& r : table.rows) {
            const auto& v = r.accuracy[static_cast<std::size_t>(c)];
            if (v.has_value()) {
                sum += *v;
                ++n;
            }
        }
        if (n > 0) table.means[static_cast<std::size_t>(c)] = sum / n;
    }

    const auto& mm = table.means[kConditions - 1];
    for (int c = 0; c < kConditions - 1; ++c) {
        const auto& um = table.means[static_cast<std::size_t>(c)];
        if (mm.has_value() && um.has_value()) {
            // Difference of the displayed (2-decimal) averages, in points.
            table.deltas[static_cast<std::size_t>(c)] =
                static_cast<double>(pct_hundredths(*mm) - pct_hundredths(*um)) / 100.0;
        }
    }
    return table;
}

namespace {

std::string cell(const std::optional<double>& v) {
    return v.has_value() ? pct_str(*v) : std::string("-");
}

std::string emit_csv(const ReportTable& table) {
    std::ostringstream os;
    os << "Subject,Vision,Audio,EEG,Multimodal,Winner\n";
    for (const SubjectResult& r : table.rows) {
        os << r.subject_id;
        for (int c = 0; c < kConditions; ++c) {
            os << ',' << cell(r.accuracy[static_cast<std::size_t>(c)]);
        }
        const std::optional<int> w = row_winner(r);
        os << ',' << (w.has_value() ? kColumnTitles[*w] : "-") << '\n';
    }
    os << "Avg.";
    SubjectResult avg_row;
    avg_row.accuracy = table.means;
    for (int c = 0; c < kConditions; ++c) {
        os << ',' << cell(table.means[static_cast<std::size_t>(c)]);
    }
    const std::optional<int> w = row_winner(avg_row);
    os << ',' << (w.has_value() ? kColumnTitles[*w] : "-") << '\n';
    for (int c = 0; c < kConditions - 1; ++c) {
        const auto& d = table.deltas[static_cast<std::size_t>(c)];
        if (d.has_value()) {
            os << "# delta_vs_" << kConditionNames[c] << ',' << fmt_fixed(*d, 2) << '\n';
        }
    }
    return os.str();
}

std::string emit_markdown(const ReportTable& table) {
    std::ostringstream os;
    os << "| Subject | Vision | Audio | EEG | Multimodal |\n";
    os << "| ---: | ---: | ---: | ---: | ---: |\n";
    auto row_line = [&os](const std::string& label, const SubjectResult& r) {
        const std::optional<int> w = row_winner(r);
        os << "| " << label;
        for (int c = 0; c < kConditions; ++c) {
            const std::string text = cell(r.accuracy[static_cast<std::size_t>(c)]);
            if (w.has_value() && *w == c) {
                os << " | **" << text << "**";
            } else {
                os << " | " << text;
            }
        }
        os << " |\n";
    };
    for (const SubjectResult& r : table.rows) {
        row_line(std::to_string(r.subject_id), r);
    }
    SubjectResult avg_row;
    avg_row.accuracy = table.means;
    row_line("Avg.", avg_row);

    bool any = false;
    for (int c = 0; c < kConditions - 1; ++c) {
        const auto& d = table.deltas[static_cast<std::size_t>(c)];
        if (!d.has_value()) continue;
        os << (any ? ", " : "\nMultimodal improvement: ");
        os << kConditionNames[c] << " +" << fmt_fixed(*d, 2);
        any = true;
    }
    if (any) os << '\n';
    return os.str();
}

}  // namespace

std::string emit_table(const ReportTable& table, ReportFormat format) {
    return format == ReportFormat::csv ? emit_csv(table) : emit_markdown(table);
}

std::string emit_barplot_data(const ReportTable& table) {
    std::ostringstream os;
    os << "subject,condition,accuracy\n";
    for (const SubjectResult& r : table.rows) {
        for (int c = 0; c < kConditions; ++c) {
            const auto& v = r.accuracy[static_cast<std::size_t>(c)];
            if (!v.has_value()) continue;
            os << r.subject_id << ',' << kConditionNames[c] << ',' << fmt_shortest(*v)
               << '\n';
        }
    }
    return os.str();
}

}  // namespace modfuse
