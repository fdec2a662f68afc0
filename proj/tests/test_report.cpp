#include <doctest.h>

#include <sstream>

#include "modfuse/report.hpp"
#include "modfuse/text.hpp"
#include "reference_table.hpp"
#include "test_helpers.hpp"

using namespace modfuse;

namespace {

std::vector<SubjectResult> reference_results() {
    std::vector<SubjectResult> rows;
    for (const testutil::ReferenceRow& r : testutil::kReferenceRows) {
        SubjectResult s;
        s.subject_id = r.subject;
        s.accuracy = {r.vision / 100.0, r.audio / 100.0, r.eeg / 100.0,
                      r.multimodal / 100.0};
        rows.push_back(s);
    }
    return rows;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("aggregate reproduces the reference averages and deltas") {
    const ReportTable table = aggregate(reference_results());

    REQUIRE(table.means[0].has_value());
    CHECK(fmt_fixed(*table.means[0] * 100.0, 2) == "67.22");
    CHECK(fmt_fixed(*table.means[1] * 100.0, 2) == "58.17");
    CHECK(fmt_fixed(*table.means[2] * 100.0, 2) == "53.51");
    CHECK(fmt_fixed(*table.means[3] * 100.0, 2) == "70.86");

    REQUIRE(table.deltas[0].has_value());
    CHECK(fmt_fixed(*table.deltas[0], 2) == "3.64");
    CHECK(fmt_fixed(*table.deltas[1], 2) == "12.69");
    CHECK(fmt_fixed(*table.deltas[2], 2) == "17.35");
}

TEST_CASE("aggregate means match an independent summation oracle") {
    const std::vector<SubjectResult> rows = reference_results();
    const ReportTable table = aggregate(rows);
    for (int c = 0; c < kConditions; ++c) {
        long double acc = 0.0L;
        for (const SubjectResult& r : rows) acc += *r.accuracy[static_cast<std::size_t>(c)];
        const double oracle = static_cast<double>(acc / rows.size());
        CHECK(std::fabs(*table.means[static_cast<std::size_t>(c)] - oracle) < 1e-9);
    }
}

TEST_CASE("single subject: average equals the row") {
    SubjectResult s;
    s.subject_id = 5;
    s.accuracy = {0.5, 0.6, 0.7, 0.8};
    const ReportTable table = aggregate({s});
    for (int c = 0; c < kConditions; ++c) {
        CHECK(*table.means[static_cast<std::size_t>(c)] ==
              *s.accuracy[static_cast<std::size_t>(c)]);
    }
}

TEST_CASE("aggregate rejects duplicates and bad values") {
    SubjectResult a;
    a.subject_id = 1;
    a.accuracy[0] = 0.5;
    CHECK_THROWS_AS((void)aggregate({a, a}), DataError);
    CHECK_THROWS_AS((void)aggregate({}), DataError);
    SubjectResult bad = a;
    bad.accuracy[0] = 1.5;
    CHECK_THROWS_AS((void)aggregate({bad}), DataError);
}

TEST_CASE("winner flag: argmax with ties to the later column, shift invariant") {
    SubjectResult s;
    s.subject_id = 1;
    s.accuracy = {0.7643, 0.525, 0.5417, 0.7543};
    CHECK(row_winner(s) == 0);  // vision

    SubjectResult tie;
    tie.subject_id = 2;
    tie.accuracy = {0.5, 0.5, 0.3, 0.5};
    CHECK(row_winner(tie) == 3);  // multimodal takes exact ties

    SubjectResult shifted = s;
    for (auto& v : shifted.accuracy) *v = (*v * 0.5) + 0.1;  // monotone rescale
    CHECK(row_winner(shifted) == row_winner(s));

    SubjectResult sparse;
    sparse.subject_id = 3;
    sparse.accuracy[1] = 0.4;
    CHECK(row_winner(sparse) == 1);
}

TEST_CASE("csv table: reference rows render like the source table") {
    const ReportTable table = aggregate(reference_results());
    const std::string csv = emit_table(table, ReportFormat::csv);
    const std::vector<std::string> lines = lines_of(csv);

    CHECK(lines[0] == "Subject,Vision,Audio,EEG,Multimodal,Winner");
    CHECK(lines[17] == "17,83.77,80.83,67.50,89.63,Multimodal");
    CHECK(lines[3] == "3,76.43,52.50,54.17,75.43,Vision");
    CHECK(lines[43] == "Avg.,67.22,58.17,53.51,70.86,Multimodal");
    CHECK(lines[44] == "# delta_vs_vision,3.64");
    CHECK(lines[45] == "# delta_vs_audio,12.69");
    CHECK(lines[46] == "# delta_vs_eeg,17.35");
}

TEST_CASE("markdown table bolds the winner; absent cells render as dashes") {
    SubjectResult s;
    s.subject_id = 4;
    s.accuracy[0] = 0.5;
    s.accuracy[2] = 0.25;
    s.accuracy[3] = 0.75;
    const ReportTable table = aggregate({s});
    const std::string md = emit_table(table, ReportFormat::markdown);
    CHECK(md.find("| 4 | 50.00 | - | 25.00 | **75.00** |") != std::string::npos);

    const std::string csv = emit_table(table, ReportFormat::csv);
    CHECK(csv.find("4,50.00,-,25.00,75.00,Multimodal") != std::string::npos);
}

TEST_CASE("barplot data: counting, ordering, and bit-exact values") {
    const std::vector<SubjectResult> rows = reference_results();
    const ReportTable table = aggregate(rows);
    const std::string text = emit_barplot_data(table);
    const std::vector<std::string> lines = lines_of(text);

    CHECK(lines[0] == "subject,condition,accuracy");
    CHECK(lines.size() == 1 + 42 * 4);

    // subject-major, condition order vision,audio,eeg,multimodal
    CHECK(lines[1].rfind("1,vision,", 0) == 0);
    CHECK(lines[2].rfind("1,audio,", 0) == 0);
    CHECK(lines[3].rfind("1,eeg,", 0) == 0);
    CHECK(lines[4].rfind("1,multimodal,", 0) == 0);
    CHECK(lines[5].rfind("2,vision,", 0) == 0);

    // values round-trip to exactly the table's doubles
    int idx = 1;
    for (const SubjectResult& r : table.rows) {
        for (int c = 0; c < kConditions; ++c) {
            const std::vector<std::string> cols =
                split(lines[static_cast<std::size_t>(idx)], ',');
            const double parsed = parse_float(cols[2], "barplot");
            CHECK(parsed == *r.accuracy[static_cast<std::size_t>(c)]);
            ++idx;
        }
    }
}

TEST_CASE("display rounding does not feed back into stored values") {
    SubjectResult s;
    s.subject_id = 1;
    s.accuracy = {0.123456, 0.2, 0.3, 0.4};
    const ReportTable t1 = aggregate({s});
    // re-aggregate from the object model; full precision is retained
    const ReportTable t2 = aggregate(t1.rows);
    CHECK(*t2.means[0] == *t1.means[0]);
    CHECK(*t2.means[0] == 0.123456);
}

}  // TEST_SUITE
