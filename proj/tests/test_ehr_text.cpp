#include "mergelab/ehr_text.hpp"

#include "mergelab/error.hpp"
#include "mergelab/util.hpp"

#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <string>

using namespace mergelab;

namespace {

const std::filesystem::path kFixtures = MERGELAB_FIXTURE_DIR;
const std::filesystem::path kResources = MERGELAB_RESOURCE_DIR;

PatientRecord sample_record() {
    PatientRecord rec;
    rec.patient_id = "p9";
    rec.outcome = Outcome::deceased;
    rec.sections[SectionKind::Demographics] = {{"age", "71", ""}, {"gender", "F", ""}};
    rec.sections[SectionKind::Diagnosis] = {{"icd", "sepsis", ""}};
    rec.sections[SectionKind::ChartEvents] = {{"heart_rate", "82", "t=08:00"}, {"sbp", "121", ""}};
    rec.sections[SectionKind::Medications] = {{"vancomycin", "1 g IV", ""}};
    rec.sections[SectionKind::Procedures] = {{"intubation", "done", ""}};
    rec.sections[SectionKind::OutputEvents] = {{"urine", "300 ml", "t=12:00"}};
    return rec;
}

} // namespace

TEST_CASE("jsonl fixture loads and round-trips sections") {
    const auto records = load_patients(kFixtures / "patients.jsonl", PatientFormat::record_per_line);
    REQUIRE(records.size() == 3);
    CHECK(records[0].patient_id == "p001");
    CHECK(records[0].outcome == Outcome::survived);
    CHECK(records[1].outcome == Outcome::deceased);
    CHECK(records[2].outcome == Outcome::unknown);
    CHECK(records[0].sections.at(SectionKind::ChartEvents).size() == 2);
    CHECK(records[0].sections.at(SectionKind::ChartEvents)[0].timestamp == "t=08:00");
    CHECK(records[1].sections.count(SectionKind::Procedures) == 0);
}

TEST_CASE("unknown section is rejected with its line number") {
    try {
        load_patients(kFixtures / "patients_bad_section.jsonl", PatientFormat::record_per_line);
        FAIL("expected SchemaViolation");
    } catch (const SchemaViolation& e) {
        const std::string what = e.what();
        CHECK(what.find("Labs") != std::string::npos);
        CHECK(what.find(":2") != std::string::npos);
    }
}

TEST_CASE("duplicate patient ids are rejected") {
    CHECK_THROWS_AS(load_patients(kFixtures / "patients_dup.jsonl", PatientFormat::record_per_line),
                    DuplicatePatientId);
}

TEST_CASE("delimited format aggregates rows per patient") {
    const auto records = load_patients(kFixtures / "patients.tsv", PatientFormat::delimited);
    REQUIRE(records.size() == 2);
    CHECK(records[0].patient_id == "p101");
    CHECK(records[0].sections.at(SectionKind::ChartEvents).size() == 1);
    CHECK(records[0].sections.at(SectionKind::Medications)[0].value == "81 mg");
    CHECK(records[1].outcome == Outcome::deceased);
}

TEST_CASE("empty file loads to an empty list") {
    TempDir tmp;
    const auto path = tmp.path() / "none.jsonl";
    write_text_file(path, "");
    CHECK(load_patients(path, PatientFormat::record_per_line).empty());
}

TEST_CASE("serialization uses the fixed section order and template") {
    const auto rec = sample_record();
    const auto full = serialize_patient(rec, SerializeFilter::full);
    const std::string expected_chart = "ChartEvents: heart_rate=82 (t=08:00); sbp=121";
    CHECK(full.find(expected_chart) != std::string::npos);
    CHECK(full.find("Demographics: age=71; gender=F") == 0); // first line
    CHECK(full.find("OutputEvents: urine=300 ml (t=12:00)") != std::string::npos);
    // section order is fixed
    CHECK(full.find("Demographics:") < full.find("Diagnosis:"));
    CHECK(full.find("Diagnosis:") < full.find("ChartEvents:"));
    CHECK(full.find("ChartEvents:") < full.find("Medications:"));
    CHECK(full.find("Medications:") < full.find("Procedures:"));
    CHECK(full.find("Procedures:") < full.find("OutputEvents:"));
}

TEST_CASE("hard filter keeps only ChartEvents and Medications") {
    const auto rec = sample_record();
    const auto hard = serialize_patient(rec, SerializeFilter::hard);
    CHECK(hard == "ChartEvents: heart_rate=82 (t=08:00); sbp=121\nMedications: vancomycin=1 g IV");

    PatientRecord demo_only;
    demo_only.patient_id = "p0";
    demo_only.sections[SectionKind::Demographics] = {{"age", "40", ""}};
    CHECK(serialize_patient(demo_only, SerializeFilter::hard).empty());
}

TEST_CASE("hard output holds no characters from excluded sections") {
    // excluded sections use a disjoint character set so leakage is visible
    PatientRecord rec;
    rec.patient_id = "pX";
    rec.sections[SectionKind::Demographics] = {{"ZZZ", "QQQ", ""}};
    rec.sections[SectionKind::Diagnosis] = {{"XXX", "WWW", ""}};
    rec.sections[SectionKind::Procedures] = {{"JJJ", "KKK", ""}};
    rec.sections[SectionKind::OutputEvents] = {{"VVV", "UUU", ""}};
    rec.sections[SectionKind::ChartEvents] = {{"hr", "82", "t1"}};
    rec.sections[SectionKind::Medications] = {{"med", "5 mg", ""}};
    const auto hard = serialize_patient(rec, SerializeFilter::hard);
    for (const char c : std::string("ZQXWJKVU")) {
        CHECK(hard.find(c) == std::string::npos);
    }
}

TEST_CASE("prompt templates") {
    const auto mortality = build_prompt("X", "mortality");
    CHECK(mortality.find("Question: Is the patient dead?. Answer (yes or no):") != std::string::npos);
    CHECK(mortality.find("profile: X.") != std::string::npos);
    const auto qe = build_prompt("", "qe");
    CHECK(qe.find("most relevant absent keywords") != std::string::npos);
    CHECK(qe.find("Patient: .") != std::string::npos);
    CHECK_THROWS_AS(build_prompt("X", "nonexistent"), UnknownTemplate);
}

TEST_CASE("prompt templates match the shipped resource files byte for byte") {
    CHECK(std::string(prompt_template("mortality")) ==
          read_text_file(kResources / "prompts" / "mortality.txt"));
    CHECK(std::string(prompt_template("qe")) == read_text_file(kResources / "prompts" / "qe.txt"));
}

TEST_CASE("corpus statistics") {
    SUBCASE("direct count") {
        const auto stats = corpus_stats({"ab 12"});
        CHECK(stats.avg_total_chars == 5.0);
        CHECK(stats.digit_proportion == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(stats.space_proportion == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(stats.letterpunct_proportion == doctest::Approx(0.4).epsilon(1e-12));
    }
    SUBCASE("proportions sum to one") {
        const auto stats = corpus_stats({"line one 123", "another 4 5 6 line!", "tabs\tand\nnewlines"});
        CHECK(std::abs(stats.digit_proportion + stats.space_proportion + stats.letterpunct_proportion -
                       1.0) < 1e-9);
    }
    SUBCASE("permutation invariance") {
        const std::vector<std::string> texts = {"aa 1", "bb 22", "c 333"};
        std::vector<std::string> reversed(texts.rbegin(), texts.rend());
        const auto a = corpus_stats(texts);
        const auto b = corpus_stats(reversed);
        CHECK(a.avg_digit_chars == b.avg_digit_chars);
        CHECK(a.digit_proportion == b.digit_proportion);
    }
    SUBCASE("empty texts are excluded, all-empty rejected") {
        const auto stats = corpus_stats({"", "ab", ""});
        CHECK(stats.avg_total_chars == 2.0);
        CHECK_THROWS_AS(corpus_stats({"", ""}), EmptyCorpus);
        CHECK_THROWS_AS(corpus_stats({}), EmptyCorpus);
    }
}

TEST_CASE("digit proportion rises under the hard filter on numeric-dense sections") {
    const auto records = load_patients(kFixtures / "patients.jsonl", PatientFormat::record_per_line);
    std::vector<std::string> full_texts, hard_texts;
    for (const auto& rec : records) {
        full_texts.push_back(serialize_patient(rec, SerializeFilter::full));
        const auto hard = serialize_patient(rec, SerializeFilter::hard);
        if (!hard.empty()) {
            hard_texts.push_back(hard);
        }
    }
    const auto full_stats = corpus_stats(full_texts);
    const auto hard_stats = corpus_stats(hard_texts);
    CHECK(hard_stats.digit_proportion >= full_stats.digit_proportion);
}
