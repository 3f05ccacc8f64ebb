#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mergelab {

enum class SectionKind { Demographics, Diagnosis, ChartEvents, Medications, Procedures, OutputEvents };

constexpr std::array<SectionKind, 6> kSectionOrder = {
    SectionKind::Demographics, SectionKind::Diagnosis,   SectionKind::ChartEvents,
    SectionKind::Medications,  SectionKind::Procedures, SectionKind::OutputEvents,
};

std::string_view section_name(SectionKind kind);
std::optional<SectionKind> section_from_name(std::string_view name);

struct FeatureEntry {
    std::string name;
    std::string value;
    std::string timestamp; // empty = absent
};

enum class Outcome { unknown, deceased, survived };

struct PatientRecord {
    std::string patient_id;
    Outcome outcome = Outcome::unknown;
    std::map<SectionKind, std::vector<FeatureEntry>> sections;
};

enum class PatientFormat { record_per_line, delimited };

// record_per_line: one JSON object per line
//   {"patient_id": ..., "outcome": "deceased"|"survived"|null,
//    "sections": {"ChartEvents": [{"name","value","timestamp"?}, ...], ...}}
// delimited: TAB columns patient_id, outcome, section, name, value, timestamp
//   (timestamp may be empty); rows with the same patient_id aggregate.
std::vector<PatientRecord> load_patients(const std::filesystem::path& path, PatientFormat format);

enum class SerializeFilter { full, hard };

// One line per populated section, fixed section order:
//   SectionName: name=value (timestamp); name=value; ...
// hard keeps only ChartEvents and Medications.
std::string serialize_patient(const PatientRecord& record, SerializeFilter filter);

// Substitutes {patient_data} into a stored template ("mortality" or "qe").
std::string build_prompt(std::string_view patient_text, std::string_view template_id);
std::string_view prompt_template(std::string_view template_id);

struct TextStats {
    double avg_total_chars = 0.0;
    double avg_digit_chars = 0.0;
    double avg_space_chars = 0.0;
    double avg_letterpunct_chars = 0.0;
    double digit_proportion = 0.0;
    double space_proportion = 0.0;
    double letterpunct_proportion = 0.0;
};

// digits = [0-9], spaces = space/tab/newline, everything else counts as
// letters+punctuation. Zero-length texts are rejected, not averaged in.
TextStats corpus_stats(const std::vector<std::string>& texts);

} // namespace mergelab
