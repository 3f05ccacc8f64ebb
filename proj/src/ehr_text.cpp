#include "mergelab/ehr_text.hpp"

#include "mergelab/error.hpp"
#include "mergelab/util.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mergelab {

using json = nlohmann::json;

namespace {

constexpr std::string_view kMortalityTemplate =
    "You are an extremely helpful healthcare assistant. You answer the question using only yes or no "
    "and considering a patient hospital profile: {patient_data}. Question: Is the patient dead?. "
    "Answer (yes or no):";

constexpr std::string_view kQeTemplate =
    "You are a highly efficient information retrieval assistant. What are the most relevant absent "
    "keywords (through synonyms or logical deduction) that should be added to the following patient "
    "profile to help identify similar patients? Patient: {patient_data}. Keywords: ";

} // namespace

std::string_view section_name(SectionKind kind) {
    switch (kind) {
    case SectionKind::Demographics:
        return "Demographics";
    case SectionKind::Diagnosis:
        return "Diagnosis";
    case SectionKind::ChartEvents:
        return "ChartEvents";
    case SectionKind::Medications:
        return "Medications";
    case SectionKind::Procedures:
        return "Procedures";
    case SectionKind::OutputEvents:
        return "OutputEvents";
    }
    return "?";
}

std::optional<SectionKind> section_from_name(std::string_view name) {
    for (const auto kind : kSectionOrder) {
        if (section_name(kind) == name) {
            return kind;
        }
    }
    return std::nullopt;
}

namespace {

Outcome outcome_from_text(std::string_view text, std::string_view where) {
    if (text.empty() || text == "unknown") {
        return Outcome::unknown;
    }
    if (text == "deceased") {
        return Outcome::deceased;
    }
    if (text == "survived") {
        return Outcome::survived;
    }
    throw SchemaViolation(std::string(where) + ": outcome must be deceased/survived/unknown, got '" +
                          std::string(text) + "'");
}

SectionKind require_section(std::string_view name, std::string_view where) {
    const auto kind = section_from_name(name);
    if (!kind) {
        throw SchemaViolation(std::string(where) + ": unknown section '" + std::string(name) + "'");
    }
    return *kind;
}

std::vector<PatientRecord> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open patients file: " + path.string());
    }
    std::vector<PatientRecord> records;
    std::map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw SchemaViolation(where + ": not a JSON object");
        }
        PatientRecord rec;
        if (!j.contains("patient_id") || !j["patient_id"].is_string()) {
            throw SchemaViolation(where + ": patient_id missing or not a string");
        }
        rec.patient_id = j["patient_id"].get<std::string>();
        if (seen.count(rec.patient_id)) {
            throw DuplicatePatientId(where + ": patient '" + rec.patient_id + "' already declared at line " +
                                     std::to_string(seen[rec.patient_id]));
        }
        seen[rec.patient_id] = line_no;
        if (j.contains("outcome") && !j["outcome"].is_null()) {
            rec.outcome = outcome_from_text(j["outcome"].get<std::string>(), where);
        }
        if (j.contains("sections")) {
            if (!j["sections"].is_object()) {
                throw SchemaViolation(where + ": sections must be an object");
            }
            for (const auto& [sname, entries] : j["sections"].items()) {
                const auto kind = require_section(sname, where);
                if (!entries.is_array()) {
                    throw SchemaViolation(where + ": section '" + sname + "' must be an array");
                }
                for (const auto& e : entries) {
                    FeatureEntry fe;
                    if (!e.contains("name") || !e["name"].is_string() || e["name"].get<std::string>().empty()) {
                        throw SchemaViolation(where + ": feature name missing or empty");
                    }
                    fe.name = e["name"].get<std::string>();
                    if (e.contains("value")) {
                        fe.value = e["value"].is_string() ? e["value"].get<std::string>() : e["value"].dump();
                    }
                    if (e.contains("timestamp") && !e["timestamp"].is_null()) {
                        fe.timestamp = e["timestamp"].is_string() ? e["timestamp"].get<std::string>()
                                                                  : e["timestamp"].dump();
                    }
                    rec.sections[kind].push_back(std::move(fe));
                }
            }
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<PatientRecord> load_delimited(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open patients file: " + path.string());
    }
    std::vector<PatientRecord> records;
    std::map<std::string, std::size_t> index_of;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto fields = split(line, '\t');
        if (fields.size() != 6) {
            throw SchemaViolation(where + ": expected 6 tab-separated columns "
                                          "(patient_id, outcome, section, name, value, timestamp)");
        }
        const auto& pid = fields[0];
        if (pid.empty()) {
            throw SchemaViolation(where + ": empty patient_id");
        }
        if (fields[3].empty()) {
            throw SchemaViolation(where + ": empty feature name");
        }
        auto it = index_of.find(pid);
        if (it == index_of.end()) {
            index_of[pid] = records.size();
            records.push_back(PatientRecord{pid, outcome_from_text(fields[1], where), {}});
            it = index_of.find(pid);
        } else {
            const auto outcome = outcome_from_text(fields[1], where);
            if (outcome != records[it->second].outcome) {
                throw SchemaViolation(where + ": conflicting outcome for patient '" + pid + "'");
            }
        }
        const auto kind = require_section(fields[2], where);
        records[it->second].sections[kind].push_back({fields[3], fields[4], fields[5]});
    }
    return records;
}

} // namespace

std::vector<PatientRecord> load_patients(const std::filesystem::path& path, PatientFormat format) {
    return format == PatientFormat::record_per_line ? load_jsonl(path) : load_delimited(path);
}

std::string serialize_patient(const PatientRecord& record, SerializeFilter filter) {
    std::ostringstream out;
    bool first_section = true;
    for (const auto kind : kSectionOrder) {
        if (filter == SerializeFilter::hard && kind != SectionKind::ChartEvents &&
            kind != SectionKind::Medications) {
            continue;
        }
        const auto it = record.sections.find(kind);
        if (it == record.sections.end() || it->second.empty()) {
            continue;
        }
        if (!first_section) {
            out << '\n';
        }
        first_section = false;
        out << section_name(kind) << ": ";
        for (std::size_t i = 0; i < it->second.size(); ++i) {
            const auto& e = it->second[i];
            if (i) {
                out << "; ";
            }
            out << e.name << '=' << e.value;
            if (!e.timestamp.empty()) {
                out << " (" << e.timestamp << ')';
            }
        }
    }
    return out.str();
}

std::string_view prompt_template(std::string_view template_id) {
    if (template_id == "mortality") {
        return kMortalityTemplate;
    }
    if (template_id == "qe") {
        return kQeTemplate;
    }
    throw UnknownTemplate("unknown prompt template '" + std::string(template_id) + "'");
}

std::string build_prompt(std::string_view patient_text, std::string_view template_id) {
    const auto tmpl = prompt_template(template_id);
    const auto slot = tmpl.find("{patient_data}");
    std::string out;
    out.reserve(tmpl.size() + patient_text.size());
    out.append(tmpl.substr(0, slot));
    out.append(patient_text);
    out.append(tmpl.substr(slot + std::string_view("{patient_data}").size()));
    return out;
}

TextStats corpus_stats(const std::vector<std::string>& texts) {
    std::int64_t n_texts = 0;
    std::int64_t digits = 0;
    std::int64_t spaces = 0;
    std::int64_t other = 0;
    for (const auto& t : texts) {
        if (t.empty()) {
            continue; // zero-length texts carry no information; not averaged as zeros
        }
        ++n_texts;
        for (const char c : t) {
            if (c >= '0' && c <= '9') {
                ++digits;
            } else if (c == ' ' || c == '\t' || c == '\n') {
                ++spaces;
            } else {
                ++other;
            }
        }
    }
    if (n_texts == 0) {
        throw EmptyCorpus("corpus_stats needs at least one non-empty text");
    }
    const double total = static_cast<double>(digits + spaces + other);
    TextStats stats;
    stats.avg_total_chars = total / static_cast<double>(n_texts);
    stats.avg_digit_chars = static_cast<double>(digits) / static_cast<double>(n_texts);
    stats.avg_space_chars = static_cast<double>(spaces) / static_cast<double>(n_texts);
    stats.avg_letterpunct_chars = static_cast<double>(other) / static_cast<double>(n_texts);
    stats.digit_proportion = static_cast<double>(digits) / total;
    stats.space_proportion = static_cast<double>(spaces) / total;
    stats.letterpunct_proportion = static_cast<double>(other) / total;
    return stats;
}

} // namespace mergelab
