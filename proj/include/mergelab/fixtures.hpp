#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mergelab {

// Seeded synthetic corpora for the self-contained toy pipeline. All draws
// go through the portable RNG helpers, so a seed pins the exact bytes.

struct DomainFixture {
    std::vector<std::string> letter_corpus; // letter-heavy with rare digits
    std::vector<std::string> digit_corpus;  // digit-heavy with rare letters
    std::vector<std::string> mixed_heldout; // half letter-ish, half digit-ish
};

DomainFixture make_domain_fixture(std::uint64_t seed = 17);

struct LabeledExample {
    std::string id;
    int label = 0;
    std::string text; // scoring context = last character
};

struct LabeledFixture {
    std::vector<std::string> signal_corpus; // context -> outcome transitions present
    std::vector<std::string> noise_corpus;  // same alphabet, no signal
    std::vector<LabeledExample> dataset;
    char pos_symbol = 'y';
    char neg_symbol = 'n';
};

LabeledFixture make_labeled_fixture(std::uint64_t seed = 17);

// Writes letters.txt, digits.txt, mixed.txt (one document per line) and
// labeled.tsv / signal.txt / noise.txt under dir.
void write_fixture_files(const std::filesystem::path& dir, std::uint64_t seed = 17);

} // namespace mergelab
