#include "mergelab/fixtures.hpp"

#include "mergelab/error.hpp"
#include "mergelab/util.hpp"

#include <random>
#include <sstream>

namespace mergelab {

namespace {

constexpr std::string_view kLetters = "abcdefgh";
constexpr std::string_view kDigits = "01234567";

std::string random_doc(std::mt19937_64& rng, std::string_view main_chars, std::string_view rare_chars,
                       std::size_t len, double p_rare) {
    std::string doc;
    doc.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        if (rng_unit(rng) < p_rare) {
            doc.push_back(rare_chars[rng_below(rng, rare_chars.size())]);
        } else {
            doc.push_back(main_chars[rng_below(rng, main_chars.size())]);
        }
    }
    return doc;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::ostringstream ss;
    for (const auto& l : lines) {
        ss << l << '\n';
    }
    return ss.str();
}

} // namespace

DomainFixture make_domain_fixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    DomainFixture fx;
    const std::string coverage = std::string(kLetters) + std::string(kDigits);
    for (int i = 0; i < 60; ++i) {
        fx.letter_corpus.push_back(random_doc(rng, kLetters, kDigits, 40, 0.05));
    }
    fx.letter_corpus.push_back(coverage); // every symbol observed in both corpora
    for (int i = 0; i < 60; ++i) {
        fx.digit_corpus.push_back(random_doc(rng, kDigits, kLetters, 40, 0.05));
    }
    fx.digit_corpus.push_back(coverage);
    for (int i = 0; i < 20; ++i) {
        fx.mixed_heldout.push_back(random_doc(rng, kLetters, kDigits, 40, 0.05));
    }
    for (int i = 0; i < 20; ++i) {
        fx.mixed_heldout.push_back(random_doc(rng, kDigits, kLetters, 40, 0.05));
    }
    return fx;
}

LabeledFixture make_labeled_fixture(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    LabeledFixture fx;
    const std::string contexts_pos = "ac";
    const std::string contexts_neg = "bd";
    const std::string filler = "ef";
    const std::string alphabet = "abcdefny";

    // Signal model sees context -> outcome transitions with 85% fidelity.
    for (int d = 0; d < 50; ++d) {
        std::string doc;
        for (int i = 0; i < 12; ++i) {
            doc.push_back(filler[rng_below(rng, filler.size())]);
            const bool positive = rng_below(rng, 2) == 0;
            const std::string& pool = positive ? contexts_pos : contexts_neg;
            doc.push_back(pool[rng_below(rng, pool.size())]);
            const char expected = positive ? fx.pos_symbol : fx.neg_symbol;
            const char flipped = positive ? fx.neg_symbol : fx.pos_symbol;
            doc.push_back(rng_unit(rng) < 0.85 ? expected : flipped);
        }
        fx.signal_corpus.push_back(doc);
    }
    fx.signal_corpus.push_back(alphabet);

    // Noise model: uniform draws over the same alphabet.
    for (int d = 0; d < 50; ++d) {
        std::string doc;
        for (int i = 0; i < 36; ++i) {
            doc.push_back(alphabet[rng_below(rng, alphabet.size())]);
        }
        fx.noise_corpus.push_back(doc);
    }
    fx.noise_corpus.push_back(alphabet);

    for (int i = 0; i < 40; ++i) {
        LabeledExample ex;
        ex.label = i % 2;
        const std::string& pool = ex.label == 1 ? contexts_pos : contexts_neg;
        char buf[8];
        std::snprintf(buf, sizeof(buf), "e%02d", i);
        ex.id = buf;
        ex.text = std::string(1, pool[rng_below(rng, pool.size())]);
        fx.dataset.push_back(std::move(ex));
    }
    return fx;
}

void write_fixture_files(const std::filesystem::path& dir, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    const auto domain = make_domain_fixture(seed);
    write_text_file(dir / "letters.txt", join_lines(domain.letter_corpus));
    write_text_file(dir / "digits.txt", join_lines(domain.digit_corpus));
    write_text_file(dir / "mixed.txt", join_lines(domain.mixed_heldout));

    const auto labeled = make_labeled_fixture(seed);
    write_text_file(dir / "signal.txt", join_lines(labeled.signal_corpus));
    write_text_file(dir / "noise.txt", join_lines(labeled.noise_corpus));
    std::ostringstream ds;
    for (const auto& ex : labeled.dataset) {
        ds << ex.id << '\t' << ex.label << '\t' << ex.text << '\n';
    }
    write_text_file(dir / "labeled.tsv", ds.str());
}

} // namespace mergelab
