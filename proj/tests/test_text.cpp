#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "test_util.hpp"
#include "transnar/tasks.hpp"
#include "transnar/text_codec.hpp"

using namespace transnar;
using tasks::AlgorithmId;

static const char* kGoldenPath = TRANSNAR_SOURCE_DIR "/tests/fixtures/golden_samples.json";

TEST_CASE("golden fixtures render byte-identically and targets parse to oracle outputs") {
    auto samples = testutil::load_golden(kGoldenPath);
    REQUIRE(samples.size() == 7);
    for (const auto& s : samples) {
        auto inst = tasks::instance_from_inputs(s.algorithm, s.inputs);
        auto ex = text::render_text(inst);
        CHECK(ex.prompt == s.prompt);
        CHECK(ex.target == s.target);
        // rendered size-4 sample lengths under the character tokenizer,
        // recorded for reference (the counts depend on the tokenizer)
        MESSAGE(tasks::algorithm_name(s.algorithm),
                " chars=", ex.full().size(), " tokens=", text::vocab().tokenize(ex.full()).size());
        auto parsed = text::parse_output(s.target, s.algorithm);
        REQUIRE(parsed.ok());
        const auto& out = inst.output();
        REQUIRE(parsed.values.size() == static_cast<size_t>(out.numel()));
        for (size_t i = 0; i < parsed.values.size(); ++i)
            CHECK(parsed.values[i] == doctest::Approx(out.data[i]).epsilon(1e-9));
    }
}

TEST_CASE("format_real: 3 significant digits, positional, trimmed") {
    CHECK(text::format_real(0.011) == "0.011");
    CHECK(text::format_real(0.42) == "0.42");
    CHECK(text::format_real(0.1) == "0.1");
    CHECK(text::format_real(-1.22) == "-1.22");
    CHECK(text::format_real(2.0) == "2");
    CHECK(text::format_real(0.0) == "0");
    CHECK(text::format_real(0.0000543) == "0.0000543");
    CHECK(text::format_real(10.1) == "10.1");
    CHECK(text::format_real(1.0) == "1");
    CHECK(text::format_real(-0.000443) == "-0.000443");
}

TEST_CASE("render is injective over random instances of one task and size") {
    std::set<std::string> seen;
    for (uint64_t seed = 0; seed < 300; ++seed) {
        auto inst = tasks::generate_instance(AlgorithmId::insertion_sort, 5, seed);
        seen.insert(text::render_text(inst).prompt);
    }
    CHECK(seen.size() == 300);  // collisions would mean a lossy rendering
}

TEST_CASE("tokenizer: round trips") {
    const auto& v = text::vocab();
    CHECK(v.detokenize(v.tokenize("")) == "");
    CHECK(v.detokenize(v.tokenize("pred: [0.5]")) == "pred: [0.5]");
    auto samples = testutil::load_golden(kGoldenPath);
    for (const auto& s : samples) CHECK(v.detokenize(v.tokenize(s.prompt + s.target)) == s.prompt + s.target);
    CHECK(v.tokenize("").size() == 2);  // [BOS, EOS]
}

TEST_CASE("tokenizer: out-of-vocabulary reports the position") {
    try {
        text::vocab().tokenize("ab#cd");
        FAIL("expected TokenizeError");
    } catch (const text::TokenizeError& e) {
        CHECK(e.position == 2);
    }
}

TEST_CASE("tokenizer: detokenize stops at EOS and skips pad") {
    const auto& v = text::vocab();
    auto ids = v.tokenize("ab");
    ids.push_back(v.char_id('z'));  // after EOS: ignored
    ids.insert(ids.begin(), text::Vocabulary::kPad);
    CHECK(v.detokenize(ids) == "ab");
}

TEST_CASE("vocabulary file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "transnar_vocab_test.txt";
    text::vocab().write_file(path.string());
    auto v2 = text::Vocabulary::read_file(path.string());
    CHECK(v2 == text::vocab());
    std::filesystem::remove(path);
}

TEST_CASE("parse_output: accepted forms") {
    auto p = text::parse_output("[0.081 0.561 0.565 0.892]", AlgorithmId::insertion_sort);
    REQUIRE(p.ok());
    CHECK(p.values == std::vector<double>{0.081, 0.561, 0.565, 0.892});
    CHECK_FALSE(p.all_integral);

    auto s = text::parse_output("2", AlgorithmId::binary_search);
    REQUIRE(s.ok());
    CHECK(s.values == std::vector<double>{2});
    CHECK(s.all_integral);

    auto m = text::parse_output("[[0 0], [1 2]]", AlgorithmId::matrix_chain_order);
    REQUIRE(m.ok());
    CHECK(m.row_lengths == std::vector<long>{2, 2});

    // ragged matrices parse; the shape score rejects them later
    auto ragged = text::parse_output("[[0 0 0], [1]]", AlgorithmId::matrix_chain_order);
    REQUIRE(ragged.ok());
    CHECK(ragged.row_lengths == std::vector<long>{3, 1});

    // whitespace runs normalize away
    auto ws = text::parse_output("  [0.1   0.2]\n", AlgorithmId::insertion_sort);
    REQUIRE(ws.ok());
    CHECK(ws.values.size() == 2);
}

TEST_CASE("parse_output: rejections with machine-readable reasons") {
    CHECK(text::parse_output("[0.1 abc]", AlgorithmId::insertion_sort).reason == "illicit_character");
    CHECK(text::parse_output("", AlgorithmId::insertion_sort).reason == "empty");
    CHECK(text::parse_output("2", AlgorithmId::insertion_sort).reason == "malformed_vector");
    CHECK(text::parse_output("[1 2] tail", AlgorithmId::insertion_sort).reason == "illicit_character");
    CHECK(text::parse_output("[1 2] [3]", AlgorithmId::insertion_sort).reason == "trailing_garbage");
    CHECK(text::parse_output("[1 2", AlgorithmId::insertion_sort).reason == "malformed_vector");
    CHECK(text::parse_output("[1 2]", AlgorithmId::binary_search).reason == "malformed_number");
    CHECK(text::parse_output("1.2.3", AlgorithmId::binary_search).reason == "trailing_garbage");
    CHECK_FALSE(text::parse_output("--5", AlgorithmId::binary_search).ok());
}

TEST_CASE("parse(render(x).target) is ok and equals outputs; re-render is a fixpoint") {
    for (AlgorithmId id : tasks::all_algorithms()) {
        for (uint64_t seed = 0; seed < 50; ++seed) {
            auto inst = tasks::generate_instance(id, 6, seed);
            auto ex = text::render_text(inst);
            auto parsed = text::parse_output(ex.target, id);
            REQUIRE(parsed.ok());
            const auto& out = inst.output();
            REQUIRE(parsed.values.size() == static_cast<size_t>(out.numel()));
            for (size_t i = 0; i < parsed.values.size(); ++i)
                CHECK(parsed.values[i] == doctest::Approx(out.data[i]).epsilon(1e-12));
            // fixpoint: re-rendering the parsed values reproduces the string
            tasks::Array round = out;
            round.data = parsed.values;
            CHECK(text::format_array(round) == ex.target);
        }
    }
}
