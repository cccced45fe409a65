#pragma once

// Text rendering of task instances (prompt/target split), the fixed
// character vocabulary, and parsing of generated answers back into arrays.

#include <optional>
#include <string>
#include <vector>

#include "transnar/tasks.hpp"

namespace transnar::text {

struct TextExample {
    std::string prompt;  // "name:\nfield: value, field: value\nout: "
    std::string target;  // rendered ground-truth value
    std::string full() const { return prompt + target; }
};

/// 3-significant-digit positional rendering, trailing zeros trimmed ("0.42",
/// "0.011", "2"). Never scientific notation.
std::string format_real(double v);
std::string format_integer(double v);
std::string format_array(const tasks::Array& a);

TextExample render_text(const tasks::ProblemInstance& inst);

// --- tokenizer ---------------------------------------------------------------

struct TokenizeError : std::runtime_error {
    long position;
    TokenizeError(const std::string& msg, long pos) : std::runtime_error(msg), position(pos) {}
};

class Vocabulary {
public:
    static constexpr long kPad = 0;
    static constexpr long kBos = 1;
    static constexpr long kEos = 2;

    Vocabulary();

    long size() const { return static_cast<long>(id_to_char_.size()) + 3; }
    const std::string& version() const { return version_; }

    /// [BOS, chars..., EOS]; throws TokenizeError at the first OOV character.
    std::vector<long> tokenize(const std::string& text) const;

    /// Inverse: skips PAD/BOS, stops at the first EOS.
    std::string detokenize(const std::vector<long>& ids) const;

    long char_id(char c) const;  // -1 if OOV
    void write_file(const std::string& path) const;
    static Vocabulary read_file(const std::string& path);  // validates version/content

    bool operator==(const Vocabulary& o) const { return id_to_char_ == o.id_to_char_; }

private:
    std::string version_ = "char_v1";
    std::vector<char> id_to_char_;  // id = index + 3
    std::vector<long> char_to_id_;  // 256 entries, -1 = OOV
};

const Vocabulary& vocab();  // process-wide singleton

// --- answer parsing ----------------------------------------------------------

struct ParsedOutput {
    enum class Status { ok, parse_failure };
    Status status = Status::parse_failure;
    std::string reason;  // machine-readable failure tag, empty on ok

    int rank = 0;                  // 0 scalar, 1 vector, 2 matrix
    std::vector<double> values;    // flattened row-major
    std::vector<long> row_lengths; // per row, rank 2 only (may be ragged)
    bool all_integral = false;     // every literal had integer syntax

    bool ok() const { return status == Status::ok; }
};

/// Syntactic parse of a generated answer against the task's output type.
/// Shape (lengths) is deliberately not checked here. Never throws.
ParsedOutput parse_output(const std::string& raw, tasks::AlgorithmId algorithm);

}  // namespace transnar::text
