#include "transnar/text_codec.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace transnar::text {

std::string format_real(double v) {
    if (v == 0.0) return "0";
    char ebuf[40];
    std::snprintf(ebuf, sizeof(ebuf), "%.2e", v);
    const char* ep = std::strchr(ebuf, 'e');
    const int expo = std::atoi(ep + 1);
    const int decimals = std::max(0, 2 - expo);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    std::string s(buf);
    if (s.find('.') != std::string::npos) {
        while (!s.empty() && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
}

std::string format_integer(double v) { return std::to_string(std::llround(v)); }

namespace {

std::string format_value(double v, tasks::Dtype dt) {
    return dt == tasks::Dtype::integer ? format_integer(v) : format_real(v);
}

}  // namespace

std::string format_array(const tasks::Array& a) {
    if (a.rank == 0) return format_value(a.data[0], a.dtype);
    std::ostringstream os;
    if (a.rank == 1) {
        os << "[";
        for (long i = 0; i < a.numel(); ++i) os << (i ? " " : "") << format_value(a.data[static_cast<size_t>(i)], a.dtype);
        os << "]";
        return os.str();
    }
    const long n = a.shape.at(0);
    os << "[";
    for (long i = 0; i < n; ++i) {
        os << (i ? ", [" : "[");
        for (long j = 0; j < n; ++j)
            os << (j ? " " : "") << format_value(a.data[static_cast<size_t>(i * n + j)], a.dtype);
        os << "]";
    }
    os << "]";
    return os.str();
}

TextExample render_text(const tasks::ProblemInstance& inst) {
    const tasks::TaskSpec& spec = tasks::task_spec(inst.algorithm);
    std::ostringstream prompt;
    prompt << spec.name << ":\n";
    for (size_t i = 0; i < inst.inputs.size(); ++i) {
        if (i) prompt << ", ";
        prompt << inst.inputs[i].first << ": " << format_array(inst.inputs[i].second);
    }
    prompt << "\n" << spec.output.name << ": ";
    TextExample ex;
    ex.prompt = prompt.str();
    ex.target = format_array(inst.output());
    return ex;
}

// --- tokenizer ----------------------------------------------------------------

Vocabulary::Vocabulary() {
    std::string chars = "\n ,-.";
    for (char c = '0'; c <= '9'; ++c) chars.push_back(c);
    chars += ":[]_";
    for (char c = 'a'; c <= 'z'; ++c) chars.push_back(c);
    id_to_char_.assign(chars.begin(), chars.end());
    char_to_id_.assign(256, -1);
    for (size_t i = 0; i < id_to_char_.size(); ++i)
        char_to_id_[static_cast<unsigned char>(id_to_char_[i])] = static_cast<long>(i) + 3;
}

long Vocabulary::char_id(char c) const { return char_to_id_[static_cast<unsigned char>(c)]; }

std::vector<long> Vocabulary::tokenize(const std::string& text) const {
    std::vector<long> ids;
    ids.reserve(text.size() + 2);
    ids.push_back(kBos);
    for (size_t i = 0; i < text.size(); ++i) {
        const long id = char_id(text[i]);
        if (id < 0)
            throw TokenizeError("out-of-vocabulary character 0x" +
                                    [&] {
                                        char b[8];
                                        std::snprintf(b, sizeof(b), "%02x", static_cast<unsigned char>(text[i]));
                                        return std::string(b);
                                    }() +
                                    " at position " + std::to_string(i),
                                static_cast<long>(i));
        ids.push_back(id);
    }
    ids.push_back(kEos);
    return ids;
}

std::string Vocabulary::detokenize(const std::vector<long>& ids) const {
    std::string out;
    for (long id : ids) {
        if (id == kEos) break;
        if (id == kBos || id == kPad) continue;
        const long ci = id - 3;
        if (ci < 0 || ci >= static_cast<long>(id_to_char_.size()))
            throw std::out_of_range("detokenize: bad token id " + std::to_string(id));
        out.push_back(id_to_char_[static_cast<size_t>(ci)]);
    }
    return out;
}

void Vocabulary::write_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write vocabulary file: " + path);
    f << "charvocab " << version_ << "\n";
    f << "0 <pad>\n1 <bos>\n2 <eos>\n";
    for (size_t i = 0; i < id_to_char_.size(); ++i) {
        char b[8];
        std::snprintf(b, sizeof(b), "0x%02x", static_cast<unsigned char>(id_to_char_[i]));
        f << (i + 3) << " " << b << "\n";
    }
}

Vocabulary Vocabulary::read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read vocabulary file: " + path);
    std::string head, ver;
    f >> head >> ver;
    if (head != "charvocab") throw std::runtime_error("not a vocabulary file: " + path);
    Vocabulary v;
    if (ver != v.version_) throw std::runtime_error("vocabulary version mismatch: " + ver);
    std::vector<char> chars;
    long id = 0;
    std::string tok;
    while (f >> id >> tok) {
        if (tok == "<pad>" || tok == "<bos>" || tok == "<eos>") continue;
        if (tok.rfind("0x", 0) != 0) throw std::runtime_error("bad vocabulary entry: " + tok);
        chars.push_back(static_cast<char>(std::strtol(tok.c_str() + 2, nullptr, 16)));
    }
    if (chars != v.id_to_char_) throw std::runtime_error("vocabulary content mismatch: " + path);
    return v;
}

const Vocabulary& vocab() {
    static const Vocabulary v;
    return v;
}

// --- answer parsing -----------------------------------------------------------

namespace {

struct Cursor {
    const std::string& s;
    size_t i = 0;
    bool done() const { return i >= s.size(); }
    char peek() const { return s[i]; }
    bool eat(char c) {
        if (!done() && s[i] == c) {
            ++i;
            return true;
        }
        return false;
    }
};

/// Collapse whitespace runs (space/newline/tab) to one space and trim ends.
std::string normalize_ws(const std::string& raw) {
    std::string out;
    bool in_ws = true;  // leading ws dropped
    for (char c : raw) {
        if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
            if (!in_ws) out.push_back(' ');
            in_ws = true;
        } else {
            out.push_back(c);
            in_ws = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

bool parse_number(Cursor& c, double& out, bool& integral) {
    const size_t start = c.i;
    if (!c.done() && c.peek() == '-') ++c.i;
    size_t digits = 0;
    while (!c.done() && c.peek() >= '0' && c.peek() <= '9') {
        ++c.i;
        ++digits;
    }
    bool is_int = true;
    if (!c.done() && c.peek() == '.') {
        ++c.i;
        is_int = false;
        size_t frac = 0;
        while (!c.done() && c.peek() >= '0' && c.peek() <= '9') {
            ++c.i;
            ++frac;
        }
        if (frac == 0 && digits == 0) {
            c.i = start;
            return false;
        }
    }
    if (digits == 0 && is_int) {
        c.i = start;
        return false;
    }
    out = std::strtod(c.s.substr(start, c.i - start).c_str(), nullptr);
    integral = is_int;
    return true;
}

ParsedOutput fail(const std::string& reason) {
    ParsedOutput p;
    p.status = ParsedOutput::Status::parse_failure;
    p.reason = reason;
    return p;
}

bool parse_row(Cursor& c, std::vector<double>& values, long& count, bool& all_int) {
    if (!c.eat('[')) return false;
    count = 0;
    if (c.eat(']')) return true;  // empty vector parses; shape scoring rejects it
    while (true) {
        double v = 0;
        bool isint = true;
        if (!parse_number(c, v, isint)) return false;
        values.push_back(v);
        all_int = all_int && isint;
        ++count;
        if (c.eat(']')) return true;
        if (!c.eat(' ')) return false;
    }
}

}  // namespace

ParsedOutput parse_output(const std::string& raw, tasks::AlgorithmId algorithm) {
    const tasks::TaskSpec& spec = tasks::task_spec(algorithm);
    const std::string s = normalize_ws(raw);
    if (s.empty()) return fail("empty");
    for (char ch : s)
        if (!((ch >= '0' && ch <= '9') || ch == '.' || ch == '-' || ch == ' ' || ch == '[' || ch == ']' ||
              ch == ','))
            return fail("illicit_character");

    ParsedOutput p;
    p.rank = spec.output.rank;
    p.all_integral = true;
    Cursor c{s};
    if (spec.output.rank == 0) {
        double v = 0;
        bool isint = true;
        if (!parse_number(c, v, isint)) return fail("malformed_number");
        p.values.push_back(v);
        p.all_integral = isint;
    } else if (spec.output.rank == 1) {
        long count = 0;
        if (!parse_row(c, p.values, count, p.all_integral)) return fail("malformed_vector");
    } else {
        if (!c.eat('[')) return fail("malformed_matrix");
        while (true) {
            long count = 0;
            if (!parse_row(c, p.values, count, p.all_integral)) return fail("malformed_matrix");
            p.row_lengths.push_back(count);
            if (c.eat(']')) break;
            if (!(c.eat(',') && c.eat(' '))) return fail("malformed_matrix");
        }
    }
    if (!c.done()) return fail("trailing_garbage");
    p.status = ParsedOutput::Status::ok;
    return p;
}

}  // namespace transnar::text
