#include "transnar/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <numeric>

#include "transnar/rng.hpp"

namespace transnar::tasks {

const std::vector<AlgorithmId>& all_algorithms() {
    static const std::vector<AlgorithmId> v = {
        AlgorithmId::articulation_points, AlgorithmId::binary_search,      AlgorithmId::insertion_sort,
        AlgorithmId::jarvis_march,        AlgorithmId::kmp_matcher,        AlgorithmId::matrix_chain_order,
        AlgorithmId::task_scheduling,
    };
    return v;
}

std::string algorithm_name(AlgorithmId id) {
    switch (id) {
        case AlgorithmId::articulation_points: return "articulation_points";
        case AlgorithmId::binary_search: return "binary_search";
        case AlgorithmId::insertion_sort: return "insertion_sort";
        case AlgorithmId::jarvis_march: return "jarvis_march";
        case AlgorithmId::kmp_matcher: return "kmp_matcher";
        case AlgorithmId::matrix_chain_order: return "matrix_chain_order";
        case AlgorithmId::task_scheduling: return "task_scheduling";
    }
    throw std::logic_error("algorithm_name: bad id");
}

AlgorithmId algorithm_from_name(const std::string& name) {
    for (AlgorithmId id : all_algorithms())
        if (algorithm_name(id) == name) return id;
    throw SchemaError("unsupported algorithm: " + name);
}

const TaskSpec& task_spec(AlgorithmId id) {
    static const std::map<AlgorithmId, TaskSpec> specs = {
        {AlgorithmId::articulation_points,
         {AlgorithmId::articulation_points,
          "articulation_points",
          {{"A", 2, Dtype::integer}},
          {"is_cut", 1, Dtype::integer}}},
        {AlgorithmId::binary_search,
         {AlgorithmId::binary_search,
          "binary_search",
          {{"key", 1, Dtype::real}, {"target", 0, Dtype::real}},
          {"return", 0, Dtype::integer}}},
        {AlgorithmId::insertion_sort,
         {AlgorithmId::insertion_sort, "insertion_sort", {{"key", 1, Dtype::real}}, {"pred", 1, Dtype::real}}},
        {AlgorithmId::jarvis_march,
         {AlgorithmId::jarvis_march,
          "jarvis_march",
          {{"x", 1, Dtype::real}, {"y", 1, Dtype::real}},
          {"in_hull", 1, Dtype::integer}}},
        {AlgorithmId::kmp_matcher,
         {AlgorithmId::kmp_matcher,
          "kmp_matcher",
          {{"string", 1, Dtype::integer}, {"key", 1, Dtype::integer}},
          {"match", 0, Dtype::integer}}},
        {AlgorithmId::matrix_chain_order,
         {AlgorithmId::matrix_chain_order, "matrix_chain_order", {{"p", 1, Dtype::real}}, {"s", 2, Dtype::integer}}},
        {AlgorithmId::task_scheduling,
         {AlgorithmId::task_scheduling,
          "task_scheduling",
          {{"d", 1, Dtype::integer}, {"w", 1, Dtype::real}},
          {"selected", 1, Dtype::integer}}},
    };
    return specs.at(id);
}

const Array& ProblemInstance::input(const std::string& name) const {
    for (const auto& [n, a] : inputs)
        if (n == name) return a;
    throw SchemaError("missing input field: " + name);
}

double round_3sig(double v) {
    if (v == 0.0 || !std::isfinite(v)) return v == 0.0 ? 0.0 : v;
    // Route through the decimal representation so the stored value is exactly
    // the one that renders with 3 significant digits.
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2e", v);
    return std::strtod(buf, nullptr);
}

void validate_inputs(AlgorithmId algorithm, const FieldList& inputs, long size) {
    const TaskSpec& spec = task_spec(algorithm);
    if (size < 1) throw SchemaError(spec.name + ": size must be >= 1");
    if (inputs.size() != spec.inputs.size()) throw SchemaError(spec.name + ": wrong number of input fields");
    for (size_t i = 0; i < inputs.size(); ++i) {
        const auto& [name, arr] = inputs[i];
        const FieldSpec& fs = spec.inputs[i];
        if (name != fs.name) throw SchemaError(spec.name + ": expected field '" + fs.name + "', got '" + name + "'");
        if (arr.rank != fs.rank) throw SchemaError(spec.name + ": field '" + name + "' has wrong rank");
        const long want = fs.rank == 0 ? 1 : (fs.rank == 1 ? size : size * size);
        if (arr.numel() != want) throw SchemaError(spec.name + ": field '" + name + "' has wrong length");
        if (fs.dtype == Dtype::integer)
            for (double x : arr.data)
                if (x != std::floor(x)) throw SchemaError(spec.name + ": field '" + name + "' must be integral");
    }
    if (algorithm == AlgorithmId::articulation_points) {
        const auto& a = inputs[0].second;
        for (long i = 0; i < size; ++i)
            for (long j = 0; j < size; ++j) {
                const double v = a.data[static_cast<size_t>(i * size + j)];
                if (v != 0.0 && v != 1.0) throw SchemaError("articulation_points: A must be binary");
                if (v != a.data[static_cast<size_t>(j * size + i)])
                    throw SchemaError("articulation_points: A must be symmetric");
            }
    }
    if (algorithm == AlgorithmId::binary_search) {
        const auto& key = inputs[0].second;
        for (long i = 0; i + 1 < size; ++i)
            if (key.data[static_cast<size_t>(i)] > key.data[static_cast<size_t>(i + 1)])
                throw SchemaError("binary_search: key must be sorted ascending");
    }
}

namespace {

Array make_scalar(Dtype dt, double v) { return Array{dt, 0, Shape{}, {v}}; }
Array make_vector(Dtype dt, std::vector<double> v) {
    Array a{dt, 1, Shape{static_cast<long>(v.size())}, std::move(v)};
    return a;
}
Array make_matrix(Dtype dt, long n, std::vector<double> v) {
    Array a{dt, 2, Shape{n, n}, std::move(v)};
    return a;
}

// --- articulation points: brute force component counting -------------------

long component_count(const std::vector<double>& adj, long n, long skip) {
    std::vector<int> seen(static_cast<size_t>(n), 0);
    long comps = 0;
    for (long s = 0; s < n; ++s) {
        if (s == skip || seen[static_cast<size_t>(s)]) continue;
        ++comps;
        std::vector<long> stack{s};
        seen[static_cast<size_t>(s)] = 1;
        while (!stack.empty()) {
            const long u = stack.back();
            stack.pop_back();
            for (long v = 0; v < n; ++v) {
                if (v == skip || v == u || seen[static_cast<size_t>(v)]) continue;
                if (adj[static_cast<size_t>(u * n + v)] != 0.0) {
                    seen[static_cast<size_t>(v)] = 1;
                    stack.push_back(v);
                }
            }
        }
    }
    return comps;
}

FieldList solve_articulation_points(const FieldList& in, long n) {
    const auto& a = in[0].second.data;
    const long base = component_count(a, n, -1);
    std::vector<double> cut(static_cast<size_t>(n), 0.0);
    for (long v = 0; v < n; ++v)
        if (component_count(a, n, v) > base) cut[static_cast<size_t>(v)] = 1.0;
    return {{"is_cut", make_vector(Dtype::integer, std::move(cut))}};
}

// --- binary search: insertion index = count of keys strictly below target --

FieldList solve_binary_search(const FieldList& in, long n) {
    const auto& key = in[0].second.data;
    const double target = in[1].second.scalar();
    long lo = 0, hi = n;
    while (lo < hi) {
        const long mid = (lo + hi) / 2;
        if (key[static_cast<size_t>(mid)] < target)
            lo = mid + 1;
        else
            hi = mid;
    }
    return {{"return", make_scalar(Dtype::integer, static_cast<double>(lo))}};
}

FieldList solve_insertion_sort(const FieldList& in, long) {
    std::vector<double> key = in[0].second.data;
    // classic in-place insertion sort; stable, so equal keys keep input order
    for (size_t i = 1; i < key.size(); ++i) {
        const double x = key[i];
        size_t j = i;
        while (j > 0 && key[j - 1] > x) {
            key[j] = key[j - 1];
            --j;
        }
        key[j] = x;
    }
    return {{"pred", make_vector(Dtype::real, std::move(key))}};
}

// --- convex hull membership (Andrew monotone chain, strict turns) ----------

FieldList solve_jarvis_march(const FieldList& in, long n) {
    const auto& xs = in[0].second.data;
    const auto& ys = in[1].second.data;
    std::vector<long> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](long a, long b) {
        if (xs[static_cast<size_t>(a)] != xs[static_cast<size_t>(b)])
            return xs[static_cast<size_t>(a)] < xs[static_cast<size_t>(b)];
        if (ys[static_cast<size_t>(a)] != ys[static_cast<size_t>(b)])
            return ys[static_cast<size_t>(a)] < ys[static_cast<size_t>(b)];
        return a < b;  // coincident points: lowest index first
    });
    // drop coincident duplicates: only the lowest-index copy may be a vertex
    std::vector<long> pts;
    for (long i : idx) {
        if (!pts.empty()) {
            const long p = pts.back();
            if (xs[static_cast<size_t>(p)] == xs[static_cast<size_t>(i)] &&
                ys[static_cast<size_t>(p)] == ys[static_cast<size_t>(i)])
                continue;
        }
        pts.push_back(i);
    }
    std::vector<double> mask(static_cast<size_t>(n), 0.0);
    if (pts.size() <= 2) {
        for (long i : pts) mask[static_cast<size_t>(i)] = 1.0;
        return {{"in_hull", make_vector(Dtype::integer, std::move(mask))}};
    }
    auto cross = [&](long o, long a, long b) {
        return (xs[static_cast<size_t>(a)] - xs[static_cast<size_t>(o)]) *
                   (ys[static_cast<size_t>(b)] - ys[static_cast<size_t>(o)]) -
               (ys[static_cast<size_t>(a)] - ys[static_cast<size_t>(o)]) *
                   (xs[static_cast<size_t>(b)] - xs[static_cast<size_t>(o)]);
    };
    // strict turns only: collinear interior points are not hull vertices; the
    // epsilon absorbs float noise on exactly-collinear 3-digit coordinates
    constexpr double kEps = 1e-9;
    auto build = [&](bool upper) {
        std::vector<long> h;
        for (size_t ii = 0; ii < pts.size(); ++ii) {
            const long i = pts[upper ? pts.size() - 1 - ii : ii];
            while (h.size() >= 2 && cross(h[h.size() - 2], h[h.size() - 1], i) <= kEps) h.pop_back();
            h.push_back(i);
        }
        return h;
    };
    for (long i : build(false)) mask[static_cast<size_t>(i)] = 1.0;
    for (long i : build(true)) mask[static_cast<size_t>(i)] = 1.0;
    return {{"in_hull", make_vector(Dtype::integer, std::move(mask))}};
}

// --- KMP matcher ------------------------------------------------------------
// Nodes hold a combined sequence: 'string' flags each position as haystack (0,
// prefix) or needle (1, suffix); 'key' holds the character values. The answer
// is the haystack index of the first needle occurrence, 0 when absent.

FieldList solve_kmp_matcher(const FieldList& in, long n) {
    const auto& seg = in[0].second.data;
    const auto& ch = in[1].second.data;
    long split = n;
    for (long i = 0; i < n; ++i)
        if (seg[static_cast<size_t>(i)] != 0.0) {
            split = i;
            break;
        }
    for (long i = split; i < n; ++i)
        if (seg[static_cast<size_t>(i)] != 1.0)
            throw SchemaError("kmp_matcher: 'string' must be a 0-block then a 1-block");
    const long hay = split, m = n - split;
    if (m < 1 || hay < 1) throw SchemaError("kmp_matcher: need nonempty haystack and needle");
    // failure function over the needle
    std::vector<long> fail(static_cast<size_t>(m), 0);
    for (long i = 1; i < m; ++i) {
        long k = fail[static_cast<size_t>(i - 1)];
        while (k > 0 && ch[static_cast<size_t>(split + i)] != ch[static_cast<size_t>(split + k)])
            k = fail[static_cast<size_t>(k - 1)];
        if (ch[static_cast<size_t>(split + i)] == ch[static_cast<size_t>(split + k)]) ++k;
        fail[static_cast<size_t>(i)] = k;
    }
    long match = 0;
    long k = 0;
    bool found = false;
    for (long i = 0; i < hay && !found; ++i) {
        while (k > 0 && ch[static_cast<size_t>(i)] != ch[static_cast<size_t>(split + k)])
            k = fail[static_cast<size_t>(k - 1)];
        if (ch[static_cast<size_t>(i)] == ch[static_cast<size_t>(split + k)]) ++k;
        if (k == m) {
            match = i - m + 1;
            found = true;
        }
    }
    return {{"match", make_scalar(Dtype::integer, static_cast<double>(match))}};
}

// --- matrix chain order -----------------------------------------------------
// p holds the N dimension values of an (N-1)-matrix chain. s[i][j] (1-based
// matrix indices stored in an N x N grid, zero elsewhere) is the optimal split,
// lowest index on ties.

FieldList solve_matrix_chain_order(const FieldList& in, long n) {
    const auto& p = in[0].second.data;
    const long nm = n - 1;  // number of matrices
    std::vector<double> m(static_cast<size_t>((nm + 1) * (nm + 1)), 0.0);
    std::vector<double> s(static_cast<size_t>(n * n), 0.0);
    for (long len = 2; len <= nm; ++len)
        for (long i = 1; i + len - 1 <= nm; ++i) {
            const long j = i + len - 1;
            double best = std::numeric_limits<double>::infinity();
            long bestk = i;
            for (long k = i; k < j; ++k) {
                const double cost = m[static_cast<size_t>(i * (nm + 1) + k)] +
                                    m[static_cast<size_t>((k + 1) * (nm + 1) + j)] +
                                    p[static_cast<size_t>(i - 1)] * p[static_cast<size_t>(k)] *
                                        p[static_cast<size_t>(j)];
                if (cost < best) {
                    best = cost;
                    bestk = k;
                }
            }
            m[static_cast<size_t>(i * (nm + 1) + j)] = best;
            s[static_cast<size_t>(i * n + j)] = static_cast<double>(bestk);
        }
    return {{"s", make_matrix(Dtype::integer, n, std::move(s))}};
}

// --- task scheduling ---------------------------------------------------------
// Greedy by decreasing weight (stable: ties keep lower index first); task i is
// accepted iff the number already accepted is below its deadline.

FieldList solve_task_scheduling(const FieldList& in, long n) {
    const auto& d = in[0].second.data;
    const auto& w = in[1].second.data;
    std::vector<long> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
        return w[static_cast<size_t>(a)] > w[static_cast<size_t>(b)];
    });
    std::vector<double> sel(static_cast<size_t>(n), 0.0);
    long t = 0;
    for (long i : order)
        if (t + 1 <= static_cast<long>(d[static_cast<size_t>(i)])) {
            sel[static_cast<size_t>(i)] = 1.0;
            ++t;
        }
    return {{"selected", make_vector(Dtype::integer, std::move(sel))}};
}

}  // namespace

FieldList solve(AlgorithmId algorithm, const FieldList& inputs, long size) {
    validate_inputs(algorithm, inputs, size);
    switch (algorithm) {
        case AlgorithmId::articulation_points: return solve_articulation_points(inputs, size);
        case AlgorithmId::binary_search: return solve_binary_search(inputs, size);
        case AlgorithmId::insertion_sort: return solve_insertion_sort(inputs, size);
        case AlgorithmId::jarvis_march: return solve_jarvis_march(inputs, size);
        case AlgorithmId::kmp_matcher: return solve_kmp_matcher(inputs, size);
        case AlgorithmId::matrix_chain_order: return solve_matrix_chain_order(inputs, size);
        case AlgorithmId::task_scheduling: return solve_task_scheduling(inputs, size);
    }
    throw std::logic_error("solve: bad algorithm");
}

ProblemInstance instance_from_inputs(AlgorithmId algorithm, FieldList inputs) {
    const TaskSpec& spec = task_spec(algorithm);
    long size = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        if (spec.inputs.size() > i && spec.inputs[i].rank == 1) {
            size = inputs[i].second.numel();
            break;
        }
        if (spec.inputs.size() > i && spec.inputs[i].rank == 2) {
            size = inputs[i].second.shape.at(0);
            break;
        }
    }
    if (size == 0) throw SchemaError(spec.name + ": cannot infer size from inputs");
    ProblemInstance inst;
    inst.algorithm = algorithm;
    inst.size = size;
    inst.inputs = std::move(inputs);
    inst.outputs = solve(algorithm, inst.inputs, size);
    return inst;
}

namespace {

std::vector<double> sample_unit_floats(Rng& rng, long n) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = round_3sig(rng.uniform());
    return v;
}

FieldList sample_inputs(AlgorithmId algorithm, long n, Rng& rng) {
    switch (algorithm) {
        case AlgorithmId::articulation_points: {
            // Erdos-Renyi with density drawn per instance; self-loops allowed,
            // matching the sparse undirected graphs of the sample fixtures.
            const double p = rng.uniform(0.05, 0.5);
            std::vector<double> a(static_cast<size_t>(n * n), 0.0);
            for (long i = 0; i < n; ++i)
                for (long j = i; j < n; ++j) {
                    const double v = rng.bernoulli(p) ? 1.0 : 0.0;
                    a[static_cast<size_t>(i * n + j)] = v;
                    a[static_cast<size_t>(j * n + i)] = v;
                }
            return {{"A", make_matrix(Dtype::integer, n, std::move(a))}};
        }
        case AlgorithmId::binary_search: {
            auto key = sample_unit_floats(rng, n);
            std::sort(key.begin(), key.end());
            const double target = round_3sig(rng.uniform());
            return {{"key", make_vector(Dtype::real, std::move(key))},
                    {"target", make_scalar(Dtype::real, target)}};
        }
        case AlgorithmId::insertion_sort:
            return {{"key", make_vector(Dtype::real, sample_unit_floats(rng, n))}};
        case AlgorithmId::jarvis_march: {
            std::vector<double> x(static_cast<size_t>(n)), y(static_cast<size_t>(n));
            for (auto& v : x) v = round_3sig(rng.normal());
            for (auto& v : y) v = round_3sig(rng.normal());
            return {{"x", make_vector(Dtype::real, std::move(x))},
                    {"y", make_vector(Dtype::real, std::move(y))}};
        }
        case AlgorithmId::kmp_matcher: {
            const long max_m = std::max<long>(1, std::min(n / 2, n - 1));
            const long m = rng.randint(1, max_m);
            const long hay = n - m;
            std::vector<double> seg(static_cast<size_t>(n), 0.0), ch(static_cast<size_t>(n), 0.0);
            for (long i = hay; i < n; ++i) seg[static_cast<size_t>(i)] = 1.0;
            for (long i = 0; i < n; ++i) ch[static_cast<size_t>(i)] = static_cast<double>(rng.randint(0, 3));
            // plant the needle half the time so matches are not vanishingly rare
            if (hay >= m && rng.bernoulli(0.5)) {
                const long at = rng.randint(0, hay - m);
                for (long i = 0; i < m; ++i)
                    ch[static_cast<size_t>(at + i)] = ch[static_cast<size_t>(hay + i)];
            }
            return {{"string", make_vector(Dtype::integer, std::move(seg))},
                    {"key", make_vector(Dtype::integer, std::move(ch))}};
        }
        case AlgorithmId::matrix_chain_order:
            return {{"p", make_vector(Dtype::real, sample_unit_floats(rng, n))}};
        case AlgorithmId::task_scheduling: {
            std::vector<double> d(static_cast<size_t>(n));
            for (auto& v : d) v = static_cast<double>(rng.randint(1, n));
            return {{"d", make_vector(Dtype::integer, std::move(d))},
                    {"w", make_vector(Dtype::real, sample_unit_floats(rng, n))}};
        }
    }
    throw std::logic_error("sample_inputs: bad algorithm");
}

}  // namespace

ProblemInstance generate_instance(AlgorithmId algorithm, long size, uint64_t seed) {
    if (size < 2) throw SchemaError("generate_instance: size must be >= 2");
    Rng rng(mix_seed(hash_str(algorithm_name(algorithm)), static_cast<uint64_t>(size), seed));
    ProblemInstance inst;
    inst.algorithm = algorithm;
    inst.size = size;
    inst.seed = seed;
    inst.inputs = sample_inputs(algorithm, size, rng);
    inst.outputs = solve(algorithm, inst.inputs, size);
    return inst;
}

}  // namespace transnar::tasks
