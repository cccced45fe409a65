#include "transnar/graph_schema.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

namespace transnar::graph {

using tasks::AlgorithmId;

const FeatureLayout& feature_layout(AlgorithmId id) {
    static const std::map<AlgorithmId, FeatureLayout> layouts = {
        {AlgorithmId::articulation_points, {{"pos"}, {"A"}, {}}},
        {AlgorithmId::binary_search, {{"pos", "key"}, {}, {"target"}}},
        {AlgorithmId::insertion_sort, {{"pos", "key"}, {}, {}}},
        {AlgorithmId::jarvis_march, {{"pos", "x", "y"}, {}, {}}},
        {AlgorithmId::kmp_matcher, {{"pos", "segment", "ch0", "ch1", "ch2", "ch3"}, {}, {}}},
        {AlgorithmId::matrix_chain_order, {{"pos", "p"}, {}, {}}},
        {AlgorithmId::task_scheduling, {{"pos", "deadline_frac", "w"}, {}, {}}},
    };
    return layouts.at(id);
}

OutputKind output_kind(AlgorithmId id) {
    switch (id) {
        case AlgorithmId::articulation_points:
        case AlgorithmId::jarvis_march:
        case AlgorithmId::task_scheduling: return OutputKind::node_mask;
        case AlgorithmId::insertion_sort: return OutputKind::node_pointer;
        case AlgorithmId::binary_search:
        case AlgorithmId::kmp_matcher: return OutputKind::graph_pointer;
        case AlgorithmId::matrix_chain_order: return OutputKind::edge_pointer;
    }
    throw std::logic_error("output_kind: bad id");
}

long num_output_classes(AlgorithmId id, long size) {
    switch (output_kind(id)) {
        case OutputKind::node_mask: return 2;
        case OutputKind::node_pointer:
        case OutputKind::edge_pointer: return size;
        case OutputKind::graph_pointer: return size + 1;
    }
    throw std::logic_error("num_output_classes");
}

GraphSpec to_graph(const tasks::ProblemInstance& inst) {
    const long n = inst.size;
    const FeatureLayout& fl = feature_layout(inst.algorithm);
    GraphSpec g;
    g.num_nodes = n;
    g.node_features = Tensor<double>::zeros({n, fl.node_dim()});
    g.edge_features = Tensor<double>::zeros({n, n, fl.edge_dim()});
    g.graph_features = Tensor<double>::zeros({fl.graph_dim()});
    g.adjacency = Tensor<uint8_t>(Shape{n, n}, 1);  // fully connected by default

    for (long i = 0; i < n; ++i) g.node_features.at(i, 0) = static_cast<double>(i) / static_cast<double>(n);

    switch (inst.algorithm) {
        case AlgorithmId::articulation_points: {
            const auto& a = inst.input("A").data;
            g.adjacency.fill(0);
            for (long i = 0; i < n; ++i) {
                for (long j = 0; j < n; ++j) {
                    g.edge_features.at(i, j, 0) = a[static_cast<size_t>(i * n + j)];
                    if (a[static_cast<size_t>(i * n + j)] != 0.0) g.adjacency.at(i, j) = 1;
                }
                g.adjacency.at(i, i) = 1;  // aggregation needs a nonempty neighborhood
            }
            break;
        }
        case AlgorithmId::binary_search: {
            const auto& key = inst.input("key").data;
            for (long i = 0; i < n; ++i) g.node_features.at(i, 1) = key[static_cast<size_t>(i)];
            g.graph_features.at(0) = inst.input("target").scalar();
            break;
        }
        case AlgorithmId::insertion_sort: {
            const auto& key = inst.input("key").data;
            for (long i = 0; i < n; ++i) g.node_features.at(i, 1) = key[static_cast<size_t>(i)];
            break;
        }
        case AlgorithmId::jarvis_march: {
            const auto& x = inst.input("x").data;
            const auto& y = inst.input("y").data;
            for (long i = 0; i < n; ++i) {
                g.node_features.at(i, 1) = x[static_cast<size_t>(i)];
                g.node_features.at(i, 2) = y[static_cast<size_t>(i)];
            }
            break;
        }
        case AlgorithmId::kmp_matcher: {
            const auto& seg = inst.input("string").data;
            const auto& ch = inst.input("key").data;
            for (long i = 0; i < n; ++i) {
                g.node_features.at(i, 1) = seg[static_cast<size_t>(i)];
                const long c = static_cast<long>(ch[static_cast<size_t>(i)]);
                if (c < 0 || c > 3) throw tasks::SchemaError("kmp_matcher: character out of alphabet");
                g.node_features.at(i, 2 + c) = 1.0;
            }
            break;
        }
        case AlgorithmId::matrix_chain_order: {
            const auto& p = inst.input("p").data;
            for (long i = 0; i < n; ++i) g.node_features.at(i, 1) = p[static_cast<size_t>(i)];
            break;
        }
        case AlgorithmId::task_scheduling: {
            const auto& d = inst.input("d").data;
            const auto& w = inst.input("w").data;
            for (long i = 0; i < n; ++i) {
                g.node_features.at(i, 1) = d[static_cast<size_t>(i)] / static_cast<double>(n);
                g.node_features.at(i, 2) = w[static_cast<size_t>(i)];
            }
            break;
        }
    }
    return g;
}

tasks::FieldList decode_graph(const GraphSpec& g, AlgorithmId id) {
    const long n = g.num_nodes;
    auto vec = [&](int ch) {
        std::vector<double> v(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i) v[static_cast<size_t>(i)] = g.node_features.at(i, ch);
        return v;
    };
    using tasks::Array;
    using tasks::Dtype;
    auto mkvec = [&](Dtype dt, std::vector<double> v) {
        return Array{dt, 1, Shape{n}, std::move(v)};
    };
    switch (id) {
        case AlgorithmId::articulation_points: {
            std::vector<double> a(static_cast<size_t>(n * n));
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < n; ++j) a[static_cast<size_t>(i * n + j)] = g.edge_features.at(i, j, 0);
            return {{"A", Array{Dtype::integer, 2, Shape{n, n}, std::move(a)}}};
        }
        case AlgorithmId::binary_search:
            return {{"key", mkvec(Dtype::real, vec(1))},
                    {"target", Array{Dtype::real, 0, Shape{}, {g.graph_features.at(0)}}}};
        case AlgorithmId::insertion_sort: return {{"key", mkvec(Dtype::real, vec(1))}};
        case AlgorithmId::jarvis_march:
            return {{"x", mkvec(Dtype::real, vec(1))}, {"y", mkvec(Dtype::real, vec(2))}};
        case AlgorithmId::kmp_matcher: {
            std::vector<double> ch(static_cast<size_t>(n), 0.0);
            for (long i = 0; i < n; ++i)
                for (long c = 0; c < 4; ++c)
                    if (g.node_features.at(i, 2 + c) == 1.0) ch[static_cast<size_t>(i)] = static_cast<double>(c);
            return {{"string", mkvec(Dtype::integer, vec(1))}, {"key", mkvec(Dtype::integer, std::move(ch))}};
        }
        case AlgorithmId::matrix_chain_order: return {{"p", mkvec(Dtype::real, vec(1))}};
        case AlgorithmId::task_scheduling: {
            std::vector<double> d(static_cast<size_t>(n));
            for (long i = 0; i < n; ++i)
                d[static_cast<size_t>(i)] = std::round(g.node_features.at(i, 1) * static_cast<double>(n));
            return {{"d", mkvec(Dtype::integer, std::move(d))}, {"w", mkvec(Dtype::real, vec(2))}};
        }
    }
    throw std::logic_error("decode_graph: bad id");
}

GraphLabels graph_labels(const tasks::ProblemInstance& inst) {
    const long n = inst.size;
    GraphLabels lab;
    lab.kind = output_kind(inst.algorithm);
    const auto& out = inst.output();
    switch (lab.kind) {
        case OutputKind::node_mask:
            lab.mask = out.data;
            break;
        case OutputKind::node_pointer: {
            // sorted-order predecessors from the key values: the minimum points
            // at itself, every other element points at its sorted predecessor;
            // equal keys keep input order (stable ranks)
            const auto& key = inst.input("key").data;
            std::vector<long> order(static_cast<size_t>(n));
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
                return key[static_cast<size_t>(a)] < key[static_cast<size_t>(b)];
            });
            lab.classes.assign(static_cast<size_t>(n), 0);
            lab.classes[static_cast<size_t>(order[0])] = order[0];
            for (long r = 1; r < n; ++r)
                lab.classes[static_cast<size_t>(order[static_cast<size_t>(r)])] =
                    order[static_cast<size_t>(r - 1)];
            break;
        }
        case OutputKind::graph_pointer:
            lab.classes = {static_cast<long>(out.scalar())};
            break;
        case OutputKind::edge_pointer:
            lab.classes.resize(static_cast<size_t>(n * n));
            for (long i = 0; i < n * n; ++i) lab.classes[static_cast<size_t>(i)] = static_cast<long>(out.data[static_cast<size_t>(i)]);
            break;
    }
    return lab;
}

std::string schema_json() {
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["node_channel_0"] = "pos = index / num_nodes, every task";
    j["adjacency"] = "fully connected unless stated; self-loops always present";
    for (AlgorithmId id : tasks::all_algorithms()) {
        const auto& fl = feature_layout(id);
        nlohmann::ordered_json t;
        t["node_channels"] = fl.node_channels;
        t["edge_channels"] = fl.edge_channels;
        t["graph_channels"] = fl.graph_channels;
        switch (output_kind(id)) {
            case OutputKind::node_mask: t["output"] = "node_mask"; break;
            case OutputKind::node_pointer: t["output"] = "node_pointer"; break;
            case OutputKind::graph_pointer: t["output"] = "graph_pointer (classes = num_nodes + 1)"; break;
            case OutputKind::edge_pointer: t["output"] = "edge_pointer"; break;
        }
        if (id == AlgorithmId::articulation_points) t["adjacency"] = "A with forced symmetry plus self-loops";
        if (id == AlgorithmId::task_scheduling) t["node_channel_note"] = "deadline_frac = d / num_nodes";
        j["tasks"][tasks::algorithm_name(id)] = t;
    }
    return j.dump(2);
}

}  // namespace transnar::graph
