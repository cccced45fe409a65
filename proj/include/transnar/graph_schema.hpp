#pragma once

// Graph form of task instances: node/edge/graph feature layouts (versioned),
// adjacency rules, supervision labels for the graph reasoner, and the exact
// schema decoder used to prove the encoding is lossless.

#include <string>
#include <vector>

#include "transnar/tasks.hpp"
#include "transnar/tensor.hpp"

namespace transnar::graph {

inline constexpr int kSchemaVersion = 1;

struct GraphSpec {
    long num_nodes = 0;
    Tensor<double> node_features;   // N x node_dim
    Tensor<double> edge_features;   // N x N x edge_dim (edge_dim may be 0)
    Tensor<double> graph_features;  // graph_dim (may be 0)
    Tensor<uint8_t> adjacency;      // N x N; self-loops always present
};

enum class OutputKind { node_mask, node_pointer, graph_pointer, edge_pointer };

struct GraphLabels {
    OutputKind kind;
    std::vector<long> classes;  // node_pointer: N, graph_pointer: 1, edge_pointer: N*N
    std::vector<double> mask;   // node_mask: N entries in {0,1}
};

struct FeatureLayout {
    std::vector<std::string> node_channels;
    std::vector<std::string> edge_channels;
    std::vector<std::string> graph_channels;
    long node_dim() const { return static_cast<long>(node_channels.size()); }
    long edge_dim() const { return static_cast<long>(edge_channels.size()); }
    long graph_dim() const { return static_cast<long>(graph_channels.size()); }
};

const FeatureLayout& feature_layout(tasks::AlgorithmId id);
OutputKind output_kind(tasks::AlgorithmId id);

/// Class count of the pointer heads: node/edge pointers select among N nodes;
/// graph pointers select an index in [0, N] (the extra slot covers
/// "past the last element").
long num_output_classes(tasks::AlgorithmId id, long size);

GraphSpec to_graph(const tasks::ProblemInstance& inst);

/// Exact inverse of to_graph on the input fields.
tasks::FieldList decode_graph(const GraphSpec& g, tasks::AlgorithmId id);

/// Supervision targets for the graph reasoner, derived from instance outputs.
GraphLabels graph_labels(const tasks::ProblemInstance& inst);

/// Versioned human-readable description of every layout (JSON).
std::string schema_json();

}  // namespace transnar::graph
