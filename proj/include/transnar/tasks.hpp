#pragma once

// The seven algorithmic tasks: deterministic instance generators and exact
// reference solvers, in the layout used by the size-4 sample fixtures.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "transnar/tensor.hpp"

namespace transnar::tasks {

enum class AlgorithmId {
    articulation_points,
    binary_search,
    insertion_sort,
    jarvis_march,
    kmp_matcher,
    matrix_chain_order,
    task_scheduling,
};

inline constexpr int kNumAlgorithms = 7;

const std::vector<AlgorithmId>& all_algorithms();
std::string algorithm_name(AlgorithmId id);
AlgorithmId algorithm_from_name(const std::string& name);  // throws on unknown

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Dtype { real, integer };

/// Scalar (rank 0), vector (rank 1, length N) or matrix (rank 2, N x N).
struct Array {
    Dtype dtype = Dtype::real;
    int rank = 1;
    Shape shape;
    std::vector<double> data;  // integer values stored exactly

    double scalar() const { return data.at(0); }
    long numel() const { return static_cast<long>(data.size()); }
};

struct FieldSpec {
    std::string name;
    int rank;
    Dtype dtype;
};

struct TaskSpec {
    AlgorithmId id;
    std::string name;
    std::vector<FieldSpec> inputs;
    FieldSpec output;
};

const TaskSpec& task_spec(AlgorithmId id);

using FieldList = std::vector<std::pair<std::string, Array>>;

struct ProblemInstance {
    AlgorithmId algorithm;
    long size = 0;
    uint64_t seed = 0;
    FieldList inputs;
    FieldList outputs;

    const Array& input(const std::string& name) const;
    const Array& output() const { return outputs.at(0).second; }
};

/// Exact ground truth for the task. Pure; throws SchemaError on malformed inputs.
FieldList solve(AlgorithmId algorithm, const FieldList& inputs, long size);

/// Deterministic sampler: same (algorithm, size, seed) always yields the same
/// instance, with float inputs rounded to 3 significant digits before solving.
ProblemInstance generate_instance(AlgorithmId algorithm, long size, uint64_t seed);

/// Builds an instance from explicit inputs (fixtures, parsers); validates the
/// schema and fills outputs via solve().
ProblemInstance instance_from_inputs(AlgorithmId algorithm, FieldList inputs);

void validate_inputs(AlgorithmId algorithm, const FieldList& inputs, long size);

/// Round to 3 significant digits (ties away from zero), exactly as rendered.
double round_3sig(double v);

}  // namespace transnar::tasks
