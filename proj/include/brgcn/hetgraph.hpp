#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace brgcn {

class Rng;

using NodeId = std::size_t;
using RelId = std::size_t;

struct Triple {
  NodeId head = 0;
  RelId rel = 0;
  NodeId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept;
};

enum class RelationKind { Base, Inverse, Self };

struct RelationInfo {
  std::string name;
  RelationKind kind = RelationKind::Base;
  /// For inverse relations, the relation they reverse; otherwise the id itself.
  RelId source = 0;

  bool operator==(const RelationInfo&) const = default;
};

/// Immutable directed multi-relational graph.
///
/// N_i^r (`neighbors`) holds the sorted out-neighbours of i under r and R_i
/// (`relations_of`) the sorted relations with at least one out-edge from i.
/// Both indices are derived from the triple list alone. Duplicate triples are
/// dropped on construction and counted.
class HeteroGraph {
 public:
  HeteroGraph() = default;
  HeteroGraph(std::size_t num_nodes, std::vector<RelationInfo> relations, std::vector<Triple> triples,
              std::vector<std::string> node_names = {});
  /// Convenience: all relations are base relations with the given names.
  static HeteroGraph from_triples(std::size_t num_nodes, std::vector<std::string> relation_names,
                                  std::vector<Triple> triples);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_relations() const { return relations_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<RelationInfo>& relations() const { return relations_; }
  const RelationInfo& relation(RelId r) const;
  const std::vector<std::string>& node_names() const { return node_names_; }
  std::string node_name(NodeId i) const;
  std::optional<NodeId> find_node(std::string_view name) const;
  std::optional<RelId> find_relation(std::string_view name) const;
  std::size_t duplicates_removed() const { return duplicates_removed_; }

  /// Throws BoundsError for out-of-range ids.
  std::span<const NodeId> neighbors(NodeId i, RelId r) const;
  std::span<const RelId> relations_of(NodeId i) const;
  bool contains(const Triple& t) const;

  /// Relation ids whose kind is Base, in id order.
  std::vector<RelId> base_relations() const;
  std::optional<RelId> self_relation() const;
  std::optional<RelId> inverse_of(RelId r) const;

  /// Recomputes both indices from the triples and compares them with the
  /// stored ones.
  bool indices_consistent() const;

  /// Same nodes, relations and triples (in order).
  bool operator==(const HeteroGraph& other) const;

 private:
  struct Index {
    std::vector<std::size_t> rel_offsets;  // size num_nodes + 1, into rel_ids
    std::vector<RelId> rel_ids;            // R_i, concatenated
    std::vector<std::size_t> nbr_offsets;  // size rel_ids.size() + 1, into nbrs
    std::vector<NodeId> nbrs;              // N_i^r, concatenated
    bool operator==(const Index&) const = default;
  };
  static Index build_index(std::size_t num_nodes, const std::vector<Triple>& triples);

  std::size_t num_nodes_ = 0;
  std::vector<RelationInfo> relations_;
  std::vector<Triple> triples_;
  std::vector<std::string> node_names_;
  std::unordered_map<std::string, NodeId> node_lookup_;
  std::size_t duplicates_removed_ = 0;
  Index index_;
};

/// Adds an inverse relation per base relation (reversed triples) and/or one
/// SELF relation with a loop on every node. Idempotent.
HeteroGraph augment(const HeteroGraph& graph, bool add_inverse, bool add_self_loop);

/// Keeps only triples whose relation is in `keep`. The relation table and node
/// set are unchanged.
HeteroGraph restrict_relations(const HeteroGraph& graph, std::span<const RelId> keep);

// ------------------------------------------------------------------ loading

enum class TripleFormat { Tsv, NTriples };

std::optional<TripleFormat> parse_triple_format(std::string_view s);

struct RawTriple {
  std::string head;
  std::string rel;
  std::string tail;
  std::size_t line = 0;
};

/// Parses a triple file without assigning ids. Throws ParseError with the line
/// number for malformed lines.
std::vector<RawTriple> read_triples(const std::filesystem::path& path, TripleFormat format);
std::vector<RawTriple> parse_triples(std::string_view text, TripleFormat format, const std::string& source = "<text>");

/// Assigns dense ids to node and relation names in first-seen order.
class GraphBuilder {
 public:
  NodeId intern_node(std::string_view name);
  RelId intern_relation(std::string_view name);
  Triple add(const RawTriple& raw);
  std::vector<Triple> add_all(const std::vector<RawTriple>& raws);

  std::size_t num_nodes() const { return node_names_.size(); }
  /// Graph over every interned node and relation with the given triples.
  HeteroGraph build(std::vector<Triple> triples) const;

 private:
  std::vector<std::string> node_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, NodeId> nodes_;
  std::unordered_map<std::string, RelId> rels_;
};

/// Loads a graph. Throws EmptyGraphError when the file holds no triples.
HeteroGraph load_triples(const std::filesystem::path& path, TripleFormat format);

// ------------------------------------------------------------ labels/splits

struct NodeLabels {
  std::vector<NodeId> labeled_ids;
  std::unordered_map<NodeId, std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t label(NodeId i) const;
};

/// Reads `node<TAB>label` lines; class indices follow first-seen order.
NodeLabels load_labels(const std::filesystem::path& path, const HeteroGraph& graph);
NodeLabels make_labels(const HeteroGraph& graph, const std::vector<std::pair<NodeId, std::size_t>>& pairs,
                       std::size_t num_classes);

struct NodeSplit {
  std::vector<NodeId> train;
  std::vector<NodeId> valid;
  std::vector<NodeId> test;
};

struct TripleSplit {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
};

/// One node name per line.
std::vector<NodeId> load_node_list(const std::filesystem::path& path, const HeteroGraph& graph);

/// Throws ConfigError unless the parts are disjoint and cover exactly the
/// labelled set.
void validate_split(const NodeSplit& split, const NodeLabels& labels);
void validate_split(const TripleSplit& split);

/// Shuffled partition of the labelled nodes; the remainder after train and
/// valid goes to test.
NodeSplit random_split(const NodeLabels& labels, double train_fraction, double valid_fraction, Rng& rng);

}  // namespace brgcn
