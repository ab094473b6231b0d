#include "brgcn/hetgraph.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <unordered_set>

#include "brgcn/errors.hpp"
#include "brgcn/rng.hpp"

namespace brgcn {

std::size_t TripleHash::operator()(const Triple& t) const noexcept {
  std::size_t h = t.head * 0x9E3779B97F4A7C15ULL;
  h ^= t.rel + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
  h ^= t.tail + 0x94D049BB133111EBULL + (h << 6) + (h >> 2);
  return h;
}

// --------------------------------------------------------------- HeteroGraph

HeteroGraph::HeteroGraph(std::size_t num_nodes, std::vector<RelationInfo> relations, std::vector<Triple> triples,
                         std::vector<std::string> node_names)
    : num_nodes_(num_nodes), relations_(std::move(relations)), node_names_(std::move(node_names)) {
  if (!node_names_.empty() && node_names_.size() != num_nodes_) {
    throw DimensionError("node name table has " + std::to_string(node_names_.size()) + " entries for " +
                         std::to_string(num_nodes_) + " nodes");
  }
  node_lookup_.reserve(node_names_.size());
  for (NodeId i = 0; i < node_names_.size(); ++i) node_lookup_.emplace(node_names_[i], i);
  std::unordered_set<Triple, TripleHash> seen;
  seen.reserve(triples.size());
  triples_.reserve(triples.size());
  for (const Triple& t : triples) {
    if (t.head >= num_nodes_ || t.tail >= num_nodes_) {
      throw BoundsError("triple references node " + std::to_string(std::max(t.head, t.tail)) + " but graph has " +
                        std::to_string(num_nodes_) + " nodes");
    }
    if (t.rel >= relations_.size()) {
      throw BoundsError("triple references relation " + std::to_string(t.rel) + " but graph has " +
                        std::to_string(relations_.size()) + " relations");
    }
    if (seen.insert(t).second) triples_.push_back(t);
    else ++duplicates_removed_;
  }
  index_ = build_index(num_nodes_, triples_);
}

HeteroGraph HeteroGraph::from_triples(std::size_t num_nodes, std::vector<std::string> relation_names,
                                      std::vector<Triple> triples) {
  std::vector<RelationInfo> rels;
  rels.reserve(relation_names.size());
  for (std::size_t r = 0; r < relation_names.size(); ++r) rels.push_back({std::move(relation_names[r]), RelationKind::Base, r});
  return HeteroGraph(num_nodes, std::move(rels), std::move(triples));
}

HeteroGraph::Index HeteroGraph::build_index(std::size_t num_nodes, const std::vector<Triple>& triples) {
  std::vector<Triple> sorted = triples;
  std::sort(sorted.begin(), sorted.end());
  Index idx;
  idx.rel_offsets.assign(num_nodes + 1, 0);
  idx.nbr_offsets.push_back(0);
  idx.nbrs.reserve(sorted.size());
  std::size_t k = 0;
  for (NodeId i = 0; i < num_nodes; ++i) {
    idx.rel_offsets[i] = idx.rel_ids.size();
    while (k < sorted.size() && sorted[k].head == i) {
      const RelId r = sorted[k].rel;
      idx.rel_ids.push_back(r);
      while (k < sorted.size() && sorted[k].head == i && sorted[k].rel == r) idx.nbrs.push_back(sorted[k++].tail);
      idx.nbr_offsets.push_back(idx.nbrs.size());
    }
  }
  idx.rel_offsets[num_nodes] = idx.rel_ids.size();
  return idx;
}

const RelationInfo& HeteroGraph::relation(RelId r) const {
  if (r >= relations_.size()) throw BoundsError("relation id " + std::to_string(r) + " out of range");
  return relations_[r];
}

std::string HeteroGraph::node_name(NodeId i) const {
  if (i >= num_nodes_) throw BoundsError("node id " + std::to_string(i) + " out of range");
  return node_names_.empty() ? std::to_string(i) : node_names_[i];
}

std::optional<NodeId> HeteroGraph::find_node(std::string_view name) const {
  auto it = node_lookup_.find(std::string(name));
  if (it == node_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelId> HeteroGraph::find_relation(std::string_view name) const {
  for (RelId r = 0; r < relations_.size(); ++r)
    if (relations_[r].name == name) return r;
  return std::nullopt;
}

std::span<const RelId> HeteroGraph::relations_of(NodeId i) const {
  if (i >= num_nodes_) throw BoundsError("node id " + std::to_string(i) + " out of range");
  const std::size_t b = index_.rel_offsets[i], e = index_.rel_offsets[i + 1];
  return {index_.rel_ids.data() + b, e - b};
}

std::span<const NodeId> HeteroGraph::neighbors(NodeId i, RelId r) const {
  if (r >= relations_.size()) throw BoundsError("relation id " + std::to_string(r) + " out of range");
  const auto rels = relations_of(i);
  auto it = std::lower_bound(rels.begin(), rels.end(), r);
  if (it == rels.end() || *it != r) return {};
  const std::size_t slot = index_.rel_offsets[i] + static_cast<std::size_t>(it - rels.begin());
  const std::size_t b = index_.nbr_offsets[slot], e = index_.nbr_offsets[slot + 1];
  return {index_.nbrs.data() + b, e - b};
}

bool HeteroGraph::contains(const Triple& t) const {
  if (t.head >= num_nodes_ || t.rel >= relations_.size()) return false;
  const auto n = neighbors(t.head, t.rel);
  return std::binary_search(n.begin(), n.end(), t.tail);
}

std::vector<RelId> HeteroGraph::base_relations() const {
  std::vector<RelId> out;
  for (RelId r = 0; r < relations_.size(); ++r)
    if (relations_[r].kind == RelationKind::Base) out.push_back(r);
  return out;
}

std::optional<RelId> HeteroGraph::self_relation() const {
  for (RelId r = 0; r < relations_.size(); ++r)
    if (relations_[r].kind == RelationKind::Self) return r;
  return std::nullopt;
}

std::optional<RelId> HeteroGraph::inverse_of(RelId r) const {
  for (RelId q = 0; q < relations_.size(); ++q)
    if (relations_[q].kind == RelationKind::Inverse && relations_[q].source == r) return q;
  return std::nullopt;
}

bool HeteroGraph::indices_consistent() const { return build_index(num_nodes_, triples_) == index_; }

bool HeteroGraph::operator==(const HeteroGraph& other) const {
  return num_nodes_ == other.num_nodes_ && relations_ == other.relations_ && triples_ == other.triples_;
}

HeteroGraph augment(const HeteroGraph& graph, bool add_inverse, bool add_self_loop) {
  std::vector<RelationInfo> rels = graph.relations();
  std::vector<Triple> triples = graph.triples();

  if (add_inverse) {
    std::vector<std::pair<RelId, RelId>> added;  // base -> inverse
    for (RelId r : graph.base_relations()) {
      if (graph.inverse_of(r)) continue;
      added.emplace_back(r, rels.size());
      rels.push_back({"inv:" + graph.relation(r).name, RelationKind::Inverse, r});
    }
    if (!added.empty()) {
      std::vector<std::optional<RelId>> inverse(graph.num_relations());
      for (auto [r, q] : added) inverse[r] = q;
      for (const Triple& t : graph.triples()) {
        if (inverse[t.rel]) triples.push_back({t.tail, *inverse[t.rel], t.head});
      }
    }
  }
  if (add_self_loop && !graph.self_relation()) {
    const RelId self = rels.size();
    rels.push_back({"SELF", RelationKind::Self, self});
    for (NodeId i = 0; i < graph.num_nodes(); ++i) triples.push_back({i, self, i});
  }
  return HeteroGraph(graph.num_nodes(), std::move(rels), std::move(triples), graph.node_names());
}

HeteroGraph restrict_relations(const HeteroGraph& graph, std::span<const RelId> keep) {
  std::vector<bool> kept(graph.num_relations(), false);
  for (RelId r : keep) {
    if (r >= graph.num_relations()) throw BoundsError("relation id " + std::to_string(r) + " out of range");
    kept[r] = true;
  }
  std::vector<Triple> triples;
  for (const Triple& t : graph.triples())
    if (kept[t.rel]) triples.push_back(t);
  return HeteroGraph(graph.num_nodes(), graph.relations(), std::move(triples), graph.node_names());
}

// ------------------------------------------------------------------ parsing

std::optional<TripleFormat> parse_triple_format(std::string_view s) {
  if (s == "tsv") return TripleFormat::Tsv;
  if (s == "ntriples" || s == "nt") return TripleFormat::NTriples;
  return std::nullopt;
}

namespace {

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool is_blank_or_comment(std::string_view line) {
  const auto p = line.find_first_not_of(" \t");
  return p == std::string_view::npos || line[p] == '#';
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto p = line.find('\t', start);
    out.emplace_back(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

class NTriplesLine {
 public:
  NTriplesLine(std::string_view line, const std::string& source, std::size_t lineno)
      : s_(line), source_(source), line_(lineno) {}

  RawTriple parse() {
    RawTriple t;
    t.line = line_;
    t.head = term(/*allow_literal=*/false, "subject");
    skip_ws();
    if (peek() != '<') fail("predicate must be an IRI");
    t.rel = term(false, "predicate");
    t.tail = term(true, "object");
    skip_ws();
    if (peek() != '.') fail("expected ' .' terminating the statement");
    ++pos_;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] != '#') fail("unexpected trailing content");
    return t;
  }

 private:
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_, what); }

  std::string term(bool allow_literal, const char* role) {
    skip_ws();
    const char c = peek();
    if (c == '<') {
      const auto end = s_.find('>', pos_);
      if (end == std::string_view::npos) fail(std::string("unterminated IRI in ") + role);
      std::string iri(s_.substr(pos_ + 1, end - pos_ - 1));
      pos_ = end + 1;
      return iri;
    }
    if (c == '_' && pos_ + 1 < s_.size() && s_[pos_ + 1] == ':') {
      const auto start = pos_;
      while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != '\t') ++pos_;
      return std::string(s_.substr(start, pos_ - start));
    }
    if (c == '"') {
      if (!allow_literal) fail(std::string("literal not allowed as ") + role);
      const auto start = pos_++;
      bool closed = false;
      while (pos_ < s_.size()) {
        if (s_[pos_] == '\\') {
          pos_ += 2;
          continue;
        }
        if (s_[pos_++] == '"') {
          closed = true;
          break;
        }
      }
      if (!closed) fail("unterminated literal");
      if (peek() == '@') {
        while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != '\t') ++pos_;
      } else if (s_.substr(pos_, 3) == "^^<") {
        const auto end = s_.find('>', pos_);
        if (end == std::string_view::npos) fail("unterminated datatype IRI");
        pos_ = end + 1;
      }
      return std::string(s_.substr(start, pos_ - start));
    }
    fail(std::string("missing or malformed ") + role);
  }

  std::string_view s_;
  const std::string& source_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<RawTriple> parse_triples(std::string_view text, TripleFormat format, const std::string& source) {
  std::vector<RawTriple> out;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line =
        strip_cr(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    ++lineno;
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (is_blank_or_comment(line)) continue;

    if (format == TripleFormat::Tsv) {
      auto fields = split_tabs(line);
      if (fields.size() != 3) {
        throw ParseError(source, lineno, "expected head<TAB>relation<TAB>tail, got " + std::to_string(fields.size()) +
                                             " field(s)");
      }
      for (const auto& f : fields)
        if (f.empty()) throw ParseError(source, lineno, "empty field");
      out.push_back({std::move(fields[0]), std::move(fields[1]), std::move(fields[2]), lineno});
    } else {
      out.push_back(NTriplesLine(line, source, lineno).parse());
    }
  }
  return out;
}

std::vector<RawTriple> read_triples(const std::filesystem::path& path, TripleFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_triples(ss.str(), format, path.string());
}

NodeId GraphBuilder::intern_node(std::string_view name) {
  auto [it, inserted] = nodes_.try_emplace(std::string(name), node_names_.size());
  if (inserted) node_names_.emplace_back(name);
  return it->second;
}

RelId GraphBuilder::intern_relation(std::string_view name) {
  auto [it, inserted] = rels_.try_emplace(std::string(name), relation_names_.size());
  if (inserted) relation_names_.emplace_back(name);
  return it->second;
}

Triple GraphBuilder::add(const RawTriple& raw) {
  const NodeId h = intern_node(raw.head);
  const RelId r = intern_relation(raw.rel);
  const NodeId t = intern_node(raw.tail);
  return {h, r, t};
}

std::vector<Triple> GraphBuilder::add_all(const std::vector<RawTriple>& raws) {
  std::vector<Triple> out;
  out.reserve(raws.size());
  for (const auto& raw : raws) out.push_back(add(raw));
  return out;
}

HeteroGraph GraphBuilder::build(std::vector<Triple> triples) const {
  std::vector<RelationInfo> rels;
  rels.reserve(relation_names_.size());
  for (RelId r = 0; r < relation_names_.size(); ++r) rels.push_back({relation_names_[r], RelationKind::Base, r});
  return HeteroGraph(node_names_.size(), std::move(rels), std::move(triples), node_names_);
}

HeteroGraph load_triples(const std::filesystem::path& path, TripleFormat format) {
  const auto raws = read_triples(path, format);
  if (raws.empty()) throw EmptyGraphError(path.string() + ": no triples");
  GraphBuilder builder;
  auto triples = builder.add_all(raws);
  return builder.build(std::move(triples));
}

// ------------------------------------------------------------ labels/splits

std::size_t NodeLabels::label(NodeId i) const {
  auto it = labels.find(i);
  if (it == labels.end()) throw BoundsError("node " + std::to_string(i) + " has no label");
  return it->second;
}

NodeLabels load_labels(const std::filesystem::path& path, const HeteroGraph& graph) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  NodeLabels out;
  std::unordered_map<std::string, std::size_t> classes;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string_view line = strip_cr(raw);
    if (is_blank_or_comment(line)) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2) throw ParseError(path.string(), lineno, "expected node<TAB>label");
    auto node = graph.find_node(fields[0]);
    if (!node) throw ParseError(path.string(), lineno, "unknown node '" + fields[0] + "'");
    auto [cit, fresh] = classes.try_emplace(fields[1], out.class_names.size());
    if (fresh) out.class_names.push_back(fields[1]);
    if (!out.labels.emplace(*node, cit->second).second) {
      throw ParseError(path.string(), lineno, "node '" + fields[0] + "' labelled twice");
    }
    out.labeled_ids.push_back(*node);
  }
  return out;
}

NodeLabels make_labels(const HeteroGraph& graph, const std::vector<std::pair<NodeId, std::size_t>>& pairs,
                       std::size_t num_classes) {
  NodeLabels out;
  for (std::size_t k = 0; k < num_classes; ++k) out.class_names.push_back(std::to_string(k));
  for (auto [i, c] : pairs) {
    if (i >= graph.num_nodes()) throw BoundsError("labelled node " + std::to_string(i) + " out of range");
    if (c >= num_classes) throw BoundsError("label " + std::to_string(c) + " >= number of classes");
    if (!out.labels.emplace(i, c).second) throw ConfigError("node " + std::to_string(i) + " labelled twice");
    out.labeled_ids.push_back(i);
  }
  return out;
}

std::vector<NodeId> load_node_list(const std::filesystem::path& path, const HeteroGraph& graph) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<NodeId> out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string_view line = strip_cr(raw);
    if (is_blank_or_comment(line)) continue;
    auto node = graph.find_node(line);
    if (!node) throw ParseError(path.string(), lineno, "unknown node '" + std::string(line) + "'");
    out.push_back(*node);
  }
  return out;
}

void validate_split(const NodeSplit& split, const NodeLabels& labels) {
  std::unordered_set<NodeId> seen;
  for (const auto* part : {&split.train, &split.valid, &split.test}) {
    for (NodeId i : *part) {
      if (!labels.labels.count(i)) throw ConfigError("split contains unlabelled node " + std::to_string(i));
      if (!seen.insert(i).second) throw ConfigError("node " + std::to_string(i) + " appears in more than one split");
    }
  }
  if (seen.size() != labels.labeled_ids.size()) {
    throw ConfigError("splits cover " + std::to_string(seen.size()) + " of " +
                      std::to_string(labels.labeled_ids.size()) + " labelled nodes");
  }
}

void validate_split(const TripleSplit& split) {
  std::unordered_set<Triple, TripleHash> seen;
  for (const auto* part : {&split.train, &split.valid, &split.test}) {
    for (const Triple& t : *part) {
      if (!seen.insert(t).second) throw ConfigError("triple appears in more than one split");
    }
  }
}

NodeSplit random_split(const NodeLabels& labels, double train_fraction, double valid_fraction, Rng& rng) {
  if (train_fraction < 0 || valid_fraction < 0 || train_fraction + valid_fraction > 1.0) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  std::vector<NodeId> ids = labels.labeled_ids;
  rng.shuffle(ids);
  const auto n = ids.size();
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(n) + 0.5);
  const auto n_valid = std::min(n - n_train, static_cast<std::size_t>(valid_fraction * static_cast<double>(n) + 0.5));
  NodeSplit s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.valid.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                 ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), ids.end());
  return s;
}

}  // namespace brgcn
