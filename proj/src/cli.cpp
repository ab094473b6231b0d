#include "brgcn/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "brgcn/checkpoint.hpp"
#include "brgcn/errors.hpp"
#include "brgcn/evalkit.hpp"
#include "brgcn/training.hpp"

namespace brgcn {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Config problems detected while running (missing inputs and the like).
class UsageError : public Error {
 public:
  using Error::Error;
};

struct NcData {
  HeteroGraph base;
  HeteroGraph graph;
  NodeLabels labels;
  NodeSplit split;
};

NcData load_nc(const ExperimentConfig& c) {
  if (c.graph.empty()) throw UsageError("graph: required for node classification");
  if (c.labels.empty()) throw UsageError("labels: required for node classification");
  NcData d;
  d.base = load_triples(c.graph, c.format);
  d.labels = load_labels(c.labels, d.base);
  const bool any_file = !c.train_nodes.empty() || !c.valid_nodes.empty() || !c.test_nodes.empty();
  if (any_file) {
    if (c.train_nodes.empty()) throw UsageError("train_nodes: required when any split file is given");
    d.split.train = load_node_list(c.train_nodes, d.base);
    if (!c.valid_nodes.empty()) d.split.valid = load_node_list(c.valid_nodes, d.base);
    if (!c.test_nodes.empty()) d.split.test = load_node_list(c.test_nodes, d.base);
    validate_split(d.split, d.labels);
  } else {
    Rng rng(c.train.seed);
    d.split = random_split(d.labels, c.train_fraction, c.valid_fraction, rng);
  }
  d.graph = augment(d.base, c.train.add_inverse, c.train.add_self_loop);
  return d;
}

struct LpData {
  HeteroGraph graph;  // encoder graph over the training triples, augmented
  std::vector<Triple> train, valid, test;
  TripleSet known;
};

LpData load_lp(const ExperimentConfig& c) {
  if (c.train_triples.empty()) throw UsageError("train_triples: required for link prediction");
  GraphBuilder builder;
  LpData d;
  d.train = builder.add_all(read_triples(c.train_triples, c.format));
  if (d.train.empty()) throw EmptyGraphError("no training triples in " + c.train_triples.string());
  if (!c.valid_triples.empty()) d.valid = builder.add_all(read_triples(c.valid_triples, c.format));
  if (!c.test_triples.empty()) d.test = builder.add_all(read_triples(c.test_triples, c.format));
  validate_split(TripleSplit{d.train, d.valid, d.test});
  d.graph = augment(builder.build(d.train), c.train.add_inverse, c.train.add_self_loop);
  d.known = make_triple_set(d.train);
  d.known.insert(d.valid.begin(), d.valid.end());
  d.known.insert(d.test.begin(), d.test.end());
  return d;
}

json metrics_json(const RankMetrics& m) {
  return {{"mrr", m.mrr}, {"hits@1", m.hits1}, {"hits@3", m.hits3}, {"hits@10", m.hits10}};
}

json report_json(const RankReport& r) { return {{"raw", metrics_json(r.raw)}, {"filtered", metrics_json(r.filtered)}}; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// One entry per run: the seed and the directory it writes to.
std::vector<std::pair<ExperimentConfig, fs::path>> expand_seeds(const ExperimentConfig& c) {
  std::vector<std::pair<ExperimentConfig, fs::path>> runs;
  if (c.seeds.empty()) {
    runs.emplace_back(c, c.output_dir);
    return runs;
  }
  for (std::uint64_t s : c.seeds) {
    ExperimentConfig rc = c;
    rc.seeds.clear();
    rc.train.seed = s;
    runs.emplace_back(rc, c.output_dir / ("seed_" + std::to_string(s)));
  }
  return runs;
}

void prepare_dir(const fs::path& dir, const ExperimentConfig& c) {
  fs::create_directories(dir);
  write_text(dir / "config.resolved", to_config_text(c));
}

void warn_clamped(std::size_t clamped, std::ostream& err) {
  if (clamped) err << "warning: " << clamped << " log arguments clamped at 1e-12 during training\n";
}

int cmd_train_nc(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  for (const auto& [c, dir] : expand_seeds(cfg)) {
    NcData d = load_nc(c);
    prepare_dir(dir, c);
    NcRun run = train_node_classifier(d.graph, d.labels, d.split, c.train);
    warn_clamped(run.clamped, err);
    write_metrics_csv(dir / "metrics.csv", run.history);
    write_checkpoint(dir / "model.ckpt", run.model->params());
    write_json(dir / "results.json",
               {{"seed", c.train.seed}, {"train_acc", run.train_acc}, {"val_acc", run.val_acc}, {"test_acc", run.test_acc}});
    out << "seed " << c.train.seed << ": train " << run.train_acc << "%, valid " << run.val_acc << "%, test "
        << run.test_acc << "%\n";
  }
  return kExitOk;
}

RankReport rank_with(const LinkPredictor& model, const LpData& d, std::span<const Triple> eval) {
  const Tensor e = model.entity_values(d.graph);
  return rank_triples([&](const Triple& t) { return model.decoder().score(e, t); }, eval, d.graph.num_nodes(), d.known);
}

int cmd_train_lp(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  for (const auto& [c, dir] : expand_seeds(cfg)) {
    LpData d = load_lp(c);
    prepare_dir(dir, c);
    std::function<double(const LinkPredictor&, std::size_t)> val;
    if (!d.valid.empty()) val = [&](const LinkPredictor& m, std::size_t) { return rank_with(m, d, d.valid).filtered.mrr; };
    LpRun enc = train_link_predictor(d.graph, d.train, c.train, false, val);
    warn_clamped(enc.clamped, err);
    write_metrics_csv(dir / "metrics.csv", enc.history);
    write_checkpoint(dir / "model.ckpt", enc.model->params());

    const std::span<const Triple> eval = d.test.empty() ? std::span<const Triple>(d.train) : d.test;
    json results{{"seed", c.train.seed}, {"evaluated_on", d.test.empty() ? "train" : "test"}};
    const RankReport enc_report = rank_with(*enc.model, d, eval);
    results["encoder"] = report_json(enc_report);
    out << "seed " << c.train.seed << ": filtered MRR " << enc_report.filtered.mrr << ", filtered Hits@10 "
        << enc_report.filtered.hits10 << "\n";

    if (c.ensemble) {
      LpRun emb = train_link_predictor(d.graph, d.train, c.train, true, {});
      warn_clamped(emb.clamped, err);
      write_metrics_csv(dir / "metrics_embedding.csv", emb.history);
      write_checkpoint(dir / "embedding.ckpt", emb.model->params());
      results["embedding"] = report_json(rank_with(*emb.model, d, eval));
      const Tensor ee = enc.model->entity_values(d.graph);
      const Tensor em = emb.model->entity_values(d.graph);
      const auto ens = rank_triples(
          [&](const Triple& t) {
            return ensemble_score(enc.model->decoder().score(ee, t), emb.model->decoder().score(em, t), c.train.beta);
          },
          eval, d.graph.num_nodes(), d.known);
      results["ensemble"] = report_json(ens);
      out << "seed " << c.train.seed << ": ensemble filtered MRR " << ens.filtered.mrr << "\n";
    }
    write_json(dir / "results.json", results);
  }
  return kExitOk;
}

void load_checkpoint_or_fail(const ExperimentConfig& c, ParameterSet& params) {
  if (c.checkpoint.empty()) throw UsageError("checkpoint: required");
  load_into(read_checkpoint(c.checkpoint), params);
}

int cmd_eval(const ExperimentConfig& c, std::ostream& out) {
  if (c.checkpoint.empty()) throw UsageError("checkpoint: required for eval");
  fs::create_directories(c.output_dir);
  if (c.train.task == Task::NodeClassification) {
    NcData d = load_nc(c);
    NodeClassifier model(c.train, d.graph.num_nodes(), d.graph.num_relations(), d.labels.num_classes());
    load_checkpoint_or_fail(c, model.params());
    const Tensor probs = model.predict(d.graph);
    json j{{"task", "node_classification"}};
    for (const auto& [name, ids] : {std::pair{"train_acc", &d.split.train}, std::pair{"val_acc", &d.split.valid},
                                    std::pair{"test_acc", &d.split.test}}) {
      if (!ids->empty()) j[name] = accuracy(probs, d.labels, *ids);
    }
    write_json(c.output_dir / "eval.json", j);
    out << j.dump() << "\n";
  } else {
    LpData d = load_lp(c);
    LinkPredictor model(c.train, d.graph.num_nodes(), d.graph.num_relations(), false);
    load_checkpoint_or_fail(c, model.params());
    const std::span<const Triple> eval = d.test.empty() ? std::span<const Triple>(d.train) : d.test;
    json j{{"task", "link_prediction"}, {"evaluated_on", d.test.empty() ? "train" : "test"}};
    j["encoder"] = report_json(rank_with(model, d, eval));
    write_json(c.output_dir / "eval.json", j);
    out << j.dump() << "\n";
  }
  return kExitOk;
}

int cmd_ablate(const ExperimentConfig& cfg, std::ostream& out) {
  if (cfg.train.task != Task::NodeClassification) throw UsageError("task: ablation runs on node classification");
  std::vector<AblationRow> rows;
  json scores_json = json::array();
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "config.resolved", to_config_text(cfg));
  for (const auto& [c, dir] : expand_seeds(cfg)) {
    NcData d = load_nc(c);
    const std::vector<double> scores = base_relation_scores(d.base, d.labels, d.split, c.train);
    json s{{"seed", c.train.seed}, {"scores", json::object()}};
    for (RelId r = 0; r < scores.size(); ++r) s["scores"][d.base.relation(r).name] = scores[r];
    scores_json.push_back(s);
    auto part = ablate(d.base, d.labels, d.split, c.train, scores, c.ablation_strategies, c.ablation_fractions);
    for (const auto& row : part) {
      out << to_string(row.strategy) << " " << row.fraction << " seed " << row.seed << ": " << row.accuracy << "%\n";
    }
    rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  write_ablation_csv(cfg.output_dir / "ablation.csv", rows);
  write_json(cfg.output_dir / "relation_scores.json", scores_json);
  return kExitOk;
}

int cmd_export_attention(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  if (c.train.task != Task::NodeClassification) throw UsageError("task: attention export uses the node classifier");
  NcData d = load_nc(c);
  prepare_dir(c.output_dir, c);
  std::unique_ptr<NodeClassifier> model;
  if (!c.checkpoint.empty()) {
    model = std::make_unique<NodeClassifier>(c.train, d.graph.num_nodes(), d.graph.num_relations(), d.labels.num_classes());
    load_checkpoint_or_fail(c, model->params());
  } else {
    NcRun run = train_node_classifier(d.graph, d.labels, d.split, c.train);
    warn_clamped(run.clamped, err);
    model = std::move(run.model);
  }
  std::vector<AttentionTrace> traces;
  model->predict(d.graph, &traces);
  write_text(c.output_dir / "attention.json", attention_json(traces, d.graph));
  out << "wrote " << (c.output_dir / "attention.json").string() << "\n";
  return kExitOk;
}

}  // namespace

std::string attention_json(std::span<const AttentionTrace> traces, const HeteroGraph& graph) {
  json doc;
  json rels = json::array();
  for (RelId r = 0; r < graph.num_relations(); ++r) rels.push_back({{"id", r}, {"name", graph.relation(r).name}});
  doc["relations"] = rels;
  json layers = json::array();
  for (const auto& trace : traces) {
    json gamma = json::array();
    json psi = json::array();
    for (NodeId i = 0; i < trace.nodes.size(); ++i) {
      const NodeTrace& n = trace.nodes[i];
      for (std::size_t k = 0; k < n.relations.size(); ++k) {
        const auto nbrs = graph.neighbors(i, n.relations[k]);
        gamma.push_back({{"node", i},
                         {"relation", n.relations[k]},
                         {"neighbors", std::vector<NodeId>(nbrs.begin(), nbrs.end())},
                         {"weights", n.gamma[k]}});
      }
      if (!n.psi.empty()) {
        const std::size_t m = n.relations.size();
        json mat = json::array();
        for (std::size_t r = 0; r < m; ++r) {
          mat.push_back(std::vector<double>(n.psi.begin() + static_cast<std::ptrdiff_t>(r * m),
                                            n.psi.begin() + static_cast<std::ptrdiff_t>((r + 1) * m)));
        }
        psi.push_back({{"node", i}, {"relations", n.relations}, {"matrix", mat}});
      }
    }
    layers.push_back({{"gamma", gamma}, {"psi", psi}});
  }
  doc["layers"] = layers;
  if (!graph.node_names().empty()) doc["nodes"] = graph.node_names();
  return doc.dump(1) + "\n";
}

int run(const std::string& subcommand, const fs::path& config_path, const ConfigEntries& overrides, std::ostream& out,
        std::ostream& err) {
  ConfigResult resolved = validate_config(config_path, overrides);
  if (!resolved.ok()) {
    for (const auto& e : resolved.errors) err << "config error: " << e << "\n";
    return kExitConfig;
  }
  const ExperimentConfig& c = *resolved.config;
  try {
    if (subcommand == "validate-config") {
      out << to_config_text(c);
      return kExitOk;
    }
    if (subcommand == "train-nc") {
      ExperimentConfig nc = c;
      nc.train.task = Task::NodeClassification;
      return cmd_train_nc(nc, out, err);
    }
    if (subcommand == "train-lp") {
      ExperimentConfig lp = c;
      lp.train.task = Task::LinkPrediction;
      if (lp.train.omega < 1) throw UsageError("omega: must be >= 1");
      return cmd_train_lp(lp, out, err);
    }
    if (subcommand == "eval") return cmd_eval(c, out);
    if (subcommand == "ablate") return cmd_ablate(c, out);
    if (subcommand == "export-attention") return cmd_export_attention(c, out, err);
    err << "unknown subcommand '" << subcommand << "'\n";
    return kExitConfig;
  } catch (const TrainingError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const UsageError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int run_main(int argc, char** argv) {
  CLI::App app{"Bi-level relational attention GCN toolkit"};
  app.require_subcommand(1);
  std::string config;
  std::vector<std::string> sets;
  const std::pair<const char*, const char*> commands[] = {
      {"train-nc", "train a node classifier"},
      {"train-lp", "train a link predictor"},
      {"eval", "evaluate a saved checkpoint"},
      {"ablate", "relation ablation by attention score"},
      {"export-attention", "write attention weights as JSON"},
      {"validate-config", "print the resolved configuration"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config, "key = value config file");
    sub->add_option("-s,--set", sets, "override, key=value (repeatable)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  ConfigEntries overrides;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "config error: override '" << s << "' is not key=value\n";
      return kExitConfig;
    }
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return run(app.get_subcommands().front()->get_name(), config, overrides, std::cout, std::cerr);
}

}  // namespace brgcn
