#include "brgcn/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace brgcn {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::optional<double> to_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> to_uint(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<bool> to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  return std::nullopt;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ',';
    out += f(v[k]);
  }
  return out;
}

// Setters return an empty string on success, else the reason.
struct KeySpec {
  std::string key;
  std::function<std::string(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Field>
KeySpec real_key(std::string key, Field field) {
  return {key,
          [field](ExperimentConfig& c, const std::string& v) -> std::string {
            auto d = to_double(v);
            if (!d || !std::isfinite(*d)) return "expected a number, got '" + v + "'";
            field(c) = *d;
            return {};
          },
          [field](const ExperimentConfig& c) { return fmt(field(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Field>
KeySpec count_key(std::string key, Field field) {
  return {key,
          [field](ExperimentConfig& c, const std::string& v) -> std::string {
            auto d = to_uint(v);
            if (!d) return "expected a non-negative integer, got '" + v + "'";
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(*d);
            return {};
          },
          [field](const ExperimentConfig& c) { return std::to_string(field(const_cast<ExperimentConfig&>(c))); }};
}

template <typename Field>
KeySpec bool_key(std::string key, Field field) {
  return {key,
          [field](ExperimentConfig& c, const std::string& v) -> std::string {
            auto b = to_bool(v);
            if (!b) return "expected true or false, got '" + v + "'";
            field(c) = *b;
            return {};
          },
          [field](const ExperimentConfig& c) -> std::string {
            return field(const_cast<ExperimentConfig&>(c)) ? "true" : "false";
          }};
}

template <typename Field>
KeySpec path_key(std::string key, Field field) {
  return {key,
          [field](ExperimentConfig& c, const std::string& v) -> std::string {
            field(c) = v;
            return {};
          },
          [field](const ExperimentConfig& c) { return field(const_cast<ExperimentConfig&>(c)).string(); }};
}

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> s;
    s.push_back({"task",
                 [](ExperimentConfig& c, const std::string& v) -> std::string {
                   auto t = parse_task(v);
                   if (!t) return "expected node_classification or link_prediction, got '" + v + "'";
                   c.train.task = *t;
                   return {};
                 },
                 [](const ExperimentConfig& c) { return std::string(to_string(c.train.task)); }});
    s.push_back({"model",
                 [](ExperimentConfig& c, const std::string& v) -> std::string {
                   auto m = parse_layer_mode(v);
                   if (!m) return "expected full, node_only, relation_only or rgcn_baseline, got '" + v + "'";
                   c.train.mode = *m;
                   return {};
                 },
                 [](const ExperimentConfig& c) { return std::string(to_string(c.train.mode)); }});
    s.push_back({"preset",
                 [](ExperimentConfig& c, const std::string& v) -> std::string {
                   c.preset = v;
                   return {};
                 },
                 [](const ExperimentConfig& c) { return c.preset; }});
    s.push_back({"decoder",
                 [](ExperimentConfig& c, const std::string& v) -> std::string {
                   auto d = parse_decoder_kind(v);
                   if (!d) return "expected distmult, transe, hole or complex, got '" + v + "'";
                   c.train.decoder = *d;
                   return {};
                 },
                 [](const ExperimentConfig& c) { return std::string(to_string(c.train.decoder)); }});
    s.push_back(real_key("lr", [](ExperimentConfig& c) -> double& { return c.train.lr; }));
    s.push_back(real_key("l2_penalty", [](ExperimentConfig& c) -> double& { return c.train.l2_penalty; }));
    s.push_back(count_key("epochs", [](ExperimentConfig& c) -> std::size_t& { return c.train.epochs; }));
    s.push_back(count_key("hidden_units", [](ExperimentConfig& c) -> std::size_t& { return c.train.hidden_units; }));
    s.push_back(count_key("nc_layers", [](ExperimentConfig& c) -> std::size_t& { return c.train.nc_layers; }));
    s.push_back(count_key("lp_layers", [](ExperimentConfig& c) -> std::size_t& { return c.train.lp_layers; }));
    s.push_back(count_key("embedding_dim", [](ExperimentConfig& c) -> std::size_t& { return c.train.embedding_dim; }));
    s.push_back(count_key("num_bases", [](ExperimentConfig& c) -> std::size_t& { return c.train.num_bases; }));
    s.push_back(real_key("dropout", [](ExperimentConfig& c) -> double& { return c.train.dropout; }));
    s.push_back(real_key("leaky_slope", [](ExperimentConfig& c) -> double& { return c.train.leaky_slope; }));
    s.push_back(count_key("omega", [](ExperimentConfig& c) -> std::size_t& { return c.train.omega; }));
    s.push_back(real_key("beta", [](ExperimentConfig& c) -> double& { return c.train.beta; }));
    s.push_back(count_key("seed", [](ExperimentConfig& c) -> std::uint64_t& { return c.train.seed; }));
    s.push_back({"seeds",
                 [](ExperimentConfig& c, const std::string& v) -> std::string {
                   c.seeds.clear();
                   for (const auto& item : split_list(v)) {
                     auto n = to_uint(item);
                     if (!n) return "expected a comma-separated list of integers, got '" + v + "'";
                     c.seeds.push_back(*n);
                   }
                   return {};
                 },
                 [](const ExperimentConfig& c) {
                   return join<std::uint64_t>(c.seeds, [](const std::uint64_t& n) { return std::to_string(n); });
                 }});
    s.push_back(bool_key("add_inverse", [](ExperimentConfig& c) -> bool& { return c.train.add_inverse; }));
    s.push_back(bool_key("add_self_loop", [](ExperimentConfig& c) -> bool& { return c.train.add_self_loop; }));
    s.push_back(bool_key("input_projection", [](ExperimentConfig& c) -> bool& { return c.train.input_projection; }));
    s.push_back(bool_key("early_stopping", [](ExperimentConfig& c) -> bool& { return c.train.early_stopping; }));
    s.push_back(count_key("patience", [](ExperimentConfig& c) -> std::size_t& { return c.train.patience; }));
    s.push_back(bool_key("ensemble", [](ExperimentConfig& c) -> bool& { return c.ensemble; }));
    s.push_back(path_key("graph", [](ExperimentConfig& c) -> std::filesystem::path& { return c.graph; }));
    s.push_back({"format",
                 [](ExperimentConfig& c, const std::string& v) -> std::string {
                   auto f = parse_triple_format(v);
                   if (!f) return "expected tsv or ntriples, got '" + v + "'";
                   c.format = *f;
                   return {};
                 },
                 [](const ExperimentConfig& c) -> std::string { return c.format == TripleFormat::Tsv ? "tsv" : "ntriples"; }});
    s.push_back(path_key("labels", [](ExperimentConfig& c) -> std::filesystem::path& { return c.labels; }));
    s.push_back(path_key("train_nodes", [](ExperimentConfig& c) -> std::filesystem::path& { return c.train_nodes; }));
    s.push_back(path_key("valid_nodes", [](ExperimentConfig& c) -> std::filesystem::path& { return c.valid_nodes; }));
    s.push_back(path_key("test_nodes", [](ExperimentConfig& c) -> std::filesystem::path& { return c.test_nodes; }));
    s.push_back(real_key("train_fraction", [](ExperimentConfig& c) -> double& { return c.train_fraction; }));
    s.push_back(real_key("valid_fraction", [](ExperimentConfig& c) -> double& { return c.valid_fraction; }));
    s.push_back(path_key("train_triples", [](ExperimentConfig& c) -> std::filesystem::path& { return c.train_triples; }));
    s.push_back(path_key("valid_triples", [](ExperimentConfig& c) -> std::filesystem::path& { return c.valid_triples; }));
    s.push_back(path_key("test_triples", [](ExperimentConfig& c) -> std::filesystem::path& { return c.test_triples; }));
    s.push_back(path_key("output_dir", [](ExperimentConfig& c) -> std::filesystem::path& { return c.output_dir; }));
    s.push_back(path_key("checkpoint", [](ExperimentConfig& c) -> std::filesystem::path& { return c.checkpoint; }));
    s.push_back({"ablation_strategies",
                 [](ExperimentConfig& c, const std::string& v) -> std::string {
                   c.ablation_strategies.clear();
                   for (const auto& item : split_list(v)) {
                     auto st = parse_ablation_strategy(item);
                     if (!st) return "unknown strategy '" + item + "'";
                     c.ablation_strategies.push_back(*st);
                   }
                   return {};
                 },
                 [](const ExperimentConfig& c) {
                   return join<AblationStrategy>(c.ablation_strategies,
                                                 [](const AblationStrategy& a) { return std::string(to_string(a)); });
                 }});
    s.push_back({"ablation_fractions",
                 [](ExperimentConfig& c, const std::string& v) -> std::string {
                   c.ablation_fractions.clear();
                   for (const auto& item : split_list(v)) {
                     auto d = to_double(item);
                     if (!d) return "expected a comma-separated list of numbers, got '" + v + "'";
                     c.ablation_fractions.push_back(*d);
                   }
                   return {};
                 },
                 [](const ExperimentConfig& c) {
                   return join<double>(c.ablation_fractions, [](const double& d) { return fmt(d); });
                 }});
    return s;
  }();
  return specs;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& s : key_specs())
    if (s.key == key) return &s;
  return nullptr;
}

void apply(ExperimentConfig& c, const ConfigEntries& entries, std::vector<std::string>& errors) {
  for (const auto& [key, value] : entries) {
    const KeySpec* spec = find_key(key);
    if (!spec) {
      errors.push_back(key + ": unknown key");
      continue;
    }
    const std::string err = spec->set(c, value);
    if (!err.empty()) errors.push_back(key + ": " + err);
  }
}

std::optional<std::string> last_value(const ConfigEntries& a, const ConfigEntries& b, const std::string& key) {
  std::optional<std::string> v;
  for (const auto* entries : {&a, &b})
    for (const auto& [k, val] : *entries)
      if (k == key) v = val;
  return v;
}

// Settings per dataset (AIFB, MUTAG, BGS, AM) for each variant.
struct PresetRow {
  double lr, l2;
  std::size_t bases, epochs;
  std::optional<double> dropout, slope;
};

const char* kDatasets[] = {"aifb", "mutag", "bgs", "am"};

std::optional<PresetRow> preset_row(std::size_t d, LayerMode mode) {
  switch (mode) {
    case LayerMode::Full: {
      static const PresetRow rows[] = {{0.05, 0.0, 0, 85, 0.4, 0.2},
                                       {0.01, 5e-4, 0, 90, 0.2, 0.0},
                                       {0.005, 0.0, 1, 95, 0.6, 0.4},
                                       {0.01, 0.0, 0, 100, 0.6, 0.0}};
      return rows[d];
    }
    case LayerMode::NodeOnly: {
      static const PresetRow rows[] = {{0.01, 0.0, 6, 70, 0.6, 0.6},
                                       {0.001, 0.0, 1, 90, 0.4, 0.8},
                                       {0.001, 0.0, 0, 70, 0.0, 0.4},
                                       {0.001, 0.0, 2, 80, 0.6, 0.8}};
      return rows[d];
    }
    case LayerMode::RelationOnly: {
      static const PresetRow rows[] = {{0.01, 0.0, 2, 70, std::nullopt, std::nullopt},
                                       {0.01, 0.0, 0, 75, std::nullopt, std::nullopt},
                                       {0.05, 0.0, 4, 85, std::nullopt, std::nullopt},
                                       {0.001, 5e-4, 2, 85, std::nullopt, std::nullopt}};
      return rows[d];
    }
    case LayerMode::RgcnBaseline:
      return std::nullopt;
  }
  return std::nullopt;
}

bool is_path_key(const std::string& key) {
  static const char* keys[] = {"graph",         "labels",        "train_nodes",  "valid_nodes", "test_nodes",
                               "train_triples", "valid_triples", "test_triples", "output_dir",  "checkpoint"};
  return std::find(std::begin(keys), std::end(keys), key) != std::end(keys);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& s : key_specs()) out.push_back(s.key);
  return out;
}

std::optional<ConfigEntries> preset_entries(const std::string& dataset, LayerMode mode) {
  for (std::size_t d = 0; d < 4; ++d) {
    if (dataset != kDatasets[d]) continue;
    auto row = preset_row(d, mode);
    if (!row) return std::nullopt;
    ConfigEntries e{{"lr", fmt(row->lr)},
                    {"l2_penalty", fmt(row->l2)},
                    {"hidden_units", "16"},
                    {"num_bases", std::to_string(row->bases)},
                    {"epochs", std::to_string(row->epochs)}};
    if (row->dropout) e.emplace_back("dropout", fmt(*row->dropout));
    if (row->slope) e.emplace_back("leaky_slope", fmt(*row->slope));
    return e;
  }
  return std::nullopt;
}

ConfigEntries parse_config_text(const std::string& text, std::vector<std::string>& errors) {
  ConfigEntries out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(lineno) + ": missing key");
      continue;
    }
    out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

ConfigResult resolve_config(const ConfigEntries& file_entries, const ConfigEntries& overrides) {
  ConfigResult result;
  ExperimentConfig c;
  std::vector<std::string>& errors = result.errors;

  // The preset depends on the model variant, so both are looked up first.
  const auto preset = last_value(file_entries, overrides, "preset");
  if (preset && !preset->empty()) {
    LayerMode mode = LayerMode::Full;
    if (auto m = last_value(file_entries, overrides, "model")) mode = parse_layer_mode(*m).value_or(LayerMode::Full);
    if (auto entries = preset_entries(*preset, mode)) {
      apply(c, *entries, errors);
    } else {
      errors.push_back("preset: no preset '" + *preset + "' for model " + std::string(to_string(mode)));
    }
  }
  apply(c, file_entries, errors);
  apply(c, overrides, errors);

  for (const auto& e : config_errors(c.train)) errors.push_back(e);
  if (!(c.train_fraction > 0.0 && c.train_fraction <= 1.0)) errors.push_back("train_fraction: must lie in (0, 1]");
  if (!(c.valid_fraction >= 0.0 && c.train_fraction + c.valid_fraction <= 1.0)) {
    errors.push_back("valid_fraction: must be >= 0 with train_fraction + valid_fraction <= 1");
  }
  for (double f : c.ablation_fractions) {
    if (!(f > 0.0 && f <= 1.0)) errors.push_back("ablation_fractions: " + fmt(f) + " is outside (0, 1]");
  }
  if (c.ablation_strategies.empty()) errors.push_back("ablation_strategies: at least one strategy required");
  const std::pair<const char*, const std::filesystem::path*> files[] = {
      {"graph", &c.graph},           {"labels", &c.labels},
      {"train_nodes", &c.train_nodes}, {"valid_nodes", &c.valid_nodes},
      {"test_nodes", &c.test_nodes},   {"train_triples", &c.train_triples},
      {"valid_triples", &c.valid_triples}, {"test_triples", &c.test_triples},
      {"checkpoint", &c.checkpoint}};
  for (const auto& [key, path] : files) {
    if (!path->empty() && !std::filesystem::exists(*path)) {
      errors.push_back(std::string(key) + ": file not found: " + path->string());
    }
  }
  if (errors.empty()) result.config = std::move(c);
  return result;
}

ConfigResult validate_config(const std::filesystem::path& path, const ConfigEntries& overrides) {
  ConfigResult result;
  ConfigEntries entries;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) {
      result.errors.push_back("config: cannot read " + path.string());
      return result;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    std::vector<std::string> parse_errors;
    entries = parse_config_text(ss.str(), parse_errors);
    for (auto& e : parse_errors) result.errors.push_back(path.string() + ": " + e);
    // Relative file references in a config file are relative to that file.
    const std::filesystem::path base = std::filesystem::absolute(path).parent_path();
    for (auto& [key, value] : entries) {
      if (value.empty() || !is_path_key(key)) continue;
      const std::filesystem::path p(value);
      if (p.is_relative()) value = (base / p).lexically_normal().string();
    }
  }
  ConfigResult resolved = resolve_config(entries, overrides);
  result.errors.insert(result.errors.end(), resolved.errors.begin(), resolved.errors.end());
  if (!result.errors.empty()) return result;
  // Defaults and command-line overrides are relative to the working directory.
  ExperimentConfig& c = *resolved.config;
  for (std::filesystem::path* p : {&c.graph, &c.labels, &c.train_nodes, &c.valid_nodes, &c.test_nodes,
                                   &c.train_triples, &c.valid_triples, &c.test_triples, &c.output_dir,
                                   &c.checkpoint}) {
    if (!p->empty() && p->is_relative()) *p = std::filesystem::absolute(*p).lexically_normal();
  }
  result.config = std::move(resolved.config);
  return result;
}

std::string to_config_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& s : key_specs()) {
    // The preset has already been folded into the other values.
    if (s.key == "preset") continue;
    out += s.key + " = " + s.get(config) + "\n";
  }
  return out;
}

}  // namespace brgcn
