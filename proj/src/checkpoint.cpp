#include "brgcn/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "brgcn/errors.hpp"

namespace brgcn {
namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& tok, const std::string& source, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ParseError(source, line, "bad number '" + tok + "'");
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterSet& params) {
  out << "brgcn-checkpoint " << kCheckpointVersion << "\n";
  out << "params " << params.size() << "\n";
  for (const auto& p : params) {
    out << p->name << " " << p->value.rank();
    for (std::size_t d : p->value.shape()) out << " " << d;
    out << "\n";
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      if (k) out << ' ';
      out << format_double(p->value[k]);
    }
    out << "\n";
  }
}

void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  write_checkpoint(out, params);
}

NamedTensors read_checkpoint(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() {
    if (!std::getline(in, line)) throw ParseError(source, lineno + 1, "unexpected end of checkpoint");
    ++lineno;
    return std::istringstream(line);
  };

  {
    auto ss = next();
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != "brgcn-checkpoint") throw ParseError(source, lineno, "not a checkpoint file");
    if (version != kCheckpointVersion) {
      throw ParseError(source, lineno, "unsupported checkpoint version " + std::to_string(version));
    }
  }
  std::size_t count = 0;
  {
    auto ss = next();
    std::string tag;
    if (!(ss >> tag >> count) || tag != "params") throw ParseError(source, lineno, "expected 'params <count>'");
  }

  NamedTensors out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    auto header = next();
    std::string name;
    std::size_t rank = 0;
    if (!(header >> name >> rank) || rank > 2) throw ParseError(source, lineno, "bad parameter header");
    Shape shape(rank);
    for (auto& d : shape)
      if (!(header >> d)) throw ParseError(source, lineno, "bad parameter shape");

    auto body = next();
    std::vector<double> values;
    values.reserve(shape_size(shape));
    std::string tok;
    while (body >> tok) values.push_back(parse_double(tok, source, lineno));
    if (values.size() != shape_size(shape)) {
      throw ParseError(source, lineno, "parameter '" + name + "' has " + std::to_string(values.size()) +
                                           " values, expected " + std::to_string(shape_size(shape)));
    }
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

NamedTensors read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

void load_into(const NamedTensors& saved, ParameterSet& params) {
  std::unordered_set<std::string> seen;
  for (const auto& [name, value] : saved) {
    Parameter* p = params.find(name);
    if (!p) throw ConfigError("checkpoint entry '" + name + "' does not match any model parameter");
    if (p->value.shape() != value.shape()) {
      throw DimensionError("checkpoint entry '" + name + "' has shape " + shape_str(value.shape()) +
                           ", model expects " + shape_str(p->value.shape()));
    }
    p->value = value;
    seen.insert(name);
  }
  for (const auto& p : params) {
    if (!seen.count(p->name)) throw ConfigError("checkpoint is missing parameter '" + p->name + "'");
  }
}

}  // namespace brgcn
