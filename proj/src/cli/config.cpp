#include "ilpkit/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ilpkit::cli {

namespace {

std::string format_error(const std::string& source, int line, const std::string& key, const std::string& message) {
  std::string out = source;
  if (line > 0) out += ":" + std::to_string(line);
  out += ": ";
  if (!key.empty()) out += key + ": ";
  return out + message;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string strip_comment(const std::string& s) {
  const auto pos = s.find_first_of("#;");
  return pos == std::string::npos ? s : s.substr(0, pos);
}

const std::set<std::string>& run_keys() {
  static const std::set<std::string> keys{"x0", "sigma0", "delta", "steps", "reps", "seed", "mc_substeps"};
  return keys;
}

class Parser {
 public:
  explicit Parser(ExperimentConfig& cfg) : cfg_(cfg) {}

  [[nodiscard]] ConfigError fail(int line, const std::string& key, const std::string& message) const {
    return ConfigError(cfg_.source, line, key, message);
  }

  [[nodiscard]] double number(const std::string& text, int line, const std::string& key) const {
    double v = 0.0;
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
      throw fail(line, key, "expected a finite number, got '" + text + "'");
    }
    return v;
  }

  [[nodiscard]] std::vector<double> numbers(const std::string& text, int line, const std::string& key) const {
    std::string normalized = text;
    std::replace(normalized.begin(), normalized.end(), ',', ' ');
    std::istringstream in(normalized);
    std::vector<double> out;
    std::string token;
    while (in >> token) out.push_back(number(token, line, key));
    if (out.empty()) throw fail(line, key, "expected at least one number");
    return out;
  }

  template <typename Int>
  [[nodiscard]] Int integer(const std::string& text, int line, const std::string& key) const {
    Int v{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
      throw fail(line, key, "expected an integer, got '" + text + "'");
    }
    return v;
  }

 private:
  ExperimentConfig& cfg_;
};

}  // namespace

ConfigError::ConfigError(const std::string& source, int line, std::string key, const std::string& message)
    : std::runtime_error(format_error(source, line, key, message)), key_(std::move(key)), line_(line) {}

double ExperimentConfig::param(const std::string& key, double fallback) const {
  const auto it = model_params.find(key);
  if (it == model_params.end()) return fallback;
  if (it->second.size() != 1) throw error("model." + key, "expected a single number");
  return it->second.front();
}

int ExperimentConfig::line_of(const std::string& dotted_key) const {
  const auto it = lines.find(dotted_key);
  return it == lines.end() ? 0 : it->second;
}

ConfigError ExperimentConfig::error(const std::string& dotted_key, const std::string& message) const {
  return ConfigError(source, line_of(dotted_key), dotted_key, message);
}

const std::map<std::string, std::vector<std::string>>& model_parameter_keys() {
  static const std::map<std::string, std::vector<std::string>> keys{
      {"ts2-tracking", {"lambda", "gamma", "speed", "accel", "fallback_gamma"}},
      {"scalar-ou", {"kappa", "sigma"}},
      {"linear-gaussian", {"drift", "diffusion"}},
      {"polar-demo", {"kappa", "sigma"}},
  };
  return keys;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  cfg.source = source;
  const Parser parser(cfg);

  // First pass: collect raw entries with their lines.
  struct Entry {
    std::string value;
    int line;
  };
  std::map<std::string, Entry> entries;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw parser.fail(line_no, "", "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "run" && section != "output") {
        throw parser.fail(line_no, section, "unknown section (expected model, run or output)");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw parser.fail(line_no, "", "expected 'key = value', got '" + line + "'");
    if (section.empty()) throw parser.fail(line_no, "", "key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string dotted = section + "." + key;
    if (key.empty()) throw parser.fail(line_no, dotted, "empty key");
    if (value.empty()) throw parser.fail(line_no, dotted, "empty value");
    if (entries.count(dotted) != 0) {
      throw parser.fail(line_no, dotted, "duplicate key (first set on line " + std::to_string(entries[dotted].line) + ")");
    }
    entries[dotted] = Entry{value, line_no};
    cfg.lines[dotted] = line_no;
    cfg.echo.emplace_back(dotted, value);
  }

  // Model section: the name decides which parameters are allowed.
  const auto name_it = entries.find("model.name");
  if (name_it == entries.end()) throw parser.fail(0, "model.name", "missing model name");
  cfg.model_name = name_it->second.value;
  const auto& registry = model_parameter_keys();
  const auto model_it = registry.find(cfg.model_name);
  if (model_it == registry.end()) {
    std::string known;
    for (const auto& [name, keys] : registry) known += (known.empty() ? "" : ", ") + name;
    throw parser.fail(name_it->second.line, "model.name", "unknown model '" + cfg.model_name + "' (known: " + known + ")");
  }

  for (const auto& [dotted, entry] : entries) {
    const auto dot = dotted.find('.');
    const std::string sec = dotted.substr(0, dot);
    const std::string key = dotted.substr(dot + 1);
    if (sec == "model") {
      if (key == "name") continue;
      const auto& allowed = model_it->second;
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        throw parser.fail(entry.line, dotted, "unknown key for model '" + cfg.model_name + "'");
      }
      cfg.model_params[key] = parser.numbers(entry.value, entry.line, dotted);
    } else if (sec == "run") {
      if (run_keys().count(key) == 0) throw parser.fail(entry.line, dotted, "unknown key");
      if (key == "x0") {
        if (entry.value == "sampled") {
          cfg.x0_kind = InitialStateKind::Sampled;
        } else {
          cfg.x0_kind = InitialStateKind::Explicit;
          cfg.x0 = parser.numbers(entry.value, entry.line, dotted);
        }
      } else if (key == "sigma0") {
        if (entry.value != "zero") cfg.sigma0 = parser.numbers(entry.value, entry.line, dotted);
      } else if (key == "delta") {
        cfg.delta = parser.number(entry.value, entry.line, dotted);
        if (!(cfg.delta > 0.0)) throw parser.fail(entry.line, dotted, "delta must be positive");
      } else if (key == "steps") {
        cfg.steps = parser.integer<int>(entry.value, entry.line, dotted);
        if (cfg.steps < 1) throw parser.fail(entry.line, dotted, "steps must be at least 1");
      } else if (key == "reps") {
        cfg.reps = parser.integer<std::size_t>(entry.value, entry.line, dotted);
        if (cfg.reps < 1) throw parser.fail(entry.line, dotted, "reps must be at least 1");
      } else if (key == "seed") {
        cfg.master_seed = parser.integer<std::uint64_t>(entry.value, entry.line, dotted);
      } else if (key == "mc_substeps") {
        cfg.mc_substeps = parser.integer<int>(entry.value, entry.line, dotted);
        if (cfg.mc_substeps < 1) throw parser.fail(entry.line, dotted, "mc_substeps must be at least 1");
      }
    } else {
      if (key != "dir") throw parser.fail(entry.line, dotted, "unknown key");
      cfg.output_dir = entry.value;
    }
  }
  if (entries.count("run.x0") == 0 && cfg.model_name != "ts2-tracking") {
    throw parser.fail(0, "run.x0", "missing initial state");
  }
  if (entries.count("run.x0") == 0) cfg.x0_kind = InitialStateKind::Sampled;
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ConfigError(path, 0, "", "cannot open configuration file");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_config(buffer.str(), path);
}

void require_mc_reps(const ExperimentConfig& config) {
  if (config.reps < 2) throw config.error("run.reps", "Monte Carlo runs need reps >= 2");
}

}  // namespace ilpkit::cli
