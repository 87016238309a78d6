#include "ddlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "ddlab/error.hpp"
#include "ddlab/text_io.hpp"
#include "json.hpp"

namespace ddlab {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Drops a trailing # comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool is_bare_key(const std::string& k) {
  return !k.empty() && std::all_of(k.begin(), k.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

TomlValue parse_scalar_or_array(const std::string& text) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      if (text[i] == '\\' && i + 2 < text.size()) {
        const char n = text[++i];
        out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
      } else if (text[i] == '"') {
        throw std::invalid_argument("unescaped quote in string");
      } else {
        out += text[i];
      }
    }
    return out;
  }
  if (text == "true") return true;
  if (text == "false") return false;
  if (text.size() >= 2 && text.front() == '[' && text.back() == ']') {
    std::vector<double> values;
    const std::string inner = trim(std::string_view(text).substr(1, text.size() - 2));
    if (!inner.empty())
      for (const auto& field : split_csv_line(inner)) {
        const std::string t = trim(field);
        if (t.empty()) continue;  // trailing comma
        values.push_back(parse_real(t));
      }
    return values;
  }
  std::string digits = text;
  digits.erase(std::remove(digits.begin(), digits.end(), '_'), digits.end());
  if (digits.find_first_of(".eEn") == std::string::npos) return parse_integer(digits);
  return parse_real(digits);
}

class ConfigReader {
 public:
  explicit ConfigReader(TomlTable table) : table_(std::move(table)) {}

  template <typename Fn>
  void with(const std::string& key, Fn&& fn) {
    auto it = table_.find(key);
    if (it == table_.end()) return;
    try {
      fn(it->second);
    } catch (const std::bad_variant_access&) {
      throw std::invalid_argument("config key '" + key + "' has the wrong type");
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
    table_.erase(it);
  }

  void real(const std::string& key, double& out) {
    with(key, [&](const TomlValue& v) {
      out = std::holds_alternative<long long>(v) ? static_cast<double>(std::get<long long>(v))
                                                 : std::get<double>(v);
    });
  }
  template <typename Int>
  void integer(const std::string& key, Int& out) {
    with(key, [&](const TomlValue& v) {
      const long long x = std::get<long long>(v);
      if (x < 0) throw std::invalid_argument("must be non-negative");
      out = static_cast<Int>(x);
    });
  }
  void string(const std::string& key, std::string& out) {
    with(key, [&](const TomlValue& v) { out = std::get<std::string>(v); });
  }
  template <typename Int>
  void integer_list(const std::string& key, std::vector<Int>& out) {
    with(key, [&](const TomlValue& v) {
      out.clear();
      for (double d : std::get<std::vector<double>>(v)) {
        if (d < 0 || d != static_cast<double>(static_cast<long long>(d)))
          throw std::invalid_argument("expected non-negative integers");
        out.push_back(static_cast<Int>(d));
      }
    });
  }

  void finish() const {
    if (!table_.empty())
      throw std::invalid_argument("unknown config key '" + table_.begin()->first + "'");
  }

 private:
  TomlTable table_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("config: unterminated section header", line_no);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!is_bare_key(section)) throw ParseError("config: bad section name", line_no);
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected key = value", line_no);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!is_bare_key(key)) throw ParseError("config: bad key '" + key + "'", line_no);
    const std::string full = section.empty() ? key : section + "." + key;
    if (table.count(full)) throw ParseError("config: duplicate key '" + full + "'", line_no);
    try {
      table.emplace(full, parse_scalar_or_array(value));
    } catch (const std::invalid_argument& e) {
      throw ParseError("config: bad value for '" + full + "': " + e.what(), line_no);
    }
  }
  return table;
}

std::vector<std::size_t> RunConfig::resolved_hidden_dims() const {
  if (!hidden_dims.empty()) return hidden_dims;
  return preset_spec(preset).hidden_dims;
}

NetworkSpec RunConfig::network_spec(std::size_t input_dim, std::size_t n_classes) const {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_dims = resolved_hidden_dims();
  spec.output_dim = n_classes;
  spec.seed = init_seed;
  spec.validate();
  return spec;
}

void RunConfig::validate() const {
  if (!(noise_probability >= 0.0 && noise_probability < 1.0))
    throw std::invalid_argument("noise_probability must be in [0, 1)");
  if (max_epoch == 0) throw std::invalid_argument("max_epoch must be >= 1");
  optim.validate();
  const auto dims = resolved_hidden_dims();
  for (std::size_t l : probe_layers)
    if (l == 0 || l > dims.size())
      throw std::invalid_argument("probes.layers entry " + std::to_string(l) + " out of range");
  for (std::size_t i = 0; i < phase_boundaries.size(); ++i)
    if (phase_boundaries[i] < 1 || phase_boundaries[i] > max_epoch ||
        (i > 0 && phase_boundaries[i] <= phase_boundaries[i - 1]))
      throw std::invalid_argument("phases.boundaries must increase strictly within [1, max_epoch]");
  if (phase_mode == PhaseMode::heuristic && max_epoch < 10)
    throw std::invalid_argument("phases.mode = \"heuristic\" needs max_epoch >= 10");
  if (dataset.kind == DatasetConfig::Kind::synthetic) {
    const auto& s = dataset.synthetic;
    if (s.n_train == 0 || s.n_test == 0 || s.n_classes < 2 || s.dim == 0)
      throw std::invalid_argument("synthetic dataset sizes must be positive (>= 2 classes)");
  }
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  ConfigReader r(parse_toml(text));
  std::string s;

  r.real("noise_probability", cfg.noise_probability);
  r.integer("noise_seed", cfg.noise_seed);
  r.integer("init_seed", cfg.init_seed);
  r.integer("shuffle_seed", cfg.shuffle_seed);
  r.integer("max_epoch", cfg.max_epoch);
  if (s.clear(), r.string("noise_mask", s), !s.empty()) cfg.noise_mask = resolve(base_dir, s);
  if (s.clear(), r.string("output_dir", s), !s.empty()) cfg.output_dir = resolve(base_dir, s);

  s.clear();
  r.string("dataset.kind", s);
  if (s == "synthetic")
    cfg.dataset.kind = DatasetConfig::Kind::synthetic;
  else if (s == "cifar10" || s.empty())
    cfg.dataset.kind = DatasetConfig::Kind::cifar10;
  else
    throw std::invalid_argument("dataset.kind must be \"cifar10\" or \"synthetic\"");
  if (s.clear(), r.string("dataset.path", s), !s.empty()) cfg.dataset.path = resolve(base_dir, s);
  else cfg.dataset.path = resolve(base_dir, cfg.dataset.path.string());
  r.integer("dataset.train_limit", cfg.dataset.train_limit);
  r.integer("dataset.test_limit", cfg.dataset.test_limit);
  r.integer("dataset.n_train", cfg.dataset.synthetic.n_train);
  r.integer("dataset.n_test", cfg.dataset.synthetic.n_test);
  r.integer("dataset.n_classes", cfg.dataset.synthetic.n_classes);
  r.integer("dataset.dim", cfg.dataset.synthetic.dim);
  r.real("dataset.sigma", cfg.dataset.synthetic.sigma);
  r.integer("dataset.seed", cfg.dataset.synthetic.seed);

  r.string("network.preset", cfg.preset);
  r.integer_list("network.hidden_dims", cfg.hidden_dims);

  r.real("optim.learning_rate", cfg.optim.learning_rate);
  r.real("optim.beta1", cfg.optim.beta1);
  r.real("optim.beta2", cfg.optim.beta2);
  r.real("optim.epsilon", cfg.optim.epsilon);
  r.integer("optim.batch_size", cfg.optim.batch_size);

  r.integer_list("probes.layers", cfg.probe_layers);

  s.clear();
  r.string("phases.mode", s);
  if (s == "heuristic")
    cfg.phase_mode = PhaseMode::heuristic;
  else if (s == "config" || s.empty())
    cfg.phase_mode = PhaseMode::config;
  else
    throw std::invalid_argument("phases.mode must be \"config\" or \"heuristic\"");
  r.integer_list("phases.boundaries", cfg.phase_boundaries);

  r.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  return parse_run_config(read_text_file(file.string()), file.parent_path());
}

std::string run_config_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json d;
  if (c.dataset.kind == DatasetConfig::Kind::cifar10) {
    d["kind"] = "cifar10";
    d["path"] = c.dataset.path.string();
  } else {
    d["kind"] = "synthetic";
    d["n_train"] = c.dataset.synthetic.n_train;
    d["n_test"] = c.dataset.synthetic.n_test;
    d["n_classes"] = c.dataset.synthetic.n_classes;
    d["dim"] = c.dataset.synthetic.dim;
    d["sigma"] = c.dataset.synthetic.sigma;
    d["seed"] = c.dataset.synthetic.seed;
  }
  d["train_limit"] = c.dataset.train_limit;
  d["test_limit"] = c.dataset.test_limit;
  j["dataset"] = d;
  j["noise_probability"] = c.noise_probability;
  j["noise_seed"] = c.noise_seed;
  j["init_seed"] = c.init_seed;
  j["shuffle_seed"] = c.shuffle_seed;
  j["rng"] = "mt19937_64";
  if (!c.noise_mask.empty()) j["noise_mask"] = c.noise_mask.string();
  j["network"]["preset"] = c.hidden_dims.empty() ? c.preset : "custom";
  j["network"]["hidden_dims"] = c.resolved_hidden_dims();
  j["optim"]["learning_rate"] = c.optim.learning_rate;
  j["optim"]["beta1"] = c.optim.beta1;
  j["optim"]["beta2"] = c.optim.beta2;
  j["optim"]["epsilon"] = c.optim.epsilon;
  j["optim"]["batch_size"] = c.optim.batch_size;
  j["max_epoch"] = c.max_epoch;
  j["probe_layers"] = c.probe_layers;
  j["phases"]["mode"] = c.phase_mode == PhaseMode::config ? "config" : "heuristic";
  j["phases"]["boundaries"] = c.phase_boundaries;
  return j.dump(2) + "\n";
}

}  // namespace ddlab
