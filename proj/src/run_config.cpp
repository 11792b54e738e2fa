#include "stugn/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "stugn/error.hpp"

namespace stugn::config {

std::vector<models::ModelConfig> RunConfig::model_configs() const {
  std::vector<models::ModelConfig> out;
  const auto rows = models::table_rows();
  for (const auto& name : model.names) {
    const bool known = std::any_of(rows.begin(), rows.end(), [&](const auto& r) { return r.name() == name; });
    if (!known) throw ValidationError("[model] names: unknown model '" + name + "'");
  }
  for (auto c : rows) {
    if (!model.names.empty() &&
        std::find(model.names.begin(), model.names.end(), c.name()) == model.names.end())
      continue;
    c.latent_dim = model.latent_dim;
    c.layers = model.layers;
    c.heads = model.heads;
    c.ffn_hidden = model.ffn_hidden;
    c.lookback = 18;
    c.horizon = 6;
    switch (c.family) {
      case models::Family::kStugn:
        c.learning_rate = model.stugn_learning_rate;
        c.dropout = model.dropout;
        break;
      case models::Family::kStLstm:
      case models::Family::kStTransformer:
        c.learning_rate = model.baseline_learning_rate;
        c.dropout = model.dropout;
        break;
      case models::Family::kTsfLinear:
      case models::Family::kPersistence:
        c.learning_rate = model.linear_learning_rate;
        break;
    }
    c.validate();
    out.push_back(c);
  }
  return out;
}

void RunConfig::validate() const {
  synthetic.validate();
  training.validate();
  power.validate();
  if (jobs == 0) throw ValidationError("jobs must be at least 1");
  if (output_dir.empty()) throw ValidationError("output_dir must not be empty");
  model_configs();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');)
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::size_t to_size(const std::string& v) {
  std::size_t pos = 0;
  if (v.empty() || v[0] == '-') throw std::invalid_argument("negative");
  const unsigned long long x = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return static_cast<std::size_t>(x);
}

std::uint64_t to_u64(const std::string& v) { return static_cast<std::uint64_t>(to_size(v)); }

double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return x;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.input", [](RunConfig& c, const std::string& v) { c.input_csv = v; }},
      {"data.output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},

      {"synthetic.stations", [](RunConfig& c, const std::string& v) { c.synthetic.stations = to_size(v); }},
      {"synthetic.grid_length", [](RunConfig& c, const std::string& v) { c.synthetic.grid_length = to_size(v); }},
      {"synthetic.start", [](RunConfig& c, const std::string& v) { c.synthetic.start = v; }},
      {"synthetic.regions", [](RunConfig& c, const std::string& v) { c.synthetic.regions = to_size(v); }},
      {"synthetic.ar1", [](RunConfig& c, const std::string& v) { c.synthetic.ar1 = to_double(v); }},
      {"synthetic.ar2", [](RunConfig& c, const std::string& v) { c.synthetic.ar2 = to_double(v); }},
      {"synthetic.noise_std", [](RunConfig& c, const std::string& v) { c.synthetic.noise_std = to_double(v); }},
      {"synthetic.mean_speed", [](RunConfig& c, const std::string& v) { c.synthetic.mean_speed = to_double(v); }},
      {"synthetic.offset_std", [](RunConfig& c, const std::string& v) { c.synthetic.offset_std = to_double(v); }},
      {"synthetic.scale_mean", [](RunConfig& c, const std::string& v) { c.synthetic.scale_mean = to_double(v); }},
      {"synthetic.scale_std", [](RunConfig& c, const std::string& v) { c.synthetic.scale_std = to_double(v); }},
      {"synthetic.local_share", [](RunConfig& c, const std::string& v) { c.synthetic.local_share = to_double(v); }},
      {"synthetic.correlation_km",
       [](RunConfig& c, const std::string& v) { c.synthetic.correlation_km = to_double(v); }},
      {"synthetic.advection_steps_per_100km",
       [](RunConfig& c, const std::string& v) { c.synthetic.advection_steps_per_100km = to_double(v); }},
      {"synthetic.diurnal_amplitude",
       [](RunConfig& c, const std::string& v) { c.synthetic.diurnal_amplitude = to_double(v); }},
      {"synthetic.seasonal_scale",
       [](RunConfig& c, const std::string& v) { c.synthetic.seasonal_scale = to_double(v); }},
      {"synthetic.seed", [](RunConfig& c, const std::string& v) { c.synthetic.seed = to_u64(v); }},

      {"corruption.decay_scale", [](RunConfig& c, const std::string& v) { c.corruption.decay_scale = to_double(v); }},
      {"corruption.max_burst",
       [](RunConfig& c, const std::string& v) { c.corruption.max_burst = static_cast<int>(to_size(v)); }},
      {"corruption.seed", [](RunConfig& c, const std::string& v) { c.corruption.seed = to_u64(v); }},
      {"corruption.rates",
       [](RunConfig& c, const std::string& v) {
         c.training.missing_rates.clear();
         for (const auto& item : split_list(v)) c.training.missing_rates.push_back(to_double(item));
       }},

      {"training.batch_size", [](RunConfig& c, const std::string& v) { c.training.batch_size = to_size(v); }},
      {"training.epochs", [](RunConfig& c, const std::string& v) { c.training.epochs = to_size(v); }},
      {"training.seeds",
       [](RunConfig& c, const std::string& v) {
         c.training.seeds.clear();
         for (const auto& item : split_list(v)) c.training.seeds.push_back(to_u64(item));
       }},
      {"training.window_stride", [](RunConfig& c, const std::string& v) { c.training.window_stride = to_size(v); }},
      {"training.eval_stride", [](RunConfig& c, const std::string& v) { c.training.eval_stride = to_size(v); }},
      {"training.jobs", [](RunConfig& c, const std::string& v) { c.jobs = to_size(v); }},

      {"model.names",
       [](RunConfig& c, const std::string& v) {
         c.model.names = v == "all" ? std::vector<std::string>{} : split_list(v);
       }},
      {"model.latent_dim", [](RunConfig& c, const std::string& v) { c.model.latent_dim = to_size(v); }},
      {"model.layers", [](RunConfig& c, const std::string& v) { c.model.layers = to_size(v); }},
      {"model.heads", [](RunConfig& c, const std::string& v) { c.model.heads = to_size(v); }},
      {"model.ffn_hidden", [](RunConfig& c, const std::string& v) { c.model.ffn_hidden = to_size(v); }},
      {"model.dropout", [](RunConfig& c, const std::string& v) { c.model.dropout = to_double(v); }},
      {"model.stugn_learning_rate",
       [](RunConfig& c, const std::string& v) { c.model.stugn_learning_rate = to_double(v); }},
      {"model.baseline_learning_rate",
       [](RunConfig& c, const std::string& v) { c.model.baseline_learning_rate = to_double(v); }},
      {"model.linear_learning_rate",
       [](RunConfig& c, const std::string& v) { c.model.linear_learning_rate = to_double(v); }},

      {"power.cut_in", [](RunConfig& c, const std::string& v) { c.power.cut_in = to_double(v); }},
      {"power.rated_speed", [](RunConfig& c, const std::string& v) { c.power.rated_speed = to_double(v); }},
      {"power.cut_out", [](RunConfig& c, const std::string& v) { c.power.cut_out = to_double(v); }},
      {"power.rated_power", [](RunConfig& c, const std::string& v) { c.power.rated_power = to_double(v); }},
  };
  return table;
}

}  // namespace

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig c;
  std::string section, line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + "expected key = value");
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ValidationError(where + "unknown key '" + key + "'");
    try {
      it->second(c, value);
    } catch (const std::invalid_argument&) {
      throw ValidationError(where + "bad value '" + value + "' for " + key);
    } catch (const std::out_of_range&) {
      throw ValidationError(where + "value out of range for " + key);
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  return parse_run_config(in, path);
}

std::string canonical_training_text(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "corruption=" << c.corruption.decay_scale << ',' << c.corruption.max_burst << ','
      << c.corruption.seed << '\n';
  const auto& t = c.training;
  out << "training=" << t.batch_size << ',' << t.epochs << ',' << t.window_stride << ',' << t.eval_stride << '\n';
  for (const auto& m : c.model_configs()) out << models::to_text(m) << "--\n";
  return out.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace stugn::config
