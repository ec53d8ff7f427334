#include "socnn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "socnn/errors.hpp"

namespace socnn {

namespace {

using Kind = RunConfig::Kind;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

bool parse_int(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s[0] == '-') return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  if (trim(s).empty()) return items;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) items.push_back(trim(item));
  return items;
}

bool valid(Kind kind, const std::string& v) {
  std::int64_t i = 0;
  double d = 0;
  bool b = false;
  switch (kind) {
    case Kind::Text: return true;
    case Kind::Integer: {
      std::uint64_t u = 0;
      return parse_int(v, i) || parse_u64(v, u);
    }
    case Kind::Real: return parse_real(v, d);
    case Kind::Boolean: return parse_bool(v, b);
    case Kind::List: {
      for (const auto& item : split_list(v)) {
        std::uint64_t u = 0;
        if (!parse_u64(item, u)) return false;
      }
      return true;
    }
  }
  return false;
}

}  // namespace

RunConfig::RunConfig() {
  keys_ = {
      {"seed", Kind::Integer, "0", "root seed for every random stream"},
      {"threads", Kind::Integer, "1", "worker threads for minibatch sharding"},
      {"precision", Kind::Text, "double", "scalar type: float or double"},
      {"out", Kind::Text, "run", "output directory"},
      {"checkpoint", Kind::Text, "", "checkpoint to resume from or evaluate"},
      {"metrics.wall_time", Kind::Boolean, "true", "record wall-clock seconds per epoch"},

      {"model", Kind::Text, "so-cnn-2-same",
       "fitnet, so-cnn-<k>-<same|div2|x2>, synth-cdu or synth-meanpool"},
      {"model.transition", Kind::Integer, "0", "transition width (0 = none)"},
      {"model.o2t_dims", Kind::List, "", "override O2T output widths, comma separated"},
      {"model.pv_dim", Kind::Integer, "0", "override PV width (0 = model default)"},
      {"model.fc_width", Kind::Integer, "0", "override FC / mean-pool hidden width"},
      {"model.mean_augment", Kind::Boolean, "true", "append the mean to the covariance"},
      {"model.beta", Kind::Real, "0.3", "mean augmentation weight"},
      {"model.robust", Kind::Boolean, "false", "eigenvalue rectification of the covariance"},
      {"model.alpha", Kind::Real, "0.75", "rectification strength"},
      {"model.orthonormal", Kind::Boolean, "false", "keep O2T weights on the Stiefel manifold"},
      {"model.groups", Kind::Integer, "1", "parallel CDUs over channel groups"},
      {"model.fusion", Kind::Text, "V-concat", "fusion of parallel CDUs: V|D - sum|avg|concat"},
      {"model.toy", Kind::Boolean, "false", "shrink the network (for smoke tests)"},

      {"data.source", Kind::Text, "synth", "cifar or synth"},
      {"data.path", Kind::Text, "", "CIFAR-10 binary directory or gen-synth output file"},
      {"data.train_limit", Kind::Integer, "0", "use the first N training images (0 = all)"},
      {"data.test_limit", Kind::Integer, "0", "use the first N test images (0 = all)"},
      {"data.val_holdout", Kind::Real, "0.1", "fraction of training data held out for validation"},
      {"data.flip", Kind::Boolean, "true", "random horizontal flips"},
      {"data.crop_pad", Kind::Integer, "4", "zero padding for random crops (0 = off)"},

      {"synth.classes", Kind::Integer, "4", "synthetic classes"},
      {"synth.dim", Kind::Integer, "16", "synthetic feature dimension"},
      {"synth.sites", Kind::Integer, "64", "synthetic feature vectors per sample"},
      {"synth.train", Kind::Integer, "2000", "synthetic training samples"},
      {"synth.test", Kind::Integer, "500", "synthetic test samples"},
      {"synth.max_variance", Kind::Real, "4", "largest class variance"},
      {"synth.condition", Kind::Real, "16", "ratio of largest to smallest variance"},

      {"eval.split", Kind::Text, "test", "split scored by eval: test or train"},

      {"optim.initial_lr", Kind::Real, "0.01", "initial learning rate"},
      {"optim.plateau_factor", Kind::Real, "0.1", "rate multiplier on plateau"},
      {"optim.patience", Kind::Integer, "8", "epochs without improvement before a reduction"},
      {"optim.threshold", Kind::Real, "1e-05", "minimum loss decrease counted as improvement"},
      {"optim.momentum", Kind::Real, "0", "momentum (0 = plain SGD)"},
      {"optim.batch_size", Kind::Integer, "64", "minibatch size"},
      {"optim.epochs", Kind::Integer, "20", "total epochs"},
      {"optim.phase1_epochs", Kind::Integer, "0", "frozen-backbone epochs (0 = single phase)"},
      {"optim.phase2_lr", Kind::Real, "0", "fine-tuning rate (0 = initial_lr / 10)"},
  };
}

RunConfig RunConfig::parse(std::string_view text, std::string_view origin) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), file.string());
}

bool RunConfig::known(const std::string& key) const {
  return std::any_of(keys_.begin(), keys_.end(), [&](const Key& k) { return k.name == key; });
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = std::find_if(keys_.begin(), keys_.end(), [&](const Key& k) { return k.name == key; });
  if (it == keys_.end()) throw ConfigError("unknown config key '" + key + "'");
  if (!valid(it->kind, value)) {
    throw ConfigError("invalid value '" + value + "' for config key '" + key + "'");
  }
  it->value = value;
}

const RunConfig::Key& RunConfig::lookup(const std::string& key) const {
  auto it = std::find_if(keys_.begin(), keys_.end(), [&](const Key& k) { return k.name == key; });
  if (it == keys_.end()) throw ConfigError("unknown config key '" + key + "'");
  return *it;
}

const std::string& RunConfig::text(const std::string& key) const { return lookup(key).value; }

std::int64_t RunConfig::integer(const std::string& key) const {
  std::int64_t v = 0;
  if (!parse_int(lookup(key).value, v)) throw ConfigError("config key '" + key + "' is not an integer");
  return v;
}

std::size_t RunConfig::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_u64(lookup(key).value, v)) {
    throw ConfigError("config key '" + key + "' must be an unsigned 64-bit integer");
  }
  return v;
}

double RunConfig::real(const std::string& key) const {
  double v = 0;
  if (!parse_real(lookup(key).value, v)) throw ConfigError("config key '" + key + "' is not a number");
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  bool v = false;
  if (!parse_bool(lookup(key).value, v)) throw ConfigError("config key '" + key + "' is not a boolean");
  return v;
}

std::vector<std::size_t> RunConfig::list(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(lookup(key).value)) {
    std::uint64_t u = 0;
    parse_u64(item, u);
    out.push_back(static_cast<std::size_t>(u));
  }
  return out;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& k : keys_) out << "# " << k.help << "\n" << k.name << " = " << k.value << "\n";
  return out.str();
}

void RunConfig::write(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config file " + file.string());
  out << to_text();
}

}  // namespace socnn
