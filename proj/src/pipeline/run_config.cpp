#include "latadv/pipeline/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "latadv/error.hpp"

namespace latadv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ParameterError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ParameterError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "backend", "dataset", "out", "prompts", "surrogate", "targets", "n_images",
      "T", "N_i", "N_a", "beta", "zeta", "eta", "kappa", "mu", "w", "seed", "rho_mode",
      "mse_sign", "defenses", "fit.embedding_dim", "fit.shrinkage", "fit.surrogate_width",
      "fit.target_width", "fit.patch", "fit.surrogate_epochs", "fit.target_epochs",
      "fit.learning_rate", "fit.batch", "force"};
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  auto& a = attack;
  if (key == "backend") backend = value;
  else if (key == "dataset") dataset = value;
  else if (key == "out") out = value;
  else if (key == "prompts") prompts = value;
  else if (key == "surrogate") surrogate = value;
  else if (key == "targets") targets = parse_list(value);
  else if (key == "n_images") n_images = parse_number<std::size_t>(key, value);
  else if (key == "T") a.steps = parse_number<int>(key, value);
  else if (key == "N_i") a.inner_iterations = parse_number<int>(key, value);
  else if (key == "N_a") a.attack_iterations = parse_number<int>(key, value);
  else if (key == "beta") a.beta = parse_number<double>(key, value);
  else if (key == "zeta") a.zeta = parse_number<double>(key, value);
  else if (key == "eta") a.eta = parse_number<double>(key, value);
  else if (key == "kappa") a.kappa = parse_number<double>(key, value);
  else if (key == "mu") a.mu = parse_number<double>(key, value);
  else if (key == "w") a.guidance = parse_number<double>(key, value);
  else if (key == "seed") a.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "rho_mode") a.rho_mode = parse_rho_mode(value);
  else if (key == "mse_sign") a.mse_sign = parse_mse_sign(value);
  else if (key == "defenses") defenses = parse_list(value);
  else if (key == "fit.embedding_dim") fit.prior.embedding_dim = parse_number<std::size_t>(key, value);
  else if (key == "fit.shrinkage") fit.prior.shrinkage = parse_number<double>(key, value);
  else if (key == "fit.surrogate_width") fit.surrogate_arch.width = parse_number<std::size_t>(key, value);
  else if (key == "fit.target_width") fit.target_arch.width = parse_number<std::size_t>(key, value);
  else if (key == "fit.patch") fit.target_arch.patch = parse_number<std::size_t>(key, value);
  else if (key == "fit.surrogate_epochs") fit.surrogate_train.epochs = parse_number<int>(key, value);
  else if (key == "fit.target_epochs") fit.target_train.epochs = parse_number<int>(key, value);
  else if (key == "fit.learning_rate") {
    fit.surrogate_train.learning_rate = fit.target_train.learning_rate = parse_number<double>(key, value);
  } else if (key == "fit.batch") {
    fit.surrogate_train.batch = fit.target_train.batch = parse_number<std::size_t>(key, value);
  } else if (key == "force") force = parse_bool(key, value);
  else throw ParameterError("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
  const auto& a = attack;
  std::ostringstream o;
  o << "backend = " << backend << "\n"
    << "dataset = " << dataset.string() << "\n"
    << "out = " << out.string() << "\n"
    << "prompts = " << prompts << "\n"
    << "surrogate = " << surrogate << "\n"
    << "targets = " << join(targets) << "\n"
    << "n_images = " << n_images << "\n"
    << "T = " << a.steps << "\n"
    << "N_i = " << a.inner_iterations << "\n"
    << "N_a = " << a.attack_iterations << "\n"
    << "beta = " << num(a.beta) << "\n"
    << "zeta = " << num(a.zeta) << "\n"
    << "eta = " << num(a.eta) << "\n"
    << "kappa = " << num(a.kappa) << "\n"
    << "mu = " << num(a.mu) << "\n"
    << "w = " << num(a.guidance) << "\n"
    << "seed = " << a.seed << "\n"
    << "rho_mode = " << to_string(a.rho_mode) << "\n"
    << "mse_sign = " << to_string(a.mse_sign) << "\n"
    << "defenses = " << join(defenses) << "\n"
    << "fit.embedding_dim = " << fit.prior.embedding_dim << "\n"
    << "fit.shrinkage = " << num(fit.prior.shrinkage) << "\n"
    << "fit.surrogate_width = " << fit.surrogate_arch.width << "\n"
    << "fit.target_width = " << fit.target_arch.width << "\n"
    << "fit.patch = " << fit.target_arch.patch << "\n"
    << "fit.surrogate_epochs = " << fit.surrogate_train.epochs << "\n"
    << "fit.target_epochs = " << fit.target_train.epochs << "\n"
    << "fit.learning_rate = " << num(fit.surrogate_train.learning_rate) << "\n"
    << "fit.batch = " << fit.surrogate_train.batch << "\n"
    << "force = " << (force ? "true" : "false") << "\n";
  return o.str();
}

std::string RunConfig::stage_text(const std::string& stage) const {
  if (stage == "all") {
    std::istringstream in(to_text());
    std::string line, out;
    while (std::getline(in, line)) {
      const std::string key = trim(line.substr(0, line.find('=')));
      if (key != "out" && key != "force") out += line + "\n";
    }
    return out;
  }
  // Keys each stage's outputs depend on, directly or through earlier stages.
  static const std::vector<std::string> fit_keys = {
      "backend", "dataset", "T", "zeta", "w", "seed", "fit.embedding_dim", "fit.shrinkage",
      "fit.surrogate_width", "fit.target_width", "fit.patch", "fit.surrogate_epochs",
      "fit.target_epochs", "fit.learning_rate", "fit.batch"};
  std::vector<std::string> keys = fit_keys;
  if (stage != "fit-toy") {
    for (const char* k : {"prompts", "N_i"}) keys.emplace_back(k);
  }
  if (stage == "attack" || stage == "evaluate") {
    for (const char* k : {"surrogate", "targets", "N_a", "beta", "eta", "kappa", "mu",
                          "rho_mode", "mse_sign"}) {
      keys.emplace_back(k);
    }
  }
  if (stage == "evaluate") keys.emplace_back("defenses");

  std::istringstream in(to_text());
  std::string line, out;
  while (std::getline(in, line)) {
    const std::string key = trim(line.substr(0, line.find('=')));
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) out += line + "\n";
  }
  return out;
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError("config line " + std::to_string(number) + ": expected key = value");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), std::move(base));
}

}  // namespace latadv
