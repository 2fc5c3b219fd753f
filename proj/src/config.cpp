#include "finp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "finp/error.hpp"

namespace finp {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::fedavg: return "fedavg";
    case Strategy::finp_client_only: return "finp_client_only";
    case Strategy::finp_server_pca: return "finp_server_pca";
    case Strategy::finp_server_ala: return "finp_server_ala";
    case Strategy::finp_full_pca: return "finp_full_pca";
    case Strategy::finp_full_ala: return "finp_full_ala";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::fedavg, Strategy::finp_client_only, Strategy::finp_server_pca,
                 Strategy::finp_server_ala, Strategy::finp_full_pca, Strategy::finp_full_ala})
    if (strategy_name(s) == name) return s;
  fail(ErrorKind::config, "unknown strategy '" + std::string(name) + "'");
}

Aggregator aggregator_of(Strategy s) {
  switch (s) {
    case Strategy::finp_server_pca:
    case Strategy::finp_full_pca: return Aggregator::pca;
    case Strategy::finp_server_ala:
    case Strategy::finp_full_ala: return Aggregator::ala;
    default: return Aggregator::fedavg;
  }
}

bool uses_client_regularizer(Strategy s) {
  return s == Strategy::finp_client_only || s == Strategy::finp_full_pca || s == Strategy::finp_full_ala;
}

bool needs_rho(Strategy s) { return uses_client_regularizer(s) || aggregator_of(s) == Aggregator::ala; }

void ExperimentConfig::validate() const {
  if (rounds < 1) fail(ErrorKind::config, "rounds must be >= 1");
  if (clients < 2) fail(ErrorKind::config, "clients must be >= 2");
  client_config().validate();
  if (dataset != "synthetic" && dataset != "csv") fail(ErrorKind::config, "dataset must be synthetic or csv");
  if (dataset == "csv" && csv_dir.empty()) fail(ErrorKind::config, "dataset = csv needs csv_dir");
  if (partition != "dirichlet" && partition != "iid") fail(ErrorKind::config, "partition must be dirichlet or iid");
  if (!(alpha > 0.0)) fail(ErrorKind::config, "alpha must be > 0");
  if (classes < 2) fail(ErrorKind::config, "classes must be >= 2");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail(ErrorKind::config, "test_fraction must lie in (0, 1)");
  if (curvature_iters < 1 || curvature_probes < 1) fail(ErrorKind::config, "curvature iters/probes must be >= 1");
  if (!(convergence_delta > 0.0)) fail(ErrorKind::config, "convergence_delta must be > 0");
  if (workers < 1) fail(ErrorKind::config, "workers must be >= 1");
}

client::ClientConfig ExperimentConfig::client_config() const {
  client::ClientConfig c;
  c.beta = uses_client_regularizer(strategy) ? beta : 0.0;
  c.local_epochs = local_epochs;
  c.batch_size = batch_size;
  c.lr = lr;
  c.power_iters = power_iters;
  c.optimizer = optimizer;
  c.probe_rows = probe_rows;
  return c;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& v, const std::string& where) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) fail(ErrorKind::config, where + ": '" + v + "' is not a valid number");
  return out;
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::config, where + ": '" + v + "' is not a boolean");
}

std::vector<std::size_t> parse_list(const std::string& v, const std::string& where) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(trim(item), where));
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> s = {
      {"seed", [](auto& c, auto& v, auto& w) { c.seed = parse_number<std::uint64_t>(v, w); }},
      {"rounds", [](auto& c, auto& v, auto& w) { c.rounds = parse_number<int>(v, w); }},
      {"clients", [](auto& c, auto& v, auto& w) { c.clients = parse_number<std::size_t>(v, w); }},
      {"strategy", [](auto& c, auto& v, auto&) { c.strategy = parse_strategy(v); }},
      {"beta", [](auto& c, auto& v, auto& w) { c.beta = parse_number<double>(v, w); }},
      {"local_epochs", [](auto& c, auto& v, auto& w) { c.local_epochs = parse_number<int>(v, w); }},
      {"batch_size", [](auto& c, auto& v, auto& w) { c.batch_size = parse_number<std::size_t>(v, w); }},
      {"lr", [](auto& c, auto& v, auto& w) { c.lr = parse_number<double>(v, w); }},
      {"optimizer", [](auto& c, auto& v, auto&) { c.optimizer = client::parse_optimizer(v); }},
      {"power_iters", [](auto& c, auto& v, auto& w) { c.power_iters = parse_number<int>(v, w); }},
      {"probe_rows", [](auto& c, auto& v, auto& w) { c.probe_rows = parse_number<std::size_t>(v, w); }},
      {"dataset", [](auto& c, auto& v, auto&) { c.dataset = v; }},
      {"csv_dir", [](auto& c, auto& v, auto&) { c.csv_dir = v; }},
      {"partition", [](auto& c, auto& v, auto&) { c.partition = v; }},
      {"alpha", [](auto& c, auto& v, auto& w) { c.alpha = parse_number<double>(v, w); }},
      {"classes", [](auto& c, auto& v, auto& w) { c.classes = parse_number<std::size_t>(v, w); }},
      {"dim", [](auto& c, auto& v, auto& w) { c.dim = parse_number<std::size_t>(v, w); }},
      {"n_per_class", [](auto& c, auto& v, auto& w) { c.n_per_class = parse_number<std::size_t>(v, w); }},
      {"separation", [](auto& c, auto& v, auto& w) { c.separation = parse_number<double>(v, w); }},
      {"test_fraction", [](auto& c, auto& v, auto& w) { c.test_fraction = parse_number<double>(v, w); }},
      {"hidden", [](auto& c, auto& v, auto& w) { c.hidden = parse_list(v, w); }},
      {"activation", [](auto& c, auto& v, auto&) { c.activation = nn::parse_activation(v); }},
      {"n_per_client", [](auto& c, auto& v, auto& w) { c.n_per_client = parse_number<std::size_t>(v, w); }},
      {"tie_break",
       [](auto& c, auto& v, auto& w) {
         if (v == "lowest_id") c.tie_break = attack::TieBreak::lowest_id;
         else if (v == "random") c.tie_break = attack::TieBreak::random;
         else fail(ErrorKind::config, w + ": tie_break must be lowest_id or random");
       }},
      {"curvature_subsample", [](auto& c, auto& v, auto& w) { c.curvature_subsample = parse_number<std::size_t>(v, w); }},
      {"curvature_iters", [](auto& c, auto& v, auto& w) { c.curvature_iters = parse_number<int>(v, w); }},
      {"curvature_tol", [](auto& c, auto& v, auto& w) { c.curvature_tol = parse_number<double>(v, w); }},
      {"curvature_probes", [](auto& c, auto& v, auto& w) { c.curvature_probes = parse_number<int>(v, w); }},
      {"curvature_always", [](auto& c, auto& v, auto& w) { c.curvature_always = parse_bool(v, w); }},
      {"convergence_delta", [](auto& c, auto& v, auto& w) { c.convergence_delta = parse_number<double>(v, w); }},
      {"workers", [](auto& c, auto& v, auto& w) { c.workers = parse_number<int>(v, w); }},
      {"checkpoints", [](auto& c, auto& v, auto& w) { c.checkpoints = parse_bool(v, w); }},
      {"force_uniform_weights", [](auto& c, auto& v, auto& w) { c.force_uniform_weights = parse_bool(v, w); }},
      {"force_equal_rho", [](auto& c, auto& v, auto& w) { c.force_equal_rho = parse_bool(v, w); }},
  };
  return s;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, std::string_view origin) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) fail(ErrorKind::config, where + ": unknown key '" + key + "'");
    try {
      it->second(cfg, value, where);
    } catch (const Error& e) {
      if (std::string(e.what()).rfind(where, 0) == 0) throw;
      fail(ErrorKind::config, where + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream o;
  std::string hid;
  for (std::size_t i = 0; i < hidden.size(); ++i) hid += (i ? "," : "") + std::to_string(hidden[i]);
  if (hid.empty()) hid = "none";
  o << "seed = " << seed << '\n'
    << "rounds = " << rounds << '\n'
    << "clients = " << clients << '\n'
    << "strategy = " << strategy_name(strategy) << '\n'
    << "beta = " << fmt(beta) << '\n'
    << "local_epochs = " << local_epochs << '\n'
    << "batch_size = " << batch_size << '\n'
    << "lr = " << fmt(lr) << '\n'
    << "optimizer = " << client::optimizer_name(optimizer) << '\n'
    << "power_iters = " << power_iters << '\n'
    << "probe_rows = " << probe_rows << '\n'
    << "dataset = " << dataset << '\n';
  if (!csv_dir.empty()) o << "csv_dir = " << csv_dir << '\n';
  o << "partition = " << partition << '\n'
    << "alpha = " << fmt(alpha) << '\n'
    << "classes = " << classes << '\n'
    << "dim = " << dim << '\n'
    << "n_per_class = " << n_per_class << '\n'
    << "separation = " << fmt(separation) << '\n'
    << "test_fraction = " << fmt(test_fraction) << '\n'
    << "hidden = " << hid << '\n'
    << "activation = " << nn::activation_name(activation) << '\n'
    << "n_per_client = " << n_per_client << '\n'
    << "tie_break = " << (tie_break == attack::TieBreak::random ? "random" : "lowest_id") << '\n'
    << "curvature_subsample = " << curvature_subsample << '\n'
    << "curvature_iters = " << curvature_iters << '\n'
    << "curvature_tol = " << fmt(curvature_tol) << '\n'
    << "curvature_probes = " << curvature_probes << '\n'
    << "curvature_always = " << (curvature_always ? "true" : "false") << '\n'
    << "convergence_delta = " << fmt(convergence_delta) << '\n'
    << "checkpoints = " << (checkpoints ? "true" : "false") << '\n'
    << "force_uniform_weights = " << (force_uniform_weights ? "true" : "false") << '\n'
    << "force_equal_rho = " << (force_equal_rho ? "true" : "false") << '\n';
  return o.str();
}

}  // namespace finp
