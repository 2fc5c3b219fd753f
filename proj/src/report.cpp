#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <algorithm>
#include <limits>

#include "json.hpp"

#include "finp/error.hpp"
#include "finp/experiment.hpp"

namespace finp {

using nlohmann::ordered_json;

std::string format_double(double x) {
  if (!std::isfinite(x)) return "NA";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

namespace {

std::string fmt(const std::optional<double>& x) { return x ? format_double(*x) : "NA"; }

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& xs) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs)
    if (x) {
      s += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

ordered_json opt_json(const std::optional<double>& x) {
  if (x && std::isfinite(*x)) return *x;
  return nullptr;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorKind::io, "write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const char* const kPerClient[] = {"rho", "lambda", "trace", "p", "w", "sia", "tloss", "train_loss", "penalty", "diverged"};

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& s) {
  if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::data, "rounds.csv: bad number '" + s + "'");
  return v;
}

}  // namespace

Summary summarize(const std::vector<RoundRecord>& records, double convergence_delta) {
  if (records.empty()) fail(ErrorKind::data, "no rounds to summarize");
  Summary s;
  s.rounds = static_cast<int>(records.size());
  s.clients = records.front().sia_acc.size();
  s.train_acc = records.back().metrics.train_acc;
  s.test_acc = records.back().metrics.test_acc;

  double sum = 0.0, mx = -1.0;
  std::size_t n = 0;
  std::vector<std::optional<double>> cs, fs, cl, fl, eo;
  std::vector<double> test;
  for (const auto& r : records) {
    for (double a : r.sia_acc)
      if (std::isfinite(a)) {
        sum += a;
        mx = std::max(mx, a);
        ++n;
      }
    cs.push_back(r.metrics.cov_sia);
    fs.push_back(r.metrics.fi_sia);
    cl.push_back(r.metrics.cov_loss);
    fl.push_back(r.metrics.fi_loss);
    eo.push_back(r.metrics.eod);
    test.push_back(r.metrics.test_acc);
    if (std::find(r.diverged.begin(), r.diverged.end(), 1) != r.diverged.end()) s.diverged_rounds.push_back(r.round);
    if (r.ala_fallback) s.ala_fallback_rounds.push_back(r.round);
  }
  if (n > 0) {
    s.mean_sia = sum / static_cast<double>(n);
    s.max_sia = mx;
  }
  s.cov_sia = {cs.back(), mean_of(cs)};
  s.fi_sia = {fs.back(), mean_of(fs)};
  s.cov_loss = {cl.back(), mean_of(cl)};
  s.fi_loss = {fl.back(), mean_of(fl)};
  s.eod = {eo.back(), mean_of(eo)};
  s.convergence = metrics::convergence_round(test, convergence_delta);
  s.diverged = !s.diverged_rounds.empty();
  s.converged = s.convergence.round.has_value() && !s.diverged;
  return s;
}

std::string summary_json(const Summary& s) {
  auto pair = [](const MetricSummary& m) {
    ordered_json j;
    j["final"] = opt_json(m.final_round);
    j["round_mean"] = opt_json(m.round_mean);
    return j;
  };
  ordered_json j;
  j["rounds"] = s.rounds;
  j["clients"] = s.clients;
  j["train_acc"] = s.train_acc;
  j["test_acc"] = s.test_acc;
  j["mean_sia"] = opt_json(s.mean_sia);
  j["max_sia"] = opt_json(s.max_sia);
  j["cov_sia"] = pair(s.cov_sia);
  j["fi_sia"] = pair(s.fi_sia);
  j["cov_loss"] = pair(s.cov_loss);
  j["fi_loss"] = pair(s.fi_loss);
  j["eod"] = pair(s.eod);
  j["convergence_round"] = s.convergence.round ? ordered_json(*s.convergence.round) : ordered_json(nullptr);
  j["convergence_censored"] = s.convergence.censored;
  j["converged"] = s.converged;
  j["diverged"] = s.diverged;
  j["diverged_rounds"] = s.diverged_rounds;
  j["ala_fallback_rounds"] = s.ala_fallback_rounds;
  return j.dump(2) + "\n";
}

std::string rounds_csv(const std::vector<RoundRecord>& records) {
  if (records.empty()) fail(ErrorKind::data, "no rounds to write");
  const std::size_t K = records.front().sia_acc.size();
  std::ostringstream o;
  o << "round,train_acc,test_acc,mean_sia,max_sia,cov_sia,fi_sia,cov_loss,fi_loss,eod,"
       "objective,pca_components,ala_fallback,global_hash";
  for (const char* name : kPerClient)
    for (std::size_t k = 0; k < K; ++k) o << ',' << name << '_' << k;
  o << '\n';
  for (const auto& r : records) {
    const auto& m = r.metrics;
    o << r.round << ',' << format_double(m.train_acc) << ',' << format_double(m.test_acc) << ','
      << format_double(m.mean_sia) << ',' << format_double(m.max_sia) << ',' << fmt(m.cov_sia) << ','
      << fmt(m.fi_sia) << ',' << fmt(m.cov_loss) << ',' << fmt(m.fi_loss) << ',' << fmt(m.eod) << ','
      << fmt(r.objective) << ',' << r.pca_components << ',' << (r.ala_fallback ? 1 : 0) << ','
      << hex64(r.global_hash);
    for (const auto* v : {&r.rho, &r.lambda_max, &r.trace, &r.p, &r.weights, &r.sia_acc, &r.target_loss,
                          &r.train_loss, &r.penalty})
      for (std::size_t k = 0; k < K; ++k) o << ',' << (k < v->size() ? format_double((*v)[k]) : "NA");
    for (std::size_t k = 0; k < K; ++k) o << ',' << r.diverged[k];
    o << '\n';
  }
  return o.str();
}

std::vector<RoundRecord> parse_rounds_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::data, "rounds.csv is empty");
  const auto header = split_commas(line);
  constexpr std::size_t fixed = 14;
  constexpr std::size_t groups = std::size(kPerClient);
  if (header.size() < fixed || (header.size() - fixed) % groups != 0 || header[0] != "round")
    fail(ErrorKind::data, "rounds.csv: unexpected header");
  const std::size_t K = (header.size() - fixed) / groups;
  auto opt = [](double v) { return std::isfinite(v) ? std::optional<double>(v) : std::nullopt; };

  std::vector<RoundRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_commas(line);
    if (c.size() != header.size()) fail(ErrorKind::data, "rounds.csv: ragged row");
    RoundRecord r;
    r.round = static_cast<int>(parse_cell(c[0]));
    auto& m = r.metrics;
    m.round = r.round;
    m.train_acc = parse_cell(c[1]);
    m.test_acc = parse_cell(c[2]);
    m.mean_sia = parse_cell(c[3]);
    m.max_sia = parse_cell(c[4]);
    m.cov_sia = opt(parse_cell(c[5]));
    m.fi_sia = opt(parse_cell(c[6]));
    m.cov_loss = opt(parse_cell(c[7]));
    m.fi_loss = opt(parse_cell(c[8]));
    m.eod = opt(parse_cell(c[9]));
    r.objective = opt(parse_cell(c[10]));
    r.pca_components = static_cast<std::size_t>(parse_cell(c[11]));
    r.ala_fallback = c[12] == "1";
    r.global_hash = std::stoull(c[13], nullptr, 16);
    std::vector<double>* dst[] = {&r.rho, &r.lambda_max, &r.trace, &r.p, &r.weights, &r.sia_acc,
                                  &r.target_loss, &r.train_loss, &r.penalty};
    std::size_t col = fixed;
    for (auto* v : dst)
      for (std::size_t k = 0; k < K; ++k) v->push_back(parse_cell(c[col++]));
    for (std::size_t k = 0; k < K; ++k) r.diverged.push_back(static_cast<int>(parse_cell(c[col++])));
    out.push_back(std::move(r));
  }
  return out;
}

std::string sia_csv(const std::vector<SiaRecord>& sia) {
  std::ostringstream o;
  const std::size_t K = sia.empty() ? 0 : sia.front().result.clients;
  o << "round,client,accuracy,target_loss,model_hash";
  for (std::size_t k = 0; k < K; ++k) o << ",pred_" << k;
  o << '\n';
  for (const auto& s : sia)
    for (std::size_t k = 0; k < K; ++k) {
      o << s.round << ',' << k << ',' << format_double(s.result.accuracy[k]) << ','
        << format_double(s.result.target_loss[k]) << ',' << hex64(s.model_hash[k]);
      for (std::size_t j = 0; j < K; ++j) o << ',' << s.result.count(k, j);
      o << '\n';
    }
  return o.str();
}

std::string timings_csv(const std::vector<RoundRecord>& records) {
  std::ostringstream o;
  o << "round,train_s,sia_s,curvature_s,aggregation_s\n";
  for (const auto& r : records)
    o << r.round << ',' << format_double(r.timings.train) << ',' << format_double(r.timings.sia) << ','
      << format_double(r.timings.curvature) << ',' << format_double(r.timings.aggregation) << '\n';
  return o.str();
}

void write_targets_manifest(const std::filesystem::path& path, const TargetManifest& m) {
  ordered_json j;
  j["clients"] = m.targets.clients;
  j["n_per_client"] = m.targets.n_per_client;
  j["seed"] = m.seed;
  j["tie_break"] = m.tie_break == attack::TieBreak::random ? "random" : "lowest_id";
  ordered_json recs = ordered_json::array();
  for (const auto& r : m.targets.records) {
    ordered_json e;
    e["source"] = r.source;
    e["label"] = r.label;
    e["x"] = r.x;
    recs.push_back(std::move(e));
  }
  j["records"] = std::move(recs);
  write_file(path, j.dump() + "\n");
}

TargetManifest read_targets_manifest(const std::filesystem::path& path) {
  TargetManifest m;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    m.targets.clients = j.at("clients").get<std::size_t>();
    m.targets.n_per_client = j.at("n_per_client").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto tb = j.at("tie_break").get<std::string>();
    if (tb == "random") m.tie_break = attack::TieBreak::random;
    else if (tb != "lowest_id") fail(ErrorKind::data, path.string() + ": unknown tie_break '" + tb + "'");
    for (const auto& e : j.at("records")) {
      attack::TargetRecord r;
      r.source = e.at("source").get<int>();
      r.label = e.at("label").get<int>();
      r.x = e.at("x").get<std::vector<double>>();
      if (r.source < 0 || static_cast<std::size_t>(r.source) >= m.targets.clients)
        fail(ErrorKind::data, path.string() + ": target source out of range");
      m.targets.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
  if (m.targets.clients < 2) fail(ErrorKind::data, path.string() + ": need at least 2 clients");
  return m;
}

void emit_report(const RunResult& result, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / "rounds.csv", rounds_csv(result.records));
  write_file(out_dir / "sia.csv", sia_csv(result.sia));
  write_file(out_dir / "timings.csv", timings_csv(result.records));
  write_file(out_dir / "summary.json", summary_json(result.summary));
  write_file(out_dir / "config.resolved", result.config.to_text());
  data::write_partition_manifest(out_dir / "partition.json", result.partition);
  write_targets_manifest(out_dir / "targets.json", {result.targets, result.config.seed, result.config.tie_break});
}

std::string rerender_summary(const std::filesystem::path& dir) {
  const auto cfg = load_config(dir / "config.resolved");
  const auto records = parse_rounds_csv(read_file(dir / "rounds.csv"));
  const auto text = summary_json(summarize(records, cfg.convergence_delta));
  write_file(dir / "summary.json", text);
  return text;
}

}  // namespace finp
