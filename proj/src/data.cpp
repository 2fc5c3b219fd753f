#include "finp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "finp/error.hpp"
#include "json.hpp"

namespace finp::data {

void Dataset::validate() const {
  if (size() == 0) fail(ErrorKind::data, "dataset is empty");
  if (features.size() != size() * dim) fail(ErrorKind::data, "dataset feature matrix has wrong size");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= class_count)
      fail(ErrorKind::data, "label " + std::to_string(y) + " outside [0, " + std::to_string(class_count) + ")");
  for (double x : features)
    if (!std::isfinite(x)) fail(ErrorKind::data, "dataset has a non-finite feature");
}

nn::Batch Dataset::batch() const {
  nn::Batch b;
  b.dim = dim;
  b.inputs = features;
  b.labels = labels;
  return b;
}

nn::Batch Dataset::batch(std::span<const std::size_t> indices) const {
  nn::Batch b;
  b.dim = dim;
  b.inputs.reserve(indices.size() * dim);
  for (auto i : indices) {
    auto r = row(i);
    b.inputs.insert(b.inputs.end(), r.begin(), r.end());
    b.labels.push_back(labels[i]);
  }
  return b;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset d;
  d.dim = dim;
  d.class_count = class_count;
  nn::Batch b = batch(indices);
  d.features = std::move(b.inputs);
  d.labels = std::move(b.labels);
  return d;
}

Dataset synth_gaussian_mixture(std::size_t classes, std::size_t dim, std::size_t n_per_class,
                               double separation, Rng& rng) {
  if (classes < 2) fail(ErrorKind::config, "synthetic data needs at least 2 classes");
  if (dim < 1) fail(ErrorKind::config, "synthetic data needs dim >= 1");
  if (!(separation > 0.0)) fail(ErrorKind::config, "separation must be > 0");

  std::vector<double> centres(classes * dim, 0.0);
  if (classes <= dim) {
    for (std::size_t c = 0; c < classes; ++c) centres[c * dim + c] = separation;
  } else {
    Rng dirs = substream(0x5eed, Stream::data_gen, classes, dim);
    for (std::size_t c = 0; c < classes; ++c) {
      std::span<double> u(centres.data() + c * dim, dim);
      fill_normal(dirs, u);
      double n = 0.0;
      for (double x : u) n += x * x;
      n = std::sqrt(n);
      for (double& x : u) x *= separation / n;
    }
  }

  Dataset ds;
  ds.dim = dim;
  ds.class_count = classes;
  ds.features.resize(classes * n_per_class * dim);
  ds.labels.resize(classes * n_per_class);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t r = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++r) {
      ds.labels[r] = static_cast<int>(c);
      for (std::size_t j = 0; j < dim; ++j) ds.features[r * dim + j] = centres[c * dim + j] + noise(rng);
    }
  }
  return ds;
}

Partition dirichlet_partition(const Dataset& ds, std::size_t k, double alpha, Rng& rng, std::size_t min_size) {
  if (k < 2) fail(ErrorKind::config, "dirichlet_partition: need K >= 2");
  if (!(alpha > 0.0)) fail(ErrorKind::config, "dirichlet_partition: alpha must be > 0");
  min_size = std::max<std::size_t>(min_size, 1);
  if (ds.size() < k * min_size)
    fail(ErrorKind::data, "dirichlet_partition: too few examples for " + std::to_string(k) + " shards of size >= " +
                              std::to_string(min_size));
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Partition p;
    p.shards.assign(k, {});
    for (auto idx : by_class) {
      if (idx.empty()) continue;
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<double> share(k);
      double s = 0.0;
      for (auto& x : share) {
        x = gamma(rng);
        s += x;
      }
      if (!(s > 0.0)) {
        // Every gamma draw underflowed; give the class to one random shard.
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        std::fill(share.begin(), share.end(), 0.0);
        share[pick(rng)] = 1.0;
        s = 1.0;
      }
      for (auto& x : share) x /= s;
      std::vector<std::size_t> count(k);
      std::size_t used = 0;
      for (std::size_t j = 0; j < k; ++j) {
        count[j] = static_cast<std::size_t>(std::floor(share[j] * static_cast<double>(idx.size())));
        used += count[j];
      }
      const auto largest = static_cast<std::size_t>(std::max_element(share.begin(), share.end()) - share.begin());
      count[largest] += idx.size() - used;
      std::size_t pos = 0;
      for (std::size_t j = 0; j < k; ++j) {
        p.shards[j].insert(p.shards[j].end(), idx.begin() + static_cast<std::ptrdiff_t>(pos),
                           idx.begin() + static_cast<std::ptrdiff_t>(pos + count[j]));
        pos += count[j];
      }
    }
    const bool ok = std::none_of(p.shards.begin(), p.shards.end(), [&](const auto& s) { return s.size() < min_size; });
    if (ok) {
      for (auto& s : p.shards) std::sort(s.begin(), s.end());
      return p;
    }
  }
  fail(ErrorKind::data, "dirichlet_partition: a shard stayed below " + std::to_string(min_size) + " examples after 100 attempts");
}

Partition iid_partition(const Dataset& ds, std::size_t k, Rng& rng) {
  if (k < 2) fail(ErrorKind::config, "iid_partition: need K >= 2");
  if (ds.size() < k) fail(ErrorKind::data, "iid_partition: fewer examples than clients");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Partition p;
  p.shards.assign(k, {});
  const std::size_t base = ds.size() / k, extra = ds.size() % k;
  std::size_t pos = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t n = base + (j < extra ? 1 : 0);
    p.shards[j].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                       idx.begin() + static_cast<std::ptrdiff_t>(pos + n));
    std::sort(p.shards[j].begin(), p.shards[j].end());
    pos += n;
  }
  return p;
}

Split train_test_split(const Dataset& ds, double test_fraction, Rng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    fail(ErrorKind::config, "test_fraction must lie in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test >= n)
    fail(ErrorKind::data, "train_test_split: split of " + std::to_string(n) + " examples leaves an empty side");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {ds.subset(train), ds.subset(test)};
}

namespace {

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::size_t class_count) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open " + path.string());
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  int max_label = -1;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = split_commas(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    double lab = 0.0;
    if (!parse_double(fields[0], lab)) {
      if (first_content) {
        first_content = false;
        continue;  // header
      }
      fail(ErrorKind::data, where + ": label is not numeric");
    }
    first_content = false;
    if (fields.size() < 2) fail(ErrorKind::data, where + ": row has no features");
    if (lab != std::floor(lab) || lab < 0) fail(ErrorKind::data, where + ": label must be a non-negative integer");
    const std::size_t dim = fields.size() - 1;
    if (ds.dim == 0) ds.dim = dim;
    if (dim != ds.dim)
      fail(ErrorKind::data, where + ": expected " + std::to_string(ds.dim) + " features, got " + std::to_string(dim));
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      if (!parse_double(fields[j], v) || !std::isfinite(v))
        fail(ErrorKind::data, where + ": feature " + std::to_string(j) + " is not a finite number");
      ds.features.push_back(v);
    }
    const int y = static_cast<int>(lab);
    ds.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  if (ds.size() == 0) fail(ErrorKind::data, path.string() + ": no data rows");
  if (class_count == 0) {
    ds.class_count = static_cast<std::size_t>(max_label) + 1;
  } else {
    if (static_cast<std::size_t>(max_label) >= class_count)
      fail(ErrorKind::data, path.string() + ": label " + std::to_string(max_label) + " outside [0, " +
                                std::to_string(class_count) + ")");
    ds.class_count = class_count;
  }
  return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write " + path.string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    f << ds.labels[i];
    for (double x : ds.row(i)) f << ',' << format_double(x);
    f << '\n';
  }
  if (!f) fail(ErrorKind::io, "short write on " + path.string());
}

void write_partition_manifest(const std::filesystem::path& path, const Partition& p) {
  nlohmann::ordered_json j;
  j["clients"] = p.shards.size();
  nlohmann::ordered_json shards = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < p.shards.size(); ++k) shards[std::to_string(k)] = p.shards[k];
  j["shards"] = shards;
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write " + path.string());
  f << j.dump(1) << '\n';
}

Partition read_partition_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(f);
    Partition p;
    const auto k = j.at("clients").get<std::size_t>();
    for (std::size_t c = 0; c < k; ++c)
      p.shards.push_back(j.at("shards").at(std::to_string(c)).get<std::vector<std::size_t>>());
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, path.string() + ": " + e.what());
  }
}

}  // namespace finp::data
