#include "dfd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "dfd/binary_io.hpp"
#include "dfd/error.hpp"
#include "dfd/random.hpp"

namespace dfd {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kTensorVersion = 1;
constexpr const char* kManifestName = "manifest.txt";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  return out;
}

void require_labeled(const LabeledDataset& ds, const char* op) {
  for (const auto& s : ds.samples) {
    if (!s.label) throw ShapeError(std::string(op) + ": sample '" + s.id + "' has no label");
  }
}

// Indices of each class's samples in original order.
std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes()));
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    by_class.at(static_cast<std::size_t>(*ds.samples[i].label)).push_back(i);
  }
  return by_class;
}

LabeledDataset gather(const LabeledDataset& ds, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  LabeledDataset out = ds.like();
  out.samples.reserve(idx.size());
  for (auto i : idx) out.samples.push_back(ds.samples[i]);
  return out;
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::real: return "real";
    case Provenance::synthetic: return "synthetic";
    case Provenance::quasi: return "quasi";
  }
  return "real";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "real") return Provenance::real;
  if (s == "synthetic") return Provenance::synthetic;
  if (s == "quasi") return Provenance::quasi;
  throw FormatError("unknown provenance '" + s + "'");
}

std::vector<double> SignalSample::channel_f64(std::size_t c) const {
  auto ch = channel(c);
  return {ch.begin(), ch.end()};
}

void LabeledDataset::validate() const {
  if (class_names.size() < 2) throw SpecError("dataset needs at least 2 classes");
  std::unordered_set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) throw SpecError("duplicate sample id '" + s.id + "'");
    if (s.n_channels < 1 || s.n_points < 2) throw SpecError("sample '" + s.id + "' is too small");
    if (s.data.size() != s.n_channels * s.n_points) throw SpecError("sample '" + s.id + "' payload size");
    if (s.label && (*s.label < 0 || *s.label >= num_classes())) {
      throw SpecError("sample '" + s.id + "' label out of range");
    }
    for (float v : s.data) {
      if (!std::isfinite(v)) throw NonFinite("sample '" + s.id + "' has non-finite values");
    }
    const auto& f = samples.front();
    if (s.n_channels != f.n_channels || s.n_points != f.n_points || s.sample_rate != f.sample_rate) {
      throw SpecError("sample '" + s.id + "' shape differs from '" + f.id + "'");
    }
  }
}

std::vector<int> LabeledDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) throw ShapeError("sample '" + s.id + "' has no label");
    out.push_back(*s.label);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& s : samples) {
    if (s.label) ++counts.at(static_cast<std::size_t>(*s.label));
  }
  return counts;
}

// ---- file I/O ----------------------------------------------------------------

void write_tensor_file(const fs::path& path, const SignalSample& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingData("cannot write " + path.string());
  io::Writer w(out);
  w.magic("DFD1");
  w.u32(kTensorVersion);
  w.u32(static_cast<std::uint32_t>(s.n_channels));
  w.u32(static_cast<std::uint32_t>(s.n_points));
  w.f64(s.sample_rate);
  w.f32s(s.data);
  if (!out) throw MissingData("short write to " + path.string());
}

SignalSample read_tensor_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingData("missing tensor file " + path.string());
  io::Reader r(in, path.string());
  r.expect_magic("DFD1");
  if (const auto v = r.u32(); v != kTensorVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(v));
  }
  SignalSample s;
  s.n_channels = r.u32();
  s.n_points = r.u32();
  s.sample_rate = r.f64();
  s.data = r.f32s(s.n_channels * s.n_points);
  return s;
}

fs::path save_dataset(const LabeledDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path manifest = dir / kManifestName;
  std::ofstream out(manifest);
  if (!out) throw MissingData("cannot write " + manifest.string());
  out << "DFD1\t" << kTensorVersion << '\n';
  out << "classes";
  for (const auto& c : ds.class_names) out << '\t' << c;
  out << '\n';
  out << "provenance\t" << to_string(ds.provenance) << '\n';
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "s%06zu.dfd", i);
    write_tensor_file(dir / name, s);
    out << s.id << '\t' << (s.label ? std::to_string(*s.label) : "-") << '\t' << name << '\t'
        << to_string(s.provenance) << '\n';
  }
  if (!out) throw MissingData("short write to " + manifest.string());
  return manifest;
}

LabeledDataset load_dataset(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw MissingData("missing manifest " + manifest.string());
  const fs::path dir = manifest.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw FormatError(manifest.string() + ": empty manifest");
  const auto head = split_tabs(line);
  if (head.empty() || head[0] != "DFD1") throw FormatError(manifest.string() + ": bad magic");
  if (head.size() < 2 || head[1] != std::to_string(kTensorVersion)) {
    throw FormatError(manifest.string() + ": unsupported manifest version");
  }
  LabeledDataset ds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f[0] == "classes") {
      ds.class_names.assign(f.begin() + 1, f.end());
    } else if (f[0] == "provenance" && f.size() == 2) {
      ds.provenance = provenance_from_string(f[1]);
    } else {
      if (f.size() < 3) throw FormatError(manifest.string() + ": malformed line '" + line + "'");
      SignalSample s = read_tensor_file(dir / f[2]);
      s.id = f[0];
      if (f[1] != "-") s.label = std::stoi(f[1]);
      s.provenance = f.size() > 3 ? provenance_from_string(f[3]) : ds.provenance;
      ds.samples.push_back(std::move(s));
    }
  }
  ds.validate();
  return ds;
}

SignalSample sample_from_csv(const fs::path& csv, double sample_rate, std::string id,
                             std::optional<int> label) {
  std::ifstream in(csv);
  if (!in) throw MissingData("missing csv " + csv.string());
  std::vector<std::vector<float>> cols;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<float> row;
    std::istringstream ls(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stof(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw FormatError(csv.string() + ": non-numeric row '" + line + "'");
    }
    first = false;
    if (cols.empty()) cols.resize(row.size());
    if (row.size() != cols.size()) throw FormatError(csv.string() + ": ragged row '" + line + "'");
    for (std::size_t c = 0; c < row.size(); ++c) cols[c].push_back(row[c]);
  }
  if (cols.empty() || cols[0].size() < 2) throw MissingData(csv.string() + ": no samples");
  SignalSample s;
  s.id = std::move(id);
  s.label = label;
  s.sample_rate = sample_rate;
  s.n_channels = cols.size();
  s.n_points = cols[0].size();
  for (const auto& c : cols) s.data.insert(s.data.end(), c.begin(), c.end());
  return s;
}

// ---- sampling ----------------------------------------------------------------

LabeledDataset stratified_take(const LabeledDataset& ds, std::size_t per_class, std::uint64_t seed) {
  require_labeled(ds, "stratified_take");
  if (per_class == 0) throw ClassStarved("zero samples per class requested");
  Rng rng(seed);
  std::vector<std::size_t> keep;
  auto by_class = indices_by_class(ds);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.size() < per_class) {
      throw ClassStarved("class '" + ds.class_names[c] + "' has " + std::to_string(idx.size()) +
                         " samples, need " + std::to_string(per_class));
    }
    rng.shuffle(std::span(idx));
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  return gather(ds, std::move(keep));
}

LabeledDataset stratified_subsample(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidFraction("fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  require_labeled(ds, "stratified_subsample");
  Rng rng(seed);
  std::vector<std::size_t> keep;
  auto by_class = indices_by_class(ds);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    // The epsilon absorbs representation error in products like 0.07 * 300.
    const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size()) + 1e-9));
    if (n < 1) throw ClassStarved("class '" + ds.class_names[c] + "' would keep no samples");
    rng.shuffle(std::span(idx));
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return gather(ds, std::move(keep));
}

DatasetSplit split_labeled(const LabeledDataset& ds, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InvalidFraction("val_fraction must lie in (0, 1), got " + std::to_string(val_fraction));
  }
  require_labeled(ds, "split_labeled");
  Rng rng(seed);
  std::vector<std::size_t> train, val;
  auto by_class = indices_by_class(ds);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    const double want = val_fraction * static_cast<double>(idx.size());
    const auto n_val = static_cast<std::size_t>(std::floor(want + 0.5 + 1e-9));
    if (idx.size() < 2 || n_val < 1 || n_val >= idx.size()) {
      throw ClassStarved("class '" + ds.class_names[c] + "' cannot be split (" +
                         std::to_string(idx.size()) + " samples)");
    }
    rng.shuffle(std::span(idx));
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  return {gather(ds, std::move(train)), gather(ds, std::move(val)), seed};
}

LabeledDataset difference(const LabeledDataset& ds, const LabeledDataset& exclude) {
  std::unordered_set<std::string> drop;
  for (const auto& s : exclude.samples) drop.insert(s.id);
  LabeledDataset out = ds.like();
  for (const auto& s : ds.samples) {
    if (!drop.contains(s.id)) out.samples.push_back(s);
  }
  return out;
}

LabeledDataset inject_label_noise(const LabeledDataset& ds, double fraction, std::uint64_t seed,
                                  std::vector<std::string>* touched) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw InvalidFraction("noise fraction must lie in [0, 1], got " + std::to_string(fraction));
  }
  require_labeled(ds, "inject_label_noise");
  const auto count =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ds.size()) + 0.5 + 1e-9));
  Rng rng(seed);
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(std::span(idx));
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  LabeledDataset out = ds;
  const auto n_classes = static_cast<std::uint64_t>(ds.num_classes());
  for (auto i : idx) {
    out.samples[i].label = static_cast<int>(rng.below(n_classes));
    if (touched) touched->push_back(out.samples[i].id);
  }
  return out;
}

}  // namespace dfd
