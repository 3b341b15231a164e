#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "dfd/dataset.hpp"
#include "dfd/error.hpp"
#include "dfd/synthetic.hpp"
#include "helpers.hpp"

using namespace dfd;

namespace {

LabeledDataset small_dataset(std::size_t per_class, std::size_t classes = 7, std::uint64_t seed = 42) {
  auto spec = desk_signature_spec();
  spec.classes.resize(classes);
  spec.n_points = 256;
  return generate_synthetic(spec, per_class, seed);
}

std::set<std::string> ids_of(const LabeledDataset& ds) {
  std::set<std::string> out;
  for (const auto& s : ds.samples) out.insert(s.id);
  return out;
}

}  // namespace

TEST_CASE("generate_synthetic: construction contract") {
  auto spec = rig_signature_spec();
  spec.n_points = 1024;  // keeps the test fast; shape contract is the same
  const auto ds = generate_synthetic(spec, 10, 42);
  CHECK(ds.size() == 70);
  CHECK(ds.num_classes() == 7);
  for (auto c : ds.class_counts()) CHECK(c == 10);
  for (const auto& s : ds.samples) {
    CHECK(s.n_channels == spec.n_channels);
    CHECK(s.n_points == spec.n_points);
    CHECK(s.data.size() == spec.n_channels * spec.n_points);
    CHECK(s.provenance == Provenance::synthetic);
  }
  ds.validate();
}

TEST_CASE("generate_synthetic: same seed gives bit-identical data, other seed differs") {
  const auto a = small_dataset(3);
  const auto b = small_dataset(3);
  const auto c = small_dataset(3, 7, 43);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].id == b.samples[i].id);
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK(std::memcmp(a.samples[i].data.data(), b.samples[i].data.data(), a.samples[i].data.size() * 4) == 0);
  }
  CHECK(a.samples[0].data != c.samples[0].data);
}

TEST_CASE("generate_synthetic: noiseless single harmonic peaks at its bin (direct DFT)") {
  ClassSignatureSpec spec;
  spec.classes = {{"one", {{1.0, 1.0}}, 0, 0, 0}, {"two", {{2.0, 1.0}}, 0, 0, 0}};
  spec.noise_std = 0.0;
  spec.speed_jitter = 0.0;
  spec.amplitude_jitter = 0.0;
  spec.n_channels = 2;
  spec.n_points = 1280;  // 1 Hz resolution at 1280 Hz
  const auto ds = generate_synthetic(spec, 1, 7);
  for (const auto& s : ds.samples) {
    const std::size_t expected = (*s.label == 0 ? 25 : 50);
    for (std::size_t c = 0; c < s.n_channels; ++c) {
      const auto x = s.channel_f64(c);
      const auto X = testutil::direct_dft(x);
      std::size_t best = 1;
      for (std::size_t k = 1; k < x.size() / 2; ++k) {
        if (std::abs(X[k]) > std::abs(X[best])) best = k;
      }
      CHECK(best == expected);
    }
  }
}

TEST_CASE("synthetic spec validation") {
  auto spec = desk_signature_spec();
  spec.classes[1] = spec.classes[0];
  spec.classes[1].name = "copy";
  CHECK_THROWS_AS(spec.validate(), SpecError);
  spec = desk_signature_spec();
  spec.noise_std = -1;
  CHECK_THROWS_AS(spec.validate(), SpecError);
  spec = desk_signature_spec();
  spec.classes[0].harmonics = {{30.0, 1.0}};  // 750 Hz above Nyquist
  CHECK_THROWS_AS(spec.validate(), SpecError);
}

TEST_CASE("save/load round trip is bit-identical") {
  auto ds = small_dataset(2);
  ds.samples[3].label.reset();
  const auto dir = testutil::scratch("roundtrip");
  const auto manifest = save_dataset(ds, dir);
  const auto back = load_dataset(manifest);
  CHECK(back.class_names == ds.class_names);
  CHECK(back.provenance == ds.provenance);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& a = ds.samples[i];
    const auto& b = back.samples[i];
    CHECK(a.id == b.id);
    CHECK(a.label == b.label);
    CHECK(a.n_channels == b.n_channels);
    CHECK(a.n_points == b.n_points);
    CHECK(a.sample_rate == b.sample_rate);
    CHECK(a.provenance == b.provenance);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) == 0);
  }
}

TEST_CASE("tensor file layout") {
  SignalSample s;
  s.n_channels = 2;
  s.n_points = 3;
  s.sample_rate = 1280.0;
  s.data = {1, 2, 3, 4, 5, 6};
  const auto dir = testutil::scratch("layout");
  write_tensor_file(dir / "t.dfd", s);
  const auto bytes = testutil::slurp(dir / "t.dfd");
  REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 8 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "DFD1");
  std::uint32_t version, nc, np;
  double sr;
  float first, last;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&nc, bytes.data() + 8, 4);
  std::memcpy(&np, bytes.data() + 12, 4);
  std::memcpy(&sr, bytes.data() + 16, 8);
  std::memcpy(&first, bytes.data() + 24, 4);
  std::memcpy(&last, bytes.data() + 44, 4);
  CHECK(version == 1);
  CHECK(nc == 2);
  CHECK(np == 3);
  CHECK(sr == 1280.0);
  CHECK(first == 1.0f);
  CHECK(last == 6.0f);
}

TEST_CASE("load errors: missing tensor file and bad magic") {
  const auto ds = small_dataset(1, 2);
  const auto dir = testutil::scratch("errors");
  const auto manifest = save_dataset(ds, dir);
  const auto victim = dir / "s000000.dfd";
  const auto payload = testutil::slurp(victim);

  std::filesystem::remove(victim);
  CHECK_THROWS_AS(load_dataset(manifest), MissingData);

  std::ofstream(victim, std::ios::binary) << "XXXX" << payload.substr(4);
  CHECK_THROWS_AS(load_dataset(manifest), FormatError);

  std::ofstream(victim, std::ios::binary) << payload;
  std::string text = testutil::slurp(manifest);
  text.replace(0, 4, "NOPE");
  std::ofstream(manifest) << text;
  CHECK_THROWS_AS(load_dataset(manifest), FormatError);
  CHECK_THROWS_AS(load_dataset(dir / "absent.txt"), MissingData);
}

TEST_CASE("sample_from_csv reads columns as channels") {
  const auto dir = testutil::scratch("csv");
  std::ofstream(dir / "rec.csv") << "a,b\n1,10\n2,20\n3,30\n";
  const auto s = sample_from_csv(dir / "rec.csv", 100.0, "rec", 1);
  CHECK(s.n_channels == 2);
  CHECK(s.n_points == 3);
  CHECK(s.data == std::vector<float>{1, 2, 3, 10, 20, 30});
  CHECK(s.label == 1);
  std::ofstream(dir / "bad.csv") << "1,2\n3\n";
  CHECK_THROWS_AS(sample_from_csv(dir / "bad.csv", 100.0, "bad", std::nullopt), FormatError);
}

TEST_CASE("stratified_subsample: volume arithmetic") {
  const auto ds = small_dataset(300);
  CHECK(ds.size() == 2100);
  const auto sub = stratified_subsample(ds, 0.02, 1);
  CHECK(sub.size() == 42);
  for (auto c : sub.class_counts()) CHECK(c == 6);
  for (double f : {0.04, 0.06, 0.08, 0.5}) {
    const auto s = stratified_subsample(ds, f, 3);
    const auto counts = s.class_counts();
    CHECK(std::all_of(counts.begin(), counts.end(), [&](auto c) { return c == counts[0]; }));
    CHECK(counts[0] == static_cast<std::size_t>(std::floor(f * 300 + 1e-9)));
  }
}

TEST_CASE("stratified_subsample: identity and errors") {
  const auto ds = small_dataset(4);
  const auto all = stratified_subsample(ds, 1.0, 9);
  CHECK(ids_of(all) == ids_of(ds));
  CHECK_THROWS_AS(stratified_subsample(ds, 0.0, 1), InvalidFraction);
  CHECK_THROWS_AS(stratified_subsample(ds, 1.5, 1), InvalidFraction);
  CHECK_THROWS_AS(stratified_subsample(ds, 0.1, 1), ClassStarved);
}

TEST_CASE("split_labeled: counts, partition, determinism") {
  const auto ds = stratified_subsample(small_dataset(300), 0.02, 5);
  const auto split = split_labeled(ds, 1.0 / 3.0, 11);
  CHECK(split.train.size() == 28);
  CHECK(split.val.size() == 14);
  for (auto c : split.val.class_counts()) CHECK(c == 2);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split_labeled(ds, 1.0 / 3.0, seed);
    auto tr = ids_of(s.train);
    const auto va = ids_of(s.val);
    for (const auto& id : va) CHECK(!tr.contains(id));
    tr.insert(va.begin(), va.end());
    CHECK(tr == ids_of(ds));
  }
  const auto again = split_labeled(ds, 1.0 / 3.0, 11);
  CHECK(ids_of(again.val) == ids_of(split.val));
  CHECK_THROWS_AS(split_labeled(small_dataset(1), 1.0 / 3.0, 1), ClassStarved);
}

TEST_CASE("inject_label_noise: exact count, payload untouched") {
  const auto ds = small_dataset(300);
  const auto base = stratified_take(ds, 12, 2);
  LabeledDataset ds80 = base.like();
  ds80.samples.assign(base.samples.begin(), base.samples.begin() + 80);

  const auto same = inject_label_noise(ds80, 0.0, 4);
  CHECK(same.labels() == ds80.labels());

  std::vector<std::string> touched;
  const auto noisy = inject_label_noise(ds80, 1.0 / 8.0, 4, &touched);
  CHECK(touched.size() == 10);
  REQUIRE(noisy.size() == ds80.size());
  const std::set<std::string> touched_set(touched.begin(), touched.end());
  for (std::size_t i = 0; i < ds80.size(); ++i) {
    const auto& a = ds80.samples[i];
    const auto& b = noisy.samples[i];
    CHECK(a.id == b.id);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) == 0);
    if (!touched_set.contains(a.id)) CHECK(a.label == b.label);
  }
  const auto again = inject_label_noise(ds80, 1.0 / 8.0, 4);
  CHECK(again.labels() == noisy.labels());
}

TEST_CASE("difference keeps order and drops excluded ids") {
  const auto ds = small_dataset(3);
  const auto part = stratified_take(ds, 1, 3);
  const auto rest = difference(ds, part);
  CHECK(rest.size() == ds.size() - part.size());
  for (const auto& s : rest.samples) CHECK(!ids_of(part).contains(s.id));
}
