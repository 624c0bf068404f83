// Copyright 2026 The DHCE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

#include "dhce/ehr.hpp"
#include "dhce/errors.hpp"
#include "gtest/gtest.h"

namespace dhce::ehr {
namespace {

namespace fs = std::filesystem;

class TempFile {
 public:
  explicit TempFile(const std::string& content) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("dhce_ehr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::ofstream(path_) << content;
  }
  ~TempFile() { fs::remove(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

LoadResult load_text(const std::string& text) {
  std::istringstream in(text);
  return load_dataset(in, nullptr);
}

std::string error_of(const std::string& text) {
  try {
    load_text(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

const char* kTwoVisits = R"({"patient_id":"p1","visits":[{"codes":["A","B"]},{"codes":["B","C"]}]})";

TEST(VocabularyTest, IndexIsBijection) {
  DiseaseVocabulary v({"x", "y", "z"});
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.index_of(v.code(i)), i);
  EXPECT_FALSE(v.find("w"));
  EXPECT_THROW(v.index_of("w"), DataError);
  EXPECT_THROW(DiseaseVocabulary({"x", "x"}), DataError);
}

TEST(VocabularyTest, InternKeepsFirstIndex) {
  DiseaseVocabulary v;
  EXPECT_EQ(v.intern("b"), 0u);
  EXPECT_EQ(v.intern("a"), 1u);
  EXPECT_EQ(v.intern("b"), 0u);
  EXPECT_EQ(v.size(), 2u);
}

TEST(LoadTest, TwoVisitPatient) {
  TempFile f(std::string(kTwoVisits) + "\n");
  LoadResult r = load_dataset(f.path());
  EXPECT_EQ(r.dataset.vocabulary->size(), 3u);
  ASSERT_EQ(r.dataset.patients.size(), 1u);
  EXPECT_EQ(r.dataset.patients[0].visits.size(), 2u);
  EXPECT_EQ(r.dropped_count, 0u);
  EXPECT_EQ(r.dataset.vocabulary->codes(), (std::vector<std::string>{"A", "B", "C"}));
}

TEST(LoadTest, LoadingTwiceGivesSameVocabulary) {
  TempFile f(R"({"patient_id":"a","visits":[{"codes":["Z","M"]},{"codes":["B","Z"]}]})"
             "\n" +
             std::string(kTwoVisits) + "\n");
  LoadResult a = load_dataset(f.path());
  LoadResult b = load_dataset(f.path());
  EXPECT_EQ(*a.dataset.vocabulary, *b.dataset.vocabulary);
  EXPECT_EQ(a.dataset.vocabulary->codes(), (std::vector<std::string>{"Z", "M", "B", "A", "C"}));
}

TEST(LoadTest, SingleVisitPatientIsDropped) {
  LoadResult r = load_text(R"({"patient_id":"p","visits":[{"codes":["A"]}]})");
  EXPECT_TRUE(r.dataset.patients.empty());
  EXPECT_EQ(r.dropped_count, 1u);
}

TEST(LoadTest, MalformedLineCarriesLineNumber) {
  const std::string msg = error_of(std::string(kTwoVisits) + "\n\n{not json\n");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(LoadTest, EmptyVisitIsAnError) {
  EXPECT_NE(error_of(R"({"patient_id":"p","visits":[{"codes":[]},{"codes":["A"]}]})").find("empty"),
            std::string::npos);
}

TEST(LoadTest, DuplicatePatientIsAnError) {
  const std::string msg = error_of(std::string(kTwoVisits) + "\n" + kTwoVisits + "\n");
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(LoadTest, UnknownKeysAreRejected) {
  EXPECT_FALSE(error_of(R"({"patient_id":"p","age":3,"visits":[]})").empty());
  EXPECT_FALSE(error_of(R"({"patient_id":"p","visits":[{"codes":["A"],"x":1},{"codes":["A"]}]})")
                   .empty());
  EXPECT_FALSE(
      error_of(R"({"patient_id":"p","visits":[{"codes":["A"],"events":[{"type":"lab","v":1}]},)"
               R"({"codes":["A"]}]})")
          .empty());
}

TEST(LoadTest, EventsKeepFeatureOrderAndRegisterTypes) {
  LoadResult r = load_text(
      R"({"patient_id":"p","visits":[{"codes":["A"],"events":[{"type":"rx","features":[["z","1"],["a","2"]]}]},)"
      R"({"codes":["A"],"events":[{"type":"lab","features":[]},{"type":"rx"}]}]})");
  const auto& ev = r.dataset.patients[0].visits[0].events.at(0);
  EXPECT_EQ(ev.type, "rx");
  ASSERT_EQ(ev.features.size(), 2u);
  EXPECT_EQ(ev.features[0].first, "z");
  EXPECT_EQ(ev.features[1].first, "a");
  EXPECT_EQ(r.dataset.event_types, (std::vector<std::string>{"rx", "lab"}));
}

TEST(LoadTest, SidecarVocabularyFixesOrderAndRejectsUnknownCodes) {
  TempFile data(std::string(kTwoVisits) + "\n");
  TempFile vocab("C\nB\nA\nQ\n");
  LoadResult r = load_dataset(data.path(), vocab.path());
  EXPECT_EQ(r.dataset.vocabulary->codes(), (std::vector<std::string>{"C", "B", "A", "Q"}));
  TempFile small("A\nB\n");
  EXPECT_THROW(load_dataset(data.path(), small.path()), DataError);
}

TEST(LoadTest, WriteThenLoadRoundTrips) {
  SynthConfig cfg;
  cfg.n_patients = 20;
  cfg.vocab_size = 15;
  Dataset ds = generate_synthetic(cfg);
  std::ostringstream out;
  write_dataset(ds, out);
  std::istringstream in(out.str());
  LoadResult r = load_dataset(in, ds.vocabulary);
  EXPECT_EQ(r.dataset.patients, ds.patients);
  EXPECT_EQ(*r.dataset.vocabulary, *ds.vocabulary);
}

TEST(LoadTest, LoadedDatasetsValidate) {
  LoadResult r = load_text(std::string(kTwoVisits));
  EXPECT_NO_THROW(validate(r.dataset));
  Dataset bad = r.dataset;
  bad.patients[0].visits[0].codes.push_back("unknown");
  EXPECT_THROW(validate(bad), DataError);
}

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_patients = 50;
  cfg.vocab_size = 30;
  cfg.rules = {{1, 2, 0.9}, {3, 4, 0.5}};
  cfg.seed = seed;
  return cfg;
}

std::string dump(const Dataset& ds) {
  std::ostringstream out;
  write_dataset(ds, out);
  return out.str();
}

TEST(GenerateTest, SameConfigGivesByteIdenticalOutput) {
  EXPECT_EQ(dump(generate_synthetic(small_config(4))), dump(generate_synthetic(small_config(4))));
  EXPECT_NE(dump(generate_synthetic(small_config(4))), dump(generate_synthetic(small_config(5))));
}

TEST(GenerateTest, OutputRespectsConfigShape) {
  SynthConfig cfg = small_config(1);
  cfg.visits_per_patient = {3, 5};
  cfg.codes_per_visit = {2, 4};
  Dataset ds = generate_synthetic(cfg);
  EXPECT_NO_THROW(validate(ds));
  ASSERT_EQ(ds.patients.size(), cfg.n_patients);
  for (const auto& p : ds.patients) {
    EXPECT_GE(p.visits.size(), 3u);
    EXPECT_LE(p.visits.size(), 5u);
    for (const auto& v : p.visits) {
      EXPECT_GE(v.codes.size(), 2u);
      EXPECT_GE(v.events.size(), 1u);
      EXPECT_LE(v.events.size(), 3u);
      for (const auto& e : v.events) {
        EXPECT_TRUE(e.type == "lab" || e.type == "rx" || e.type == "proc") << e.type;
      }
    }
  }
}

TEST(GenerateTest, CertainRuleAlwaysInduces) {
  SynthConfig cfg;
  cfg.n_patients = 300;
  cfg.vocab_size = 20;
  cfg.chronic_persistence = 0.0;
  cfg.event_noise = 0.0;
  cfg.rules = {{0, 1, 1.0}};
  cfg.seed = 9;
  Dataset ds = generate_synthetic(cfg);
  const std::string a = synthetic_code(0), b = synthetic_code(1);
  std::size_t triggers = 0;
  for (const auto& p : ds.patients) {
    for (std::size_t t = 0; t + 1 < p.visits.size(); ++t) {
      const auto& now = p.visits[t].codes;
      if (std::find(now.begin(), now.end(), a) == now.end()) continue;
      ++triggers;
      const auto& next = p.visits[t + 1].codes;
      EXPECT_NE(std::find(next.begin(), next.end(), b), next.end());
    }
  }
  EXPECT_GT(triggers, 50u);
}

TEST(GenerateTest, InductionFrequencyMatchesRuleProbability) {
  // One code per visit and a rule i -> i+1 for every code: each transition is
  // exactly one trigger. Without induction the next code is uniform noise.
  SynthConfig cfg;
  cfg.n_patients = 1200;
  cfg.vocab_size = 100;
  cfg.visits_per_patient = {6, 6};
  cfg.codes_per_visit = {1, 1};
  cfg.chronic_persistence = 0.0;
  cfg.seed = 2024;
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
    cfg.rules.push_back({i, (i + 1) % cfg.vocab_size, 0.9});
  }
  Dataset ds = generate_synthetic(cfg);
  std::size_t triggers = 0, induced = 0;
  for (const auto& p : ds.patients) {
    for (std::size_t t = 0; t + 1 < p.visits.size(); ++t) {
      ASSERT_EQ(p.visits[t].codes.size(), 1u);
      const std::size_t c = ds.vocabulary->index_of(p.visits[t].codes[0]);
      const std::string want = synthetic_code((c + 1) % cfg.vocab_size);
      ++triggers;
      const auto& next = p.visits[t + 1].codes;
      induced += std::find(next.begin(), next.end(), want) != next.end() ? 1 : 0;
    }
  }
  ASSERT_GE(triggers, 5000u);
  const double freq = static_cast<double>(induced) / static_cast<double>(triggers);
  EXPECT_GE(freq, 0.87);
  EXPECT_LE(freq, 0.93);
}

TEST(GenerateTest, InvalidConfigsAreRejected) {
  SynthConfig cfg;
  cfg.vocab_size = 3;
  cfg.codes_per_visit = {2, 5};
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.chronic_persistence = 1.5;
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.rules = {{0, 50, 0.5}};
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.visits_per_patient = {4, 2};
  EXPECT_THROW(generate_synthetic(cfg), ConfigError);
}

TEST(GenerateTest, RandomRulesAreDistinctAndInRange) {
  auto rules = random_rules(10, 40, 0.7, 3);
  ASSERT_EQ(rules.size(), 40u);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& r : rules) {
    EXPECT_NE(r.trigger, r.induced);
    EXPECT_LT(r.trigger, 10u);
    EXPECT_LT(r.induced, 10u);
    EXPECT_EQ(r.probability, 0.7);
    EXPECT_TRUE(seen.insert({r.trigger, r.induced}).second);
  }
}

Dataset n_patients(std::size_t n) {
  SynthConfig cfg;
  cfg.n_patients = n;
  cfg.vocab_size = 10;
  return generate_synthetic(cfg);
}

std::multiset<std::string> ids(const Dataset& d) {
  std::multiset<std::string> out;
  for (const auto& p : d.patients) out.insert(p.patient_id);
  return out;
}

TEST(SplitTest, TenPatientsEightOneOne) {
  Dataset ds = n_patients(10);
  auto parts = split_dataset(ds, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(parts[0].patients.size(), 8u);
  EXPECT_EQ(parts[1].patients.size(), 1u);
  EXPECT_EQ(parts[2].patients.size(), 1u);
  std::multiset<std::string> all;
  for (const auto& part : parts) {
    for (const auto& id : ids(part)) all.insert(id);
    EXPECT_EQ(part.vocabulary.get(), ds.vocabulary.get());
  }
  EXPECT_EQ(all, ids(ds));
}

TEST(SplitTest, DegenerateRatiosPutEverythingInTrain) {
  Dataset ds = n_patients(7);
  auto parts = split_dataset(ds, {1.0, 0.0, 0.0}, 3);
  EXPECT_EQ(parts[0].patients, ds.patients);
  EXPECT_TRUE(parts[1].patients.empty());
  EXPECT_TRUE(parts[2].patients.empty());
}

TEST(SplitTest, SameSeedSameMembership) {
  Dataset ds = n_patients(40);
  auto a = split_dataset(ds, {0.6, 0.2, 0.2}, 77);
  auto b = split_dataset(ds, {0.6, 0.2, 0.2}, 77);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a[i].patients, b[i].patients);
}

TEST(SplitTest, Errors) {
  Dataset ds = n_patients(2);
  EXPECT_THROW(split_dataset(ds, {0.8, 0.1, 0.1}, 0), DataError);
  EXPECT_THROW(split_dataset(ds, {0.5, 0.2, 0.2}, 0), ConfigError);
  EXPECT_THROW(split_dataset(ds, {1.2, -0.1, -0.1}, 0), ConfigError);
}

TEST(SplitProperty, PartitionHoldsForManySeeds) {
  Dataset ds = n_patients(53);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto parts = split_dataset(ds, {0.7, 0.15, 0.15}, seed);
    std::multiset<std::string> all;
    for (const auto& part : parts) {
      for (const auto& id : ids(part)) all.insert(id);
    }
    // Equality of multisets: no patient lost, none duplicated.
    ASSERT_EQ(all, ids(ds)) << "seed " << seed;
  }
}

}  // namespace
}  // namespace dhce::ehr
