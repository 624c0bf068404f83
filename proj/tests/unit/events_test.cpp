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

#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dhce/errors.hpp"
#include "dhce/events.hpp"
#include "gtest/gtest.h"
#include "httplib.h"
#include "json.hpp"

namespace dhce::events {
namespace {

using json = nlohmann::json;
using num::Tensor;

ehr::ClinicalEvent event(std::string type, std::vector<std::pair<std::string, std::string>> f) {
  return {std::move(type), std::move(f)};
}

TEST(SerializeTest, LabWithTwoFeatures) {
  EXPECT_EQ(serialize_event(event("lab", {{"glucose", "180"}, {"hba1c", "7.2"}})).text,
            "[CLS] lab [SEP] glucose [SEP] 180 [SEP] hba1c [SEP] 7.2");
}

TEST(SerializeTest, NoFeatures) {
  EventText t = serialize_event(event("lab", {}));
  EXPECT_EQ(t.text, "[CLS] lab");
  EXPECT_EQ(t.event_type, "lab");
}

TEST(SerializeTest, Deterministic) {
  auto e = event("rx", {{"drug", "x"}});
  EXPECT_EQ(serialize_event(e).text, serialize_event(e).text);
}

TEST(SerializeTest, EmptyTypeIsAnError) { EXPECT_THROW(serialize_event(event("", {})), DataError); }

TEST(SerializeTest, GoldenCorpus) {
  std::ifstream in(std::string(DHCE_TEST_DATA_DIR) + "/events_golden.jsonl");
  ASSERT_TRUE(in) << "missing golden corpus";
  std::string line;
  std::size_t n = 0;
  std::set<std::string> texts;
  while (std::getline(in, line)) {
    const json j = json::parse(line);
    ehr::ClinicalEvent e{j["type"].get<std::string>(), {}};
    for (const auto& f : j["features"]) {
      e.features.emplace_back(f[0].get<std::string>(), f[1].get<std::string>());
    }
    const std::string text = serialize_event(e).text;
    EXPECT_EQ(text, j["text"].get<std::string>()) << "line " << n + 1;
    EXPECT_EQ(text.rfind("[CLS]", 0), 0u);
    EXPECT_NE(text.back(), ' ');
    texts.insert(text);
    ++n;
  }
  EXPECT_EQ(n, 20u);
  EXPECT_EQ(texts.size(), n);
}

double norm(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return std::sqrt(s);
}

TEST(HashingTest, SameTextSameRow) {
  const std::vector<std::string> texts{"[CLS] lab [SEP] glucose", "[CLS] lab [SEP] glucose"};
  Tensor t = hashing_encode(texts, 32, 7);
  for (std::size_t c = 0; c < 32; ++c) EXPECT_EQ(t(0, c), t(1, c));
  double dot = 0.0;
  for (std::size_t c = 0; c < 32; ++c) dot += t(0, c) * t(1, c);
  EXPECT_NEAR(dot / (norm(t.row(0)) * norm(t.row(1))), 1.0, 1e-12);
}

TEST(HashingTest, EmptyStringIsZero) {
  Tensor t = hashing_encode(std::vector<std::string>{"", "   "}, 16, 0);
  EXPECT_EQ(t, Tensor(2, 16, 0.0));
}

TEST(HashingTest, NonEmptyRowsAreUnitNorm) {
  std::mt19937_64 rng(3);
  std::vector<std::string> texts;
  for (int i = 0; i < 100; ++i) {
    std::string s;
    for (std::size_t k = 0; k < 1 + rng() % 12; ++k) s += "tok" + std::to_string(rng() % 50) + " ";
    texts.push_back(s);
  }
  Tensor t = hashing_encode(texts, 8 + 8 * (rng() % 4), 11);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const double n = norm(t.row(r));
    // A text can hash to exact cancellation; such rows are zero.
    if (n != 0.0) {
      EXPECT_NEAR(n, 1.0, 1e-12);
    }
  }
}

TEST(HashingTest, RowDoesNotDependOnBatch) {
  const std::vector<std::string> batch{"alpha beta", "[CLS] rx [SEP] drug [SEP] aspirin", "gamma"};
  Tensor all = hashing_encode(batch, 24, 5);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor alone = hashing_encode(std::span(&batch[i], 1), 24, 5);
    for (std::size_t c = 0; c < 24; ++c) EXPECT_EQ(alone(0, c), all(i, c));
  }
}

TEST(HashingTest, SeedChangesOutputAndDimIsChecked) {
  const std::vector<std::string> t{"one two three"};
  EXPECT_NE(hashing_encode(t, 16, 1), hashing_encode(t, 16, 2));
  EXPECT_NE(hash_token("a", 0), hash_token("a", 1));
  EXPECT_EQ(hash_token("a", 0), hash_token("a", 0));
  EXPECT_THROW(hashing_encode(t, 7, 0), ConfigError);
  EXPECT_THROW(HashingEncoder(4, 0), ConfigError);
}

TEST(HashingTest, EncoderSpecRoundTrips) {
  HashingEncoder enc(16, 9);
  EncoderSpec s = enc.spec();
  EXPECT_EQ(s.kind, EncoderSpec::Kind::kHashing);
  auto rebuilt = make_encoder(s);
  const std::vector<std::string> t{"x y z"};
  EXPECT_EQ(rebuilt->encode(t), enc.encode(t));
}

// Embedding service on an ephemeral localhost port.
class StubService {
 public:
  using EncodeFn = std::function<void(const json& request, httplib::Response& res)>;

  StubService(int dim, EncodeFn encode) {
    server_.Get("/info", [dim](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"dim", dim}}.dump(), "application/json");
    });
    server_.Post("/encode", [this, encode](const httplib::Request& req, httplib::Response& res) {
      ++encode_calls;
      encode(json::parse(req.body), res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubService() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> encode_calls{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

// Row i is [i + 0.25, len + 1, len + 2, ...] where len is the text length.
json fixed_vectors(const json& req, int dim) {
  json rows = json::array();
  for (std::size_t i = 0; i < req["texts"].size(); ++i) {
    json row = json::array();
    for (int c = 0; c < dim; ++c) {
      row.push_back(c == 0 ? static_cast<double>(i) + 0.25
                           : static_cast<double>(req["texts"][i].get<std::string>().size()) + c);
    }
    rows.push_back(row);
  }
  return rows;
}

TEST(RemoteEncoderTest, ReturnsServicePayloadInOrder) {
  StubService stub(3, [](const json& req, httplib::Response& res) {
    res.set_content(json{{"vectors", fixed_vectors(req, 3)}}.dump(), "application/json");
  });
  RemoteEncoder enc(stub.endpoint(), 2000, 0);
  EXPECT_EQ(enc.dim(), 3u);
  const std::vector<std::string> texts{"a", "bbbb"};
  Tensor out = enc.encode(texts);
  EXPECT_EQ(out, Tensor::from_rows({{0.25, 2, 3}, {1.25, 5, 6}}));
  EXPECT_EQ(enc.spec().kind, EncoderSpec::Kind::kRemote);
  EXPECT_EQ(enc.spec().endpoint, stub.endpoint());
}

TEST(RemoteEncoderTest, WrongDimensionIsAConfigError) {
  StubService stub(3, [](const json& req, httplib::Response& res) {
    res.set_content(json{{"vectors", fixed_vectors(req, 4)}}.dump(), "application/json");
  });
  RemoteEncoder enc(stub.endpoint(), 2000, 0);
  EXPECT_THROW(enc.encode(std::vector<std::string>{"x"}), ConfigError);
}

TEST(RemoteEncoderTest, ErrorStatusCarriesStatusAndBody) {
  StubService stub(3, [](const json&, httplib::Response& res) {
    res.status = 503;
    res.set_content("model is warming up", "text/plain");
  });
  RemoteEncoder enc(stub.endpoint(), 2000, 0);
  try {
    enc.encode(std::vector<std::string>{"x"});
    FAIL() << "expected EncoderError";
  } catch (const EncoderError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("503"), std::string::npos) << what;
    EXPECT_NE(what.find("warming up"), std::string::npos) << what;
  }
}

TEST(RemoteEncoderTest, ConnectionFailureIsRetriable) {
  std::string endpoint;
  {
    StubService gone(3, [](const json&, httplib::Response&) {});
    endpoint = gone.endpoint();
  }
  try {
    RemoteEncoder enc(endpoint, 300, 1);
    FAIL() << "expected EncoderError";
  } catch (const EncoderError& e) {
    EXPECT_TRUE(e.retriable()) << e.what();
  }
}

TEST(RemoteEncoderTest, BadEndpointIsAConfigError) {
  EXPECT_THROW(RemoteEncoder("ftp://host", 100, 0), ConfigError);
}

EventAggregationParams aggregation_params(num::Tape& tape, std::size_t dim, std::size_t d,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rnd = [&](std::size_t r, std::size_t c) {
    Tensor t(r, c);
    for (double& x : t.data()) x = u(rng);
    return tape.constant(t);
  };
  return {rnd(dim, dim), rnd(dim, 1), rnd(dim, d), rnd(1, d)};
}

Tensor row_times(std::span<const double> row, const Tensor& w) {
  Tensor out(1, w.cols());
  for (std::size_t c = 0; c < w.cols(); ++c) {
    for (std::size_t k = 0; k < row.size(); ++k) out(0, c) += row[k] * w(k, c);
  }
  return out;
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_TRUE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol);
}

TEST(AggregateTest, SingleTypeIsItsProjection) {
  num::Tape tape;
  auto params = aggregation_params(tape, 8, 5, 1);
  HashingEncoder enc(8, 0);
  std::vector<ehr::ClinicalEvent> evs{event("lab", {{"a", "1"}}), event("lab", {{"b", "2"}})};
  EventRepresentation rep = encode_visit_events(evs, enc);
  ASSERT_EQ(rep.types, std::vector<std::string>{"lab"});
  EventAggregation agg = aggregate_events(tape, rep, params);
  expect_near(agg.o_e.value(), row_times(rep.vectors.row(0), params.output.value()), 1e-12);
  ASSERT_TRUE(agg.weights);
  EXPECT_EQ(agg.weights->value(), Tensor(1, 1, 1.0));
}

TEST(AggregateTest, SameTypeEventsAreMeanPooled) {
  HashingEncoder enc(8, 0);
  std::vector<ehr::ClinicalEvent> evs{event("lab", {{"a", "1"}}), event("rx", {{"c", "3"}}),
                                      event("lab", {{"b", "2"}})};
  EventRepresentation rep = encode_visit_events(evs, enc);
  ASSERT_EQ(rep.types, (std::vector<std::string>{"lab", "rx"}));
  const std::vector<std::string> texts{serialize_event(evs[0]).text, serialize_event(evs[2]).text,
                                       serialize_event(evs[1]).text};
  Tensor raw = enc.encode(texts);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_NEAR(rep.vectors(0, c), (raw(0, c) + raw(1, c)) / 2.0, 1e-15);
    EXPECT_EQ(rep.vectors(1, c), raw(2, c));
  }
}

TEST(AggregateTest, IdenticalVectorsGiveSharedProjection) {
  num::Tape tape;
  auto params = aggregation_params(tape, 8, 4, 2);
  EventRepresentation rep{{"a", "b", "c"}, Tensor(3, 8, 0.0)};
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 8; ++c) rep.vectors(r, c) = 0.1 * static_cast<double>(c) - 0.3;
  }
  EventAggregation agg = aggregate_events(tape, rep, params);
  expect_near(agg.o_e.value(), row_times(rep.vectors.row(0), params.output.value()), 1e-12);
}

TEST(AggregateTest, NoEventsGiveTheDefaultVectorExactly) {
  num::Tape tape;
  auto params = aggregation_params(tape, 8, 4, 3);
  HashingEncoder enc(8, 0);
  EventAggregation agg = aggregate_events(tape, encode_visit_events({}, enc), params);
  EXPECT_EQ(agg.o_e.value(), params.default_vector.value());
  EXPECT_EQ(agg.o_e.id(), params.default_vector.id());
  EXPECT_FALSE(agg.weights);
}

TEST(AggregateTest, WeightsSumToOneAndPipelineIsPure) {
  std::mt19937_64 rng(4);
  HashingEncoder enc(16, 3);
  const char* types[] = {"lab", "rx", "proc", "note"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ehr::ClinicalEvent> evs;
    for (std::size_t i = 0; i < 1 + rng() % 6; ++i) {
      evs.push_back(event(types[rng() % 4], {{"f", std::to_string(rng() % 9)}}));
    }
    num::Tape tape;
    auto params = aggregation_params(tape, 16, 6, trial);
    EventAggregation a = aggregate_events(tape, encode_visit_events(evs, enc), params);
    EventAggregation b = aggregate_events(tape, encode_visit_events(evs, enc), params);
    EXPECT_EQ(a.o_e.value(), b.o_e.value());
    ASSERT_TRUE(a.weights);
    double s = 0.0;
    for (double w : a.weights->value().data()) {
      EXPECT_GT(w, 0.0);
      s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(AggregateTest, WidthMismatchIsAnError) {
  num::Tape tape;
  auto params = aggregation_params(tape, 8, 4, 3);
  EventRepresentation rep{{"lab"}, Tensor(1, 16, 0.5)};
  EXPECT_THROW(aggregate_events(tape, rep, params), NumericError);
}

}  // namespace
}  // namespace dhce::events
