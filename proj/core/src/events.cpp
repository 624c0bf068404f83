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

#include "dhce/events.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "dhce/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace dhce::events {

EventText serialize_event(const ehr::ClinicalEvent& event) {
  if (event.type.empty()) throw DataError("cannot serialise an event without a type");
  std::string text = "[CLS] " + event.type;
  for (const auto& [name, value] : event.features) {
    text += " [SEP] ";
    text += name;
    text += " [SEP] ";
    text += value;
  }
  return {std::move(text), event.type};
}

// ---------------------------------------------------------------------------
// Hashing encoder

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

std::uint64_t hash_token(std::string_view token, std::uint64_t seed) {
  // FNV-1a over the bytes, seeded through the offset basis, then finalised.
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed + 0x9e3779b97f4a7c15ULL);
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

num::Tensor hashing_encode(std::span<const std::string> texts, std::size_t dim, std::uint64_t seed) {
  if (dim < 8) throw ConfigError("hashing encoder dim must be >= 8");
  num::Tensor out(texts.size(), dim);
  for (std::size_t r = 0; r < texts.size(); ++r) {
    std::istringstream tokens(texts[r]);
    std::string tok;
    while (tokens >> tok) {
      const std::uint64_t h = hash_token(tok, seed);
      const std::size_t bucket = static_cast<std::size_t>(h % dim);
      const double sign = (mix64(h ^ 0x5851f42d4c957f2dULL) >> 63) ? -1.0 : 1.0;
      out(r, bucket) += sign;
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < dim; ++c) norm += out(r, c) * out(r, c);
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (std::size_t c = 0; c < dim; ++c) out(r, c) /= norm;
    }
  }
  return out;
}

HashingEncoder::HashingEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 8) throw ConfigError("hashing encoder dim must be >= 8");
}

num::Tensor HashingEncoder::encode(std::span<const std::string> texts) const {
  return hashing_encode(texts, dim_, seed_);
}

EncoderSpec HashingEncoder::spec() const {
  EncoderSpec s;
  s.kind = EncoderSpec::Kind::kHashing;
  s.dim = dim_;
  s.seed = seed_;
  return s;
}

// ---------------------------------------------------------------------------
// Remote encoder

namespace {

struct Endpoint {
  std::string origin;  // scheme://host:port
  std::string base;    // path prefix without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
    throw ConfigError("encoder endpoint must be an http:// URL, got '" + url + "'");
  }
  const auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, slash);
  if (slash != std::string::npos) {
    e.base = url.substr(slash);
    while (!e.base.empty() && e.base.back() == '/') e.base.pop_back();
  }
  return e;
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

// Runs `request` until it yields a response or the retry budget is spent.
template <typename Fn>
httplib::Result with_retries(const std::string& what, int retries, Fn request) {
  for (int attempt = 0;; ++attempt) {
    httplib::Result res = request();
    if (res) return res;
    if (attempt >= retries) {
      throw EncoderError(what + " failed after " + std::to_string(attempt + 1) +
                             " attempt(s): " + httplib::to_string(res.error()),
                         /*retriable=*/true);
    }
  }
}

void configure(httplib::Client& client, int timeout_ms) {
  const auto sec = timeout_ms / 1000;
  const auto usec = (timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

}  // namespace

RemoteEncoder::RemoteEncoder(std::string endpoint, int timeout_ms, int retries)
    : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms), retries_(retries) {
  if (timeout_ms_ <= 0) throw ConfigError("encoder timeout must be positive");
  if (retries_ < 0) throw ConfigError("encoder retries must be >= 0");
  const Endpoint ep = split_endpoint(endpoint_);
  httplib::Client client(ep.origin);
  configure(client, timeout_ms_);
  auto res = with_retries("GET " + endpoint_ + "/info", retries_,
                          [&] { return client.Get(ep.base + "/info"); });
  if (res->status < 200 || res->status >= 300) {
    throw EncoderError("GET /info returned HTTP " + std::to_string(res->status) + ": " +
                           excerpt(res->body),
                       false);
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    const auto d = j.at("dim").get<long long>();
    if (d <= 0) throw ConfigError("remote encoder reported non-positive dim");
    dim_ = static_cast<std::size_t>(d);
  } catch (const nlohmann::json::exception& e) {
    throw EncoderError(std::string("malformed /info response: ") + e.what(), false);
  }
}

num::Tensor RemoteEncoder::encode(std::span<const std::string> texts) const {
  num::Tensor out(texts.size(), dim_);
  if (texts.empty()) return out;
  const Endpoint ep = split_endpoint(endpoint_);
  httplib::Client client(ep.origin);
  configure(client, timeout_ms_);
  nlohmann::json req;
  req["texts"] = std::vector<std::string>(texts.begin(), texts.end());
  const std::string body = req.dump();
  auto res = with_retries("POST " + endpoint_ + "/encode", retries_, [&] {
    return client.Post(ep.base + "/encode", body, "application/json");
  });
  if (res->status < 200 || res->status >= 300) {
    throw EncoderError("POST /encode returned HTTP " + std::to_string(res->status) + ": " +
                           excerpt(res->body),
                       false);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw EncoderError(std::string("malformed /encode response: ") + e.what(), false);
  }
  if (!j.contains("vectors") || !j["vectors"].is_array() || j["vectors"].size() != texts.size()) {
    throw EncoderError("/encode returned " +
                           std::to_string(j.contains("vectors") ? j["vectors"].size() : 0) +
                           " vectors for " + std::to_string(texts.size()) + " texts",
                       false);
  }
  for (std::size_t r = 0; r < texts.size(); ++r) {
    const auto& row = j["vectors"][r];
    if (!row.is_array() || row.size() != dim_) {
      throw ConfigError("remote encoder dimension mismatch: expected " + std::to_string(dim_) +
                        ", got " + std::to_string(row.is_array() ? row.size() : 0));
    }
    for (std::size_t c = 0; c < dim_; ++c) {
      if (!row[c].is_number()) throw EncoderError("/encode returned a non-numeric entry", false);
      out(r, c) = row[c].get<double>();
    }
  }
  if (!out.all_finite()) throw EncoderError("/encode returned non-finite values", false);
  return out;
}

EncoderSpec RemoteEncoder::spec() const {
  EncoderSpec s;
  s.kind = EncoderSpec::Kind::kRemote;
  s.dim = dim_;
  s.endpoint = endpoint_;
  s.timeout_ms = timeout_ms_;
  s.retries = retries_;
  return s;
}

std::unique_ptr<TextEncoder> make_encoder(const EncoderSpec& spec) {
  if (spec.kind == EncoderSpec::Kind::kHashing) {
    return std::make_unique<HashingEncoder>(spec.dim, spec.seed);
  }
  auto enc = std::make_unique<RemoteEncoder>(spec.endpoint, spec.timeout_ms, spec.retries);
  if (spec.dim != 0 && enc->dim() != spec.dim) {
    throw ConfigError("remote encoder dimension " + std::to_string(enc->dim()) +
                      " does not match configured " + std::to_string(spec.dim));
  }
  return enc;
}

// ---------------------------------------------------------------------------
// Per-visit representation and aggregation

EventRepresentation encode_visit_events(std::span<const ehr::ClinicalEvent> events,
                                        const TextEncoder& encoder) {
  EventRepresentation rep;
  rep.vectors = num::Tensor(0, encoder.dim());
  if (events.empty()) return rep;

  std::vector<std::string> texts;
  std::vector<std::size_t> type_of;
  for (const ehr::ClinicalEvent& e : events) {
    EventText t = serialize_event(e);
    auto it = std::find(rep.types.begin(), rep.types.end(), t.event_type);
    type_of.push_back(static_cast<std::size_t>(it - rep.types.begin()));
    if (it == rep.types.end()) rep.types.push_back(t.event_type);
    texts.push_back(std::move(t.text));
  }
  const num::Tensor encoded = encoder.encode(texts);
  if (encoded.rows() != texts.size() || encoded.cols() != encoder.dim()) {
    throw EncoderError("encoder returned " + encoded.shape_string() + " for " +
                           std::to_string(texts.size()) + " texts",
                       false);
  }

  num::Tensor pooled(rep.types.size(), encoder.dim());
  std::vector<double> counts(rep.types.size(), 0.0);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    counts[type_of[i]] += 1.0;
    for (std::size_t c = 0; c < encoder.dim(); ++c) pooled(type_of[i], c) += encoded(i, c);
  }
  for (std::size_t q = 0; q < rep.types.size(); ++q) {
    for (std::size_t c = 0; c < encoder.dim(); ++c) pooled(q, c) /= counts[q];
  }
  rep.vectors = std::move(pooled);
  return rep;
}

EventAggregation aggregate_events(num::Tape& tape, const EventRepresentation& reps,
                                  const EventAggregationParams& params) {
  if (reps.types.empty()) return {params.default_vector, std::nullopt};
  if (reps.vectors.cols() != params.proj.rows()) {
    throw NumericError("event vectors have width " + std::to_string(reps.vectors.cols()) +
                       " but the aggregation expects " + std::to_string(params.proj.rows()));
  }
  num::Var m = tape.constant(reps.vectors);
  AttentionResult att = additive_attention(m, params.proj, params.context);
  return {num::matmul(att.output, params.output), att.weights};
}

}  // namespace dhce::events
