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

#include "dhce/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dhce/errors.hpp"
#include "json.hpp"

namespace dhce::harness {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'D', 'H', 'C', 'E', 'v', '1', '\0', '\0'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

void need(std::string_view bytes, std::size_t offset, std::size_t count, const char* what) {
  if (bytes.size() < offset + count) {
    throw DataError("truncated checkpoint at offset " + std::to_string(bytes.size()) + ": " + what +
                    " needs bytes up to offset " + std::to_string(offset + count));
  }
}

const char* kind_name(events::EncoderSpec::Kind k) {
  return k == events::EncoderSpec::Kind::kHashing ? "hashing" : "remote";
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  const model::ModelDims& dims = ck.params.dims();
  ordered_json h;
  h["version"] = ck.version;
  h["hyperparams"] = {{"d", ck.hyper.d},
                      {"output_activation", model::to_string(ck.hyper.output_activation)},
                      {"eps_clip", ck.hyper.eps_clip},
                      {"chronic_window", ck.hyper.chronic_window},
                      {"init_scale", ck.hyper.init_scale}};
  h["dims"] = {{"vocab", dims.vocab}, {"d", dims.d}, {"event_dim", dims.event_dim}};
  h["vocabulary"] = ck.vocabulary.codes();
  h["event_types"] = ck.event_types;
  h["encoder"] = {{"kind", kind_name(ck.encoder.kind)},
                  {"dim", ck.encoder.dim},
                  {"seed", ck.encoder.seed},
                  {"endpoint", ck.encoder.endpoint},
                  {"timeout_ms", ck.encoder.timeout_ms},
                  {"retries", ck.encoder.retries}};
  h["manifest"] = ordered_json::array();
  const num::ParameterSet& set = ck.params.set();
  for (std::size_t i = 0; i < set.size(); ++i) {
    h["manifest"].push_back(
        {{"name", set.name(i)}, {"rows", set.value(i).rows()}, {"cols", set.value(i).cols()}});
  }
  const std::string header = h.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, header.size());
  out += header;
  out.reserve(out.size() + set.element_count() * 8);
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (double v : set.value(i).data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  need(bytes, 0, sizeof(kMagic), "magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a DHCE checkpoint: bad magic bytes");
  }
  need(bytes, 8, 8, "header length");
  const std::uint64_t header_len = get_u64(bytes, 8);
  need(bytes, 16, header_len, "header");

  ordered_json h;
  try {
    h = ordered_json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.version = h.at("version").get<int>();
    if (ck.version != kCheckpointVersion) {
      throw DataError("checkpoint version " + std::to_string(ck.version) +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto& hp = h.at("hyperparams");
    ck.hyper.d = hp.at("d").get<std::size_t>();
    ck.hyper.output_activation =
        model::parse_output_activation(hp.at("output_activation").get<std::string>());
    ck.hyper.eps_clip = hp.at("eps_clip").get<double>();
    ck.hyper.chronic_window = hp.at("chronic_window").get<std::size_t>();
    ck.hyper.init_scale = hp.at("init_scale").get<double>();

    model::ModelDims dims;
    dims.vocab = h.at("dims").at("vocab").get<std::size_t>();
    dims.d = h.at("dims").at("d").get<std::size_t>();
    dims.event_dim = h.at("dims").at("event_dim").get<std::size_t>();

    ck.vocabulary = ehr::DiseaseVocabulary(h.at("vocabulary").get<std::vector<std::string>>());
    ck.event_types = h.at("event_types").get<std::vector<std::string>>();
    const auto& enc = h.at("encoder");
    const auto kind = enc.at("kind").get<std::string>();
    if (kind == "hashing") {
      ck.encoder.kind = events::EncoderSpec::Kind::kHashing;
    } else if (kind == "remote") {
      ck.encoder.kind = events::EncoderSpec::Kind::kRemote;
    } else {
      throw DataError("unknown encoder kind '" + kind + "' in checkpoint");
    }
    ck.encoder.dim = enc.at("dim").get<std::size_t>();
    ck.encoder.seed = enc.at("seed").get<std::uint64_t>();
    ck.encoder.endpoint = enc.at("endpoint").get<std::string>();
    ck.encoder.timeout_ms = enc.at("timeout_ms").get<int>();
    ck.encoder.retries = enc.at("retries").get<int>();

    if (ck.vocabulary.size() != dims.vocab) throw DataError("checkpoint vocabulary size mismatch");

    std::size_t offset = 16 + header_len;
    num::ParameterSet set;
    for (const auto& m : h.at("manifest")) {
      const auto rows = m.at("rows").get<std::size_t>();
      const auto cols = m.at("cols").get<std::size_t>();
      const std::string name = m.at("name").get<std::string>();
      need(bytes, offset, rows * cols * 8, ("parameter '" + name + "'").c_str());
      std::vector<double> data(rows * cols);
      for (std::size_t k = 0; k < data.size(); ++k) {
        data[k] = std::bit_cast<double>(get_u64(bytes, offset));
        offset += 8;
      }
      set.add(name, num::Tensor(rows, cols, std::move(data)));
    }
    if (offset != bytes.size()) {
      throw DataError("checkpoint has " + std::to_string(bytes.size() - offset) +
                      " trailing bytes after offset " + std::to_string(offset));
    }
    ck.params = model::ModelParameters::from_set(dims, std::move(set));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace dhce::harness
