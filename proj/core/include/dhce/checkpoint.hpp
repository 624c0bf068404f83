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

#ifndef DHCE_CHECKPOINT_HPP_
#define DHCE_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dhce/ehr.hpp"
#include "dhce/events.hpp"
#include "dhce/model.hpp"

namespace dhce::harness {

inline constexpr int kCheckpointVersion = 1;

/// Everything needed to rebuild a trained model.
///
/// On disk:
///   8 bytes   magic "DHCEv1\0\0"
///   8 bytes   little-endian uint64 header length N
///   N bytes   UTF-8 JSON header (version, hyperparams, dims, vocabulary,
///             event types, encoder, manifest)
///   ...       little-endian float64 parameter values in manifest order
struct Checkpoint {
  int version = kCheckpointVersion;
  model::HyperParams hyper;
  ehr::DiseaseVocabulary vocabulary;
  std::vector<std::string> event_types;
  events::EncoderSpec encoder;
  model::ModelParameters params;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dhce::harness

#endif  // DHCE_CHECKPOINT_HPP_
