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

#ifndef DHCE_HYPERGRAPH_HPP_
#define DHCE_HYPERGRAPH_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dhce/ehr.hpp"

namespace dhce::hypergraph {

/// {0,1} indicator over the disease vocabulary.
class MultiHot {
 public:
  MultiHot() = default;
  explicit MultiHot(std::size_t length) : bits_(length, 0) {}
  static MultiHot from_indices(std::size_t length, std::span<const std::size_t> indices);

  std::size_t size() const noexcept { return bits_.size(); }
  bool test(std::size_t i) const { return bits_.at(i) != 0; }
  void set(std::size_t i, bool on = true) { bits_.at(i) = on ? 1 : 0; }
  std::size_t count() const noexcept;
  bool none() const noexcept { return count() == 0; }
  // Ascending indices of set bits.
  std::vector<std::size_t> indices() const;

  MultiHot operator&(const MultiHot& other) const;
  MultiHot operator|(const MultiHot& other) const;
  MultiHot operator~() const;

  friend bool operator==(const MultiHot&, const MultiHot&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Hypergraph over diagnosed codes with its node x hyperedge incidence
/// matrix. An empty graph has no nodes and no edges.
class VisitHypergraph {
 public:
  VisitHypergraph() = default;
  // `nodes` must be ascending and unique; `incidence` is row-major
  // nodes.size() x n_edges. Validates that no row or column is all zero.
  VisitHypergraph(std::vector<std::size_t> nodes, std::size_t n_edges,
                  std::vector<std::uint8_t> incidence);

  const std::vector<std::size_t>& nodes() const noexcept { return nodes_; }
  std::size_t n_nodes() const noexcept { return nodes_.size(); }
  std::size_t n_edges() const noexcept { return n_edges_; }
  bool empty() const noexcept { return nodes_.empty(); }
  bool incident(std::size_t node_row, std::size_t edge) const {
    return incidence_.at(node_row * n_edges_ + edge) != 0;
  }
  const std::vector<std::uint8_t>& incidence() const noexcept { return incidence_; }
  // Members of `edge` as node rows.
  std::vector<std::size_t> edge_members(std::size_t edge) const;

  friend bool operator==(const VisitHypergraph&, const VisitHypergraph&) = default;

 private:
  std::vector<std::size_t> nodes_;
  std::size_t n_edges_ = 0;
  std::vector<std::uint8_t> incidence_;
};

struct DiseasePartition {
  MultiHot chronic;
  MultiHot acute;
};

struct Subgraphs {
  VisitHypergraph chronic;  // one hyperedge over all chronic nodes
  VisitHypergraph acute;    // one hyperedge per acute node, joined with all chronic nodes
};

struct DynamicEntry {
  VisitHypergraph full;
  DiseasePartition partition;
  Subgraphs subgraphs;
};

using DynamicHypergraph = std::vector<DynamicEntry>;

// The visit as a single hyperedge over its (deduplicated, sorted) codes.
VisitHypergraph build_visit_hypergraph(std::span<const std::size_t> codes);

// chronic = current & previous, acute = current & ~previous. Without a
// previous visit every code is acute.
DiseasePartition partition_diseases(const MultiHot& current, const MultiHot* previous);

Subgraphs build_subgraphs(const DiseasePartition& partition);

// Code-index sets of every visit of `patient` under `vocab`.
std::vector<std::vector<std::size_t>> visit_code_indices(const ehr::PatientRecord& patient,
                                                         const ehr::DiseaseVocabulary& vocab);

// One entry per visit. With chronic_window w > 1 a code is chronic when it
// appears in any of the w preceding visits.
DynamicHypergraph build_dynamic_hypergraph(const ehr::PatientRecord& patient,
                                           const ehr::DiseaseVocabulary& vocab,
                                           std::size_t chronic_window = 1);
DynamicHypergraph build_dynamic_hypergraph(const std::vector<std::vector<std::size_t>>& visits,
                                           std::size_t vocab_size, std::size_t chronic_window = 1);

// Aligned text tables of incidence matrices and partitions for debugging.
std::string format_hypergraph(const VisitHypergraph& graph, const ehr::DiseaseVocabulary& vocab);
std::string format_dynamic_hypergraph(const DynamicHypergraph& dyn,
                                      const ehr::DiseaseVocabulary& vocab);

}  // namespace dhce::hypergraph

#endif  // DHCE_HYPERGRAPH_HPP_
