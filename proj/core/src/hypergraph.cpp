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

#include "dhce/hypergraph.hpp"

#include <algorithm>
#include <sstream>

#include "dhce/errors.hpp"

namespace dhce::hypergraph {

MultiHot MultiHot::from_indices(std::size_t length, std::span<const std::size_t> indices) {
  MultiHot m(length);
  for (std::size_t i : indices) {
    if (i >= length) throw DataError("code index " + std::to_string(i) + " out of range");
    m.set(i);
  }
  return m;
}

std::size_t MultiHot::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> MultiHot::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(i);
  }
  return out;
}

namespace {

void require_same_length(const MultiHot& a, const MultiHot& b) {
  if (a.size() != b.size()) {
    throw NumericError("multi-hot length mismatch: " + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()));
  }
}

}  // namespace

MultiHot MultiHot::operator&(const MultiHot& other) const {
  require_same_length(*this, other);
  MultiHot out(size());
  for (std::size_t i = 0; i < size(); ++i) out.bits_[i] = bits_[i] & other.bits_[i];
  return out;
}

MultiHot MultiHot::operator|(const MultiHot& other) const {
  require_same_length(*this, other);
  MultiHot out(size());
  for (std::size_t i = 0; i < size(); ++i) out.bits_[i] = bits_[i] | other.bits_[i];
  return out;
}

MultiHot MultiHot::operator~() const {
  MultiHot out(size());
  for (std::size_t i = 0; i < size(); ++i) out.bits_[i] = bits_[i] ? 0 : 1;
  return out;
}

VisitHypergraph::VisitHypergraph(std::vector<std::size_t> nodes, std::size_t n_edges,
                                 std::vector<std::uint8_t> incidence)
    : nodes_(std::move(nodes)), n_edges_(n_edges), incidence_(std::move(incidence)) {
  if (incidence_.size() != nodes_.size() * n_edges_) {
    throw NumericError("incidence size does not match nodes x edges");
  }
  if (nodes_.empty() != (n_edges_ == 0)) {
    throw NumericError("a hypergraph needs both nodes and edges, or neither");
  }
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (nodes_[i - 1] >= nodes_[i]) throw NumericError("hypergraph nodes must be ascending and unique");
  }
  for (std::uint8_t v : incidence_) {
    if (v > 1) throw NumericError("incidence entries must be 0 or 1");
  }
  for (std::size_t r = 0; r < nodes_.size(); ++r) {
    bool any = false;
    for (std::size_t e = 0; e < n_edges_; ++e) any = any || incident(r, e);
    if (!any) throw NumericError("hypergraph node row " + std::to_string(r) + " has no hyperedge");
  }
  for (std::size_t e = 0; e < n_edges_; ++e) {
    bool any = false;
    for (std::size_t r = 0; r < nodes_.size(); ++r) any = any || incident(r, e);
    if (!any) throw NumericError("hyperedge " + std::to_string(e) + " has no member");
  }
}

std::vector<std::size_t> VisitHypergraph::edge_members(std::size_t edge) const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < nodes_.size(); ++r) {
    if (incident(r, edge)) out.push_back(r);
  }
  return out;
}

VisitHypergraph build_visit_hypergraph(std::span<const std::size_t> codes) {
  if (codes.empty()) throw DataError("cannot build a hypergraph for an empty visit");
  std::vector<std::size_t> nodes(codes.begin(), codes.end());
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::vector<std::uint8_t> inc(nodes.size(), 1);
  return VisitHypergraph(std::move(nodes), 1, std::move(inc));
}

DiseasePartition partition_diseases(const MultiHot& current, const MultiHot* previous) {
  if (previous == nullptr) return {MultiHot(current.size()), current};
  require_same_length(current, *previous);
  return {current & *previous, current & ~*previous};
}

Subgraphs build_subgraphs(const DiseasePartition& partition) {
  Subgraphs out;
  const std::vector<std::size_t> chronic = partition.chronic.indices();
  const std::vector<std::size_t> acute = partition.acute.indices();
  if (!chronic.empty()) {
    out.chronic = VisitHypergraph(chronic, 1, std::vector<std::uint8_t>(chronic.size(), 1));
  }
  if (!acute.empty()) {
    std::vector<std::size_t> nodes;
    std::merge(chronic.begin(), chronic.end(), acute.begin(), acute.end(),
               std::back_inserter(nodes));
    const std::size_t n_edges = acute.size();
    std::vector<std::uint8_t> inc(nodes.size() * n_edges, 0);
    for (std::size_t r = 0; r < nodes.size(); ++r) {
      const bool is_chronic = partition.chronic.test(nodes[r]);
      for (std::size_t e = 0; e < n_edges; ++e) {
        inc[r * n_edges + e] = (is_chronic || nodes[r] == acute[e]) ? 1 : 0;
      }
    }
    out.acute = VisitHypergraph(std::move(nodes), n_edges, std::move(inc));
  }
  return out;
}

std::vector<std::vector<std::size_t>> visit_code_indices(const ehr::PatientRecord& patient,
                                                         const ehr::DiseaseVocabulary& vocab) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(patient.visits.size());
  for (const ehr::Visit& v : patient.visits) {
    std::vector<std::size_t> idx;
    for (const std::string& c : v.codes) {
      auto i = vocab.find(c);
      if (!i) {
        throw DataError("patient '" + patient.patient_id + "': unknown code '" + c + "'");
      }
      idx.push_back(*i);
    }
    out.push_back(std::move(idx));
  }
  return out;
}

DynamicHypergraph build_dynamic_hypergraph(const std::vector<std::vector<std::size_t>>& visits,
                                           std::size_t vocab_size, std::size_t chronic_window) {
  if (chronic_window < 1) throw ConfigError("chronic_window must be >= 1");
  std::vector<MultiHot> hots;
  hots.reserve(visits.size());
  for (const auto& v : visits) hots.push_back(MultiHot::from_indices(vocab_size, v));

  DynamicHypergraph dyn;
  dyn.reserve(visits.size());
  for (std::size_t t = 0; t < visits.size(); ++t) {
    DynamicEntry entry;
    entry.full = build_visit_hypergraph(visits[t]);
    if (t == 0) {
      entry.partition = partition_diseases(hots[t], nullptr);
    } else {
      MultiHot history = hots[t - 1];
      for (std::size_t k = 2; k <= chronic_window && k <= t; ++k) history = history | hots[t - k];
      entry.partition = partition_diseases(hots[t], &history);
    }
    entry.subgraphs = build_subgraphs(entry.partition);
    dyn.push_back(std::move(entry));
  }
  return dyn;
}

DynamicHypergraph build_dynamic_hypergraph(const ehr::PatientRecord& patient,
                                           const ehr::DiseaseVocabulary& vocab,
                                           std::size_t chronic_window) {
  return build_dynamic_hypergraph(visit_code_indices(patient, vocab), vocab.size(), chronic_window);
}

std::string format_hypergraph(const VisitHypergraph& graph, const ehr::DiseaseVocabulary& vocab) {
  if (graph.empty()) return "    (empty)\n";
  std::size_t width = 4;
  for (std::size_t n : graph.nodes()) width = std::max(width, vocab.code(n).size());
  std::ostringstream os;
  os << "    " << std::string(width, ' ');
  for (std::size_t e = 0; e < graph.n_edges(); ++e) os << "  e" << e;
  os << '\n';
  for (std::size_t r = 0; r < graph.n_nodes(); ++r) {
    const std::string& code = vocab.code(graph.nodes()[r]);
    os << "    " << code << std::string(width - code.size(), ' ');
    for (std::size_t e = 0; e < graph.n_edges(); ++e) {
      std::string label = "e" + std::to_string(e);
      os << std::string(label.size() + 1, ' ') << (graph.incident(r, e) ? '1' : '0');
    }
    os << '\n';
  }
  return os.str();
}

std::string format_dynamic_hypergraph(const DynamicHypergraph& dyn,
                                      const ehr::DiseaseVocabulary& vocab) {
  auto names = [&vocab](const MultiHot& m) {
    std::string s = "{";
    bool first = true;
    for (std::size_t i : m.indices()) {
      if (!first) s += ", ";
      s += vocab.code(i);
      first = false;
    }
    return s + "}";
  };
  std::ostringstream os;
  for (std::size_t t = 0; t < dyn.size(); ++t) {
    const DynamicEntry& e = dyn[t];
    os << "visit " << (t + 1) << '\n';
    os << "  chronic: " << names(e.partition.chronic) << '\n';
    os << "  acute:   " << names(e.partition.acute) << '\n';
    os << "  visit hypergraph (" << e.full.n_nodes() << "x" << e.full.n_edges() << ")\n"
       << format_hypergraph(e.full, vocab);
    os << "  chronic subgraph (" << e.subgraphs.chronic.n_nodes() << "x"
       << e.subgraphs.chronic.n_edges() << ")\n"
       << format_hypergraph(e.subgraphs.chronic, vocab);
    os << "  acute subgraph (" << e.subgraphs.acute.n_nodes() << "x"
       << e.subgraphs.acute.n_edges() << ")\n"
       << format_hypergraph(e.subgraphs.acute, vocab);
  }
  return os.str();
}

}  // namespace dhce::hypergraph
