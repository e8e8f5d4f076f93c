#include "objnav/retrieval/recall.hpp"

#include <algorithm>
#include <fstream>

#include "objnav/common/errors.hpp"

namespace objnav::retrieval {

RecallReport average_recall(const RankedResults& results, const GroundTruth& truth, const std::vector<std::size_t>& ks) {
  RecallReport report;
  if (results.empty()) throw ContractError("average_recall: no queries");
  for (const auto& [query, ranked] : results) {
    if (!truth.count(query)) report.warnings.push_back("query '" + query + "' has no ground truth; counted as a miss");
  }
  for (std::size_t k : ks) {
    if (k < 1) throw ContractError("average_recall: k must be >= 1");
    std::vector<bool> hits;
    std::size_t count = 0;
    for (const auto& [query, ranked] : results) {
      if (ranked.size() < k) {
        throw ContractError("average_recall: query '" + query + "' has fewer than " + std::to_string(k) + " results");
      }
      bool hit = false;
      if (auto it = truth.find(query); it != truth.end()) {
        hit = std::any_of(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k),
                          [&](const std::string& id) { return it->second.count(id) != 0; });
      }
      hits.push_back(hit);
      count += hit ? 1 : 0;
    }
    report.recall[k] = static_cast<double>(count) / static_cast<double>(results.size());
    report.hits[k] = std::move(hits);
  }
  return report;
}

GroundTruth transpose(const GroundTruth& truth) {
  GroundTruth out;
  for (const auto& [query, items] : truth) {
    for (const std::string& item : items) out[item].insert(query);
  }
  return out;
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open ground-truth file");
  GroundTruth truth;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(path.string(), lineno, "expected 'query_id<TAB>item_id'");
    }
    truth[line.substr(0, tab)].insert(line.substr(tab + 1));
  }
  return truth;
}

}  // namespace objnav::retrieval
