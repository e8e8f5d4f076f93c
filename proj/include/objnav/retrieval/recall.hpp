#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace objnav::retrieval {

// Query id -> every item id that correctly answers it (multi-label).
using GroundTruth = std::map<std::string, std::set<std::string>>;

// One ranked result list per query, in evaluation order.
using RankedResults = std::vector<std::pair<std::string, std::vector<std::string>>>;

struct RecallReport {
  std::map<std::size_t, double> recall;                       // k -> AR@k
  std::map<std::size_t, std::vector<bool>> hits;              // k -> per-query hit flags
  std::vector<std::string> warnings;
};

// AR@k = (# queries with any ground-truth id among their first k results) / (# queries).
// Queries absent from the ground truth never hit and produce a warning.
RecallReport average_recall(const RankedResults& results, const GroundTruth& truth, const std::vector<std::size_t>& ks);

// Inverts query -> items into item -> queries (for image-to-text evaluation).
GroundTruth transpose(const GroundTruth& truth);

// Lines of "query_id<TAB>item_id". Blank lines are ignored.
GroundTruth read_ground_truth(const std::filesystem::path& path);

}  // namespace objnav::retrieval
