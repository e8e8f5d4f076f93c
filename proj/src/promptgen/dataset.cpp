#include "objnav/promptgen/dataset.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <map>
#include <ostream>
#include <stdexcept>

#include "objnav/common/errors.hpp"

namespace objnav::promptgen {

namespace {

using nlohmann::ordered_json;

double finite_number(const ordered_json& j, const char* what) {
  if (!j.is_number()) throw std::invalid_argument(std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite");
  return v;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

CaptionRecord parse_record(const std::string& line, bool require_captions) {
  const ordered_json j = ordered_json::parse(line, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("not valid JSON");
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  CaptionRecord r;
  if (!j.contains("image_id") || !j["image_id"].is_string() || j["image_id"].get<std::string>().empty()) {
    throw std::invalid_argument("missing image_id");
  }
  r.image_id = j["image_id"].get<std::string>();
  if (!j.contains("width") || !j["width"].is_number_integer() || !j.contains("height") ||
      !j["height"].is_number_integer()) {
    throw std::invalid_argument("width and height must be integers");
  }
  r.width = j["width"].get<int>();
  r.height = j["height"].get<int>();
  if (r.width <= 0 || r.height <= 0) throw std::invalid_argument("width and height must be positive");
  if (j.contains("pose") && !j["pose"].is_null()) {
    const auto& p = j["pose"];
    if (!p.is_object() || !p.contains("x") || !p.contains("y") || !p.contains("theta")) {
      throw std::invalid_argument("pose needs x, y and theta");
    }
    r.pose = RecordPose{finite_number(p["x"], "pose.x"), finite_number(p["y"], "pose.y"),
                        finite_number(p["theta"], "pose.theta")};
  }
  if (!j.contains("objects") || !j["objects"].is_array()) throw std::invalid_argument("objects must be an array");
  for (std::size_t i = 0; i < j["objects"].size(); ++i) {
    const auto& o = j["objects"][i];
    const std::string at = "objects[" + std::to_string(i) + "]";
    if (!o.is_object()) throw std::invalid_argument(at + " must be an object");
    ObjectRecord obj;
    if (!o.contains("noun") || !o["noun"].is_string() || o["noun"].get<std::string>().empty()) {
      throw std::invalid_argument(at + ".noun missing");
    }
    obj.noun = o["noun"].get<std::string>();
    if (!o.contains("box") || !o["box"].is_array() || o["box"].size() != 4) {
      throw std::invalid_argument(at + ".box must have 4 numbers");
    }
    const auto& b = o["box"];
    obj.box = {finite_number(b[0], "box"), finite_number(b[1], "box"), finite_number(b[2], "box"),
               finite_number(b[3], "box")};
    if (!(0.0 <= obj.box.x1 && obj.box.x1 < obj.box.x2 && obj.box.x2 <= 1.0 && 0.0 <= obj.box.y1 &&
          obj.box.y1 < obj.box.y2 && obj.box.y2 <= 1.0)) {
      throw std::invalid_argument(at + ".box must be normalized corners with positive area");
    }
    if (o.contains("captions")) {
      if (!o["captions"].is_array()) throw std::invalid_argument(at + ".captions must be an array");
      for (const auto& c : o["captions"]) {
        if (!c.is_string() || c.get<std::string>().empty()) {
          throw std::invalid_argument(at + ".captions must be nonempty strings");
        }
        obj.captions.push_back(c.get<std::string>());
      }
    }
    if (require_captions && obj.captions.empty()) throw std::invalid_argument(at + " has no captions");
    r.objects.push_back(std::move(obj));
  }
  return r;
}

std::string format_record(const CaptionRecord& r) {
  ordered_json j;
  j["image_id"] = r.image_id;
  j["width"] = r.width;
  j["height"] = r.height;
  if (r.pose) j["pose"] = {{"x", r.pose->x}, {"y", r.pose->y}, {"theta", r.pose->theta}};
  j["objects"] = ordered_json::array();
  for (const ObjectRecord& o : r.objects) {
    j["objects"].push_back(
        {{"noun", o.noun}, {"box", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}}, {"captions", o.captions}});
  }
  return j.dump();
}

DatasetReadResult read_dataset(std::istream& in, bool require_captions) {
  DatasetReadResult out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (blank(line)) continue;
    try {
      out.records.push_back(parse_record(line, require_captions));
    } catch (const std::invalid_argument& e) {
      out.errors.push_back({n, e.what()});
    }
  }
  return out;
}

std::vector<CaptionRecord> load_dataset(const std::string& path, bool require_captions) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open dataset file");
  std::vector<CaptionRecord> records;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (blank(line)) continue;
    try {
      records.push_back(parse_record(line, require_captions));
    } catch (const std::invalid_argument& e) {
      throw ParseError(path, n, e.what());
    }
  }
  return records;
}

void write_dataset(std::ostream& out, const std::vector<CaptionRecord>& records) {
  for (const CaptionRecord& r : records) out << format_record(r) << '\n';
}

ConversionReport convert_detection_dataset(const std::vector<CaptionRecord>& records, int count,
                                           GenerationClient& client) {
  if (count < 1) throw ContractError("convert_detection_dataset: caption count must be at least 1");
  ConversionReport report;
  std::map<std::string, std::vector<std::string>> generated;
  for (const CaptionRecord& in : records) {
    CaptionRecord r = in;
    for (ObjectRecord& o : r.objects) {
      auto it = generated.find(o.noun);
      if (it == generated.end()) {
        SentenceBatch batch = noun_to_sentences(o.noun, count, client);
        for (std::string& w : batch.warnings) report.warnings.push_back(std::move(w));
        if (batch.error) report.warnings.push_back(*batch.error);
        it = generated.emplace(o.noun, std::move(batch.sentences)).first;
      }
      o.captions.assign(1, o.noun);
      o.captions.insert(o.captions.end(), it->second.begin(), it->second.end());
      report.generated_captions += it->second.size();
      ++report.labels;
    }
    report.records.push_back(std::move(r));
  }
  report.unique_nouns = generated.size();
  return report;
}

ConversionReport convert_detection_dataset(std::istream& in, int count, GenerationClient& client) {
  DatasetReadResult read = read_dataset(in, false);
  ConversionReport report = convert_detection_dataset(read.records, count, client);
  report.errors = std::move(read.errors);
  return report;
}

}  // namespace objnav::promptgen
