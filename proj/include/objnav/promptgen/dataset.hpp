#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "objnav/objectives/box.hpp"
#include "objnav/promptgen/client.hpp"

namespace objnav::promptgen {

struct RecordPose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

struct ObjectRecord {
  std::string noun;
  objectives::Box<double> box;  // normalized corners
  std::vector<std::string> captions;
};

// One line of the dataset file:
// {image_id, width, height, pose: {x, y, theta}, objects: [{noun, box: [x1,y1,x2,y2], captions: [...]}]}
struct CaptionRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::optional<RecordPose> pose;
  std::vector<ObjectRecord> objects;
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct DatasetReadResult {
  std::vector<CaptionRecord> records;
  std::vector<LineError> errors;
};

// Parses one record. With require_captions, every object needs at least one caption.
// Throws std::invalid_argument describing the first problem.
CaptionRecord parse_record(const std::string& line, bool require_captions);
std::string format_record(const CaptionRecord& record);

// Lenient reader: malformed lines are skipped and reported; blank lines are ignored.
DatasetReadResult read_dataset(std::istream& in, bool require_captions);
// Strict reader; throws ParseError at the first malformed line.
std::vector<CaptionRecord> load_dataset(const std::string& path, bool require_captions = true);
void write_dataset(std::ostream& out, const std::vector<CaptionRecord>& records);

struct ConversionReport {
  std::vector<CaptionRecord> records;
  std::vector<LineError> errors;
  std::vector<std::string> warnings;
  std::size_t labels = 0;              // object records converted
  std::size_t generated_captions = 0;  // generated captions attached, nouns excluded
  std::size_t unique_nouns = 0;
};

// Every object gets captions [noun, s_1, ..., s_count] with s_i from
// noun_to_sentences. Sentences are generated once per distinct noun and shared,
// so a caption can match several images. Existing captions are replaced.
ConversionReport convert_detection_dataset(const std::vector<CaptionRecord>& records, int count,
                                           GenerationClient& client);
ConversionReport convert_detection_dataset(std::istream& in, int count, GenerationClient& client);

}  // namespace objnav::promptgen
