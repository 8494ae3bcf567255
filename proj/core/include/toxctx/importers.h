#ifndef TOXCTX_IMPORTERS_H_
#define TOXCTX_IMPORTERS_H_

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "toxctx/data_model.h"

namespace toxctx {

// Public DOTA 2 chat dumps that can be normalized into Match records.
//   kGosuai:   columns match, time, slot, text
//   kOpenDota: columns match_id, key, slot, time, unit (key holds the text)
enum class DotaCsvFormat { kGosuai, kOpenDota };

struct ImportSummary {
  std::size_t rows = 0;
  std::size_t skipped_empty = 0;  // rows whose text was blank
  std::size_t matches = 0;
};

// Reads a chat CSV with a header row. Rows are grouped by match id in order
// of first appearance; messages are ordered by time (ties keep file order)
// and reindexed from 0. Slots 0-4 and 5-9 are the two teams; API style slots
// 128-132 are mapped to 5-9. Blank messages are skipped. Throws ParseError
// naming the line for missing columns or unparseable numbers.
std::vector<Match> ImportDotaCsv(std::istream& in, DotaCsvFormat format,
                                 ImportSummary* summary = nullptr);

// Picks the format from a header row.
DotaCsvFormat DetectDotaCsvFormat(const std::string& header_line);

}  // namespace toxctx

#endif  // TOXCTX_IMPORTERS_H_
