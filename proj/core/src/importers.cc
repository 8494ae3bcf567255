#include "toxctx/importers.h"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <sstream>

#include "toxctx/csv.h"
#include "toxctx/error.h"

namespace toxctx {

namespace {

struct Columns {
  std::size_t match = 0;
  std::size_t time = 0;
  std::size_t slot = 0;
  std::size_t text = 0;
};

std::size_t FindColumn(const std::vector<std::string>& header,
                       const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw ParseError(1, "missing column '" + name + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

template <typename T>
T ParseNumber(const std::string& field, std::size_t line, const char* what) {
  const std::string_view s = Trim(field);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(line, std::string("bad ") + what + " '" + field + "'");
  }
  return value;
}

int NormalizeSlot(int slot, std::size_t line) {
  if (slot >= 128 && slot <= 132) return slot - 128 + 5;
  if (slot < 0 || slot > 9) {
    throw ParseError(line, "slot " + std::to_string(slot) + " out of range");
  }
  return slot;
}

struct PendingMessage {
  double time_s;
  int slot;
  std::string text;
};

}  // namespace

DotaCsvFormat DetectDotaCsvFormat(const std::string& header_line) {
  std::istringstream in(header_line);
  CsvReader reader(in);
  const auto header = reader.Next();
  if (header) {
    const auto has = [&](const char* name) {
      return std::find(header->begin(), header->end(), name) != header->end();
    };
    if (has("match_id") && has("key")) return DotaCsvFormat::kOpenDota;
    if (has("match") && has("text")) return DotaCsvFormat::kGosuai;
  }
  throw ParseError(1, "unrecognized chat CSV header");
}

std::vector<Match> ImportDotaCsv(std::istream& in, DotaCsvFormat format,
                                 ImportSummary* summary) {
  CsvReader reader(in);
  const auto header = reader.Next();
  if (!header) return {};
  Columns cols;
  if (format == DotaCsvFormat::kGosuai) {
    cols = {FindColumn(*header, "match"), FindColumn(*header, "time"),
            FindColumn(*header, "slot"), FindColumn(*header, "text")};
  } else {
    cols = {FindColumn(*header, "match_id"), FindColumn(*header, "time"),
            FindColumn(*header, "slot"), FindColumn(*header, "key")};
  }
  const std::size_t width =
      std::max({cols.match, cols.time, cols.slot, cols.text}) + 1;

  ImportSummary local;
  std::vector<std::string> order;
  std::map<std::string, std::vector<PendingMessage>> by_match;
  while (auto row = reader.Next()) {
    const std::size_t line = reader.record_line();
    if (row->size() == 1 && Trim((*row)[0]).empty()) continue;
    if (row->size() < width) {
      throw ParseError(line, "expected at least " + std::to_string(width) +
                                 " fields, got " +
                                 std::to_string(row->size()));
    }
    ++local.rows;
    const std::string match_id(Trim((*row)[cols.match]));
    if (match_id.empty()) throw ParseError(line, "empty match id");
    const double time_s = ParseNumber<double>((*row)[cols.time], line, "time");
    const int slot =
        NormalizeSlot(ParseNumber<int>((*row)[cols.slot], line, "slot"), line);
    const std::string_view text = Trim((*row)[cols.text]);
    if (text.empty()) {
      ++local.skipped_empty;
      continue;
    }
    auto [it, inserted] = by_match.try_emplace(match_id);
    if (inserted) order.push_back(match_id);
    it->second.push_back({time_s, slot, std::string(text)});
  }

  std::vector<Match> matches;
  matches.reserve(order.size());
  for (const std::string& id : order) {
    std::vector<PendingMessage>& pending = by_match[id];
    std::stable_sort(pending.begin(), pending.end(),
                     [](const PendingMessage& a, const PendingMessage& b) {
                       return a.time_s < b.time_s;
                     });
    Match match;
    match.match_id = id;
    match.game = Game::kDota2;
    for (std::size_t i = 0; i < pending.size(); ++i) {
      ChatMessage msg;
      msg.index = static_cast<int>(i);
      msg.time_s = pending[i].time_s;
      msg.player = pending[i].slot;
      msg.team = pending[i].slot / 5;
      msg.text = std::move(pending[i].text);
      match.messages.push_back(std::move(msg));
    }
    ValidateMatch(match);
    matches.push_back(std::move(match));
  }
  local.matches = matches.size();
  if (summary != nullptr) *summary = local;
  return matches;
}

}  // namespace toxctx
