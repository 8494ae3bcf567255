#ifndef TOXCTX_CSV_H_
#define TOXCTX_CSV_H_

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace toxctx {

// Minimal RFC 4180 reader: comma separated, double-quoted fields may span
// lines and escape quotes by doubling them. CRLF line ends are accepted.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // Next record, or nullopt at end of input. Throws ParseError on an
  // unterminated quoted field.
  std::optional<std::vector<std::string>> Next();

  // 1-based line on which the last returned record started.
  std::size_t record_line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
};

// Quotes a field when it contains a comma, quote or line break.
std::string CsvEscape(std::string_view field);

}  // namespace toxctx

#endif  // TOXCTX_CSV_H_
