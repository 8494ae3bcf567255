#ifndef TOXCTX_REPORT_H_
#define TOXCTX_REPORT_H_

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "toxctx/aggregate.h"

namespace toxctx {

// One trained configuration as it appears in the report.
struct ReportCell {
  std::string config_hash;
  std::string variant;  // base, dap, dap_sep, dap_sender
  std::string context;  // none, current_player, all_players
};

struct ReportRow {
  ReportCell cell;
  AggregateRow best;  // selected (lr, epoch)
  // Mean balanced accuracy minus that of the base row with the same
  // context; empty when there is no such row or this is the base row.
  std::optional<double> improvement;
};

// Selects the best (lr, epoch) of every cell. Cells without metrics are
// left out. Row order follows `cells`.
std::vector<ReportRow> BuildReport(const std::vector<AggregateRow>& aggregate,
                                   const std::vector<ReportCell>& cells);

// "+0.10" / "-0.03": signed, two decimals.
std::string FormatImprovement(double delta);

// Columns: variant, context, lr, epoch, n_runs, then mean and std of
// balanced accuracy, AUC, F1, precision and recall, then improvement.
// Reals carry 17 significant digits so ParseReportCsv is exact.
void WriteReportCsv(std::ostream& out, const std::vector<ReportRow>& rows);
std::vector<ReportRow> ParseReportCsv(std::istream& in);

// Markdown table with two decimals, preceded by the selection of every row.
void WriteReportMarkdown(std::ostream& out, const std::string& title,
                         const std::vector<ReportRow>& rows);

// Per-epoch mean and std of balanced accuracy for every lr of one config.
void WriteCurvesCsv(std::ostream& out, const std::vector<AggregateRow>& rows);

// Static line plot of the same curves with a +-1 std band per lr; the
// selected (lr, epoch) is marked.
void WriteCurvesSvg(std::ostream& out, const std::string& title,
                    const std::vector<AggregateRow>& rows,
                    const AggregateRow& selected);

}  // namespace toxctx

#endif  // TOXCTX_REPORT_H_
