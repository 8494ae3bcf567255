#include "toxctx/report.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>

#include "toxctx/csv.h"
#include "toxctx/error.h"

namespace toxctx {

namespace {

constexpr const char* kReportHeader =
    "variant,context,lr,epoch,n_runs,"
    "balanced_accuracy_mean,balanced_accuracy_std,auc_mean,auc_std,"
    "f1_mean,f1_std,precision_mean,precision_std,recall_mean,recall_std,"
    "improvement";

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

double ParseReal(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line, "bad number '" + s + "'");
  }
  return v;
}

std::vector<std::pair<double, double>> MetricColumns(const AggregateRow& r) {
  return {{r.mean.balanced_accuracy, r.std.balanced_accuracy},
          {r.mean.auc, r.std.auc},
          {r.mean.f1, r.std.f1},
          {r.mean.precision, r.std.precision},
          {r.mean.recall, r.std.recall}};
}

std::string XmlEscape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<ReportRow> BuildReport(const std::vector<AggregateRow>& aggregate,
                                   const std::vector<ReportCell>& cells) {
  std::vector<ReportRow> rows;
  for (const ReportCell& cell : cells) {
    const std::vector<AggregateRow> mine =
        RowsForConfig(aggregate, cell.config_hash);
    if (mine.empty()) continue;
    rows.push_back({cell, SelectBest(mine), std::nullopt});
  }
  std::map<std::string, double> base_by_context;
  for (const ReportRow& r : rows) {
    if (r.cell.variant == "base") {
      base_by_context.emplace(r.cell.context, r.best.mean.balanced_accuracy);
    }
  }
  for (ReportRow& r : rows) {
    auto it = base_by_context.find(r.cell.context);
    if (r.cell.variant != "base" && it != base_by_context.end()) {
      r.improvement = r.best.mean.balanced_accuracy - it->second;
    }
  }
  return rows;
}

std::string FormatImprovement(double delta) {
  // Round first so that -0.004 prints as +0.00 rather than -0.00.
  const double rounded = std::round(delta * 100.0) / 100.0;
  return (rounded >= 0.0 ? "+" : "-") + Fixed(std::fabs(rounded), 2);
}

void WriteReportCsv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << kReportHeader << '\n';
  for (const ReportRow& r : rows) {
    out << CsvEscape(r.cell.variant) << ',' << CsvEscape(r.cell.context) << ','
        << FormatExact(r.best.lr) << ',' << r.best.epoch << ','
        << r.best.n_runs;
    for (const auto& [mean, std] : MetricColumns(r.best)) {
      out << ',' << FormatExact(mean) << ',' << FormatExact(std);
    }
    out << ',' << (r.improvement ? FormatExact(*r.improvement) : "") << '\n';
  }
}

std::vector<ReportRow> ParseReportCsv(std::istream& in) {
  CsvReader reader(in);
  const auto header = reader.Next();
  if (!header) return {};
  constexpr std::size_t kWidth = 16;
  if (header->size() != kWidth || (*header)[0] != "variant") {
    throw ParseError(1, "not a report CSV");
  }
  std::vector<ReportRow> rows;
  while (auto rec = reader.Next()) {
    const std::size_t line = reader.record_line();
    if (rec->size() != kWidth) {
      throw ParseError(line, "expected " + std::to_string(kWidth) + " fields");
    }
    ReportRow r;
    r.cell.variant = (*rec)[0];
    r.cell.context = (*rec)[1];
    r.best.lr = ParseReal((*rec)[2], line);
    r.best.epoch = static_cast<int>(ParseReal((*rec)[3], line));
    r.best.n_runs = static_cast<std::size_t>(ParseReal((*rec)[4], line));
    double* targets[] = {&r.best.mean.balanced_accuracy,
                         &r.best.std.balanced_accuracy,
                         &r.best.mean.auc,
                         &r.best.std.auc,
                         &r.best.mean.f1,
                         &r.best.std.f1,
                         &r.best.mean.precision,
                         &r.best.std.precision,
                         &r.best.mean.recall,
                         &r.best.std.recall};
    for (std::size_t i = 0; i < std::size(targets); ++i) {
      *targets[i] = ParseReal((*rec)[5 + i], line);
    }
    if (!(*rec)[15].empty()) r.improvement = ParseReal((*rec)[15], line);
    rows.push_back(std::move(r));
  }
  return rows;
}

void WriteReportMarkdown(std::ostream& out, const std::string& title,
                         const std::vector<ReportRow>& rows) {
  out << "# " << title << "\n\n";
  out << "Selected learning rate and epoch (0-based) per row, by best mean "
         "balanced accuracy:\n\n";
  for (const ReportRow& r : rows) {
    out << "- " << r.cell.variant << " / " << r.cell.context
        << ": lr=" << FormatExact(r.best.lr) << ", epoch=" << r.best.epoch
        << ", runs=" << r.best.n_runs << '\n';
  }
  out << "\n| model | context | balanced accuracy | | AUC | | binary F1 | "
         "| precision | | recall | | vs base |\n";
  out << "|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
  out << "| | | mean | std | mean | std | mean | std | mean | std | mean | "
         "std | |\n";
  for (const ReportRow& r : rows) {
    out << "| " << r.cell.variant << " | " << r.cell.context;
    for (const auto& [mean, std] : MetricColumns(r.best)) {
      out << " | " << Fixed(mean, 2) << " | " << Fixed(std, 2);
    }
    out << " | " << (r.improvement ? FormatImprovement(*r.improvement) : "")
        << " |\n";
  }
}

void WriteCurvesCsv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "config_hash,lr,epoch,n_runs,balanced_accuracy_mean,"
         "balanced_accuracy_std\n";
  for (const AggregateRow& r : rows) {
    out << CsvEscape(r.config_hash) << ',' << FormatExact(r.lr) << ','
        << r.epoch << ',' << r.n_runs << ','
        << FormatExact(r.mean.balanced_accuracy) << ','
        << FormatExact(r.std.balanced_accuracy) << '\n';
  }
}

void WriteCurvesSvg(std::ostream& out, const std::string& title,
                    const std::vector<AggregateRow>& rows,
                    const AggregateRow& selected) {
  constexpr double kWidth = 640, kHeight = 400;
  constexpr double kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  std::map<double, std::vector<const AggregateRow*>> by_lr;
  int max_epoch = 0;
  double lo = 1.0, hi = 0.0;
  for (const AggregateRow& r : rows) {
    by_lr[r.lr].push_back(&r);
    max_epoch = std::max(max_epoch, r.epoch);
    lo = std::min(lo, r.mean.balanced_accuracy - r.std.balanced_accuracy);
    hi = std::max(hi, r.mean.balanced_accuracy + r.std.balanced_accuracy);
  }
  if (rows.empty()) lo = 0.0, hi = 1.0;
  lo = std::max(0.0, std::floor(lo * 20.0) / 20.0);
  hi = std::min(1.0, std::ceil(hi * 20.0) / 20.0);
  if (hi - lo < 0.05) hi = std::min(1.0, lo + 0.05), lo = hi - 0.05;

  auto x_of = [&](int epoch) {
    return kLeft + (max_epoch == 0 ? plot_w / 2
                                   : plot_w * epoch / static_cast<double>(max_epoch));
  };
  auto y_of = [&](double v) {
    return kTop + plot_h * (1.0 - (v - lo) / (hi - lo));
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" font-family=\"sans-serif\" "
      << "font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-size=\"14\">" << XmlEscape(title) << "</text>\n";
  // Axes and grid.
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = y_of(v);
    out << "<line x1=\"" << kLeft << "\" y1=\"" << Fixed(y, 2) << "\" x2=\""
        << kLeft + plot_w << "\" y2=\"" << Fixed(y, 2)
        << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << Fixed(y + 4, 2)
        << "\" text-anchor=\"end\">" << Fixed(v, 2) << "</text>\n";
  }
  for (int e = 0; e <= max_epoch; ++e) {
    out << "<text x=\"" << Fixed(x_of(e), 2) << "\" y=\""
        << kTop + plot_h + 18 << "\" text-anchor=\"middle\">" << e
        << "</text>\n";
  }
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
      << kLeft + plot_w << "\" y2=\"" << kTop + plot_h
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">epoch</text>\n";
  out << "<text x=\"16\" y=\"" << kTop + plot_h / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kTop + plot_h / 2 << ")\">balanced accuracy (mean &#177; std)</text>\n";

  std::size_t color = 0;
  for (auto& [lr, points] : by_lr) {
    std::sort(points.begin(), points.end(),
              [](const AggregateRow* a, const AggregateRow* b) {
                return a->epoch < b->epoch;
              });
    const char* c = kPalette[color % std::size(kPalette)];
    std::string band, line;
    for (const AggregateRow* p : points) {
      band += Fixed(x_of(p->epoch), 2) + "," +
              Fixed(y_of(p->mean.balanced_accuracy + p->std.balanced_accuracy),
                    2) +
              " ";
    }
    for (auto it = points.rbegin(); it != points.rend(); ++it) {
      band += Fixed(x_of((*it)->epoch), 2) + "," +
              Fixed(y_of((*it)->mean.balanced_accuracy -
                         (*it)->std.balanced_accuracy),
                    2) +
              " ";
    }
    for (const AggregateRow* p : points) {
      line += Fixed(x_of(p->epoch), 2) + "," +
              Fixed(y_of(p->mean.balanced_accuracy), 2) + " ";
    }
    out << "<polygon points=\"" << band << "\" fill=\"" << c
        << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    out << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << c
        << "\" stroke-width=\"2\"/>\n";
    const double ly = kTop + 10 + 18 * static_cast<double>(color);
    out << "<line x1=\"" << kLeft + plot_w + 14 << "\" y1=\"" << ly
        << "\" x2=\"" << kLeft + plot_w + 34 << "\" y2=\"" << ly
        << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kLeft + plot_w + 40 << "\" y=\"" << ly + 4
        << "\">lr " << FormatExact(lr) << "</text>\n";
    ++color;
  }
  if (!rows.empty()) {
    out << "<circle cx=\"" << Fixed(x_of(selected.epoch), 2) << "\" cy=\""
        << Fixed(y_of(selected.mean.balanced_accuracy), 2)
        << "\" r=\"6\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace toxctx
