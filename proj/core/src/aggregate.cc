#include "toxctx/aggregate.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "toxctx/csv.h"
#include "toxctx/data_model.h"
#include "toxctx/error.h"

namespace toxctx {

namespace {

constexpr const char* kMetricNames[] = {"balanced_accuracy", "auc",
                                        "precision", "recall", "f1"};

double& Field(MetricValues& m, std::size_t i) {
  switch (i) {
    case 0: return m.balanced_accuracy;
    case 1: return m.auc;
    case 2: return m.precision;
    case 3: return m.recall;
    default: return m.f1;
  }
}

double Field(const MetricValues& m, std::size_t i) {
  return Field(const_cast<MetricValues&>(m), i);
}

double ParseDouble(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line, "bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::string FormatExact(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string SerializeRunMetrics(const RunMetrics& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["epoch"] = r.epoch;
  j["lr"] = r.lr;
  for (std::size_t i = 0; i < std::size(kMetricNames); ++i) {
    j[kMetricNames[i]] = Field(r.values, i);
  }
  return j.dump();
}

void AppendRunMetrics(std::ostream& out, const RunMetrics& record) {
  out << SerializeRunMetrics(record) << '\n';
}

std::vector<RunMetrics> ParseRunMetrics(std::istream& in) {
  std::vector<RunMetrics> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      RunMetrics r;
      r.run_id = j.at("run_id").get<std::string>();
      r.config_hash = j.at("config_hash").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.epoch = j.at("epoch").get<int>();
      r.lr = j.at("lr").get<double>();
      for (std::size_t i = 0; i < std::size(kMetricNames); ++i) {
        Field(r.values, i) = j.at(kMetricNames[i]).get<double>();
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::vector<RunMetrics> ReadRunMetricsFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kMissingArtifact, "cannot open " + path);
  return ParseRunMetrics(in);
}

std::vector<AggregateRow> AggregateRunMetrics(
    const std::vector<RunMetrics>& records) {
  using Key = std::tuple<std::string, double, int>;
  std::map<Key, std::vector<const RunMetrics*>> groups;
  for (const RunMetrics& r : records) {
    groups[{r.config_hash, r.lr, r.epoch}].push_back(&r);
  }
  std::vector<AggregateRow> rows;
  rows.reserve(groups.size());
  for (auto& [key, members] : groups) {
    // Sum in a canonical order so the result is independent of input order.
    std::sort(members.begin(), members.end(),
              [](const RunMetrics* a, const RunMetrics* b) {
                return std::tie(a->seed, a->run_id) <
                       std::tie(b->seed, b->run_id);
              });
    AggregateRow row;
    std::tie(row.config_hash, row.lr, row.epoch) = key;
    row.n_runs = members.size();
    const double n = static_cast<double>(members.size());
    for (std::size_t i = 0; i < std::size(kMetricNames); ++i) {
      double sum = 0.0;
      for (const RunMetrics* m : members) sum += Field(m->values, i);
      const double mean = sum / n;
      double ss = 0.0;
      for (const RunMetrics* m : members) {
        const double d = Field(m->values, i) - mean;
        ss += d * d;
      }
      Field(row.mean, i) = mean;
      Field(row.std, i) = members.size() == 1 ? 0.0 : std::sqrt(ss / n);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

AggregateRow SelectBest(const std::vector<AggregateRow>& rows) {
  if (rows.empty()) throw Error(ErrorKind::kInput, "nothing to select from");
  const AggregateRow* best = &rows.front();
  for (const AggregateRow& row : rows) {
    if (row.config_hash != best->config_hash) {
      throw Error(ErrorKind::kInput, "selection spans several configs");
    }
    const double a = row.mean.balanced_accuracy;
    const double b = best->mean.balanced_accuracy;
    if (a > b || (a == b && std::tie(row.epoch, row.lr) <
                                std::tie(best->epoch, best->lr))) {
      best = &row;
    }
  }
  return *best;
}

std::vector<AggregateRow> RowsForConfig(const std::vector<AggregateRow>& rows,
                                        const std::string& config_hash) {
  std::vector<AggregateRow> out;
  for (const AggregateRow& r : rows) {
    if (r.config_hash == config_hash) out.push_back(r);
  }
  return out;
}

void WriteAggregateCsv(std::ostream& out,
                       const std::vector<AggregateRow>& rows) {
  out << "config_hash,lr,epoch,n_runs";
  for (const char* name : kMetricNames) {
    out << ',' << name << "_mean," << name << "_std";
  }
  out << '\n';
  for (const AggregateRow& r : rows) {
    out << CsvEscape(r.config_hash) << ',' << FormatExact(r.lr) << ','
        << r.epoch << ',' << r.n_runs;
    for (std::size_t i = 0; i < std::size(kMetricNames); ++i) {
      out << ',' << FormatExact(Field(r.mean, i)) << ','
          << FormatExact(Field(r.std, i));
    }
    out << '\n';
  }
}

std::vector<AggregateRow> ParseAggregateCsv(std::istream& in) {
  CsvReader reader(in);
  const auto header = reader.Next();
  if (!header) return {};
  const std::size_t width = 4 + 2 * std::size(kMetricNames);
  if (header->size() != width || (*header)[0] != "config_hash") {
    throw ParseError(1, "not an aggregate metrics CSV");
  }
  std::vector<AggregateRow> rows;
  while (auto rec = reader.Next()) {
    const std::size_t line = reader.record_line();
    if (rec->size() != width) {
      throw ParseError(line, "expected " + std::to_string(width) + " fields");
    }
    AggregateRow r;
    r.config_hash = (*rec)[0];
    r.lr = ParseDouble((*rec)[1], line);
    r.epoch = static_cast<int>(ParseDouble((*rec)[2], line));
    r.n_runs = static_cast<std::size_t>(ParseDouble((*rec)[3], line));
    for (std::size_t i = 0; i < std::size(kMetricNames); ++i) {
      Field(r.mean, i) = ParseDouble((*rec)[4 + 2 * i], line);
      Field(r.std, i) = ParseDouble((*rec)[5 + 2 * i], line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace toxctx
