#include "aftmed/csv.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "aftmed/errors.hpp"

namespace aftmed {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

bool is_na(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN";
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size()) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Dataset read_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("csv: cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("csv: empty file " + path.string());
  }
  const std::vector<std::string> header = split_line(line);
  auto column = [&](const std::string& name,
                    bool required) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    if (required) {
      throw DataError("csv: missing column '" + name + "' in " + path.string());
    }
    return std::nullopt;
  };

  const std::size_t c_exposure = *column(schema.exposure, true);
  const std::size_t c_mediator = *column(schema.mediator, true);
  const std::size_t c_time1 = *column(schema.time1, true);
  std::optional<std::size_t> c_time2, c_trunc;
  if (!schema.time2.empty()) c_time2 = column(schema.time2, true);
  if (!schema.truncation.empty()) c_trunc = column(schema.truncation, true);
  std::vector<std::size_t> c_cov;
  for (const std::string& name : schema.covariates) {
    c_cov.push_back(*column(name, true));
  }

  std::vector<Subject> subjects;
  std::vector<std::string> bad;
  auto reject = [&](std::size_t row, const std::string& why) {
    if (bad.size() < 10) {
      std::ostringstream msg;
      msg << "row " << row << ": " << why;
      bad.push_back(msg.str());
    }
  };

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      reject(row, "expected " + std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
      continue;
    }
    auto numeric = [&](std::size_t col, const char* what) -> std::optional<double> {
      auto v = parse_number(cells[col]);
      if (!v) reject(row, std::string("non-numeric ") + what + " '" + cells[col] + "'");
      return v;
    };

    Subject s;
    const auto exposure = numeric(c_exposure, "exposure");
    const auto mediator = numeric(c_mediator, "mediator");
    const auto t1 = numeric(c_time1, schema.time1.c_str());
    if (!exposure || !mediator || !t1) continue;
    s.exposure = *exposure;
    s.mediator = *mediator;

    if (!c_time2) {
      s.outcome = SurvivalOutcome::exact(*t1);
    } else if (is_na(cells[*c_time2])) {
      s.outcome = SurvivalOutcome::right_censored(*t1);
    } else {
      const auto t2 = numeric(*c_time2, schema.time2.c_str());
      if (!t2) continue;
      if (*t2 == *t1) {
        s.outcome = SurvivalOutcome::exact(*t1);
      } else if (*t2 < *t1) {
        std::ostringstream why;
        why << "interval bounds out of order (" << schema.time1 << "=" << *t1
            << ", " << schema.time2 << "=" << *t2 << ")";
        reject(row, why.str());
        continue;
      } else {
        s.outcome = SurvivalOutcome::interval(*t1, *t2);
      }
    }

    if (c_trunc && !is_na(cells[*c_trunc])) {
      const auto v = numeric(*c_trunc, schema.truncation.c_str());
      if (!v) continue;
      s.truncation = *v;
    }

    s.covariates.reserve(c_cov.size());
    bool cov_ok = true;
    for (std::size_t j = 0; j < c_cov.size(); ++j) {
      const auto v = numeric(c_cov[j], schema.covariates[j].c_str());
      if (!v) {
        cov_ok = false;
        break;
      }
      s.covariates.push_back(*v);
    }
    if (!cov_ok) continue;
    subjects.push_back(std::move(s));
  }

  if (!bad.empty()) {
    std::string what = "csv: rejected rows in " + path.string() + ":";
    for (const std::string& b : bad) what += "\n  " + b;
    throw DataError(what);
  }
  if (subjects.empty()) {
    throw DataError("csv: no data rows in " + path.string());
  }
  try {
    return Dataset(std::move(subjects), schema.covariates);
  } catch (const DataError& e) {
    throw DataError("csv: " + path.string() + ": " + e.what());
  }
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path,
               const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("csv: cannot write " + path.string());
  }
  bool any_trunc = !schema.truncation.empty();
  for (const Subject& s : dataset.subjects()) {
    any_trunc = any_trunc || s.truncation > 0.0;
  }
  const std::string time2 = schema.time2.empty() ? "time2" : schema.time2;
  const std::string trunc =
      schema.truncation.empty() ? "truncation" : schema.truncation;

  out << schema.time1 << ',' << time2;
  if (any_trunc) out << ',' << trunc;
  out << ',' << schema.exposure << ',' << schema.mediator;
  const std::vector<std::string>& cov_names = dataset.covariate_names();
  for (const std::string& name : cov_names) out << ',' << name;
  out << '\n';

  for (const Subject& s : dataset.subjects()) {
    out << format_number(s.outcome.time) << ',';
    switch (s.outcome.kind) {
      case OutcomeKind::exact:
        out << format_number(s.outcome.time);
        break;
      case OutcomeKind::right_censored:
        out << "NA";
        break;
      case OutcomeKind::interval_censored:
        out << format_number(s.outcome.upper);
        break;
    }
    if (any_trunc) {
      out << ',';
      if (s.truncation > 0.0) out << format_number(s.truncation);
      else out << "NA";
    }
    out << ',' << format_number(s.exposure) << ',' << format_number(s.mediator);
    for (double v : s.covariates) out << ',' << format_number(v);
    out << '\n';
  }
  if (!out) {
    throw DataError("csv: write failed for " + path.string());
  }
}

}  // namespace aftmed
