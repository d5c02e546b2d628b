#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aftmed/dataset.hpp"

namespace aftmed {

// Column-name mapping for survival CSV files. Two time columns encode the
// outcome: time2 == time1 means an exact event, an empty or NA time2 means
// right-censored at time1, and time1 < time2 means interval-censored. An
// empty `time2` name declares the file has exact outcomes only; an empty
// `truncation` name declares no truncation column.
struct CsvSchema {
  std::string exposure = "exposure";
  std::string mediator = "mediator";
  std::string time1 = "time1";
  std::string time2 = "time2";
  std::string truncation;
  std::vector<std::string> covariates;
};

// Reads a header-first comma-separated file. Rows violating the dataset
// invariants are reported with their 1-based data-row numbers.
Dataset read_csv(const std::filesystem::path& path, const CsvSchema& schema);

// Writes with the schema's column names, times at 17 significant digits so a
// read round-trips bit-exactly. The truncation column is emitted when the
// schema names it or any subject is truncated.
void write_csv(const Dataset& dataset, const std::filesystem::path& path,
               const CsvSchema& schema = {});

}  // namespace aftmed
