#pragma once

#include <map>
#include <string>
#include <vector>

#include "fpr/evaluate.hpp"

namespace fpr {

// CSV schema (one row per surrogate/plan/target/seed):
//   surrogate,plan,target,seed,asr,successes,eligible,white_box,digest
// ASR is printed with six decimals so reruns are byte-comparable.
void write_transfer_csv(const std::string& path, const TransferReport& report);
std::vector<TransferCell> read_transfer_csv(const std::string& path,
                                            std::vector<std::string>* digests = nullptr);

// Sidecar with per-report telemetry (constraint excursions, meta).
void write_trace_json(const std::string& path, const TransferReport& report);

struct MergedRow {
  std::string surrogate, plan, target;
  double mean_asr = 0.0;
  double std_asr = 0.0;  // sample standard deviation over seeds
  int seeds = 0;
  bool white_box = false;
};

struct MergedReport {
  std::vector<MergedRow> rows;
  std::string digest;  // common digest, or "mixed" when overridden
};

// Merge per-seed CSVs. Differing digests are rejected unless
// allow_mixed_digests is set.
MergedReport merge_reports(const std::vector<std::string>& csv_paths, bool allow_mixed_digests);

void write_merged_csv(const std::string& path, const MergedReport& merged);

// Plans as rows, targets as columns, white-box column starred, final column
// the white-box-excluded average.
std::string render_table(const MergedReport& merged);

}  // namespace fpr
