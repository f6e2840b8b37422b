#include "fpr/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fpr/errors.hpp"

namespace fpr {

namespace {

std::string fmt_asr(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

void write_transfer_csv(const std::string& path, const TransferReport& report) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("report: cannot open '" + path + "' for writing");
  f << "surrogate,plan,target,seed,asr,successes,eligible,white_box,digest\n";
  for (const TransferCell& c : report.cells) {
    f << c.surrogate << ',' << c.plan << ',' << c.target << ',' << c.seed << ',' << fmt_asr(c.asr)
      << ',' << c.successes << ',' << c.eligible << ',' << (c.white_box ? 1 : 0) << ','
      << report.digest << '\n';
  }
  if (!f) throw std::runtime_error("report: write failed for '" + path + "'");
}

std::vector<TransferCell> read_transfer_csv(const std::string& path,
                                            std::vector<std::string>* digests) {
  std::ifstream f(path);
  if (!f) throw ConfigError("report: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw ConfigError("report: '" + path + "' is empty");
  std::vector<TransferCell> cells;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 9) {
      throw ConfigError("report: malformed row in '" + path + "': " + line);
    }
    TransferCell c;
    c.surrogate = fields[0];
    c.plan = fields[1];
    c.target = fields[2];
    c.seed = std::stoi(fields[3]);
    c.asr = std::stod(fields[4]);
    c.successes = std::stoul(fields[5]);
    c.eligible = std::stoul(fields[6]);
    c.white_box = fields[7] == "1";
    cells.push_back(std::move(c));
    if (digests) digests->push_back(fields[8]);
  }
  return cells;
}

void write_trace_json(const std::string& path, const TransferReport& report) {
  nlohmann::json j;
  j["digest"] = report.digest;
  j["meta"] = report.meta;
  j["max_linf_excess"] = report.max_linf_excess;
  j["max_range_excess"] = report.max_range_excess;
  j["zero_grad_events"] = report.zero_grad_events;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("report: cannot open '" + path + "' for writing");
  f << j.dump(2) << "\n";
}

MergedReport merge_reports(const std::vector<std::string>& csv_paths, bool allow_mixed_digests) {
  if (csv_paths.empty()) throw ConfigError("report: no input files");
  std::vector<TransferCell> cells;
  std::set<std::string> digests;
  for (const std::string& path : csv_paths) {
    std::vector<std::string> row_digests;
    auto file_cells = read_transfer_csv(path, &row_digests);
    cells.insert(cells.end(), file_cells.begin(), file_cells.end());
    digests.insert(row_digests.begin(), row_digests.end());
  }
  if (digests.size() > 1 && !allow_mixed_digests) {
    std::string list;
    for (const auto& d : digests) list += " " + d;
    throw ConfigError("report: mixed config digests across inputs (" + list +
                      " ); pass the override flag to merge anyway");
  }

  // Group by (surrogate, plan, target) preserving first-seen order.
  MergedReport merged;
  merged.digest = digests.size() == 1 ? *digests.begin() : "mixed";
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<const TransferCell*>>
      groups;
  for (const TransferCell& c : cells) {
    auto key = std::make_tuple(c.surrogate, c.plan, c.target);
    auto [it, inserted] = groups.emplace(key, std::vector<const TransferCell*>{});
    if (inserted) keys.push_back(key);
    it->second.push_back(&c);
  }
  for (const auto& key : keys) {
    const auto& group = groups.at(key);
    MergedRow row;
    row.surrogate = std::get<0>(key);
    row.plan = std::get<1>(key);
    row.target = std::get<2>(key);
    row.seeds = static_cast<int>(group.size());
    row.white_box = group.front()->white_box;
    double sum = 0.0;
    for (const TransferCell* c : group) sum += c->asr;
    row.mean_asr = sum / static_cast<double>(group.size());
    if (group.size() > 1) {
      double ss = 0.0;
      for (const TransferCell* c : group) ss += (c->asr - row.mean_asr) * (c->asr - row.mean_asr);
      row.std_asr = std::sqrt(ss / static_cast<double>(group.size() - 1));
    }
    merged.rows.push_back(std::move(row));
  }
  return merged;
}

void write_merged_csv(const std::string& path, const MergedReport& merged) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("report: cannot open '" + path + "' for writing");
  f << "surrogate,plan,target,mean_asr,std_asr,seeds,white_box,digest\n";
  for (const MergedRow& r : merged.rows) {
    f << r.surrogate << ',' << r.plan << ',' << r.target << ',' << fmt_asr(r.mean_asr) << ','
      << fmt_asr(r.std_asr) << ',' << r.seeds << ',' << (r.white_box ? 1 : 0) << ','
      << merged.digest << '\n';
  }
}

std::string render_table(const MergedReport& merged) {
  // Column order: first-seen targets; white-box columns starred.
  std::vector<std::string> plans, targets;
  std::set<std::string> white_box_targets;
  for (const MergedRow& r : merged.rows) {
    if (std::find(plans.begin(), plans.end(), r.plan) == plans.end()) plans.push_back(r.plan);
    if (std::find(targets.begin(), targets.end(), r.target) == targets.end()) {
      targets.push_back(r.target);
    }
    if (r.white_box) white_box_targets.insert(r.target);
  }

  std::ostringstream os;
  os << "ASR (%) mean +/- std over seeds; * marks the white-box column, excluded from Average\n";
  const int w = 16;
  os << std::string(10, ' ');
  for (const auto& t : targets) {
    std::string head = t + (white_box_targets.count(t) ? "*" : "");
    os << std::string(w - static_cast<int>(std::min<std::size_t>(head.size(), w)), ' ') << head;
  }
  os << std::string(w - 7, ' ') << "Average\n";

  for (const auto& plan : plans) {
    os << plan << std::string(plan.size() < 10 ? 10 - plan.size() : 1, ' ');
    double avg = 0.0;
    int avg_n = 0;
    for (const auto& t : targets) {
      const MergedRow* found = nullptr;
      for (const MergedRow& r : merged.rows) {
        if (r.plan == plan && r.target == t) {
          found = &r;
          break;
        }
      }
      if (!found) {
        os << std::string(w - 1, ' ') << "-";
        continue;
      }
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%.1f+/-%.1f", found->mean_asr, found->std_asr);
      std::string cell(buf);
      os << std::string(w - static_cast<int>(std::min<std::size_t>(cell.size(), w)), ' ') << cell;
      if (!found->white_box) {
        avg += found->mean_asr;
        ++avg_n;
      }
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", avg_n ? avg / avg_n : 0.0);
    std::string cell(buf);
    os << std::string(w - static_cast<int>(std::min<std::size_t>(cell.size(), w)), ' ') << cell
       << "\n";
  }
  return os.str();
}

}  // namespace fpr
