// File plumbing shared by the command-line tool and tests: strict CSV
// reading of observation records, atomic file writes, full-precision number
// formatting, and aligned text tables.
#ifndef DECONVHT_IO_HPP
#define DECONVHT_IO_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace deconvht {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& message, int line = 0)
      : std::runtime_error(line > 0 ? "data line " + std::to_string(line) + ": " + message
                                    : "data: " + message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// One row of an estimation input file.  `history` records contribute to the
// fitted response-probability distribution but not to current responder
// counts (they come from earlier panels of the same population).
struct ObservationRecord {
  std::string group;
  int y = 0;           // observed effort count, 1..J
  std::string w;       // optional covariate value ("" when the file has none)
  bool history = false;
};

struct ObservationData {
  std::vector<ObservationRecord> records;
  bool has_w = false;
  bool has_history = false;
};

namespace io_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string token;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(token);
      token.clear();
    } else if (c != '\r') {
      token.push_back(c);
    }
  }
  out.push_back(token);
  return out;
}

}  // namespace io_detail

// Reads `group,y[,w][,history]` records.  The header row is mandatory and
// fixes which optional columns are present; `max_y` bounds the effort count
// (the observation kernel's support size).
inline ObservationData read_observation_csv(const std::string& path, int max_y) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  ObservationData data;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty data file: " + path);
  const std::vector<std::string> header = io_detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "group" || header[1] != "y")
    throw DataError("header must start with 'group,y'", 1);
  std::size_t idx = 2;
  if (idx < header.size() && header[idx] == "w") {
    data.has_w = true;
    ++idx;
  }
  if (idx < header.size() && header[idx] == "history") {
    data.has_history = true;
    ++idx;
  }
  if (idx != header.size())
    throw DataError("unrecognized header column '" + header[idx] + "'", 1);

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = io_detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(cells.size()),
                      line_no);
    ObservationRecord rec;
    rec.group = cells[0];
    if (rec.group.empty()) throw DataError("empty group label", line_no);
    try {
      std::size_t pos = 0;
      rec.y = std::stoi(cells[1], &pos);
      if (pos != cells[1].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw DataError("effort count is not an integer: '" + cells[1] + "'", line_no);
    }
    if (rec.y < 1 || rec.y > max_y)
      throw DataError("effort count " + std::to_string(rec.y) + " outside 1.." +
                          std::to_string(max_y),
                      line_no);
    std::size_t next = 2;
    if (data.has_w) rec.w = cells[next++];
    if (data.has_history) {
      const std::string& h = cells[next];
      if (h == "1" || h == "true")
        rec.history = true;
      else if (h == "0" || h == "false")
        rec.history = false;
      else
        throw DataError("history flag must be 0/1/true/false: '" + h + "'", line_no);
    }
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) throw DataError("data file has no records: " + path);
  return data;
}

// Generic CSV reading (round-trip checks, table post-processing).
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(io_detail::split_csv_line(line));
  }
  return rows;
}

// Full-precision decimal rendering: 17 significant digits restore the exact
// double on re-parse.
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// Writes content to `path` atomically: a temp file in the same directory is
// renamed over the target, so readers never observe a partial file.
inline void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot rename " + tmp + " to " + path);
  }
}

inline std::string join_csv_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += cells[i];
  }
  out.push_back('\n');
  return out;
}

// Renders rows as a space-aligned table: first column left-aligned, the
// rest right-aligned.
inline std::string align_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c)
      if (row[c].size() > width[c]) width[c] = row[c].size();
  }
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out += "  ";
      const std::size_t pad = width[c] - row[c].size();
      if (c == 0) {
        out += row[c];
        if (c + 1 < row.size()) out.append(pad, ' ');
      } else {
        out.append(pad, ' ');
        out += row[c];
      }
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace deconvht

#endif  // DECONVHT_IO_HPP
