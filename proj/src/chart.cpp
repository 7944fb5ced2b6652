#include "popmir/chart.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include "popmir/csv.h"
#include "popmir/error.h"

namespace popmir {

namespace {

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

std::string line_error(std::size_t line, const std::string& what) {
  return "chart csv line " + std::to_string(line) + ": " + what;
}

}  // namespace

Date parse_iso_date(std::string_view text) {
  int y = 0;
  int m = 0;
  int d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_int(text.substr(0, 4), y) ||
      !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d)) {
    throw ValidationError("bad ISO-8601 date '" + std::string(text) + "'");
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw ValidationError("invalid calendar date '" + std::string(text) + "'");
  return Date{ymd};
}

std::string format_iso_date(Date date) {
  std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<ChartEntry> parse_chart_csv(std::istream& in, int max_rank) {
  if (max_rank < 1) throw ValidationError("max_rank must be >= 1");
  auto rows = read_csv(in);
  if (rows.empty()) throw ValidationError("chart csv: missing header");

  const std::vector<std::string> header{"week", "rank", "song_id", "title", "artist"};
  if (rows.front().fields != header) {
    throw ValidationError(line_error(rows.front().line, "expected header week,rank,song_id,title,artist"));
  }

  std::vector<ChartEntry> entries;
  entries.reserve(rows.size() - 1);
  std::set<std::pair<Date, int>> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != 5) {
      throw ValidationError(line_error(row.line, "expected 5 fields, got " + std::to_string(row.fields.size())));
    }
    ChartEntry e;
    try {
      e.week = parse_iso_date(row.fields[0]);
    } catch (const ValidationError& err) {
      throw ValidationError(line_error(row.line, err.what()));
    }
    if (!parse_int(row.fields[1], e.rank)) {
      throw ValidationError(line_error(row.line, "rank '" + row.fields[1] + "' is not an integer"));
    }
    if (e.rank < 1 || e.rank > max_rank) {
      throw ValidationError(line_error(row.line, "rank " + std::to_string(e.rank) + " outside [1, " +
                                                     std::to_string(max_rank) + "]"));
    }
    if (row.fields[2].empty()) throw ValidationError(line_error(row.line, "empty song_id"));
    if (!seen.emplace(e.week, e.rank).second) {
      throw ValidationError(line_error(row.line, "duplicate rank " + std::to_string(e.rank) + " in week " +
                                                     row.fields[0]));
    }
    e.song_id = row.fields[2];
    e.title = row.fields[3];
    e.artist = row.fields[4];
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ChartEntry> parse_chart_csv(std::string_view text, int max_rank) {
  std::istringstream in{std::string(text)};
  return parse_chart_csv(in, max_rank);
}

std::vector<SongHistory> assemble_histories(const std::vector<ChartEntry>& entries, int max_rank) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<std::pair<Date, int>>> points;
  std::vector<std::string> ids;

  for (const auto& e : entries) {
    if (e.rank < 1 || e.rank > max_rank) {
      throw ValidationError("song " + e.song_id + ": rank " + std::to_string(e.rank) + " outside chart");
    }
    auto [it, inserted] = index.emplace(e.song_id, ids.size());
    if (inserted) {
      ids.push_back(e.song_id);
      points.emplace_back();
    }
    points[it->second].emplace_back(e.week, rank_score(e.rank, max_rank));
  }

  std::vector<SongHistory> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto& p = points[i];
    std::stable_sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    SongHistory h;
    h.song_id = ids[i];
    h.max_rank = max_rank;
    h.weeks.reserve(p.size());
    h.rank_scores.reserve(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (k > 0 && p[k].first == p[k - 1].first) {
        throw ValidationError("song " + ids[i] + " appears twice in week " + format_iso_date(p[k].first));
      }
      h.weeks.push_back(p[k].first);
      h.rank_scores.push_back(p[k].second);
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<SongHistory> filter_min_weeks(const std::vector<SongHistory>& histories, int min_weeks) {
  if (min_weeks < 1) throw ValidationError("min_weeks must be >= 1");
  std::vector<SongHistory> out;
  std::copy_if(histories.begin(), histories.end(), std::back_inserter(out),
               [&](const SongHistory& h) { return h.length() >= static_cast<std::size_t>(min_weeks); });
  return out;
}

void write_chart_csv(std::ostream& out, const std::vector<ChartEntry>& entries) {
  out << "week,rank,song_id,title,artist\n";
  for (const auto& e : entries) {
    out << format_iso_date(e.week) << ',' << e.rank << ',' << csv_escape(e.song_id) << ','
        << csv_escape(e.title) << ',' << csv_escape(e.artist) << '\n';
  }
}

}  // namespace popmir
