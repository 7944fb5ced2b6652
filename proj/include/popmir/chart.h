#pragma once

#include <chrono>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace popmir {

using Date = std::chrono::sys_days;

/// Parses `YYYY-MM-DD`; throws ValidationError on anything else.
Date parse_iso_date(std::string_view text);
std::string format_iso_date(Date date);

/// One row of a weekly chart.
struct ChartEntry {
  Date week;
  int rank = 0;
  std::string song_id;
  std::string title;
  std::string artist;
};

/// The rank-score time series of one song. `rank_scores` is parallel to
/// `weeks`; weeks are strictly increasing and may contain gaps where the
/// song dropped out and re-entered.
struct SongHistory {
  std::string song_id;
  std::vector<Date> weeks;
  std::vector<int> rank_scores;
  int max_rank = 0;

  std::size_t length() const { return weeks.size(); }
  Date first_week() const { return weeks.front(); }
  Date last_week() const { return weeks.back(); }
};

/// Inverted chart position: the top rank maps to max_rank, the bottom to 1.
constexpr int rank_score(int rank, int max_rank) { return max_rank - rank + 1; }

/// Reads a `week,rank,song_id,title,artist` chart file. Errors name the
/// offending line.
std::vector<ChartEntry> parse_chart_csv(std::istream& in, int max_rank);
std::vector<ChartEntry> parse_chart_csv(std::string_view text, int max_rank);

/// Groups entries by song_id (first-appearance order) with weeks sorted.
std::vector<SongHistory> assemble_histories(const std::vector<ChartEntry>& entries, int max_rank);

/// Drops songs that charted fewer than `min_weeks` weeks.
std::vector<SongHistory> filter_min_weeks(const std::vector<SongHistory>& histories,
                                          int min_weeks = 3);

/// Writes entries back in the canonical CSV layout.
void write_chart_csv(std::ostream& out, const std::vector<ChartEntry>& entries);

}  // namespace popmir
