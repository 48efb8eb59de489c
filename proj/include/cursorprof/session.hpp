#pragma once

// Canonical data model for logged cursor sessions, plus parsing, filtering,
// splitting and padding into fixed-length sequences.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cursorprof/error.hpp"

namespace cursorprof {

enum class EventName { mousemove, click, scroll, load, other };

std::string_view to_string(EventName name);
// Unknown names map to EventName::other.
EventName event_name_from(std::string_view name);

struct CursorEvent {
  double x = 0.0;  // px
  double y = 0.0;  // px
  double t = 0.0;  // ms since session start
  EventName name = EventName::mousemove;
  std::optional<std::string> target_path;

  bool operator==(const CursorEvent&) const = default;
};

enum class Gender { male, female, undisclosed };
enum class AgeGroup { young, adult, undisclosed };

// 18-35 young, 36-66 adult, anything else undisclosed.
AgeGroup age_group_for(std::optional<int> age_years);

struct Demographics {
  Gender gender = Gender::undisclosed;
  std::optional<int> age_years;

  AgeGroup age_group() const { return age_group_for(age_years); }
  bool operator==(const Demographics&) const = default;
};

struct Session {
  std::string id;
  std::string query;
  int viewport_w = 0;
  int viewport_h = 0;
  std::vector<CursorEvent> events;
  Demographics demographics;

  // Number of mousemove events.
  std::size_t coordinate_count() const;
  bool operator==(const Session&) const = default;
};

enum class Task { age, gender };

std::string_view to_string(Task task);
Task task_from(std::string_view name);

// Binary label for a task: 1 for the majority class (male, young), 0 for
// female/adult, nullopt when undisclosed.
std::optional<int> label_of(const Session& s, Task task);

enum class Partition : std::uint8_t { train, test };

struct Dataset {
  std::vector<Session> sessions;
  // One entry per session when present.
  std::optional<std::vector<Partition>> split;
  std::uint64_t seed = 0;

  // Sessions assigned to `p`, keeping their order. Requires a split.
  Dataset partition(Partition p) const;
};

enum class InputFormat { canonical_jsonl, attentive_cursor_raw };

InputFormat input_format_from(std::string_view tag);

struct ParseResult {
  Dataset dataset;
  Diagnostics diagnostics;
};

// canonical_jsonl: one session per line, see docs/data-format.md.
// attentive_cursor_raw: a single space-separated event log ("cursor
// timestamp xpos ypos event xpath ..."), imported as one session with
// undisclosed demographics and id `raw_id`.
ParseResult parse_sessions(std::istream& in, InputFormat format,
                           std::string_view raw_id = "session");
ParseResult parse_sessions_text(std::string_view text, InputFormat format,
                                std::string_view raw_id = "session");

// Imports a checkout of the public dataset: participants.tsv joined with
// logs/<id>.txt (events) and logs/<id>.xml (viewport). Best effort: column
// names are matched case-insensitively and unknown columns are ignored.
ParseResult import_attentive_cursor_dir(const std::filesystem::path& root);

// Sorts by t (stable), shifts so the first t is 0 and nudges duplicate
// timestamps up by one ulp so times are strictly increasing.
void canonicalize_events(std::vector<CursorEvent>& events);

// One canonical JSON line, no trailing newline.
std::string serialize_session(const Session& s);
std::string serialize_dataset(const Dataset& d);

struct FilterCounts {
  std::size_t too_few_coordinates = 0;
  std::size_t undisclosed_label = 0;

  bool operator==(const FilterCounts&) const = default;
};

struct FilterResult {
  Dataset dataset;
  FilterCounts removed;
};

// Drops sessions with fewer than min_coords mousemove events and, when a
// task is given, sessions whose label for that task is undisclosed.
FilterResult filter_sessions(const Dataset& d, std::optional<Task> task,
                             std::size_t min_coords = 10);

struct SplitOptions {
  double test_fraction = 0.10;
  std::uint64_t seed = 0;
  bool stratify = false;
  // Required for stratification; sessions without a label form their own
  // stratum.
  std::optional<Task> task;
};

struct SplitResult {
  Dataset dataset;
  Diagnostics diagnostics;
};

// Seeded train/test assignment. The train size is floor(n * (1 - f)).
SplitResult split_dataset(const Dataset& d, const SplitOptions& opts);

enum class TimeMode { offsets_from_start };

// Fixed-length (x, y, t) sequence, rows past true_length are zero.
struct SequenceTensor {
  std::size_t max_len = 0;
  std::size_t true_length = 0;
  std::vector<double> values;  // max_len * 3, row-major

  std::span<const double, 3> row(std::size_t i) const {
    return std::span<const double, 3>(values.data() + 3 * i, 3);
  }
};

// Mousemove events only, first max_len kept.
SequenceTensor to_sequence(const Session& s, std::size_t max_len = 100,
                           TimeMode mode = TimeMode::offsets_from_start);

}  // namespace cursorprof
