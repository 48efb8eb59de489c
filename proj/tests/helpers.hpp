#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cursorprof/session.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cursorprof-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Random valid trajectory: strictly increasing times from 0, coordinates
// possibly 0, a few non-mousemove events.
inline std::vector<cursorprof::CursorEvent> random_events(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> pos(0.0, 1500.0);
  std::exponential_distribution<double> gap(1.0 / 120.0);
  std::uniform_int_distribution<int> kind(0, 19);
  std::vector<cursorprof::CursorEvent> out;
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cursorprof::CursorEvent e;
    const int k = kind(rng);
    e.x = k == 0 ? 0.0 : pos(rng);
    e.y = k == 1 ? 0.0 : pos(rng);
    e.t = t;
    e.name = k == 2 ? cursorprof::EventName::click
             : k == 3 ? cursorprof::EventName::scroll
                      : cursorprof::EventName::mousemove;
    out.push_back(e);
    double g = gap(rng);
    if (k == 4) g = 1e-9;  // near-duplicate timestamps
    t = std::nextafter(t + g, 1e300);
  }
  return out;
}

inline cursorprof::Session make_session(std::string id, std::vector<cursorprof::CursorEvent> ev,
                                        cursorprof::Gender g = cursorprof::Gender::male,
                                        std::optional<int> age = 30) {
  cursorprof::Session s;
  s.id = std::move(id);
  s.query = "q";
  s.viewport_w = 1280;
  s.viewport_h = 800;
  s.events = std::move(ev);
  s.demographics.gender = g;
  s.demographics.age_years = age;
  return s;
}

}  // namespace testing
