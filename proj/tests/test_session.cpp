#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "cursorprof/io.hpp"
#include "cursorprof/session.hpp"
#include "cursorprof/synthetic.hpp"
#include "helpers.hpp"

using namespace cursorprof;

TEST_CASE("age groups and labels") {
  CHECK(age_group_for(18) == AgeGroup::young);
  CHECK(age_group_for(35) == AgeGroup::young);
  CHECK(age_group_for(36) == AgeGroup::adult);
  CHECK(age_group_for(66) == AgeGroup::adult);
  CHECK(age_group_for(67) == AgeGroup::undisclosed);
  CHECK(age_group_for(17) == AgeGroup::undisclosed);
  CHECK(age_group_for(std::nullopt) == AgeGroup::undisclosed);

  auto s = testing::make_session("a", {}, Gender::male, 30);
  CHECK(label_of(s, Task::gender) == 1);
  CHECK(label_of(s, Task::age) == 1);
  s.demographics = {Gender::female, 50};
  CHECK(label_of(s, Task::gender) == 0);
  CHECK(label_of(s, Task::age) == 0);
  s.demographics = {Gender::undisclosed, std::nullopt};
  CHECK_FALSE(label_of(s, Task::gender));
  CHECK_FALSE(label_of(s, Task::age));
  CHECK_THROWS_AS(task_from("height"), ConfigError);
}

TEST_CASE("canonical JSONL parsing") {
  const std::string text =
      R"({"id":"s1","query":"q","gender":"male","age":29,"vw":1280,"vh":800,"events":[[10,20,5],[11,21,5,"mousemove"],[0,0,0,"load"],[12,22,9,"click","/html/body/a"]]})"
      "\n"
      R"({"id":"s2","gender":"female","vw":100,"vh":100,"events":[[1,1,0]]})"
      "\n"
      R"({"id":"s3","gender":"robot","age":12,"vw":100,"vh":100,"events":[[1,1,0]]})"
      "\n"
      R"({"id":"bad","vw":100,"vh":100,"events":[[1,-1,0]]})"
      "\n"
      "not json\n"
      R"({"id":"noview","gender":null,"age":null,"events":[[1,1,0]]})"
      "\n";
  const auto r = parse_sessions_text(text, InputFormat::canonical_jsonl);
  REQUIRE(r.dataset.sessions.size() == 3);

  const Session& s1 = r.dataset.sessions[0];
  CHECK(s1.id == "s1");
  CHECK(s1.demographics.gender == Gender::male);
  CHECK(s1.demographics.age_years == 29);
  REQUIRE(s1.events.size() == 4);
  // sorted by t, shifted to start at 0, duplicate times broken upward
  CHECK(s1.events[0].name == EventName::load);
  CHECK(s1.events[0].t == 0.0);
  CHECK(s1.events[1].t == 5.0);
  CHECK(s1.events[2].t > 5.0);
  CHECK(s1.events[2].t < 5.0 + 1e-12);
  CHECK(s1.events[3].target_path == "/html/body/a");
  CHECK(s1.coordinate_count() == 2);

  CHECK_FALSE(r.dataset.sessions[1].demographics.age_years);
  CHECK(r.dataset.sessions[2].demographics.gender == Gender::undisclosed);
  CHECK_FALSE(r.dataset.sessions[2].demographics.age_years);

  std::set<std::size_t> lines;
  for (const auto& d : r.diagnostics) lines.insert(d.line);
  CHECK(lines.count(2));  // missing age
  CHECK(lines.count(3));  // unknown gender, age out of range
  CHECK(lines.count(4));  // negative coordinate
  CHECK(lines.count(5));  // invalid JSON
  CHECK(lines.count(6));  // missing viewport
}

TEST_CASE("canonical serialization round trips byte for byte") {
  synth::SynthConfig cfg;
  cfg.n_sessions = 20;
  cfg.seed = 3;
  const auto d = synth::generate(cfg);
  const std::string text = serialize_dataset(d);
  const auto back = parse_sessions_text(text, InputFormat::canonical_jsonl);
  CHECK(back.diagnostics.empty());
  CHECK(back.dataset.sessions == d.sessions);
  CHECK(serialize_dataset(back.dataset) == text);
}

TEST_CASE("canonicalize_events makes times strictly increasing") {
  std::vector<CursorEvent> ev = {{1, 1, 100}, {2, 2, 50}, {3, 3, 100}, {4, 4, 100}};
  canonicalize_events(ev);
  CHECK(ev[0].x == 2);
  CHECK(ev[0].t == 0.0);
  CHECK(ev[1].x == 1);  // stable among equal times
  CHECK(ev[1].t == 50.0);
  for (std::size_t i = 1; i < ev.size(); ++i) CHECK(ev[i].t > ev[i - 1].t);
}

TEST_CASE("filter drops short and unlabeled sessions and is idempotent") {
  std::mt19937_64 rng(1);
  Dataset d;
  d.sessions.push_back(testing::make_session("long", testing::random_events(rng, 40)));
  auto few = testing::random_events(rng, 3);
  for (auto& e : few) e.name = EventName::mousemove;
  d.sessions.push_back(testing::make_session("short", few));
  d.sessions.push_back(
      testing::make_session("anon", testing::random_events(rng, 40), Gender::undisclosed, 70));

  const auto a = filter_sessions(d, Task::gender);
  CHECK(a.dataset.sessions.size() == 1);
  CHECK(a.removed.too_few_coordinates == 1);
  CHECK(a.removed.undisclosed_label == 1);
  const auto b = filter_sessions(a.dataset, Task::gender);
  CHECK(b.dataset.sessions == a.dataset.sessions);
  CHECK(b.removed == FilterCounts{});

  const auto age = filter_sessions(d, Task::age);
  CHECK(age.removed.undisclosed_label == 1);  // age 70 has no group
  CHECK(filter_sessions(d, std::nullopt).dataset.sessions.size() == 2);
}

TEST_CASE("split partitions the dataset with floor-sized train set") {
  synth::SynthConfig cfg;
  cfg.n_sessions = 147;
  cfg.seed = 9;
  const auto d = synth::generate(cfg);
  for (bool stratify : {false, true}) {
    SplitOptions opts;
    opts.seed = 4;
    opts.stratify = stratify;
    opts.task = Task::gender;
    const auto r = split_dataset(d, opts);
    CHECK(r.diagnostics.empty());
    const auto train = r.dataset.partition(Partition::train);
    const auto test = r.dataset.partition(Partition::test);
    CHECK(train.sessions.size() == 132);  // floor(147 * 0.9)
    CHECK(test.sessions.size() == 15);
    std::set<std::string> ids;
    for (const auto& s : train.sessions) ids.insert(s.id);
    for (const auto& s : test.sessions) ids.insert(s.id);
    CHECK(ids.size() == 147);

    const auto again = split_dataset(d, opts);
    CHECK(*again.dataset.split == *r.dataset.split);

    if (stratify) {
      std::size_t ones = 0;
      for (const auto& s : test.sessions) ones += *label_of(s, Task::gender);
      // 74 of 147 are class 0, 73 class 1: quotas 7.55 and 7.45
      CHECK((ones == 7 || ones == 8));
    }
  }
  SplitOptions other;
  other.seed = 5;
  CHECK(*split_dataset(d, other).dataset.split != *split_dataset(d, SplitOptions{0.1, 4}).dataset.split);
}

TEST_CASE("stratified split falls back when a class is tiny") {
  std::mt19937_64 rng(2);
  Dataset d;
  for (int i = 0; i < 10; ++i)
    d.sessions.push_back(testing::make_session(std::to_string(i), testing::random_events(rng, 12),
                                               i == 0 ? Gender::female : Gender::male));
  SplitOptions opts;
  opts.stratify = true;
  opts.task = Task::gender;
  const auto r = split_dataset(d, opts);
  CHECK(r.diagnostics.size() == 1);
  CHECK(r.dataset.partition(Partition::test).sessions.size() == 1);
}

TEST_CASE("to_sequence keeps the first mousemoves and zero-pads") {
  std::vector<CursorEvent> ev;
  ev.push_back({0, 0, 0, EventName::load});
  for (int i = 0; i < 5; ++i) ev.push_back({double(i), double(2 * i), double(10 * i + 1)});
  ev.push_back({9, 9, 100, EventName::click});
  const auto s = testing::make_session("x", ev);
  const auto seq = to_sequence(s, 3);
  CHECK(seq.true_length == 3);
  CHECK(seq.values == std::vector<double>{0, 0, 1, 1, 2, 11, 2, 4, 21});
  const auto padded = to_sequence(s, 8);
  CHECK(padded.true_length == 5);
  CHECK(padded.row(4)[2] == 41.0);
  CHECK(padded.row(5)[0] == 0.0);
  CHECK(padded.row(7)[2] == 0.0);
  const auto none = testing::make_session("y", {{0, 0, 0, EventName::click}});
  CHECK_THROWS_AS(to_sequence(none), PreconditionError);
}

TEST_CASE("raw event logs") {
  const std::string log =
      "cursor timestamp xpos ypos event xpath attrs extras\n"
      "0 1000 10 10 load / {} {}\n"
      "0 1150 -5 20 mousemove /html/body {} {}\n"
      "0 1300 30 40 mousemove /html/body/div {} {}\n"
      "0 oops 1 1 mousemove / {} {}\n"
      "0 1450 30 40 click /html/body/div/a {} {}\n";
  const auto r = parse_sessions_text(log, InputFormat::attentive_cursor_raw, "p1");
  REQUIRE(r.dataset.sessions.size() == 1);
  const auto& s = r.dataset.sessions[0];
  CHECK(s.id == "p1");
  REQUIRE(s.events.size() == 4);
  CHECK(s.events[0].t == 0.0);
  CHECK(s.events[1].x == 0.0);
  CHECK(s.events[3].name == EventName::click);
  CHECK(s.events[3].t == 450.0);
  CHECK(r.diagnostics.size() == 2);  // bad row, clamped coordinate
}

TEST_CASE("dataset directory import joins participants, logs and viewport") {
  testing::TempDir dir("import");
  write_text_file(dir / "participants.tsv",
                  "Log_ID\tGender\tAge\tQuery\n"
                  "u1\tMale\t25\tweather\n"
                  "u2\tf\t40\tnews\n"
                  "u3\tmale\t30\tmissing log\n");
  const std::string log =
      "cursor timestamp xpos ypos event xpath attrs extras\n"
      "0 5 1 1 mousemove / {} {}\n"
      "0 20 2 2 mousemove / {} {}\n";
  write_text_file(dir / "logs/u1.txt", log);
  write_text_file(dir / "logs/u2.txt", log);
  write_text_file(dir / "logs/u1.xml", "<data><window>1366x768</window></data>");
  const auto r = import_attentive_cursor_dir(dir.path());
  REQUIRE(r.dataset.sessions.size() == 2);
  CHECK(r.dataset.sessions[0].demographics.gender == Gender::male);
  CHECK(r.dataset.sessions[0].viewport_w == 1366);
  CHECK(r.dataset.sessions[0].query == "weather");
  CHECK(r.dataset.sessions[1].demographics.gender == Gender::female);
  CHECK(r.dataset.sessions[1].demographics.age_years == 40);
  CHECK(r.diagnostics.size() == 2);  // missing log, missing viewport
}
