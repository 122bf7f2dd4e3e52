#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "eqm/trace.hpp"
#include "support/builders.hpp"

using namespace eqm;

namespace {

std::vector<FrameRecord> parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_trace(in);
}

std::string error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

const char* kOneFrame =
    R"({"poc":0,"type":"P","size":512,"w":64,"h":32,"fps":30.0,"blocks":[)"
    R"({"x":0,"y":0,"w":32,"h":32,"qp":25,"cu":32,"skip":false,"mvs":[[0,-1,4,-8]]},)"
    R"({"x":32,"y":0,"w":32,"h":32,"qp":30,"cu":32,"skip":true,"mvs":[]}]})";

}  // namespace

TEST_CASE("minimal trace line parses into the full record", "[trace]") {
  const std::vector<FrameRecord> frames = parse_text(kOneFrame);
  REQUIRE(frames.size() == 1);
  const FrameRecord& f = frames[0];
  CHECK(f.poc == 0);
  CHECK(f.frame_type == FrameType::p);
  CHECK(f.frame_size == 512);
  CHECK(f.width == 64);
  CHECK(f.height == 32);
  CHECK(f.frame_rate == 30.0);
  REQUIRE(f.blocks.size() == 2);
  CHECK(f.blocks[0].qp == 25);
  CHECK(f.blocks[0].cu_size == 32);
  CHECK_FALSE(f.blocks[0].skip);
  REQUIRE(f.blocks[0].mvs.size() == 1);
  CHECK(f.blocks[0].mvs[0].list == RefList::l0);
  CHECK(f.blocks[0].mvs[0].ref_poc == -1);
  CHECK(f.blocks[0].mvs[0].mv_x == 4);
  CHECK(f.blocks[0].mvs[0].mv_y == -8);
  CHECK(f.blocks[1].skip);
}

TEST_CASE("blank lines and CR line endings are tolerated", "[trace]") {
  const std::string text = std::string(kOneFrame) + "\r\n\n";
  const std::vector<FrameRecord> frames = parse_text(text);
  CHECK(frames.size() == 1);
}

TEST_CASE("serialize then parse is the identity", "[trace]") {
  std::mt19937_64 mt(31);
  for (int round = 0; round < 20; ++round) {
    const std::vector<FrameRecord> frames =
        testsupport::random_trace(mt, 8, 64, 64, round % 2 == 0 ? 30.0 : 29.97);
    const std::string text = serialize_trace(frames);
    const std::vector<FrameRecord> reparsed = parse_text(text);
    REQUIRE(reparsed == frames);
    CHECK(serialize_trace(reparsed) == text);
  }
}

TEST_CASE("field order in serialized lines is frozen", "[trace]") {
  const std::vector<FrameRecord> frames = parse_text(kOneFrame);
  const std::string line = serialize_frame(frames[0]);
  CHECK(line.find("{\"poc\":") == 0);
  CHECK(line.find("\"type\":") < line.find("\"size\":"));
  CHECK(line.find("\"size\":") < line.find("\"w\":"));
  CHECK(line.find("\"w\":") < line.find("\"h\":"));
  CHECK(line.find("\"h\":") < line.find("\"fps\":"));
  CHECK(line.find("\"fps\":") < line.find("\"blocks\":"));
}

TEST_CASE("syntax errors carry the line number", "[trace]") {
  const std::string two_lines = std::string(kOneFrame) + "\nnot json\n";
  try {
    parse_text(two_lines);
    FAIL("expected trace.SyntaxError");
  } catch (const Error& e) {
    CHECK(e.code() == "trace.SyntaxError");
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("unknown and missing fields are rejected", "[trace]") {
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"I","size":1,"w":32,"h":32,"fps":30,"extra":1,)"
                     R"("blocks":[{"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[]}]})");
        }) == "trace.SyntaxError");
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"I","size":1,"w":32,"h":32,"fps":30,)"
                     R"("blocks":[{"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[],"pad":0}]})");
        }) == "trace.SyntaxError");
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"I","size":1,"w":32,"h":32,)"
                     R"("blocks":[{"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[]}]})");
        }) == "trace.SyntaxError");
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"Q","size":1,"w":32,"h":32,"fps":30,)"
                     R"("blocks":[{"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[]}]})");
        }) == "trace.SyntaxError");
}

TEST_CASE("motion vector shape is validated", "[trace]") {
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"P","size":1,"w":32,"h":32,"fps":30,)"
                     R"("blocks":[{"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[[0,-1,2]]}]})");
        }) == "trace.SyntaxError");
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"P","size":1,"w":32,"h":32,"fps":30,)"
                     R"("blocks":[{"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[[2,-1,2,3]]}]})");
        }) == "trace.SyntaxError");
}

TEST_CASE("invariant violations carry module codes", "[trace]") {
  auto frame_with = [](const std::string& blocks) {
    return R"({"poc":0,"type":"P","size":1,"w":32,"h":32,"fps":30,"blocks":[)" + blocks + "]}";
  };
  const std::string base = R"("x":0,"y":0,"w":32,"h":32,"cu":32,"skip":false,"mvs":[]})";

  CHECK(error_code_of([&] { parse_text(frame_with(R"({"qp":52,)" + base)); }) ==
        "trace.InvariantViolation");
  CHECK(error_code_of([&] {
          parse_text(frame_with(
              R"({"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":24,"skip":false,"mvs":[]})"));
        }) == "trace.InvariantViolation");
  // Coverage gap: one 16x16 block in a 32x32 frame.
  CHECK(error_code_of([&] {
          parse_text(frame_with(
              R"({"x":0,"y":0,"w":16,"h":16,"qp":1,"cu":16,"skip":false,"mvs":[]})"));
        }) == "trace.InvariantViolation");
  // Overlap with correct total area: two stacked blocks plus a hole.
  CHECK(error_code_of([&] {
          parse_text(frame_with(
              R"({"x":0,"y":0,"w":32,"h":16,"qp":1,"cu":16,"skip":false,"mvs":[]},)"
              R"({"x":0,"y":0,"w":32,"h":16,"qp":1,"cu":16,"skip":false,"mvs":[]})"));
        }) == "trace.InvariantViolation");
  // P frame with two motion vectors.
  CHECK(error_code_of([&] {
          parse_text(frame_with(
              R"({"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[[0,-1,1,1],[1,1,2,2]]})"));
        }) == "trace.InvariantViolation");
  // Skip block in an I frame.
  CHECK(error_code_of([&] {
          parse_text(
              R"({"poc":0,"type":"I","size":1,"w":32,"h":32,"fps":30,"blocks":[)"
              R"({"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":true,"mvs":[]}]})");
        }) == "trace.InvariantViolation");
}

TEST_CASE("b frames allow two vectors and i frames none", "[trace]") {
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"B","size":1,"w":32,"h":32,"fps":30,"blocks":[)"
                     R"({"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,)"
                     R"("mvs":[[0,-1,1,1],[1,1,2,2]]}]})");
        }) == "");
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"I","size":1,"w":32,"h":32,"fps":30,"blocks":[)"
                     R"({"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[[0,-1,1,1]]}]})");
        }) == "trace.InvariantViolation");
}

TEST_CASE("whole-frame invariants", "[trace]") {
  // Duplicate POC across lines.
  CHECK(error_code_of([] {
          const std::string line =
              R"({"poc":3,"type":"I","size":1,"w":32,"h":32,"fps":30,"blocks":[)"
              R"({"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[]}]})";
          parse_text(line + "\n" + line);
        }) == "trace.InvariantViolation");
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"I","size":1,"w":32,"h":32,"fps":30,"blocks":[]})");
        }) == "trace.InvariantViolation");
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"I","size":1,"w":32,"h":32,"fps":0,"blocks":[)"
                     R"({"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[]}]})");
        }) == "trace.InvariantViolation");
  CHECK(error_code_of([] {
          parse_text(R"({"poc":0,"type":"I","size":-1,"w":32,"h":32,"fps":30,"blocks":[)"
                     R"({"x":0,"y":0,"w":32,"h":32,"qp":1,"cu":32,"skip":false,"mvs":[]}]})");
        }) == "trace.InvariantViolation");
}

TEST_CASE("non-4-aligned tilings still verify exactly", "[trace]") {
  // Two 3-pixel-wide columns sharing a 6x32... not 4-aligned, area-exact.
  const std::string text =
      R"({"poc":0,"type":"I","size":1,"w":6,"h":6,"fps":30,"blocks":[)"
      R"({"x":0,"y":0,"w":3,"h":6,"qp":1,"cu":8,"skip":false,"mvs":[]},)"
      R"({"x":3,"y":0,"w":3,"h":6,"qp":1,"cu":8,"skip":false,"mvs":[]}]})";
  CHECK(parse_text(text).size() == 1);
  const std::string overlapping =
      R"({"poc":0,"type":"I","size":1,"w":6,"h":6,"fps":30,"blocks":[)"
      R"({"x":0,"y":0,"w":3,"h":6,"qp":1,"cu":8,"skip":false,"mvs":[]},)"
      R"({"x":2,"y":0,"w":3,"h":6,"qp":1,"cu":8,"skip":false,"mvs":[]}]})";
  CHECK(error_code_of([&] { parse_text(overlapping); }) == "trace.InvariantViolation");
}
