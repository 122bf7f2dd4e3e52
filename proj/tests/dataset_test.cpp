#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "eqm/dataset.hpp"

using namespace eqm;

namespace {

bool raises_code(const std::function<void()>& fn, const std::string& code) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

FeatureTable small_table(int n_rows, bool with_external = false) {
  FeatureTable t;
  t.columns = standard_feature_columns();
  if (with_external) t.columns.push_back("pixel_metric");
  for (int r = 0; r < n_rows; ++r) {
    t.video_ids.push_back("vid" + std::to_string(r));
    t.segment_ids.push_back(0);
    std::vector<double> row;
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      row.push_back(static_cast<double>(r) + 0.5 * static_cast<double>(c));
    }
    t.values.push_back(std::move(row));
  }
  return t;
}

}  // namespace

TEST_CASE("feature csv round-trips", "[dataset]") {
  const FeatureTable t = small_table(5, true);
  std::ostringstream out;
  write_feature_csv(out, t);
  std::istringstream in(out.str());
  const FeatureTable back = read_feature_csv(in);
  CHECK(back.columns == t.columns);
  CHECK(back.video_ids == t.video_ids);
  CHECK(back.segment_ids == t.segment_ids);
  CHECK(back.values == t.values);

  // Re-serialization is stable.
  std::ostringstream out2;
  write_feature_csv(out2, back);
  CHECK(out2.str() == out.str());

  // Header: id columns then the 28 canonical columns.
  const std::string header = out.str().substr(0, out.str().find('\n'));
  CHECK(header.rfind("video_id,segment_idx,mean_frameSize,", 0) == 0);
  CHECK(standard_feature_columns().size() == 28);
}

TEST_CASE("feature csv rejects malformed input", "[dataset]") {
  CHECK(raises_code([] {
    std::istringstream in("");
    read_feature_csv(in);
  }, "dataset.SyntaxError"));

  CHECK(raises_code([] {
    std::istringstream in("id,segment_idx,mean_frameSize\nx,0,1\n");
    read_feature_csv(in);
  }, "dataset.SchemaMismatch"));

  // Canonical columns must appear in the frozen order.
  const FeatureTable t = small_table(1);
  std::ostringstream out;
  write_feature_csv(out, t);
  std::string swapped = out.str();
  const std::size_t a = swapped.find("mean_frameSize");
  swapped.replace(a, 14, "std_frameSizee");
  CHECK(raises_code([&] {
    std::istringstream in(swapped);
    read_feature_csv(in);
  }, "dataset.SchemaMismatch"));

  // Field-count and number errors carry the line number.
  std::string shorted = out.str();
  shorted += "vid9,0,1,2\n";
  try {
    std::istringstream in(shorted);
    read_feature_csv(in);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == "dataset.SyntaxError");
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  std::string bad_num = out.str();
  const std::size_t pos = bad_num.find("\nvid0,0,");
  bad_num.replace(pos + 8, 1, "x");
  try {
    std::istringstream in(bad_num);
    read_feature_csv(in);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.code() == "dataset.SyntaxError");
    CHECK(std::string(e.what()).find("mean_frameSize") != std::string::npos);
  }

  CHECK(raises_code([&] {
    std::string bad_id = out.str();
    const std::size_t p = bad_id.find("vid0");
    bad_id.replace(p, 4, "vi/0");
    std::istringstream in(bad_id);
    read_feature_csv(in);
  }, "dataset.SyntaxError"));
}

TEST_CASE("mos csv round-trips with a named value column", "[dataset]") {
  const std::vector<MosEntry> rows = {{"a", 3.5}, {"b", 4.25}, {"c", -1.0}};
  std::ostringstream out;
  write_mos_csv(out, rows, "score");
  CHECK(out.str().rfind("video_id,score\n", 0) == 0);
  std::istringstream in(out.str());
  const std::vector<MosEntry> back = read_mos_csv(in);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].video_id == rows[i].video_id);
    CHECK(back[i].mos == rows[i].mos);
  }

  // Blank lines and CRLF are tolerated.
  std::istringstream crlf("video_id,mos\r\n\r\na,1.5\r\n");
  const std::vector<MosEntry> tolerant = read_mos_csv(crlf);
  REQUIRE(tolerant.size() == 1);
  CHECK(tolerant[0].mos == 1.5);

  CHECK(raises_code([] {
    std::istringstream bad("video_id,mos,extra\na,1,2\n");
    read_mos_csv(bad);
  }, "dataset.SchemaMismatch"));
  CHECK(raises_code([] {
    std::istringstream bad("video_id,mos\na,1,2\n");
    read_mos_csv(bad);
  }, "dataset.SyntaxError"));
  CHECK(raises_code([] {
    std::istringstream bad("video_id,mos\na,potato\n");
    read_mos_csv(bad);
  }, "dataset.SyntaxError"));
}

TEST_CASE("labels join by video id", "[dataset]") {
  const FeatureTable t = small_table(3);
  const std::vector<MosEntry> labels = {{"vid2", 9.0}, {"vid0", 7.0}, {"vid1", 8.0}, {"extra", 1.0}};
  const LabeledDataset data = join_labels(t, labels);
  REQUIRE(data.size() == 3);
  CHECK(data.video_ids == t.video_ids);  // table order wins
  CHECK(data.mos == std::vector<double>{7.0, 8.0, 9.0});
  CHECK(data.feature_names == t.columns);
  CHECK(data.features[1] == t.values[1]);

  CHECK(raises_code([&] {
    std::vector<MosEntry> dup = {{"vid0", 1.0}, {"vid0", 2.0}, {"vid1", 3.0}, {"vid2", 4.0}};
    join_labels(t, dup);
  }, "dataset.DuplicateVideoId"));

  CHECK(raises_code([&] {
    FeatureTable two_rows = small_table(2);
    two_rows.video_ids[1] = "vid0";
    join_labels(two_rows, labels);
  }, "dataset.DuplicateVideoId"));

  CHECK(raises_code([&] {
    const std::vector<MosEntry> missing = {{"vid0", 1.0}, {"vid1", 2.0}};
    join_labels(t, missing);
  }, "dataset.MissingLabel"));

  CHECK(raises_code([&] {
    std::vector<MosEntry> bad = labels;
    bad[0].mos = std::nan("");
    join_labels(t, bad);
  }, "dataset.NonFiniteInput"));

  CHECK(raises_code([&] {
    FeatureTable nf = small_table(3);
    nf.values[2][4] = std::numeric_limits<double>::infinity();
    join_labels(nf, labels);
  }, "dataset.NonFiniteInput"));
}

TEST_CASE("column selection preserves request order", "[dataset]") {
  const FeatureTable t = small_table(2, true);
  const LabeledDataset data =
      join_labels(t, std::vector<MosEntry>{{"vid0", 1.0}, {"vid1", 2.0}});
  const std::vector<std::string> names = {"pixel_metric", "mean_avgQP"};
  const std::vector<std::vector<double>> sub = select_columns(data, names);
  REQUIRE(sub.size() == 2);
  const std::size_t pm = data.column_index("pixel_metric");
  const std::size_t qp = data.column_index("mean_avgQP");
  CHECK(sub[0] == std::vector<double>{data.features[0][pm], data.features[0][qp]});
  CHECK(sub[1] == std::vector<double>{data.features[1][pm], data.features[1][qp]});

  CHECK(raises_code([&] {
    select_columns(data, std::vector<std::string>{"nope"});
  }, "dataset.MissingColumns"));
  CHECK(raises_code([&] { t.column_index("nope"); }, "dataset.MissingColumns"));
}

TEST_CASE("flattening appends metadata after the pooled keys", "[dataset]") {
  SegmentFeatures seg;
  seg["mean_avgQP"] = 33.0;
  seg.meta.resolution = 100;
  seg.meta.frame_rate = 25.0;
  seg.meta.bitrate_kbps = 800.0;
  const std::vector<double> flat = flatten_features(seg);
  REQUIRE(flat.size() == 28);
  CHECK(flat[eqm_key_index("mean_avgQP")] == 33.0);
  CHECK(flat[23] == 100.0);   // Resolution
  CHECK(flat[24] == 25.0);    // FrameRate
  CHECK(flat[25] == 0.0);     // Codec
  CHECK(flat[27] == 800.0);   // Bitrate
}

TEST_CASE("text helpers keep csv conventions", "[dataset]") {
  CHECK(format_sig9(0.5) == "0.5");
  CHECK(format_sig9(123456789.0) == "123456789");
  CHECK(format_sig9(1e-12) == "1e-12");
  CHECK(split("a,,b", ',') == std::vector<std::string>{"a", "", "b"});
  CHECK(split("", ',') == std::vector<std::string>{""});
  CHECK(strip_cr("x\r") == "x");
  CHECK(parse_double("2.5e3", "t.E") == 2500.0);
  CHECK(raises_code([] { parse_double("1.5x", "t.E"); }, "t.E"));
  CHECK(parse_int("-42", "t.E") == -42);
  CHECK(raises_code([] { parse_int("4.2", "t.E"); }, "t.E"));
  // Exact doubles survive the model-file format.
  const double v = 0.1 + 0.2;
  CHECK(parse_double(format_exact(v), "t.E") == v);
}
