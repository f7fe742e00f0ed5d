#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stackmi/errors.hpp"
#include "stackmi/table.hpp"
#include "test_helpers.hpp"

using namespace stackmi;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::vector<ColumnSpec> xy_schema() {
  return {{"x", ColumnRole::Continuous, 0}, {"y", ColumnRole::Continuous, 0}};
}

}  // namespace

TEST_CASE("construction enforces per-role value ranges") {
  std::vector<ColumnSpec> cols = {{"t", ColumnRole::EventTime, 0},
                                  {"d", ColumnRole::EventIndicator, 0}};
  Eigen::MatrixXd good(2, 2);
  good << 1.0, 1.0, 2.5, 0.0;
  CHECK_NOTHROW(Table::fully_observed(cols, good));

  Eigen::MatrixXd bad_time = good;
  bad_time(0, 0) = -1.0;
  CHECK_THROWS_MSG(Table::fully_observed(cols, bad_time), InputError, "nonpositive event time");

  Eigen::MatrixXd bad_event = good;
  bad_event(1, 1) = 2.0;
  CHECK_THROWS_AS(Table::fully_observed(cols, bad_event), InputError);

  // masked cells are exempt from the checks
  BoolGrid mask = BoolGrid::Constant(2, 2, true);
  mask(0, 0) = false;
  Eigen::MatrixXd masked_bad = good;
  masked_bad(0, 0) = -5.0;
  CHECK_NOTHROW(Table(cols, masked_bad, mask));
}

TEST_CASE("mask dimensions must match values") {
  CHECK_THROWS_AS(Table(xy_schema(), Eigen::MatrixXd::Zero(3, 2), BoolGrid::Constant(2, 2, true)),
                  InputError);
}

TEST_CASE("load_csv marks na cells unobserved") {
  std::string path = temp_file("stackmi_t1.csv");
  write_file(path, "x,y\n1,2\nNA,4\n5,6\n");
  Table t = load_csv(path, xy_schema());
  CHECK(t.n_rows() == 3);
  CHECK(t.mask().count() == 5);
  CHECK_FALSE(t.observed(1, 0));
  CHECK(t.value(0, 1) == 2.0);
  CHECK(t.missing_count(0) == 1);
  std::remove(path.c_str());
}

TEST_CASE("load_csv rejects bad input with location info") {
  std::string path = temp_file("stackmi_t2.csv");

  write_file(path, "t,y\n-1,2\n");
  std::vector<ColumnSpec> schema = {{"t", ColumnRole::EventTime, 0},
                                    {"y", ColumnRole::Continuous, 0}};
  CHECK_THROWS_MSG(load_csv(path, schema), InputError, "nonpositive event time");

  write_file(path, "x,z\n1,2\n");
  CHECK_THROWS_MSG(load_csv(path, xy_schema()), InputError, "unknown column");

  write_file(path, "x,y\n1,abc\n");
  CHECK_THROWS_MSG(load_csv(path, xy_schema()), InputError, "row 2");
  std::remove(path.c_str());
}

TEST_CASE("fully observed file round-trips with an all-true mask") {
  std::string path = temp_file("stackmi_t3.csv");
  write_file(path, "x,y\n1.5,2\n3,4.25\n");
  Table t = load_csv(path, xy_schema());
  CHECK(t.mask().all());
  CHECK(t.n_complete_rows() == t.n_rows());

  std::string out = temp_file("stackmi_t3b.csv");
  write_csv(t, out);
  Table back = load_csv(out, xy_schema());
  CHECK(back.values() == t.values());
  std::remove(path.c_str());
  std::remove(out.c_str());
}

TEST_CASE("apply_missingness: masking never alters observed values") {
  Rng rng(11, 0);
  Eigen::MatrixXd v(200, 2);
  for (int i = 0; i < 200; ++i) {
    v(i, 0) = rng.normal();
    v(i, 1) = rng.normal();
  }
  Table t = Table::fully_observed(xy_schema(), v);

  MissingnessMechanism mech;
  mech.target = "y";
  mech.intercept = 0.3;
  mech.slopes = {{"x", 1.0}};
  Table masked = apply_missingness(t, {mech}, Rng(5, 0));

  int hidden = 0;
  for (Eigen::Index i = 0; i < masked.n_rows(); ++i) {
    if (masked.observed(i, 1)) {
      CHECK(masked.value(i, 1) == t.value(i, 1));
    } else {
      ++hidden;
    }
    CHECK(masked.value(i, 0) == t.value(i, 0));
  }
  CHECK(hidden > 10);
  CHECK(masked.has_shadow_truth());
  CHECK(masked.shadow_truth() == t.values());
}

TEST_CASE("apply_missingness: p(observed)=1 leaves the table untouched") {
  Eigen::MatrixXd v(5, 2);
  v.setRandom();
  Table t = Table::fully_observed(xy_schema(), v);
  Table masked = apply_missingness(t, {MissingnessMechanism::mcar("y", 1.0)}, Rng(1, 0));
  CHECK(masked.mask().all());
  CHECK(masked.values() == t.values());
}

TEST_CASE("apply_missingness is seed-deterministic, seed-sensitive") {
  Eigen::MatrixXd v(500, 2);
  Rng g(3, 0);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    v(i, 0) = g.normal();
    v(i, 1) = g.normal();
  }
  Table t = Table::fully_observed(xy_schema(), v);
  std::vector<MissingnessMechanism> mechs = {MissingnessMechanism::mcar("y", 0.5)};
  Table a = apply_missingness(t, mechs, Rng(9, 0));
  Table b = apply_missingness(t, mechs, Rng(9, 0));
  Table c = apply_missingness(t, mechs, Rng(10, 0));
  CHECK((a.mask() == b.mask()).all());
  CHECK_FALSE((a.mask() == c.mask()).all());
}

TEST_CASE("apply_missingness validates its mechanisms") {
  Eigen::MatrixXd v(10, 2);
  v.setRandom();
  Table t = Table::fully_observed(xy_schema(), v);

  MissingnessMechanism self;
  self.target = "y";
  self.slopes = {{"y", 1.0}};
  CHECK_THROWS_AS(apply_missingness(t, {self}, Rng(0, 0)), InputError);

  MissingnessMechanism first = MissingnessMechanism::mcar("x", 0.5);
  Table masked = apply_missingness(t, {first}, Rng(0, 0));
  MissingnessMechanism second;
  second.target = "y";
  second.slopes = {{"x", 1.0}};
  CHECK_THROWS_MSG(apply_missingness(masked, {second}, Rng(0, 0)), InputError, "missing");
}
