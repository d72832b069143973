#include "sae/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "sae/errors.hpp"

using namespace sae;

namespace {

std::string tmp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

const char* kAreaCsv =
    "# synthetic example\n"
    "area,y,N,x1,x2\n"
    "a01,12,1000,0.1,0.7\n"
    "a02,0,500,0.2,0.4\n"
    "a03,731,20000,0.05,0.9\n";

}  // namespace

TEST_CASE("area csv loads with intercept and provenance comments skipped") {
  const auto path = tmp_file("sae_area_ok.csv", kAreaCsv);
  const AreaDataset d = load_area_csv(path);
  CHECK(d.D() == 3);
  CHECK(d.p() == 3);
  CHECK(d.area[1] == "a02");
  CHECK(d.y[2] == 731.0);
  CHECK(d.N[0] == 1000.0);
  CHECK(d.X(0, 0) == 1.0);
  CHECK(d.X(2, 1) == 0.05);
  CHECK(d.covariates[0] == "intercept");
  CHECK(d.covariates[2] == "x2");
}

TEST_CASE("area csv round-trips exactly") {
  const auto path = tmp_file("sae_area_rt.csv", kAreaCsv);
  const AreaDataset d = load_area_csv(path);
  const auto out = (std::filesystem::temp_directory_path() / "sae_area_rt2.csv").string();
  save_area_csv(d, out, "written by test");
  const AreaDataset d2 = load_area_csv(out);
  CHECK(d2.area == d.area);
  CHECK(d2.y == d.y);
  CHECK(d2.N == d.N);
  CHECK(d2.X == d.X);
  CHECK(d2.covariates == d.covariates);
}

TEST_CASE("area csv validation errors") {
  CHECK_THROWS_AS(load_area_csv(tmp_file("sae_a1.csv", "area,N,y\na,1,2\n")), MissingColumn);
  CHECK_THROWS_AS(load_area_csv(tmp_file("sae_a2.csv", "area,y,N\na,2.5,10\n")),
                  NonIntegerCount);
  CHECK_THROWS_AS(load_area_csv(tmp_file("sae_a3.csv", "area,y,N\na,-1,10\n")),
                  NonIntegerCount);
  CHECK_THROWS_AS(load_area_csv(tmp_file("sae_a4.csv", "area,y,N\na,2,0\n")),
                  NonPositivePopulation);
  CHECK_THROWS_AS(load_area_csv(tmp_file("sae_a5.csv", "area,y,N\na,2,10\na,3,12\n")),
                  DuplicateAreaId);
  CHECK_THROWS_AS(load_area_csv(tmp_file("sae_a6.csv", "area,y,N\n")), EmptyArea);
  CHECK_THROWS_AS(load_area_csv(tmp_file("sae_a7.csv", "area,y,N\na,2,10,9\n")),
                  ValidationError);
  CHECK_THROWS_AS(load_area_csv("/nonexistent/nowhere.csv"), ValidationError);
}

namespace {

const char* kUnitCsv =
    "area,y,m,w,z1,z2\n"
    "d1,1,1,2.0,0,0\n"
    "d1,0,1,2.0,0,0\n"
    "d1,1,1,3.0,1,0\n"
    "d2,0,1,1.5,0,1\n"
    "d2,1,1,1.5,0,1\n";

const char* kClassCsv =
    "area,class,N\n"
    "d1,0_0,40\n"
    "d1,1_0,10\n"
    "d1,1_1,5\n"   // population-only class: no sampled units
    "d2,0_1,30\n";

}  // namespace

TEST_CASE("unit csv aggregates by covariate class") {
  const auto up = tmp_file("sae_u_ok.csv", kUnitCsv);
  const auto cp = tmp_file("sae_c_ok.csv", kClassCsv);
  const UnitDataset d = load_unit_csv(up, cp);
  CHECK(d.D() == 2);
  CHECK(d.L() == 4);
  CHECK(d.p() == 3);
  CHECK(d.n() == 5);
  // class order follows the class-size file
  CHECK(d.class_label[0] == "0_0");
  CHECK(d.class_label[2] == "1_1");
  CHECK(d.Z(1, 0) == 1.0);
  CHECK(d.Z(1, 1) == 1.0);
  CHECK(d.Z(1, 2) == 0.0);
  CHECK(d.ysum(0, 0) == 1.0);
  CHECK(d.msum(0, 0) == 2.0);
  CHECK(d.nsamp(0, 0) == 2.0);
  CHECK(d.ysum(1, 3) == 1.0);
  CHECK(d.Npop(0, 2) == 5.0);
  CHECK(d.Npop(1, 0) == 0.0);  // class absent for d2
  CHECK(d.N()[0] == doctest::Approx(55.0));
  CHECK(d.N()[1] == doctest::Approx(30.0));
}

TEST_CASE("unit csv round-trips") {
  const auto up = tmp_file("sae_u_rt.csv", kUnitCsv);
  const auto cp = tmp_file("sae_c_rt.csv", kClassCsv);
  const UnitDataset d = load_unit_csv(up, cp);
  const auto up2 = (std::filesystem::temp_directory_path() / "sae_u_rt2.csv").string();
  const auto cp2 = (std::filesystem::temp_directory_path() / "sae_c_rt2.csv").string();
  save_unit_csv(d, up2, cp2, "round trip");
  const UnitDataset d2 = load_unit_csv(up2, cp2);
  CHECK(d2.area == d.area);
  CHECK(d2.class_label == d.class_label);
  CHECK(d2.Z == d.Z);
  CHECK(d2.Npop == d.Npop);
  CHECK(d2.ysum == d.ysum);
  CHECK(d2.msum == d.msum);
  CHECK(d2.nsamp == d.nsamp);
  CHECK(d2.unit_w == d.unit_w);
}

TEST_CASE("unit csv validation errors") {
  const auto up = tmp_file("sae_u_ok2.csv", kUnitCsv);

  // a sampled pattern with no class row for its area
  const auto cp_missing = tmp_file("sae_c_m.csv",
                                   "area,class,N\nd1,0_0,40\nd1,1_0,10\nd2,1_1,30\n");
  CHECK_THROWS_AS(load_unit_csv(up, cp_missing), UnknownClass);

  // duplicate (area, class) row
  const auto cp_dup = tmp_file("sae_c_d.csv",
                               "area,class,N\nd1,0_0,40\nd1,0_0,41\nd1,1_0,10\nd2,0_1,30\n");
  CHECK_THROWS_AS(load_unit_csv(up, cp_dup), InconsistentClassCount);

  // population smaller than the sample
  const auto cp_small = tmp_file("sae_c_s.csv",
                                 "area,class,N\nd1,0_0,1\nd1,1_0,10\nd2,0_1,30\n");
  CHECK_THROWS_AS(load_unit_csv(up, cp_small), InconsistentClassCount);

  // class rows for an area that was never sampled
  const auto cp_extra = tmp_file("sae_c_e.csv",
                                 "area,class,N\nd1,0_0,40\nd1,1_0,10\nd2,0_1,30\nd9,0_0,5\n");
  CHECK_THROWS_AS(load_unit_csv(up, cp_extra), EmptyArea);

  // real-valued covariate cannot define classes
  const auto u_real = tmp_file("sae_u_r.csv", "area,y,m,w,z1\nd1,0,1,1.0,0.25\n");
  const auto cp_any = tmp_file("sae_c_a.csv", "area,class,N\nd1,0.25,10\n");
  CHECK_THROWS_AS(load_unit_csv(u_real, cp_any), NonIntegerClassCovariate);

  // y > m
  const auto u_bad = tmp_file("sae_u_b.csv", "area,y,m,w,z1\nd1,2,1,1.0,0\n");
  const auto cp_b = tmp_file("sae_c_b.csv", "area,class,N\nd1,0,10\n");
  CHECK_THROWS_AS(load_unit_csv(u_bad, cp_b), ValidationError);

  // malformed class label arity
  const auto cp_l = tmp_file("sae_c_l.csv", "area,class,N\nd1,0_0_7,40\nd1,1_0,10\nd2,0_1,30\n");
  CHECK_THROWS_AS(load_unit_csv(up, cp_l), ValidationError);
}
