#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include <sldmm/manifest.hpp>

using namespace sldmm;

TEST(Manifest, SortedKeyValueLines) {
  RunManifest m;
  m.set("zeta", "last");
  m.set("alpha", 1.5);
  m.set("k", Index{20});
  m.set("ok", true);
  EXPECT_EQ(m.str(), "alpha=1.5\nk=20\nok=true\nzeta=last\n");
}

TEST(Manifest, RoundTripIsLossless) {
  RunManifest m;
  m.set("pi", 3.141592653589793);
  m.set("tiny", 1e-300);
  m.set("third", 1.0 / 3.0);
  m.set("inf", std::numeric_limits<double>::infinity());
  m.set("neg", -0.1);
  m.set("path", "/tmp/a b/c.hsc");
  m.set("formula", "x=y+1");
  std::istringstream is(m.str());
  const RunManifest r = RunManifest::parse(is);
  EXPECT_EQ(r, m);
  EXPECT_EQ(r.get_double("third"), 1.0 / 3.0);
  EXPECT_EQ(r.get_double("tiny"), 1e-300);
  EXPECT_TRUE(std::isinf(r.get_double("inf")));
  EXPECT_EQ(r.get("formula"), "x=y+1");
}

TEST(Manifest, OverwriteKeepsLatest) {
  RunManifest m;
  m.set("status", "running");
  m.set("status", "ok");
  EXPECT_EQ(m.get("status"), "ok");
  EXPECT_EQ(m.entries().size(), 1u);
}

TEST(Manifest, RejectsBadKeysAndValues) {
  RunManifest m;
  EXPECT_THROW(m.set("", "x"), std::invalid_argument);
  EXPECT_THROW(m.set("a b", "x"), std::invalid_argument);
  EXPECT_THROW(m.set("a=b", "x"), std::invalid_argument);
  EXPECT_THROW(m.set("a", "x\ny"), std::invalid_argument);
  EXPECT_THROW(m.get("missing"), std::out_of_range);
  EXPECT_FALSE(m.contains("missing"));
  std::istringstream bad("novalue\n");
  EXPECT_THROW(RunManifest::parse(bad), IoError);
  std::istringstream empty_key("=3\n");
  EXPECT_THROW(RunManifest::parse(empty_key), IoError);
}
