#include <chrono>
#include <cmath>

#include "doctest.h"
#include "odm/complexity.hpp"
#include "odm/error.hpp"
#include "odm/model.hpp"

using namespace odm;

namespace {

SRModelConfig preset(int bits) {
  SRModelConfig c = SRModelConfig::edsr_baseline();
  c.weight_bits = bits;
  c.act_bits = bits;
  return c;
}

double within(double value, double target) { return std::fabs(value - target) / target; }

/// MACs by walking every output pixel of every conv.
double brute_force_macs(const SRModelConfig& c, int out_w, int out_h) {
  auto conv = [&](int cin, int cout, int h, int w) {
    double macs = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int o = 0; o < cout; ++o) macs += static_cast<double>(cin) * c.kernel * c.kernel;
    return macs;
  };
  int h = out_h / c.scale;
  int w = out_w / c.scale;
  double total = conv(3, c.channels, h, w);
  for (int i = 0; i < 2 * c.num_blocks + 1; ++i) total += conv(c.channels, c.channels, h, w);
  for (int s = 0; s < c.upsample_stages(); ++s) {
    total += conv(c.channels, 4 * c.channels, h, w);
    h *= 2;
    w *= 2;
  }
  return total + conv(c.channels, 3, h, w);
}

}  // namespace

TEST_CASE("storage of the accounting configuration") {
  const auto t0 = std::chrono::steady_clock::now();
  const SRModelConfig fp = preset(32);
  const SRModelConfig q2 = preset(2);
  const double s32 = storage_size(fp, BitAssignment::for_model(fp));
  const double s2 = storage_size(q2, BitAssignment::for_model(q2));
  CHECK(within(s32, 1517.6) < 0.01);
  CHECK(within(s2, 411.7) < 0.01);
  CHECK(complexity_report(fp, BitAssignment::for_model(fp), {}, 1920, 1080).params_k() == doctest::Approx(s32));
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 1.0);
}

TEST_CASE("bitops of the accounting configuration at 1920x1080") {
  const SRModelConfig fp = preset(32);
  const SRModelConfig q2 = preset(2);
  CHECK(within(bitops(fp, BitAssignment::for_model(fp), {}, 1920, 1080), 527.1) < 0.01);
  CHECK(within(bitops(q2, BitAssignment::for_model(q2), {}, 1920, 1080), 215.1) < 0.01);
}

TEST_CASE("offset overhead at p = 0.3") {
  const SRModelConfig q2 = preset(2);
  const OffsetPlan plan = accounting_offset_plan(q2.slot_count(), 0.3);
  CHECK(plan.shift_layers.size() == 5);
  CHECK(plan.scale_layers.size() == 5);
  const double ds =
      storage_size(q2, BitAssignment::for_model(q2, plan), plan) - storage_size(q2, BitAssignment::for_model(q2));
  const double db = bitops(q2, BitAssignment::for_model(q2, plan), plan, 1920, 1080) -
                    bitops(q2, BitAssignment::for_model(q2), {}, 1920, 1080);
  CHECK(std::fabs(ds - 0.08) <= 0.02);
  CHECK(std::fabs(db - 0.01) <= 0.005);
}

TEST_CASE("report is additive over layers and matches a MAC walk") {
  for (int blocks : {1, 2, 5}) {
    for (int scale : {2, 4}) {
      SRModelConfig c;
      c.num_blocks = blocks;
      c.channels = 6;
      c.scale = scale;
      const ComplexityReport r = complexity_report(c, BitAssignment::for_model(c), {}, 48, 40);
      double bits = 0.0;
      double ops = 0.0;
      for (const auto& l : r.layers) {
        CHECK(l.storage_bits >= 0.0);
        CHECK(l.bitops >= 0.0);
        bits += l.storage_bits;
        ops += l.bitops;
      }
      CHECK(r.storage_k() == doctest::Approx(bits / 32000.0));
      CHECK(r.bitops_t() == doctest::Approx(ops / 1e12));
      CHECK(r.macs() == brute_force_macs(c, 48, 40));
      CHECK(r.storage_k() == doctest::Approx(storage_size(c, BitAssignment::for_model(c))));
    }
  }
}

TEST_CASE("fewer bits never cost more") {
  double last_storage = 1e300;
  double last_ops = 1e300;
  for (int bits : {32, 16, 8, 4, 3, 2, 1}) {
    const SRModelConfig c = preset(bits);
    const ComplexityReport r = complexity_report(c, BitAssignment::for_model(c), {}, 320, 180);
    CHECK(r.storage_k() < last_storage);
    CHECK(r.bitops_t() < last_ops);
    last_storage = r.storage_k();
    last_ops = r.bitops_t();
  }
}

TEST_CASE("tensor names match the model parameters") {
  SRModelConfig c;
  c.num_blocks = 3;
  OffsetPlan plan;
  plan.shift_layers = {1};
  plan.scale_layers = {0, 4};
  SRModel m(c, true, 0);
  m.install_offsets(plan);
  const auto specs = model_tensors(c, plan);
  const auto params = m.parameters();
  REQUIRE(specs.size() == params.size());
  for (const Parameter* p : params) {
    bool found = false;
    for (const auto& s : specs) found = found || (s.name == p->name() && s.count == p->size());
    CHECK_MESSAGE(found, p->name());
  }
}

TEST_CASE("missing bit-widths and bad requests") {
  const SRModelConfig c = preset(2);
  BitAssignment partial;
  partial.set("head.weight", 32);
  try {
    storage_size(c, partial);
    FAIL("expected AccountingError");
  } catch (const AccountingError& e) {
    CHECK(std::string(e.what()).find("head.bias") != std::string::npos);
  }
  CHECK_THROWS_AS(partial.set("x", 0), ConfigError);
  CHECK_THROWS_AS(complexity_report(c, BitAssignment::for_model(c), {}, 1921, 1080), ConfigError);
  OffsetPlan bad;
  bad.shift_layers = {99};
  CHECK_THROWS_AS(complexity_report(c, BitAssignment::for_model(c), bad, 1920, 1080), ConfigError);
}

TEST_CASE("csv and table layout") {
  SRModelConfig c;
  const ComplexityReport r = complexity_report(c, BitAssignment::for_model(c), {}, 64, 64);
  const std::string csv = r.csv();
  CHECK(csv.starts_with("layer,params_k,storage_k,macs,bitops_t\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(r.layers.size()) + 2);
  CHECK(csv.find("\ntotal,") != std::string::npos);
  const std::string table = r.table();
  CHECK(std::count(table.begin(), table.end(), '\n') == static_cast<long>(r.layers.size()) + 2);
}
