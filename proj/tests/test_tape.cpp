#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "sgnn/errors.hpp"
#include "sgnn/rng.hpp"
#include "sgnn/tape.hpp"

using namespace sgnn;

namespace {

Mat random_mat(Rng& rng, std::size_t r, std::size_t c) {
  Mat m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

// Builds a scalar from one variable; compares the tape gradient against
// central differences on every entry.
double max_rel_error(const Mat& x0, const std::function<Tape::Var(Tape&, Tape::Var)>& f) {
  Tape tape;
  auto x = tape.variable(x0);
  auto y = f(tape, x);
  tape.backward(y);
  const Mat g = tape.grad(x);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    Mat xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    Tape tp, tm;
    const double fp = tp.value(f(tp, tp.constant(xp)))[0];
    const double fm = tm.value(f(tm, tm.constant(xm)))[0];
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::fabs(fd - g[i]) / std::max(1e-6, std::fabs(fd) + std::fabs(g[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("backward before any forward is a state error") {
  Tape tape;
  CHECK_THROWS_AS(tape.backward(Tape::Var{0}), StateError);
  auto x = tape.variable(Mat(1, 1, 2.0));
  CHECK_THROWS_AS(tape.grad(x), StateError);
}

TEST_CASE("quadratic loss gradient is 2w") {
  Tape tape;
  auto w = tape.variable(Mat(1, 1, 3.5));
  auto loss = tape.mul(w, w);
  tape.backward(loss);
  CHECK(tape.grad(w)[0] == doctest::Approx(7.0));
}

TEST_CASE("identity passes output gradient through") {
  Tape tape;
  auto x = tape.variable(Mat::from_rows({{1, 2, 3}}));
  auto y = tape.matmul(x, tape.constant(Mat::identity(3)));
  const Mat seed = Mat::from_rows({{0.5, -1, 2}});
  tape.backward(y, seed);
  CHECK(tape.grad(x) == seed);
}

TEST_CASE("unreachable variable has zero gradient") {
  Tape tape;
  auto a = tape.variable(Mat(2, 2, 1.0));
  auto b = tape.variable(Mat(2, 2, 1.0));
  auto s = tape.sum(a);
  tape.backward(s);
  CHECK(max_abs(tape.grad(b)) == 0.0);
}

TEST_CASE("replay reproduces every node bit-exactly") {
  Rng rng(7);
  Tape tape;
  auto z = tape.variable(random_mat(rng, 5, 9));
  auto w = tape.variable(random_mat(rng, 9, 4));
  auto g = tape.normalize_rows(tape.gram(z, 3), 1e-12);
  auto a = tape.silu(tape.matmul(tape.concat_cols({g, z}), tape.constant(random_mat(rng, 18, 9))));
  auto c = tape.combine(z, tape.slice_cols(a, 0, 6), 3, 2);
  auto s = tape.scatter_add_rows(tape.matmul(c, tape.constant(random_mat(rng, 6, 9))), {0, 1, 0, 2, 1}, 3);
  auto out = tape.mean(tape.matmul(tape.gather_rows(s, {2, 0, 0, 1, 2}), w));
  (void)out;
  const auto values = tape.replay();
  REQUIRE(values.size() == tape.size());
  for (std::size_t i = 0; i < values.size(); ++i) CHECK(values[i] == tape.value(Tape::Var{static_cast<int>(i)}));
}

TEST_CASE("each op's gradient matches central differences") {
  Rng rng(11);
  const Mat w = random_mat(rng, 6, 4);
  const Mat bias = random_mat(rng, 1, 4);
  const Mat other = random_mat(rng, 3, 6);
  const Mat left = random_mat(rng, 4, 3);
  const Mat v = random_mat(rng, 3, 6);

  using Fn = std::function<Tape::Var(Tape&, Tape::Var)>;
  const std::vector<std::pair<const char*, Fn>> cases = {
      {"matmul", [&](Tape& t, Tape::Var x) { return t.sum(t.silu(t.matmul(x, t.constant(w)))); }},
      {"matmul rhs", [&](Tape& t, Tape::Var x) { return t.sum(t.silu(t.matmul(t.constant(left), x))); }},
      {"add_row", [&](Tape& t, Tape::Var x) { return t.sum(t.silu(t.add_row(t.matmul(x, t.constant(w)), t.constant(bias)))); }},
      {"mul", [&](Tape& t, Tape::Var x) { return t.sum(t.mul(x, t.silu(x))); }},
      {"sub scale", [&](Tape& t, Tape::Var x) { return t.mean(t.mul(t.sub(x, t.scale(x, 0.3)), t.constant(other))); }},
      {"relu", [&](Tape& t, Tape::Var x) { return t.sum(t.mul(t.relu(x), t.constant(other))); }},
      {"select", [&](Tape& t, Tape::Var x) { return t.sum(t.silu(t.select_cols(x, {5, 0, 0, 2}))); }},
      {"gather scatter", [&](Tape& t, Tape::Var x) {
         auto g = t.gather_rows(x, {2, 0, 1, 2});
         return t.sum(t.silu(t.scatter_add_rows(g, {1, 1, 0, 3}, 4)));
       }},
      {"scale_rows", [&](Tape& t, Tape::Var x) { return t.sum(t.silu(t.scale_rows(x, {0.5, -2.0, 3.0}))); }},
      {"gram", [&](Tape& t, Tape::Var x) { return t.sum(t.silu(t.gram(x, 2))); }},
      {"normalize", [&](Tape& t, Tape::Var x) { return t.sum(t.mul(t.normalize_rows(x, 1e-12), t.constant(other))); }},
      {"combine", [&](Tape& t, Tape::Var x) {
         return t.sum(t.silu(t.combine(x, t.matmul(x, t.constant(Mat(6, 4, 0.25))), 2, 2)));
       }},
      {"combine coefficients", [&](Tape& t, Tape::Var x) {
         return t.sum(t.silu(t.combine(t.constant(v), t.slice_cols(x, 0, 4), 2, 2)));
       }},
      {"concat", [&](Tape& t, Tape::Var x) { return t.sum(t.silu(t.concat_cols({x, t.scale(x, 2.0), x}))); }},
  };
  for (const auto& [name, f] : cases) {
    CAPTURE(std::string(name));
    for (int trial = 0; trial < 5; ++trial) CHECK(max_rel_error(random_mat(rng, 3, 6), f) < 1e-4);
  }
}

TEST_CASE("normalize passes tiny rows through") {
  Tape tape;
  auto x = tape.variable(Mat::from_rows({{1e-14, 0.0}, {3.0, 4.0}}));
  auto y = tape.normalize_rows(x, 1e-12);
  CHECK(tape.value(y)(0, 0) == 1e-14);
  CHECK(tape.value(y)(1, 1) == doctest::Approx(0.8));
}

TEST_CASE("shape errors") {
  Tape tape;
  auto a = tape.constant(Mat(2, 3));
  auto b = tape.constant(Mat(2, 3));
  CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);
  CHECK_THROWS_AS(tape.gram(a, 2), ShapeError);
  CHECK_THROWS_AS(tape.select_cols(a, {3}), ShapeError);
}
