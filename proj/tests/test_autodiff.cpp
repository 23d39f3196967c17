#include "prodcat/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

#include "prodcat/util.hpp"

using namespace prodcat;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor random_tensor(Rng& rng, ad::Shape shape, double lo = -2.0,
                     double hi = 2.0) {
  std::vector<double> values(ad::numel(shape));
  for (double& v : values) v = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace

TEST_CASE("forward examples") {
  Tape tape(false);
  CHECK(tape.sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));

  Tensor sm = tape.softmax(Tensor::from({2}, {1.0, 1.0}), 0);
  CHECK(sm.data()[0] == doctest::Approx(0.5));
  CHECK(sm.data()[1] == doctest::Approx(0.5));

  Tensor prod = tape.matmul(Tensor::from({2, 2}, {1, 2, 3, 4}),
                            Tensor::from({2, 1}, {1, 1}));
  CHECK(prod.data() == std::vector<double>{3, 7});

  CHECK(tape.tanh(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(tape.relu(Tensor::scalar(-1.5)).item() == 0.0);
  CHECK(tape.relu(Tensor::scalar(1.5)).item() == 1.5);
}

TEST_CASE("backward: sum gives ones") {
  Tape tape;
  Tensor w = Tensor::from({3}, {5.0, -1.0, 2.0}, true);
  Tensor loss = tape.reduce_sum(w);
  tape.backward(loss);
  CHECK(w.grad() == std::vector<double>{1, 1, 1});
}

TEST_CASE("backward: sum of squares") {
  Tape tape;
  Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor loss = tape.reduce_sum(tape.mul(w, w));
  tape.backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(w.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("backward accumulates across repeated calls") {
  Tape tape;
  Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor loss = tape.reduce_sum(tape.mul(w, w));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(w.grad()[1] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar") {
  Tape tape;
  Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor y = tape.mul(w, w);
  CHECK_THROWS_AS(tape.backward(y), DataError);
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Rng rng(31);
  Tape tape(false);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor(rng, {4, 7}, -30.0, 30.0);
    Tensor s = tape.softmax(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(s.at(r, c) > 0.0);
        sum += s.at(r, c);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax over axis 0") {
  Tape tape(false);
  Tensor x = Tensor::from({2, 2}, {0.0, 10.0, 0.0, -10.0});
  Tensor s = tape.softmax(x, 0);
  CHECK(s.at(0, 0) == doctest::Approx(0.5));
  CHECK(s.at(1, 0) == doctest::Approx(0.5));
  CHECK(s.at(0, 1) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("shape errors name both shapes") {
  Tape tape;
  Tensor a = Tensor::from({2, 3}, std::vector<double>(6, 1.0));
  Tensor b = Tensor::from({2, 2}, std::vector<double>(4, 1.0));
  CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("(2,2)"), DataError);
  CHECK_THROWS_WITH_AS(tape.matmul(a, a), doctest::Contains("(2,3)"),
                       DataError);
  CHECK_THROWS_AS(tape.softmax(Tensor::from({0}, {}), 0), DataError);
}

TEST_CASE("dropout is identity at train=false and scales otherwise") {
  Rng rng(17);
  Tensor x = random_tensor(rng, {6, 5});
  Tape tape;
  Tensor off = tape.dropout(x, 0.4, 99, false);
  CHECK(off.same_node(x));
  Tensor zero_rate = tape.dropout(x, 0.0, 99, true);
  CHECK(zero_rate.same_node(x));

  const double rate = 0.4;
  Tensor on = tape.dropout(x, rate, 99, true);
  const double scale = 1.0 / (1.0 - rate);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expected_kept = x.data()[i] * scale;
    bool is_zero = on.data()[i] == 0.0;
    bool is_scaled = on.data()[i] == doctest::Approx(expected_kept);
    CHECK((is_zero || is_scaled));
    kept += is_scaled;
  }
  CHECK(kept > 0);

  Tensor again = tape.dropout(x, rate, 99, true);
  CHECK(again.data() == on.data());  // same seed, same mask

  CHECK_THROWS_AS(tape.dropout(x, 1.0, 1, true), DataError);
}

TEST_CASE("embedding_lookup forward and masked backward") {
  Tape tape;
  Tensor matrix = Tensor::from({4, 2}, {0, 0, 10, 11, 20, 21, 30, 31}, true);
  std::vector<int> ids = {2, 0, 2, 3};
  Tensor out = tape.embedding_lookup(matrix, ids, 0);
  CHECK(out.data() == std::vector<double>{20, 21, 0, 0, 20, 21, 30, 31});

  Tensor loss = tape.reduce_sum(out);
  tape.backward(loss);
  // row 2 looked up twice, row 3 once, PAD row masked, row 1 untouched
  CHECK(matrix.grad() == std::vector<double>{0, 0, 0, 0, 2, 2, 1, 1});

  CHECK_THROWS_AS(tape.embedding_lookup(matrix, {4}, 0), DataError);
}

TEST_CASE("select_index bounds checking") {
  Tape tape;
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(tape.select_index(a, {2, 0}).data() == std::vector<double>{3, 4});
  CHECK_THROWS_WITH_AS(tape.select_index(a, {3, 0}),
                       doctest::Contains("out of range"), DataError);
}

TEST_CASE("where_rows routes values and gradients per row") {
  Tape tape;
  Tensor a = Tensor::from({2, 2}, {1, 1, 2, 2}, true);
  Tensor b = Tensor::from({2, 2}, {5, 5, 6, 6}, true);
  Tensor out = tape.where_rows({1, 0}, a, b);
  CHECK(out.data() == std::vector<double>{1, 1, 6, 6});
  tape.backward(tape.reduce_sum(out));
  CHECK(a.grad() == std::vector<double>{1, 1, 0, 0});
  CHECK(b.grad() == std::vector<double>{0, 0, 1, 1});
}

TEST_CASE("gradient_check: linear function is exact") {
  Rng rng(41);
  double err = ad::gradient_check(
      [](Tape& tape, std::vector<Tensor>& leaves) {
        return tape.reduce_sum(tape.affine(leaves[0], 3.0, -1.0));
      },
      {random_tensor(rng, {5})});
  CHECK(err <= 1e-10);
}

TEST_CASE("gradient_check: sum of sigmoids") {
  Rng rng(42);
  double err = ad::gradient_check(
      [](Tape& tape, std::vector<Tensor>& leaves) {
        return tape.reduce_sum(tape.sigmoid(leaves[0]));
      },
      {random_tensor(rng, {5})});
  CHECK(err <= 1e-6);
}

// Every differentiable op at random points, 64-bit, eps 1e-5, tol 1e-6.
TEST_CASE("gradient_check per op") {
  Rng rng(2024);

  auto check = [&](const char* name,
                   const std::function<Tensor(Tape&, std::vector<Tensor>&)>& f,
                   std::vector<Tensor> leaves, double tol = 1e-6) {
    INFO(name);
    CHECK(ad::gradient_check(f, std::move(leaves)) <= tol);
  };

  check("add",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.add(l[0], l[1]));
        },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})});
  check("add broadcast",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.tanh(t.add(l[0], l[1])));
        },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {4})});
  check("sub",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.sigmoid(t.sub(l[0], l[1])));
        },
        {random_tensor(rng, {2, 3}), random_tensor(rng, {3})});
  check("mul",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.mul(l[0], l[1]));
        },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})});
  check("mul broadcast",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.tanh(t.mul(l[0], l[1])));
        },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {4})});
  check("affine",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.affine(l[0], -2.5, 0.75));
        },
        {random_tensor(rng, {6})});
  check("matmul",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.tanh(t.matmul(l[0], l[1])));
        },
        {random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {4, 2}, -1, 1)});
  check("transpose",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.sigmoid(t.transpose(l[0])));
        },
        {random_tensor(rng, {3, 5})});
  check("sigmoid",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.sigmoid(l[0]));
        },
        {random_tensor(rng, {7})});
  check("tanh",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.tanh(l[0]));
        },
        {random_tensor(rng, {7})});
  check("relu positive side",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.relu(l[0]));
        },
        {random_tensor(rng, {4}, 0.5, 2.0)});
  check("relu negative side",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.relu(l[0]));
        },
        {random_tensor(rng, {4}, -2.0, -0.5)});
  check("log",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.log(l[0]));
        },
        {random_tensor(rng, {5}, 0.2, 3.0)});
  check("pow_const",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.pow_const(l[0], 2.5));
        },
        {random_tensor(rng, {5}, 0.2, 2.0)});
  check("pow_const zero exponent",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.pow_const(l[0], 0.0));
        },
        {random_tensor(rng, {5}, 0.2, 2.0)});
  check("clamp interior",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.clamp(l[0], -10.0, 10.0));
        },
        {random_tensor(rng, {5})});
  check("softmax axis1",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.mul(t.softmax(l[0], 1), l[1]));
        },
        {random_tensor(rng, {3, 5}), random_tensor(rng, {3, 5})});
  check("softmax axis0",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.mul(t.softmax(l[0], 0), l[1]));
        },
        {random_tensor(rng, {3, 5}), random_tensor(rng, {3, 5})});
  check("concat axis0",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.tanh(t.concat({l[0], l[1]}, 0)));
        },
        {random_tensor(rng, {2, 3}), random_tensor(rng, {4, 3})});
  check("concat axis1",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.tanh(t.concat({l[0], l[1]}, 1)));
        },
        {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 2})});
  check("slice",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.sigmoid(t.slice(l[0], 1, 1, 2)));
        },
        {random_tensor(rng, {3, 5})});
  check("layer_norm",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.mul(t.layer_norm(l[0], l[1], l[2]), l[3]));
        },
        {random_tensor(rng, {3, 6}), random_tensor(rng, {6}, 0.5, 1.5),
         random_tensor(rng, {6}), random_tensor(rng, {3, 6})});
  check("embedding_lookup",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.tanh(t.embedding_lookup(l[0], {1, 3, 1}, 0)));
        },
        {random_tensor(rng, {5, 4})});
  check("select_index",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.select_index(l[0], {2, 0, 1}));
        },
        {random_tensor(rng, {3, 4})});
  check("where_rows",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.tanh(t.where_rows({1, 0, 1}, l[0], l[1])));
        },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})});
  check("dropout fixed mask",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_sum(t.dropout(l[0], 0.3, 555, true));
        },
        {random_tensor(rng, {4, 4})});
  check("reduce_mean",
        [](Tape& t, std::vector<Tensor>& l) {
          return t.reduce_mean(t.mul(l[0], l[0]));
        },
        {random_tensor(rng, {4, 3})});
}

TEST_CASE("inference tape records nothing") {
  Tape tape(false);
  Tensor w = Tensor::from({3}, {1, 2, 3}, true);
  Tensor out = tape.reduce_sum(tape.sigmoid(w));
  CHECK(tape.recorded_ops() == 0);
  CHECK_FALSE(out.requires_grad());
}
