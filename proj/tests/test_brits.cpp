#include <doctest.h>

#include <cmath>
#include <random>

#include "brits/brits.hpp"
#include "support.hpp"

using namespace brits;

namespace {

const ModelKind kAllKinds[] = {ModelKind::rits_i, ModelKind::brits_i, ModelKind::rits,
                               ModelKind::brits};

// Copies every forward-direction parameter onto its backward twin.
void tie_directions(Model& model) {
  ParameterSet& ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string& name = ps[i].name;
    if (name.rfind("fwd.", 0) == 0) ps.at("bwd." + name.substr(4)).value = ps[i].value;
  }
}

}  // namespace

TEST_CASE("backward estimates are realigned to forward time") {
  std::mt19937_64 rng(1);
  Model model(ModelConfig{ModelKind::brits_i, 2, 4}, 3);
  const PreparedSample s = prepare(testing::random_sample(7, 2, rng, 0.3));
  Tape tape;
  ModelOutput out = model.forward(tape, s);
  const BidirectionalOutput& bi = *out.bidirectional;
  for (std::size_t t = 0; t < 7; ++t) {
    const Tensor& rev = tape.value(bi.bwd.estimates[6 - t]);
    for (std::size_t d = 0; d < 2; ++d) {
      CHECK(out.bwd_estimates->operator()(t, d) == rev[d]);
      CHECK(out.estimates(t, d) == (out.fwd_estimates(t, d) + rev[d]) / 2.0);
    }
  }
}

TEST_CASE("palindromic input with tied weights gives mirrored passes") {
  for (ModelKind kind : {ModelKind::brits_i, ModelKind::brits}) {
    CAPTURE(model_name(kind));
    Model model(ModelConfig{kind, 2, 5}, 8);
    std::mt19937_64 rng(5);
    testing::randomize(model, rng);
    tie_directions(model);
    const std::size_t T = 7;
    Tensor values(T, 2), masks(T, 2, 1.0);
    std::vector<double> ts(T);
    for (std::size_t t = 0; t < T; ++t) {
      ts[t] = static_cast<double>(t);
      const std::size_t k = std::min(t, T - 1 - t);
      values(t, 0) = 0.3 * static_cast<double>(k);
      values(t, 1) = std::cos(static_cast<double>(k));
    }
    masks(2, 1) = masks(4, 1) = 0.0;
    values(2, 1) = values(4, 1) = 0.0;
    const PreparedSample s = prepare(TimeSeriesSample::from_observations(values, masks, ts));
    Tape tape;
    ModelOutput out = model.forward(tape, s);
    const BidirectionalOutput& bi = *out.bidirectional;
    for (std::size_t t = 0; t < T; ++t) CHECK(tape.value(bi.fwd.estimates[t]) == tape.value(bi.bwd.estimates[t]));
    CHECK(tape.scalar(bi.fwd_loss) == tape.scalar(bi.bwd_loss));
  }
}

TEST_CASE("single step sequences see the same step in both directions") {
  Model model(ModelConfig{ModelKind::brits_i, 2, 3}, 2);
  tie_directions(model);
  const PreparedSample s = prepare(TimeSeriesSample::from_observations(
      Tensor(1, 2, std::vector<double>{0.5, 0.0}), Tensor(1, 2, std::vector<double>{1, 0}), {0.0}));
  CHECK(s.forward.values == s.backward.values);
  CHECK(s.forward.deltas == s.backward.deltas);
  Tape tape;
  ModelOutput out = model.forward(tape, s);
  CHECK(out.fwd_estimates == *out.bwd_estimates);
}

TEST_CASE("consistency loss") {
  Tape tape;
  auto col = [&](std::initializer_list<double> v) { return tape.constant(Tensor::column(v)); };
  const Var a[] = {col({1, 2}), col({0, -1})};
  const Var b[] = {col({1, 2}), col({0, -1})};
  const Var c[] = {col({1.5, 2.5}), col({0.5, -0.5})};
  CHECK(tape.scalar(consistency_loss(tape, a, b)) == 0.0);
  CHECK(tape.scalar(consistency_loss(tape, a, c)) == 0.25);
  CHECK(tape.scalar(consistency_loss(tape, c, a)) == 0.25);
  const Var f[] = {col({1, 2})};
  const Var g[] = {col({3, 2})};
  CHECK(tape.scalar(consistency_loss(tape, f, g)) == 2.0);
}

TEST_CASE("total loss is the sum of its parts") {
  std::mt19937_64 rng(3);
  Model model(ModelConfig{ModelKind::brits_i, 2, 4, 2, Task::classify}, 1);
  const PreparedSample s = prepare(testing::random_sample(5, 2, rng, 0.3, 1.0));
  Tape tape;
  ModelOutput out = model.forward(tape, s);
  const BidirectionalOutput& bi = *out.bidirectional;
  const double parts = tape.scalar(bi.fwd_loss) + tape.scalar(bi.bwd_loss) + tape.scalar(bi.consistency);
  CHECK(tape.scalar(out.imputation_loss) == doctest::Approx(parts).epsilon(1e-15));
  const double ce = 0.5 * (tape.scalar(output_loss(tape, bi.fwd_prediction, 1.0, Task::classify)) +
                           tape.scalar(output_loss(tape, bi.bwd_prediction, 1.0, Task::classify)));
  CHECK(tape.scalar(out.loss) == doctest::Approx(parts + ce).epsilon(1e-14));
  CHECK(tape.scalar(bidirectional_total_loss(tape, bi, 1.0, Task::none)) ==
        tape.scalar(out.imputation_loss));
}

TEST_CASE("gradients reach both directions") {
  std::mt19937_64 rng(4);
  Model model(ModelConfig{ModelKind::brits, 3, 4}, 6);
  const PreparedSample s = prepare(testing::random_sample(6, 3, rng, 0.3));
  model.parameters().zero_grad();
  Tape tape;
  tape.backward(model.forward(tape, s).loss);
  for (const char* dir : {"fwd.", "bwd."}) {
    double norm = 0.0;
    for (double g : model.parameters().at(std::string(dir) + "W_lstm").grad.data()) norm += g * g;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("interior missing step receives signal from both sides") {
  Model model(ModelConfig{ModelKind::brits_i, 1, 5}, 2);
  std::mt19937_64 rng(8);
  testing::randomize(model, rng);
  const PreparedSample s = prepare(testing::example_one_sample());
  Tape tape;
  ModelOutput out = model.forward(tape, s);
  const BidirectionalOutput& bi = *out.bidirectional;
  // Next forward observation is step 8, next backward observation is step 4.
  tape.backward(bi.fwd.steps[7].step_loss);
  CHECK(tape.grad(bi.fwd.steps[5].x_hat)[0] != 0.0);
  tape.backward(bi.bwd.steps[8 - 4].step_loss);
  CHECK(tape.grad(bi.bwd.steps[8 - 1 - 5].x_hat)[0] != 0.0);
}

TEST_CASE("imputation keeps observed values") {
  std::mt19937_64 rng(6);
  Model model(ModelConfig{ModelKind::brits_i, 2, 4}, 2);
  const TimeSeriesSample full = testing::random_sample(5, 2, rng, 0.0);
  const PreparedSample s = prepare(full);
  Tape tape;
  CHECK(impute(s.forward, model.forward(tape, s).estimates) == full.values);

  SequenceInput one;
  one.values = Tensor(1, 1);
  one.masks = Tensor(1, 1);
  Tensor est(1, 1, 3.0);
  CHECK(impute(one, est)[0] == 3.0);
  NormalizationStats stats{{10.0}, {2.0}};
  CHECK(impute(one, est, &stats)[0] == 16.0);
}

TEST_CASE("combined estimate of 2 and 4 is 3") {
  Tensor fwd(1, 1, 2.0), bwd(1, 1, 4.0);
  SequenceInput in{Tensor(1, 1), Tensor(1, 1), Tensor(1, 1)};
  Tensor combined(1, 1, (fwd[0] + bwd[0]) / 2.0);
  CHECK(impute(in, combined)[0] == 3.0);
}

TEST_CASE("model never reads eval values") {
  std::mt19937_64 rng(7);
  Dataset ds = {testing::random_sample(6, 2, rng, 0.1)};
  ds = hold_out(ds, 0.3, 3);
  Model model(ModelConfig{ModelKind::brits, 2, 4}, 2);
  const Tensor before = [&] {
    Tape tape;
    return model.forward(tape, prepare(ds[0])).estimates;
  }();
  for (double& v : ds[0].eval_values.data()) v += 1000.0;
  Tape tape;
  CHECK(model.forward(tape, prepare(ds[0])).estimates == before);
}

TEST_CASE("analytic gradients match finite differences for every model") {
  for (ModelKind kind : kAllKinds) {
    for (Task task : {Task::none, Task::classify}) {
      CAPTURE(model_name(kind));
      CAPTURE(task_name(task));
      std::mt19937_64 rng(100 + static_cast<int>(kind));
      Model model(ModelConfig{kind, 3, 8, task == Task::classify ? 3u : 1u, task}, 11);
      testing::randomize(model, rng, 0.4);
      const PreparedSample s = prepare(testing::random_sample(5, 3, rng, 0.35, 2.0));
      const testing::GradCheck r = testing::finite_difference_check(model, s);
      CAPTURE(r.worst);
      CHECK(r.max_rel <= 1e-4);
    }
  }
}

TEST_CASE("model names round trip") {
  for (ModelKind kind : kAllKinds) CHECK(parse_model(model_name(kind)) == kind);
  CHECK(parse_model("BRITS_I") == ModelKind::brits_i);
  CHECK_THROWS_AS(parse_model("gru-d"), DataError);
}

TEST_CASE("dimension mismatch is reported with both sizes") {
  Model model(ModelConfig{ModelKind::rits_i, 2, 3}, 1);
  std::mt19937_64 rng(1);
  const PreparedSample s = prepare(testing::random_sample(4, 3, rng));
  Tape tape;
  try {
    model.forward(tape, s);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('2') != std::string::npos);
  }
}
