#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "skillnet/run_config.hpp"
#include "skillnet/training.hpp"
#include "toy_tasks.hpp"

using namespace skillnet;
using namespace skillnet::testing;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("skillnet_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<double> values(const Model& m, const std::string& name) {
  const auto d = m.parameter(name).data();
  return {d.begin(), d.end()};
}

}  // namespace

TEST_CASE("linear warmup and decay schedule") {
  LinearSchedule s{0.5, 10, 50};
  CHECK(s.lr(0) == 0.0);
  CHECK(s.lr(5) == doctest::Approx(0.25));
  CHECK(s.lr(10) == 0.5);
  CHECK(s.lr(30) == doctest::Approx(0.25));
  CHECK(s.lr(50) == 0.0);
  CHECK(s.lr(80) == 0.0);
  double peak = 0.0;
  std::size_t arg = 0;
  for (std::size_t k = 0; k <= 50; ++k) {
    if (s.lr(k) > peak) {
      peak = s.lr(k);
      arg = k;
    }
  }
  CHECK(peak == 0.5);
  CHECK(arg == 10);
  // Piecewise linear: constant second difference away from the kink.
  for (std::size_t k = 11; k < 49; ++k) CHECK(std::abs(s.lr(k + 1) - 2 * s.lr(k) + s.lr(k - 1)) < 1e-15);
  CHECK(LinearSchedule{0.1, 0, 10}.lr(1) == doctest::Approx(0.09));
  CHECK_THROWS_AS((LinearSchedule{0.1, 20, 10}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((LinearSchedule{0.0, 0, 10}.validate()), std::invalid_argument);
}

TEST_CASE("adam matches the scalar update rule") {
  std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor::from({2}, {1.0, -2.0}, true)}};
  Adam adam;
  const double grads[3][2] = {{0.5, -1.0}, {0.25, 3.0}, {-1.0, 0.0}};
  double p[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 3; ++t) {
    params[0].second.zero_grad();
    params[0].second.node()->accumulate(std::vector<double>{grads[t - 1][0], grads[t - 1][1]});
    adam.step(params, 0.1);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      p[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(params[0].second.data()[0] == doctest::Approx(p[0]).epsilon(1e-14));
    CHECK(params[0].second.data()[1] == doctest::Approx(p[1]).epsilon(1e-14));
  }
  CHECK(adam.slot("w")->step == 3);
}

TEST_CASE("adam with zero gradient and zero moments is a no-op") {
  std::vector<std::pair<std::string, Tensor>> params{{"w", Tensor::from({3}, {0.1, 0.2, 0.3}, true)},
                                                      {"unreached", Tensor::from({1}, {7.0}, true)}};
  params[0].second.node()->accumulate(std::vector<double>{0.0, 0.0, 0.0});
  Adam adam;
  CHECK(adam.step(params, 1.0) == 1);
  CHECK(params[0].second.data()[0] == 0.1);
  CHECK(params[0].second.data()[2] == 0.3);
  CHECK(params[1].second.data()[0] == 7.0);
  CHECK(adam.slot("unreached") == nullptr);
}

TEST_CASE("gradient clipping") {
  std::vector<std::pair<std::string, Tensor>> params{{"a", Tensor::from({2}, {0, 0}, true)},
                                                      {"b", Tensor::from({1}, {0}, true)}};
  params[0].second.node()->accumulate(std::vector<double>{3.0, 0.0});
  params[1].second.node()->accumulate(std::vector<double>{4.0});
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(params[0].second.grad()[0] == doctest::Approx(0.6));
  CHECK(params[1].second.grad()[0] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(1.0));
  CHECK(params[1].second.grad()[0] == doctest::Approx(0.8));
}

TEST_CASE("train_step leaves inactive skills untouched") {
  const auto reg = toy_registry();
  std::vector<TrainTask> tasks{toy_task("copy", 40, 0, 1), toy_task("reverse", 40, 0, 2)};
  TrainRun run(toy_model(7), tasks, toy_options(3, 100));
  const int copy = static_cast<int>(reg.index_of("copy"));
  const int reverse = static_cast<int>(reg.index_of("reverse"));
  for (int i = 0; i < 12; ++i) {
    std::map<std::string, std::vector<double>> before;
    for (const auto& [name, t] : run.model().parameters()) before[name] = {t.data().begin(), t.data().end()};
    std::map<std::string, Adam::Slot> slots_before = run.optimizer().slots();
    const auto report = run.train_step();
    const int inactive = report.task_name == "copy" ? reverse : copy;
    for (const auto& name : skill_parameter_names(run.model(), inactive)) {
      CHECK_FALSE(run.model().parameter(name).has_grad());
      CHECK(values(run.model(), name) == before[name]);
      const auto* now = run.optimizer().slot(name);
      const auto it = slots_before.find(name);
      if (it == slots_before.end()) {
        CHECK(now == nullptr);
      } else {
        REQUIRE(now != nullptr);
        CHECK(now->m == it->second.m);
        CHECK(now->v == it->second.v);
        CHECK(now->step == it->second.step);
      }
    }
  }
}

TEST_CASE("zero steps, determinism and the loss log") {
  std::vector<TrainTask> tasks{toy_task("copy", 30, 5, 1), toy_task("reverse", 30, 5, 2)};
  TrainRun a(toy_model(11), tasks, toy_options(4, 40));
  Model init(toy_model(11));
  a.train(0);
  CHECK(same_parameters(a.model(), init));

  TrainRun b(toy_model(11), tasks, toy_options(4, 40));
  a.train(15);
  b.train(15);
  CHECK(same_parameters(a.model(), b.model()));
  CHECK(a.log().size() == 15);
  for (std::size_t i = 0; i < 15; ++i) {
    CHECK(a.log()[i].loss == b.log()[i].loss);
    CHECK(a.log()[i].task_name == b.log()[i].task_name);
    CHECK(a.log()[i].step == i + 1);
  }

  TrainRun c(toy_model(11), tasks, toy_options(5, 40));
  c.train(15);
  CHECK_FALSE(same_parameters(a.model(), c.model()));

  const auto dir = temp_dir("losslog");
  a.write_loss_csv(dir / "loss.csv");
  std::ifstream in(dir / "loss.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "step,task,loss,lr");
  CHECK(first.rfind("1,", 0) == 0);
}

TEST_CASE("saving and restoring mid-run does not change the result") {
  std::vector<TrainTask> tasks{toy_task("copy", 30, 4, 1), toy_task("reverse", 30, 4, 2)};
  auto options = toy_options(6, 30);
  options.eval_every = 10;
  const auto dir = temp_dir("resume");

  TrainRun full(toy_model(2), tasks, options);
  full.train(30, [&](const StepReport& r) {
    if (r.step == 17) full.save(dir);
  });

  TrainRun resumed(toy_model(99), tasks, options);
  resumed.restore(dir);
  CHECK(resumed.step() == 17);
  resumed.train(13);

  CHECK(same_parameters(full.model(), resumed.model()));
  REQUIRE(full.log().size() == resumed.log().size());
  for (std::size_t i = 0; i < full.log().size(); ++i) CHECK(full.log()[i].loss == resumed.log()[i].loss);
  REQUIRE(full.best().has_value());
  CHECK(full.best()->step == resumed.best()->step);
  CHECK(full.evaluations().size() == resumed.evaluations().size());
  for (const auto& [name, slot] : full.optimizer().slots()) {
    const auto* other = resumed.optimizer().slot(name);
    REQUIRE(other != nullptr);
    CHECK(other->m == slot.m);
    CHECK(other->v == slot.v);
  }
}

TEST_CASE("non-finite loss aborts the step") {
  std::vector<TrainTask> tasks{toy_task("copy", 10, 0, 1)};
  TrainRun run(toy_model(3), tasks, toy_options(1, 10));
  auto& emb = run.model().parameter("embed_tokens");
  std::fill(emb.mutable_data().begin(), emb.mutable_data().end(), std::nan(""));
  CHECK_THROWS_AS(run.train_step(), NonFiniteError);
}

TEST_CASE("copy task loss falls below 0.1 within 500 steps") {
  TrainRun run(toy_model(1), {toy_task("copy", 200, 0, 5)}, toy_options(1, 500));
  run.train(500);
  double tail = 0.0;
  for (std::size_t i = 490; i < 500; ++i) tail += run.log()[i].loss;
  CHECK(tail / 10.0 < 0.1);
}

TEST_CASE("adaptation freezes skills it never activates") {
  const auto reg = toy_registry();
  const auto dir = temp_dir("adapt");
  Model base(toy_model(21));
  save_model(dir, base);

  auto rotate = toy_task("rotate", 40, 0, 3);
  CHECK(rotate.skills == SkillSet::from_names(reg, {"copy"}));
  auto run = adapt(dir, rotate, toy_options(2, 20));
  run.train(0);
  CHECK(same_parameters(run.model(), base));
  run.train(20);
  for (const auto& name : skill_parameter_names(base, static_cast<int>(reg.index_of("reverse")))) {
    CHECK(values(run.model(), name) == values(base, name));
  }
  bool moved = false;
  for (const auto& name : skill_parameter_names(base, static_cast<int>(reg.index_of("copy")))) {
    moved = moved || values(run.model(), name) != values(base, name);
  }
  CHECK(moved);
  CHECK(run.optimizer().slot("embed_tokens") != nullptr);
  CHECK_THROWS_AS(SkillSet::from_names(reg, {"telepathy"}), std::invalid_argument);
}

TEST_CASE("archives round-trip bit-exactly and reject damage") {
  const auto dir = temp_dir("archive");
  std::vector<NamedArray> arrays{{"a", {2, 2}, {1.0, -0.0, 1e-310, std::nextafter(1.0, 2.0)}},
                                 {"b", {}, {3.25}},
                                 {"c", {0}, {}}};
  write_archive(dir / "x", arrays);
  const auto back = read_archive(dir / "x");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].name == arrays[i].name);
    CHECK(back[i].shape == arrays[i].shape);
    REQUIRE(back[i].data.size() == arrays[i].data.size());
    for (std::size_t k = 0; k < back[i].data.size(); ++k) {
      CHECK(std::memcmp(&back[i].data[k], &arrays[i].data[k], sizeof(double)) == 0);
    }
  }
  std::filesystem::resize_file(dir / "x.bin", 16);
  CHECK_THROWS_AS(read_archive(dir / "x"), std::runtime_error);

  Model m(toy_model(5));
  save_model(dir / "m", m);
  CHECK(same_parameters(*load_model(dir / "m"), m));
  Model other(toy_model(5, 16));
  CHECK_THROWS_AS(assign_parameters(other, snapshot_parameters(m)), std::runtime_error);
}

TEST_CASE("run config parsing") {
  const std::string text = R"({
    // comment
    "model": {"preset": "toy", "d_model": 16, "d_ff": 32},
    "skills": ["copy", "reverse", "general"],
    "routing": {"copy": ["copy"]},
    "tasks": [{"name": "copy", "train": "data/copy.jsonl", "metric": "exact_match"}],
    "plan": {"cap_K": 100, "temperature": 2.0},
    "schedule": {"peak_lr": 0.01, "warmup_steps": 5, "total_steps": 50},
    "seed": 9
  })";
  const auto c = parse_run_config(text, "/base");
  CHECK(c.model.d_model == 16);
  CHECK(c.model.skill_count == 3);
  CHECK(c.model.init_seed == 9);
  CHECK(c.train.seed == 9);
  CHECK(c.train.cap == 100);
  CHECK(c.steps == 50);
  CHECK(c.tasks[0].prefix == "copy");
  CHECK(c.tasks[0].train_path == "/base/data/copy.jsonl");
  CHECK(c.tasks[0].metric == Metric::kExactMatch);
  CHECK(route(c.tasks[0], c.routing_map(), c.registry()).size() == 2);

  CHECK_THROWS_AS(parse_run_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"d_model": 10, "n_heads": 4}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"skill_count": 4}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"tasks": [{"name": "nowhere"}]})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{"), ConfigError);
  CHECK(parse_run_config("{}").model.skill_count == 6);
}
