#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "skillnet/accounting.hpp"
#include "skillnet/checkpoint.hpp"
#include "skillnet/decoding.hpp"
#include "skillnet/metrics.hpp"
#include "skillnet/run_config.hpp"
#include "skillnet/training.hpp"

namespace skillnet::cli {

namespace {

using nlohmann::json;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LogLevel { kQuiet, kInfo, kDebug };

LogLevel log_level() {
  const char* env = std::getenv("SKILLNET_LOG");
  if (env == nullptr) return LogLevel::kInfo;
  const std::string v(env);
  if (v == "quiet" || v == "0") return LogLevel::kQuiet;
  if (v == "debug" || v == "2") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<double> temperature;
  std::optional<std::size_t> cap;
  std::optional<std::size_t> beam_size;
  std::string skills;
  bool dump_routing = false;
};

void add_common(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--seed", o.seed, "Seed for initialization and sampling");
  cmd.add_option("--steps", o.steps, "Number of training steps (also the schedule length)");
  cmd.add_option("--temperature", o.temperature, "Sampling temperature T");
  cmd.add_option("--cap-K", o.cap, "Per-task example cap K");
  cmd.add_flag("--dump-routing", o.dump_routing, "Print the task-to-skill routing table first");
}

void apply(RunConfig& c, const Overrides& o) {
  if (o.seed) {
    c.train.seed = *o.seed;
    c.model.init_seed = *o.seed;
  }
  if (o.steps) {
    c.steps = *o.steps;
    c.train.schedule.total_steps = std::max<std::size_t>(*o.steps, 1);
    c.train.schedule.warmup_steps = std::min(c.train.schedule.warmup_steps, c.train.schedule.total_steps);
  }
  if (o.temperature) c.train.temperature = *o.temperature;
  if (o.cap) c.train.cap = *o.cap;
  if (o.beam_size) c.beam.beam_size = *o.beam_size;
  c.validate();
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const TaskSpec& find_task(const RunConfig& c, const std::string& name) {
  for (const auto& t : c.tasks) {
    if (t.name == name) return t;
  }
  std::string known;
  for (const auto& t : c.tasks) known += (known.empty() ? "" : ", ") + t.name;
  throw UsageError("task '" + name + "' is not in the config (known: " + known + ")");
}

SkillSet task_skills(const RunConfig& c, const TaskSpec& task, const std::string& skills_flag) {
  const auto reg = c.registry();
  if (!skills_flag.empty()) {
    try {
      return SkillSet::from_names(reg, split_list(skills_flag));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--skills: ") + e.what());
    }
  }
  return route(task, c.routing_map(), reg);
}

void print_routing(const RunConfig& c, std::ostream& out) { out << c.routing_map().to_json(c.registry()) << '\n'; }

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json evaluations_json(const TrainRun& run) {
  json j = json::array();
  for (const auto& e : run.evaluations()) {
    json scores = json::object();
    for (std::size_t i = 0; i < e.scores.size(); ++i) scores[run.tasks()[i].spec.name] = e.scores[i];
    j.push_back({{"step", e.step}, {"scores", scores}, {"average", e.average}});
  }
  return j;
}

void finish_run(const TrainRun& run, const std::filesystem::path& out_dir, std::ostream& out) {
  run.save(out_dir / "final");
  if (!run.best_parameters().empty()) {
    Model best(run.model().config());
    assign_parameters(best, run.best_parameters());
    save_model(out_dir / "best", best);
  }
  run.write_loss_csv(out_dir / "loss.csv");
  write_json(out_dir / "eval.json", evaluations_json(run));
  out << "steps " << run.step() << '\n';
  if (run.best()) {
    out << "best step " << run.best()->step << " average dev score " << std::fixed << std::setprecision(4)
        << run.best()->average << '\n';
  }
  out << "wrote " << out_dir.string() << '\n';
}

void drive(TrainRun& run, std::size_t steps, const std::filesystem::path& out_dir, std::size_t checkpoint_every,
           std::ostream& err) {
  const auto level = log_level();
  const std::size_t report_every = level == LogLevel::kDebug ? 1 : 100;
  run.train(steps, [&](const StepReport& r) {
    if (level != LogLevel::kQuiet && r.step % report_every == 0) {
      err << "step " << r.step << " task " << r.task_name << " loss " << std::setprecision(6) << r.loss << " lr "
          << r.lr << '\n';
    }
    if (checkpoint_every > 0 && r.step % checkpoint_every == 0) run.save(out_dir / "state");
  });
}

int cmd_train(const RunConfig& c, const std::string& out_flag, const std::string& resume, std::size_t checkpoint_every,
              bool dump_routing, std::ostream& out, std::ostream& err) {
  if (dump_routing) print_routing(c, out);
  const std::filesystem::path out_dir = out_flag.empty() ? c.output_dir : out_flag;
  std::filesystem::create_directories(out_dir);
  TrainRun run(c.model, load_train_tasks(c), c.train);
  if (!resume.empty()) run.restore(resume);
  if (run.step() > c.steps) throw UsageError("checkpoint is already past the requested step count");
  drive(run, c.steps - run.step(), out_dir, checkpoint_every, err);
  finish_run(run, out_dir, out);
  return 0;
}

int cmd_adapt(const RunConfig& c, const std::string& checkpoint, const std::string& task_name,
              const std::string& skills, const std::string& out_flag, bool dump_routing, std::ostream& out,
              std::ostream& err) {
  if (dump_routing) print_routing(c, out);
  const auto& spec = find_task(c, task_name);
  const auto active = task_skills(c, spec, skills);
  TaskSpec adapted = spec;
  adapted.skills = active.names(c.registry());
  const auto train = load_jsonl(spec.train_path);
  const auto dev = spec.dev_path.empty() ? std::vector<Example>{} : load_jsonl(spec.dev_path);
  auto task = make_train_task(adapted, train, dev, c.routing_map(), c.registry());
  const std::filesystem::path out_dir = out_flag.empty() ? c.output_dir + "-adapt-" + task_name : out_flag;
  std::filesystem::create_directories(out_dir);
  out << "adapting to " << task_name << " with " << active.to_string(c.registry()) << '\n';
  auto run = adapt(checkpoint, std::move(task), c.train);
  drive(run, c.steps, out_dir, 0, err);
  finish_run(run, out_dir, out);
  return 0;
}

int cmd_generate(const RunConfig& c, const std::string& checkpoint, const std::string& task_name,
                 const std::string& skills, const std::string& input, const std::string& output, bool greedy,
                 std::ostream& out) {
  const auto model = load_model(checkpoint);
  const auto& spec = find_task(c, task_name);
  const auto active = task_skills(c, spec, skills);
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot open " + input);
  std::ofstream dst(output);
  if (!dst) throw std::runtime_error("cannot write " + output);
  std::string line;
  std::size_t line_no = 0, count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
      record.at("source").get<std::string>();
    } catch (const json::exception& e) {
      throw std::runtime_error(input + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const auto source = record.at("source").get<std::string>();
    const auto encoded = truncate(encode_example(spec, source, ""), c.train.limits);
    const auto h = greedy ? greedy_decode(*model, encoded.source, active, c.beam)
                          : beam_search(*model, encoded.source, active, c.beam);
    nlohmann::ordered_json result{
        {"source", source}, {"hypothesis", Vocabulary::decode(h.tokens)}, {"logprob", h.logprob}};
    if (record.contains("target")) result["reference"] = record.at("target");
    dst << result.dump() << '\n';
    ++count;
  }
  out << "generated " << count << " hypotheses into " << output << '\n';
  return 0;
}

int cmd_eval(const std::string& input, const std::string& metric_flag, const std::string& tokenizer_flag,
             const std::string& output, std::ostream& out) {
  const auto tokenizer = parse_tokenizer(tokenizer_flag);
  const auto metric = parse_metric(metric_flag);
  std::ifstream in(input);
  if (!in) throw std::runtime_error("cannot open " + input);
  std::vector<std::string> hyps, refs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      hyps.push_back(j.at("hypothesis").get<std::string>());
      refs.push_back(j.contains("reference") ? j.at("reference").get<std::string>() : j.at("target").get<std::string>());
    } catch (const json::exception& e) {
      throw std::runtime_error(input + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  json report{{"input", input}, {"count", hyps.size()}, {"metric", metric_name(metric)},
              {"score", score_corpus(metric, hyps, refs, tokenizer)}};
  json all = json::object();
  for (auto m : {Metric::kBleu2, Metric::kBleu4, Metric::kRougeL, Metric::kExactMatch}) {
    all[metric_name(m)] = score_corpus(m, hyps, refs, tokenizer);
  }
  report["all"] = all;
  if (!output.empty()) write_json(output, report);
  out << report.dump(2) << '\n';
  return 0;
}

int cmd_count_params(const RunConfig& c, bool from_config, std::ostream& out) {
  const auto reg = c.registry();
  const auto map = c.routing_map();
  const auto& model = c.model;
  out << "model: " << model.n_enc_layers << "+" << model.n_dec_layers << " layers, d_model " << model.d_model
      << ", d_ff " << model.d_ff << ", " << (model.skill_count == 0 ? std::size_t{0} : reg.size()) << " skills, "
      << modified_layer_count(model) << " modified layers" << (from_config ? "" : " (bart-large preset)") << '\n';
  std::size_t width = 4;
  for (const auto& t : map.tasks()) width = std::max(width, t.size());
  out << std::left << std::setw(static_cast<int>(width)) << "task" << std::right << std::setw(5) << "|S|"
      << std::setw(16) << "activated" << std::setw(16) << "total" << '\n';
  for (const auto& [task, skills] : map.entries()) {
    const auto count = count_params(model, skills);
    out << std::left << std::setw(static_cast<int>(width)) << task << std::right << std::setw(5) << skills.size()
        << std::setw(16) << count.activated << std::setw(16) << count.total << '\n';
  }
  if (model.skill_count > 0) {
    const auto one = count_params(model, SkillSet(reg, {reg.general()}));
    ModelConfig dense = model;
    dense.skill_count = 0;
    const auto dense_count = count_params(dense, SkillSet(SkillRegistry::dense(), {0}));
    out << "per-skill activated delta " << ffn_block_params(model) * modified_layer_count(model) << '\n';
    out << "general-only activated " << one.activated << '\n';
    out << "total minus dense " << one.total - dense_count.total << '\n';
  }
  return 0;
}

std::vector<std::pair<std::string, std::size_t>> parse_sizes(const std::string& text) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& item : split_list(text)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--sizes expects name=count pairs, got '" + item + "'");
    try {
      out.emplace_back(item.substr(0, eq), std::stoull(item.substr(eq + 1)));
    } catch (const std::exception&) {
      throw UsageError("--sizes has a bad count in '" + item + "'");
    }
  }
  return out;
}

int cmd_sampler_plan(const std::optional<RunConfig>& c, const std::string& sizes_flag, std::size_t cap,
                     double temperature, std::uint64_t seed, std::ostream& out) {
  std::vector<std::string> names;
  std::vector<std::size_t> sizes;
  if (!sizes_flag.empty()) {
    for (const auto& [n, s] : parse_sizes(sizes_flag)) {
      names.push_back(n);
      sizes.push_back(s);
    }
  } else if (c) {
    for (const auto& t : c->tasks) {
      names.push_back(t.name);
      sizes.push_back(t.train_path.empty() ? t.n_examples : load_jsonl(t.train_path).size());
    }
  } else {
    throw UsageError("sampler-plan needs --sizes or --config");
  }
  const auto plan = build_plan(names, sizes, cap, temperature, seed);
  out << "K " << plan.cap << "  T " << plan.temperature << '\n' << plan.to_table();
  return 0;
}

RunConfig config_or_default(const std::string& path) {
  if (!path.empty()) return load_run_config(path);
  RunConfig c;
  c.model = ModelConfig::bart_large();
  return c;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skill-routed encoder-decoder training, decoding and accounting"};
  app.name("skillnet");
  app.require_subcommand(1);

  std::string config_path, out_dir, resume, checkpoint, task, input, output, sizes;
  std::string metric = "bleu4", tokenizer = "chars";
  std::size_t checkpoint_every = 0;
  bool greedy = false;
  Overrides o;

  auto* train = app.add_subcommand("train", "Multi-task training from a config");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--out", out_dir, "Output directory (default: config output_dir)");
  train->add_option("--resume", resume, "Resume from a saved run state directory");
  train->add_option("--checkpoint-every", checkpoint_every, "Save run state to <out>/state every N steps");
  add_common(*train, o);

  auto* adapt_cmd = app.add_subcommand("adapt", "Fine-tune a checkpoint on one task");
  adapt_cmd->add_option("--config", config_path, "Run config (JSON)")->required();
  adapt_cmd->add_option("--checkpoint", checkpoint, "Model directory to start from")->required();
  adapt_cmd->add_option("--task", task, "Task name from the config")->required();
  adapt_cmd->add_option("--skills", o.skills, "Comma-separated skills (general is added)");
  adapt_cmd->add_option("--out", out_dir, "Output directory");
  add_common(*adapt_cmd, o);

  auto* generate = app.add_subcommand("generate", "Decode sources from a JSONL file");
  generate->add_option("--config", config_path, "Run config (JSON)")->required();
  generate->add_option("--checkpoint", checkpoint, "Model directory")->required();
  generate->add_option("--task", task, "Task name from the config")->required();
  generate->add_option("--input", input, "JSONL with a source field")->required();
  generate->add_option("--output", output, "JSONL to write")->required();
  generate->add_option("--skills", o.skills, "Comma-separated skills (general is added)");
  generate->add_option("--beam-size", o.beam_size, "Beam width");
  generate->add_flag("--greedy", greedy, "Greedy decoding instead of beam search");

  auto* eval = app.add_subcommand("eval", "Score hypotheses against references");
  eval->add_option("--input", input, "JSONL with hypothesis and reference (or target)")->required();
  eval->add_option("--metric", metric, "bleu2, bleu4, rougeL or exact_match");
  eval->add_option("--tokenizer", tokenizer, "chars or whitespace");
  eval->add_option("--output", output, "Write the report JSON here");

  auto* count = app.add_subcommand("count-params", "Per-task activated and total parameter counts");
  count->add_option("--config", config_path, "Run config (default: bart-large shape, built-in routing)");

  std::optional<std::size_t> plan_cap;
  std::optional<double> plan_temperature;
  std::uint64_t plan_seed = 0;
  auto* plan = app.add_subcommand("sampler-plan", "Task sampling probabilities");
  plan->add_option("--config", config_path, "Run config; sizes come from its train files");
  plan->add_option("--sizes", sizes, "name=count pairs, comma separated");
  plan->add_option("--cap-K", plan_cap, "Per-task example cap K");
  plan->add_option("--temperature", plan_temperature, "Sampling temperature T");
  plan->add_option("--seed", plan_seed, "Sampler seed");

  auto* routing = app.add_subcommand("dump-routing", "Print the task-to-skill routing table");
  routing->add_option("--config", config_path, "Run config (default: built-in routing)");

  if (!args.empty() && !args.front().starts_with("-")) {
    bool known = false;
    for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == args.front();
    if (!known) {
      err << "error: unknown subcommand '" << args.front() << "'\n" << app.help();
      return 2;
    }
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (train->parsed()) {
      auto c = load_run_config(config_path);
      apply(c, o);
      return cmd_train(c, out_dir, resume, checkpoint_every, o.dump_routing, out, err);
    }
    if (adapt_cmd->parsed()) {
      auto c = load_run_config(config_path);
      apply(c, o);
      return cmd_adapt(c, checkpoint, task, o.skills, out_dir, o.dump_routing, out, err);
    }
    if (generate->parsed()) {
      auto c = load_run_config(config_path);
      apply(c, o);
      return cmd_generate(c, checkpoint, task, o.skills, input, output, greedy, out);
    }
    if (eval->parsed()) return cmd_eval(input, metric, tokenizer, output, out);
    if (count->parsed()) return cmd_count_params(config_or_default(config_path), !config_path.empty(), out);
    if (plan->parsed()) {
      std::optional<RunConfig> c;
      if (!config_path.empty()) c = load_run_config(config_path);
      const std::size_t cap = plan_cap.value_or(c ? c->train.cap : std::size_t{1} << 21);
      const double t = plan_temperature.value_or(c ? c->train.temperature : 4.0);
      return cmd_sampler_plan(c, sizes, cap, t, plan_seed, out);
    }
    if (routing->parsed()) {
      print_routing(config_or_default(config_path), out);
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace skillnet::cli
