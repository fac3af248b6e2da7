#include "skillnet/run_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace skillnet {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::string resolve(const std::filesystem::path& base, const std::string& path) {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (base / p).lexically_normal().string();
}

}  // namespace

MetricTokenizer parse_tokenizer(const std::string& name) {
  if (name == "chars") return MetricTokenizer::kCharacters;
  if (name == "whitespace") return MetricTokenizer::kWhitespace;
  throw ConfigError("unknown metric tokenizer '" + name + "' (expected chars or whitespace)");
}

SkillRegistry RunConfig::registry() const {
  if (skills.empty()) return SkillRegistry::defaults();
  return SkillRegistry(skills, general_skill);
}

TaskSkillMap RunConfig::routing_map() const {
  const auto reg = registry();
  if (routing.empty()) return TaskSkillMap::defaults(reg);
  TaskSkillMap map;
  for (const auto& [task, names] : routing) map.set(task, SkillSet::from_names(reg, names));
  return map;
}

void RunConfig::validate() const {
  model.validate();
  const auto reg = registry();
  if (model.skill_count != 0 && model.skill_count != reg.size()) {
    throw ConfigError("model.skill_count is " + std::to_string(model.skill_count) + " but " +
                      std::to_string(reg.size()) + " skills are declared");
  }
  if (model.skill_count == 0 && reg.size() != 1) {
    throw ConfigError("a dense model (skill_count 0) needs exactly one declared skill");
  }
  const auto map = routing_map();
  for (const auto& t : tasks) {
    t.validate();
    route(t, map, reg);
  }
  train.schedule.validate();
  if (beam.beam_size == 0 || beam.max_target_length == 0) {
    throw ConfigError("decoding: beam_size and max_target_length must be positive");
  }
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown(j, "config",
                   {"model", "skills", "general_skill", "routing", "tasks", "plan", "schedule", "adam", "training",
                    "decoding", "seed", "steps", "output_dir"});
    RunConfig c;
    take(j, "skills", c.skills);
    take(j, "general_skill", c.general_skill);
    if (j.contains("routing")) {
      for (const auto& [task, names] : j.at("routing").items()) {
        c.routing.emplace_back(task, names.get<std::vector<std::string>>());
      }
    }

    const json model = j.value("model", json::object());
    c.model = model_config_from_json(model.dump());
    if (!model.contains("skill_count")) c.model.skill_count = c.registry().size();

    if (j.contains("seed")) {
      const auto seed = j.at("seed").get<std::uint64_t>();
      c.train.seed = seed;
      if (!model.contains("init_seed")) c.model.init_seed = seed;
    }

    for (const auto& tj : j.value("tasks", json::array())) {
      reject_unknown(tj, "task", {"name", "prefix", "train", "dev", "test", "skills", "metric"});
      TaskSpec t;
      t.name = tj.at("name").get<std::string>();
      t.prefix = tj.value("prefix", t.name);
      t.train_path = resolve(base_dir, tj.value("train", std::string{}));
      t.dev_path = resolve(base_dir, tj.value("dev", std::string{}));
      t.test_path = resolve(base_dir, tj.value("test", std::string{}));
      take(tj, "skills", t.skills);
      if (tj.contains("metric")) t.metric = parse_metric(tj.at("metric").get<std::string>());
      c.tasks.push_back(std::move(t));
    }

    if (j.contains("plan")) {
      const auto& pj = j.at("plan");
      reject_unknown(pj, "plan", {"cap_K", "temperature"});
      take(pj, "cap_K", c.train.cap);
      take(pj, "temperature", c.train.temperature);
    }
    if (j.contains("schedule")) {
      const auto& sj = j.at("schedule");
      reject_unknown(sj, "schedule", {"peak_lr", "warmup_steps", "total_steps"});
      take(sj, "peak_lr", c.train.schedule.peak_lr);
      take(sj, "warmup_steps", c.train.schedule.warmup_steps);
      take(sj, "total_steps", c.train.schedule.total_steps);
    }
    if (j.contains("adam")) {
      const auto& aj = j.at("adam");
      reject_unknown(aj, "adam", {"beta1", "beta2", "epsilon"});
      take(aj, "beta1", c.train.adam.beta1);
      take(aj, "beta2", c.train.adam.beta2);
      take(aj, "epsilon", c.train.adam.epsilon);
    }
    if (j.contains("training")) {
      const auto& tj = j.at("training");
      reject_unknown(tj, "training",
                     {"batch_size", "clip_norm", "eval_every", "eval_examples", "max_source_length",
                      "max_target_length", "max_decode_length", "metric_tokenizer"});
      take(tj, "batch_size", c.train.batch_size);
      take(tj, "clip_norm", c.train.clip_norm);
      take(tj, "eval_every", c.train.eval_every);
      take(tj, "eval_examples", c.train.eval_examples);
      take(tj, "max_source_length", c.train.limits.max_source);
      take(tj, "max_target_length", c.train.limits.max_target);
      take(tj, "max_decode_length", c.train.max_decode_length);
      if (tj.contains("metric_tokenizer")) c.train.tokenizer = parse_tokenizer(tj.at("metric_tokenizer").get<std::string>());
    }
    if (j.contains("decoding")) {
      const auto& dj = j.at("decoding");
      reject_unknown(dj, "decoding", {"beam_size", "max_target_length"});
      take(dj, "beam_size", c.beam.beam_size);
      take(dj, "max_target_length", c.beam.max_target_length);
    }
    c.steps = j.value("steps", c.train.schedule.total_steps);
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    c.validate();
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), path.parent_path());
}

std::vector<TrainTask> load_train_tasks(const RunConfig& config) {
  const auto reg = config.registry();
  const auto map = config.routing_map();
  std::vector<TrainTask> out;
  for (const auto& spec : config.tasks) {
    if (spec.train_path.empty()) throw std::runtime_error("task '" + spec.name + "' has no train file");
    const auto train = load_jsonl(spec.train_path);
    const auto dev = spec.dev_path.empty() ? std::vector<Example>{} : load_jsonl(spec.dev_path);
    out.push_back(make_train_task(spec, train, dev, map, reg));
  }
  return out;
}

}  // namespace skillnet
