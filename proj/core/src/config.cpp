#include "edo/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <variant>

#include <nlohmann/json.hpp>

namespace edo {
namespace {

using json = nlohmann::ordered_json;

// Seeds get their own alternative because uint64_t and size_t may coincide.
struct SeedRef {
  std::uint64_t* p;
};

using FieldRef = std::variant<int*, std::size_t*, SeedRef, double*, std::string*, std::vector<std::string>*,
                              std::vector<double>*>;

struct Field {
  const char* key;
  FieldRef ref;
};

// Single source of truth for the on-disk schema.
std::vector<Field> fields(ExperimentConfig& c) {
  return {
      {"task_modulus", &c.task_modulus},
      {"task_min_chain", &c.task_min_chain},
      {"task_max_chain", &c.task_max_chain},
      {"task_n_train", &c.task_n_train},
      {"task_n_eval", &c.task_n_eval},
      {"context_window", &c.context_window},
      {"feature_dim", &c.feature_dim},
      {"max_len", &c.max_len},
      {"warmup_epochs", &c.warmup_epochs},
      {"warmup_lr", &c.warmup_lr},
      {"mode", &c.mode},
      {"alpha", &c.alpha},
      {"beta", &c.beta},
      {"eps_low", &c.eps_low},
      {"eps_high", &c.eps_high},
      {"sigma_floor", &c.sigma_floor},
      {"advantage", &c.advantage},
      {"iterations", &c.iterations},
      {"epochs", &c.epochs},
      {"rollouts", &c.rollouts},
      {"pairs_per_prompt", &c.pairs_per_prompt},
      {"minibatch_prompts", &c.minibatch_prompts},
      {"learning_rate", &c.learning_rate},
      {"temperature", &c.temperature},
      {"strategies", &c.strategies},
      {"eval_temperature", &c.eval_temperature},
      {"sc_n", &c.sc_n},
      {"sc_repeats", &c.sc_repeats},
      {"bon_n", &c.bon_n},
      {"entropy_samples", &c.entropy_samples},
      {"diversity_samples", &c.diversity_samples},
      {"rm_negatives", &c.rm_negatives},
      {"rm_epochs", &c.rm_epochs},
      {"rm_lr", &c.rm_lr},
      {"rm_reg", &c.rm_reg},
      {"rm_batch", &c.rm_batch},
      {"search_beam", &c.search_beam},
      {"search_branching", &c.search_branching},
      {"search_iterations", &c.search_iterations},
      {"search_lambda", &c.search_lambda},
      {"search_noise_var", &c.search_noise_var},
      {"search_ridge", &c.search_ridge},
      {"sweep_alphas", &c.sweep_alphas},
      {"seed", SeedRef{&c.seed}},
      {"out_dir", &c.out_dir},
  };
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::kInvalidConfig, "config key '" + key + "': " + why);
}

void read_value(const std::string& key, const json& v, SeedRef ref) {
  if (!v.is_number_unsigned()) bad(key, "expected a non-negative integer");
  *ref.p = v.get<std::uint64_t>();
}

void read_value(const std::string& key, const json& v, int* p) {
  if (!v.is_number_integer()) bad(key, "expected an integer");
  *p = v.get<int>();
}

void read_value(const std::string& key, const json& v, std::size_t* p) {
  if (!v.is_number_unsigned()) bad(key, "expected a non-negative integer");
  *p = v.get<std::size_t>();
}

void read_value(const std::string& key, const json& v, double* p) {
  if (!v.is_number()) bad(key, "expected a number");
  *p = v.get<double>();
}

void read_value(const std::string& key, const json& v, std::string* p) {
  if (!v.is_string()) bad(key, "expected a string");
  *p = v.get<std::string>();
}

template <typename T>
void read_value(const std::string& key, const json& v, std::vector<T>* p) {
  if (!v.is_array()) bad(key, "expected an array");
  p->assign(v.size(), T{});
  for (std::size_t i = 0; i < v.size(); ++i) read_value(key + "[" + std::to_string(i) + "]", v[i], &(*p)[i]);
}

void write_value(json& doc, const char* key, SeedRef ref) { doc[key] = *ref.p; }

template <typename T>
void write_value(json& doc, const char* key, T* p) {
  doc[key] = *p;
}

}  // namespace

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kIdpo: return "idpo";
    case TrainMode::kEdIdpo: return "ed-idpo";
    case TrainMode::kGrpo: return "grpo";
    case TrainMode::kEdGrpo: return "ed-grpo";
  }
  return "unknown";
}

TrainMode parse_mode(const std::string& name) {
  if (name == "idpo") return TrainMode::kIdpo;
  if (name == "ed-idpo") return TrainMode::kEdIdpo;
  if (name == "grpo") return TrainMode::kGrpo;
  if (name == "ed-grpo") return TrainMode::kEdGrpo;
  throw Error(ErrorCode::kInvalidConfig, "config key 'mode': unknown mode '" + name + "'");
}

bool is_grpo(TrainMode m) noexcept { return m == TrainMode::kGrpo || m == TrainMode::kEdGrpo; }
bool is_exploration_driven(TrainMode m) noexcept { return m == TrainMode::kEdIdpo || m == TrainMode::kEdGrpo; }

TaskSpec ExperimentConfig::task_spec() const {
  TaskSpec s;
  s.modulus = task_modulus;
  s.min_chain = task_min_chain;
  s.max_chain = task_max_chain;
  s.n_train = task_n_train;
  s.n_eval = task_n_eval;
  s.seed = seed;
  return s;
}

AdvantageMode ExperimentConfig::advantage_mode() const {
  if (advantage == "standardized") return AdvantageMode::kStandardized;
  if (advantage == "mean-only") return AdvantageMode::kMeanOnly;
  bad("advantage", "expected 'standardized' or 'mean-only'");
}

RmTrainOptions ExperimentConfig::rm_options() const {
  RmTrainOptions o;
  o.epochs = rm_epochs;
  o.learning_rate = rm_lr;
  o.reg = rm_reg;
  o.batch_size = rm_batch;
  o.seed = seed;
  return o;
}

SearchOptions ExperimentConfig::search_options() const {
  SearchOptions o;
  o.beam = search_beam;
  o.branching = search_branching;
  o.max_iterations = search_iterations;
  o.lambda = search_lambda;
  o.memory.noise_var = search_noise_var;
  o.memory.ridge = search_ridge;
  return o;
}

void ExperimentConfig::validate() const {
  if (task_modulus < 2) bad("task_modulus", "must be >= 2");
  if (task_min_chain < 1) bad("task_min_chain", "must be >= 1");
  if (task_max_chain < task_min_chain) bad("task_max_chain", "must be >= task_min_chain");
  if (task_n_train == 0) bad("task_n_train", "must be >= 1");
  if (task_n_eval == 0) bad("task_n_eval", "must be >= 1");
  if (context_window == 0) bad("context_window", "must be >= 1");
  if (feature_dim == 0) bad("feature_dim", "must be >= 1");
  if (max_len == 0) bad("max_len", "must be >= 1");
  if (!(warmup_lr > 0.0)) bad("warmup_lr", "must be > 0");
  const TrainMode m = parse_mode(mode);
  if (!(alpha >= 0.0)) bad("alpha", "must be >= 0");
  if (!(beta > 0.0)) bad("beta", "must be > 0");
  if (!(eps_low >= 0.0 && eps_low < 1.0)) bad("eps_low", "must lie in [0, 1)");
  if (!(eps_high >= 0.0)) bad("eps_high", "must be >= 0");
  if (!(sigma_floor >= 0.0)) bad("sigma_floor", "must be >= 0");
  (void)advantage_mode();
  if (epochs == 0) bad("epochs", "must be >= 1");
  if (rollouts == 0 || (is_grpo(m) && rollouts < 2)) bad("rollouts", "must be >= 1 (>= 2 for group modes)");
  if (pairs_per_prompt == 0) bad("pairs_per_prompt", "must be >= 1");
  if (minibatch_prompts == 0) bad("minibatch_prompts", "must be >= 1");
  if (!(learning_rate > 0.0)) bad("learning_rate", "must be > 0");
  if (!(temperature > 0.0)) bad("temperature", "must be > 0");
  if (!(eval_temperature > 0.0)) bad("eval_temperature", "must be > 0");
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    try {
      (void)parse_strategy(strategies[i]);
    } catch (const Error&) {
      bad("strategies[" + std::to_string(i) + "]", "unknown strategy '" + strategies[i] + "'");
    }
  }
  if (sc_n == 0) bad("sc_n", "must be >= 1");
  if (sc_repeats == 0) bad("sc_repeats", "must be >= 1");
  if (bon_n == 0) bad("bon_n", "must be >= 1");
  if (entropy_samples == 0) bad("entropy_samples", "must be >= 1");
  if (diversity_samples == 0) bad("diversity_samples", "must be >= 1");
  if (rm_negatives == 0) bad("rm_negatives", "must be >= 1");
  if (!(rm_lr > 0.0)) bad("rm_lr", "must be > 0");
  if (!(rm_reg >= 0.0)) bad("rm_reg", "must be >= 0");
  if (rm_batch == 0) bad("rm_batch", "must be >= 1");
  if (search_beam == 0) bad("search_beam", "must be >= 1");
  if (search_branching == 0) bad("search_branching", "must be >= 1");
  if (!(search_lambda >= 0.0)) bad("search_lambda", "must be >= 0");
  if (!(search_noise_var > 0.0)) bad("search_noise_var", "must be > 0");
  if (!(search_ridge > 0.0)) bad("search_ridge", "must be > 0");
  for (std::size_t i = 0; i < sweep_alphas.size(); ++i) {
    if (!(sweep_alphas[i] >= 0.0)) bad("sweep_alphas[" + std::to_string(i) + "]", "must be >= 0");
  }
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kInvalidConfig, "config must be a JSON object");
  ExperimentConfig cfg;
  auto table = fields(cfg);
  for (const auto& [key, value] : doc.items()) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) bad(key, "unknown key");
    std::visit([&](auto ref) { read_value(key, value, ref); }, it->ref);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidConfig, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  json doc = json::object();
  for (const auto& f : fields(copy)) {
    std::visit([&](auto ref) { write_value(doc, f.key, ref); }, f.ref);
  }
  return doc.dump(2) + "\n";
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path);
  out << config_to_json_text(cfg);
}

}  // namespace edo
