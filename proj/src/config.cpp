#include "vpoc/config.hpp"

#include <charconv>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "vpoc/errors.hpp"

namespace vpoc::config {

namespace {

bool is_bare_key(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      return false;
  return true;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw FormatError("config line " + std::to_string(line) + ": " + what);
}

std::string parse_quoted(const std::string& s, std::size_t& pos, int line) {
  std::string out;
  ++pos;  // opening quote
  while (pos < s.size() && s[pos] != '"') {
    char c = s[pos];
    if (c == '\\') {
      ++pos;
      if (pos >= s.size()) fail(line, "dangling escape in string");
      switch (s[pos]) {
        case '"': c = '"'; break;
        case '\\': c = '\\'; break;
        case 'n': c = '\n'; break;
        case 't': c = '\t'; break;
        default: fail(line, "unsupported escape in string");
      }
    }
    out.push_back(c);
    ++pos;
  }
  if (pos >= s.size()) fail(line, "unterminated string");
  ++pos;  // closing quote
  return out;
}

Value parse_value_at(const std::string& s, std::size_t& pos, int line);

Value parse_array(const std::string& s, std::size_t& pos, int line) {
  Value v;
  v.kind = Value::Kind::Array;
  ++pos;  // '['
  auto skip_ws = [&] {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
  };
  skip_ws();
  if (pos < s.size() && s[pos] == ']') {
    ++pos;
    return v;
  }
  while (true) {
    skip_ws();
    v.array.push_back(parse_value_at(s, pos, line));
    skip_ws();
    if (pos >= s.size()) fail(line, "unterminated array");
    if (s[pos] == ']') {
      ++pos;
      return v;
    }
    if (s[pos] != ',') fail(line, "expected ',' or ']' in array");
    ++pos;
  }
}

Value parse_scalar_token(const std::string& tok, int line) {
  Value v;
  if (tok == "true" || tok == "false") {
    v.kind = Value::Kind::Bool;
    v.b = tok == "true";
    return v;
  }
  bool integral = !tok.empty();
  for (std::size_t i = 0; i < tok.size(); ++i) {
    const char c = tok[i];
    if (i == 0 && (c == '+' || c == '-')) continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      integral = false;
      break;
    }
  }
  if (integral && tok != "+" && tok != "-") {
    errno = 0;
    char* end = nullptr;
    const long long x = std::strtoll(tok.c_str(), &end, 10);
    if (errno == ERANGE || end != tok.c_str() + tok.size())
      fail(line, "integer out of range: " + tok);
    v.kind = Value::Kind::Int;
    v.i = x;
    return v;
  }
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() + tok.size() && !tok.empty() && std::isfinite(x)) {
    v.kind = Value::Kind::Float;
    v.f = x;
    return v;
  }
  fail(line, "unrecognized value: " + tok);
}

Value parse_value_at(const std::string& s, std::size_t& pos, int line) {
  if (pos >= s.size()) fail(line, "missing value");
  if (s[pos] == '"') {
    Value v;
    v.kind = Value::Kind::String;
    v.s = parse_quoted(s, pos, line);
    return v;
  }
  if (s[pos] == '[') return parse_array(s, pos, line);
  std::size_t end = pos;
  while (end < s.size() && s[end] != ',' && s[end] != ']' &&
         !std::isspace(static_cast<unsigned char>(s[end])))
    ++end;
  const std::string tok = s.substr(pos, end - pos);
  pos = end;
  return parse_scalar_token(tok, line);
}

Value parse_value(const std::string& s, int line) {
  std::size_t pos = 0;
  const Value v = parse_value_at(s, pos, line);
  while (pos < s.size()) {
    if (!std::isspace(static_cast<unsigned char>(s[pos])))
      fail(line, "trailing characters after value");
    ++pos;
  }
  return v;
}

// Cuts a '#' comment, respecting quoted strings.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return s.substr(0, i);
    }
  }
  return s;
}

}  // namespace

Table parse_toml(const std::string& text) {
  Table table;
  std::string section;
  std::istringstream ss(text);
  std::string raw;
  int line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(line, "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) fail(line, "empty section name");
      std::size_t start = 0;
      while (true) {
        const auto dot = section.find('.', start);
        const std::string part =
            section.substr(start, dot == std::string::npos ? std::string::npos
                                                           : dot - start);
        if (!is_bare_key(part)) fail(line, "bad section name: " + section);
        if (dot == std::string::npos) break;
        start = dot + 1;
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!is_bare_key(key)) fail(line, "bad key: " + key);
    const std::string full = section.empty() ? key : section + "." + key;
    if (table.count(full)) fail(line, "duplicate key: " + full);
    table[full] = parse_value(trim(s.substr(eq + 1)), line);
  }
  return table;
}

Table load_toml_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw StorageError("cannot open config file: " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_toml(ss.str());
}

void apply_override(Table& table, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value: " + spec);
  const std::string key = trim(spec.substr(0, eq));
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part =
        key.substr(start, dot == std::string::npos ? std::string::npos
                                                   : dot - start);
    if (!is_bare_key(part)) throw ConfigError("bad override key: " + key);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  const std::string raw = trim(spec.substr(eq + 1));
  Value v;
  try {
    v = parse_value(raw, 0);
  } catch (const FormatError&) {
    // Bare words on the command line are strings without the quoting.
    v.kind = Value::Kind::String;
    v.s = raw;
  }
  table[key] = v;
}

namespace {

// Marks keys as consumed so leftovers can be rejected.
class Reader {
 public:
  explicit Reader(const Table& t) : t_(t) {}

  bool has(const std::string& key) {
    const auto it = t_.find(key);
    if (it == t_.end()) return false;
    used_.insert(key);
    return true;
  }

  double num(const std::string& key, double def) {
    const Value* v = find(key);
    if (!v) return def;
    if (v->kind == Value::Kind::Float) return v->f;
    if (v->kind == Value::Kind::Int) return static_cast<double>(v->i);
    throw ConfigError(key + ": expected a number");
  }

  long long integer(const std::string& key, long long def) {
    const Value* v = find(key);
    if (!v) return def;
    if (v->kind != Value::Kind::Int)
      throw ConfigError(key + ": expected an integer");
    return v->i;
  }

  bool boolean(const std::string& key, bool def) {
    const Value* v = find(key);
    if (!v) return def;
    if (v->kind != Value::Kind::Bool)
      throw ConfigError(key + ": expected true or false");
    return v->b;
  }

  std::string str(const std::string& key, const std::string& def) {
    const Value* v = find(key);
    if (!v) return def;
    if (v->kind != Value::Kind::String)
      throw ConfigError(key + ": expected a string");
    return v->s;
  }

  std::vector<int> int_array(const std::string& key,
                             const std::vector<int>& def) {
    const Value* v = find(key);
    if (!v) return def;
    if (v->kind != Value::Kind::Array)
      throw ConfigError(key + ": expected an array");
    std::vector<int> out;
    for (const auto& e : v->array) {
      if (e.kind != Value::Kind::Int)
        throw ConfigError(key + ": expected an array of integers");
      out.push_back(static_cast<int>(e.i));
    }
    return out;
  }

  void finish() const {
    std::string unknown;
    for (const auto& [key, value] : t_) {
      if (used_.count(key)) continue;
      if (!unknown.empty()) unknown += ", ";
      unknown += key;
    }
    if (!unknown.empty())
      throw ConfigError("unknown config keys: " + unknown);
  }

 private:
  const Value* find(const std::string& key) {
    const auto it = t_.find(key);
    if (it == t_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  const Table& t_;
  std::set<std::string> used_;
};

double deg2rad(double d) { return d * kPi / 180.0; }

int int_range(long long v, const char* key, int lo, int hi) {
  if (v < lo || v > hi)
    throw ConfigError(std::string(key) + " out of range");
  return static_cast<int>(v);
}

}  // namespace

RunConfig parse_run_config(const Table& table) {
  RunConfig cfg;
  Reader r(table);

  cfg.seed = r.integer("seed", cfg.seed);
  if (cfg.seed < 0) throw ConfigError("seed must be non-negative");
  cfg.out_dir = r.str("out_dir", cfg.out_dir);

  auto& g = cfg.generator;
  g.berry_count_min =
      int_range(r.integer("scene.berry_count_min", g.berry_count_min),
                "scene.berry_count_min", 1, 1000);
  g.berry_count_max =
      int_range(r.integer("scene.berry_count_max", g.berry_count_max),
                "scene.berry_count_max", 1, 1000);
  g.berry_radius_min = r.num("scene.berry_radius_min", g.berry_radius_min);
  g.berry_radius_max = r.num("scene.berry_radius_max", g.berry_radius_max);
  g.ripe_prob = r.num("scene.ripe_prob", g.ripe_prob);
  g.leaf_count_min =
      int_range(r.integer("scene.leaf_count_min", g.leaf_count_min),
                "scene.leaf_count_min", 0, 1000);
  g.leaf_count_max =
      int_range(r.integer("scene.leaf_count_max", g.leaf_count_max),
                "scene.leaf_count_max", 0, 1000);
  g.leaf_semi_axis_min =
      r.num("scene.leaf_semi_axis_min", g.leaf_semi_axis_min);
  g.leaf_semi_axis_max =
      r.num("scene.leaf_semi_axis_max", g.leaf_semi_axis_max);
  g.plant_radius = r.num("scene.plant_radius", g.plant_radius);
  g.plant_height = r.num("scene.plant_height", g.plant_height);

  cfg.camera.width = int_range(r.integer("camera.width", cfg.camera.width),
                               "camera.width", 1, 4096);
  cfg.camera.height = int_range(r.integer("camera.height", cfg.camera.height),
                                "camera.height", 1, 4096);
  cfg.camera_fov_deg = r.num("camera.fov_deg", cfg.camera_fov_deg);
  if (cfg.camera_fov_deg <= 0.0 || cfg.camera_fov_deg >= 180.0)
    throw ConfigError("camera.fov_deg must be in (0, 180)");
  cfg.camera.fov = deg2rad(cfg.camera_fov_deg);

  cfg.dataset_num_plants =
      int_range(r.integer("dataset.num_plants", cfg.dataset_num_plants),
                "dataset.num_plants", 1, 1000000);
  cfg.dataset_num_views =
      int_range(r.integer("dataset.num_views", cfg.dataset_num_views),
                "dataset.num_views", 1, 1000000);
  cfg.dataset_train_fraction =
      r.num("dataset.train_fraction", cfg.dataset_train_fraction);
  cfg.dataset_workers =
      int_range(r.integer("dataset.workers", cfg.dataset_workers),
                "dataset.workers", 1, 256);
  auto& occ = cfg.occlusion;
  occ.min_fraction = r.num("dataset.min_fraction", occ.min_fraction);
  occ.min_pixels = int_range(
      r.integer("dataset.min_pixels", occ.min_pixels), "dataset.min_pixels",
      0, 1 << 24);
  occ.ripe.hue_lo = r.num("dataset.ripe_hue_lo", occ.ripe.hue_lo);
  occ.ripe.hue_hi = r.num("dataset.ripe_hue_hi", occ.ripe.hue_hi);
  occ.ripe.min_sat = r.num("dataset.ripe_min_sat", occ.ripe.min_sat);
  occ.ripe.min_val = r.num("dataset.ripe_min_val", occ.ripe.min_val);
  occ.unripe.hue_lo = r.num("dataset.unripe_hue_lo", occ.unripe.hue_lo);
  occ.unripe.hue_hi = r.num("dataset.unripe_hue_hi", occ.unripe.hue_hi);
  occ.unripe.min_sat = r.num("dataset.unripe_min_sat", occ.unripe.min_sat);
  occ.unripe.min_val = r.num("dataset.unripe_min_val", occ.unripe.min_val);

  const std::string det = r.str("detector.kind", "oracle");
  if (det == "oracle") {
    cfg.detector_kind = env::DetectorKind::Oracle;
  } else if (det == "grid") {
    cfg.detector_kind = env::DetectorKind::Grid;
  } else {
    throw ConfigError("detector.kind must be oracle or grid");
  }
  cfg.oracle.v_min = r.num("detector.v_min", cfg.oracle.v_min);
  cfg.oracle.alpha = r.num("detector.alpha", cfg.oracle.alpha);
  cfg.oracle.beta = r.num("detector.beta", cfg.oracle.beta);
  cfg.oracle.gamma0 = r.num("detector.gamma0", cfg.oracle.gamma0);
  cfg.oracle.noise_scale =
      r.num("detector.noise_scale", cfg.oracle.noise_scale);
  cfg.oracle.visibility_samples = int_range(
      r.integer("detector.visibility_samples", cfg.oracle.visibility_samples),
      "detector.visibility_samples", 1, 100000);
  cfg.grid.grid_size =
      int_range(r.integer("detector.grid_size", cfg.grid.grid_size),
                "detector.grid_size", 1, 256);
  cfg.grid.cell_threshold =
      r.num("detector.cell_threshold", cfg.grid.cell_threshold);
  cfg.grid_train_epochs =
      int_range(r.integer("detector.train.epochs", cfg.grid_train_epochs),
                "detector.train.epochs", 1, 100000);
  cfg.grid_train_lr = r.num("detector.train.lr", cfg.grid_train_lr);

  const std::string mode = r.str("env.obs_mode", "features");
  if (mode == "features") {
    cfg.obs_mode = env::ObsMode::Features;
  } else if (mode == "pixels") {
    cfg.obs_mode = env::ObsMode::Pixels;
  } else {
    throw ConfigError("env.obs_mode must be features or pixels");
  }
  cfg.workspace.radius =
      r.num("env.hemisphere_radius", cfg.workspace.radius);
  cfg.phi_min_deg = r.num("env.phi_min_deg", cfg.phi_min_deg);
  cfg.phi_max_deg = r.num("env.phi_max_deg", cfg.phi_max_deg);
  cfg.workspace.phi_min = deg2rad(cfg.phi_min_deg);
  cfg.workspace.phi_max = deg2rad(cfg.phi_max_deg);
  cfg.action_limit = r.num("env.action_limit", cfg.action_limit);
  cfg.horizon = int_range(r.integer("env.horizon", cfg.horizon),
                          "env.horizon", 1, 1000000);
  cfg.top_k =
      int_range(r.integer("env.top_k", cfg.top_k), "env.top_k", 1, 64);
  cfg.spawn_theta_deg = r.num("env.spawn_theta_deg", cfg.spawn_theta_deg);
  cfg.spawn_phi_deg = r.num("env.spawn_phi_deg", cfg.spawn_phi_deg);
  cfg.spawn_theta = deg2rad(cfg.spawn_theta_deg);
  cfg.spawn_phi = deg2rad(cfg.spawn_phi_deg);

  cfg.reward.detect_bonus = r.num("reward.detect_bonus", 1.0);
  cfg.reward.invalid_penalty = r.num("reward.invalid_penalty", -1.0);
  cfg.reward.step_penalty = r.num("reward.step_penalty", -0.1);
  cfg.reward.confidence_threshold =
      r.num("reward.confidence_threshold", 0.6);

  cfg.agent.hidden = r.int_array("nets.hidden", cfg.agent.hidden);

  cfg.agent.gamma = r.num("agent.gamma", cfg.agent.gamma);
  cfg.agent.batch_size =
      int_range(r.integer("agent.batch_size", cfg.agent.batch_size),
                "agent.batch_size", 1, 65536);
  cfg.agent.tau = r.num("agent.tau", cfg.agent.tau);
  cfg.agent.actor_lr = r.num("agent.actor_lr", cfg.agent.actor_lr);
  cfg.agent.critic_lr = r.num("agent.critic_lr", cfg.agent.critic_lr);
  cfg.agent.critic_weight_decay =
      r.num("agent.critic_weight_decay", cfg.agent.critic_weight_decay);
  {
    const long long cap = r.integer(
        "agent.replay_capacity",
        static_cast<long long>(cfg.agent.replay_capacity));
    if (cap < 1) throw ConfigError("agent.replay_capacity must be >= 1");
    cfg.agent.replay_capacity = static_cast<std::size_t>(cap);
  }
  cfg.agent.warmup = int_range(r.integer("agent.warmup", cfg.agent.warmup),
                               "agent.warmup", 0, 1 << 30);
  const std::string noise = r.str("agent.noise", "ou");
  if (noise == "ou") {
    cfg.agent.noise_kind = agent::NoiseKind::OrnsteinUhlenbeck;
  } else if (noise == "gaussian") {
    cfg.agent.noise_kind = agent::NoiseKind::Gaussian;
  } else {
    throw ConfigError("agent.noise must be ou or gaussian");
  }
  cfg.agent.ou_theta = r.num("agent.ou_theta", cfg.agent.ou_theta);
  cfg.agent.noise_sigma_scale =
      r.num("agent.noise_sigma_scale", cfg.agent.noise_sigma_scale);
  cfg.agent.literal_target_state = r.boolean(
      "agent.literal_target_state", cfg.agent.literal_target_state);
  cfg.agent.bootstrap_on_timeout = r.boolean(
      "agent.bootstrap_on_timeout", cfg.agent.bootstrap_on_timeout);
  cfg.train_episodes = r.integer("agent.episodes", cfg.train_episodes);
  if (cfg.train_episodes < 0)
    throw ConfigError("agent.episodes must be non-negative");
  const std::string tmode = r.str("agent.mode", "sequential");
  if (tmode == "sequential") {
    cfg.train_mode = runner::TrainMode::Sequential;
  } else if (tmode == "parallel") {
    cfg.train_mode = runner::TrainMode::Parallel;
  } else {
    throw ConfigError("agent.mode must be sequential or parallel");
  }
  cfg.checkpoint_every =
      r.integer("agent.checkpoint_every", cfg.checkpoint_every);

  cfg.phi_star_deg = r.num("policies.phi_star_deg", cfg.phi_star_deg);
  cfg.baselines.phi_star = deg2rad(cfg.phi_star_deg);
  cfg.baselines.detect_threshold =
      r.num("policies.detect_threshold", cfg.baselines.detect_threshold);
  cfg.baselines.gain = r.num("policies.gain", cfg.baselines.gain);
  cfg.baselines.action_limit = cfg.action_limit;
  cfg.baselines.step = r.has("policies.step")
                           ? r.num("policies.step", 0.0)
                           : cfg.action_limit;
  cfg.baselines.k_theta = r.has("policies.k_theta")
                              ? r.num("policies.k_theta", 0.0)
                              : cfg.action_limit;
  cfg.baselines.k_phi = r.has("policies.k_phi")
                            ? r.num("policies.k_phi", 0.0)
                            : cfg.action_limit;

  cfg.evaluation.episodes =
      int_range(r.integer("eval.episodes", cfg.evaluation.episodes),
                "eval.episodes", 1, 1000000);
  {
    const long long off = r.integer(
        "eval.seed_offset",
        static_cast<long long>(cfg.evaluation.seed_offset));
    if (off < 0) throw ConfigError("eval.seed_offset must be non-negative");
    cfg.evaluation.seed_offset = static_cast<std::uint64_t>(off);
  }
  cfg.evaluation.workers =
      int_range(r.integer("eval.workers", cfg.evaluation.workers),
                "eval.workers", 1, 256);
  auto& fx = cfg.evaluation.fixation;
  fx.min_steps = int_range(
      r.integer("eval.fixation_min_steps", fx.min_steps),
      "eval.fixation_min_steps", 2, 1 << 30);
  fx.window = int_range(r.integer("eval.fixation_window", fx.window),
                        "eval.fixation_window", 2, 1 << 30);
  fx.eps_displacement = r.num("eval.fixation_eps", fx.eps_displacement);
  fx.reward_majority = r.num("eval.fixation_majority", fx.reward_majority);
  cfg.evaluation.seed = static_cast<std::uint64_t>(cfg.seed);
  cfg.evaluation.gamma = cfg.agent.gamma;

  r.finish();

  // Cross-checks: assembling the derived configs runs their validators.
  env_config(cfg).validate();
  collect_config(cfg).validate();
  cfg.agent.validate();
  cfg.baselines.validate(cfg.workspace);
  cfg.evaluation.validate();
  return cfg;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  // Bare integers would re-parse as Int, which every numeric reader accepts.
  return s;
}

std::string fmt_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace

std::string resolved_toml(const RunConfig& cfg) {
  std::ostringstream os;
  os << "seed = " << cfg.seed << "\n";
  os << "out_dir = " << fmt_string(cfg.out_dir) << "\n";

  const auto& g = cfg.generator;
  os << "\n[scene]\n";
  os << "berry_count_min = " << g.berry_count_min << "\n";
  os << "berry_count_max = " << g.berry_count_max << "\n";
  os << "berry_radius_min = " << fmt_double(g.berry_radius_min) << "\n";
  os << "berry_radius_max = " << fmt_double(g.berry_radius_max) << "\n";
  os << "ripe_prob = " << fmt_double(g.ripe_prob) << "\n";
  os << "leaf_count_min = " << g.leaf_count_min << "\n";
  os << "leaf_count_max = " << g.leaf_count_max << "\n";
  os << "leaf_semi_axis_min = " << fmt_double(g.leaf_semi_axis_min) << "\n";
  os << "leaf_semi_axis_max = " << fmt_double(g.leaf_semi_axis_max) << "\n";
  os << "plant_radius = " << fmt_double(g.plant_radius) << "\n";
  os << "plant_height = " << fmt_double(g.plant_height) << "\n";

  os << "\n[camera]\n";
  os << "width = " << cfg.camera.width << "\n";
  os << "height = " << cfg.camera.height << "\n";
  os << "fov_deg = " << fmt_double(cfg.camera_fov_deg) << "\n";

  const auto& occ = cfg.occlusion;
  os << "\n[dataset]\n";
  os << "num_plants = " << cfg.dataset_num_plants << "\n";
  os << "num_views = " << cfg.dataset_num_views << "\n";
  os << "train_fraction = " << fmt_double(cfg.dataset_train_fraction) << "\n";
  os << "workers = " << cfg.dataset_workers << "\n";
  os << "min_fraction = " << fmt_double(occ.min_fraction) << "\n";
  os << "min_pixels = " << occ.min_pixels << "\n";
  os << "ripe_hue_lo = " << fmt_double(occ.ripe.hue_lo) << "\n";
  os << "ripe_hue_hi = " << fmt_double(occ.ripe.hue_hi) << "\n";
  os << "ripe_min_sat = " << fmt_double(occ.ripe.min_sat) << "\n";
  os << "ripe_min_val = " << fmt_double(occ.ripe.min_val) << "\n";
  os << "unripe_hue_lo = " << fmt_double(occ.unripe.hue_lo) << "\n";
  os << "unripe_hue_hi = " << fmt_double(occ.unripe.hue_hi) << "\n";
  os << "unripe_min_sat = " << fmt_double(occ.unripe.min_sat) << "\n";
  os << "unripe_min_val = " << fmt_double(occ.unripe.min_val) << "\n";

  os << "\n[detector]\n";
  os << "kind = "
     << (cfg.detector_kind == env::DetectorKind::Oracle ? "\"oracle\""
                                                        : "\"grid\"")
     << "\n";
  os << "v_min = " << fmt_double(cfg.oracle.v_min) << "\n";
  os << "alpha = " << fmt_double(cfg.oracle.alpha) << "\n";
  os << "beta = " << fmt_double(cfg.oracle.beta) << "\n";
  os << "gamma0 = " << fmt_double(cfg.oracle.gamma0) << "\n";
  os << "noise_scale = " << fmt_double(cfg.oracle.noise_scale) << "\n";
  os << "visibility_samples = " << cfg.oracle.visibility_samples << "\n";
  os << "grid_size = " << cfg.grid.grid_size << "\n";
  os << "cell_threshold = " << fmt_double(cfg.grid.cell_threshold) << "\n";

  os << "\n[detector.train]\n";
  os << "epochs = " << cfg.grid_train_epochs << "\n";
  os << "lr = " << fmt_double(cfg.grid_train_lr) << "\n";

  os << "\n[env]\n";
  os << "obs_mode = "
     << (cfg.obs_mode == env::ObsMode::Features ? "\"features\""
                                                : "\"pixels\"")
     << "\n";
  os << "hemisphere_radius = " << fmt_double(cfg.workspace.radius) << "\n";
  os << "phi_min_deg = " << fmt_double(cfg.phi_min_deg) << "\n";
  os << "phi_max_deg = " << fmt_double(cfg.phi_max_deg) << "\n";
  os << "action_limit = " << fmt_double(cfg.action_limit) << "\n";
  os << "horizon = " << cfg.horizon << "\n";
  os << "top_k = " << cfg.top_k << "\n";
  os << "spawn_theta_deg = " << fmt_double(cfg.spawn_theta_deg) << "\n";
  os << "spawn_phi_deg = " << fmt_double(cfg.spawn_phi_deg) << "\n";

  os << "\n[reward]\n";
  os << "detect_bonus = " << fmt_double(cfg.reward.detect_bonus) << "\n";
  os << "invalid_penalty = " << fmt_double(cfg.reward.invalid_penalty)
     << "\n";
  os << "step_penalty = " << fmt_double(cfg.reward.step_penalty) << "\n";
  os << "confidence_threshold = "
     << fmt_double(cfg.reward.confidence_threshold) << "\n";

  os << "\n[nets]\n";
  os << "hidden = [";
  for (std::size_t i = 0; i < cfg.agent.hidden.size(); ++i) {
    if (i) os << ", ";
    os << cfg.agent.hidden[i];
  }
  os << "]\n";

  os << "\n[agent]\n";
  os << "gamma = " << fmt_double(cfg.agent.gamma) << "\n";
  os << "batch_size = " << cfg.agent.batch_size << "\n";
  os << "tau = " << fmt_double(cfg.agent.tau) << "\n";
  os << "actor_lr = " << fmt_double(cfg.agent.actor_lr) << "\n";
  os << "critic_lr = " << fmt_double(cfg.agent.critic_lr) << "\n";
  os << "critic_weight_decay = "
     << fmt_double(cfg.agent.critic_weight_decay) << "\n";
  os << "replay_capacity = " << cfg.agent.replay_capacity << "\n";
  os << "warmup = " << cfg.agent.warmup << "\n";
  os << "noise = "
     << (cfg.agent.noise_kind == agent::NoiseKind::OrnsteinUhlenbeck
             ? "\"ou\""
             : "\"gaussian\"")
     << "\n";
  os << "ou_theta = " << fmt_double(cfg.agent.ou_theta) << "\n";
  os << "noise_sigma_scale = " << fmt_double(cfg.agent.noise_sigma_scale)
     << "\n";
  os << "literal_target_state = "
     << (cfg.agent.literal_target_state ? "true" : "false") << "\n";
  os << "bootstrap_on_timeout = "
     << (cfg.agent.bootstrap_on_timeout ? "true" : "false") << "\n";
  os << "episodes = " << cfg.train_episodes << "\n";
  os << "mode = "
     << (cfg.train_mode == runner::TrainMode::Sequential ? "\"sequential\""
                                                         : "\"parallel\"")
     << "\n";
  os << "checkpoint_every = " << cfg.checkpoint_every << "\n";

  os << "\n[policies]\n";
  os << "phi_star_deg = " << fmt_double(cfg.phi_star_deg) << "\n";
  os << "detect_threshold = " << fmt_double(cfg.baselines.detect_threshold)
     << "\n";
  os << "gain = " << fmt_double(cfg.baselines.gain) << "\n";
  os << "step = " << fmt_double(cfg.baselines.step) << "\n";
  os << "k_theta = " << fmt_double(cfg.baselines.k_theta) << "\n";
  os << "k_phi = " << fmt_double(cfg.baselines.k_phi) << "\n";

  const auto& fx = cfg.evaluation.fixation;
  os << "\n[eval]\n";
  os << "episodes = " << cfg.evaluation.episodes << "\n";
  os << "seed_offset = " << cfg.evaluation.seed_offset << "\n";
  os << "workers = " << cfg.evaluation.workers << "\n";
  os << "fixation_min_steps = " << fx.min_steps << "\n";
  os << "fixation_window = " << fx.window << "\n";
  os << "fixation_eps = " << fmt_double(fx.eps_displacement) << "\n";
  os << "fixation_majority = " << fmt_double(fx.reward_majority) << "\n";
  return os.str();
}

std::filesystem::path resolve_out_dir(const RunConfig& cfg) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  if (const char* env_root = std::getenv("VPOC_OUT"); env_root && *env_root)
    return env_root;
  return "runs";
}

env::EnvConfig env_config(const RunConfig& cfg) {
  env::EnvConfig e;
  e.workspace = cfg.workspace;
  e.generator = cfg.generator;
  e.intrinsics = cfg.camera;
  e.oracle = cfg.oracle;
  e.grid = cfg.grid;
  e.reward = cfg.reward;
  e.obs_mode = cfg.obs_mode;
  e.detector_kind = cfg.detector_kind;
  e.action_limit = cfg.action_limit;
  e.horizon = cfg.horizon;
  e.top_k = cfg.top_k;
  e.spawn_theta = cfg.spawn_theta;
  e.spawn_phi = cfg.spawn_phi;
  return e;
}

dataset::CollectConfig collect_config(const RunConfig& cfg) {
  dataset::CollectConfig c;
  c.num_plants = cfg.dataset_num_plants;
  c.num_views = cfg.dataset_num_views;
  c.seed = static_cast<std::uint64_t>(cfg.seed);
  c.generator = cfg.generator;
  c.intrinsics = cfg.camera;
  c.hemisphere_radius = cfg.workspace.radius;
  c.phi_min = cfg.workspace.phi_min;
  c.phi_max = cfg.workspace.phi_max;
  c.occlusion = cfg.occlusion;
  c.workers = cfg.dataset_workers;
  return c;
}

detector::GridTrainConfig grid_train_config(const RunConfig& cfg) {
  detector::GridTrainConfig t;
  t.epochs = cfg.grid_train_epochs;
  t.lr = cfg.grid_train_lr;
  t.seed = rng::derive(static_cast<std::uint64_t>(cfg.seed), "grid-train");
  return t;
}

}  // namespace vpoc::config
