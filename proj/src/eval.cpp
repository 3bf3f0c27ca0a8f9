#include "vpoc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "vpoc/errors.hpp"
#include "vpoc/rng.hpp"
#include "vpoc/svg.hpp"

namespace vpoc::eval {

void FixationConfig::validate() const {
  if (window < 2) throw ConfigError("fixation window must be >= 2");
  if (min_steps < window)
    throw ConfigError("fixation min_steps must be >= window");
  if (eps_displacement <= 0.0)
    throw ConfigError("fixation displacement threshold must be positive");
  if (reward_majority < 0.0 || reward_majority > 1.0)
    throw ConfigError("reward majority must be in [0, 1]");
}

void EvalConfig::validate() const {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in [0, 1)");
  fixation.validate();
}

std::uint64_t eval_plant_seed(const EvalConfig& cfg, int episode) {
  return cfg.seed + cfg.seed_offset + static_cast<std::uint64_t>(episode);
}

std::optional<FixationLabel> classify_fixation(const EpisodeRecord& record,
                                               const FixationConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(record.steps.size());
  if (n <= cfg.min_steps) return std::nullopt;
  const int w = cfg.window;
  const auto* tail = record.steps.data() + (n - w);

  double disp_sum = 0.0;
  for (int i = 0; i + 1 < w; ++i) {
    const auto a = geom::normalized(tail[i].pose.position());
    const auto b = geom::normalized(tail[i + 1].pose.position());
    disp_sum += std::acos(std::clamp(geom::dot(a, b), -1.0, 1.0));
  }
  const double mean_disp = disp_sum / static_cast<double>(w - 1);
  if (mean_disp >= cfg.eps_displacement) return FixationLabel::NoFixation;

  int rewarded = 0;
  for (int i = 0; i < w; ++i)
    if (tail[i].reward > 0.0) ++rewarded;
  const double frac = static_cast<double>(rewarded) / static_cast<double>(w);
  return frac >= cfg.reward_majority ? FixationLabel::HighReturnFixation
                                     : FixationLabel::LowReturnFixation;
}

std::string fixation_name(FixationLabel label) {
  switch (label) {
    case FixationLabel::HighReturnFixation: return "high-return";
    case FixationLabel::LowReturnFixation: return "low-return";
    case FixationLabel::NoFixation: return "none";
  }
  throw ConfigError("unknown fixation label");
}

namespace {

EpisodeRecord run_episode(env::Environment& environment,
                          policies::PolicyRunner& policy,
                          std::uint64_t plant_seed, double gamma) {
  EpisodeRecord rec;
  rec.plant_seed = plant_seed;
  env::Observation obs = environment.reset(plant_seed);
  rec.spawn = environment.pose();
  std::vector<double> rewards;
  while (!environment.done()) {
    const env::Action a = policy(environment.pose(), obs);
    const env::Transition tr = environment.step(a);
    obs = tr.next_obs;
    StepRecord step;
    step.pose = environment.pose();
    step.action = tr.action;
    step.reward = tr.reward;
    step.p_max = tr.p_max;
    rec.steps.push_back(step);
    if (!rec.first_reward_step && tr.reward > 0.0)
      rec.first_reward_step = static_cast<int>(rewards.size());
    rewards.push_back(tr.reward);
  }
  for (double r : rewards) rec.return_undiscounted += r;
  rec.return_discounted = env::discounted_return(rewards, gamma);
  return rec;
}

}  // namespace

std::vector<EpisodeRecord> evaluate(const env::EnvConfig& env_cfg,
                                    const detector::GridParams* grid,
                                    const PolicyFactory& make_policy,
                                    const EvalConfig& cfg) {
  cfg.validate();
  const double gamma = cfg.gamma;
  std::vector<EpisodeRecord> records(
      static_cast<std::size_t>(cfg.episodes));
  const int workers = std::min(cfg.workers, cfg.episodes);

  auto run_stripe = [&](int w) {
    env::Environment environment =
        grid ? env::Environment(env_cfg, *grid) : env::Environment(env_cfg);
    for (int i = w; i < cfg.episodes; i += workers) {
      auto policy = make_policy(
          rng::derive(cfg.seed, "eval-policy",
                      static_cast<std::uint64_t>(i)));
      records[static_cast<std::size_t>(i)] =
          run_episode(environment, policy, eval_plant_seed(cfg, i), gamma);
    }
  };

  if (workers == 1) {
    run_stripe(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(
        static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run_stripe(w);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return records;
}

Summary summarize(const std::string& policy,
                  const std::vector<EpisodeRecord>& records) {
  Summary s;
  s.policy = policy;
  s.n_episodes = static_cast<int>(records.size());
  if (records.empty()) return s;

  double sum_d = 0.0, sum_u = 0.0;
  long long steps_total = 0, steps_rewarded = 0;
  double steps_to_reward_sum = 0.0;
  for (const auto& r : records) {
    sum_d += r.return_discounted;
    sum_u += r.return_undiscounted;
    steps_total += static_cast<long long>(r.steps.size());
    for (const auto& st : r.steps)
      if (st.reward > 0.0) ++steps_rewarded;
    if (r.first_reward_step) {
      ++s.n_rewarded;
      steps_to_reward_sum += *r.first_reward_step + 1;
    }
  }
  const double n = static_cast<double>(records.size());
  s.mean_return = sum_d / n;
  s.mean_return_undiscounted = sum_u / n;
  if (records.size() > 1) {
    double ss = 0.0;
    for (const auto& r : records) {
      const double d = r.return_discounted - s.mean_return;
      ss += d * d;
    }
    s.sd_return = std::sqrt(ss / (n - 1.0));
  }
  if (s.n_rewarded > 0)
    s.mean_steps_to_reward =
        steps_to_reward_sum / static_cast<double>(s.n_rewarded);
  if (steps_total > 0)
    s.reward_rate = static_cast<double>(steps_rewarded) /
                    static_cast<double>(steps_total);
  return s;
}

void write_records_jsonl(const std::filesystem::path& path,
                         const std::string& policy,
                         const std::vector<EpisodeRecord>& records,
                         const FixationConfig& fixation) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StorageError("cannot open for writing: " + path.string());
  for (const auto& r : records) {
    nlohmann::json row;
    row["policy"] = policy;
    row["plant_seed"] = r.plant_seed;
    row["spawn"] = {r.spawn.theta, r.spawn.phi, r.spawn.radius};
    row["return_discounted"] = r.return_discounted;
    row["return_undiscounted"] = r.return_undiscounted;
    if (r.first_reward_step)
      row["first_reward_step"] = *r.first_reward_step;
    else
      row["first_reward_step"] = nullptr;
    const auto label = classify_fixation(r, fixation);
    row["fixation"] = label ? nlohmann::json(fixation_name(*label))
                            : nlohmann::json(nullptr);
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& st : r.steps) {
      steps.push_back({{"theta", st.pose.theta},
                       {"phi", st.pose.phi},
                       {"d_theta", st.action.d_theta},
                       {"d_phi", st.action.d_phi},
                       {"reward", st.reward},
                       {"p_max", st.p_max}});
    }
    row["steps"] = std::move(steps);
    f << row.dump() << "\n";
  }
  if (!f) throw StorageError("short write: " + path.string());
}

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<Summary>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw StorageError("cannot open for writing: " + path.string());
  f << "policy,mean_return,sd_return,mean_steps_to_reward,n_rewarded,"
       "n_episodes\n";
  char buf[256];
  for (const auto& s : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%lld,%d\n",
                  s.policy.c_str(), s.mean_return, s.sd_return,
                  s.mean_steps_to_reward, s.n_rewarded, s.n_episodes);
    f << buf;
  }
  if (!f) throw StorageError("short write: " + path.string());
}

std::vector<Summary> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw StorageError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(f, line) ||
      line.rfind("policy,mean_return,sd_return", 0) != 0)
    throw FormatError("unrecognized summary CSV header");
  std::vector<Summary> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw FormatError("summary CSV row needs 6 fields: " + line);
    Summary s;
    s.policy = fields[0];
    try {
      s.mean_return = std::stod(fields[1]);
      s.sd_return = std::stod(fields[2]);
      s.mean_steps_to_reward = std::stod(fields[3]);
      s.n_rewarded = std::stoll(fields[4]);
      s.n_episodes = std::stoi(fields[5]);
    } catch (const std::exception&) {
      throw FormatError("bad numeric field in summary CSV row: " + line);
    }
    rows.push_back(std::move(s));
  }
  return rows;
}

std::string plot_trajectory(const EpisodeRecord& record,
                            const scene::PlantScene& sc,
                            const env::Workspace& workspace,
                            double plant_radius) {
  const double size = 480.0;
  const double margin = 30.0;
  const double world = workspace.radius * 1.05;
  svg::Doc doc(size, size + 40.0);
  auto X = [&](double wx) {
    return margin + (wx + world) / (2.0 * world) * (size - 2.0 * margin);
  };
  auto Y = [&](double wy) {
    return margin + (world - wy) / (2.0 * world) * (size - 2.0 * margin);
  };
  const double px_per_m = (size - 2.0 * margin) / (2.0 * world);

  doc.circle(X(0), Y(0), workspace.radius * px_per_m, "none", "#888", 1.0);
  doc.circle(X(0), Y(0), plant_radius * px_per_m, "#f2e8dc", "#b8a88f", 1.0);
  for (const auto& b : sc.berries) {
    const bool ripe = b.ripeness == scene::Ripeness::Ripe;
    doc.circle(X(b.center.x), Y(b.center.y),
               std::max(2.0, b.radius * px_per_m),
               ripe ? "#d62728" : "#7fae58");
  }

  std::vector<std::pair<double, double>> path;
  const auto spawn_pos = record.spawn.position();
  path.emplace_back(X(spawn_pos.x), Y(spawn_pos.y));
  for (const auto& st : record.steps) {
    const auto p = st.pose.position();
    path.emplace_back(X(p.x), Y(p.y));
  }
  if (path.size() > 1) doc.polyline(path, "#555", 1.0);

  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    const auto& st = record.steps[i];
    const auto p = st.pose.position();
    if (st.reward < 0.0) {
      doc.circle(X(p.x), Y(p.y), 3.0, "#f5c514", "#a88a00", 0.5);
    } else if (st.reward > 0.0) {
      doc.polygon(svg::star_points(X(p.x), Y(p.y), 4.5), "#1f77b4");
    }
  }

  doc.circle(margin + 6, size + 6, 3.0, "#f5c514", "#a88a00", 0.5);
  doc.text(margin + 14, size + 10, "negative reward", 11);
  doc.polygon(svg::star_points(margin + 136, size + 6, 4.5), "#1f77b4");
  doc.text(margin + 146, size + 10, "detection", 11);

  char meta[160];
  std::snprintf(meta, sizeof(meta),
                "plant %llu  return %.3f  steps %zu",
                static_cast<unsigned long long>(record.plant_seed),
                record.return_discounted, record.steps.size());
  doc.text(margin, size + 28, meta, 11);
  return doc.str();
}

namespace {

int policy_order(const std::string& name) {
  static const char* order[] = {"random",       "random-ba", "downward",
                                "frozen",       "proportional", "ddpg",
                                "hybrid"};
  for (int i = 0; i < 7; ++i)
    if (name == order[i]) return i;
  return 7;
}

void bar_panel(svg::Doc& doc, double x0, double y0, double w, double h,
               const std::vector<Summary>& rows, bool steps_metric,
               const std::string& title) {
  double lo = 0.0, hi = 0.0;
  for (const auto& s : rows) {
    const double se =
        s.n_episodes > 1 ? s.sd_return / std::sqrt(double(s.n_episodes)) : 0.0;
    const double v = steps_metric ? s.mean_steps_to_reward : s.mean_return;
    const double pad = steps_metric ? 0.0 : se;
    lo = std::min(lo, v - pad);
    hi = std::max(hi, v + pad);
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double span = hi - lo;

  auto Y = [&](double v) { return y0 + (hi - v) / span * h; };
  doc.text(x0 + w / 2, y0 - 8, title, 12, "#000", "middle");
  doc.line(x0, Y(0.0), x0 + w, Y(0.0), "#000", 1.0);
  doc.line(x0, y0, x0, y0 + h, "#000", 1.0);
  char lbl[48];
  std::snprintf(lbl, sizeof(lbl), "%.2f", hi);
  doc.text(x0 - 4, Y(hi) + 4, lbl, 10, "#000", "end");
  std::snprintf(lbl, sizeof(lbl), "%.2f", lo);
  doc.text(x0 - 4, Y(lo) + 4, lbl, 10, "#000", "end");

  const double slot = w / static_cast<double>(rows.size());
  const double bar = slot * 0.6;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i];
    const double v = steps_metric ? s.mean_steps_to_reward : s.mean_return;
    const double cx = x0 + slot * (static_cast<double>(i) + 0.5);
    const double top = Y(std::max(v, 0.0));
    const double bot = Y(std::min(v, 0.0));
    doc.rect(cx - bar / 2, top, bar, std::max(1.0, bot - top), "#4c78a8");
    if (!steps_metric && s.n_episodes > 1) {
      const double se = s.sd_return / std::sqrt(double(s.n_episodes));
      doc.line(cx, Y(v - se), cx, Y(v + se), "#000", 1.0);
      doc.line(cx - 4, Y(v - se), cx + 4, Y(v - se), "#000", 1.0);
      doc.line(cx - 4, Y(v + se), cx + 4, Y(v + se), "#000", 1.0);
    }
    doc.text(cx, y0 + h + 14, s.policy, 10, "#000", "middle");
  }
}

}  // namespace

std::string plot_summary(std::vector<Summary> rows) {
  if (rows.empty()) throw ConfigError("no summaries to plot");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Summary& a, const Summary& b) {
                     return policy_order(a.policy) < policy_order(b.policy);
                   });
  const double w = 560.0, panel_h = 180.0;
  svg::Doc doc(w, 2.0 * panel_h + 110.0);
  bar_panel(doc, 60.0, 30.0, w - 90.0, panel_h, rows, false,
            "mean discounted return");
  bar_panel(doc, 60.0, panel_h + 90.0, w - 90.0, panel_h, rows, true,
            "mean steps to first reward");
  return doc.str();
}

}  // namespace vpoc::eval
