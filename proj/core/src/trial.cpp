#include "copush/trial.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "copush/error.hpp"
#include "copush/sequence_io.hpp"

namespace copush {

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad JSON: " + e.what());
  }
  ScenarioSpec s;
  s.id = j.at("id").get<std::string>();
  s.mass = j.at("mass").get<double>();
  s.mu_static = j.at("mu_static").get<double>();
  if (j.contains("f_com") && !j.at("f_com").is_null()) s.f_com = j.at("f_com").get<double>();
  s.task_time = j.at("task_time").get<double>();
  s.distance = j.value("distance", 0.30);
  s.participant_scale = j.value("participant_scale", 1.0);
  s.condition = j.value("condition", "dry");
  s.repetitions = j.value("repetitions", 5);
  s.seed = j.value("seed", std::uint64_t{1});
  if (s.mass <= 0.0 || s.mu_static < 0.0 || s.task_time <= 0.0 || s.distance <= 0.0 ||
      s.repetitions < 1) {
    throw ValidationError(path + ": scenario values out of range");
  }
  if (s.condition != "dry" && s.condition != "assisted") {
    throw ValidationError(path + ": condition must be dry or assisted");
  }
  return s;
}

void save_scenario(const std::string& path, const ScenarioSpec& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["mass"] = s.mass;
  j["mu_static"] = s.mu_static;
  if (s.f_com.has_value()) {
    j["f_com"] = *s.f_com;
  } else {
    j["f_com"] = nullptr;
  }
  j["task_time"] = s.task_time;
  j["distance"] = s.distance;
  j["participant_scale"] = s.participant_scale;
  j["condition"] = s.condition;
  j["repetitions"] = s.repetitions;
  j["seed"] = s.seed;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

FrictionModel scenario_friction(const ScenarioSpec& scenario) {
  return FrictionModel::coulomb(scenario.mu_static, scenario.mass);
}

namespace {

std::vector<ActionSegmentSpec> trial_script(const ScenarioSpec& scenario,
                                            const TrialRunConfig& run, Rng& rng) {
  std::vector<ActionSegmentSpec> script;
  ActionSegmentSpec warmup;
  warmup.kind = ActionKind::IdleStand;
  warmup.duration = run.warmup;
  script.push_back(warmup);
  bool pull = true;  // alternate pull/push between the table marks
  for (int k = 0; k < 2 * scenario.repetitions; ++k) {
    ActionSegmentSpec act;
    act.kind = pull ? ActionKind::Pull : ActionKind::Push;
    // the generator spends lead + settle on the preparatory posture; the rest
    // is the timed motion
    const double lead = rng.uniform(0.33, 0.60);
    act.duration = scenario.task_time + lead + 0.15;
    act.distance = scenario.distance;
    script.push_back(act);
    pull = !pull;

    ActionSegmentSpec gap;
    gap.kind = ActionKind::IdleStand;
    gap.duration = rng.uniform(run.idle_gap_min, run.idle_gap_max);
    script.push_back(gap);
  }
  return script;
}

}  // namespace

TrialLog run_trial(const ScenarioSpec& scenario, const AssistConfig& assist,
                   const ModelParams* model, const TrialRunConfig& run) {
  const bool assisted = scenario.condition == "assisted";
  if (assisted && model == nullptr) {
    throw ValidationError("run_trial: assisted condition requires a model checkpoint");
  }
  if (assisted && assist.f_com <= 0.0) {
    throw ValidationError("run_trial: assisted condition requires f_com > 0");
  }

  // synthetic participant motion (skeleton + planned box trajectory)
  Rng script_rng(derive_seed(scenario.seed, 1));
  SynthConfig synth;
  synth.seed = derive_seed(scenario.seed, 2);
  synth.participant_scale = scenario.participant_scale;
  synth.noise_std = run.skeleton_noise_std;
  const auto script = trial_script(scenario, run, script_rng);
  const LabeledSequence seq = generate_sequence(synth, script);

  const DirectedSkeletonGraph graph = build_topology();
  const IncidencePair inc = incidence_matrices(graph);

  SimConfig sim_cfg;
  sim_cfg.dt = run.sim_dt;
  sim_cfg.spring_k = run.spring_k;
  sim_cfg.spring_c = run.spring_c;
  sim_cfg.sensor_noise_std = run.sensor_noise_std;
  sim_cfg.seed = derive_seed(scenario.seed, 3);
  sim_cfg.robot_attached = assisted;  // the robot is excluded in the dry condition
  Simulation sim(sim_cfg, scenario_friction(scenario));

  // per-action proportional-gain variation of the simulated participant
  Rng human_rng(derive_seed(scenario.seed, 4));
  std::vector<double> kp_factors;
  for (std::size_t k = 0; k < seq.plan.phases.size(); ++k) {
    kp_factors.push_back(1.0 + run.human_kp_jitter * human_rng.uniform(-1.0, 1.0));
  }
  const MotionPlan& plan = seq.plan;
  auto active_kp = [&](double t) {
    double kp = run.human_kp;
    for (std::size_t k = 0; k < plan.phases.size(); ++k) {
      if (t >= plan.phases[k].start - 1.0) kp = run.human_kp * kp_factors[k];
    }
    return kp;
  };
  HumanForcePolicy policy;
  policy.target_x = [&plan](double t) { return plan.position(t); };
  policy.target_v = [&plan](double t) { return plan.velocity(t); };
  policy.kd = run.human_kd;
  policy.f_max = run.human_f_max;

  ControlLoop loop(assist);
  const int substeps =
      std::max(1, static_cast<int>(std::lround(kFrameDt / sim_cfg.dt)));

  TrialLog log;
  log.condition = scenario.condition;
  log.scenario_id = scenario.id;
  log.sample_rate = kFrameRate;

  std::vector<SkeletonFrame> window_frames;
  double f_r_prev = 0.0;
  SensorReadings reading;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const double t = seq.frames[i].timestamp;

    int intent_raw = 0;
    int intent_filtered = 0;
    double u = 0.0;
    if (assisted) {
      std::optional<Eigen::Vector3d> logits;
      if (i + 1 >= static_cast<std::size_t>(kWindowLength)) {
        window_frames.assign(seq.frames.begin() + static_cast<std::ptrdiff_t>(i + 1 - kWindowLength),
                             seq.frames.begin() + static_cast<std::ptrdiff_t>(i + 1));
        const FeatureWindow window = make_window(window_frames, graph);
        logits = model_forward(window, *model, inc, RunMode::Eval);
        intent_raw = static_cast<int>(select_class(*logits));
      }
      u = loop.tick(t, logits, f_r_prev, sim.state(), sim_cfg);
      intent_filtered = static_cast<int>(loop.filter().current);
    }
    const double cmd = assisted ? loop.controller().robot_cmd_x : 0.0;

    policy.kp = active_kp(t);
    for (int s = 0; s < substeps; ++s) {
      const double ts = t + static_cast<double>(s) * sim_cfg.dt;
      const double f_h = human_force(policy, sim.state(), ts);
      reading = sim.step(f_h, cmd);
    }
    f_r_prev = reading.f_r.x();

    log.t.push_back(t);
    log.box_x.push_back(reading.box_x);
    log.box_v.push_back(reading.box_v);
    log.f_h_x.push_back(reading.f_h.x());
    log.f_h_norm.push_back(reading.f_h.norm());
    log.f_r_x.push_back(reading.f_r.x());
    log.f_d_x.push_back(assisted ? loop.controller().f_d.x() : 0.0);
    log.u_x.push_back(u);
    log.intent_raw.push_back(intent_raw);
    log.intent_filtered.push_back(intent_filtered);
  }
  return log;
}

void write_trial_csv(const std::string& path, const TrialLog& log) {
  log.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "t,box_x,box_v,f_h_x,f_h_norm,f_r_x,f_d_x,u_x,intent_raw,intent_filtered\n";
  std::string line;
  for (std::size_t i = 0; i < log.size(); ++i) {
    line.clear();
    for (const double v : {log.t[i], log.box_x[i], log.box_v[i], log.f_h_x[i], log.f_h_norm[i],
                           log.f_r_x[i], log.f_d_x[i], log.u_x[i]}) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof(buf), v + 0.0);
      line.append(buf, res.ptr);
      line += ',';
    }
    line += std::to_string(log.intent_raw[i]);
    line += ',';
    line += std::to_string(log.intent_filtered[i]);
    line += '\n';
    out << line;
  }
  if (!out) throw IoError("write failed for " + path);

  nlohmann::ordered_json meta;
  meta["condition"] = log.condition;
  meta["scenario_id"] = log.scenario_id;
  meta["sample_rate"] = log.sample_rate;
  std::ofstream mout(path + ".meta.json", std::ios::binary);
  if (!mout) throw IoError("cannot write " + path + ".meta.json");
  mout << meta.dump(2) << "\n";
}

TrialLog load_trial_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw IoError(path + ": empty trial log");
  if (header != "t,box_x,box_v,f_h_x,f_h_norm,f_r_x,f_d_x,u_x,intent_raw,intent_filtered") {
    throw IoError(path + ": unexpected trial log header");
  }
  TrialLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<double> values;
    while (std::getline(ss, field, ',')) values.push_back(std::stod(field));
    if (values.size() != 10) throw IoError(path + ": malformed row");
    log.t.push_back(values[0]);
    log.box_x.push_back(values[1]);
    log.box_v.push_back(values[2]);
    log.f_h_x.push_back(values[3]);
    log.f_h_norm.push_back(values[4]);
    log.f_r_x.push_back(values[5]);
    log.f_d_x.push_back(values[6]);
    log.u_x.push_back(values[7]);
    log.intent_raw.push_back(static_cast<int>(std::lround(values[8])));
    log.intent_filtered.push_back(static_cast<int>(std::lround(values[9])));
  }

  const std::string meta_path = path + ".meta.json";
  if (file_exists(meta_path)) {
    std::ifstream min(meta_path);
    nlohmann::json meta;
    try {
      min >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw IoError(meta_path + ": bad JSON: " + e.what());
    }
    log.condition = meta.at("condition").get<std::string>();
    log.scenario_id = meta.at("scenario_id").get<std::string>();
    log.sample_rate = meta.value("sample_rate", 100.0);
  } else {
    throw IoError(path + ": missing sidecar " + meta_path);
  }
  log.validate();
  return log;
}

}  // namespace copush
