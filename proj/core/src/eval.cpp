#include "copush/eval.hpp"

#include <algorithm>
#include <cmath>

#include "copush/error.hpp"
#include "copush/motion_synth.hpp"

namespace copush {

void TrialLog::validate() const {
  const std::size_t n = t.size();
  if (n == 0) throw ValidationError("trial log is empty");
  for (const auto* series :
       {&box_x, &box_v, &f_h_x, &f_h_norm, &f_r_x, &f_d_x, &u_x}) {
    if (series->size() != n) throw ValidationError("trial log series lengths differ");
  }
  if (intent_raw.size() != n || intent_filtered.size() != n) {
    throw ValidationError("trial log series lengths differ");
  }
  if (condition != "dry" && condition != "assisted") {
    throw ValidationError("trial log condition must be dry or assisted");
  }
}

TrimmedSeries trim_forces(const TrialLog& log, double threshold) {
  log.validate();
  TrimmedSeries out;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log.f_h_norm[i] >= threshold) {  // threshold inclusive
      out.index.push_back(i);
      out.norm.push_back(log.f_h_norm[i]);
    }
  }
  return out;
}

namespace {

struct Run {
  std::size_t first, last;  // inclusive sample range
  IntentionClass kind;
};

std::vector<Run> velocity_runs(const TrialLog& log, double v_dead) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (std::abs(log.box_v[i]) <= v_dead) continue;
    const IntentionClass kind = log.box_v[i] > 0.0 ? IntentionClass::Pull : IntentionClass::Push;
    if (!runs.empty() && runs.back().kind == kind && runs.back().last + 1 == i) {
      runs.back().last = i;
    } else {
      runs.push_back({i, i, kind});
    }
  }
  // merge same-sign runs across short gaps
  std::vector<Run> merged;
  const double dt = 1.0 / log.sample_rate;
  for (const auto& r : runs) {
    if (!merged.empty() && merged.back().kind == r.kind &&
        (static_cast<double>(r.first) - static_cast<double>(merged.back().last)) * dt < 0.2) {
      merged.back().last = r.last;
    } else {
      merged.push_back(r);
    }
  }
  return merged;
}

}  // namespace

std::vector<ActionRecord> segment_actions(const TrialLog& log, double v_dead,
                                          double trim_threshold) {
  log.validate();
  const auto runs = velocity_runs(log, v_dead);
  const double dt = 1.0 / log.sample_rate;
  const auto extension = static_cast<std::size_t>(std::lround(0.25 * log.sample_rate));

  std::vector<ActionRecord> records;
  for (const auto& run : runs) {
    ActionRecord rec;
    rec.kind = run.kind;
    rec.start_time = log.t[run.first];
    rec.end_time = log.t[run.last];
    const std::size_t lo = run.first > extension ? run.first - extension : 0;
    const std::size_t hi = std::min(run.last + extension, log.size() - 1);

    double sum = 0.0, integral = 0.0, peak = 0.0;
    int retained = 0;
    bool prev_retained = false;
    double prev_norm = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) {
      const bool keep = log.f_h_norm[i] >= trim_threshold;
      if (keep) {
        sum += log.f_h_norm[i];
        peak = std::max(peak, log.f_h_norm[i]);
        ++retained;
        if (prev_retained) integral += 0.5 * (prev_norm + log.f_h_norm[i]) * dt;
      }
      prev_retained = keep;
      prev_norm = log.f_h_norm[i];
    }
    rec.retained_samples = retained;
    rec.mean_force = retained > 0 ? sum / retained : 0.0;
    rec.cumulative_force = integral;
    rec.peak_force = peak;
    records.push_back(rec);
  }
  return records;
}

namespace {

std::pair<double, double> mean_and_sample_std(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

EffortStats effort_stats(const std::vector<ActionRecord>& records) {
  if (records.empty()) throw ValidationError("effort_stats: no action records");
  std::vector<double> means, cumulatives;
  for (const auto& r : records) {
    means.push_back(r.mean_force);
    cumulatives.push_back(r.cumulative_force);
  }
  EffortStats s;
  std::tie(s.mean_of_means, s.mean_std) = mean_and_sample_std(means);
  std::tie(s.cumulative_mean, s.cumulative_std) = mean_and_sample_std(cumulatives);
  s.n_actions = static_cast<int>(records.size());
  return s;
}

LeadTimes lead_time(const TrialLog& log, double force_threshold, double v_dead) {
  log.validate();
  const auto actions = segment_actions(log, v_dead, force_threshold);
  const auto extension = static_cast<std::size_t>(std::lround(0.25 * log.sample_rate));
  const auto lookback = static_cast<std::size_t>(std::lround(3.0 * log.sample_rate));

  LeadTimes out;
  for (const auto& action : actions) {
    const auto start =
        static_cast<std::size_t>(std::lround(action.start_time * log.sample_rate));
    const auto end = static_cast<std::size_t>(std::lround(action.end_time * log.sample_rate));
    const std::size_t lo = start > extension ? start - extension : 0;
    const std::size_t hi = std::min(end + extension, log.size() - 1);

    std::size_t force_idx = log.size();
    for (std::size_t i = lo; i <= hi; ++i) {
      if (log.f_h_norm[i] >= force_threshold) {
        force_idx = i;
        break;
      }
    }
    if (force_idx == log.size()) {
      ++out.skipped;
      continue;
    }
    const std::size_t back = force_idx > lookback ? force_idx - lookback : 0;
    std::size_t intent_idx = log.size();
    for (std::size_t i = back; i <= force_idx; ++i) {
      if (log.intent_filtered[i] == static_cast<int>(action.kind)) {
        intent_idx = i;
        break;
      }
    }
    if (intent_idx == log.size()) {
      ++out.skipped;
      continue;
    }
    out.per_action.push_back(log.t[force_idx] - log.t[intent_idx]);
  }
  if (!out.per_action.empty()) {
    std::tie(out.mean, out.std) = mean_and_sample_std(out.per_action);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Welch's t-test

namespace {

// continued fraction for the incomplete beta function (modified Lentz)
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace

double reg_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw ValidationError("reg_incomplete_beta: a, b must be positive");
  if (x < 0.0 || x > 1.0) throw ValidationError("reg_incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (dof <= 0.0) throw ValidationError("student_t_two_sided_p: dof must be positive");
  return reg_incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

WelchResult welch_t_test(const std::vector<double>& sample_a,
                         const std::vector<double>& sample_b) {
  if (sample_a.size() < 2 || sample_b.size() < 2) {
    throw ValidationError("welch_t_test: each sample needs at least 2 values");
  }
  const auto [ma, sa] = mean_and_sample_std(sample_a);
  const auto [mb, sb] = mean_and_sample_std(sample_b);
  const double na = static_cast<double>(sample_a.size());
  const double nb = static_cast<double>(sample_b.size());
  const double va = sa * sa, vb = sb * sb;
  if (va == 0.0 && vb == 0.0) {
    if (ma == mb) return {0.0, na + nb - 2.0, 1.0};
    throw ValidationError("welch_t_test: both samples degenerate with distinct means");
  }
  const double se2 = va / na + vb / nb;
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(se2);
  r.dof = se2 * se2 /
          ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  r.p = student_t_two_sided_p(r.t, r.dof);
  return r;
}

ClassificationMetrics classification_metrics(const std::vector<int>& predictions,
                                             const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw ValidationError("classification_metrics: length mismatch");
  }
  if (labels.empty()) throw ValidationError("classification_metrics: empty input");
  ClassificationMetrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int truth = class_index(class_from_int(labels[i]));
    const int pred = class_index(class_from_int(predictions[i]));
    ++m.confusion(truth, pred);
  }
  m.accuracy = static_cast<double>(m.confusion.trace()) / static_cast<double>(labels.size());
  double recall_sum = 0.0;
  int included = 0;
  for (int c = 0; c < 3; ++c) {
    const int row_sum = m.confusion.row(c).sum();
    if (row_sum == 0) {
      m.excluded_classes.push_back(c - 1);
      continue;
    }
    recall_sum += static_cast<double>(m.confusion(c, c)) / static_cast<double>(row_sum);
    ++included;
  }
  m.balanced_accuracy = included > 0 ? recall_sum / included : 0.0;
  return m;
}

MetricsReport compare_conditions(const TrialLog& dry, const TrialLog& assisted, double v_dead) {
  dry.validate();
  assisted.validate();
  if (dry.condition != "dry" || assisted.condition != "assisted") {
    throw ValidationError("compare_conditions: expected one dry and one assisted log");
  }
  if (dry.scenario_id != assisted.scenario_id) {
    throw ValidationError("compare_conditions: scenario mismatch: '" + dry.scenario_id +
                          "' vs '" + assisted.scenario_id + "'");
  }
  MetricsReport report;
  report.scenario_id = dry.scenario_id;
  for (const TrialLog* log : {&dry, &assisted}) {
    ConditionSummary s;
    s.condition = log->condition;
    s.actions = segment_actions(*log, v_dead);
    if (s.actions.empty()) {
      report.warnings.push_back("no actions segmented in " + log->condition + " log");
    } else {
      s.effort = effort_stats(s.actions);
    }
    if (log->condition == "assisted") {
      s.leads = lead_time(*log);
      s.has_leads = true;
      const auto truth_labels = label_frames(log->box_v, v_dead);
      std::vector<int> truths(truth_labels.size());
      for (std::size_t i = 0; i < truth_labels.size(); ++i) {
        truths[i] = static_cast<int>(truth_labels[i]);
      }
      s.intention = classification_metrics(log->intent_filtered, truths);
    }
    report.conditions.push_back(std::move(s));
  }
  const auto& dry_actions = report.conditions[0].actions;
  const auto& assisted_actions = report.conditions[1].actions;
  if (dry_actions.size() >= 2 && assisted_actions.size() >= 2) {
    std::vector<double> dry_means, assisted_means, dry_cum, assisted_cum;
    for (const auto& a : dry_actions) {
      dry_means.push_back(a.mean_force);
      dry_cum.push_back(a.cumulative_force);
    }
    for (const auto& a : assisted_actions) {
      assisted_means.push_back(a.mean_force);
      assisted_cum.push_back(a.cumulative_force);
    }
    report.mean_force_test = welch_t_test(dry_means, assisted_means);
    report.cumulative_force_test = welch_t_test(dry_cum, assisted_cum);
    report.has_t_test = true;
  } else {
    report.warnings.push_back("too few actions for a t-test");
  }
  return report;
}

}  // namespace copush
