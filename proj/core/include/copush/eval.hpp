#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "copush/skeleton.hpp"

namespace copush {

constexpr double kForceTrimThreshold = 15.0;  // N, inclusive
constexpr double kDefaultVDead = 0.005;       // m/s

// Uniformly sampled closed-loop trial record (100 Hz).
struct TrialLog {
  std::vector<double> t;
  std::vector<double> box_x, box_v;
  std::vector<double> f_h_x, f_h_norm;
  std::vector<double> f_r_x, f_d_x, u_x;
  std::vector<int> intent_raw, intent_filtered;  // -1/0/+1
  std::string condition;    // "dry" | "assisted"
  std::string scenario_id;
  double sample_rate = 100.0;

  std::size_t size() const { return t.size(); }
  void validate() const;
};

// Force-norm series with sub-threshold samples masked out.
struct TrimmedSeries {
  std::vector<std::size_t> index;  // retained sample indices
  std::vector<double> norm;        // retained |f_h|
};

TrimmedSeries trim_forces(const TrialLog& log, double threshold = kForceTrimThreshold);

struct ActionRecord {
  IntentionClass kind = IntentionClass::Idle;  // Pull or Push
  double start_time = 0.0, end_time = 0.0;     // motion interval
  double mean_force = 0.0;        // N, over retained samples in the extended window
  double cumulative_force = 0.0;  // N*s, trapezoid over retained samples
  double peak_force = 0.0;        // N
  int retained_samples = 0;
};

// Contiguous |box_v| > v_dead runs, same-sign runs merged across gaps shorter
// than 0.2 s; force statistics are computed over the run extended by 0.25 s on
// both sides.
std::vector<ActionRecord> segment_actions(const TrialLog& log, double v_dead = kDefaultVDead,
                                          double trim_threshold = kForceTrimThreshold);

struct EffortStats {
  double mean_of_means = 0.0;
  double mean_std = 0.0;
  double cumulative_mean = 0.0;
  double cumulative_std = 0.0;
  int n_actions = 0;
};

EffortStats effort_stats(const std::vector<ActionRecord>& records);

struct LeadTimes {
  std::vector<double> per_action;  // s, positive = prediction led the force
  int skipped = 0;                 // actions without a force crossing or intention match
  double mean = 0.0, std = 0.0;
};

LeadTimes lead_time(const TrialLog& log, double force_threshold = kForceTrimThreshold,
                    double v_dead = kDefaultVDead);

struct WelchResult {
  double t = 0.0;
  double dof = 0.0;
  double p = 1.0;
};

// Two-sample t-test with unequal variances (Welch-Satterthwaite dof,
// two-sided p).
WelchResult welch_t_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double reg_incomplete_beta(double a, double b, double x);

// two-sided p-value of a t statistic
double student_t_two_sided_p(double t, double dof);

struct ClassificationMetrics {
  Eigen::Matrix3i confusion = Eigen::Matrix3i::Zero();  // rows = truth (pull, idle, push)
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;  // mean of per-class recalls
  std::vector<int> excluded_classes;  // class values (-1/0/+1) with no truth samples
};

ClassificationMetrics classification_metrics(const std::vector<int>& predictions,
                                             const std::vector<int>& labels);

struct ConditionSummary {
  std::string condition;
  std::vector<ActionRecord> actions;
  EffortStats effort;
  LeadTimes leads;          // assisted only
  ClassificationMetrics intention;  // filtered intention vs velocity-derived labels
  bool has_leads = false;
};

struct MetricsReport {
  std::string scenario_id;
  std::vector<ConditionSummary> conditions;
  bool has_t_test = false;
  WelchResult mean_force_test;        // dry vs assisted per-action mean force
  WelchResult cumulative_force_test;  // dry vs assisted per-action cumulative force
  std::vector<std::string> warnings;
};

MetricsReport compare_conditions(const TrialLog& dry, const TrialLog& assisted,
                                 double v_dead = kDefaultVDead);

}  // namespace copush
