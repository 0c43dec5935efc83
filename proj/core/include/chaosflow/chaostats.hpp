#pragma once

#include "chaosflow/trajectory.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace chaosflow {

struct EmbeddingSpec {
    int dim = 1; // m_e
    int lag = 1; // tau, in samples
};

// Delay reconstruction.  Channels are embedded independently and
// concatenated: column ch*dim + j holds x_ch shifted by j*lag, so row i is
// (x_ch(i), x_ch(i+lag), ..., x_ch(i+(dim-1)lag)) for each channel in turn.
struct Embedding {
    EmbeddingSpec spec;
    std::size_t source_len = 0;
    int channels = 0;
    Eigen::MatrixXd points; // N x (channels*dim), N = source_len - (dim-1)*lag
};

Embedding delay_embed(const Eigen::MatrixXd& series, const EmbeddingSpec& spec);
Embedding delay_embed(const Trajectory& traj, const EmbeddingSpec& spec);

// r_k = c_k / c_0 with c_k = (1/T) * sum_t (x_t - mean)(x_{t+k} - mean).
// Returns r_0..r_max_lag.  Throws ConstantSeries when the variance is zero.
std::vector<double> autocorrelation(const Eigen::VectorXd& series, int max_lag);

// First lag k >= 1 with r_k <= 0, searched up to T/2; falls back to
// max(1, T/10) when the ACF stays positive.  Used as the temporal-exclusion
// heuristic for Lyapunov neighbor search.
int first_acf_zero_crossing(const Eigen::VectorXd& series);

struct HistogramResult {
    std::vector<double> edges;   // n_bins + 1
    std::vector<double> density; // n_bins, integrates to 1 over covered samples
};

HistogramResult histogram(const Eigen::VectorXd& series, int n_bins);
HistogramResult histogram(const Eigen::VectorXd& series, int n_bins, double lo, double hi);

struct CorrDimConfig {
    int n_points = 2000; // subsample cap for the O(N^2) pair loop
    int n_radii = 20;
    double fit_window = 0.6;      // central fraction of the log-radius range
    double lo_percentile = 0.1;   // pairwise-distance percentile for R_min
    double hi_percentile = 25.0;  // ... and R_max
    std::vector<double> radii_override; // explicit grid, bypasses percentiles
};

struct CorrDimResult {
    double dimension = 0.0;
    std::vector<double> log_radius;
    std::vector<double> c_values; // correlation integral, fraction of pairs
};

// Grassberger–Procaccia estimate: slope of log C(R) vs log R over the middle
// of the radius range, with infinity-norm distances and strict d < R counts.
CorrDimResult correlation_dimension(const Embedding& emb, const CorrDimConfig& cfg);

struct ApEnConfig {
    double radius_factor = 0.2; // R = factor * mean per-channel std
    int max_points = 2000;
};

// Pincus approximate entropy Phi_m - Phi_{m+1} with normalized template
// counts, d <= R comparisons, self-matches included (log stays finite;
// constant series give exactly zero).
double approximate_entropy(const Eigen::MatrixXd& series, const EmbeddingSpec& spec,
                           const ApEnConfig& cfg);

struct LyapConfig {
    int k_min = 1;
    int k_max = 50;
    int min_separation = 0; // 0 = derive from the mean first ACF zero crossing
};

struct LyapResult {
    double exponent = 0.0; // 1/seconds
    int min_separation_used = 0;
    std::vector<double> mean_log_divergence; // k = 0..k_max
    std::vector<std::size_t> lambda_index;   // points with a valid neighbor
    std::vector<double> lambda_i;            // per-point expansion-rate diagnostic
};

// Rosenstein estimator: Euclidean nearest neighbors under a temporal
// exclusion window, then the least-squares slope of the mean log-divergence
// curve over [k_min, k_max] * dt.
LyapResult lyapunov_exponent(const Embedding& emb, double dt, const LyapConfig& cfg);

// Mean over channels of the first ACF zero crossing, rounded; the pipeline
// resolves auto min_separation once per comparison so both reports share it.
int auto_min_separation(const Trajectory& traj);

struct MetricsConfig {
    EmbeddingSpec embedding;
    CorrDimConfig corr_dim;
    ApEnConfig apen;
    LyapConfig lyapunov;
    int histogram_bins = 50;
    int acf_max_lag = 200;
};

struct MetricValue {
    std::optional<double> value;
    std::string absent_reason; // set when value is absent
};

struct ChaosReport {
    int version = 1;
    MetricsConfig config;
    std::vector<std::string> channel_labels;
    std::size_t source_rows = 0;
    double source_dt = 0.0;
    std::uint64_t source_fingerprint = 0;
    MetricValue corr_dim;
    MetricValue approx_entropy;
    MetricValue lyapunov;
    CorrDimResult corr_dim_curve;            // populated when corr_dim present
    LyapResult lyap_curve;                   // populated when lyapunov present
    std::vector<std::vector<double>> acf;    // per channel; empty on constant channels
    std::vector<HistogramResult> histograms; // per channel
};

// Runs the full metric suite; individual metric failures are recorded as
// absent-with-reason instead of aborting the report.  hist_ranges overrides
// the per-channel histogram range (used to share edges across two reports).
ChaosReport analyze(const Trajectory& traj, const MetricsConfig& config,
                    const std::vector<std::pair<double, double>>* hist_ranges = nullptr);

struct MetricComparison {
    std::string name;
    std::optional<double> reference;
    std::optional<double> prediction;
    std::optional<double> rel_error; // |pred-ref|/|ref| when both present
    std::string note;
};

struct ComparisonTable {
    std::vector<MetricComparison> scalars;
    double acf_max_abs_diff = 0.0;
    double histogram_max_abs_diff = 0.0;
};

// Requires both reports to have been produced with identical configs and
// channel layouts (IncomparableReports otherwise).
ComparisonTable compare_reports(const ChaosReport& ref, const ChaosReport& pred);

} // namespace chaosflow
