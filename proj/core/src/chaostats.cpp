#include "chaosflow/chaostats.hpp"

#include "chaosflow/errors.hpp"
#include "chaosflow/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace chaosflow {

namespace {

// Indices 0, stride, 2*stride, ... with stride = ceil(N/cap).
std::vector<Eigen::Index> subsample_indices(Eigen::Index n, int cap) {
    std::vector<Eigen::Index> idx;
    if (cap < 1) throw BadInputShape("subsample cap must be >= 1");
    const Eigen::Index stride =
        n <= cap ? 1 : (n + static_cast<Eigen::Index>(cap) - 1) / static_cast<Eigen::Index>(cap);
    for (Eigen::Index i = 0; i < n; i += stride) idx.push_back(i);
    return idx;
}

double linf_distance(const Eigen::MatrixXd& points, Eigen::Index a, Eigen::Index b) {
    return (points.row(a) - points.row(b)).cwiseAbs().maxCoeff();
}

double ols_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw DegenerateGeometry("least-squares fit over a single abscissa");
    return sxy / sxx;
}

double population_std(const Eigen::VectorXd& x) {
    const double mean = x.mean();
    return std::sqrt((x.array() - mean).square().mean());
}

} // namespace

Embedding delay_embed(const Eigen::MatrixXd& series, const EmbeddingSpec& spec) {
    if (spec.dim < 1 || spec.lag < 1)
        throw BadInputShape("embedding dim and lag must be >= 1");
    const Eigen::Index t = series.rows();
    const Eigen::Index c = series.cols();
    const Eigen::Index n = t - static_cast<Eigen::Index>(spec.dim - 1) * spec.lag;
    if (n < 1)
        throw InsufficientData("delay_embed",
                               static_cast<std::size_t>((spec.dim - 1) * spec.lag + 1),
                               static_cast<std::size_t>(t));
    Embedding emb;
    emb.spec = spec;
    emb.source_len = static_cast<std::size_t>(t);
    emb.channels = static_cast<int>(c);
    emb.points.resize(n, c * spec.dim);
    for (Eigen::Index ch = 0; ch < c; ++ch)
        for (int j = 0; j < spec.dim; ++j)
            emb.points.col(ch * spec.dim + j) =
                series.col(ch).segment(static_cast<Eigen::Index>(j) * spec.lag, n);
    return emb;
}

Embedding delay_embed(const Trajectory& traj, const EmbeddingSpec& spec) {
    return delay_embed(traj.states, spec);
}

std::vector<double> autocorrelation(const Eigen::VectorXd& series, int max_lag) {
    const Eigen::Index t = series.size();
    if (max_lag < 0) throw BadInputShape("autocorrelation: max_lag must be >= 0");
    if (t <= max_lag)
        throw InsufficientData("autocorrelation", static_cast<std::size_t>(max_lag) + 1,
                               static_cast<std::size_t>(t));
    const double mean = series.mean();
    std::vector<double> r(static_cast<std::size_t>(max_lag) + 1);
    double c0 = 0.0;
    for (Eigen::Index i = 0; i < t; ++i) c0 += (series[i] - mean) * (series[i] - mean);
    c0 /= static_cast<double>(t);
    if (c0 == 0.0) throw ConstantSeries("autocorrelation");
    r[0] = 1.0;
    for (int k = 1; k <= max_lag; ++k) {
        double ck = 0.0;
        for (Eigen::Index i = 0; i + k < t; ++i)
            ck += (series[i] - mean) * (series[i + k] - mean);
        ck /= static_cast<double>(t);
        r[static_cast<std::size_t>(k)] = ck / c0;
    }
    return r;
}

int first_acf_zero_crossing(const Eigen::VectorXd& series) {
    const Eigen::Index t = series.size();
    if (t < 2) throw InsufficientData("first_acf_zero_crossing", 2, static_cast<std::size_t>(t));
    const double mean = series.mean();
    double c0 = 0.0;
    for (Eigen::Index i = 0; i < t; ++i) c0 += (series[i] - mean) * (series[i] - mean);
    if (c0 == 0.0) throw ConstantSeries("first_acf_zero_crossing");
    for (Eigen::Index k = 1; k < t / 2; ++k) {
        double ck = 0.0;
        for (Eigen::Index i = 0; i + k < t; ++i)
            ck += (series[i] - mean) * (series[i + k] - mean);
        if (ck <= 0.0) return static_cast<int>(k);
    }
    return static_cast<int>(std::max<Eigen::Index>(1, t / 10));
}

HistogramResult histogram(const Eigen::VectorXd& series, int n_bins) {
    if (series.size() < 1) throw BadInputShape("histogram: empty series");
    return histogram(series, n_bins, series.minCoeff(), series.maxCoeff());
}

HistogramResult histogram(const Eigen::VectorXd& series, int n_bins, double lo, double hi) {
    if (n_bins < 1) throw BadInputShape("histogram: n_bins must be >= 1");
    if (series.size() < 1) throw BadInputShape("histogram: empty series");
    if (lo > hi) throw BadInputShape("histogram: lo > hi");
    if (lo == hi) { // degenerate range: center a unit-wide window on the value
        lo -= 0.5;
        hi += 0.5;
    }
    HistogramResult result;
    result.edges.resize(static_cast<std::size_t>(n_bins) + 1);
    const double width = (hi - lo) / n_bins;
    for (int b = 0; b <= n_bins; ++b)
        result.edges[static_cast<std::size_t>(b)] = lo + width * b;
    result.edges.back() = hi;

    std::vector<std::size_t> counts(static_cast<std::size_t>(n_bins), 0);
    for (Eigen::Index i = 0; i < series.size(); ++i) {
        const double v = series[i];
        if (v < lo || v > hi) continue;
        auto b = static_cast<Eigen::Index>((v - lo) / width);
        if (b >= n_bins) b = n_bins - 1; // right edge closes the last bin
        ++counts[static_cast<std::size_t>(b)];
    }
    result.density.resize(static_cast<std::size_t>(n_bins));
    const double denom = static_cast<double>(series.size()) * width;
    for (int b = 0; b < n_bins; ++b)
        result.density[static_cast<std::size_t>(b)] = static_cast<double>(counts[static_cast<std::size_t>(b)]) / denom;
    return result;
}

CorrDimResult correlation_dimension(const Embedding& emb, const CorrDimConfig& cfg) {
    if (cfg.n_points < 100) throw BadInputShape("corr_dim: n_points must be >= 100");
    if (cfg.radii_override.empty() && cfg.n_radii < 10)
        throw BadInputShape("corr_dim: n_radii must be >= 10");
    if (!(cfg.fit_window > 0.0 && cfg.fit_window <= 1.0))
        throw BadInputShape("corr_dim: fit_window must be in (0, 1]");

    const auto idx = subsample_indices(emb.points.rows(), cfg.n_points);
    const std::size_t n = idx.size();
    if (n < 2) throw InsufficientData("correlation_dimension", 2, n);

    // All unordered pair distances, laid out by increasing i then j.
    const std::size_t n_pairs = n * (n - 1) / 2;
    std::vector<std::size_t> offset(n, 0);
    for (std::size_t i = 1; i < n; ++i) offset[i] = offset[i - 1] + (n - i);
    std::vector<double> dist(n_pairs);
    parallel_for(0, n, [&](std::size_t lo_i, std::size_t hi_i) {
        for (std::size_t i = lo_i; i < hi_i; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                dist[offset[i] + (j - i - 1)] =
                    linf_distance(emb.points, idx[i], idx[j]);
    });
    std::sort(dist.begin(), dist.end());
    if (dist.back() <= 0.0) throw DegenerateGeometry("all embedded points identical");

    std::vector<double> radii;
    if (!cfg.radii_override.empty()) {
        radii = cfg.radii_override;
        if (!std::is_sorted(radii.begin(), radii.end()))
            throw BadInputShape("corr_dim: radii_override must be ascending");
        for (double r : radii)
            if (!(r > 0.0)) throw BadInputShape("corr_dim: radii must be positive");
    } else {
        auto pct = [&](double q) {
            const auto pos = static_cast<std::size_t>(
                std::llround(q / 100.0 * static_cast<double>(n_pairs - 1)));
            return dist[std::min(pos, n_pairs - 1)];
        };
        const double first_positive = *std::upper_bound(dist.begin(), dist.end(), 0.0);
        const double r_lo = std::max(pct(cfg.lo_percentile), first_positive);
        const double r_hi = pct(cfg.hi_percentile);
        if (!(r_hi > r_lo)) throw DegenerateGeometry("correlation radius range is empty");
        const double log_lo = std::log(r_lo);
        const double log_hi = std::log(r_hi);
        radii.resize(static_cast<std::size_t>(cfg.n_radii));
        for (int k = 0; k < cfg.n_radii; ++k)
            radii[static_cast<std::size_t>(k)] =
                std::exp(log_lo + (log_hi - log_lo) * k / (cfg.n_radii - 1));
    }

    CorrDimResult result;
    result.log_radius.reserve(radii.size());
    result.c_values.reserve(radii.size());
    for (double r : radii) {
        const auto count = static_cast<std::size_t>(
            std::lower_bound(dist.begin(), dist.end(), r) - dist.begin());
        result.log_radius.push_back(std::log(r));
        result.c_values.push_back(static_cast<double>(count) / static_cast<double>(n_pairs));
    }

    const double span = result.log_radius.back() - result.log_radius.front();
    const double margin = (1.0 - cfg.fit_window) / 2.0 * span;
    const double fit_lo = result.log_radius.front() + margin - 1e-12;
    const double fit_hi = result.log_radius.back() - margin + 1e-12;
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        if (result.log_radius[k] < fit_lo || result.log_radius[k] > fit_hi) continue;
        if (result.c_values[k] <= 0.0) continue;
        xs.push_back(result.log_radius[k]);
        ys.push_back(std::log(result.c_values[k]));
    }
    if (xs.size() < 2)
        throw DegenerateGeometry("correlation fit window has fewer than two usable radii");
    result.dimension = ols_slope(xs, ys);
    return result;
}

double approximate_entropy(const Eigen::MatrixXd& series, const EmbeddingSpec& spec,
                           const ApEnConfig& cfg) {
    if (cfg.max_points < 1) throw BadInputShape("apen: max_points must be >= 1");
    if (!(cfg.radius_factor > 0.0)) throw BadInputShape("apen: radius_factor must be > 0");
    double std_sum = 0.0;
    for (Eigen::Index ch = 0; ch < series.cols(); ++ch)
        std_sum += population_std(series.col(ch));
    const double radius = cfg.radius_factor * std_sum / static_cast<double>(series.cols());

    auto phi = [&](int dim) {
        EmbeddingSpec s{dim, spec.lag};
        const Embedding emb = delay_embed(series, s);
        const auto idx = subsample_indices(emb.points.rows(), cfg.max_points);
        const std::size_t n = idx.size();
        std::vector<double> log_c(n);
        parallel_for(0, n, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                std::size_t count = 0;
                for (std::size_t j = 0; j < n; ++j)
                    if (linf_distance(emb.points, idx[i], idx[j]) <= radius) ++count;
                log_c[i] = std::log(static_cast<double>(count) / static_cast<double>(n));
            }
        });
        return std::accumulate(log_c.begin(), log_c.end(), 0.0) / static_cast<double>(n);
    };
    return phi(spec.dim) - phi(spec.dim + 1);
}

LyapResult lyapunov_exponent(const Embedding& emb, double dt, const LyapConfig& cfg) {
    if (cfg.k_min < 1 || cfg.k_min > cfg.k_max)
        throw BadInputShape("lyapunov: need 1 <= k_min <= k_max");
    if (!(dt > 0.0)) throw BadInputShape("lyapunov: dt must be > 0");

    const Eigen::Index n = emb.points.rows();
    const Eigen::Index usable = n - cfg.k_max;
    if (usable < 2)
        throw InsufficientData("lyapunov_exponent", static_cast<std::size_t>(cfg.k_max) + 2,
                               static_cast<std::size_t>(n));

    int min_sep = cfg.min_separation;
    if (min_sep <= 0) {
        // Mean first ACF zero crossing over the undelayed column of each
        // channel block of the embedding.
        double sum = 0.0;
        for (int ch = 0; ch < emb.channels; ++ch)
            sum += first_acf_zero_crossing(emb.points.col(static_cast<Eigen::Index>(ch) * emb.spec.dim));
        min_sep = std::max(1, static_cast<int>(std::llround(sum / emb.channels)));
    }

    std::vector<Eigen::Index> neighbor(static_cast<std::size_t>(usable), -1);
    parallel_for(0, static_cast<std::size_t>(usable), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t ui = lo; ui < hi; ++ui) {
            const auto i = static_cast<Eigen::Index>(ui);
            double best = std::numeric_limits<double>::infinity();
            Eigen::Index best_j = -1;
            for (Eigen::Index j = 0; j < usable; ++j) {
                if (std::abs(j - i) < min_sep) continue;
                const double d2 = (emb.points.row(j) - emb.points.row(i)).squaredNorm();
                if (d2 < best) {
                    best = d2;
                    best_j = j;
                }
            }
            if (best_j >= 0 && best > 0.0) neighbor[ui] = best_j;
        }
    });

    LyapResult result;
    result.min_separation_used = min_sep;
    std::vector<Eigen::Index> ii, jj;
    for (Eigen::Index i = 0; i < usable; ++i)
        if (neighbor[static_cast<std::size_t>(i)] >= 0) {
            ii.push_back(i);
            jj.push_back(neighbor[static_cast<std::size_t>(i)]);
        }
    if (ii.empty())
        throw NoNeighborPairs("no neighbor pairs satisfy the temporal separation of " +
                              std::to_string(min_sep) + " samples");

    result.mean_log_divergence.resize(static_cast<std::size_t>(cfg.k_max) + 1);
    for (int k = 0; k <= cfg.k_max; ++k) {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t p = 0; p < ii.size(); ++p) {
            const double d = (emb.points.row(ii[p] + k) - emb.points.row(jj[p] + k)).norm();
            if (d > 0.0) {
                sum += std::log(d);
                ++cnt;
            }
        }
        result.mean_log_divergence[static_cast<std::size_t>(k)] =
            cnt > 0 ? sum / static_cast<double>(cnt)
                    : -std::numeric_limits<double>::infinity();
    }

    std::vector<double> xs, ys;
    for (int k = cfg.k_min; k <= cfg.k_max; ++k) {
        const double y = result.mean_log_divergence[static_cast<std::size_t>(k)];
        if (!std::isfinite(y)) continue;
        xs.push_back(k * dt);
        ys.push_back(y);
    }
    if (xs.size() < 2) throw NoNeighborPairs("divergence curve has fewer than two finite points");
    result.exponent = ols_slope(xs, ys);

    // Per-point expansion rate over the same window, a plot-ready diagnostic.
    const double norm = 1.0 / ((cfg.k_max - cfg.k_min + 1) * dt);
    for (std::size_t p = 0; p < ii.size(); ++p) {
        const double d0 = (emb.points.row(ii[p]) - emb.points.row(jj[p])).norm();
        double acc = 0.0;
        for (int k = cfg.k_min; k <= cfg.k_max; ++k) {
            const double dk = (emb.points.row(ii[p] + k) - emb.points.row(jj[p] + k)).norm();
            if (dk > 0.0) acc += std::log(dk / d0) / k;
        }
        result.lambda_index.push_back(static_cast<std::size_t>(ii[p]));
        result.lambda_i.push_back(norm * acc);
    }
    return result;
}

int auto_min_separation(const Trajectory& traj) {
    double sum = 0.0;
    for (Eigen::Index ch = 0; ch < traj.dim(); ++ch)
        sum += first_acf_zero_crossing(traj.states.col(ch));
    return std::max(1, static_cast<int>(std::llround(sum / static_cast<double>(traj.dim()))));
}

ChaosReport analyze(const Trajectory& traj, const MetricsConfig& config,
                    const std::vector<std::pair<double, double>>* hist_ranges) {
    validate(traj);
    if (hist_ranges && hist_ranges->size() != static_cast<std::size_t>(traj.dim()))
        throw BadInputShape("analyze: hist_ranges size must match channel count");

    ChaosReport report;
    report.config = config;
    report.channel_labels = traj.labels;
    report.source_rows = static_cast<std::size_t>(traj.rows());
    report.source_dt = traj.dt;
    report.source_fingerprint = trajectory_fingerprint(traj);

    for (Eigen::Index ch = 0; ch < traj.dim(); ++ch) {
        const int max_lag =
            std::min<int>(config.acf_max_lag, static_cast<int>(traj.rows()) - 1);
        try {
            report.acf.push_back(autocorrelation(traj.states.col(ch), max_lag));
        } catch (const Error&) {
            report.acf.emplace_back(); // constant channel: no ACF
        }
        if (hist_ranges)
            report.histograms.push_back(histogram(traj.states.col(ch), config.histogram_bins,
                                                  (*hist_ranges)[static_cast<std::size_t>(ch)].first,
                                                  (*hist_ranges)[static_cast<std::size_t>(ch)].second));
        else
            report.histograms.push_back(histogram(traj.states.col(ch), config.histogram_bins));
    }

    std::optional<Embedding> emb;
    try {
        emb = delay_embed(traj, config.embedding);
    } catch (const Error& e) {
        const std::string reason = std::string("embedding failed: ") + e.what();
        report.corr_dim.absent_reason = reason;
        report.lyapunov.absent_reason = reason;
    }

    if (emb) {
        try {
            report.corr_dim_curve = correlation_dimension(*emb, config.corr_dim);
            report.corr_dim.value = report.corr_dim_curve.dimension;
        } catch (const Error& e) {
            report.corr_dim.absent_reason = e.what();
        }
        try {
            report.lyap_curve = lyapunov_exponent(*emb, traj.dt, config.lyapunov);
            report.lyapunov.value = report.lyap_curve.exponent;
        } catch (const Error& e) {
            report.lyapunov.absent_reason = e.what();
        }
    }
    try {
        report.approx_entropy.value =
            approximate_entropy(traj.states, config.embedding, config.apen);
    } catch (const Error& e) {
        report.approx_entropy.absent_reason = e.what();
    }
    return report;
}

namespace {

bool same_config(const MetricsConfig& a, const MetricsConfig& b) {
    return a.embedding.dim == b.embedding.dim && a.embedding.lag == b.embedding.lag &&
           a.corr_dim.n_points == b.corr_dim.n_points &&
           a.corr_dim.n_radii == b.corr_dim.n_radii &&
           a.corr_dim.fit_window == b.corr_dim.fit_window &&
           a.corr_dim.lo_percentile == b.corr_dim.lo_percentile &&
           a.corr_dim.hi_percentile == b.corr_dim.hi_percentile &&
           a.corr_dim.radii_override == b.corr_dim.radii_override &&
           a.apen.radius_factor == b.apen.radius_factor &&
           a.apen.max_points == b.apen.max_points && a.lyapunov.k_min == b.lyapunov.k_min &&
           a.lyapunov.k_max == b.lyapunov.k_max &&
           a.lyapunov.min_separation == b.lyapunov.min_separation &&
           a.histogram_bins == b.histogram_bins && a.acf_max_lag == b.acf_max_lag;
}

void compare_scalar(ComparisonTable& table, const std::string& name, const MetricValue& ref,
                    const MetricValue& pred) {
    MetricComparison row;
    row.name = name;
    row.reference = ref.value;
    row.prediction = pred.value;
    if (!ref.value)
        row.note = "reference absent: " + ref.absent_reason;
    else if (!pred.value)
        row.note = "prediction absent: " + pred.absent_reason;
    else if (*ref.value == 0.0)
        row.note = "reference is zero; relative error undefined";
    else
        row.rel_error = std::abs(*pred.value - *ref.value) / std::abs(*ref.value);
    table.scalars.push_back(std::move(row));
}

} // namespace

ComparisonTable compare_reports(const ChaosReport& ref, const ChaosReport& pred) {
    if (!same_config(ref.config, pred.config))
        throw IncomparableReports("reports were produced with different metric configs");
    if (ref.channel_labels != pred.channel_labels)
        throw IncomparableReports("reports cover different channels");
    if (ref.acf.size() != pred.acf.size() || ref.histograms.size() != pred.histograms.size())
        throw IncomparableReports("reports have different per-channel series counts");

    ComparisonTable table;
    compare_scalar(table, "correlation_dimension", ref.corr_dim, pred.corr_dim);
    compare_scalar(table, "approximate_entropy", ref.approx_entropy, pred.approx_entropy);
    compare_scalar(table, "lyapunov_exponent", ref.lyapunov, pred.lyapunov);

    for (std::size_t ch = 0; ch < ref.acf.size(); ++ch) {
        if (ref.acf[ch].size() != pred.acf[ch].size())
            throw IncomparableReports("ACF lag counts differ on channel " + std::to_string(ch));
        for (std::size_t k = 0; k < ref.acf[ch].size(); ++k)
            table.acf_max_abs_diff =
                std::max(table.acf_max_abs_diff, std::abs(ref.acf[ch][k] - pred.acf[ch][k]));
    }
    for (std::size_t ch = 0; ch < ref.histograms.size(); ++ch) {
        if (ref.histograms[ch].edges != pred.histograms[ch].edges)
            throw IncomparableReports("histogram edges differ on channel " + std::to_string(ch) +
                                      " (reports must share ranges)");
        for (std::size_t b = 0; b < ref.histograms[ch].density.size(); ++b)
            table.histogram_max_abs_diff =
                std::max(table.histogram_max_abs_diff,
                         std::abs(ref.histograms[ch].density[b] - pred.histograms[ch].density[b]));
    }
    return table;
}

} // namespace chaosflow
