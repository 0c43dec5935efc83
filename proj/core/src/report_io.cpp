#include "chaosflow/report_io.hpp"

#include "chaosflow/errors.hpp"
#include "chaosflow/hash.hpp"
#include "chaosflow/trajectory.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

namespace chaosflow {

namespace {

using nlohmann::json;

json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

double from_finite_or_null(const json& j) {
    if (j.is_null()) return -std::numeric_limits<double>::infinity();
    return j.get<double>();
}

json metric_to_json(const MetricValue& m) {
    json j;
    if (m.value)
        j["value"] = *m.value;
    else
        j["absent_reason"] = m.absent_reason;
    return j;
}

MetricValue metric_from_json(const json& j) {
    MetricValue m;
    if (j.contains("value"))
        m.value = j.at("value").get<double>();
    else
        m.absent_reason = j.value("absent_reason", std::string("unknown"));
    return m;
}

json config_to_json(const MetricsConfig& c) {
    json j;
    j["embedding"] = {{"dim", c.embedding.dim}, {"lag", c.embedding.lag}};
    j["corr_dim"] = {{"n_points", c.corr_dim.n_points},
                     {"n_radii", c.corr_dim.n_radii},
                     {"fit_window", c.corr_dim.fit_window},
                     {"lo_percentile", c.corr_dim.lo_percentile},
                     {"hi_percentile", c.corr_dim.hi_percentile},
                     {"radii_override", c.corr_dim.radii_override}};
    j["apen"] = {{"radius_factor", c.apen.radius_factor}, {"max_points", c.apen.max_points}};
    j["lyapunov"] = {{"k_min", c.lyapunov.k_min},
                     {"k_max", c.lyapunov.k_max},
                     {"min_separation", c.lyapunov.min_separation}};
    j["histogram_bins"] = c.histogram_bins;
    j["acf_max_lag"] = c.acf_max_lag;
    return j;
}

MetricsConfig config_from_json(const json& j) {
    MetricsConfig c;
    c.embedding.dim = j.at("embedding").at("dim").get<int>();
    c.embedding.lag = j.at("embedding").at("lag").get<int>();
    const auto& cd = j.at("corr_dim");
    c.corr_dim.n_points = cd.at("n_points").get<int>();
    c.corr_dim.n_radii = cd.at("n_radii").get<int>();
    c.corr_dim.fit_window = cd.at("fit_window").get<double>();
    c.corr_dim.lo_percentile = cd.at("lo_percentile").get<double>();
    c.corr_dim.hi_percentile = cd.at("hi_percentile").get<double>();
    c.corr_dim.radii_override = cd.at("radii_override").get<std::vector<double>>();
    c.apen.radius_factor = j.at("apen").at("radius_factor").get<double>();
    c.apen.max_points = j.at("apen").at("max_points").get<int>();
    c.lyapunov.k_min = j.at("lyapunov").at("k_min").get<int>();
    c.lyapunov.k_max = j.at("lyapunov").at("k_max").get<int>();
    c.lyapunov.min_separation = j.at("lyapunov").at("min_separation").get<int>();
    c.histogram_bins = j.at("histogram_bins").get<int>();
    c.acf_max_lag = j.at("acf_max_lag").get<int>();
    return c;
}

} // namespace

std::string report_to_json(const ChaosReport& report) {
    json j;
    j["format"] = "chaosflow-report";
    j["version"] = report.version;
    j["config"] = config_to_json(report.config);
    j["channels"] = report.channel_labels;
    j["source"] = {{"rows", report.source_rows},
                   {"dt", report.source_dt},
                   {"fingerprint", hex64(report.source_fingerprint)}};
    j["metrics"]["correlation_dimension"] = metric_to_json(report.corr_dim);
    j["metrics"]["approximate_entropy"] = metric_to_json(report.approx_entropy);
    j["metrics"]["lyapunov_exponent"] = metric_to_json(report.lyapunov);
    j["metrics"]["lyapunov_exponent"]["min_separation_used"] =
        report.lyap_curve.min_separation_used;

    j["curves"]["corr_dim"] = {{"log_radius", report.corr_dim_curve.log_radius},
                               {"c", report.corr_dim_curve.c_values}};
    json mld = json::array();
    for (double v : report.lyap_curve.mean_log_divergence) mld.push_back(finite_or_null(v));
    j["curves"]["lyapunov"] = {{"mean_log_divergence", mld},
                               {"lambda_index", report.lyap_curve.lambda_index},
                               {"lambda_i", report.lyap_curve.lambda_i}};
    j["acf"] = report.acf;
    json hists = json::array();
    for (const auto& h : report.histograms)
        hists.push_back({{"edges", h.edges}, {"density", h.density}});
    j["histograms"] = hists;
    return j.dump(2);
}

ChaosReport report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError("invalid report JSON: " + std::string(e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != "chaosflow-report")
            throw FormatError("not a chaosflow report");
        ChaosReport report;
        report.version = j.at("version").get<int>();
        if (report.version != 1)
            throw FormatError("unsupported report version " + std::to_string(report.version));
        report.config = config_from_json(j.at("config"));
        report.channel_labels = j.at("channels").get<std::vector<std::string>>();
        report.source_rows = j.at("source").at("rows").get<std::size_t>();
        report.source_dt = j.at("source").at("dt").get<double>();
        report.source_fingerprint = parse_hex64(j.at("source").at("fingerprint").get<std::string>());
        report.corr_dim = metric_from_json(j.at("metrics").at("correlation_dimension"));
        report.approx_entropy = metric_from_json(j.at("metrics").at("approximate_entropy"));
        report.lyapunov = metric_from_json(j.at("metrics").at("lyapunov_exponent"));
        report.lyap_curve.min_separation_used =
            j.at("metrics").at("lyapunov_exponent").value("min_separation_used", 0);
        const auto& cd = j.at("curves").at("corr_dim");
        report.corr_dim_curve.log_radius = cd.at("log_radius").get<std::vector<double>>();
        report.corr_dim_curve.c_values = cd.at("c").get<std::vector<double>>();
        if (report.corr_dim.value) report.corr_dim_curve.dimension = *report.corr_dim.value;
        const auto& ly = j.at("curves").at("lyapunov");
        for (const auto& v : ly.at("mean_log_divergence"))
            report.lyap_curve.mean_log_divergence.push_back(from_finite_or_null(v));
        report.lyap_curve.lambda_index = ly.at("lambda_index").get<std::vector<std::size_t>>();
        report.lyap_curve.lambda_i = ly.at("lambda_i").get<std::vector<double>>();
        if (report.lyapunov.value) report.lyap_curve.exponent = *report.lyapunov.value;
        report.acf = j.at("acf").get<std::vector<std::vector<double>>>();
        for (const auto& h : j.at("histograms")) {
            HistogramResult hist;
            hist.edges = h.at("edges").get<std::vector<double>>();
            hist.density = h.at("density").get<std::vector<double>>();
            report.histograms.push_back(std::move(hist));
        }
        return report;
    } catch (const json::exception& e) {
        throw FormatError("report JSON missing fields: " + std::string(e.what()));
    }
}

void save_report(const ChaosReport& report, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os << report_to_json(report) << '\n';
    if (!os) throw FormatError("write failure on " + path.string());
}

ChaosReport load_report(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw UpstreamMissing("cannot open report: " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return report_from_json(text);
}

std::string comparison_to_json(const ComparisonTable& table) {
    json j;
    j["format"] = "chaosflow-comparison";
    j["version"] = 1;
    json rows = json::array();
    for (const auto& row : table.scalars) {
        json r;
        r["name"] = row.name;
        r["reference"] = row.reference ? json(*row.reference) : json(nullptr);
        r["prediction"] = row.prediction ? json(*row.prediction) : json(nullptr);
        r["rel_error"] = row.rel_error ? json(*row.rel_error) : json(nullptr);
        r["note"] = row.note;
        rows.push_back(std::move(r));
    }
    j["metrics"] = std::move(rows);
    j["acf_max_abs_diff"] = table.acf_max_abs_diff;
    j["histogram_max_abs_diff"] = table.histogram_max_abs_diff;
    return j.dump(2);
}

void write_report_csvs(const ChaosReport& report, const std::filesystem::path& dir,
                       const std::string& tag) {
    auto open = [&](const std::string& name) {
        std::ofstream os(dir / name);
        if (!os) throw FormatError("cannot open for writing: " + (dir / name).string());
        return os;
    };

    {
        auto os = open("acf_" + tag + ".csv");
        os << "lag";
        for (const auto& label : report.channel_labels) os << ',' << label;
        os << '\n';
        std::size_t max_len = 0;
        for (const auto& series : report.acf) max_len = std::max(max_len, series.size());
        for (std::size_t k = 0; k < max_len; ++k) {
            os << k;
            for (const auto& series : report.acf) {
                os << ',';
                if (k < series.size()) os << format_double(series[k]);
            }
            os << '\n';
        }
    }
    {
        auto os = open("hist_" + tag + ".csv");
        os << "channel,bin_lo,bin_hi,density\n";
        for (std::size_t ch = 0; ch < report.histograms.size(); ++ch) {
            const auto& h = report.histograms[ch];
            for (std::size_t b = 0; b < h.density.size(); ++b)
                os << report.channel_labels[ch] << ',' << format_double(h.edges[b]) << ','
                   << format_double(h.edges[b + 1]) << ',' << format_double(h.density[b]) << '\n';
        }
    }
    {
        auto os = open("corrdim_" + tag + ".csv");
        os << "log_radius,c\n";
        for (std::size_t k = 0; k < report.corr_dim_curve.log_radius.size(); ++k)
            os << format_double(report.corr_dim_curve.log_radius[k]) << ','
               << format_double(report.corr_dim_curve.c_values[k]) << '\n';
    }
    {
        auto os = open("lyap_" + tag + ".csv");
        os << "k,t,mean_log_divergence\n";
        for (std::size_t k = 0; k < report.lyap_curve.mean_log_divergence.size(); ++k) {
            const double v = report.lyap_curve.mean_log_divergence[k];
            os << k << ',' << format_double(static_cast<double>(k) * report.source_dt) << ',';
            if (std::isfinite(v)) os << format_double(v);
            os << '\n';
        }
    }
    {
        auto os = open("lambda_" + tag + ".csv");
        os << "index,lambda\n";
        for (std::size_t p = 0; p < report.lyap_curve.lambda_i.size(); ++p)
            os << report.lyap_curve.lambda_index[p] << ','
               << format_double(report.lyap_curve.lambda_i[p]) << '\n';
    }
}

} // namespace chaosflow
