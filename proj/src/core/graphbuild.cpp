#include "core/graphbuild.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace stn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

static std::vector<WindowRange> condition_runs(const std::vector<std::string>& condition) {
  std::vector<WindowRange> runs;
  for (int i = 0; i < static_cast<int>(condition.size()); ++i) {
    if (runs.empty() || condition[i] != condition[runs.back().begin])
      runs.push_back({i, i + 1});
    else
      runs.back().end = i + 1;
  }
  return runs;
}

std::vector<WindowRange> window_truncate(int frames, int windows, WindowMode mode,
                                         const std::vector<std::string>& condition) {
  if (windows < 2) throw ConfigError("need at least 2 windows, got " + std::to_string(windows));
  if (frames < 2 * windows)
    throw DataError(std::to_string(frames) + " frames cannot fill " + std::to_string(windows) +
                    " windows of at least 2 frames");

  if (mode != WindowMode::equal) {
    std::vector<WindowRange> runs;
    if (static_cast<int>(condition.size()) == frames) runs = condition_runs(condition);
    if (static_cast<int>(runs.size()) == windows) return runs;
    if (mode == WindowMode::aligned)
      throw DataError("aligned windowing needs exactly " + std::to_string(windows) +
                      " condition blocks, found " + std::to_string(runs.size()));
  }

  std::vector<WindowRange> out(windows);
  int base = frames / windows, rem = frames % windows, at = 0;
  for (int w = 0; w < windows; ++w) {
    int len = base + (w < rem ? 1 : 0);
    out[w] = {at, at + len};
    at += len;
  }
  return out;
}

Mat pearson_window(const Mat& series, int begin, int end, BuildStats* stats) {
  int len = end - begin, n = series.cols;
  if (len < 2)
    throw DataError("correlation window [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") has fewer than 2 frames");
  std::vector<double> mean(n, 0.0), sd(n, 0.0);
  for (int c = 0; c < n; ++c) {
    for (int r = begin; r < end; ++r) mean[c] += series(r, c);
    mean[c] /= len;
    double ssd = 0.0;
    for (int r = begin; r < end; ++r) {
      double d = series(r, c) - mean[c];
      ssd += d * d;
    }
    sd[c] = std::sqrt(ssd);
  }
  std::vector<bool> flat(n);
  for (int c = 0; c < n; ++c) {
    // exact zero-variance suffers rounding on constant nonzero series
    flat[c] = sd[c] < 1e-12 * (std::abs(mean[c]) + 1.0);
    if (flat[c] && stats) ++stats->zero_variance_rois;
  }
  Mat out(n, n);
  for (int a = 0; a < n; ++a) {
    out(a, a) = 1.0;
    for (int b = a + 1; b < n; ++b) {
      double v = 0.0;
      if (!flat[a] && !flat[b]) {
        double dot = 0.0;
        for (int r = begin; r < end; ++r)
          dot += (series(r, a) - mean[a]) * (series(r, b) - mean[b]);
        v = dot / (sd[a] * sd[b]);
      }
      out(a, b) = v;
      out(b, a) = v;
    }
  }
  return out;
}

std::vector<Mat> pearson_features(const Mat& series, const std::vector<WindowRange>& windows,
                                  BuildStats* stats) {
  std::vector<Mat> out;
  out.reserve(windows.size());
  for (const WindowRange& w : windows) out.push_back(pearson_window(series, w.begin, w.end, stats));
  return out;
}

Mat partial_correlation(const Mat& series_subset, double ridge_scale) {
  int frames = series_subset.rows, n = series_subset.cols;
  if (frames < 2) throw DataError("partial correlation needs at least 2 frames");
  Eigen::Map<const RowMat> X(series_subset.a.data(), frames, n);
  Eigen::RowVectorXd mean = X.colwise().mean();
  RowMat centered = X.rowwise() - mean;
  RowMat S = (centered.transpose() * centered) / double(frames - 1);
  double lambda = ridge_scale * S.trace() / n;
  for (int i = 0; i < n; ++i) S(i, i) += lambda;

  Eigen::SelfAdjointEigenSolver<RowMat> eig(S);
  if (eig.info() != Eigen::Success)
    throw NumericError("covariance eigendecomposition failed");
  double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (lo <= 0.0 || hi / lo > 1e12)
    throw NumericError("regularized covariance is numerically singular; increase ridge_scale");
  RowMat omega =
      eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
      eig.eigenvectors().transpose();

  Mat out(n, n);
  for (int a = 0; a < n; ++a) {
    out(a, a) = 1.0;
    for (int b = a + 1; b < n; ++b) {
      double v = -omega(a, b) / std::sqrt(omega(a, a) * omega(b, b));
      out(a, b) = v;
      out(b, a) = v;
    }
  }
  return out;
}

Mat condition_concat(const TimeSeriesInstance& inst, const std::string& keep) {
  if (static_cast<int>(inst.condition.size()) != inst.series.rows)
    throw DataError("instance " + inst.instance_id + " has " +
                    std::to_string(inst.condition.size()) + " condition labels for " +
                    std::to_string(inst.series.rows) + " frames");
  std::vector<int> rows;
  for (int r = 0; r < inst.series.rows; ++r)
    if (keep == "ALL" || inst.condition[r] == keep) rows.push_back(r);
  if (rows.size() < 2)
    throw DataError("instance " + inst.instance_id + " has " + std::to_string(rows.size()) +
                    " frames with condition '" + keep + "', need at least 2");
  Mat out(static_cast<int>(rows.size()), inst.series.cols);
  for (size_t i = 0; i < rows.size(); ++i)
    for (int c = 0; c < inst.series.cols; ++c) out(static_cast<int>(i), c) = inst.series(rows[i], c);
  return out;
}

std::vector<Edge> sparsify_top_fraction(const Mat& m, double fraction, RankMode ranking) {
  int n = m.rows;
  if (m.cols != n) throw ConfigError("connectivity matrix must be square");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("edge fraction must be in (0, 1], got " + std::to_string(fraction));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (std::abs(m(a, b) - m(b, a)) > 1e-9)
        throw DataError("connectivity matrix is not symmetric at (" + std::to_string(a) + ", " +
                        std::to_string(b) + ")");

  std::vector<Edge> pairs;
  pairs.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      double w = ranking == RankMode::absolute ? std::abs(m(a, b)) : m(a, b);
      pairs.push_back({a, b, w});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Edge& x, const Edge& y) {
    if (x.weight != y.weight) return x.weight > y.weight;
    if (x.u != y.u) return x.u < y.u;
    return x.v < y.v;
  });
  size_t keep = static_cast<size_t>(std::floor(fraction * (static_cast<double>(n) * (n - 1) / 2)));
  pairs.resize(keep);
  for (const Edge& e : pairs)
    if (e.weight <= 0.0)
      throw DataError("sparsification kept a nonpositive weight at (" + std::to_string(e.u) +
                      ", " + std::to_string(e.v) + "); lower the fraction or use absolute ranking");
  return pairs;
}

GraphInstance build_graph_instance(const TimeSeriesInstance& ts, const GraphBuildConfig& cfg,
                                   BuildStats* stats) {
  std::vector<WindowRange> windows =
      window_truncate(ts.series.rows, cfg.windows, cfg.window_mode, ts.condition);

  GraphInstance g;
  g.instance_id = ts.instance_id;
  g.subject_id = ts.subject_id;
  g.class_label = ts.class_label;
  g.n_nodes = ts.series.cols;
  g.node_features = pearson_features(ts.series, windows, stats);

  Mat selected = cfg.edge_source == "ALL" ? ts.series : condition_concat(ts, cfg.edge_source);
  Mat conn = partial_correlation(selected, cfg.ridge_scale);
  g.edges = sparsify_top_fraction(conn, cfg.fraction, cfg.ranking);
  return g;
}

}  // namespace stn
