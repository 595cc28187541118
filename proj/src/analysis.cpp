#include "glmotion/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace glmotion {

double row_attended_distance(std::span<const double> row, std::size_t query) {
  double d = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) d += row[k] * static_cast<double>(query > k ? query - k : k - query);
  return d;
}

double mean_attended_distance(std::span<const double> map, std::size_t frames) {
  if (frames == 0) return 0.0;
  if (map.size() != frames * frames) throw ShapeError("mean_attended_distance: map is not frames x frames");
  double total = 0.0;
  for (std::size_t q = 0; q < frames; ++q) total += row_attended_distance(map.subspan(q * frames, frames), q);
  return total / static_cast<double>(frames);
}

namespace {

DisentangledSequence crop(DisentangledSequence d, std::size_t frames) {
  if (d.frames <= frames) return d;
  d.frames = frames;
  d.g.resize(frames * d.persons * 3);
  d.r.resize(frames * d.persons * d.joints_local * 3);
  return d;
}

}  // namespace

AttentionSummary average_attention(const std::vector<RawSequence>& data, const ModelParams& params,
                                   const ModelConfig& model, const RunConfig& run, std::size_t n_samples,
                                   std::size_t window) {
  if (data.empty()) throw DataError("average_attention: empty dataset");
  if (window == 0) throw UsageError("average_attention: window must be positive");
  const std::size_t n = std::min(n_samples, data.size());
  if (n == 0) throw DataError("average_attention: no samples requested");

  AttentionSummary s;
  s.blocks = model.blocks;
  s.spatial_heads = model.spatial_heads;
  s.temporal_heads = model.temporal_heads;
  s.tokens = model.tokens();
  s.window = std::min(window, model.t_max);
  s.samples = n;
  const std::size_t PK = s.tokens, W = s.window;
  s.spatial.assign(s.blocks, std::vector<std::vector<double>>(s.spatial_heads, std::vector<double>(PK * PK, 0.0)));
  s.temporal.assign(s.blocks, std::vector<std::vector<double>>(s.temporal_heads, std::vector<double>(W * W, 0.0)));
  s.temporal_counts.assign(W * W, 0);
  s.mean_distance.assign(s.blocks, std::vector<double>(s.temporal_heads, 0.0));

  std::vector<std::vector<double>> dist_sum(s.blocks, std::vector<double>(s.temporal_heads, 0.0));
  std::size_t spatial_frames = 0, query_rows = 0;

  NoGradGuard guard;
  for (std::size_t i = 0; i < n; ++i) {
    DisentangledSequence d = crop(prepare_sequence(data[i], run, model.t_max, nullptr), W);
    const std::size_t T = d.frames;
    std::vector<DisentangledSequence> one{std::move(d)};
    ForwardOutput out = model_forward(pad_and_mask(one, T), params, model, true);

    for (std::size_t q = 0; q < T; ++q)
      for (std::size_t k = 0; k < T; ++k) ++s.temporal_counts[q * W + k];
    spatial_frames += T;
    query_rows += T;

    for (std::size_t b = 0; b < s.blocks; ++b) {
      auto sa = out.spatial_attention[b].data();  // [1, T, h_s, PK, PK]
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < s.spatial_heads; ++h) {
          const double* src = sa.data() + ((t * s.spatial_heads) + h) * PK * PK;
          auto& dst = s.spatial[b][h];
          for (std::size_t c = 0; c < PK * PK; ++c) dst[c] += src[c];
        }
      auto ta = out.temporal_attention[b].data();  // [1, h_t, T, T]
      for (std::size_t h = 0; h < s.temporal_heads; ++h) {
        std::span<const double> map = ta.subspan(h * T * T, T * T);
        auto& dst = s.temporal[b][h];
        for (std::size_t q = 0; q < T; ++q)
          for (std::size_t k = 0; k < T; ++k) dst[q * W + k] += map[q * T + k];
        dist_sum[b][h] += mean_attended_distance(map, T) * static_cast<double>(T);
      }
    }
  }

  for (std::size_t b = 0; b < s.blocks; ++b) {
    for (auto& m : s.spatial[b])
      for (double& v : m) v /= static_cast<double>(spatial_frames);
    for (std::size_t h = 0; h < s.temporal_heads; ++h) {
      auto& m = s.temporal[b][h];
      for (std::size_t c = 0; c < W * W; ++c)
        m[c] = s.temporal_counts[c] ? m[c] / static_cast<double>(s.temporal_counts[c]) : 0.0;
      s.mean_distance[b][h] = dist_sum[b][h] / static_cast<double>(query_rows);
    }
  }
  return s;
}

std::vector<double> PosembSimilarity::slice(std::size_t t, std::size_t j) const {
  if (t >= frames || j >= tokens) throw IndexError("posemb slice out of range");
  const std::size_t n = frames * tokens;
  const std::size_t row = t * tokens + j;
  return {values.begin() + static_cast<std::ptrdiff_t>(row * n),
          values.begin() + static_cast<std::ptrdiff_t>((row + 1) * n)};
}

PosembSimilarity posemb_similarity(const Tensor& positional) {
  if (positional.rank() != 3) throw ShapeError("posemb_similarity: expected [T, PK, D]");
  PosembSimilarity sim;
  sim.frames = positional.shape()[0];
  sim.tokens = positional.shape()[1];
  const std::size_t D = positional.shape()[2];
  const std::size_t n = sim.frames * sim.tokens;
  auto m = positional.data();
  std::vector<double> norm(n);
  for (std::size_t a = 0; a < n; ++a) {
    double sq = 0.0;
    for (std::size_t c = 0; c < D; ++c) sq += m[a * D + c] * m[a * D + c];
    norm[a] = std::sqrt(sq);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  sim.values.assign(n * n, nan);
  for (std::size_t a = 0; a < n; ++a) {
    if (norm[a] == 0.0) continue;
    sim.values[a * n + a] = 1.0;
    for (std::size_t b = a + 1; b < n; ++b) {
      if (norm[b] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < D; ++c) dot += m[a * D + c] * m[b * D + c];
      const double v = dot / (norm[a] * norm[b]);
      sim.values[a * n + b] = v;
      sim.values[b * n + a] = v;
    }
  }
  return sim;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("write failed: " + path.string());
}

}  // namespace

void write_csv_matrix(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const double> values) {
  if (values.size() != rows * cols) throw ShapeError("write_csv_matrix: size mismatch");
  std::string out;
  for (std::size_t c = 0; c < cols; ++c) {
    if (c) out += ',';
    out += std::to_string(c);
  }
  out += '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out += ',';
      out += fmt(values[r * cols + c]);
    }
    out += '\n';
  }
  write_text(path, out);
}

std::string svg_heatmap(std::size_t rows, std::size_t cols, std::span<const double> values,
                        const std::string& title) {
  if (values.size() != rows * cols) throw ShapeError("svg_heatmap: size mismatch");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : values)
    if (!std::isnan(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (lo > hi) lo = hi = 0.0;
  const double span = hi > lo ? hi - lo : 1.0;

  const int cell = static_cast<int>(std::clamp<std::size_t>(480 / std::max<std::size_t>({rows, cols, 1}), 2, 24));
  const int margin = 40;
  const int w = static_cast<int>(cols) * cell + 2 * margin;
  const int h = static_cast<int>(rows) * cell + 2 * margin;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << margin << "\" y=\"16\" font-family=\"monospace\" font-size=\"12\">" << title << "</text>\n";
  o << "<text x=\"" << margin << "\" y=\"" << h - 12 << "\" font-family=\"monospace\" font-size=\"11\">min="
    << fmt(lo) << " max=" << fmt(hi) << "</text>\n";
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = values[r * cols + c];
      std::string fill = "#bbbbbb";
      if (!std::isnan(v)) {
        // white -> dark blue, linear in value
        const double x = (v - lo) / span;
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(255 * (1 - x))),
                      static_cast<int>(std::lround(255 * (1 - 0.8 * x))), static_cast<int>(std::lround(255 - 100 * x)));
        fill = buf;
      }
      o << "<rect x=\"" << margin + static_cast<int>(c) * cell << "\" y=\"" << margin + static_cast<int>(r) * cell
        << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"" << fill << "\"/>\n";
    }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> export_attention(const std::filesystem::path& dir, const AttentionSummary& s) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  auto emit = [&](const std::string& stem, std::size_t n, const std::vector<double>& m) {
    auto csv = dir / (stem + ".csv");
    write_csv_matrix(csv, n, n, m);
    auto svg = dir / (stem + ".svg");
    write_text(svg, svg_heatmap(n, n, m, stem));
    files.push_back(csv);
    files.push_back(svg);
  };
  for (std::size_t b = 0; b < s.blocks; ++b) {
    for (std::size_t h = 0; h < s.spatial_heads; ++h)
      emit("spatial_block" + std::to_string(b + 1) + "_head" + std::to_string(h + 1), s.tokens, s.spatial[b][h]);
    for (std::size_t h = 0; h < s.temporal_heads; ++h)
      emit("temporal_block" + std::to_string(b + 1) + "_head" + std::to_string(h + 1), s.window, s.temporal[b][h]);
  }
  std::string dist = "block,head,mean_distance\n";
  for (std::size_t b = 0; b < s.blocks; ++b)
    for (std::size_t h = 0; h < s.temporal_heads; ++h)
      dist += std::to_string(b + 1) + "," + std::to_string(h + 1) + "," + fmt(s.mean_distance[b][h]) + "\n";
  write_text(dir / "distances.csv", dist);
  files.push_back(dir / "distances.csv");
  return files;
}

std::vector<std::filesystem::path> export_posemb(const std::filesystem::path& dir, const PosembSimilarity& sim,
                                                 const std::vector<std::size_t>& frames) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  for (std::size_t t : frames) {
    if (t >= sim.frames) continue;
    for (std::size_t j = 0; j < sim.tokens; ++j) {
      const std::string stem = "posemb_t" + std::to_string(t) + "_j" + std::to_string(j);
      auto slice = sim.slice(t, j);
      write_csv_matrix(dir / (stem + ".csv"), sim.frames, sim.tokens, slice);
      write_text(dir / (stem + ".svg"), svg_heatmap(sim.frames, sim.tokens, slice, stem));
      files.push_back(dir / (stem + ".csv"));
      files.push_back(dir / (stem + ".svg"));
    }
  }
  return files;
}

}  // namespace glmotion
