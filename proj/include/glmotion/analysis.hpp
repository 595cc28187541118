#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "glmotion/training.hpp"

namespace glmotion {

struct AttentionSummary {
  std::size_t blocks = 0;
  std::size_t spatial_heads = 0;
  std::size_t temporal_heads = 0;
  std::size_t tokens = 0;  // P*K
  std::size_t window = 0;
  std::size_t samples = 0;

  // [block][head] -> row-major square map
  std::vector<std::vector<std::vector<double>>> spatial;
  std::vector<std::vector<std::vector<double>>> temporal;
  // Samples that covered each temporal cell (shared by every block/head).
  std::vector<std::size_t> temporal_counts;
  // [block][head]
  std::vector<std::vector<double>> mean_distance;
};

/// Sum_k row[k] |query - k| for one query row.
double row_attended_distance(std::span<const double> row, std::size_t query);

/// Sum_k a[q][k] |q - k| averaged over the query rows of a square map.
double mean_attended_distance(std::span<const double> map, std::size_t frames);

/// Per-cell average of post-softmax maps over the first `n_samples` sequences
/// (manifest order), each cropped to its first `window` frames.
/// Throws DataError for an empty dataset.
AttentionSummary average_attention(const std::vector<RawSequence>& data, const ModelParams& params,
                                   const ModelConfig& model, const RunConfig& run, std::size_t n_samples = 300,
                                   std::size_t window = 30);

/// Cosine similarity between all rows of M [T, PK, D] flattened to (t, j).
/// Zero-norm rows give NaN.
struct PosembSimilarity {
  std::size_t frames = 0;
  std::size_t tokens = 0;
  std::vector<double> values;  // [(T*PK) x (T*PK)]

  double at(std::size_t t1, std::size_t j1, std::size_t t2, std::size_t j2) const {
    return values[(t1 * tokens + j1) * frames * tokens + t2 * tokens + j2];
  }
  /// Similarity of (t, j) against every (t', j'), laid out [T][PK].
  std::vector<double> slice(std::size_t t, std::size_t j) const;
};

PosembSimilarity posemb_similarity(const Tensor& positional);

/// Header row of column indices, then one row per matrix row (NaN as "nan").
void write_csv_matrix(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const double> values);
std::string svg_heatmap(std::size_t rows, std::size_t cols, std::span<const double> values,
                        const std::string& title);

/// One CSV + SVG per block/head plus distances.csv; returns files written.
std::vector<std::filesystem::path> export_attention(const std::filesystem::path& dir, const AttentionSummary& s);
/// One CSV + SVG per requested frame and token slice.
std::vector<std::filesystem::path> export_posemb(const std::filesystem::path& dir, const PosembSimilarity& sim,
                                                 const std::vector<std::size_t>& frames);

}  // namespace glmotion
