#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "safegate/detector.hpp"
#include "safegate/vectorspace.hpp"

namespace safegate {

struct EmbeddingPair {
  std::string id;
  Embedding toxic;
  Embedding nontoxic;
};

struct PairedEmbeddings {
  std::vector<EmbeddingPair> pairs;
  Eigen::Index dim = 0;
};

struct SubspaceFitMeta {
  std::size_t n_pairs = 0;
  int k_components = 0;
  bool include_mean = false;
  std::vector<double> eigenvalues;  // top-k spectrum of the difference covariance
};

/// Orthonormal directions to remove. Immutable after fit.
struct ToxicSubspace {
  SymMatrix basis;  // dim x r, orthonormal columns
  Eigen::Index dim = 0;
  SubspaceFitMeta fit_meta;
};

struct ProjectionConfig {
  int k_components = 2;
  bool include_mean_direction = true;
  int min_pairs = 10;
};

/// Fits the subspace from toxic-minus-nontoxic difference vectors: the
/// normalized mean difference (when enabled) plus the top-k principal
/// components, Gram-Schmidt assembled into one orthonormal basis. With the
/// mean direction captured separately the PCA runs on centered differences;
/// without it the raw second moment is decomposed so the systematic shift
/// stays visible to the PCA.
ToxicSubspace fit_subspace(const PairedEmbeddings& data,
                           const ProjectionConfig& config);

/// Orthogonal projection onto the complement of the subspace.
Embedding project(const Embedding& e, const ToxicSubspace& s);

struct SafeMatch {
  std::string id;
  std::string text;
  double similarity;
};

/// Pool entry most similar to the projected embedding (ties: lowest index).
/// A zero-norm projection means the content lived entirely inside the removed
/// subspace; callers fall back to a configured refusal text.
SafeMatch nearest_safe_response(const Embedding& projected,
                                const ExampleLibrary& pool);

void save_subspace(const ToxicSubspace& s, const std::filesystem::path& path);
ToxicSubspace load_subspace(const std::filesystem::path& path);

PairedEmbeddings read_paired_embeddings_jsonl(const std::filesystem::path& path);

}  // namespace safegate
