#include "safegate/profs.hpp"

#include <unordered_set>

#include "safegate/jsonl.hpp"

namespace safegate {

namespace {

// Eigenvalues this far below the leading one are numerical noise, not toxic
// spread.
constexpr double kEigenvalueFloor = 1e-10;
constexpr double kResidualFloor = 1e-8;

// Residual of u against the collected basis columns. Subtracting twice keeps
// the assembled basis orthonormal to machine precision even when the first
// residual is small.
bool gram_schmidt_append(std::vector<Embedding>& basis, const Embedding& u) {
  Embedding r = u;
  for (const auto& b : basis) r -= b.dot(r) * b;
  if (r.norm() < kResidualFloor) return false;
  for (const auto& b : basis) r -= b.dot(r) * b;
  basis.push_back(r / r.norm());
  return true;
}

}  // namespace

ToxicSubspace fit_subspace(const PairedEmbeddings& data,
                           const ProjectionConfig& config) {
  if (config.k_components < 0) {
    throw Error(errc::config_error, "fit_subspace: k_components must be >= 0");
  }
  if (config.k_components == 0 && !config.include_mean_direction) {
    throw Error(errc::config_error,
                "fit_subspace: need the mean direction or k_components >= 1");
  }
  const std::size_t min_pairs =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::max(0, config.min_pairs)));
  if (data.pairs.size() < min_pairs) {
    throw Error(errc::too_few_pairs,
                "fit_subspace: " + std::to_string(data.pairs.size()) +
                    " pairs, need at least " + std::to_string(min_pairs));
  }
  const Eigen::Index dim = data.dim > 0 ? data.dim : data.pairs.front().toxic.size();
  if (config.k_components >= dim) {
    throw Error(errc::k_out_of_range,
                "fit_subspace: k_components must be below dim " + std::to_string(dim));
  }

  std::unordered_set<std::string> ids;
  std::vector<Embedding> diffs;
  diffs.reserve(data.pairs.size());
  for (const auto& pair : data.pairs) {
    if (!ids.insert(pair.id).second) {
      throw Error(errc::duplicate_id, "fit_subspace: duplicate id '" + pair.id + "'");
    }
    if (pair.toxic.size() != dim || pair.nontoxic.size() != dim) {
      throw Error(errc::dimension_mismatch,
                  "fit_subspace: pair '" + pair.id + "' has inconsistent dim");
    }
    diffs.push_back(pair.toxic - pair.nontoxic);
  }

  std::vector<Embedding> basis;
  std::vector<double> spectrum;

  if (config.include_mean_direction) {
    const Embedding mean_diff = mean_vector(diffs);
    if (mean_diff.norm() == 0.0) {
      if (config.k_components == 0) {
        throw Error(errc::zero_norm,
                    "fit_subspace: mean difference vanished and k_components=0");
      }
      // mean carries nothing; fall through to the PCA directions
    } else {
      basis.push_back(mean_diff / mean_diff.norm());
    }
  }

  if (config.k_components > 0) {
    const SymMatrix cov =
        covariance(diffs, /*centered=*/config.include_mean_direction);
    const auto eig = top_k_eigenvectors(cov, config.k_components);
    spectrum.assign(eig.values.data(), eig.values.data() + eig.values.size());
    const double lead = eig.values(0);
    for (Eigen::Index j = 0; j < eig.values.size(); ++j) {
      if (!(eig.values(j) > 0.0) || eig.values(j) < kEigenvalueFloor * lead) {
        continue;
      }
      gram_schmidt_append(basis, eig.vectors.col(j));
    }
  }

  if (basis.empty()) {
    throw Error(errc::degenerate_data,
                "fit_subspace: no usable directions (differences carry no "
                "variance beyond what was dropped)");
  }

  ToxicSubspace out;
  out.dim = dim;
  out.basis.resize(dim, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j) {
    out.basis.col(static_cast<Eigen::Index>(j)) = basis[j];
  }
  out.fit_meta = {data.pairs.size(), config.k_components,
                  config.include_mean_direction, std::move(spectrum)};
  return out;
}

Embedding project(const Embedding& e, const ToxicSubspace& s) {
  if (e.size() != s.dim) {
    throw Error(errc::dimension_mismatch,
                "project: embedding dim " + std::to_string(e.size()) +
                    " vs subspace dim " + std::to_string(s.dim));
  }
  return e - s.basis * (s.basis.transpose() * e);
}

SafeMatch nearest_safe_response(const Embedding& projected,
                                const ExampleLibrary& pool) {
  if (pool.entries.empty()) {
    throw Error(errc::empty_pool, "nearest_safe_response: pool is empty");
  }
  if (projected.size() != pool.dim) {
    throw Error(errc::dimension_mismatch, "nearest_safe_response: dim mismatch");
  }
  if (projected.norm() == 0.0) {
    throw Error(errc::zero_norm,
                "nearest_safe_response: projection annihilated the embedding");
  }
  double best = -2.0;
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    const double c = cosine_similarity(projected, pool.entries[i].embedding);
    if (c > best) {
      best = c;
      best_idx = i;
    }
  }
  const auto& entry = pool.entries[best_idx];
  return {entry.id, entry.text, best};
}

void save_subspace(const ToxicSubspace& s, const std::filesystem::path& path) {
  json basis = json::array();
  for (Eigen::Index j = 0; j < s.basis.cols(); ++j) {
    basis.push_back(std::vector<double>(s.basis.col(j).data(),
                                        s.basis.col(j).data() + s.basis.rows()));
  }
  json doc = {{"dim", s.dim},
              {"basis", basis},
              {"fit_meta",
               {{"n_pairs", s.fit_meta.n_pairs},
                {"k_components", s.fit_meta.k_components},
                {"include_mean", s.fit_meta.include_mean},
                {"eigenvalues", s.fit_meta.eigenvalues}}}};
  auto out = open_for_write(path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error(errc::io_error, "write failed: " + path.string());
}

ToxicSubspace load_subspace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::io_error, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(errc::malformed_line, path.string() + ": " + e.what());
  }
  try {
    ToxicSubspace s;
    s.dim = doc.at("dim").get<Eigen::Index>();
    const auto& basis = doc.at("basis");
    if (s.dim < 1 || basis.empty()) {
      throw Error(errc::malformed_line, path.string() + ": empty subspace");
    }
    s.basis.resize(s.dim, static_cast<Eigen::Index>(basis.size()));
    for (std::size_t j = 0; j < basis.size(); ++j) {
      const auto col = basis[j].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(col.size()) != s.dim) {
        throw Error(errc::malformed_line, path.string() + ": basis dim mismatch");
      }
      s.basis.col(static_cast<Eigen::Index>(j)) =
          Eigen::Map<const Embedding>(col.data(), s.dim);
    }
    if (!s.basis.allFinite()) {
      throw Error(errc::malformed_line, path.string() + ": non-finite basis");
    }
    const SymMatrix gram = s.basis.transpose() * s.basis;
    const SymMatrix eye = SymMatrix::Identity(gram.rows(), gram.cols());
    if ((gram - eye).cwiseAbs().maxCoeff() > 1e-8) {
      throw Error(errc::malformed_line, path.string() + ": basis is not orthonormal");
    }
    const auto& meta = doc.at("fit_meta");
    s.fit_meta.n_pairs = meta.at("n_pairs").get<std::size_t>();
    s.fit_meta.k_components = meta.at("k_components").get<int>();
    s.fit_meta.include_mean = meta.at("include_mean").get<bool>();
    s.fit_meta.eigenvalues = meta.at("eigenvalues").get<std::vector<double>>();
    return s;
  } catch (const json::exception& e) {
    throw Error(errc::malformed_line, path.string() + ": " + e.what());
  }
}

PairedEmbeddings read_paired_embeddings_jsonl(const std::filesystem::path& path) {
  PairedEmbeddings data;
  for_each_jsonl_line(path, [&](std::size_t line_no, const json& j) {
    EmbeddingPair pair;
    pair.id = j.at("id").get<std::string>();
    const auto toxic = j.at("toxic").get<std::vector<double>>();
    const auto nontoxic = j.at("nontoxic").get<std::vector<double>>();
    if (toxic.size() != nontoxic.size() || toxic.empty()) {
      throw malformed_line_error(path, line_no, "toxic/nontoxic dim mismatch");
    }
    pair.toxic = Eigen::Map<const Embedding>(toxic.data(),
                                             static_cast<Eigen::Index>(toxic.size()));
    pair.nontoxic = Eigen::Map<const Embedding>(
        nontoxic.data(), static_cast<Eigen::Index>(nontoxic.size()));
    if (!pair.toxic.allFinite() || !pair.nontoxic.allFinite()) {
      throw malformed_line_error(path, line_no, "non-finite embedding component");
    }
    if (data.pairs.empty()) {
      data.dim = pair.toxic.size();
    } else if (pair.toxic.size() != data.dim) {
      throw malformed_line_error(path, line_no, "dim differs from first record");
    }
    data.pairs.push_back(std::move(pair));
  });
  if (data.pairs.empty()) {
    throw Error(errc::empty_set, path.string() + ": no embedding pairs");
  }
  return data;
}

}  // namespace safegate
