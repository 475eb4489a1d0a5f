// Token representation providers and the binary embedding file.
//
// Embedding file layout (little-endian):
//
//   char[4]  magic "OAQP"
//   u32      version (1)
//   u32      d
//   u32      sentence count
//   per sentence:
//     u32    id length, then id bytes (UTF-8)
//     u32    token count m
//     f32    (m+1) * d values, row-major, row 0 = [NULL]
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "asqp/data.hpp"

namespace asqp {

enum class ProviderKind : std::uint8_t { TrainableTable = 0, HashedFrozen = 1, FileBacked = 2 };

std::string_view provider_name(ProviderKind kind);
ProviderKind parse_provider(std::string_view name);

// What the model needs to build H for one sentence: either rows of the
// trainable table (row 0 = [NULL]) or fixed vectors, (n+1) x d.
struct ModelInput {
  int n_tokens = 0;
  std::vector<int> table_rows;
  Eigen::MatrixXd fixed;

  bool trainable() const { return !table_rows.empty(); }
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual ProviderKind kind() const = 0;
  virtual int dim() const = 0;
  virtual ModelInput prepare(const Sample& sample) const = 0;
};

// Learned vectors indexed by token string. Row 0 is [NULL], row 1 unknown
// tokens; the table itself lives in ScorerParams.
class TrainableTable final : public EmbeddingProvider {
 public:
  static constexpr int kNullRow = 0;
  static constexpr int kUnknownRow = 1;

  TrainableTable(int dim, std::vector<std::string> tokens);
  // Vocabulary in first-appearance order over the corpus.
  static TrainableTable build(const Corpus& corpus, int dim);

  ProviderKind kind() const override { return ProviderKind::TrainableTable; }
  int dim() const override { return dim_; }
  ModelInput prepare(const Sample& sample) const override;

  int rows() const { return static_cast<int>(tokens_.size()) + 2; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  int row(const std::string& token) const;

 private:
  int dim_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Fixed pseudo-random vectors seeded by a hash of each token, entries
// uniform in [-1, 1).
class HashedFrozen final : public EmbeddingProvider {
 public:
  HashedFrozen(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}

  ProviderKind kind() const override { return ProviderKind::HashedFrozen; }
  int dim() const override { return dim_; }
  ModelInput prepare(const Sample& sample) const override;

  std::uint64_t seed() const { return seed_; }
  Eigen::VectorXd vector(std::string_view token) const;

 private:
  int dim_;
  std::uint64_t seed_;
};

struct EmbeddingEntry {
  std::string id;
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> vectors;  // (m+1) x d
};

struct EmbeddingFile {
  std::uint32_t version = 1;
  int dim = 0;
  std::vector<EmbeddingEntry> entries;
};

// Throws FormatError on a bad magic, version, truncation or inconsistent shape.
EmbeddingFile read_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file);

// Per-sentence vectors looked up by sample id.
class FileBacked final : public EmbeddingProvider {
 public:
  explicit FileBacked(EmbeddingFile file);
  static FileBacked load(const std::filesystem::path& path) {
    return FileBacked(read_embedding_file(path));
  }

  ProviderKind kind() const override { return ProviderKind::FileBacked; }
  int dim() const override { return dim_; }
  // Throws FormatError for an unknown id or a token count that differs from
  // the sentence.
  ModelInput prepare(const Sample& sample) const override;

  int size() const { return static_cast<int>(index_.size()); }

 private:
  int dim_;
  std::unordered_map<std::string, Eigen::MatrixXd> index_;
};

}  // namespace asqp
