// Versioned binary checkpoint for trained scorer parameters.
//
// Layout (little-endian): magic "OAQC", u32 version, u64 seed, u8 schema
// variant, u64 vocab hash, u32 category count + length-prefixed names, u8
// provider kind, u64 provider seed, u32 token count + length-prefixed tokens,
// six u32 shape fields, then the eight parameter groups as (u32 rows,
// u32 cols, column-major f64 values).
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "asqp/core.hpp"
#include "asqp/embedding.hpp"
#include "asqp/model.hpp"

namespace asqp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t seed = 0;
  CategoryVocab vocab;
  ProviderKind provider = ProviderKind::TrainableTable;
  std::uint64_t provider_seed = 0;       // HashedFrozen only
  std::vector<std::string> tokens;       // TrainableTable only
  ScorerParams<double> params;

  TagSchema schema() const { return TagSchema(params.shape.variant, vocab); }

  // Rebuilds the provider the parameters were trained with. FileBacked needs
  // the embedding file for the sentences being scored.
  std::unique_ptr<EmbeddingProvider> make_provider(
      const std::filesystem::path& embeddings = {}) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);

// Throws FormatError on a malformed file and VocabMismatch when the stored
// hash disagrees with the stored names or with `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const CategoryVocab* expected = nullptr);
Checkpoint read_checkpoint(std::istream& in, const CategoryVocab* expected = nullptr);

}  // namespace asqp
