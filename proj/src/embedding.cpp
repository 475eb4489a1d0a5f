#include "asqp/embedding.hpp"

#include <cmath>
#include <fstream>

#include "asqp/random.hpp"
#include "binary_io.hpp"

namespace asqp {

std::string_view provider_name(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::TrainableTable: return "trainable";
    case ProviderKind::HashedFrozen: return "hashed";
    case ProviderKind::FileBacked: return "file";
  }
  return "?";
}

ProviderKind parse_provider(std::string_view name) {
  if (name == "trainable") return ProviderKind::TrainableTable;
  if (name == "hashed") return ProviderKind::HashedFrozen;
  if (name == "file") return ProviderKind::FileBacked;
  throw Error("unknown embedding provider '" + std::string(name) + "'");
}

// --- TrainableTable ---------------------------------------------------------

TrainableTable::TrainableTable(int dim, std::vector<std::string> tokens)
    : dim_(dim), tokens_(std::move(tokens)) {
  if (dim <= 0) throw Error("embedding dimension must be positive");
  for (std::size_t k = 0; k < tokens_.size(); ++k) {
    if (!index_.emplace(tokens_[k], static_cast<int>(k) + 2).second)
      throw Error("duplicate token '" + tokens_[k] + "' in embedding vocabulary");
  }
}

TrainableTable TrainableTable::build(const Corpus& corpus, int dim) {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> seen;
  for (const auto& s : corpus.samples)
    for (const auto& t : s.sentence.tokens)
      if (seen.emplace(t, 0).second) tokens.push_back(t);
  return TrainableTable(dim, std::move(tokens));
}

int TrainableTable::row(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnknownRow : it->second;
}

ModelInput TrainableTable::prepare(const Sample& sample) const {
  ModelInput in;
  in.n_tokens = sample.sentence.size();
  in.table_rows.reserve(in.n_tokens + 1);
  in.table_rows.push_back(kNullRow);
  for (const auto& t : sample.sentence.tokens) in.table_rows.push_back(row(t));
  return in;
}

// --- HashedFrozen -----------------------------------------------------------

Eigen::VectorXd HashedFrozen::vector(std::string_view token) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : token) h = (h ^ c) * 1099511628211ULL;
  Rng rng(mix_seed(h, seed_));
  Eigen::VectorXd v(dim_);
  for (int k = 0; k < dim_; ++k) v(k) = uniform_in(rng, -1.0, 1.0);
  return v;
}

ModelInput HashedFrozen::prepare(const Sample& sample) const {
  ModelInput in;
  in.n_tokens = sample.sentence.size();
  in.fixed.resize(in.n_tokens + 1, dim_);
  // The sentinel hashes a string no tokenizer can produce.
  in.fixed.row(0) = vector(std::string_view("\x01[NULL]", 7)).transpose();
  for (int i = 0; i < in.n_tokens; ++i)
    in.fixed.row(i + 1) = vector(sample.sentence.tokens[i]).transpose();
  return in;
}

// --- embedding file ---------------------------------------------------------

EmbeddingFile read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open embedding file '" + path.string() + "'");
  io::expect_magic(in, "OAQP", path.string());
  EmbeddingFile file;
  file.version = io::get_uint<std::uint32_t>(in, "version");
  if (file.version != 1)
    throw FormatError("unsupported embedding file version " + std::to_string(file.version));
  const auto d = io::get_uint<std::uint32_t>(in, "dimension");
  const auto count = io::get_uint<std::uint32_t>(in, "sentence count");
  if (d == 0 || d > (1u << 16)) throw FormatError("implausible embedding dimension " + std::to_string(d));
  file.dim = static_cast<int>(d);
  file.entries.reserve(std::min<std::uint32_t>(count, 1u << 20));
  for (std::uint32_t s = 0; s < count; ++s) {
    EmbeddingEntry e;
    e.id = io::get_string(in, "sentence id");
    const auto m = io::get_uint<std::uint32_t>(in, "token count");
    if (m > (1u << 20)) throw FormatError("implausible token count for sentence '" + e.id + "'");
    e.vectors.resize(m + 1, d);
    for (std::uint32_t r = 0; r <= m; ++r)
      for (std::uint32_t c = 0; c < d; ++c) e.vectors(r, c) = io::get_f32(in, "vectors");
    file.entries.push_back(std::move(e));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after " + std::to_string(count) + " sentences");
  return file;
}

void write_embedding_file(const std::filesystem::path& path, const EmbeddingFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write embedding file '" + path.string() + "'");
  out.write("OAQP", 4);
  io::put_uint<std::uint32_t>(out, file.version);
  io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(file.dim));
  io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(file.entries.size()));
  for (const auto& e : file.entries) {
    if (e.vectors.cols() != file.dim || e.vectors.rows() < 1)
      throw FormatError("entry '" + e.id + "' has the wrong shape");
    io::put_string(out, e.id);
    io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(e.vectors.rows() - 1));
    for (Eigen::Index r = 0; r < e.vectors.rows(); ++r)
      for (Eigen::Index c = 0; c < e.vectors.cols(); ++c) io::put_f32(out, e.vectors(r, c));
  }
  if (!out) throw Error("failed writing embedding file '" + path.string() + "'");
}

FileBacked::FileBacked(EmbeddingFile file) : dim_(file.dim) {
  for (auto& e : file.entries) {
    if (!index_.emplace(e.id, e.vectors.cast<double>()).second)
      throw FormatError("duplicate sentence id '" + e.id + "' in embedding file");
  }
}

ModelInput FileBacked::prepare(const Sample& sample) const {
  auto it = index_.find(sample.id);
  if (it == index_.end()) throw FormatError("no embeddings for sentence id '" + sample.id + "'");
  if (it->second.rows() != sample.sentence.size() + 1)
    throw FormatError("embeddings for sentence '" + sample.id + "' have " +
                      std::to_string(it->second.rows() - 1) + " tokens, sentence has " +
                      std::to_string(sample.sentence.size()));
  if (!it->second.allFinite())
    throw FormatError("embeddings for sentence '" + sample.id + "' contain non-finite values");
  ModelInput in;
  in.n_tokens = sample.sentence.size();
  in.fixed = it->second;
  return in;
}

}  // namespace asqp
