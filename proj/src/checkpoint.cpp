#include "asqp/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"

namespace asqp {

namespace {

constexpr std::uint32_t kMaxDim = 1u << 20;

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.size(); ++k) io::put_f64(out, m.data()[k]);
}

void get_matrix(std::istream& in, const char* name, Eigen::MatrixXd& expected) {
  const auto rows = io::get_uint<std::uint32_t>(in, name);
  const auto cols = io::get_uint<std::uint32_t>(in, name);
  if (rows != expected.rows() || cols != expected.cols())
    throw FormatError(std::string("parameter group ") + name + " has shape " + std::to_string(rows) +
                      "x" + std::to_string(cols) + ", expected " + std::to_string(expected.rows()) +
                      "x" + std::to_string(expected.cols()));
  for (Eigen::Index k = 0; k < expected.size(); ++k) expected.data()[k] = io::get_f64(in, name);
}

}  // namespace

std::unique_ptr<EmbeddingProvider> Checkpoint::make_provider(const std::filesystem::path& embeddings) const {
  switch (provider) {
    case ProviderKind::TrainableTable:
      return std::make_unique<TrainableTable>(params.shape.dim, tokens);
    case ProviderKind::HashedFrozen:
      return std::make_unique<HashedFrozen>(params.shape.dim, provider_seed);
    case ProviderKind::FileBacked: {
      if (embeddings.empty()) throw Error("this checkpoint was trained on an embedding file; pass one");
      auto p = std::make_unique<FileBacked>(FileBacked::load(embeddings));
      if (p->dim() != params.shape.dim)
        throw ShapeMismatch("embedding file has dimension " + std::to_string(p->dim()) +
                            ", checkpoint expects " + std::to_string(params.shape.dim));
      return p;
    }
  }
  throw Error("unknown provider kind");
}

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out.write("OAQC", 4);
  io::put_uint<std::uint32_t>(out, kCheckpointVersion);
  io::put_uint<std::uint64_t>(out, ck.seed);
  io::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(ck.params.shape.variant));
  io::put_uint<std::uint64_t>(out, ck.vocab.hash());
  io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(ck.vocab.size()));
  for (const auto& name : ck.vocab.names()) io::put_string(out, name);
  io::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(ck.provider));
  io::put_uint<std::uint64_t>(out, ck.provider_seed);
  io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tokens.size()));
  for (const auto& t : ck.tokens) io::put_string(out, t);
  const ModelShape& s = ck.params.shape;
  for (int v : {s.dim, s.hidden, s.n_tags, s.n_outputs, s.n_categories, s.table_rows})
    io::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  ck.params.for_each([&](const char*, const Eigen::MatrixXd& m) { put_matrix(out, m); });
  if (!out) throw Error("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, checkpoint);
}

Checkpoint read_checkpoint(std::istream& in, const CategoryVocab* expected) {
  io::expect_magic(in, "OAQC", "checkpoint");
  const auto version = io::get_uint<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.seed = io::get_uint<std::uint64_t>(in, "seed");
  const auto variant = io::get_uint<std::uint8_t>(in, "schema variant");
  if (variant > static_cast<std::uint8_t>(SchemaVariant::Variant2))
    throw FormatError("unknown schema variant " + std::to_string(variant));
  const auto hash = io::get_uint<std::uint64_t>(in, "vocabulary hash");
  const auto n_categories = io::get_uint<std::uint32_t>(in, "category count");
  if (n_categories > kMaxDim) throw FormatError("implausible category count");
  std::vector<std::string> names;
  for (std::uint32_t k = 0; k < n_categories; ++k) names.push_back(io::get_string(in, "category name"));
  ck.vocab = CategoryVocab(std::move(names));
  if (ck.vocab.hash() != hash) throw VocabMismatch("checkpoint category names do not match its stored hash");
  if (expected && expected->hash() != hash)
    throw VocabMismatch("checkpoint was trained on a different category vocabulary");

  const auto provider = io::get_uint<std::uint8_t>(in, "provider kind");
  if (provider > static_cast<std::uint8_t>(ProviderKind::FileBacked))
    throw FormatError("unknown provider kind " + std::to_string(provider));
  ck.provider = static_cast<ProviderKind>(provider);
  ck.provider_seed = io::get_uint<std::uint64_t>(in, "provider seed");
  const auto n_tokens = io::get_uint<std::uint32_t>(in, "token count");
  if (n_tokens > (1u << 26)) throw FormatError("implausible token count");
  for (std::uint32_t k = 0; k < n_tokens; ++k) ck.tokens.push_back(io::get_string(in, "token"));

  int fields[6];
  for (int& f : fields) {
    const auto v = io::get_uint<std::uint32_t>(in, "shape");
    if (v > (1u << 28)) throw FormatError("implausible shape field");
    f = static_cast<int>(v);
  }
  const TagSchema schema(static_cast<SchemaVariant>(variant), ck.vocab);
  const ModelShape shape = ModelShape::make(schema, ck.vocab, fields[0], fields[1], fields[5]);
  if (shape.n_tags != fields[2] || shape.n_outputs != fields[3] || shape.n_categories != fields[4])
    throw FormatError("checkpoint shape is inconsistent with its schema and vocabulary");
  if (ck.provider == ProviderKind::TrainableTable && shape.table_rows != static_cast<int>(n_tokens) + 2)
    throw FormatError("embedding table rows do not match the stored token list");

  ck.params = ScorerParams<double>::zeros(shape);
  ck.params.for_each([&](const char* name, Eigen::MatrixXd& m) { get_matrix(in, name, m); });
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const CategoryVocab* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  try {
    return read_checkpoint(in, expected);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace asqp
