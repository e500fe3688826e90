#include "synforge/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "synforge/error.hpp"

namespace synforge {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'Y', 'N', 'F', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("truncated checkpoint");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return v;
}

}  // namespace

void round_to_float32(nn::ParamSet& params) {
  for (int i = 0; i < params.size(); ++i) {
    auto& m = params[i].value;
    m = m.cast<float>().cast<double>();
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  const auto& params = model.params();
  nlohmann::ordered_json man;
  man["format_version"] = kCheckpointVersion;
  man["grammar_hash"] = model.grammar().hash();
  man["vocab_hash"] = model.vocab().hash();
  man["config"] = model.config().to_json();
  man["grammar"] = model.grammar().to_text();
  man["vocab"] = {{"source", model.vocab().source_words()}, {"terminal", model.vocab().terminal_words()}};
  auto tensors = nlohmann::ordered_json::array();
  for (int i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", params[i].name}, {"shape", {params[i].value.rows(), params[i].value.cols()}}});
  }
  man["tensors"] = std::move(tensors);
  if (!extra.is_null()) man["extra"] = extra;

  std::string out(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  auto text = man.dump();
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (int i = 0; i < params.size(); ++i) {
    const auto& m = params[i].value;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("cannot write checkpoint " + path.string());
}

namespace {

LoadedCheckpoint load_impl(const std::filesystem::path& path, const Grammar* expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot read checkpoint " + path.string());
  std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < kMagic.size() || std::memcmp(in.data(), kMagic.data(), kMagic.size()) != 0) {
    throw CheckpointError("not a checkpoint (bad magic): version unknown");
  }
  std::size_t pos = kMagic.size();
  auto version = get_le<std::uint32_t>(in, pos);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  auto len = get_le<std::uint64_t>(in, pos);
  if (pos + len > in.size()) throw CheckpointError("truncated checkpoint manifest");
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(in.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
  }
  pos += len;

  Grammar g = load_grammar(man.at("grammar").get<std::string>());
  if (g.hash() != man.at("grammar_hash").get<std::string>()) throw CheckpointError("grammar hash mismatch in checkpoint");
  if (expected && expected->hash() != g.hash()) {
    throw CheckpointError("checkpoint grammar " + g.hash() + " does not match the given grammar " + expected->hash());
  }
  Vocab v(man.at("vocab").at("source").get<std::vector<std::string>>(),
          man.at("vocab").at("terminal").get<std::vector<std::string>>());
  if (v.hash() != man.at("vocab_hash").get<std::string>()) throw CheckpointError("vocabulary hash mismatch in checkpoint");
  Model model(std::move(g), std::move(v), ModelConfig::from_json(man.at("config")));

  auto& params = model.params();
  const auto& tensors = man.at("tensors");
  if (static_cast<int>(tensors.size()) != params.size()) throw CheckpointError("tensor count mismatch");
  for (int i = 0; i < params.size(); ++i) {
    const auto& t = tensors[static_cast<std::size_t>(i)];
    auto& m = params[i].value;
    auto shape = t.at("shape").get<std::vector<long>>();
    if (t.at("name").get<std::string>() != params[i].name || shape.size() != 2 || shape[0] != m.rows() ||
        shape[1] != m.cols()) {
      throw CheckpointError("shape mismatch for tensor '" + params[i].name + "'");
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, pos)));
      }
    }
  }
  if (pos != in.size()) throw CheckpointError("trailing bytes after checkpoint payload");
  return {std::move(model), std::move(man)};
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const Grammar* expected) {
  try {
    return load_impl(path, expected);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
  }
}

}  // namespace synforge
