#include "clsa/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace clsa::checkpoint {

namespace {

constexpr char kMagic[8] = {'C', 'L', 'S', 'A', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");

}  // namespace

void save(const std::filesystem::path& path, model::ClsaModel& net) {
  const auto params = net.parameters();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto* p : params)
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  const std::string header =
      nlohmann::json{{"config", net.config().to_json()}, {"tensors", tensors}}.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto* p : params)
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  if (!out) throw InputError("failed writing " + path.string());
}

model::ClsaModel load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConsistencyError("missing checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || len > (1u << 26))
    throw ConsistencyError("not a checkpoint: " + path.string());
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw ConsistencyError("truncated checkpoint header: " + path.string());
  const auto j = nlohmann::json::parse(header);

  model::ClsaModel net(model::ModelConfig::from_json(j.at("config")), 0);
  std::map<std::string, nn::Parameter*> by_name;
  for (auto* p : net.parameters()) by_name[p->name] = p;
  const auto& tensors = j.at("tensors");
  if (tensors.size() != by_name.size())
    throw ConsistencyError("checkpoint tensor count does not match its config");
  for (const auto& t : tensors) {
    const auto it = by_name.find(t.at("name").get<std::string>());
    if (it == by_name.end())
      throw ConsistencyError("unexpected tensor " + t.at("name").get<std::string>());
    auto& v = it->second->value;
    if (v.rows() != t.at("rows").get<Eigen::Index>() || v.cols() != t.at("cols").get<Eigen::Index>())
      throw ConsistencyError("tensor shape mismatch for " + it->first);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw ConsistencyError("truncated checkpoint data: " + path.string());
  }
  return net;
}

void check_compatible(const model::ModelConfig& c, const windows::PreparedDataset& ds) {
  if (c.n_obs != ds.n_obs)
    throw ConsistencyError("checkpoint N_o " + std::to_string(c.n_obs) + " vs dataset " +
                           std::to_string(ds.n_obs));
  if (c.t_total != ds.t_total)
    throw ConsistencyError("checkpoint T_total " + std::to_string(c.t_total) + " vs dataset " +
                           std::to_string(ds.t_total));
  if (c.t_study != ds.t_study) throw ConsistencyError("checkpoint T_s does not match dataset");
  if (c.feature_dim != static_cast<int>(ds.layout.total_dim()) ||
      c.layout_hash != ds.layout.hash())
    throw ConsistencyError("checkpoint feature layout does not match dataset");
}

}  // namespace clsa::checkpoint
