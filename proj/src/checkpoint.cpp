#include "splatspa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include "json.hpp"

#include "splatspa/errors.hpp"

namespace splatspa {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'P', 'L', 'A', 'T', 'S', 'P', 'A'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return v;
}

json rates_to_json(const LearningRates& lr) {
  return {{"position", lr.position}, {"rotation", lr.rotation}, {"scale", lr.scale},
          {"opacity", lr.opacity},   {"color", lr.color}};
}

LearningRates rates_from_json(const json& j) {
  return {j.at("position").get<double>(), j.at("rotation").get<double>(), j.at("scale").get<double>(),
          j.at("opacity").get<double>(), j.at("color").get<double>()};
}

json config_to_json(const TrainerConfig& c) {
  const auto& s = c.schedule;
  return {
      {"mode", to_string(c.mode)},
      {"schedule",
       {{"total_iters", s.total_iters},
        {"sparsify_start_iter", s.sparsify_start_iter},
        {"prune_iter", s.prune_iter},
        {"lr", rates_to_json(s.lr)},
        {"rng_seed", s.rng_seed},
        {"eval_every", s.eval_every}}},
      {"loss",
       {{"rho", c.loss.rho},
        {"ssim_window", c.loss.ssim_window},
        {"ssim_sigma", c.loss.ssim_sigma},
        {"ssim_c1", c.loss.ssim_c1},
        {"ssim_c2", c.loss.ssim_c2}}},
      {"background", c.background},
      {"threads", c.threads},
      {"tile_size", c.tile_size},
      {"sparsifier",
       {{"delta", c.sparsifier.delta},
        {"kappa", c.sparsifier.kappa},
        {"epsilon", c.sparsifier.epsilon},
        {"max_outer", c.sparsifier.max_outer},
        {"interval", c.sparsifier.interval}}},
      {"projection", to_string(c.projection)},
      {"baseline_criterion", to_string(c.baseline_criterion)},
      {"keep_fraction", c.keep_fraction},
  };
}

TrainerConfig config_from_json(const json& j) {
  TrainerConfig c;
  c.mode = parse_train_mode(j.at("mode").get<std::string>());
  const json& s = j.at("schedule");
  c.schedule.total_iters = s.at("total_iters").get<std::size_t>();
  c.schedule.sparsify_start_iter = s.at("sparsify_start_iter").get<std::size_t>();
  c.schedule.prune_iter = s.at("prune_iter").get<std::size_t>();
  c.schedule.lr = rates_from_json(s.at("lr"));
  c.schedule.rng_seed = s.at("rng_seed").get<std::uint64_t>();
  c.schedule.eval_every = s.at("eval_every").get<std::size_t>();
  const json& l = j.at("loss");
  c.loss.rho = l.at("rho").get<double>();
  c.loss.ssim_window = l.at("ssim_window").get<int>();
  c.loss.ssim_sigma = l.at("ssim_sigma").get<double>();
  c.loss.ssim_c1 = l.at("ssim_c1").get<double>();
  c.loss.ssim_c2 = l.at("ssim_c2").get<double>();
  c.background = j.at("background").get<Rgb>();
  c.threads = j.at("threads").get<unsigned>();
  c.tile_size = j.at("tile_size").get<int>();
  const json& sp = j.at("sparsifier");
  c.sparsifier.delta = sp.at("delta").get<double>();
  c.sparsifier.kappa = sp.at("kappa").get<std::size_t>();
  c.sparsifier.epsilon = sp.at("epsilon").get<double>();
  c.sparsifier.max_outer = sp.at("max_outer").get<std::size_t>();
  c.sparsifier.interval = sp.at("interval").get<std::size_t>();
  c.projection = parse_projection_score(j.at("projection").get<std::string>());
  c.baseline_criterion = parse_prune_criterion(j.at("baseline_criterion").get<std::string>());
  c.keep_fraction = j.at("keep_fraction").get<double>();
  return c;
}

struct ColumnRef {
  std::string name;
  std::vector<double>* doubles = nullptr;
  std::vector<std::uint8_t>* bytes = nullptr;
};

// Every payload column in file order. Works on a mutable model so the same
// list drives both encoding and decoding.
std::vector<ColumnRef> columns_of(CheckpointModel& m) {
  std::vector<ColumnRef> cols = {
      {"cloud.mu", &m.cloud.mu, nullptr},
      {"cloud.theta", &m.cloud.theta, nullptr},
      {"cloud.log_scale", &m.cloud.log_scale, nullptr},
      {"cloud.opacity_logit", &m.cloud.opacity_logit, nullptr},
      {"cloud.color", &m.cloud.color, nullptr},
      {"cloud.order_key", &m.cloud.order_key, nullptr},
      {"cloud.alive", nullptr, &m.cloud.alive},
  };
  for (int gi = 0; gi < kParamGroups; ++gi) {
    const std::string g(group_name(static_cast<ParamGroup>(gi)));
    cols.push_back({"adam.m." + g, &m.optimizer.moments[gi].m, nullptr});
    cols.push_back({"adam.v." + g, &m.optimizer.moments[gi].v, nullptr});
  }
  if (m.sparsifier) {
    cols.push_back({"sparsifier.z", &m.sparsifier->z, nullptr});
    cols.push_back({"sparsifier.lambda", &m.sparsifier->lambda, nullptr});
  }
  return cols;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CheckpointModel& model) {
  CheckpointModel m = model;
  json header = {
      {"version", m.version},
      {"config", config_to_json(m.config)},
      {"iteration", m.iteration},
      {"pruned", m.pruned},
      {"rng_state", m.rng_state},
      {"optimizer", {{"step", m.optimizer.step}, {"beta1", m.optimizer.beta1}, {"beta2", m.optimizer.beta2}, {"eps", m.optimizer.eps}}},
  };
  if (m.sparsifier) {
    const auto& s = *m.sparsifier;
    header["sparsifier"] = {{"delta", s.delta},         {"kappa", s.kappa},       {"epsilon", s.epsilon},
                            {"max_outer", s.max_outer}, {"interval", s.interval}, {"outer", s.outer},
                            {"finished", s.finished}};
  } else {
    header["sparsifier"] = nullptr;
  }
  json cols = json::array();
  const auto refs = columns_of(m);
  for (const auto& c : refs) {
    cols.push_back({{"name", c.name},
                    {"type", c.doubles ? "f64" : "u8"},
                    {"length", c.doubles ? c.doubles->size() : c.bytes->size()}});
  }
  header["columns"] = cols;

  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, m.version);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& c : refs) {
    if (c.doubles) {
      for (double v : *c.doubles) put_u64(out, std::bit_cast<std::uint64_t>(v));
    } else {
      out.insert(out.end(), c.bytes->begin(), c.bytes->end());
    }
  }
  return out;
}

CheckpointModel decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw CorruptCheckpoint("checkpoint: missing or damaged header");
  }
  const std::uint32_t version = get_u32(bytes.data() + 8);
  if (version != CheckpointModel::kFormatVersion) {
    throw VersionMismatch("checkpoint: file has format version " + std::to_string(version) +
                          ", this build reads version " + std::to_string(CheckpointModel::kFormatVersion));
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 12);
  if (header_len > bytes.size() - 20) throw CorruptCheckpoint("checkpoint: truncated header");

  CheckpointModel m;
  std::size_t pos = 20 + header_len;
  try {
    const json header = json::parse(bytes.begin() + 20, bytes.begin() + static_cast<std::ptrdiff_t>(pos));
    m.version = header.at("version").get<std::uint32_t>();
    m.config = config_from_json(header.at("config"));
    m.iteration = header.at("iteration").get<std::size_t>();
    m.pruned = header.at("pruned").get<bool>();
    m.rng_state = header.at("rng_state").get<std::string>();
    const json& o = header.at("optimizer");
    m.optimizer.step = o.at("step").get<std::uint64_t>();
    m.optimizer.beta1 = o.at("beta1").get<double>();
    m.optimizer.beta2 = o.at("beta2").get<double>();
    m.optimizer.eps = o.at("eps").get<double>();
    const json& sp = header.at("sparsifier");
    if (!sp.is_null()) {
      SparsifierState s;
      s.delta = sp.at("delta").get<double>();
      s.kappa = sp.at("kappa").get<std::size_t>();
      s.epsilon = sp.at("epsilon").get<double>();
      s.max_outer = sp.at("max_outer").get<std::size_t>();
      s.interval = sp.at("interval").get<std::size_t>();
      s.outer = sp.at("outer").get<std::size_t>();
      s.finished = sp.at("finished").get<bool>();
      m.sparsifier = std::move(s);
    }

    auto refs = columns_of(m);
    const json& cols = header.at("columns");
    if (cols.size() != refs.size()) throw CorruptCheckpoint("checkpoint: unexpected column list");
    for (std::size_t ci = 0; ci < refs.size(); ++ci) {
      const auto& c = refs[ci];
      if (cols[ci].at("name").get<std::string>() != c.name) {
        throw CorruptCheckpoint("checkpoint: expected column " + c.name);
      }
      const auto len = cols[ci].at("length").get<std::size_t>();
      const std::size_t width = c.doubles ? 8 : 1;
      if (len > (bytes.size() - pos) / width) throw CorruptCheckpoint("checkpoint: truncated column " + c.name);
      if (c.doubles) {
        c.doubles->resize(len);
        for (std::size_t k = 0; k < len; ++k, pos += 8) (*c.doubles)[k] = std::bit_cast<double>(get_u64(bytes.data() + pos));
      } else {
        c.bytes->assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
      }
    }
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const InputError& e) {
    throw CorruptCheckpoint(std::string("checkpoint: invalid header value: ") + e.what());
  }
  if (pos != bytes.size()) throw CorruptCheckpoint("checkpoint: trailing bytes after payload");
  try {
    m.cloud.validate();
  } catch (const InputError& e) {
    throw CorruptCheckpoint(std::string("checkpoint: ") + e.what());
  }
  return m;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void save_checkpoint(const CheckpointModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(model));
}

CheckpointModel load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace splatspa
