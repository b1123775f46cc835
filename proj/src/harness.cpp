#include "dbcsem/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "dbcsem/errors.hpp"
#include "dbcsem/objective.hpp"
#include "dbcsem/rng.hpp"

namespace dbcsem {

namespace fs = std::filesystem;

// ---- JSON -------------------------------------------------------------------

namespace {

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::string mode_name(PairingMode mode) {
  return mode == PairingMode::cross_dataset ? "cross-dataset" : "same-dataset-disjoint";
}

PairingMode parse_mode(const std::string& text) {
  if (text == "same-dataset-disjoint") return PairingMode::same_dataset_disjoint;
  if (text == "cross-dataset") return PairingMode::cross_dataset;
  throw ConfigError("unknown pairing mode: " + text);
}

Json dataset_json(const DatasetSpec& d) {
  return Json{{"name", d.name},
              {"height", d.height},
              {"width", d.width},
              {"train_count", d.train_count},
              {"test_count", d.test_count},
              {"source_path", d.source_path.string()},
              {"policy", to_string(d.policy)},
              {"format", to_string(d.format)}};
}

// Keys absent from j keep their value in d.
DatasetSpec dataset_from(const Json& j, DatasetSpec d, const std::string& where) {
  reject_unknown(j, {"name", "height", "width", "train_count", "test_count", "source_path", "policy", "format"},
                 where);
  std::string path = d.source_path.string(), policy = to_string(d.policy), format = to_string(d.format);
  read(j, "name", d.name, where);
  read(j, "height", d.height, where);
  read(j, "width", d.width, where);
  read(j, "train_count", d.train_count, where);
  read(j, "test_count", d.test_count, where);
  read(j, "source_path", path, where);
  read(j, "policy", policy, where);
  read(j, "format", format, where);
  d.source_path = path;
  d.policy = parse_resize_policy(policy);
  d.format = parse_dataset_format(format);
  return d;
}

Json stages_json(const std::vector<StageSpec>& stages) {
  Json out = Json::array();
  for (const auto& s : stages) out.push_back({{"depth", s.depth}, {"embed_dim", s.embed_dim}});
  return out;
}

std::vector<StageSpec> stages_from(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of stages");
  std::vector<StageSpec> out;
  for (const auto& s : j) {
    reject_unknown(s, {"depth", "embed_dim"}, where);
    StageSpec st;
    read(s, "depth", st.depth, where);
    read(s, "embed_dim", st.embed_dim, where);
    out.push_back(st);
  }
  return out;
}

Json jscc_json(const JsccConfig& c) {
  return Json{{"image_height", c.image_height},
              {"image_width", c.image_width},
              {"patch", c.patch},
              {"encoder", stages_json(c.encoder)},
              {"decoder", stages_json(c.decoder)},
              {"num_heads", c.num_heads},
              {"window", c.window},
              {"mlp_ratio", c.mlp_ratio},
              {"alternate_shift", c.alternate_shift},
              {"csi_dim", c.csi_dim},
              {"decoder_csi_dim", c.decoder_csi_dim},
              {"csi_pos_dim", c.csi_pos_dim},
              {"csi_hidden", c.csi_hidden},
              {"csi_aware", c.csi_aware}};
}

JsccConfig jscc_from(const Json& j, JsccConfig c) {
  const std::string where = "jscc";
  reject_unknown(j,
                 {"image_height", "image_width", "patch", "encoder", "decoder", "num_heads", "window", "mlp_ratio",
                  "alternate_shift", "csi_dim", "decoder_csi_dim", "csi_pos_dim", "csi_hidden", "csi_aware"},
                 where);
  read(j, "image_height", c.image_height, where);
  read(j, "image_width", c.image_width, where);
  read(j, "patch", c.patch, where);
  if (j.contains("encoder")) c.encoder = stages_from(j.at("encoder"), where + ".encoder");
  if (j.contains("decoder")) c.decoder = stages_from(j.at("decoder"), where + ".decoder");
  read(j, "num_heads", c.num_heads, where);
  read(j, "window", c.window, where);
  read(j, "mlp_ratio", c.mlp_ratio, where);
  read(j, "alternate_shift", c.alternate_shift, where);
  read(j, "csi_dim", c.csi_dim, where);
  read(j, "decoder_csi_dim", c.decoder_csi_dim, where);
  read(j, "csi_pos_dim", c.csi_pos_dim, where);
  read(j, "csi_hidden", c.csi_hidden, where);
  read(j, "csi_aware", c.csi_aware, where);
  return c;
}

Json fusion_json(const FusionConfig& f) {
  return Json{{"omega", f.omega},   {"alpha", f.alpha},         {"n_sf", f.n_sf},           {"n_df", f.n_df},
              {"channel_uses", f.channel_uses}, {"embed_dim", f.embed_dim}, {"kernel", f.kernel}};
}

FusionConfig fusion_from(const Json& j, FusionConfig f) {
  const std::string where = "fusion";
  reject_unknown(j, {"omega", "alpha", "n_sf", "n_df", "channel_uses", "embed_dim", "kernel"}, where);
  read(j, "omega", f.omega, where);
  read(j, "alpha", f.alpha, where);
  read(j, "n_sf", f.n_sf, where);
  read(j, "n_df", f.n_df, where);
  read(j, "channel_uses", f.channel_uses, where);
  read(j, "embed_dim", f.embed_dim, where);
  read(j, "kernel", f.kernel, where);
  return f;
}

Json train_json(const TrainConfig& t) {
  return Json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"seed", t.seed},
              {"csi",
               {{"snr1_min_db", t.csi.snr1_min_db}, {"snr1_max_db", t.csi.snr1_max_db}, {"gaps_db", t.csi.gaps_db}}},
              {"lambda", t.lambda},
              {"max_steps", t.max_steps}};
}

TrainConfig train_from(const Json& j) {
  const std::string where = "train";
  reject_unknown(j, {"epochs", "batch_size", "learning_rate", "seed", "csi", "lambda", "max_steps"}, where);
  TrainConfig t;
  read(j, "epochs", t.epochs, where);
  read(j, "batch_size", t.batch_size, where);
  read(j, "learning_rate", t.learning_rate, where);
  read(j, "seed", t.seed, where);
  read(j, "lambda", t.lambda, where);
  read(j, "max_steps", t.max_steps, where);
  if (j.contains("csi")) {
    const auto& c = j.at("csi");
    reject_unknown(c, {"snr1_min_db", "snr1_max_db", "gaps_db"}, "train.csi");
    read(c, "snr1_min_db", t.csi.snr1_min_db, "train.csi");
    read(c, "snr1_max_db", t.csi.snr1_max_db, "train.csi");
    read(c, "gaps_db", t.csi.gaps_db, "train.csi");
  }
  return t;
}

Json eval_json(const EvalConfig& e) {
  return Json{{"snr1_grid", e.snr1_grid},       {"gap_db", e.gap_db},
              {"sigma_e_grid", e.sigma_e_grid}, {"gap_grid", e.gap_grid},
              {"ratio_grid", e.ratio_grid},     {"gap_sweep_snr1_db", e.gap_sweep_snr1_db},
              {"batch_size", e.batch_size},     {"seed", e.seed}};
}

EvalConfig eval_from(const Json& j) {
  const std::string where = "eval";
  reject_unknown(j,
                 {"snr1_grid", "gap_db", "sigma_e_grid", "gap_grid", "ratio_grid", "gap_sweep_snr1_db", "batch_size",
                  "seed"},
                 where);
  EvalConfig e;
  read(j, "snr1_grid", e.snr1_grid, where);
  read(j, "gap_db", e.gap_db, where);
  read(j, "sigma_e_grid", e.sigma_e_grid, where);
  read(j, "gap_grid", e.gap_grid, where);
  read(j, "ratio_grid", e.ratio_grid, where);
  read(j, "gap_sweep_snr1_db", e.gap_sweep_snr1_db, where);
  read(j, "batch_size", e.batch_size, where);
  read(j, "seed", e.seed, where);
  return e;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

void require_finite(const std::vector<double>& values, const std::string& what) {
  if (values.empty()) throw ConfigError(what + " must not be empty");
  for (double v : values) {
    if (!std::isfinite(v)) throw ConfigError(what + " holds a non-finite value");
  }
}

}  // namespace

std::int64_t RunConfig::channel_uses() const {
  return cbr_channel_uses(jscc.image_height, jscc.image_width, cbr);
}

double RunConfig::ratio() const {
  switch (scheme) {
    case Scheme::sf:
      return alpha;
    case Scheme::td:
      return beta;
    case Scheme::pa:
      return gamma;
    case Scheme::sic:
      return zeta;
  }
  return alpha;
}

void RunConfig::set_ratio(double value) {
  switch (scheme) {
    case Scheme::sf:
      alpha = value;
      break;
    case Scheme::td:
      beta = value;
      break;
    case Scheme::pa:
      gamma = value;
      break;
    case Scheme::sic:
      zeta = value;
      break;
  }
  resolve();
}

void RunConfig::resolve() {
  fusion.alpha = alpha;
  if (cbr > 0) fusion.channel_uses = channel_uses();
}

void RunConfig::validate() const {
  if (!(cbr > 0 && std::isfinite(cbr))) throw ConfigError("cbr must be positive");
  jscc.validate();
  const auto n = channel_uses();
  if (fusion.channel_uses != n || fusion.alpha != alpha) {
    throw ConfigError("fusion block disagrees with cbr/alpha (call resolve)");
  }
  switch (scheme) {
    case Scheme::sf: {
      fusion.validate();
      const auto [h, w] = jscc.latent_resolution();
      if ((2 * n) % (h * w) != 0) {
        throw ConfigError("2n = " + std::to_string(2 * n) + " reals do not tile the " + std::to_string(h) + "x" +
                          std::to_string(w) + " latent grid");
      }
      break;
    }
    case Scheme::td:
      td_schedule(n, beta);
      break;
    case Scheme::pa:
      if (!(gamma > 0 && gamma < 1)) throw ConfigError("gamma must lie in (0, 1)");
      break;
    case Scheme::sic:
      if (!(zeta > 0 && zeta < 1)) throw ConfigError("zeta must lie in (0, 1)");
      break;
  }
  data.user1.validate();
  if (data.user1.height != jscc.image_height || data.user1.width != jscc.image_width) {
    throw ConfigError("dataset resolution " + std::to_string(data.user1.height) + "x" +
                      std::to_string(data.user1.width) + " differs from the model's " +
                      std::to_string(jscc.image_height) + "x" + std::to_string(jscc.image_width));
  }
  if (data.mode == PairingMode::cross_dataset) {
    if (!data.user2) throw ConfigError("cross-dataset pairing needs data.user2");
    data.user2->validate();
    if (data.user2->height != data.user1.height || data.user2->width != data.user1.width) {
      throw ConfigError("both users' datasets must share one resolution");
    }
  }
  if (train.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(train.learning_rate > 0 && std::isfinite(train.learning_rate))) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(train.lambda >= 0 && train.lambda <= 1)) throw ConfigError("lambda must lie in [0, 1]");
  if (train.max_steps < 0) throw ConfigError("max_steps must be >= 0");
  train.csi.validate();
  require_finite(eval.snr1_grid, "eval.snr1_grid");
  require_finite(eval.sigma_e_grid, "eval.sigma_e_grid");
  require_finite(eval.gap_grid, "eval.gap_grid");
  require_finite(eval.ratio_grid, "eval.ratio_grid");
  if (!(eval.gap_db > 0)) throw ConfigError("eval.gap_db must be positive");
  for (double g : eval.gap_grid) {
    if (!(g > 0)) throw ConfigError("eval.gap_grid entries must be positive");
  }
  for (double s : eval.sigma_e_grid) {
    if (s < 0) throw ConfigError("eval.sigma_e_grid entries must be >= 0");
  }
  for (double r : eval.ratio_grid) {
    if (!(r > 0 && r < 1)) throw ConfigError("eval.ratio_grid entries must lie in (0, 1)");
  }
  if (!std::isfinite(eval.gap_sweep_snr1_db)) throw ConfigError("eval.gap_sweep_snr1_db must be finite");
  if (eval.batch_size < 1) throw ConfigError("eval.batch_size must be >= 1");
  if (out.empty()) throw ConfigError("out directory must be set");
}

Json RunConfig::to_json() const {
  Json data_json{{"mode", mode_name(data.mode)}, {"user1", dataset_json(data.user1)}};
  if (data.user2) data_json["user2"] = dataset_json(*data.user2);
  return Json{{"scheme", to_string(scheme)},
              {"alpha", alpha},
              {"beta", beta},
              {"gamma", gamma},
              {"zeta", zeta},
              {"cbr", cbr},
              {"jscc", jscc_json(jscc)},
              {"fusion", fusion_json(fusion)},
              {"data", data_json},
              {"train", train_json(train)},
              {"eval", eval_json(eval)},
              {"out", out.string()}};
}

RunConfig RunConfig::from_json(const Json& j) {
  const std::string where = "config";
  reject_unknown(j,
                 {"scheme", "alpha", "beta", "gamma", "zeta", "cbr", "jscc", "fusion", "data", "train", "eval", "out",
                  "profile"},
                 where);
  RunConfig c;
  std::string profile = "low-res";
  read(j, "profile", profile, where);
  if (profile == "high-res") {
    c.jscc = JsccConfig::high_res();
    c.fusion = FusionConfig::high_res();
    c.cbr = 0.125;
    c.data.user1.name = "celeba";
    c.data.user1.height = 128;
    c.data.user1.width = 128;
    c.data.user1.policy = ResizePolicy::center_crop;
    c.data.user1.format = DatasetFormat::image_directory;
  } else if (profile != "low-res") {
    throw ConfigError("unknown profile: " + profile);
  }
  std::string scheme = to_string(c.scheme);
  read(j, "scheme", scheme, where);
  c.scheme = parse_scheme(scheme);
  read(j, "alpha", c.alpha, where);
  read(j, "beta", c.beta, where);
  read(j, "gamma", c.gamma, where);
  read(j, "zeta", c.zeta, where);
  read(j, "cbr", c.cbr, where);
  if (j.contains("jscc")) c.jscc = jscc_from(j.at("jscc"), c.jscc);
  if (j.contains("fusion")) c.fusion = fusion_from(j.at("fusion"), c.fusion);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"mode", "user1", "user2"}, "data");
    std::string mode = mode_name(c.data.mode);
    read(d, "mode", mode, "data");
    c.data.mode = parse_mode(mode);
    if (d.contains("user1")) c.data.user1 = dataset_from(d.at("user1"), c.data.user1, "data.user1");
    if (d.contains("user2")) c.data.user2 = dataset_from(d.at("user2"), c.data.user2.value_or(DatasetSpec{}), "data.user2");
  }
  if (j.contains("train")) c.train = train_from(j.at("train"));
  if (j.contains("eval")) c.eval = eval_from(j.at("eval"));
  std::string out = c.out.string();
  read(j, "out", out, where);
  c.out = out;
  const auto declared_uses = c.fusion.channel_uses;
  const bool declared = j.contains("fusion") && j.at("fusion").contains("channel_uses");
  c.resolve();
  if (declared && declared_uses != c.fusion.channel_uses) {
    throw ConfigError("fusion.channel_uses " + std::to_string(declared_uses) + " contradicts cbr " +
                      std::to_string(c.cbr) + " (n = " + std::to_string(c.fusion.channel_uses) + ")");
  }
  return c;
}

RunConfig RunConfig::from_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + file.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string RunConfig::architecture_id() const {
  Json j{{"scheme", to_string(scheme)}, {"cbr", cbr}, {"jscc", jscc_json(jscc)}};
  if (scheme == Scheme::sf) {
    j["fusion"] = fusion_json(fusion);
  } else {
    j["ratio"] = ratio();
  }
  return fnv1a_hex(j.dump());
}

std::string RunConfig::checkpoint_id() const {
  Json data_json{{"mode", mode_name(data.mode)}, {"user1", dataset_json(data.user1)}};
  if (data.user2) data_json["user2"] = dataset_json(*data.user2);
  Json j{{"architecture", architecture_id()}, {"ratio", ratio()}, {"data", data_json}, {"train", train_json(train)}};
  return to_string(scheme) + "-" + fnv1a_hex(j.dump());
}

BroadcastModel build_model(const RunConfig& config) {
  config.validate();
  torch::manual_seed(derive_seed(config.train.seed, {seed_tag::kInit}));
  switch (config.scheme) {
    case Scheme::sf:
      return std::make_shared<SfSystemImpl>(config.jscc, config.fusion);
    case Scheme::td:
      return std::make_shared<TdSystemImpl>(config.jscc, config.channel_uses(), config.beta);
    case Scheme::pa:
      return std::make_shared<PaSystemImpl>(config.jscc, config.channel_uses(), config.gamma);
    case Scheme::sic:
      break;
  }
  throw ConfigError("the sic scheme has no trainable model");
}

// ---- persistence ------------------------------------------------------------

void write_text_atomic(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) {
    std::error_code dir_ec;
    fs::create_directories(file.parent_path(), dir_ec);
    if (dir_ec) throw Error("cannot create " + file.parent_path().string() + ": " + dir_ec.message());
  }
  const auto tmp = fs::path(file.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error("write failed (disk full?): " + file.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw Error("cannot move " + tmp.string() + " into place: " + ec.message());
}

void write_json(const fs::path& file, const Json& j) { write_text_atomic(file, j.dump(2) + "\n"); }

// ---- checkpoints ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'B', 'C', 'S', 'E', 'M', 'C', 'K'};

template <class T>
void put(std::string& buf, T v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::string& buf, const std::string& s) {
  put<std::uint64_t>(buf, s.size());
  buf += s;
}

void put_tensor(std::string& buf, const std::string& name, const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU).contiguous();
  put_string(buf, name);
  put<std::int32_t>(buf, static_cast<std::int32_t>(c.scalar_type()));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(c.dim()));
  for (auto s : c.sizes()) put<std::int64_t>(buf, s);
  const auto bytes = c.numel() * static_cast<std::int64_t>(c.element_size());
  put<std::uint64_t>(buf, static_cast<std::uint64_t>(bytes));
  buf.append(static_cast<const char*>(c.data_ptr()), static_cast<std::size_t>(bytes));
}

class Reader {
 public:
  Reader(std::string data, fs::path file) : data_(std::move(data)), file_(std::move(file)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  torch::Tensor get_tensor(std::string* name) {
    *name = get_string();
    const auto type = static_cast<c10::ScalarType>(get<std::int32_t>());
    const auto dim = get<std::uint32_t>();
    if (dim > 16) corrupt();
    std::vector<std::int64_t> sizes(dim);
    for (auto& s : sizes) s = get<std::int64_t>();
    const auto bytes = get<std::uint64_t>();
    need(bytes);
    auto t = torch::empty(sizes, torch::TensorOptions().dtype(type));
    if (static_cast<std::uint64_t>(t.numel() * static_cast<std::int64_t>(t.element_size())) != bytes) corrupt();
    std::memcpy(t.data_ptr(), data_.data() + pos_, bytes);
    pos_ += bytes;
    return t;
  }
  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(data_.data(), kMagic, sizeof(kMagic)) != 0) {
      throw VersionError("not a checkpoint file: " + file_.string());
    }
    pos_ += sizeof(kMagic);
  }
  [[noreturn]] void corrupt() const { throw VersionError("corrupt checkpoint: " + file_.string()); }

 private:
  void need(std::uint64_t n) const {
    if (pos_ + n > data_.size()) corrupt();
  }
  std::string data_;
  fs::path file_;
  std::size_t pos_ = 0;
};

Json progress_json(const TrainProgress& p) {
  return Json{{"next_step", p.next_step},
              {"epoch_mean_l3", p.epoch_mean_l3},
              {"epoch_mean_loss", p.epoch_mean_loss},
              {"partial_l3", p.partial_l3},
              {"partial_loss", p.partial_loss},
              {"partial_count", p.partial_count}};
}

TrainProgress progress_from(const Json& j) {
  TrainProgress p;
  p.next_step = j.at("next_step").get<std::int64_t>();
  p.epoch_mean_l3 = j.at("epoch_mean_l3").get<std::vector<double>>();
  p.epoch_mean_loss = j.at("epoch_mean_loss").get<std::vector<double>>();
  p.partial_l3 = j.at("partial_l3").get<double>();
  p.partial_loss = j.at("partial_loss").get<double>();
  p.partial_count = j.at("partial_count").get<std::int64_t>();
  return p;
}

struct RawCheckpoint {
  Json config;
  Json progress;
  std::map<std::string, std::map<std::string, torch::Tensor>> groups;
};

RawCheckpoint read_raw(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + file.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), file);
  r.expect_magic();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + "): " + file.string());
  }
  RawCheckpoint raw;
  try {
    raw.config = Json::parse(r.get_string());
    raw.progress = Json::parse(r.get_string());
  } catch (const nlohmann::json::exception&) {
    r.corrupt();
  }
  const auto groups = r.get<std::uint32_t>();
  for (std::uint32_t g = 0; g < groups; ++g) {
    const auto group = r.get_string();
    const auto count = r.get<std::uint64_t>();
    auto& slot = raw.groups[group];
    for (std::uint64_t i = 0; i < count; ++i) {
      std::string name;
      auto t = r.get_tensor(&name);
      slot.emplace(name, t);
    }
  }
  return raw;
}

void load_parameters(torch::nn::Module& model, const std::map<std::string, torch::Tensor>& params,
                     const fs::path& file) {
  torch::NoGradGuard guard;
  auto named = model.named_parameters(true);
  if (named.size() != params.size()) {
    throw VersionError("checkpoint holds " + std::to_string(params.size()) + " parameters, the model " +
                       std::to_string(named.size()) + ": " + file.string());
  }
  for (auto& item : named) {
    auto it = params.find(item.key());
    if (it == params.end()) throw VersionError("checkpoint lacks parameter " + item.key() + ": " + file.string());
    if (it->second.sizes() != item.value().sizes() || it->second.scalar_type() != item.value().scalar_type()) {
      throw VersionError("parameter " + item.key() + " differs in shape or type: " + file.string());
    }
    item.value().copy_(it->second);
  }
}

void load_optimizer(torch::nn::Module& model, torch::optim::Adam& optimizer,
                    const std::map<std::string, torch::Tensor>& adam, const fs::path& file) {
  auto& state = optimizer.state();
  for (auto& item : model.named_parameters(true)) {
    const auto step = adam.find("step." + item.key());
    if (step == adam.end()) continue;
    const auto m = adam.find("exp_avg." + item.key());
    const auto v = adam.find("exp_avg_sq." + item.key());
    if (m == adam.end() || v == adam.end()) throw VersionError("incomplete optimizer state: " + file.string());
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(step->second.item<std::int64_t>());
    s->exp_avg(m->second.clone());
    s->exp_avg_sq(v->second.clone());
    state[item.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

}  // namespace

void save_checkpoint(const fs::path& file, const RunConfig& config, torch::nn::Module& model,
                     torch::optim::Adam* optimizer, const TrainProgress& progress) {
  std::string buf(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, kCheckpointVersion);
  put_string(buf, config.to_json().dump());
  put_string(buf, progress_json(progress).dump());
  const auto named = model.named_parameters(true);
  put<std::uint32_t>(buf, optimizer != nullptr ? 2 : 1);
  put_string(buf, "params");
  put<std::uint64_t>(buf, named.size());
  for (const auto& item : named) put_tensor(buf, item.key(), item.value());
  if (optimizer != nullptr) {
    std::string body;
    std::uint64_t count = 0;
    auto& state = optimizer->state();
    for (const auto& item : named) {
      auto it = state.find(item.value().unsafeGetTensorImpl());
      if (it == state.end()) continue;
      const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
      put_tensor(body, "step." + item.key(), torch::tensor(s.step(), torch::kInt64));
      put_tensor(body, "exp_avg." + item.key(), s.exp_avg());
      put_tensor(body, "exp_avg_sq." + item.key(), s.exp_avg_sq());
      count += 3;
    }
    put_string(buf, "adam");
    put<std::uint64_t>(buf, count);
    buf += body;
  }
  write_text_atomic(file, buf);
}

LoadedCheckpoint load_checkpoint(const fs::path& file) {
  auto raw = read_raw(file);
  LoadedCheckpoint out;
  try {
    out.config = RunConfig::from_json(raw.config);
    out.progress = progress_from(raw.progress);
  } catch (const ConfigError& e) {
    throw VersionError("checkpoint config is not readable by this build (" + std::string(e.what()) + "): " +
                       file.string());
  } catch (const nlohmann::json::exception& e) {
    throw VersionError("checkpoint progress block is malformed: " + file.string());
  }
  out.model = build_model(out.config);
  load_parameters(*out.model, raw.groups["params"], file);
  out.model->eval();
  out.id = out.config.checkpoint_id();
  return out;
}

TrainProgress restore_checkpoint(const fs::path& file, const RunConfig& config, torch::nn::Module& model,
                                 torch::optim::Adam* optimizer) {
  auto raw = read_raw(file);
  const auto stored = RunConfig::from_json(raw.config);
  if (stored.architecture_id() != config.architecture_id()) {
    throw VersionError("checkpoint architecture " + stored.architecture_id() + " does not match " +
                       config.architecture_id() + ": " + file.string());
  }
  load_parameters(model, raw.groups["params"], file);
  if (optimizer != nullptr) load_optimizer(model, *optimizer, raw.groups["adam"], file);
  return progress_from(raw.progress);
}

fs::path checkpoint_dir(const RunConfig& config) { return config.out / "checkpoints" / config.checkpoint_id(); }

fs::path latest_checkpoint(const RunConfig& config) {
  return checkpoint_dir(config) / ("model-v" + std::to_string(kCheckpointVersion) + ".ckpt");
}

// ---- training ---------------------------------------------------------------

namespace {

constexpr const char* kLogHeader = "step,L1,L2,L3,psnr1,psnr2,w1,w2,snr1,snr2";

std::string log_row(const StepRecord& r) {
  std::ostringstream out;
  out << std::setprecision(10) << r.step << ',' << r.l1 << ',' << r.l2 << ',' << r.l3 << ',' << r.psnr1 << ','
      << r.psnr2 << ',' << r.w1 << ',' << r.w2 << ',' << r.snr1 << ',' << r.snr2;
  return out.str();
}

// keeps the header and every row with step < next_step
void truncate_log(const fs::path& file, std::int64_t next_step) {
  std::string kept = std::string(kLogHeader) + "\n";
  std::ifstream in(file);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) < next_step) kept += line + "\n";
  }
  in.close();
  write_text_atomic(file, kept);
}

void write_epochs(const fs::path& file, const TrainProgress& p) {
  std::ostringstream out;
  out << "epoch,mean_L3,mean_loss\n" << std::setprecision(10);
  for (std::size_t e = 0; e < p.epoch_mean_l3.size(); ++e) {
    out << e << ',' << p.epoch_mean_l3[e] << ',' << p.epoch_mean_loss[e] << '\n';
  }
  write_text_atomic(file, out.str());
}

struct TrainData {
  Dataset user1;
  Dataset user2;
  std::unique_ptr<PairSampler> sampler;
};

void load_split(const RunConfig& config, Split split, std::int64_t batch, std::uint64_t seed, TrainData& data) {
  data.user1 = load_dataset(config.data.user1, split);
  if (config.data.mode == PairingMode::cross_dataset) {
    data.user2 = load_dataset(*config.data.user2, split);
    data.sampler = std::make_unique<PairSampler>(data.user1, data.user2, batch, seed);
  } else {
    data.sampler = std::make_unique<PairSampler>(data.user1, batch, seed);
  }
}

}  // namespace

StepRecord train_step(BroadcastModelImpl& model, torch::optim::Adam& optimizer, const RunConfig& config,
                      const ImagePair& pair, std::int64_t step) {
  const auto seed = config.train.seed;
  const auto b = pair.s1.size();
  const auto csi = sample_training_csi(derive_seed(seed, {seed_tag::kCsi, static_cast<std::uint64_t>(step)}),
                                       config.train.csi);
  const auto link = LinkState::exact(csi, b, derive_seed(seed, {seed_tag::kStepNoise, static_cast<std::uint64_t>(step)}));
  model.train();
  auto recon = model.forward(pair.s1.data, pair.s2.data, link);
  auto l1 = mse(pair.s1.data, recon.s1_hat);
  auto l2 = mse(pair.s2.data, recon.s2_hat);
  auto loss = config.scheme == Scheme::sf ? l3(l1, l2) : combined_baseline_loss(l1, l2, config.train.lambda);

  auto report = LossReport::from_mse(l1.item<double>(), l2.item<double>());
  StepRecord rec;
  rec.step = step;
  rec.l1 = report.l1;
  rec.l2 = report.l2;
  rec.l3 = report.l3;
  rec.psnr1 = report.psnr1;
  rec.psnr2 = report.psnr2;
  rec.w1 = report.w1;
  rec.w2 = report.w2;
  rec.snr1 = csi.snr1_db;
  rec.snr2 = csi.snr2_db;
  rec.loss = loss.item<double>();
  if (!std::isfinite(rec.loss)) return rec;

  optimizer.zero_grad();
  loss.backward();
  optimizer.step();
  return rec;
}

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  if (config.scheme == Scheme::sic) throw ConfigError("the sic scheme is evaluated, not trained");
  const auto dir = checkpoint_dir(config);
  fs::create_directories(dir);
  write_json(dir / "config.json", config.to_json());

  TrainData data;
  load_split(config, Split::train, config.train.batch_size, config.train.seed, data);
  const auto per_epoch = data.sampler->batches_per_epoch();
  auto total = config.train.epochs * per_epoch;
  if (config.train.max_steps > 0) total = std::min(total, config.train.max_steps);

  auto model = build_model(config);
  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(config.train.learning_rate));

  TrainResult result;
  result.checkpoint = latest_checkpoint(config);
  auto& progress = result.progress;
  if (options.resume && fs::exists(result.checkpoint)) {
    progress = restore_checkpoint(result.checkpoint, config, *model, &optimizer);
  }
  if (progress.next_step >= total) {
    result.from_cache = true;
    return result;
  }

  const auto log_file = dir / "train_log.csv";
  if (progress.next_step == 0 || !fs::exists(log_file)) {
    write_text_atomic(log_file, std::string(kLogHeader) + "\n");
  } else {
    truncate_log(log_file, progress.next_step);
  }
  std::ofstream log(log_file, std::ios::app);
  if (!log) throw TrainingAborted("cannot append to " + log_file.string());

  auto checkpoint = [&] {
    log.flush();
    if (!log) throw TrainingAborted("write failed for " + log_file.string());
    try {
      save_checkpoint(result.checkpoint, config, *model, &optimizer, progress);
      write_epochs(dir / "epochs.csv", progress);
    } catch (const Error& e) {
      throw TrainingAborted(std::string("checkpoint write failed: ") + e.what());
    }
  };

  const auto first = progress.next_step;
  for (auto step = first; step < total; ++step) {
    auto pair = data.sampler->pairs(step);
    auto rec = train_step(*model, optimizer, config, pair, step);
    log << log_row(rec) << '\n';
    if (!std::isfinite(rec.loss)) {
      log.flush();
      throw TrainingAborted("non-finite loss at step " + std::to_string(step) + " (logged in " +
                            log_file.string() + ")");
    }
    result.steps.push_back(rec);
    if (options.on_step) options.on_step(rec);
    progress.next_step = step + 1;
    progress.partial_l3 += rec.l3;
    progress.partial_loss += rec.loss;
    progress.partial_count += 1;
    const bool epoch_end = progress.next_step % per_epoch == 0 || progress.next_step == total;
    if (epoch_end) {
      progress.epoch_mean_l3.push_back(progress.partial_l3 / static_cast<double>(progress.partial_count));
      progress.epoch_mean_loss.push_back(progress.partial_loss / static_cast<double>(progress.partial_count));
      progress.partial_l3 = progress.partial_loss = 0;
      progress.partial_count = 0;
    }
    const bool limit = options.step_limit > 0 && progress.next_step - first >= options.step_limit;
    if (epoch_end || limit) checkpoint();
    if (limit) break;
  }
  return result;
}

// ---- evaluation -------------------------------------------------------------

Json to_json(const PerformancePoint& p) {
  return Json{{"scheme", to_string(p.scheme)},
              {"ratio", p.ratio},
              {"snr1_db", p.snr1_db},
              {"snr2_db", p.snr2_db},
              {"psnr1_db", p.psnr1_db},
              {"psnr2_db", p.psnr2_db},
              {"sigma_e", p.sigma_e},
              {"seed", p.seed},
              {"checkpoint_id", p.checkpoint_id},
              {"channel_uses", p.channel_uses},
              {"channel_budget", p.channel_budget},
              {"images", p.images},
              {"fallbacks", p.fallbacks}};
}

namespace {

constexpr const char* kPointHeader =
    "scheme,ratio,snr1_db,snr2_db,psnr1_db,psnr2_db,sigma_e,seed,checkpoint_id,channel_uses,channel_budget,images,"
    "fallbacks";

}  // namespace

void write_points(const std::vector<PerformancePoint>& points, const fs::path& csv, const fs::path& json) {
  std::ostringstream out;
  out << kPointHeader << '\n' << std::setprecision(12);
  Json arr = Json::array();
  for (const auto& p : points) {
    out << to_string(p.scheme) << ',' << p.ratio << ',' << p.snr1_db << ',' << p.snr2_db << ',' << p.psnr1_db << ','
        << p.psnr2_db << ',' << p.sigma_e << ',' << p.seed << ',' << p.checkpoint_id << ',' << p.channel_uses << ','
        << p.channel_budget << ',' << p.images << ',' << p.fallbacks << '\n';
    arr.push_back(to_json(p));
  }
  write_text_atomic(csv, out.str());
  write_json(json, Json{{"points", arr}});
}

std::vector<PerformancePoint> read_points_csv(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw Error("cannot read " + csv.string());
  std::string line;
  std::getline(in, line);
  if (line != kPointHeader) throw ConfigError("not a point file: " + csv.string());
  std::vector<PerformancePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 13) throw ConfigError("malformed point row in " + csv.string());
    PerformancePoint p;
    p.scheme = parse_scheme(f[0]);
    p.ratio = std::stod(f[1]);
    p.snr1_db = std::stod(f[2]);
    p.snr2_db = std::stod(f[3]);
    p.psnr1_db = std::stod(f[4]);
    p.psnr2_db = std::stod(f[5]);
    p.sigma_e = std::stod(f[6]);
    p.seed = std::stoull(f[7]);
    p.checkpoint_id = f[8];
    p.channel_uses = std::stoll(f[9]);
    p.channel_budget = std::stoll(f[10]);
    p.images = std::stoll(f[11]);
    p.fallbacks = std::stoll(f[12]);
    out.push_back(p);
  }
  return out;
}

std::vector<ChannelState> snr_grid(const std::vector<double>& snr1_db, double gap_db) {
  std::vector<ChannelState> out;
  for (double s : snr1_db) out.push_back({s, s - gap_db, 0.0});
  return out;
}

std::vector<ChannelState> gap_grid(double snr1_db, const std::vector<double>& gaps_db) {
  std::vector<ChannelState> out;
  for (double g : gaps_db) out.push_back({snr1_db, snr1_db - g, 0.0});
  return out;
}

void audit_budget(const std::vector<PerformancePoint>& points) {
  for (const auto& p : points) {
    if (p.channel_uses != p.channel_budget) {
      throw ConfigError("budget audit: " + to_string(p.scheme) + " spent " + std::to_string(p.channel_uses) +
                        " channel uses against a budget of " + std::to_string(p.channel_budget));
    }
  }
}

namespace {

torch::Tensor per_image_psnr(const torch::Tensor& s, const torch::Tensor& s_hat) {
  auto m = (s - s_hat).square().mean({1, 2, 3}).to(torch::kFloat64).clamp_min(kMseFloor);
  return 10.0 * torch::log10(1.0 / m);
}

LinkState eval_link(const ChannelState& truth, double sigma_e, std::int64_t batch, std::uint64_t seed,
                    std::int64_t index) {
  auto link = LinkState::exact(truth, batch, derive_seed(seed, {seed_tag::kEval, static_cast<std::uint64_t>(index)}));
  if (sigma_e == 0) return link;
  auto c1 = link.csi1_db.accessor<double, 1>();
  auto c2 = link.csi2_db.accessor<double, 1>();
  for (std::int64_t i = 0; i < batch; ++i) {
    const auto reported = perturb_csi(
        truth, sigma_e,
        derive_seed(seed, {seed_tag::kPerturb, static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(i)}));
    c1[i] = reported.snr1_db;
    c2[i] = reported.snr2_db;
  }
  return link;
}

}  // namespace

std::vector<PerformancePoint> evaluate(BroadcastModelImpl& model, const RunConfig& config,
                                       const std::vector<ChannelState>& states, double sigma_e,
                                       const std::string& checkpoint_id) {
  config.validate();
  if (states.empty()) throw ConfigError("evaluation grid is empty");
  if (sigma_e < 0) throw ConfigError("sigma_e must be >= 0");
  TrainData data;
  load_split(config, Split::test, config.eval.batch_size, derive_seed(config.eval.seed, {seed_tag::kPairs}), data);
  const auto batches = data.sampler->batches_per_epoch();
  torch::NoGradGuard guard;
  model.eval();
  std::vector<PerformancePoint> out;
  for (const auto& state : states) {
    if (!state.degraded()) throw ConfigError("evaluation states must satisfy snr1 > snr2");
    double sum1 = 0, sum2 = 0;
    std::int64_t images = 0, uses = -1;
    for (std::int64_t b = 0; b < batches; ++b) {
      const auto pair = data.sampler->pairs(0, b);
      const auto link = eval_link(state, sigma_e, pair.s1.size(), config.eval.seed, b);
      const auto recon = model.forward(pair.s1.data, pair.s2.data, link);
      sum1 += per_image_psnr(pair.s1.data, recon.s1_hat).sum().item<double>();
      sum2 += per_image_psnr(pair.s2.data, recon.s2_hat).sum().item<double>();
      images += pair.s1.size();
      if (uses >= 0 && uses != recon.channel_uses) throw ConfigError("channel uses changed between batches");
      uses = recon.channel_uses;
    }
    PerformancePoint p;
    p.scheme = config.scheme;
    p.ratio = config.ratio();
    p.snr1_db = state.snr1_db;
    p.snr2_db = state.snr2_db;
    p.psnr1_db = sum1 / static_cast<double>(images);
    p.psnr2_db = sum2 / static_cast<double>(images);
    p.sigma_e = sigma_e;
    p.seed = config.eval.seed;
    p.checkpoint_id = checkpoint_id;
    p.channel_uses = uses;
    p.channel_budget = config.channel_uses();
    p.images = images;
    if (!std::isfinite(p.psnr1_db) || !std::isfinite(p.psnr2_db)) throw Error("non-finite PSNR in evaluation");
    out.push_back(p);
  }
  audit_budget(out);
  return out;
}

std::vector<PerformancePoint> evaluate(const LoadedCheckpoint& checkpoint, const std::vector<ChannelState>& states,
                                       double sigma_e) {
  return evaluate(*checkpoint.model, checkpoint.config, states, sigma_e, checkpoint.id);
}

std::vector<PerformancePoint> evaluate_sic(const RunConfig& config, const std::vector<ChannelState>& states,
                                           const CodecAdapter& adapter) {
  config.validate();
  if (states.empty()) throw ConfigError("evaluation grid is empty");
  TrainData data;
  load_split(config, Split::test, config.eval.batch_size, derive_seed(config.eval.seed, {seed_tag::kPairs}), data);
  const auto batches = data.sampler->batches_per_epoch();
  const auto n = config.channel_uses();
  std::vector<PerformancePoint> out;
  for (const auto& state : states) {
    const auto [b1, b2] = sic_bit_budgets(n, sic_rates(config.zeta, state.snr1_db, state.snr2_db));
    double sum1 = 0, sum2 = 0;
    std::int64_t images = 0, fallbacks = 0;
    for (std::int64_t b = 0; b < batches; ++b) {
      const auto pair = data.sampler->pairs(0, b);
      for (const auto& r : codec_baseline(pair.s1, b1, adapter)) {
        sum1 += r.psnr_db;
        fallbacks += r.fallback;
      }
      for (const auto& r : codec_baseline(pair.s2, b2, adapter)) {
        sum2 += r.psnr_db;
        fallbacks += r.fallback;
      }
      images += pair.s1.size();
    }
    PerformancePoint p;
    p.scheme = Scheme::sic;
    p.ratio = config.zeta;
    p.snr1_db = state.snr1_db;
    p.snr2_db = state.snr2_db;
    p.psnr1_db = sum1 / static_cast<double>(images);
    p.psnr2_db = sum2 / static_cast<double>(images);
    p.seed = config.eval.seed;
    p.checkpoint_id = "codec";
    p.channel_uses = n;
    p.channel_budget = n;
    p.images = images;
    p.fallbacks = fallbacks;
    out.push_back(p);
  }
  audit_budget(out);
  return out;
}

RegionResult region_sweep(const RunConfig& config, const std::vector<double>& ratios, const ChannelState& state,
                          bool allow_train, const CodecAdapter* adapter) {
  if (ratios.size() < 2) throw ConfigError("a region needs at least 2 ratios");
  auto sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  RegionResult region;
  region.scheme = config.scheme;
  region.state = state;
  for (double r : sorted) {
    auto c = config;
    c.set_ratio(r);
    c.validate();
    if (c.scheme == Scheme::sic) {
      const auto fallback = CodecAdapter::from_environment();
      auto points = evaluate_sic(c, {state}, adapter != nullptr ? *adapter : fallback);
      region.points.push_back(points.front());
      continue;
    }
    const auto file = latest_checkpoint(c);
    if (!fs::exists(file) && !allow_train) {
      throw ConfigError("no checkpoint for " + to_string(c.scheme) + " at ratio " + std::to_string(r) + " (" +
                        file.string() + ") and training is not allowed");
    }
    // resumes an unfinished run, returns at once for a finished one
    if (allow_train) train(c);
    region.points.push_back(evaluate(load_checkpoint(file), {state}, 0.0).front());
  }
  return region;
}

nn::ParameterReport count_parameters(const LoadedCheckpoint& checkpoint) {
  return nn::count_parameters(*checkpoint.model);
}

// ---- similarity -------------------------------------------------------------

std::vector<FeatureMatrix> encoded_features(SfSystemImpl& model, const ImageBatch& images, const ChannelState& csi) {
  torch::NoGradGuard guard;
  model.eval();
  const auto b = images.size();
  torch::Tensor v;
  if (model.jscc.csi_aware) {
    v = model.tx_csi(torch::full({b}, csi.snr1_db, torch::kFloat64), torch::full({b}, csi.snr2_db, torch::kFloat64));
  }
  auto x = model.encoder1(images.data, v).to(torch::kFloat32).contiguous();
  std::vector<FeatureMatrix> out;
  out.reserve(static_cast<std::size_t>(b));
  const auto c = x.size(1), h = x.size(2), w = x.size(3);
  for (std::int64_t i = 0; i < b; ++i) out.push_back(FeatureMatrix::from_chw(x[i].data_ptr<float>(), c, h, w));
  return out;
}

SimilarityReport similarity_report(SfSystemImpl& model, const ImageBatch& images, const ChannelState& csi) {
  const auto features = encoded_features(model, images, csi);
  SimilarityReport r;
  r.rv2 = similarity_matrix(features, SimilarityMetric::rv2, images.ids);
  r.pearson = similarity_matrix(features, SimilarityMetric::abs_pearson, images.ids);
  r.median_rv2 = median(r.rv2.off_diagonal());
  r.median_pearson = median(r.pearson.off_diagonal());
  return r;
}

}  // namespace dbcsem
