#include "pmg/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace pmg {

using nlohmann::json;

namespace {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::smooth_relu: return "smooth-relu";
  }
  return "tanh";
}

Activation activation_from(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "smooth-relu") return Activation::smooth_relu;
  throw ConfigError("unknown activation '" + s + "'");
}

InputScaling scaling_from(const std::string& s) {
  if (s == "none") return InputScaling::none;
  if (s == "unit-noise") return InputScaling::unit_noise;
  throw ConfigError("unknown input scaling '" + s + "'");
}

G2Point g2_point_from(const std::string& s) {
  if (s == "tweedie") return G2Point::tweedie;
  if (s == "after-data-step") return G2Point::after_data_step;
  throw ConfigError("unknown G2 point '" + s + "'");
}

LossReduction reduction_from(const std::string& s) {
  if (s == "sum") return LossReduction::sum;
  if (s == "mean") return LossReduction::mean;
  throw ConfigError("unknown loss reduction '" + s + "'");
}

HeadKind head_kind_from(const std::string& s) {
  if (s == "ridge") return HeadKind::ridge;
  if (s == "mlp") return HeadKind::mlp;
  throw ConfigError("unknown head kind '" + s + "'");
}

// Reads known keys of one object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), name_ + "." + key);
  }

  template <class E, class F>
  void get_enum(const char* key, E& out, F from) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    out = from(s);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + name_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void check(const RunConfig& c) {
  require(c.schedule.steps >= 1, "config: schedule.T must be >= 1");
  require(c.score.train_samples >= 1, "config: score.train_samples must be >= 1");
  const auto& s = c.pipeline.sampler;
  require(s.steps >= 1 && s.t_low >= 0 && s.t_high <= c.schedule.steps && s.t_high - s.t_low >= s.steps,
          "config: sampler needs 1 <= steps <= t_high - t_low and t_high <= T");
  const auto& p = c.pipeline.psi;
  if (p.kind == ExtractorKind::scorenet)
    require(p.steps >= 1 && p.t_low >= 0 && p.t_high <= c.schedule.steps && p.t_high - p.t_low >= p.steps,
            "config: psi needs 1 <= steps <= t_high - t_low and t_high <= T");
  require(c.pipeline.chunk >= 1, "config: chunk must be >= 1");
  require(!c.pipeline.protocol.lambda_grid.empty(), "config: protocol.lambda_grid is empty");
  for (double l : c.pipeline.protocol.lambda_grid) require(l > 0.0, "config: lambda values must be > 0");
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.score.arch.state_dim = c.testbed.latent_dim;
  c.score.arch.activation = Activation::smooth_relu;
  c.score.train.epochs = 250;
  c.score.train.t_high = 500;
  c.score.train.seed = 5;
  c.score.arch.seed = 1;
  return c;
}

RunConfig parse_run_config(const json& j) {
  RunConfig c = default_run_config();
  try {
    Section root(j, "config");
    root.get("seed", c.seed);
    std::string output = c.output.string();
    root.get("output", output);
    c.output = output;
    root.get("chunk", c.pipeline.chunk);
    if (auto s = root.sub("schedule")) {
      s->get("T", c.schedule.steps);
      s->get("beta_min", c.schedule.beta_min);
      s->get("beta_max", c.schedule.beta_max);
      s->finish();
    }
    if (auto s = root.sub("testbed")) {
      s->get("data_dim", c.testbed.data_dim);
      s->get("latent_dim", c.testbed.latent_dim);
      s->get("intrinsic_dim", c.testbed.intrinsic_dim);
      s->get("seed", c.testbed.seed);
      s->get("data_offset_norm", c.testbed.data_offset_norm);
      s->get("latent_mean", c.testbed.latent_mean);
      s->get("latent_cov", c.testbed.latent_cov);
      s->finish();
    }
    if (auto s = root.sub("score")) {
      std::string ckpt = c.score.checkpoint.string();
      s->get("checkpoint", ckpt);
      c.score.checkpoint = ckpt;
      s->get("train_samples", c.score.train_samples);
      if (auto a = s->sub("arch")) {
        a->get("hidden", c.score.arch.hidden);
        a->get_enum("activation", c.score.arch.activation, activation_from);
        a->get("frequencies", c.score.arch.frequencies);
        a->get("tap_layers", c.score.arch.tap_layers);
        a->get_enum("scaling", c.score.arch.scaling, scaling_from);
        a->get("seed", c.score.arch.seed);
        a->finish();
      }
      if (auto t = s->sub("train")) {
        t->get("epochs", c.score.train.epochs);
        t->get("batch_size", c.score.train.batch_size);
        t->get("learning_rate", c.score.train.learning_rate);
        t->get("t_low", c.score.train.t_low);
        t->get("t_high", c.score.train.t_high);
        t->get("seed", c.score.train.seed);
        t->get("cosine_decay", c.score.train.cosine_decay);
        t->finish();
      }
      s->finish();
    }
    if (auto s = root.sub("sampler")) {
      auto& r = c.pipeline.sampler;
      s->get("steps", r.steps);
      s->get("t_low", r.t_low);
      s->get("t_high", r.t_high);
      s->get("eta", r.eta);
      s->get("seed", r.seed);
      s->get("renoise", r.renoise);
      s->finish();
    }
    if (auto s = root.sub("guidance")) {
      auto& g = c.pipeline.guidance;
      s->get("zeta1", g.zeta1);
      s->get("zeta2", g.zeta2);
      s->get_enum("point", g.point, g2_point_from);
      s->finish();
    }
    if (auto s = root.sub("psi")) {
      auto& p = c.pipeline.psi;
      s->get_enum("kind", p.kind, extractor_kind_from_string);
      s->get("seed", p.seed);
      s->get("normalize_blocks", p.normalize_blocks);
      s->get_enum("reduction", p.reduction, reduction_from);
      s->get("steps", p.steps);
      s->get("t_low", p.t_low);
      s->get("t_high", p.t_high);
      s->get("features", p.features);
      s->finish();
    }
    if (auto s = root.sub("head")) {
      auto& h = c.pipeline.head;
      s->get_enum("kind", h.kind, head_kind_from);
      s->get("lambda", h.lambda);
      if (auto m = s->sub("mlp")) {
        m->get("hidden", h.mlp.hidden);
        m->get("epochs", h.mlp.epochs);
        m->get("learning_rate", h.mlp.learning_rate);
        m->get("weight_decay", h.mlp.weight_decay);
        m->get("seed", h.mlp.seed);
        m->finish();
      }
      s->finish();
    }
    if (auto s = root.sub("bench")) {
      auto& b = c.bench;
      s->get("contents", b.contents);
      std::vector<std::string> families;
      s->get("families", families);
      if (j.at("bench").contains("families")) {
        b.families.clear();
        for (const auto& f : families) b.families.push_back(distortion_from_string(f));
      }
      s->get("levels", b.levels);
      s->get("items_per_family", b.items_per_family);
      s->get("control", b.control);
      s->get("target_energy", b.target_energy);
      s->get("blur_width", b.blur_width);
      s->get("seed", b.seed);
      s->finish();
    }
    if (auto s = root.sub("protocol")) {
      auto& p = c.pipeline.protocol;
      s->get("train_fraction", p.train_fraction);
      s->get("val_fraction", p.val_fraction);
      s->get("repeats", p.repeats);
      s->get("seed", p.seed);
      s->get("lambda_grid", p.lambda_grid);
      s->get("relative_lambda", p.relative_lambda);
      s->get_enum("pooling", p.pooling, pooling_from_string);
      s->finish();
    }
    root.finish();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  c.score.arch.state_dim = c.testbed.latent_dim;
  check(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output"] = c.output.string();
  j["chunk"] = c.pipeline.chunk;
  j["schedule"] = {{"T", c.schedule.steps}, {"beta_min", c.schedule.beta_min}, {"beta_max", c.schedule.beta_max}};
  j["testbed"] = {{"data_dim", c.testbed.data_dim},
                  {"latent_dim", c.testbed.latent_dim},
                  {"intrinsic_dim", c.testbed.intrinsic_dim},
                  {"seed", c.testbed.seed},
                  {"data_offset_norm", c.testbed.data_offset_norm},
                  {"latent_mean", c.testbed.latent_mean},
                  {"latent_cov", c.testbed.latent_cov}};
  const auto& a = c.score.arch;
  const auto& t = c.score.train;
  j["score"] = {{"checkpoint", c.score.checkpoint.string()},
                {"train_samples", c.score.train_samples},
                {"arch",
                 {{"hidden", a.hidden},
                  {"activation", activation_name(a.activation)},
                  {"frequencies", a.frequencies},
                  {"tap_layers", a.tap_layers},
                  {"scaling", a.scaling == InputScaling::none ? "none" : "unit-noise"},
                  {"seed", a.seed}}},
                {"train",
                 {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"learning_rate", t.learning_rate},
                  {"t_low", t.t_low},
                  {"t_high", t.t_high},
                  {"seed", t.seed},
                  {"cosine_decay", t.cosine_decay}}}};
  const auto& r = c.pipeline.sampler;
  j["sampler"] = {{"steps", r.steps}, {"t_low", r.t_low}, {"t_high", r.t_high},
                  {"eta", r.eta},     {"seed", r.seed},   {"renoise", r.renoise}};
  const auto& g = c.pipeline.guidance;
  j["guidance"] = {{"zeta1", g.zeta1},
                   {"zeta2", g.zeta2},
                   {"point", g.point == G2Point::tweedie ? "tweedie" : "after-data-step"}};
  const auto& p = c.pipeline.psi;
  j["psi"] = {{"kind", to_string(p.kind)},
              {"seed", p.seed},
              {"normalize_blocks", p.normalize_blocks},
              {"reduction", p.reduction == LossReduction::sum ? "sum" : "mean"},
              {"steps", p.steps},          {"t_low", p.t_low},   {"t_high", p.t_high},
              {"features", p.features}};
  const auto& h = c.pipeline.head;
  j["head"] = {{"kind", h.kind == HeadKind::ridge ? "ridge" : "mlp"},
               {"lambda", h.lambda},
               {"mlp",
                {{"hidden", h.mlp.hidden},
                 {"epochs", h.mlp.epochs},
                 {"learning_rate", h.mlp.learning_rate},
                 {"weight_decay", h.mlp.weight_decay},
                 {"seed", h.mlp.seed}}}};
  std::vector<std::string> families;
  for (DistortionKind f : c.bench.families) families.emplace_back(to_string(f));
  j["bench"] = {{"contents", c.bench.contents},
                {"families", families},
                {"levels", c.bench.levels},
                {"items_per_family", c.bench.items_per_family},
                {"control", c.bench.control},
                {"target_energy", c.bench.target_energy},
                {"blur_width", c.bench.blur_width},
                {"seed", c.bench.seed}};
  const auto& pr = c.pipeline.protocol;
  j["protocol"] = {{"train_fraction", pr.train_fraction},
                   {"val_fraction", pr.val_fraction},
                   {"repeats", pr.repeats},
                   {"seed", pr.seed},
                   {"lambda_grid", pr.lambda_grid},
                   {"relative_lambda", pr.relative_lambda},
                   {"pooling", to_string(pr.pooling)}};
  return j;
}

void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.pipeline.sampler.seed = mix_seed(seed, 1);
  c.pipeline.psi.seed = mix_seed(seed, 2);
  c.pipeline.protocol.seed = mix_seed(seed, 3);
  c.pipeline.head.mlp.seed = mix_seed(seed, 4);
  c.bench.seed = mix_seed(seed, 5);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace pmg
