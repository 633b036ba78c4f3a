#include "prcara/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "prcara/error.hpp"

namespace prcara {

using nlohmann::json;

namespace {

// One JSON object; every key read is remembered so leftovers can be rejected.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <typename T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T value{};
    get(key, value);
    out = value;
  }

  std::optional<Section> sub(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, where(key));
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + where(item.key()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string fading_name(FastFading f) { return f == FastFading::None ? "none" : "rayleigh"; }

FastFading parse_fading(const std::string& name) {
  if (name == "none") return FastFading::None;
  if (name == "rayleigh") return FastFading::RayleighUnitMean;
  throw ConfigError("channel.fast_fading: expected 'none' or 'rayleigh', got '" + name + "'");
}

void read_pathloss(Section s, PathlossModel& model) {
  std::string name = std::holds_alternative<PowerLaw>(model) ? "power_law" : "winner_b1_los";
  s.get("model", name);
  if (name == "winner_b1_los") {
    WinnerB1Los w = std::holds_alternative<WinnerB1Los>(model) ? std::get<WinnerB1Los>(model) : WinnerB1Los{};
    s.get("carrier_ghz", w.carrier_ghz);
    model = w;
  } else if (name == "power_law") {
    PowerLaw p = std::holds_alternative<PowerLaw>(model) ? std::get<PowerLaw>(model) : PowerLaw{};
    s.get("constant", p.constant);
    s.get("exponent", p.exponent);
    model = p;
  } else {
    throw ConfigError("channel.pathloss.model: expected 'winner_b1_los' or 'power_law', got '" + name + "'");
  }
  s.finish();
}

json pathloss_json(const PathlossModel& model) {
  if (const auto* p = std::get_if<PowerLaw>(&model)) {
    return {{"model", "power_law"}, {"constant", p->constant}, {"exponent", p->exponent}};
  }
  return {{"model", "winner_b1_los"}, {"carrier_ghz", std::get<WinnerB1Los>(model).carrier_ghz}};
}

}  // namespace

void RunConfig::validate() const {
  if (schedulers.empty()) throw ConfigError("schedulers: at least one is required");
  if (densities.empty()) throw ConfigError("densities: at least one is required");
  if (seeds.empty()) throw ConfigError("seeds: at least one is required");
  for (double rho : densities) {
    SimParams p = sim;
    p.scenario.density_per_km = rho;
    p.validate();
  }
  if (training.batch_size == 0 || training.epochs < 1 || training.n_samples < 2) {
    throw ConfigError("estimator.training: batch_size, epochs and n_samples must be positive");
  }
  if (!(training.holdout_fraction > 0.0 && training.holdout_fraction < 1.0)) {
    throw ConfigError("estimator.training.holdout_fraction must be in (0, 1)");
  }
  if (!(training.learning_rate > 0.0)) throw ConfigError("estimator.training.learning_rate must be > 0");
  const auto& g = training.generator;
  if (g.max_original < 0 || g.max_hidden < 0 || g.max_exposed < 0 || !(g.original_min_m > 0.0) ||
      g.original_max_m < g.original_min_m || !(g.near_min_m > 0.0) || g.near_max_m < g.near_min_m) {
    throw ConfigError("estimator.training.generator: invalid ranges");
  }
}

RunConfig default_config() {
  RunConfig c;
  c.schedulers.assign(kAllSchedulers.begin(), kAllSchedulers.end());
  for (int rho = 40; rho <= 400; rho += 40) c.densities.push_back(rho);
  for (std::uint64_t s = 1; s <= 100; ++s) c.seeds.push_back(s);
  c.sim.grid.horizon = c.sim.scenario.sim_duration_ms;
  c.training.generator.channel = c.sim.channel;
  c.training.generator.budget = c.sim.budget;
  return c;
}

RunConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = default_config();
  Section root(doc, "");

  if (auto s = root.sub("scenario")) {
    auto& sc = c.sim.scenario;
    s->get("road_length_m", sc.road_length_m);
    s->get("lanes", sc.lanes);
    s->get("lane_width_m", sc.lane_width_m);
    s->get("n_platoons", sc.n_platoons);
    s->get("platoon_size", sc.platoon_size);
    s->get("intra_gap_m", sc.intra_gap_m);
    s->get("sim_duration_ms", sc.sim_duration_ms);
    std::string traffic(to_string(sc.traffic));
    s->get("traffic", traffic);
    sc.traffic = parse_traffic_mode(traffic);
    s->get("speed_min_mps", sc.speed_min_mps);
    s->get("speed_max_mps", sc.speed_max_mps);
    s->get("leaving_index", sc.leaving_index);
    s->get("joining_index", sc.joining_index);
    s->finish();
  }
  root.get("densities", c.densities);

  if (auto s = root.sub("traffic")) {
    auto& t = c.sim.traffic;
    s->get("vue_rri_ms", t.vue_rri_ms);
    s->get("pvue_rri_ms", t.pvue_rri_ms);
    s->get("vue_rc_min", t.vue_rc_min);
    s->get("vue_rc_max", t.vue_rc_max);
    s->get("pvue_rc_min", t.pvue_rc_min);
    s->get("pvue_rc_max", t.pvue_rc_max);
    s->get("cam_bytes", t.cam_bytes);
    s->get("pam_bytes", t.pam_bytes);
    s->get("event_bytes", t.event_bytes);
    s->get("mcs", t.mcs);
    s->get("event_retry_ms", t.event_retry_ms);
    s->get("event_interval_ms", t.event_interval_ms);
    s->finish();
  }
  if (auto s = root.sub("grid")) {
    s->get("num_subchannels", c.sim.grid.num_subchannels);
    s->get("subchannel_width_rb", c.sim.grid.subchannel_width_rb);
    s->finish();
  }
  if (auto s = root.sub("channel")) {
    if (auto p = s->sub("pathloss")) read_pathloss(*p, c.sim.channel.pathloss);
    s->get("shadowing_sigma_db", c.sim.channel.shadowing_sigma_db);
    std::string fading = fading_name(c.sim.channel.fast_fading);
    s->get("fast_fading", fading);
    c.sim.channel.fast_fading = parse_fading(fading);
    s->finish();
  }
  if (auto s = root.sub("link_budget")) {
    auto& b = c.sim.budget;
    s->get("tx_power_dbm", b.tx_power_dbm);
    s->get("tx_gain_dbi", b.tx_gain_dbi);
    s->get("rx_gain_dbi", b.rx_gain_dbi);
    s->get("noise_figure_db", b.noise_figure_db);
    s->get("bandwidth_hz", b.bandwidth_hz);
    s->finish();
  }
  if (auto s = root.sub("decode")) {
    s->get("gamma0_pam_db", c.sim.decode.gamma0_pam_db);
    s->get("gamma0_cam_db", c.sim.decode.gamma0_cam_db);
    s->get("gamma_sci_db", c.sim.decode.gamma_sci_db);
    s->get("ideal_channel", c.sim.ideal_channel);
    s->finish();
  }
  if (auto s = root.sub("sensing")) {
    s->get("rsrp_init_dbm", c.sim.csr.init_threshold_dbm);
    s->get("step_db", c.sim.csr.step_db);
    s->get("ceiling_dbm", c.sim.csr.ceiling_dbm);
    s->finish();
  }
  if (const json* list = root.raw("schedulers")) {
    if (!list->is_array()) throw ConfigError("schedulers: expected an array of names");
    c.schedulers.clear();
    for (const auto& item : *list) {
      if (!item.is_string()) throw ConfigError("schedulers: expected an array of names");
      c.schedulers.push_back(parse_scheduler(item.get<std::string>()));
    }
  }
  if (auto s = root.sub("estimator")) {
    std::optional<std::string> weights;
    s->get_optional("weights", weights);
    if (weights) c.weights = *weights;
    if (auto t = s->sub("training")) {
      auto& tr = c.training;
      t->get("n_samples", tr.n_samples);
      t->get("batch_size", tr.batch_size);
      t->get("epochs", tr.epochs);
      t->get("holdout_fraction", tr.holdout_fraction);
      t->get("learning_rate", tr.learning_rate);
      t->get("shuffle_labels", tr.shuffle_labels);
      if (auto g = t->sub("generator")) {
        auto& gen = tr.generator;
        g->get("max_original", gen.max_original);
        g->get("original_min_m", gen.original_min_m);
        g->get("original_max_m", gen.original_max_m);
        g->get("max_hidden", gen.max_hidden);
        g->get("max_exposed", gen.max_exposed);
        g->get("near_min_m", gen.near_min_m);
        g->get("near_max_m", gen.near_max_m);
        g->get("degenerate", gen.degenerate);
        g->finish();
      }
      t->finish();
    }
    s->finish();
  }
  root.get("seeds", c.seeds);
  root.get("warmup_ms", c.sim.warmup_ms);
  root.get("min_distance_m", c.sim.min_distance_m);
  std::string out = c.output_dir.string();
  root.get("output_dir", out);
  c.output_dir = out;
  std::optional<std::string> trace;
  root.get_optional("trace_path", trace);
  if (trace) c.trace_path = *trace;
  root.get("write_records", c.write_records);
  root.finish();

  c.sim.grid.horizon = c.sim.scenario.sim_duration_ms;
  c.training.generator.channel = c.sim.channel;
  c.training.generator.budget = c.sim.budget;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_to_json(const RunConfig& c) {
  const auto& sc = c.sim.scenario;
  const auto& t = c.sim.traffic;
  const auto& b = c.sim.budget;
  const auto& tr = c.training;
  const auto& g = tr.generator;
  json schedulers = json::array();
  for (auto k : c.schedulers) schedulers.push_back(std::string(to_string(k)));
  json doc = {
      {"scenario",
       {{"road_length_m", sc.road_length_m},
        {"lanes", sc.lanes},
        {"lane_width_m", sc.lane_width_m},
        {"n_platoons", sc.n_platoons},
        {"platoon_size", sc.platoon_size},
        {"intra_gap_m", sc.intra_gap_m},
        {"sim_duration_ms", sc.sim_duration_ms},
        {"traffic", std::string(to_string(sc.traffic))},
        {"speed_min_mps", sc.speed_min_mps},
        {"speed_max_mps", sc.speed_max_mps},
        {"leaving_index", sc.leaving_index},
        {"joining_index", sc.joining_index}}},
      {"densities", c.densities},
      {"traffic",
       {{"vue_rri_ms", t.vue_rri_ms},
        {"pvue_rri_ms", t.pvue_rri_ms},
        {"vue_rc_min", t.vue_rc_min},
        {"vue_rc_max", t.vue_rc_max},
        {"pvue_rc_min", t.pvue_rc_min},
        {"pvue_rc_max", t.pvue_rc_max},
        {"cam_bytes", t.cam_bytes},
        {"pam_bytes", t.pam_bytes},
        {"event_bytes", t.event_bytes},
        {"mcs", t.mcs},
        {"event_retry_ms", t.event_retry_ms},
        {"event_interval_ms", t.event_interval_ms}}},
      {"grid",
       {{"num_subchannels", c.sim.grid.num_subchannels}, {"subchannel_width_rb", c.sim.grid.subchannel_width_rb}}},
      {"channel",
       {{"pathloss", pathloss_json(c.sim.channel.pathloss)},
        {"shadowing_sigma_db", c.sim.channel.shadowing_sigma_db},
        {"fast_fading", fading_name(c.sim.channel.fast_fading)}}},
      {"link_budget",
       {{"tx_power_dbm", b.tx_power_dbm},
        {"tx_gain_dbi", b.tx_gain_dbi},
        {"rx_gain_dbi", b.rx_gain_dbi},
        {"noise_figure_db", b.noise_figure_db},
        {"bandwidth_hz", b.bandwidth_hz}}},
      {"decode",
       {{"gamma0_pam_db", c.sim.decode.gamma0_pam_db},
        {"gamma0_cam_db", c.sim.decode.gamma0_cam_db},
        {"gamma_sci_db", c.sim.decode.gamma_sci_db},
        {"ideal_channel", c.sim.ideal_channel}}},
      {"sensing",
       {{"rsrp_init_dbm", c.sim.csr.init_threshold_dbm},
        {"step_db", c.sim.csr.step_db},
        {"ceiling_dbm", c.sim.csr.ceiling_dbm}}},
      {"schedulers", schedulers},
      {"estimator",
       {{"weights", c.weights ? json(c.weights->string()) : json(nullptr)},
        {"training",
         {{"n_samples", tr.n_samples},
          {"batch_size", tr.batch_size},
          {"epochs", tr.epochs},
          {"holdout_fraction", tr.holdout_fraction},
          {"learning_rate", tr.learning_rate},
          {"shuffle_labels", tr.shuffle_labels},
          {"generator",
           {{"max_original", g.max_original},
            {"original_min_m", g.original_min_m},
            {"original_max_m", g.original_max_m},
            {"max_hidden", g.max_hidden},
            {"max_exposed", g.max_exposed},
            {"near_min_m", g.near_min_m},
            {"near_max_m", g.near_max_m},
            {"degenerate", g.degenerate}}}}}}},
      {"seeds", c.seeds},
      {"warmup_ms", c.sim.warmup_ms},
      {"min_distance_m", c.sim.min_distance_m},
      {"output_dir", c.output_dir.string()},
      {"trace_path", c.trace_path ? json(c.trace_path->string()) : json(nullptr)},
      {"write_records", c.write_records},
  };
  return doc.dump(2);
}

std::uint64_t config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace prcara
