#pragma once

#include "irsloc/harness.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>

namespace irsloc {

using json = nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Field lists shared by the reader and the writer.

template <class F>
void visit_fields(SceneConfig& s, F& f) {
  f("M", s.M);
  f("nx", s.nx);
  f("ny", s.ny);
  f("dx_m", s.dx_m);
  f("dy_m", s.dy_m);
  f("lambda_m", s.lambda_m);
  f("bs_position", s.bs_position);
  f("irs_center", s.irs_center);
  f("target_range_m", s.target_range_m);
  f("target_theta_deg", s.target_theta_deg);
  f("target_phi_deg", s.target_phi_deg);
  f("c0_db", s.c0_db);
  f("d0_m", s.d0_m);
  f("alpha0", s.alpha0);
  f("sigma2_dbm", s.sigma2_dbm);
  f("sigma2_si_db", s.sigma2_si_db);
  f("sigma2_ref_db", s.sigma2_ref_db);
  f("target_rcs_amplitude", s.target_rcs_amplitude);
  f("target_round_trip_loss", s.target_round_trip_loss);
  f("noiseless", s.noiseless);
  f("rng_seed", s.rng_seed);
}

template <class F>
void visit_fields(RefineOptions& r, F& f) {
  f("max_sweeps", r.max_sweeps);
  f("tol", r.tol);
}

template <class F>
void visit_fields(DinkelbachOptions& d, F& f) {
  f("tol", d.tol);
  f("max_iters", d.max_iters);
  f("exact_cap", d.exact_cap);
}

template <class F>
void visit_fields(WaveoptOptions& w, F& f) {
  f("epsilon", w.epsilon);
  f("c_pen", w.c_pen);
  f("inner_tol", w.inner_tol);
  f("rho0_scale", w.rho0_scale);
  f("max_outer", w.max_outer);
  f("max_inner", w.max_inner);
}

template <class F>
void visit_fields(ChanestSweep& c, F& f) {
  f("snr_db", c.snr_db);
  f("M", c.M);
  f("ny", c.ny);
  f("Mt", c.Mt);
  f("C", c.C);
  f("overhead_ref_Mt", c.overhead_ref_Mt);
  f("convergence_trace", c.convergence_trace);
}

template <class F>
void visit_fields(LocalizationParams& l, F& f) {
  f("I", l.I);
  f("theta_lo_deg", l.theta_lo_deg);
  f("theta_hi_deg", l.theta_hi_deg);
  f("phi_deg", l.phi_deg);
  f("L", l.L);
  f("threshold", l.threshold);
  f("max_cycles", l.max_cycles);
  f("success_cycle", l.success_cycle);
  f("pilot_snr_db", l.pilot_snr_db);
  f("pb_w", l.pb_w);
  f("arms", l.arms);
  f("M", l.M);
  f("ny", l.ny);
}

template <class F>
void visit_fields(BqpDemo& b, F& f) {
  f("N", b.N);
}

template <class F>
void visit_fields(ExperimentSpec& s, F& f) {
  f("name", s.name);
  f("trials", s.trials);
  f("master_seed", s.master_seed);
  f.object("scene", s.scene);
  f.object("refine", s.refine);
  f.object("dinkelbach", s.dinkelbach);
  f.object("waveopt", s.waveopt);
  f.object("chanest", s.chanest);
  f.object("localization", s.localization);
  f.object("bqp", s.bqp);
}

namespace detail {

class JsonReader {
 public:
  JsonReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: " + path_ + " must be a JSON object");
  }

  template <class T>
  void operator()(const char* key, T& value) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      value = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for " + path_ + key + ": " + e.what());
    }
  }

  template <class T>
  void object(const char* key, T& value) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    JsonReader sub(j_.at(key), path_ + key + ".");
    visit_fields(value, sub);
    sub.finish();
  }

  void allow(const char* key) { known_.insert(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!known_.count(it.key())) throw ConfigError("config: unknown key " + path_ + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

class JsonWriter {
 public:
  template <class T>
  void operator()(const char* key, T& value) {
    out[key] = value;
  }
  template <class T>
  void object(const char* key, T& value) {
    JsonWriter sub;
    visit_fields(value, sub);
    out[key] = sub.out;
  }
  json out = json::object();
};

}  // namespace detail

/// Parses a spec document. With `desk_scale` set, the optional "desk_scale"
/// object is merged over the document first (JSON merge patch).
inline ExperimentSpec spec_from_json(json doc, bool desk_scale = false) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  if (doc.contains("desk_scale")) {
    json patch = doc.at("desk_scale");
    doc.erase("desk_scale");
    if (!patch.is_object()) throw ConfigError("config: desk_scale must be an object");
    if (desk_scale) doc.merge_patch(patch);
  } else if (desk_scale) {
    throw ConfigError("config: --desk-scale requested but the config has no desk_scale section");
  }
  ExperimentSpec spec;
  detail::JsonReader r(doc, "");
  visit_fields(spec, r);
  r.finish();
  spec.validate();
  return spec;
}

inline ExperimentSpec load_spec(const std::string& path, bool desk_scale = false) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return spec_from_json(std::move(doc), desk_scale);
}

inline json spec_to_json(ExperimentSpec spec) {
  detail::JsonWriter w;
  visit_fields(spec, w);
  return w.out;
}

inline void write_manifest(const std::string& path, const std::string& subcommand, const ExperimentSpec& spec,
                           const std::vector<std::string>& outputs) {
  json m;
  m["schema"] = "irsloc.manifest.v1";
  m["subcommand"] = subcommand;
  m["master_seed"] = spec.master_seed;
  m["spec"] = spec_to_json(spec);
  m["outputs"] = outputs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("harness: cannot open " + path + " for writing");
  out << m.dump(2) << "\n";
}

}  // namespace irsloc
