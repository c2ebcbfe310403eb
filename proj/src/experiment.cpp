#include "lyap/experiment.hpp"

#include "lyap/comparison.hpp"
#include "lyap/converse.hpp"
#include "lyap/format.hpp"
#include "lyap/lyapunov.hpp"
#include "lyap/models.hpp"
#include "lyap/probes.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lyap {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

json jnum(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

json vec_json(const Vec& x) {
  json a = json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back(jnum(x(i)));
  return a;
}

// --- config access -----------------------------------------------------------

const json& section(const json& cfg, const char* name) {
  static const json empty = json::object();
  if (!cfg.contains(name)) return empty;
  const json& s = cfg.at(name);
  if (!s.is_object()) throw ConfigError(std::string("\"") + name + "\" must be an object");
  return s;
}

double get_num(const json& s, const char* key, double def) {
  if (!s.contains(key)) return def;
  const json& v = s.at(key);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      return parse_double(v.get<std::string>());
    } catch (const std::exception&) {
    }
  }
  throw ConfigError(std::string("\"") + key + "\" must be a number");
}

double req_num(const json& s, const char* key) {
  if (!s.contains(key)) throw ConfigError(std::string("missing \"") + key + "\"");
  return get_num(s, key, 0.0);
}

int get_int(const json& s, const char* key, int def) {
  if (!s.contains(key)) return def;
  const json& v = s.at(key);
  if (!v.is_number_integer()) throw ConfigError(std::string("\"") + key + "\" must be an integer");
  return v.get<int>();
}

bool get_bool(const json& s, const char* key, bool def) {
  if (!s.contains(key)) return def;
  if (!s.at(key).is_boolean()) throw ConfigError(std::string("\"") + key + "\" must be a boolean");
  return s.at(key).get<bool>();
}

std::string get_str(const json& s, const char* key, const std::string& def) {
  if (!s.contains(key)) return def;
  if (!s.at(key).is_string()) throw ConfigError(std::string("\"") + key + "\" must be a string");
  return s.at(key).get<std::string>();
}

std::vector<double> get_grid(const json& s, const char* key, std::vector<double> def) {
  if (!s.contains(key)) return def;
  const json& v = s.at(key);
  if (!v.is_array() || v.empty())
    throw ConfigError(std::string("\"") + key + "\" must be a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(std::string("\"") + key + "\" must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

Vec get_vec(const json& v, const char* what) {
  if (!v.is_array() || v.empty()) throw ConfigError(std::string(what) + " must be a non-empty array");
  Vec x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(std::string(what) + " must hold numbers");
    x(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  }
  return x;
}

std::uint64_t seed_of(const json& cfg) {
  if (!cfg.contains("seed")) return 1;
  const json& s = cfg.at("seed");
  if (!s.is_number_integer()) throw ConfigError("\"seed\" must be an integer");
  if (s.is_number_unsigned()) return s.get<std::uint64_t>();
  auto v = s.get<std::int64_t>();
  if (v < 0) throw ConfigError("\"seed\" must be non-negative");
  return static_cast<std::uint64_t>(v);
}

TabulatedMonotone get_kinf(const json& s, const char* key) {
  TabulatedMonotone id{{0.0, 1.0}, {0.0, 1.0}, ComparisonClass::Kinf};
  if (!s.contains(key)) return id;
  const json& v = s.at(key);
  if (v.is_string() && v.get<std::string>() == "identity") return id;
  if (!v.is_object()) throw ConfigError(std::string("\"") + key + "\" must be \"identity\" or a table");
  try {
    return TabulatedMonotone(get_grid(v, "grid", {}), get_grid(v, "values", {}), ComparisonClass::Kinf);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("\"") + key + "\": " + e.what());
  }
}

// alpha(s) = c s^p.
ScalarFn get_alpha(const json& s) {
  if (!s.contains("alpha")) return [](double r) { return r; };
  const json& a = s.at("alpha");
  if (!a.is_object()) throw ConfigError("\"alpha\" must be an object {\"c\", \"p\"}");
  double c = get_num(a, "c", 1.0), p = get_num(a, "p", 1.0);
  if (!(c > 0) || !(p > 0)) throw ConfigError("\"alpha\" needs c > 0 and p > 0");
  return [c, p](double r) { return c * std::pow(r, p); };
}

// --- output ------------------------------------------------------------------

class Writer {
 public:
  explicit Writer(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& body) {
    std::ofstream os(dir_ / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
    os << body;
    files.push_back(name);
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  std::vector<std::string> files;

 private:
  std::filesystem::path dir_;
};

struct Context {
  json cfg;
  std::uint64_t seed = 1;
  Writer* out = nullptr;
  std::ostringstream summary;
  json result = json::object();
  int status = kExitOk;
};

std::string replay_name(const std::string& stem, std::size_t i) {
  return stem + "_witness_" + std::to_string(i) + ".json";
}

void write_witnesses(Context& ctx, const std::string& stem, const ProbeReport& rep,
                     const SystemModel& model, double step) {
  for (std::size_t i = 0; i < rep.witnesses.size(); ++i) {
    json replay = rep.witnesses[i].replay_config(model, step);
    replay["seed"] = ctx.seed;
    ctx.out->write_json(replay_name(stem, i), replay);
  }
}

// --- simulate ----------------------------------------------------------------

DisturbanceSignal signal_from(const json& s) {
  if (s.contains("signal")) {
    try {
      return DisturbanceSignal::from_json(s.at("signal"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("bad \"signal\": ") + e.what());
    }
  }
  return DisturbanceSignal(get_num(s, "d", 0.0));
}

void run_simulate(Context& ctx, const SystemModel& model) {
  const json& s = section(ctx.cfg, "simulate");
  if (!s.contains("x0")) throw ConfigError("simulate needs \"x0\"");
  Vec x0 = get_vec(s.at("x0"), "\"x0\"");
  if (x0.size() != model.dim()) throw ConfigError("\"x0\" has the wrong dimension");
  double t = req_num(s, "t");
  if (!(t >= 0) || !std::isfinite(t)) throw ConfigError("\"t\" must be finite and >= 0");
  DisturbanceSignal d = signal_from(s);
  FlowOptions fo;
  fo.step = get_num(s, "step", 1e-3);
  fo.explosion_threshold = get_num(s, "threshold", 1e12);
  fo.rate_from_state = get_bool(s, "adaptive", false);
  if (!(fo.step > 0)) throw ConfigError("\"step\" must be positive");

  Trajectory tr = flow(model, t, x0, d, fo);
  std::ostringstream csv;
  write_trajectory_csv(csv, tr);
  ctx.out->write("trajectory.csv", csv.str());

  double min_norm = INFINITY;
  for (const auto& z : tr.states) min_norm = std::min(min_norm, model.norm(z));
  json r = {{"final_time", tr.final_time()},
            {"final_state", vec_json(tr.final_state())},
            {"max_norm", jnum(tr.max_norm)},
            {"min_norm", jnum(min_norm)},
            {"rows", tr.times.size()},
            {"escaped", tr.escaped.has_value()}};
  if (tr.escaped)
    r["escape_bracket"] = {tr.escaped->last_finite, tr.escaped->first_exceed};
  ctx.summary << "simulate " << model.name() << " to t=" << fmt17(t) << ": "
              << (tr.escaped ? "escaped" : "finite") << ", max norm " << fmt17(tr.max_norm) << "\n";

  if (ctx.cfg.contains("expect")) {
    const json& e = ctx.cfg.at("expect");
    std::string check = get_str(e, "check", "");
    bool met;
    if (check == "escape") {
      met = tr.escaped.has_value();
    } else if (check == "max_norm_at_least") {
      met = tr.escaped || tr.max_norm >= req_num(e, "level") * (1.0 - 1e-9);
    } else if (check == "stays_above") {
      met = min_norm >= req_num(e, "level") * (1.0 - 1e-9);
    } else {
      throw ConfigError("expect.check must be escape, max_norm_at_least or stays_above");
    }
    r["expect"] = e;
    r["expect_met"] = met;
    ctx.summary << "expectation " << check << ": " << (met ? "reproduced" : "NOT reproduced") << "\n";
    ctx.status = met ? kExitOk : kExitMismatch;
  } else if (tr.escaped) {
    ctx.status = kExitRefuted;
    json w = {{"task", "simulate"},
              {"model", model.descriptor()},
              {"seed", ctx.seed},
              {"simulate", s},
              {"expect", {{"check", "escape"}, {"reason", "escape (norm above the explosion threshold)"}}}};
    ctx.out->write_json("simulate_witness_0.json", w);
  }
  ctx.out->write_json("result.json", r);
  ctx.result = r;
}

// --- probe -------------------------------------------------------------------

SampleOptions sampling_from(const json& s, std::uint64_t seed) {
  SampleOptions so;
  so.step = get_num(s, "step", 1e-3);
  so.seed = seed;
  so.pieces = get_int(s, "pieces", 8);
  if (!(so.step > 0) || so.pieces < 1) throw ConfigError("bad step or pieces");
  return so;
}

struct ProbeGrids {
  std::vector<double> c{0.5, 1.0, 2.0}, tau{0.5, 1.0, 2.0};
  std::vector<double> h{0.1, 1.0}, eps_rep{0.1, 0.5};
  std::vector<double> r{0.5, 1.0, 2.0}, eps{0.1, 0.5};
};

ProbeReport probe_once(const SystemModel& model, Notion n, int budget, const json& s,
                       std::uint64_t seed) {
  ProbeGrids g;
  SampleOptions so = sampling_from(s, seed);
  std::vector<double> mags = get_grid(s, "magnitudes", {});
  if (!s.contains("magnitudes")) mags.clear();
  if (n == Notion::RFC) {
    RfcOptions o;
    o.sampling = so;
    o.magnitudes = mags;
    o.threshold = get_num(s, "threshold", o.threshold);
    return classify_rfc(model, get_grid(s, "c_grid", g.c), get_grid(s, "tau_grid", g.tau), budget, o);
  }
  if (n == Notion::REP) {
    if (!model.equilibrium_at_zero()) throw ConfigError("REP needs 0 to be an equilibrium");
    RepOptions o;
    o.sampling = so;
    o.magnitudes = mags;
    return classify_rep(model, get_grid(s, "h_grid", g.h), get_grid(s, "eps_grid", g.eps_rep), budget, o);
  }
  AttractivityOptions o;
  o.sampling = so;
  o.magnitudes = mags;
  o.horizon = get_num(s, "horizon", o.horizon);
  if (!(o.horizon > 0)) throw ConfigError("\"horizon\" must be positive");
  return probe_attractivity(model, n, get_grid(s, "r_grid", g.r), get_grid(s, "eps_grid", g.eps), budget, o);
}

void run_probe(Context& ctx, const SystemModel& model) {
  const json& s = section(ctx.cfg, "probe");
  Notion n;
  try {
    n = parse_notion(get_str(s, "notion", ""));
  } catch (const std::exception&) {
    throw ConfigError("probe needs \"notion\" (US, UGAS, UAS, weak_attractive, "
                      "uniform_weak_attractive, UGATT, RFC, REP)");
  }
  int budget = get_int(s, "budget", 16);
  if (budget < 1) throw ConfigError("\"budget\" must be >= 1");
  ProbeReport rep = probe_once(model, n, budget, s, ctx.seed);
  json rj = rep.to_json();
  rj["model"] = model.descriptor();
  rj["budget"] = budget;
  ctx.out->write_json("report.json", rj);
  std::ostringstream csv;
  csv << "notion,verdict,witnesses,skipped_stiff\n"
      << to_string(rep.notion) << "," << to_string(rep.verdict) << "," << rep.witnesses.size() << ","
      << rep.tables.value("skipped_stiff", 0L) << "\n";
  ctx.out->write("verdict.csv", csv.str());
  write_witnesses(ctx, "probe", rep, model, get_num(s, "step", 1e-3));
  ctx.summary << "probe " << to_string(n) << " on " << model.name() << " at budget " << budget << ": "
              << to_string(rep.verdict) << " (" << rep.note << ")\n";
  ctx.result = rj;
  if (rep.verdict == Verdict::Refuted) ctx.status = kExitRefuted;
}

// --- verify ------------------------------------------------------------------

LyapunovCandidate candidate_from(const json& s, const SystemModel& model) {
  std::string kind = get_str(s, "candidate", "");
  const json& desc = model.descriptor();
  std::string mk = desc.value("model", "");
  if (kind == "blowup") {
    if (mk != "blowup") throw ConfigError("candidate \"blowup\" needs the blowup model");
    return build_blowup_example(desc.value("c", 3.0)).v;
  }
  if (kind == "l2_block") {
    if (mk != "l2_block") throw ConfigError("candidate \"l2_block\" needs the l2_block model");
    return build_l2_block_model(desc.value("n", 20), desc.value("epsilon", 0.0)).candidate();
  }
  if (kind == "quadratic") {
    if (!s.contains("P")) throw ConfigError("candidate \"quadratic\" needs \"P\"");
    Mat p = matrix_from_json(s.at("P"));
    if (p.rows() != model.dim() || p.cols() != model.dim()) throw ConfigError("\"P\" has the wrong size");
    LyapunovCandidate v;
    v.name = "quadratic";
    v.eval = [p](const Vec& x) { return x.dot(p * x); };
    return v;
  }
  throw ConfigError("verify needs \"candidate\": blowup, l2_block or quadratic");
}

void run_verify(Context& ctx, const SystemModel& model) {
  const json& s = section(ctx.cfg, "verify");
  LyapunovCandidate v = candidate_from(s, model);
  ScalarFn alpha = get_alpha(s);
  int budget = get_int(s, "budget", 64);
  double r_min = get_num(s, "r_min", 0.1), r_max = get_num(s, "r_max", 2.0);
  double magnitude = get_num(s, "magnitude", 1.0);
  if (budget < 1 || !(r_min >= 0) || !(r_max >= r_min)) throw ConfigError("bad verify sampling");
  // Every state is paired with every signal: the corner constants of D plus
  // `signals` random ones.
  std::vector<Vec> states;
  SignalSampler sampler{model.disturbances(), magnitude, 1.0, get_int(s, "pieces", 8), ctx.seed, 72};
  const int n_signals = get_int(s, "signals", 0);
  if (n_signals < 0) throw ConfigError("\"signals\" must be >= 0");
  std::vector<DisturbanceSignal> signals =
      sampler.take(sampler.head_size() + static_cast<std::size_t>(n_signals));
  for (int i = 0; i < budget; ++i) {
    auto rng = stream_rng(ctx.seed, 71, static_cast<std::uint64_t>(i));
    Vec dir = sample_direction(rng, model.dim());
    states.push_back((r_min + (r_max - r_min) * uniform01(rng)) * dir);
  }
  DecayOptions o;
  o.tol = get_num(s, "tol", 1e-3);
  o.dini.step = get_num(s, "step", 1e-3);
  o.dini.terms = get_int(s, "dini_terms", o.dini.terms);
  if (o.dini.terms < 1) throw ConfigError("\"dini_terms\" must be >= 1");
  DecayReport rep = verify_decay(v, alpha, model, states, signals, o);
  std::ostringstream csv;
  rep.write_csv(csv);
  ctx.out->write("decay.csv", csv.str());
  json rj = rep.to_json();
  rj["candidate"] = v.name;
  ctx.out->write_json("report.json", rj);
  ctx.summary << "verify " << v.name << " on " << model.name() << " (" << budget
              << " samples, |x| in [" << fmt17(r_min) << ", " << fmt17(r_max)
              << "]): " << to_string(rep.verdict) << ", worst margin " << fmt17(rep.worst_margin) << "\n";
  if (rep.verdict == DecayVerdict::Violated) {
    ctx.status = kExitRefuted;
    const auto& w = rep.samples[*rep.witness];
    ctx.out->write_json("verify_witness_0.json", {{"x", vec_json(w.x)},
                                                  {"signal", w.d.to_json()},
                                                  {"dini", jnum(w.dini)},
                                                  {"bound", jnum(w.bound)},
                                                  {"margin", jnum(w.margin)}});
  }
  ctx.result = rj;
}

// --- construct ---------------------------------------------------------------

void run_construct(Context& ctx, const SystemModel& model) {
  const json& s = section(ctx.cfg, "construct");
  ConverseConfig cc;
  cc.rho = get_kinf(s, "rho");
  cc.alpha1 = get_kinf(s, "alpha1");
  cc.k_max = get_int(s, "k_max", cc.k_max);
  cc.R = get_num(s, "R", cc.R);
  cc.eta = get_num(s, "eta", cc.eta);
  cc.disturbance_budget = get_int(s, "budget", cc.disturbance_budget);
  cc.quadrature_step = get_num(s, "quadrature_step", cc.quadrature_step);
  cc.magnitude = get_num(s, "magnitude", cc.magnitude);
  cc.pieces = get_int(s, "pieces", cc.pieces);
  cc.seed = ctx.seed;
  try {
    cc.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  std::string kind_s = get_str(s, "kind", "integral");
  ConverseTerm::Kind kind;
  if (kind_s == "integral")
    kind = ConverseTerm::Kind::Integral;
  else if (kind_s == "max")
    kind = ConverseTerm::Kind::Max;
  else
    throw ConfigError("\"kind\" must be integral or max");

  std::vector<Vec> states;
  if (s.contains("states")) {
    if (!s.at("states").is_array()) throw ConfigError("\"states\" must be an array of states");
    for (const auto& x : s.at("states")) {
      Vec v = get_vec(x, "a state");
      if (v.size() != model.dim()) throw ConfigError("a state has the wrong dimension");
      states.push_back(v);
    }
  } else {
    for (double r : get_grid(s, "radii", {0.0, 0.25, 0.5, 1.0, 2.0, 4.0})) {
      Vec v = Vec::Zero(model.dim());
      v(0) = r;
      states.push_back(v);
    }
  }
  try {
    ConstructedLyapunov w = assemble_w(model, cc, kind, get_int(s, "lipschitz_budget", 16));
    std::ostringstream csv;
    w.write_table_csv(csv, states);
    ctx.out->write("w_table.csv", csv.str());
    json meta = w.metadata();
    meta["config"] = cc.to_json();
    ctx.out->write_json("w_metadata.json", meta);
    ctx.summary << "construct " << kind_s << "-type W on " << model.name() << " with k_max=" << cc.k_max
                << ", " << states.size() << " states tabulated\n";
    ctx.result = meta;
  } catch (const EscapeError& e) {
    ctx.status = kExitRefuted;
    ctx.out->write_json("construct_witness_0.json",
                        {{"x", vec_json(e.x)}, {"signal", e.d.to_json()}, {"t", jnum(e.t)}, {"reason", e.what()}});
    ctx.summary << "construct aborted: " << e.what() << "\n";
  }
}

// --- reproduce ---------------------------------------------------------------

bool holds(Verdict v) { return v == Verdict::Consistent; }
bool fails(Verdict v) { return v == Verdict::Refuted; }

const char* yn(bool b) { return b ? "yes" : "no"; }

void reproduce_ex26(Context& ctx, const json& s) {
  int budget = get_int(s, "budget", 16);
  std::ostringstream csv;
  csv << "variant,fc,rfc,rep,expected,match\n";
  bool all = true;
  json rows = json::array();
  struct Expect {
    ScalarVariant v;
    int fc, rfc, rep;  // 1 holds, 0 fails, -1 unconstrained
    const char* text;
  };
  const Expect table[] = {{ScalarVariant::I, -1, 1, 0, "RFC and not REP"},
                          {ScalarVariant::II, 1, 0, 0, "FC and not RFC and not REP"},
                          {ScalarVariant::III, -1, 0, 1, "REP and not RFC"},
                          {ScalarVariant::IV, -1, 1, 1, "REP and RFC"}};
  for (const auto& e : table) {
    SystemModel m = build_scalar_example(e.v);
    ProbeReport rfc = probe_once(m, Notion::RFC, budget, s, ctx.seed);
    ProbeReport rep = probe_once(m, Notion::REP, budget, s, ctx.seed);
    // Forward completeness is refuted only by an escape among the RFC samples.
    bool escaped = std::any_of(rfc.witnesses.begin(), rfc.witnesses.end(),
                               [](const Witness& w) { return std::isinf(w.value); });
    Verdict fc = escaped ? Verdict::Refuted : Verdict::Consistent;
    auto ok = [](int want, Verdict v) { return want < 0 || (want == 1 ? holds(v) : fails(v)); };
    bool match = ok(e.fc, fc) && ok(e.rfc, rfc.verdict) && ok(e.rep, rep.verdict);
    all = all && match;
    std::string tag(to_string(e.v));
    csv << tag << "," << to_string(fc) << "," << to_string(rfc.verdict) << "," << to_string(rep.verdict)
        << "," << e.text << "," << yn(match) << "\n";
    write_witnesses(ctx, "ex26_" + tag + "_rfc", rfc, m, get_num(s, "step", 1e-3));
    write_witnesses(ctx, "ex26_" + tag + "_rep", rep, m, get_num(s, "step", 1e-3));
    rows.push_back({{"variant", tag}, {"fc", to_string(fc)}, {"rfc", rfc.to_json()},
                    {"rep", rep.to_json()}, {"match", match}});
    ctx.summary << "ex26 (" << tag << "): FC " << to_string(fc) << ", RFC " << to_string(rfc.verdict)
                << ", REP " << to_string(rep.verdict) << "; expected " << e.text << ": "
                << (match ? "match" : "MISMATCH") << "\n";
  }
  ctx.out->write("ex26_table.csv", csv.str());
  ctx.result = {{"rows", rows}, {"match", all}};
  if (!all) ctx.status = kExitMismatch;
}

void reproduce_ex213(Context& ctx, const json& s) {
  int budget = get_int(s, "budget", 16);
  SystemModel m = build_ugatt_example();
  ProbeReport ugatt = probe_once(m, Notion::UGATT, budget, s, ctx.seed);
  ProbeReport rep = probe_once(m, Notion::REP, budget, s, ctx.seed);
  ProbeReport ugas = probe_once(m, Notion::UGAS, budget, s, ctx.seed);
  write_witnesses(ctx, "ex213_rep", rep, m, get_num(s, "step", 1e-3));
  write_witnesses(ctx, "ex213_ugas", ugas, m, get_num(s, "step", 1e-3));

  // The y-subsystem reaches 0 in finite time, uniformly in y0. Compare the
  // simulated time to reach |y| <= y_low with the closed form.
  const double y_low = 1e-3, t_inf = ugatt_y_hitting_time(INFINITY);
  std::ostringstream csv;
  csv << "y0,t_closed_form,t_simulated,abs_error\n";
  bool times_ok = true;
  for (double y0 : get_grid(s, "y0", {0.5, 1.0, 2.0, 10.0, 1e3, 1e6})) {
    Vec x(2);
    x << 0.0, y0;
    FlowOptions fo;
    fo.step = 1e-4;
    fo.rate_from_state = true;
    fo.stop_norm = INFINITY;
    Trajectory tr = flow(m, t_inf + 1.0, x, DisturbanceSignal(0.0), fo);
    double hit = INFINITY;
    for (std::size_t k = 0; k < tr.states.size(); ++k)
      if (std::abs(tr.states[k](1)) <= y_low) {
        if (k == 0) {
          hit = 0.0;
        } else {
          // Linear interpolation of the crossing.
          double a = std::abs(tr.states[k - 1](1)), b = std::abs(tr.states[k](1));
          hit = tr.times[k - 1] + (tr.times[k] - tr.times[k - 1]) * (a - y_low) / (a - b);
        }
        break;
      }
    double closed = ugatt_y_hitting_time(y0) - ugatt_y_hitting_time(y_low);
    double err = std::abs(hit - closed);
    times_ok = times_ok && err <= 1e-3 && hit <= t_inf;
    csv << fmt17(y0) << "," << fmt17(closed) << "," << fmt17(hit) << "," << fmt17(err) << "\n";
  }
  ctx.out->write("ex213_hitting_times.csv", csv.str());
  std::ostringstream vcsv;
  vcsv << "notion,verdict,note\n";
  for (const auto* r : {&ugatt, &rep, &ugas}) vcsv << to_string(r->notion) << "," << to_string(r->verdict) << "," << r->note << "\n";
  ctx.out->write("ex213_verdicts.csv", vcsv.str());

  bool match = fails(rep.verdict) && !fails(ugatt.verdict) && fails(ugas.verdict) && times_ok;
  ctx.summary << "ex213: UGATT " << to_string(ugatt.verdict) << " (" << ugatt.note << "), REP "
              << to_string(rep.verdict) << ", UGAS " << to_string(ugas.verdict)
              << "; y reaches 0 by t*(inf) = " << fmt17(t_inf) << " for every y0: " << yn(times_ok)
              << "; expected UGATT not refuted, REP and UGAS refuted: " << (match ? "match" : "MISMATCH")
              << "\n";
  ctx.result = {{"ugatt", ugatt.to_json()}, {"rep", rep.to_json()}, {"ugas", ugas.to_json()},
                {"t_inf", t_inf}, {"hitting_times_ok", times_ok}, {"match", match}};
  if (!match) ctx.status = kExitMismatch;
}

void reproduce_ex61(Context& ctx, const json& s) {
  BlowupExample ex = build_blowup_example(get_num(s, "c", 3.0));
  const SystemModel& m = ex.model;
  FlowOptions fo;
  fo.step = get_num(s, "step", 1e-3);
  fo.record = false;
  const double grid_step = get_num(s, "grid_step", 0.25);
  if (!(grid_step > 0)) throw ConfigError("\"grid_step\" must be positive");

  std::ostringstream esc;
  esc << "z1,z2,escaped,last_finite,first_exceed\n";
  int n_esc = 0, n_grid = 0;
  const int n1 = static_cast<int>(std::lround(3.0 / grid_step)), n2 = static_cast<int>(std::lround(4.0 / grid_step));
  for (int i = 0; i <= n1; ++i)
    for (int j = 0; j <= n2; ++j) {
      Vec z(2);
      z << -4.0 + i * grid_step, -2.0 + j * grid_step;
      Trajectory tr = flow(m, get_num(s, "escape_horizon", 20.0), z, DisturbanceSignal(0.0), fo);
      ++n_grid;
      if (tr.escaped) ++n_esc;
      esc << fmt17(z(0)) << "," << fmt17(z(1)) << "," << (tr.escaped ? 1 : 0) << ","
          << fmt17(tr.escaped ? tr.escaped->last_finite : NAN) << ","
          << fmt17(tr.escaped ? tr.escaped->first_exceed : NAN) << "\n";
    }
  ctx.out->write("ex61_escape.csv", esc.str());

  std::ostringstream conv;
  conv << "z1,z2,final_norm,converged\n";
  int n_conv = 0, n_start = 0;
  const int m2 = static_cast<int>(std::lround(2.0 / grid_step));
  for (int i = 0; i <= m2; ++i)
    for (int j = -m2; j <= m2; ++j) {
      Vec z(2);
      z << i * grid_step, j * grid_step;
      if (z.norm() > 2.0 + 1e-12) continue;
      Trajectory tr = flow(m, get_num(s, "converge_horizon", 60.0), z, DisturbanceSignal(0.0), fo);
      ++n_start;
      double fin = tr.escaped ? INFINITY : m.norm(tr.final_state());
      bool ok = fin < 0.01;
      if (ok) ++n_conv;
      conv << fmt17(z(0)) << "," << fmt17(z(1)) << "," << fmt17(fin) << "," << (ok ? 1 : 0) << "\n";
    }
  ctx.out->write("ex61_converge.csv", conv.str());

  // Decay V' <= -|z| on |z| >= 2.
  int budget = get_int(s, "budget", 200);
  std::vector<Vec> states;
  const std::vector<DisturbanceSignal> sig{DisturbanceSignal(0.0)};
  const double r_max = get_num(s, "decay_r_max", 10.0);
  for (int i = 0; i < budget; ++i) {
    auto rng = stream_rng(ctx.seed, 73, static_cast<std::uint64_t>(i));
    Vec dir = sample_direction(rng, 2);
    states.push_back((2.0 + (r_max - 2.0) * uniform01(rng)) * dir);
  }
  // h ~ 1e3 far out; more Dini terms keep the forward-difference bias small.
  DecayOptions dopt;
  dopt.dini.terms = get_int(s, "dini_terms", 16);
  DecayReport dec = verify_decay(ex.v, [](double r) { return r; }, m, states, sig, dopt);
  std::ostringstream dcsv;
  dec.write_csv(dcsv);
  ctx.out->write("ex61_decay.csv", dcsv.str());

  bool match = n_esc == n_grid && n_conv == n_start && dec.verdict == DecayVerdict::NoViolationFound;
  ctx.summary << "ex61: " << n_esc << "/" << n_grid << " grid starts with z1 <= -1 escape; " << n_conv << "/"
              << n_start << " starts with z1 >= 0, |z| <= 2 converge below 0.01; decay V' <= -|z| on |z| >= 2: "
              << to_string(dec.verdict) << " (worst margin " << fmt17(dec.worst_margin) << "): "
              << (match ? "match" : "MISMATCH") << "\n";
  ctx.result = {{"escaped", n_esc}, {"grid", n_grid}, {"converged", n_conv}, {"starts", n_start},
                {"decay", dec.to_json()}, {"match", match}};
  if (!match) ctx.status = kExitMismatch;
}

void reproduce_ex62(Context& ctx, const json& s) {
  int n = get_int(s, "n", 40);
  double eps = get_num(s, "epsilon", 0.0);
  if (n < 1 || !(eps >= 0.0 && eps < 0.5)) throw ConfigError("ex62 needs n >= 1 and epsilon in [0, 0.5)");
  BlockOperatorModel bm = build_l2_block_model(n, eps);
  SystemModel m = bm.system();
  const double rate = 1.0 - 2.0 * eps;

  std::ostringstream lam;
  lam << "i,lambda_min,decay_certified\n";
  bool decreasing = true;
  const int check_to = std::min(n, 30);
  for (int i = 0; i < n; ++i) {
    lam << i + 1 << "," << fmt17(bm.lambda_min[i]) << "," << (bm.decay_certified[i] ? 1 : 0) << "\n";
    if (i > 0 && i < check_to && !(bm.lambda_min[i] < bm.lambda_min[i - 1])) decreasing = false;
  }
  ctx.out->write("ex62_lambda_min.csv", lam.str());

  // V(phi(t, x)) <= e^{-(1 - 2 eps) t} V(x) on random states.
  std::ostringstream dec;
  dec << "sample,t,v0,vt,ratio\n";
  double worst = 0.0;
  const int samples = get_int(s, "samples", 100);
  const std::vector<double> times{0.5, 1.0, 2.0};
  FlowOptions fo;
  fo.record = false;
  for (int k = 0; k < samples; ++k) {
    auto rng = stream_rng(ctx.seed, 74, static_cast<std::uint64_t>(k));
    Vec x = sample_ball(rng, bm.dim, 1.0);
    double v0 = bm.v(x);
    for (double t : times) {
      double vt = bm.v(flow(m, t, x, DisturbanceSignal(0.0), fo).final_state());
      double ratio = vt / (std::exp(-rate * t) * v0);
      worst = std::max(worst, ratio);
      dec << k << "," << fmt17(t) << "," << fmt17(v0) << "," << fmt17(vt) << "," << fmt17(ratio) << "\n";
    }
  }
  ctx.out->write("ex62_decay.csv", dec.str());

  // Non-coercivity.
  std::vector<Vec> witnesses;
  for (int i = 1; i <= n; ++i) witnesses.push_back(bm.witness_direction(i));
  std::vector<double> radii{0.25, 0.5, 1.0, 2.0};
  CoercivityProfile prof = coercivity_profile(
      bm.candidate(), [](const Vec& x) { return x.norm(); }, bm.dim, radii, 64, witnesses, 0.05, ctx.seed);
  std::ostringstream coe;
  coe << "radius,inf,sup\n";
  double inf_at_1 = INFINITY;
  for (const auto& row : prof.rows) {
    coe << fmt17(row.radius) << "," << fmt17(row.inf) << "," << fmt17(row.sup) << "\n";
    if (row.radius == 1.0) inf_at_1 = row.inf;
  }
  ctx.out->write("ex62_coercivity.csv", coe.str());

  bool growth_ok = true;
  json growth = nullptr;
  if (eps > 0.0) {
    const double horizon = 10.0;
    Vec x = bm.growth_direction(horizon);
    FlowOptions rec;
    rec.step = 0.5;
    Trajectory tr = flow(m, horizon, x, DisturbanceSignal(0.0), rec);
    std::ostringstream g;
    g << "t,norm,v,v_bound\n";
    double v0 = bm.v(x);
    bool v_ok = true;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      double t = tr.times[k], vt = bm.v(tr.states[k]), vb = std::exp(-rate * t) * v0;
      v_ok = v_ok && vt <= vb * 1.001;
      g << fmt17(t) << "," << fmt17(tr.states[k].norm()) << "," << fmt17(vt) << "," << fmt17(vb) << "\n";
    }
    ctx.out->write("ex62_instability.csv", g.str());
    double factor = tr.final_state().norm() / x.norm();
    growth_ok = factor >= std::exp(0.8 * eps * horizon) && v_ok;
    growth = {{"factor", factor}, {"required", std::exp(0.8 * eps * horizon)}, {"v_decay_ok", v_ok}};
    ctx.summary << "ex62 instability: |phi(10, x)| / |x| = " << fmt17(factor) << " (required "
                << fmt17(std::exp(0.8 * eps * horizon)) << "), V decay on the same trajectory: " << yn(v_ok)
                << "\n";
  }

  bool match = decreasing && worst <= 1.001 && inf_at_1 < 0.05 && growth_ok;
  ctx.summary << "ex62 (n=" << n << ", epsilon=" << fmt17(eps) << "): lambda_min strictly decreasing for i <= "
              << check_to << ": " << yn(decreasing) << "; worst V(phi(t,x)) / (e^{-" << fmt17(rate)
              << " t} V(x)) = " << fmt17(worst) << "; inf V on the unit sphere = " << fmt17(inf_at_1) << ": "
              << (match ? "match" : "MISMATCH") << "\n";
  ctx.result = {{"n", n}, {"epsilon", eps}, {"lambda_decreasing", decreasing}, {"worst_decay_ratio", worst},
                {"inf_at_radius_1", jnum(inf_at_1)}, {"growth", growth}, {"match", match}};
  if (!match) ctx.status = kExitMismatch;
}

void reproduce_switched(Context& ctx, const json& s) {
  Mat h0(2, 2), h1(2, 2), u0(2, 2), u1(2, 2);
  h0 << -1.0, 1.0, -1.0, -1.0;
  h1 << -2.0, 0.5, -0.5, -1.0;
  u0 << -0.1, 1.0, -4.0, -0.1;
  u1 << -0.1, 4.0, -1.0, -0.1;
  const double horizon = get_num(s, "horizon", 10.0);
  const int budget = get_int(s, "budget", 32);
  SwitchedBoundOptions o;
  o.seed = ctx.seed;
  o.period = get_num(s, "period", 1.0);
  o.dwells.push_back(M_PI / 4.0);
  std::ostringstream bounds;
  bounds << "system,M,omega,M_tilde,period,chain_ratio\n";
  bool match = true;
  json res = json::object();
  for (const auto& [name, a, b, stable] :
       {std::tuple{"hurwitz_pair", h0, h1, true}, std::tuple{"unstable_pair", u0, u1, false}}) {
    SwitchedBound sb = estimate_switched_bound(build_switched_linear({a, b}), horizon, budget, o);
    std::ostringstream g;
    g << "t,growth,envelope\n";
    bool env_ok = true;
    for (std::size_t k = 0; k < sb.times.size(); ++k) {
      double env = sb.m * std::exp(sb.omega * sb.times[k]);
      env_ok = env_ok && sb.growth[k] <= env * (1.0 + 1e-9);
      g << fmt17(sb.times[k]) << "," << fmt17(sb.growth[k]) << "," << fmt17(env) << "\n";
    }
    ctx.out->write(std::string("switched_growth_") + name + ".csv", g.str());
    bounds << name << "," << fmt17(sb.m) << "," << fmt17(sb.omega) << "," << fmt17(sb.m_tilde) << ","
           << fmt17(sb.period) << "," << fmt17(sb.chain_ratio) << "\n";
    bool sign_ok = stable ? sb.omega < 0.0 : sb.omega > 0.0;
    bool ok = env_ok && sign_ok && sb.chain_ratio <= 1.0 + 1e-9;
    match = match && ok;
    res[name] = sb.to_json();
    ctx.summary << "switched " << name << ": M = " << fmt17(sb.m) << ", omega = " << fmt17(sb.omega)
                << ", chain ratio " << fmt17(sb.chain_ratio) << " (<= 1 expected), omega "
                << (stable ? "< 0" : "> 0") << " expected: " << (ok ? "match" : "MISMATCH") << "\n";
  }
  ctx.out->write("switched_bounds.csv", bounds.str());
  res["match"] = match;
  ctx.result = res;
  if (!match) ctx.status = kExitMismatch;
}

void run_reproduce(Context& ctx) {
  const json& s = section(ctx.cfg, "reproduce");
  std::string target = get_str(s, "target", "");
  if (target == "ex26")
    reproduce_ex26(ctx, s);
  else if (target == "ex213")
    reproduce_ex213(ctx, s);
  else if (target == "ex61")
    reproduce_ex61(ctx, s);
  else if (target == "ex62")
    reproduce_ex62(ctx, s);
  else if (target == "switched")
    reproduce_switched(ctx, s);
  else
    throw ConfigError("reproduce needs \"target\": ex26, ex213, ex61, ex62 or switched");
}

std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

SystemModel resolve_model(const nlohmann::json& spec) {
  if (spec.is_string()) {
    std::string name = spec.get<std::string>();
    for (auto& z : model_zoo())
      if (z.name == name) return z.model;
    throw ConfigError("unknown model name: " + name);
  }
  if (spec.is_object()) {
    try {
      return build_model_from_descriptor(spec);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("bad model descriptor: ") + e.what());
    }
  }
  throw ConfigError("\"model\" must be a zoo name or a descriptor object");
}

void validate_config(const nlohmann::json& cfg) {
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  std::string task = get_str(cfg, "task", "");
  static const char* tasks[] = {"simulate", "probe", "verify", "construct", "reproduce"};
  if (std::find_if(std::begin(tasks), std::end(tasks), [&](const char* t) { return task == t; }) ==
      std::end(tasks))
    throw ConfigError("\"task\" must be one of simulate, probe, verify, construct, reproduce");
  seed_of(cfg);
  if (task != "reproduce" && !cfg.contains("model")) throw ConfigError("task " + task + " needs \"model\"");
  section(cfg, task.c_str());
}

ExperimentResult run_experiment(const nlohmann::json& config, const std::filesystem::path& out_dir) {
  validate_config(config);
  Context ctx;
  ctx.cfg = config;
  ctx.seed = seed_of(config);
  ctx.cfg["seed"] = ctx.seed;
  const std::string task = config.at("task").get<std::string>();
  std::optional<SystemModel> model;
  if (config.contains("model")) model = resolve_model(config.at("model"));

  Writer out(out_dir);
  ctx.out = &out;
  out.write_json("config.json", ctx.cfg);
  auto t0 = std::chrono::steady_clock::now();
  if (task == "simulate")
    run_simulate(ctx, *model);
  else if (task == "probe")
    run_probe(ctx, *model);
  else if (task == "verify")
    run_verify(ctx, *model);
  else if (task == "construct")
    run_construct(ctx, *model);
  else
    run_reproduce(ctx);
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out.write("summary.txt", ctx.summary.str());
  json manifest = {{"tool", "lyap"},
                   {"version", kVersion},
                   {"task", task},
                   {"seed", ctx.seed},
                   {"config", ctx.cfg},
                   {"created_utc", utc_timestamp()},
                   {"elapsed_seconds", elapsed},
                   {"exit_status", ctx.status},
                   {"files", out.files}};
  if (model) manifest["model"] = model->descriptor();
  out.write_json("manifest.json", manifest);

  ExperimentResult r;
  r.status = ctx.status;
  r.files = out.files;
  r.summary = ctx.summary.str();
  r.result = std::move(ctx.result);
  return r;
}

}  // namespace lyap
