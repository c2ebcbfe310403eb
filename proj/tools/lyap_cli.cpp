// lyap: config-driven experiment runner.
//
//   lyap <task> [--config file.json] [--seed N] [--out DIR] [shorthand flags]
//
// Shorthand flags override the matching keys of the config file.

#include "lyap/experiment.hpp"
#include "lyap/format.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using nlohmann::json;

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : lyap::split_csv(s)) out.push_back(lyap::parse_double(part));
  return out;
}

json model_arg(const std::string& s) {
  if (!s.empty() && s.front() == '{') return json::parse(s);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical Lyapunov toolkit: simulate, probe, verify, construct, reproduce"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "lyap_out", model, notion, target, signal_json, candidate, kind;
  std::optional<std::uint64_t> seed;
  std::optional<int> n, budget, k_max;
  std::optional<double> epsilon, t, d, step;
  std::string x0;
  bool adaptive = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--model", model, "zoo name or JSON descriptor");
    sub->add_option("--budget", budget, "sample budget");
    sub->add_option("--step", step, "integration step");
  };

  auto* sim = app.add_subcommand("simulate", "integrate one trajectory");
  common(sim);
  sim->add_option("--t", t, "horizon");
  sim->add_option("--x0", x0, "initial state, comma separated");
  sim->add_option("--d", d, "constant disturbance");
  sim->add_option("--signal", signal_json, "disturbance signal as JSON");
  sim->add_flag("--adaptive", adaptive, "state-adaptive steps");

  auto* probe = app.add_subcommand("probe", "classify a stability notion by sampling");
  common(probe);
  probe->add_option("--notion", notion, "US, UGAS, UAS, weak_attractive, uniform_weak_attractive, UGATT, RFC, REP");

  auto* verify = app.add_subcommand("verify", "check Lyapunov decay along sampled states");
  common(verify);
  verify->add_option("--candidate", candidate, "blowup, l2_block or quadratic");

  auto* construct = app.add_subcommand("construct", "build a converse Lyapunov function");
  common(construct);
  construct->add_option("--kind", kind, "integral or max");
  construct->add_option("--k-max", k_max, "number of terms");

  auto* repro = app.add_subcommand("reproduce", "rerun a worked example");
  common(repro);
  repro->add_option("target", target, "ex26, ex213, ex61, ex62 or switched");
  repro->add_option("--n", n, "number of blocks (ex62)");
  repro->add_option("--epsilon", epsilon, "shift epsilon (ex62)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : lyap::kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string task = sub->get_name();
  try {
    json cfg = json::object();
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      cfg = json::parse(is);
      if (!cfg.is_object()) throw lyap::ConfigError("config file must hold a JSON object");
      if (cfg.contains("task") && cfg["task"] != task)
        throw lyap::ConfigError("config task \"" + cfg["task"].get<std::string>() +
                                "\" does not match the subcommand \"" + task + "\"");
    }
    cfg["task"] = task;
    if (seed) cfg["seed"] = *seed;
    if (!model.empty()) cfg["model"] = model_arg(model);
    json& s = cfg[task];
    if (s.is_null()) s = json::object();
    if (budget) s["budget"] = *budget;
    if (step) s["step"] = *step;
    if (t) s["t"] = *t;
    if (!x0.empty()) s["x0"] = parse_list(x0);
    if (d) s["d"] = *d;
    if (!signal_json.empty()) s["signal"] = json::parse(signal_json);
    if (adaptive) s["adaptive"] = true;
    if (!notion.empty()) s["notion"] = notion;
    if (!candidate.empty()) s["candidate"] = candidate;
    if (!kind.empty()) s["kind"] = kind;
    if (k_max) s["k_max"] = *k_max;
    if (!target.empty()) s["target"] = target;
    if (n) s["n"] = *n;
    if (epsilon) s["epsilon"] = *epsilon;

    lyap::ExperimentResult r = lyap::run_experiment(cfg, out_dir);
    std::cout << r.summary;
    return r.status;
  } catch (const lyap::ConfigError& e) {
    std::cerr << "lyap: config error: " << e.what() << "\n";
    return lyap::kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "lyap: bad JSON: " << e.what() << "\n";
    return lyap::kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "lyap: invalid argument: " << e.what() << "\n";
    return lyap::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "lyap: error: " << e.what() << "\n";
    return 1;
  }
}
